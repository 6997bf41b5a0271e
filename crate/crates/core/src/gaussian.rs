//! Reference values for linear models `Y = β₀ + βᵀX` with `X ~ N(μ, Σ)`.
//!
//! Conditioning on a block `X_A` leaves `Y | X_A` Gaussian with a mean that is
//! an affine function of `X_A`. Writing that mean as `m + s·Z` with `Z`
//! standard normal and `σ̃²` for the conditional variance, the conditional
//! failure probability is `h(Z) = Φ((m + sZ - t) / σ̃)` and every target index
//! reduces to a one-dimensional Gaussian expectation of a function of `h`.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::Serialize;

use crate::effects::{EffectsVector, EstimatorKind};
use crate::error::{Error, Result};
use crate::mvn::{submatrix, subvector, Mvn};
use crate::sample::FailureEvent;
use crate::shapley::shapley_exact;
use crate::special::{
    norm_cdf, norm_quantile, norm_sf, normal_expectation, piecewise_normal_expectation, Quadrature,
    QuadratureMethod,
};
use crate::subset::{CostTable, SubsetIndex, EXACT_LIMIT};

/// Absolute tolerance on every oracle index.
pub const ORACLE_TOL: f64 = 1e-8;

/// Below this ratio `σ̃ / s` the conditional probability is treated as a step.
const STEP_RATIO: f64 = 1e-10;

#[derive(Debug, Clone)]
pub struct LinearGaussianModel {
    beta0: f64,
    beta: Vec<f64>,
    inputs: Mvn,
    event: FailureEvent,
}

/// `Y | X_A` written as `m + s·Z + σ̃·W` with `Z`, `W` independent standard normals.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConditionalProjection {
    pub mean: f64,
    pub explained_sd: f64,
    pub residual_sd: f64,
}

/// Which per-subset cost the oracle aggregates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum OracleCost {
    /// `V(E[1|X_A]) / V(1)`.
    #[default]
    ClosedSobol,
    /// `E[V(1|X_Ā)] / V(1)`.
    Residual,
    /// `E|p - P(Y > t | X_A)| / (2p(1-p))`.
    L1,
}

impl LinearGaussianModel {
    pub fn new(beta0: f64, beta: Vec<f64>, mu: Vec<f64>, sigma: DMatrix<f64>, event: FailureEvent) -> Result<Self> {
        if beta.len() != mu.len() {
            return Err(Error::InvalidInput(format!(
                "beta has {} entries, mu has {}",
                beta.len(),
                mu.len()
            )));
        }
        if !beta0.is_finite() || beta.iter().any(|b| !b.is_finite()) {
            return Err(Error::InvalidInput("non-finite coefficient".into()));
        }
        let inputs = Mvn::new(mu, sigma)?;
        let model = Self { beta0, beta, inputs, event };
        if model.output_variance() <= 0.0 {
            return Err(Error::ZeroVariance);
        }
        Ok(model)
    }

    pub fn dim(&self) -> usize {
        self.beta.len()
    }

    pub fn beta0(&self) -> f64 {
        self.beta0
    }

    pub fn beta(&self) -> &[f64] {
        &self.beta
    }

    pub fn mu(&self) -> &[f64] {
        self.inputs.mean()
    }

    pub fn sigma(&self) -> &DMatrix<f64> {
        self.inputs.cov()
    }

    pub fn inputs(&self) -> &Mvn {
        &self.inputs
    }

    pub fn event(&self) -> FailureEvent {
        self.event
    }

    pub fn with_threshold(&self, threshold: f64) -> Result<Self> {
        let mut m = self.clone();
        m.event = FailureEvent::new(threshold)?;
        Ok(m)
    }

    pub fn evaluate(&self, x: &[f64]) -> f64 {
        self.beta0 + self.beta.iter().zip(x).map(|(b, v)| b * v).sum::<f64>()
    }

    pub fn output_mean(&self) -> f64 {
        self.evaluate(self.mu())
    }

    pub fn output_variance(&self) -> f64 {
        let b = DVector::from_column_slice(&self.beta);
        (b.transpose() * self.sigma() * &b)[(0, 0)]
    }

    /// `P(Y > t)`.
    pub fn failure_probability(&self) -> f64 {
        let sd = self.output_variance().sqrt();
        norm_sf((self.event.threshold() - self.output_mean()) / sd)
    }

    /// `V(1{Y > t}) = p(1 - p)`.
    pub fn indicator_variance(&self) -> Result<f64> {
        let sd = self.output_variance().sqrt();
        if sd <= 0.0 {
            return Err(Error::ZeroVariance);
        }
        let z = (self.event.threshold() - self.output_mean()) / sd;
        Ok(norm_cdf(z) * norm_sf(z))
    }

    /// Mean and variance of `Y` given `X_A = x_A`.
    pub fn conditional_gaussian(&self, a: SubsetIndex, x_a: &[f64]) -> Result<(f64, f64)> {
        self.check_subset(a)?;
        if x_a.len() != a.len() || x_a.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "conditioning point must hold {} finite values",
                a.len()
            )));
        }
        let (g, proj) = self.projection_parts(a)?;
        let mu_a = subvector(self.mu(), &a.indices());
        let shift = g.dot(&(DVector::from_column_slice(x_a) - mu_a));
        Ok((proj.mean + shift, proj.residual_sd * proj.residual_sd))
    }

    /// Decomposition of `Y | X_A` used by all oracle indices.
    pub fn projection(&self, a: SubsetIndex) -> Result<ConditionalProjection> {
        self.check_subset(a)?;
        Ok(self.projection_parts(a)?.1)
    }

    fn check_subset(&self, a: SubsetIndex) -> Result<()> {
        if a.dim() != self.dim() {
            return Err(Error::InvalidInput(format!(
                "subset over {} inputs used with a {}-input model",
                a.dim(),
                self.dim()
            )));
        }
        Ok(())
    }

    fn projection_parts(&self, a: SubsetIndex) -> Result<(DVector<f64>, ConditionalProjection)> {
        let mean = self.output_mean();
        let total = self.output_variance();
        let ia = a.indices();
        let ib = a.complement().indices();
        if ia.is_empty() {
            let p = ConditionalProjection { mean, explained_sd: 0.0, residual_sd: total.sqrt() };
            return Ok((DVector::zeros(0), p));
        }
        let sigma = self.sigma();
        let beta_a = subvector(&self.beta, &ia);
        let beta_b = subvector(&self.beta, &ib);
        let s_aa = submatrix(sigma, &ia, &ia);
        let chol = s_aa
            .clone()
            .cholesky()
            .ok_or_else(|| Error::Singular(format!("conditioning block {a} is singular")))?;
        let (g, residual) = if ib.is_empty() {
            (beta_a, 0.0)
        } else {
            let s_ab = submatrix(sigma, &ia, &ib);
            let s_bb = submatrix(sigma, &ib, &ib);
            let g = &beta_a + chol.solve(&(&s_ab * &beta_b));
            let w = chol.l().solve_lower_triangular(&s_ab).expect("Cholesky factor is invertible");
            let schur = s_bb - w.transpose() * w;
            (g, (beta_b.transpose() * schur * &beta_b)[(0, 0)].max(0.0))
        };
        let explained = (g.transpose() * s_aa * &g)[(0, 0)].max(0.0);
        Ok((g, ConditionalProjection { mean, explained_sd: explained.sqrt(), residual_sd: residual.sqrt() }))
    }

    /// Failure probability and its Bernoulli variance, rejecting `p ∈ {0, 1}`.
    fn nondegenerate_probability(&self) -> Result<(f64, f64)> {
        let p = self.failure_probability();
        let v = self.indicator_variance()?;
        if v <= 0.0 {
            return Err(Error::DegenerateProbability { probability: p, threshold: self.event.threshold() });
        }
        Ok((p, v))
    }

    fn conditional_probability(&self, proj: ConditionalProjection) -> impl Fn(f64) -> f64 {
        let t = self.event.threshold();
        move |z: f64| norm_cdf((proj.mean + proj.explained_sd * z - t) / proj.residual_sd)
    }

    fn is_step(proj: ConditionalProjection) -> bool {
        proj.residual_sd <= STEP_RATIO * proj.explained_sd
    }

    fn step_location(&self, proj: ConditionalProjection) -> f64 {
        (self.event.threshold() - proj.mean) / proj.explained_sd
    }

    /// `T-S_A = V(P(Y > t | X_A)) / V(1)` with quadrature diagnostics.
    pub fn ts_closed_quadrature(&self, a: SubsetIndex) -> Result<Quadrature> {
        let (p, v) = self.nondegenerate_probability()?;
        let proj = self.projection(a)?;
        if proj.explained_sd == 0.0 {
            return Ok(closed_form(0.0));
        }
        if Self::is_step(proj) {
            return Ok(closed_form(1.0));
        }
        let h = self.conditional_probability(proj);
        let q = normal_expectation(
            |z| {
                let e = h(z) - p;
                e * e
            },
            ORACLE_TOL * v,
            &[self.step_location(proj)],
            proj.residual_sd / proj.explained_sd,
        )?;
        Ok(scaled(q, v))
    }

    pub fn ts_closed_oracle(&self, a: SubsetIndex) -> Result<f64> {
        Ok(self.ts_closed_quadrature(a)?.value)
    }

    /// `T-E_A = E[V(1 | X_Ā)] / V(1)`.
    pub fn te_quadrature(&self, a: SubsetIndex) -> Result<Quadrature> {
        let (_, v) = self.nondegenerate_probability()?;
        let proj = self.projection(a.complement())?;
        if proj.explained_sd == 0.0 {
            return Ok(closed_form(1.0));
        }
        if Self::is_step(proj) {
            return Ok(closed_form(0.0));
        }
        let h = self.conditional_probability(proj);
        let q = normal_expectation(
            |z| {
                let hz = h(z);
                hz * (1.0 - hz)
            },
            ORACLE_TOL * v,
            &[self.step_location(proj)],
            proj.residual_sd / proj.explained_sd,
        )?;
        Ok(scaled(q, v))
    }

    pub fn te_oracle(&self, a: SubsetIndex) -> Result<f64> {
        Ok(self.te_quadrature(a)?.value)
    }

    /// `E|p - P(Y > t | X_A)| / (2p(1-p))`.
    pub fn ts_l1_quadrature(&self, a: SubsetIndex) -> Result<Quadrature> {
        let (p, v) = self.nondegenerate_probability()?;
        let proj = self.projection(a)?;
        if proj.explained_sd == 0.0 {
            return Ok(closed_form(0.0));
        }
        if Self::is_step(proj) {
            return Ok(closed_form(1.0));
        }
        let h = self.conditional_probability(proj);
        let t = self.event.threshold();
        let kink = (t - proj.mean + proj.residual_sd * norm_quantile(p)) / proj.explained_sd;
        let q = piecewise_normal_expectation(&|z| (h(z) - p).abs(), ORACLE_TOL * v, &[kink])?;
        Ok(scaled(q, 2.0 * v))
    }

    pub fn ts_l1_oracle(&self, a: SubsetIndex) -> Result<f64> {
        Ok(self.ts_l1_quadrature(a)?.value)
    }

    pub fn cost(&self, cost: OracleCost, a: SubsetIndex) -> Result<f64> {
        match cost {
            OracleCost::ClosedSobol => self.ts_closed_oracle(a),
            OracleCost::Residual => self.te_oracle(a),
            OracleCost::L1 => self.ts_l1_oracle(a),
        }
    }

    /// Oracle values of `cost` for every subset.
    pub fn cost_table(&self, cost: OracleCost) -> Result<CostTable> {
        self.nondegenerate_probability()?;
        CostTable::par_from_fn(self.dim(), |a| self.cost(cost, a))
    }
}

fn closed_form(value: f64) -> Quadrature {
    Quadrature { value, error_estimate: 0.0, method: QuadratureMethod::ClosedForm, size: 0 }
}

fn scaled(q: Quadrature, by: f64) -> Quadrature {
    Quadrature { value: q.value / by, error_estimate: q.error_estimate / by, ..q }
}

/// Target Shapley effects of the closed-Sobol cost.
pub fn target_shapley_oracle(model: &LinearGaussianModel) -> Result<EffectsVector> {
    target_shapley_oracle_with(model, OracleCost::ClosedSobol)
}

pub fn target_shapley_oracle_with(model: &LinearGaussianModel, cost: OracleCost) -> Result<EffectsVector> {
    if model.dim() > EXACT_LIMIT {
        return Err(Error::ExactAggregationTooLarge { d: model.dim(), limit: EXACT_LIMIT });
    }
    let table = model.cost_table(cost)?;
    let effects = shapley_exact(&table)?;
    let config = serde_json::json!({
        "cost": cost,
        "threshold": model.event().threshold(),
        "failure_probability": model.failure_probability(),
        "tolerance": ORACLE_TOL,
    });
    Ok(EffectsVector::new(effects, EstimatorKind::Oracle, 0).with_config(config))
}

/// Oracle closed-Sobol indices of all `2^d` subsets, computed in parallel.
pub fn closed_sobol_indices(model: &LinearGaussianModel) -> Result<Vec<(SubsetIndex, f64)>> {
    let table = model.cost_table(OracleCost::ClosedSobol)?;
    Ok(table.iter().map(|(s, v)| (s, v.expect("table is complete"))).collect())
}

/// Projections for every subset, mostly useful for diagnostics.
pub fn projections(model: &LinearGaussianModel) -> Result<Vec<(SubsetIndex, ConditionalProjection)>> {
    crate::subset::enumerate_subsets(model.dim())?
        .into_par_iter()
        .map(|s| Ok((s, model.projection(s)?)))
        .collect()
}
