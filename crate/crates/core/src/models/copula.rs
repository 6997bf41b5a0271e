//! Dependent inputs through a Gaussian copula.
//!
//! Each input is `X_i = F_i⁻¹(Φ(Z_i))` with `Z ~ N(0, R)`. The off-diagonal
//! entries of `R` are solved pair by pair so that the Pearson correlation of
//! the transformed pair matches its target.

use nalgebra::DMatrix;
use rand::RngCore;
use serde::{Deserialize, Serialize};

use super::marginal::MarginalSpec;
use super::{ConditionalSampler, InputModel};
use crate::error::{Error, Result};
use crate::mvn::{GaussianConditional, Mvn};
use crate::sample::FailureEvent;
use crate::special::hermite_nodes;
use crate::subset::SubsetIndex;

/// Target Pearson correlations `(i, j, ρ)` between pairs of inputs.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct DependenceSpec {
    pub pairs: Vec<(usize, usize, f64)>,
}

impl DependenceSpec {
    pub fn new(pairs: Vec<(usize, usize, f64)>) -> Self {
        Self { pairs }
    }

    pub fn validate(&self, d: usize) -> Result<()> {
        let mut seen = std::collections::HashSet::new();
        for &(i, j, rho) in &self.pairs {
            if i >= d || j >= d || i == j {
                return Err(Error::InvalidConfig(format!("invalid correlation pair ({i}, {j}) for d = {d}")));
            }
            if !(rho.abs() < 1.0) {
                return Err(Error::InvalidConfig(format!("correlation {rho} for pair ({i}, {j}) is not in (-1, 1)")));
            }
            if !seen.insert((i.min(j), i.max(j))) {
                return Err(Error::InvalidConfig(format!("pair ({i}, {j}) listed twice")));
            }
        }
        Ok(())
    }
}

const NORTA_ORDER: usize = 64;

struct PairMoments {
    nodes: std::sync::Arc<Vec<(f64, f64)>>,
    qi: Vec<f64>,
    mean_i: f64,
    mean_j: f64,
    sd_i: f64,
    sd_j: f64,
}

impl PairMoments {
    fn new(fi: &MarginalSpec, fj: &MarginalSpec) -> Result<Self> {
        let nodes = hermite_nodes(NORTA_ORDER);
        let qi: Vec<f64> = nodes.iter().map(|&(z, _)| fi.from_normal_score(z)).collect();
        let qj: Vec<f64> = nodes.iter().map(|&(z, _)| fj.from_normal_score(z)).collect();
        let moments = |q: &[f64]| {
            let m: f64 = nodes.iter().zip(q).map(|(&(_, w), v)| w * v).sum();
            let v: f64 = nodes.iter().zip(q).map(|(&(_, w), x)| w * (x - m).powi(2)).sum();
            (m, v.sqrt())
        };
        let (mean_i, sd_i) = moments(&qi);
        let (mean_j, sd_j) = moments(&qj);
        if sd_i == 0.0 || sd_j == 0.0 {
            return Err(Error::InvalidConfig("cannot correlate an input with zero variance".into()));
        }
        Ok(Self { nodes, qi, mean_i, mean_j, sd_i, sd_j })
    }

    /// Pearson correlation of the transformed pair when `Corr(Z_i, Z_j) = r`.
    fn pearson(&self, fj: &MarginalSpec, r: f64) -> f64 {
        let c = (1.0 - r * r).max(0.0).sqrt();
        let mut acc = 0.0;
        for (a, &(z1, w1)) in self.nodes.iter().enumerate() {
            let xi = self.qi[a] - self.mean_i;
            let mut inner = 0.0;
            for &(z2, w2) in self.nodes.iter() {
                inner += w2 * (fj.from_normal_score(r * z1 + c * z2) - self.mean_j);
            }
            acc += w1 * xi * inner;
        }
        acc / (self.sd_i * self.sd_j)
    }
}

/// Gaussian correlation `r` giving Pearson correlation `target` between
/// `F_i⁻¹(Φ(Z_i))` and `F_j⁻¹(Φ(Z_j))`.
pub fn solve_gaussian_correlation(fi: &MarginalSpec, fj: &MarginalSpec, target: f64) -> Result<f64> {
    if target == 0.0 {
        return Ok(0.0);
    }
    let pm = PairMoments::new(fi, fj)?;
    let f = |r: f64| pm.pearson(fj, r) - target;
    let (mut lo, mut hi) = (-0.999_999, 0.999_999);
    let (flo, fhi) = (f(lo), f(hi));
    if flo > 0.0 || fhi < 0.0 {
        return Err(Error::InvalidConfig(format!(
            "correlation {target} is not attainable for these marginals (range [{:.4}, {:.4}])",
            flo + target,
            fhi + target
        )));
    }
    // The map r -> Pearson is increasing, so bisection is safe.
    while hi - lo > 1e-12 {
        let mid = 0.5 * (lo + hi);
        if f(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

type ModelFn = dyn Fn(&[f64]) -> Result<f64> + Send + Sync;

/// Inputs with the given marginals coupled by a Gaussian copula, and a model `G`.
pub struct CopulaModel {
    marginals: Vec<MarginalSpec>,
    names: Vec<String>,
    latent: Mvn,
    model: Box<ModelFn>,
    event: FailureEvent,
}

impl std::fmt::Debug for CopulaModel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("CopulaModel")
            .field("marginals", &self.marginals)
            .field("names", &self.names)
            .field("latent_correlation", self.latent.cov())
            .field("event", &self.event)
            .finish()
    }
}

impl CopulaModel {
    pub fn new<G>(
        marginals: Vec<MarginalSpec>,
        names: Vec<String>,
        dependence: &DependenceSpec,
        model: G,
        event: FailureEvent,
    ) -> Result<Self>
    where
        G: Fn(&[f64]) -> Result<f64> + Send + Sync + 'static,
    {
        let d = marginals.len();
        if d == 0 || names.len() != d {
            return Err(Error::InvalidConfig(format!("{} names for {d} marginals", names.len())));
        }
        for m in &marginals {
            m.validate()?;
        }
        dependence.validate(d)?;
        let mut r = DMatrix::identity(d, d);
        for &(i, j, rho) in &dependence.pairs {
            let g = solve_gaussian_correlation(&marginals[i], &marginals[j], rho)?;
            r[(i, j)] = g;
            r[(j, i)] = g;
        }
        let latent = Mvn::new(vec![0.0; d], r).map_err(|_| {
            Error::InvalidConfig("induced Gaussian correlation matrix is not positive definite".into())
        })?;
        Ok(Self { marginals, names, latent, model: Box::new(model), event })
    }

    pub fn marginals(&self) -> &[MarginalSpec] {
        &self.marginals
    }

    /// Correlation matrix of the latent Gaussian vector.
    pub fn latent_correlation(&self) -> &DMatrix<f64> {
        self.latent.cov()
    }

    pub fn with_threshold(mut self, threshold: f64) -> Result<Self> {
        self.event = FailureEvent::new(threshold)?;
        Ok(self)
    }
}

struct CopulaConditional<'a> {
    model: &'a CopulaModel,
    inner: GaussianConditional,
}

impl ConditionalSampler for CopulaConditional<'_> {
    fn target(&self) -> &[usize] {
        self.inner.target()
    }

    fn sample(&self, given: &[f64], n: usize, rng: &mut dyn RngCore) -> Result<Vec<f64>> {
        let scores: Vec<f64> = self
            .inner
            .given()
            .iter()
            .zip(given)
            .map(|(&i, &x)| self.model.marginals[i].normal_score(x))
            .collect();
        let z = self.inner.sample(&scores, n, rng);
        let target = self.inner.target();
        let mut out = Vec::with_capacity(n * target.len());
        for r in 0..n {
            for (c, &i) in target.iter().enumerate() {
                out.push(self.model.marginals[i].from_normal_score(z[(r, c)]));
            }
        }
        Ok(out)
    }
}

impl InputModel for CopulaModel {
    fn dim(&self) -> usize {
        self.marginals.len()
    }

    fn names(&self) -> Vec<String> {
        self.names.clone()
    }

    fn event(&self) -> FailureEvent {
        self.event
    }

    fn evaluate(&self, x: &[f64]) -> Result<f64> {
        (self.model)(x)
    }

    fn sample_joint(&self, n: usize, rng: &mut dyn RngCore) -> Result<Vec<f64>> {
        let d = self.dim();
        let mut out = vec![0.0; n * d];
        let mut z = vec![0.0; d];
        let mut g = vec![0.0; d];
        for row in out.chunks_exact_mut(d) {
            self.latent.sample_into(rng, &mut z, &mut g);
            for ((x, m), &zi) in row.iter_mut().zip(&self.marginals).zip(&g) {
                *x = m.from_normal_score(zi);
            }
        }
        Ok(out)
    }

    fn sample_marginal(&self, a: SubsetIndex, n: usize, rng: &mut dyn RngCore) -> Result<Vec<f64>> {
        let idx = a.indices();
        let k = idx.len();
        if k == 0 {
            return Ok(Vec::new());
        }
        let sub = self.latent.marginal(a)?;
        let mut out = vec![0.0; n * k];
        let mut z = vec![0.0; k];
        let mut g = vec![0.0; k];
        for row in out.chunks_exact_mut(k) {
            sub.sample_into(rng, &mut z, &mut g);
            for ((x, &i), &zi) in row.iter_mut().zip(&idx).zip(&g) {
                *x = self.marginals[i].from_normal_score(zi);
            }
        }
        Ok(out)
    }

    fn conditional(&self, a: SubsetIndex) -> Result<Box<dyn ConditionalSampler + '_>> {
        Ok(Box::new(CopulaConditional { model: self, inner: self.latent.conditional(a)? }))
    }
}
