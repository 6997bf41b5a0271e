//! Double-loop Monte Carlo estimation of target Shapley effects from an
//! [`InputModel`] that can sample conditionally.
//!
//! For a subset `A`, `N_v` outer draws of `X_A` are each completed by `N_p`
//! inner draws of `X_Ā | X_A`; the inner failure frequencies `m_i` estimate
//! `P(Y > t | X_A)` and their spread around `p̂` estimates `V(E[1|X_A])`.

use rand::RngCore;
use serde::{Deserialize, Serialize};

use crate::effects::{EffectsVector, EstimatorKind};
use crate::error::{Error, Result};
use crate::models::InputModel;
use crate::rng::{stream, Purpose};
use crate::shapley::{aggregate, Aggregation, PermutationMode};
use crate::subset::SubsetIndex;

/// Estimator of `V(E[1|X_A])` from the inner frequencies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InnerCorrection {
    /// Subtracts the unbiased within-point variance `m_i(1 - m_i) / (N_p - 1)`,
    /// which removes the `O(1/N_p)` upward bias. Needs `N_p >= 2`.
    #[default]
    BiasCorrected,
    /// Squared deviations of the inner frequencies only.
    Raw,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McConfig {
    pub n: usize,
    pub n_v: usize,
    pub n_p: usize,
    #[serde(default)]
    pub aggregation: Aggregation,
    #[serde(default)]
    pub inner: InnerCorrection,
    #[serde(default)]
    pub seed: u64,
}

impl Default for McConfig {
    fn default() -> Self {
        Self {
            n: 100_000,
            n_v: 1_000,
            n_p: 3,
            aggregation: Aggregation::Exact,
            inner: InnerCorrection::BiasCorrected,
            seed: 0,
        }
    }
}

impl McConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n < 2 {
            return Err(Error::InvalidConfig(format!("N must be at least 2, got {}", self.n)));
        }
        if self.n_v < 2 {
            return Err(Error::InvalidConfig(format!("N_v must be at least 2, got {}", self.n_v)));
        }
        if self.n_p < 1 {
            return Err(Error::InvalidConfig("N_p must be at least 1".into()));
        }
        if self.n_p < 2 && self.inner == InnerCorrection::BiasCorrected {
            return Err(Error::InvalidConfig(
                "the bias-corrected inner estimator needs N_p >= 2; use the raw estimator for N_p = 1".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ProbabilityEstimate {
    pub p: f64,
    pub standard_error: f64,
    pub n: usize,
}

/// `p̂` from `n` joint draws, together with the failure indicators.
fn joint_indicators(model: &dyn InputModel, n: usize, seed: u64) -> Result<Vec<bool>> {
    let d = model.dim();
    let event = model.event();
    let mut rng = stream(seed, Purpose::Joint, 0, 0);
    let mut out = Vec::with_capacity(n);
    while out.len() < n {
        let chunk = JOINT_CHUNK.min(n - out.len());
        let rows = model.sample_joint(chunk, &mut rng)?;
        for x in rows.chunks_exact(d) {
            let y = model.evaluate(x)?;
            if !y.is_finite() {
                return Err(Error::NonFiniteOutput { row: out.len() });
            }
            out.push(event.fails(y));
        }
    }
    Ok(out)
}

const JOINT_CHUNK: usize = 1 << 16;

fn probability_from(ind: &[bool]) -> ProbabilityEstimate {
    let n = ind.len();
    let p = ind.iter().filter(|&&b| b).count() as f64 / n as f64;
    ProbabilityEstimate { p, standard_error: (p * (1.0 - p) / n as f64).sqrt(), n }
}

pub fn estimate_failure_probability(model: &dyn InputModel, n: usize, seed: u64) -> Result<ProbabilityEstimate> {
    if n < 2 {
        return Err(Error::InvalidConfig(format!("N must be at least 2, got {n}")));
    }
    Ok(probability_from(&joint_indicators(model, n, seed)?))
}

fn check_probability(p: f64, model: &dyn InputModel) -> Result<()> {
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::DegenerateProbability { probability: p, threshold: model.event().threshold() });
    }
    Ok(())
}

/// Estimate of the closed-Sobol cost `V(E[1|X_A]) / V(1)` for one subset.
///
/// `∅` gives 0 without model calls. For the full set the inner law is a
/// point mass, so each inner frequency is the indicator itself.
pub fn estimate_cost_mc(a: SubsetIndex, model: &dyn InputModel, cfg: &McConfig, p_hat: f64) -> Result<f64> {
    cfg.validate()?;
    check_probability(p_hat, model)?;
    if a.dim() != model.dim() {
        return Err(Error::InvalidInput(format!(
            "subset over {} inputs used with a {}-input model",
            a.dim(),
            model.dim()
        )));
    }
    if a.is_empty() {
        return Ok(0.0);
    }
    let freqs = inner_frequencies(a, model, cfg)?;
    Ok(cost_from_frequencies(&freqs, p_hat, cfg))
}

fn cost_from_frequencies(freqs: &[f64], p_hat: f64, cfg: &McConfig) -> f64 {
    let nv = freqs.len() as f64;
    let spread: f64 = freqs.iter().map(|m| (m - p_hat) * (m - p_hat)).sum();
    let mut num = spread / (nv - 1.0);
    if cfg.inner == InnerCorrection::BiasCorrected {
        let np = cfg.n_p as f64;
        let within: f64 = freqs.iter().map(|m| m * (1.0 - m) / (np - 1.0)).sum();
        num -= within / (nv - 1.0);
    }
    num / (p_hat * (1.0 - p_hat))
}

fn inner_frequencies(a: SubsetIndex, model: &dyn InputModel, cfg: &McConfig) -> Result<Vec<f64>> {
    let d = model.dim();
    let event = model.event();
    let mask = a.mask();
    let given_idx = a.indices();
    let outer = model.sample_marginal(a, cfg.n_v, &mut stream(cfg.seed, Purpose::Outer, mask, 0))?;
    let k = given_idx.len();
    let cond = if a.is_full() { None } else { Some(model.conditional(a)?) };
    let mut x = vec![0.0; d];
    let mut freqs = Vec::with_capacity(cfg.n_v);
    for (i, given) in outer.chunks_exact(k).enumerate() {
        for (&j, &v) in given_idx.iter().zip(given) {
            x[j] = v;
        }
        let fails = match &cond {
            None => {
                let y = eval_checked(model, &x, i)?;
                if event.fails(y) {
                    cfg.n_p
                } else {
                    0
                }
            }
            Some(c) => {
                let mut rng = stream(cfg.seed, Purpose::Inner, mask, i as u64);
                let draws = c.sample(given, cfg.n_p, &mut rng as &mut dyn RngCore)?;
                let target = c.target();
                let mut count = 0;
                for row in draws.chunks_exact(target.len()) {
                    for (&j, &v) in target.iter().zip(row) {
                        x[j] = v;
                    }
                    if event.fails(eval_checked(model, &x, i)?) {
                        count += 1;
                    }
                }
                count
            }
        };
        freqs.push(fails as f64 / cfg.n_p as f64);
    }
    Ok(freqs)
}

fn eval_checked(model: &dyn InputModel, x: &[f64], row: usize) -> Result<f64> {
    let y = model.evaluate(x)?;
    if !y.is_finite() {
        return Err(Error::NonFiniteOutput { row });
    }
    Ok(y)
}

/// Model-call accounting for one run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct CallCount {
    /// Calls made: `N + (distinct proper subsets) · N_v · N_p`.
    pub actual: u64,
    /// Calls without memoization of repeated permutation prefixes:
    /// `N + m (d - 1) N_v N_p`, where `m = d!` for exact aggregation.
    pub unmemoized: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct McOutcome {
    pub effects: EffectsVector,
    pub probability: ProbabilityEstimate,
    pub calls: CallCount,
}

fn factorial(d: usize) -> u64 {
    (1..=d as u64).fold(1u64, |a, b| a.saturating_mul(b))
}

/// Target Shapley effects by the double-loop estimator.
///
/// `val(∅) = 0`; `val(full)` is computed from the size-`N` joint sample used
/// for `p̂`, where it equals 1 identically, so the effects sum to one.
pub fn estimate_target_shapley_mc(model: &dyn InputModel, cfg: &McConfig) -> Result<McOutcome> {
    cfg.validate()?;
    let d = model.dim();
    let indicators = joint_indicators(model, cfg.n, cfg.seed)?;
    let prob = probability_from(&indicators);
    check_probability(prob.p, model)?;
    let p = prob.p;
    let full_value = {
        let spread: f64 = indicators
            .iter()
            .map(|&b| {
                let e = if b { 1.0 } else { 0.0 } - p;
                e * e
            })
            .sum();
        spread / (cfg.n as f64 * p * (1.0 - p))
    };
    let cost = |a: SubsetIndex| -> Result<f64> {
        if a.is_empty() {
            Ok(0.0)
        } else if a.is_full() {
            Ok(full_value)
        } else {
            Ok(cost_from_frequencies(&inner_frequencies(a, model, cfg)?, p, cfg))
        }
    };
    let out = aggregate(cost, d, cfg.aggregation, cfg.seed, model.concurrent_sampling())?;
    let per_subset = (cfg.n_v * cfg.n_p) as u64;
    let m = out.permutations.map(|m| m as u64).unwrap_or_else(|| factorial(d));
    let calls = CallCount {
        actual: cfg.n as u64 + out.proper_subsets() as u64 * per_subset,
        unmemoized: (cfg.n as u64).saturating_add(m.saturating_mul((d as u64 - 1) * per_subset)),
    };
    let kind = match cfg.aggregation {
        Aggregation::Exact => EstimatorKind::Mc,
        Aggregation::Permutations(_) => EstimatorKind::McPerm,
    };
    let config = serde_json::json!({
        "n": cfg.n,
        "n_v": cfg.n_v,
        "n_p": cfg.n_p,
        "aggregation": cfg.aggregation,
        "inner": cfg.inner,
        "failure_probability": p,
        "failure_probability_se": prob.standard_error,
        "model_calls": calls.actual,
        "model_calls_unmemoized": calls.unmemoized,
        "subsets_evaluated": out.evaluated.len(),
    });
    let effects = EffectsVector::new(out.effects, kind, cfg.seed).with_config(config);
    Ok(McOutcome { effects, probability: prob, calls })
}

/// Permutation mode with `m` sampled permutations.
pub fn sampled(m: usize) -> Aggregation {
    Aggregation::Permutations(PermutationMode::Sampled(m))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{independent_case, LinearGaussianInputs};

    fn small(seed: u64) -> McConfig {
        McConfig { n: 20_000, n_v: 400, n_p: 4, seed, ..McConfig::default() }
    }

    #[test]
    fn config_validation() {
        assert!(McConfig { n_v: 1, ..McConfig::default() }.validate().is_err());
        assert!(McConfig { n_p: 1, ..McConfig::default() }.validate().is_err());
        assert!(McConfig { n_p: 1, inner: InnerCorrection::Raw, ..McConfig::default() }.validate().is_ok());
    }

    #[test]
    fn effects_sum_to_one_and_calls_are_counted() {
        let model = LinearGaussianInputs::new(independent_case(0.5).unwrap());
        let out = estimate_target_shapley_mc(&model, &small(3)).unwrap();
        assert!((out.effects.sum() - 1.0).abs() < 1e-12);
        assert_eq!(out.calls.actual, 20_000 + 6 * 400 * 4);
        assert_eq!(out.calls.unmemoized, 20_000 + 6 * 2 * 400 * 4);
    }

    #[test]
    fn empty_subset_costs_nothing() {
        let model = LinearGaussianInputs::new(independent_case(0.5).unwrap());
        let v = estimate_cost_mc(SubsetIndex::empty(3).unwrap(), &model, &small(0), 0.3).unwrap();
        assert_eq!(v, 0.0);
        assert!(matches!(
            estimate_cost_mc(SubsetIndex::empty(3).unwrap(), &model, &small(0), 0.0),
            Err(Error::DegenerateProbability { .. })
        ));
    }

    #[test]
    fn same_seed_same_result() {
        let model = LinearGaussianInputs::new(independent_case(1.0).unwrap());
        let a = estimate_target_shapley_mc(&model, &small(9)).unwrap();
        let b = estimate_target_shapley_mc(&model, &small(9)).unwrap();
        assert_eq!(a.effects.effects, b.effects.effects);
    }
}
