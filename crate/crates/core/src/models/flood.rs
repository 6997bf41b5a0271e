//! River flood model: maximal annual water level from a Manning-Strickler
//! flow relation.

use super::copula::{CopulaModel, DependenceSpec};
use super::marginal::MarginalSpec;
use super::sample_with_output;
use crate::error::{Error, Result};
use crate::rng::{stream, Purpose};
use crate::sample::{FailureEvent, SampleSet};

pub const FLOOD_NAMES: [&str; 6] = ["Q", "Ks", "Zv", "Zm", "L", "B"];

/// Dyke height in meters; failure is overflow above it.
pub const FLOOD_THRESHOLD: f64 = 54.5;

/// Water height `h` and level `Y = Z_v + h`.
pub fn flood_height(q: f64, ks: f64, zv: f64, zm: f64, l: f64, b: f64) -> Result<(f64, f64)> {
    if !(q > 0.0 && ks > 0.0 && b > 0.0 && l > 0.0) {
        return Err(Error::Domain(format!(
            "flood inputs must be positive (Q = {q}, Ks = {ks}, L = {l}, B = {b})"
        )));
    }
    if !(zm > zv) {
        return Err(Error::Domain(format!("Zm = {zm} must exceed Zv = {zv}")));
    }
    let h = (q / (b * ks * ((zm - zv) / l).sqrt())).powf(0.6);
    Ok((h, zv + h))
}

pub fn flood_marginals() -> Vec<MarginalSpec> {
    vec![
        MarginalSpec::TruncatedGumbel { loc: 1013.0, scale: 558.0, lower: 500.0, upper: 3000.0 },
        MarginalSpec::TruncatedNormal { mean: 30.0, sd: 7.0, lower: 15.0, upper: f64::INFINITY },
        MarginalSpec::Triangular { min: 49.0, mode: 50.0, max: 51.0 },
        MarginalSpec::Triangular { min: 54.0, mode: 55.0, max: 56.0 },
        MarginalSpec::Triangular { min: 4990.0, mode: 5000.0, max: 5010.0 },
        MarginalSpec::Triangular { min: 295.0, mode: 300.0, max: 305.0 },
    ]
}

/// Correlations `ρ(Q, Ks) = 0.5`, `ρ(Zv, Zm) = 0.3`, `ρ(L, B) = 0.3`.
pub fn flood_dependence() -> DependenceSpec {
    DependenceSpec::new(vec![(0, 1, 0.5), (2, 3, 0.3), (4, 5, 0.3)])
}

fn flood_output(x: &[f64]) -> Result<f64> {
    flood_height(x[0], x[1], x[2], x[3], x[4], x[5]).map(|(_, y)| y)
}

/// Flood model with the given marginals, dependence and threshold.
pub fn flood_model_with(
    marginals: Vec<MarginalSpec>,
    dependence: &DependenceSpec,
    threshold: f64,
) -> Result<CopulaModel> {
    if marginals.len() != 6 {
        return Err(Error::InvalidConfig(format!("flood model needs 6 marginals, got {}", marginals.len())));
    }
    CopulaModel::new(
        marginals,
        FLOOD_NAMES.iter().map(|s| s.to_string()).collect(),
        dependence,
        flood_output,
        FailureEvent::new(threshold)?,
    )
}

pub fn flood_model() -> Result<CopulaModel> {
    flood_model_with(flood_marginals(), &flood_dependence(), FLOOD_THRESHOLD)
}

/// `n` flood input rows with the water level as output.
pub fn sample_flood_inputs(n: usize, dependence: &DependenceSpec, seed: u64) -> Result<SampleSet> {
    if n < 2 {
        return Err(Error::InvalidInput(format!("need at least 2 rows, got {n}")));
    }
    let model = flood_model_with(flood_marginals(), dependence, FLOOD_THRESHOLD)?;
    sample_with_output(&model, n, &mut stream(seed, Purpose::Dataset, 0, 0))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn nominal_point() {
        let (h, y) = flood_height(1013.0, 30.0, 50.0, 55.0, 5000.0, 300.0).unwrap();
        assert!((h - 2.142).abs() < 1e-3, "{h}");
        assert!((y - 52.142).abs() < 1e-3);
    }

    #[test]
    fn ratio_invariance_and_domain() {
        let (h1, _) = flood_height(1000.0, 30.0, 50.0, 55.0, 5000.0, 300.0).unwrap();
        let (h2, _) = flood_height(2000.0, 60.0, 50.0, 55.0, 5000.0, 300.0).unwrap();
        assert!((h1 - h2).abs() < 1e-12);
        assert!(flood_height(1000.0, 30.0, 55.0, 55.0, 5000.0, 300.0).is_err());
        let (h, y) = flood_height(1e-12, 30.0, 50.0, 55.0, 5000.0, 300.0).unwrap();
        assert!(h < 1e-6 && (y - 50.0).abs() < 1e-6);
    }
}
