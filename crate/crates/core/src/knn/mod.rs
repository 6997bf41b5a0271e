//! Given-data nearest-neighbour estimation of target Shapley effects.
//!
//! For a subset `A`, `E[V(1|X_Ā)]` is estimated by the average, over the
//! sample rows, of the unbiased variance of the failure indicator across the
//! `N_s` nearest rows in the `Ā` coordinates (the row itself included).

mod kdtree;

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use kdtree::{Candidates, NeighborIndex, TREE_MAX_DIM};

use crate::effects::{EffectsVector, EstimatorKind};
use crate::error::{Error, Result};
use crate::rng::{child_seed, stream, Purpose};
use crate::sample::{mean_sd, FailureEvent, SampleSet};
use crate::shapley::{aggregate, Aggregation};
use crate::subset::SubsetIndex;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KnnConfig {
    pub n_s: usize,
    /// Measure distances on columns scaled to zero mean and unit variance.
    pub standardize: bool,
    #[serde(default)]
    pub aggregation: Aggregation,
    /// Rescale the effects to sum to one, keeping the raw sum on record.
    #[serde(default)]
    pub normalize_to_one: bool,
    #[serde(default)]
    pub seed: u64,
}

impl Default for KnnConfig {
    fn default() -> Self {
        Self { n_s: 3, standardize: true, aggregation: Aggregation::Exact, normalize_to_one: false, seed: 0 }
    }
}

impl KnnConfig {
    pub fn validate(&self, n: usize) -> Result<()> {
        if self.n_s < 2 {
            return Err(Error::InvalidConfig(format!("N_s must be at least 2, got {}", self.n_s)));
        }
        if self.n_s > n {
            return Err(Error::InvalidConfig(format!("N_s = {} exceeds the sample size {n}", self.n_s)));
        }
        Ok(())
    }
}

/// Which row to query in [`knn_indices`].
#[derive(Debug, Clone, PartialEq)]
pub enum Query {
    Row(usize),
    Point(Vec<f64>),
}

/// Columns prepared for distance computations.
#[derive(Debug, Clone)]
struct Coordinates {
    columns: Vec<Vec<f64>>,
}

impl Coordinates {
    fn new(sample: &SampleSet, standardize: bool) -> Self {
        let columns = sample
            .columns()
            .iter()
            .map(|c| {
                if !standardize {
                    return c.clone();
                }
                let (m, sd) = mean_sd(c);
                if sd > 0.0 {
                    c.iter().map(|v| (v - m) / sd).collect()
                } else {
                    vec![0.0; c.len()]
                }
            })
            .collect();
        Self { columns }
    }

    fn rows(&self) -> usize {
        self.columns[0].len()
    }

    fn index(&self, cols: &[usize]) -> NeighborIndex {
        let n = self.rows();
        let k = cols.len();
        let mut pts = Vec::with_capacity(n * k);
        for i in 0..n {
            for &c in cols {
                pts.push(self.columns[c][i]);
            }
        }
        NeighborIndex::build(pts, k)
    }
}

/// The `k` rows nearest to `query` in the columns `cols`, closest first.
///
/// Distances are Euclidean on the raw columns, or on standardized columns
/// when `standardize` is set. Equidistant candidates at the `k`-th distance
/// are chosen uniformly using a stream keyed by `seed`.
pub fn knn_indices(
    sample: &SampleSet,
    cols: &[usize],
    query: &Query,
    k: usize,
    standardize: bool,
    seed: u64,
) -> Result<Vec<usize>> {
    if cols.is_empty() {
        return Err(Error::InvalidInput("neighbour search needs at least one column".into()));
    }
    if let Some(&c) = cols.iter().find(|&&c| c >= sample.dim()) {
        return Err(Error::InvalidInput(format!("column {c} out of range")));
    }
    if k == 0 || k > sample.len() {
        return Err(Error::InvalidInput(format!("k = {k} must be in 1..={}", sample.len())));
    }
    let coords = Coordinates::new(sample, standardize);
    let index = coords.index(cols);
    let (q, row) = match query {
        Query::Row(r) => {
            if *r >= sample.len() {
                return Err(Error::InvalidInput(format!("row {r} out of range")));
            }
            (cols.iter().map(|&c| coords.columns[c][*r]).collect::<Vec<_>>(), *r as u64)
        }
        Query::Point(p) => {
            if p.len() != cols.len() {
                return Err(Error::InvalidInput(format!("query has {} coordinates, expected {}", p.len(), cols.len())));
            }
            let scaled = cols
                .iter()
                .zip(p)
                .map(|(&c, &v)| {
                    if !standardize {
                        return v;
                    }
                    let (m, sd) = mean_sd(sample.column(c));
                    if sd > 0.0 {
                        (v - m) / sd
                    } else {
                        0.0
                    }
                })
                .collect();
            (scaled, u64::MAX)
        }
    };
    let mask = cols.iter().fold(0u64, |m, &c| m | 1 << c);
    let mut scratch = Candidates::new(k + 1);
    let mut out = Vec::new();
    index.knn_into(&q, k, &mut scratch, || stream(seed, Purpose::TieBreak, mask, row), &mut out);
    Ok(out.into_iter().map(|i| i as usize).collect())
}

/// Binary indicator and its mean, validated.
fn binary_indicator(sample: &SampleSet) -> Result<Vec<u8>> {
    let out = sample
        .output()
        .ok_or_else(|| Error::InvalidInput("sample has no output column".into()))?;
    out.iter()
        .enumerate()
        .map(|(row, &v)| {
            if v == 0.0 {
                Ok(0)
            } else if v == 1.0 {
                Ok(1)
            } else {
                Err(Error::NonBinaryOutput { row, value: v })
            }
        })
        .collect()
}

fn nondegenerate(y: &[u8], threshold: f64) -> Result<f64> {
    let p = y.iter().map(|&v| v as usize).sum::<usize>() as f64 / y.len() as f64;
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::DegenerateProbability { probability: p, threshold });
    }
    Ok(p)
}

/// Which cost the neighbour statistics feed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Statistic {
    /// `E[V(1|X_Ā)] / V(1)`, neighbours in the `Ā` coordinates.
    Residual,
    /// `E|p - P(1|X_A)| / (2p(1-p))`, neighbours in the `A` coordinates.
    L1,
}

struct Problem<'a> {
    coords: &'a Coordinates,
    y: &'a [u8],
    p: f64,
    cfg: &'a KnnConfig,
}

impl Problem<'_> {
    fn cost(&self, a: SubsetIndex, stat: Statistic) -> f64 {
        if a.is_empty() {
            return 0.0;
        }
        if a.is_full() {
            return 1.0;
        }
        let cols = match stat {
            Statistic::Residual => a.complement().indices(),
            Statistic::L1 => a.indices(),
        };
        let index = self.coords.index(&cols);
        let ns = self.cfg.n_s;
        let mut scratch = Candidates::new(ns + 1);
        let mut nbrs = Vec::with_capacity(ns);
        let mut total = 0.0;
        let mask = a.mask();
        for (pos, &row) in index.storage_order().iter().enumerate() {
            let q = index.stored_point(pos);
            index.knn_into(
                q,
                ns,
                &mut scratch,
                || stream(self.cfg.seed, Purpose::TieBreak, mask, row as u64),
                &mut nbrs,
            );
            let s = nbrs.iter().map(|&i| self.y[i as usize] as usize).sum::<usize>() as f64;
            let k = ns as f64;
            total += match stat {
                Statistic::Residual => (s - s * s / k) / (k - 1.0),
                Statistic::L1 => (s / k - self.p).abs(),
            };
        }
        let n = self.y.len() as f64;
        let v = self.p * (1.0 - self.p);
        match stat {
            Statistic::Residual => total / (n * v),
            Statistic::L1 => total / (n * 2.0 * v),
        }
    }
}

/// Estimate of `T-E_A = E[V(1|X_Ā)] / V(1)` from a sample whose output
/// column already holds the 0/1 failure indicator.
pub fn estimate_cost_knn(a: SubsetIndex, sample: &SampleSet, cfg: &KnnConfig, p_hat: f64) -> Result<f64> {
    cfg.validate(sample.len())?;
    if a.dim() != sample.dim() {
        return Err(Error::InvalidInput(format!(
            "subset over {} inputs used with a {}-column sample",
            a.dim(),
            sample.dim()
        )));
    }
    let y = binary_indicator(sample)?;
    if !(p_hat > 0.0 && p_hat < 1.0) {
        return Err(Error::DegenerateProbability { probability: p_hat, threshold: f64::NAN });
    }
    let coords = Coordinates::new(sample, cfg.standardize);
    Ok(Problem { coords: &coords, y: &y, p: p_hat, cfg }.cost(a, Statistic::Residual))
}

fn indicator_of(sample: &SampleSet, event: &FailureEvent) -> Result<Vec<u8>> {
    let out = sample
        .output()
        .ok_or_else(|| Error::InvalidInput("sample has no output column".into()))?;
    Ok(out.iter().map(|&v| event.fails(v) as u8).collect())
}

fn run(sample: &SampleSet, event: &FailureEvent, cfg: &KnnConfig, stat: Statistic) -> Result<EffectsVector> {
    cfg.validate(sample.len())?;
    let y = indicator_of(sample, event)?;
    let p = nondegenerate(&y, event.threshold())?;
    let coords = Coordinates::new(sample, cfg.standardize);
    let problem = Problem { coords: &coords, y: &y, p, cfg };
    let out = aggregate(|a| Ok(problem.cost(a, stat)), sample.dim(), cfg.aggregation, cfg.seed, true)?;
    let kind = match cfg.aggregation {
        Aggregation::Exact => EstimatorKind::Knn,
        Aggregation::Permutations(_) => EstimatorKind::KnnPerm,
    };
    let config = serde_json::json!({
        "n": sample.len(),
        "n_s": cfg.n_s,
        "standardize": cfg.standardize,
        "aggregation": cfg.aggregation,
        "cost": match stat { Statistic::Residual => "residual", Statistic::L1 => "l1" },
        "threshold": event.threshold(),
        "failure_probability": p,
        "subsets_evaluated": out.evaluated.len(),
    });
    let mut effects = EffectsVector::new(out.effects, kind, cfg.seed).with_config(config);
    effects.experimental = stat == Statistic::L1;
    if cfg.normalize_to_one {
        effects.normalize();
    }
    Ok(effects)
}

/// Target Shapley effects from one input-output sample.
pub fn estimate_target_shapley_knn(sample: &SampleSet, event: &FailureEvent, cfg: &KnnConfig) -> Result<EffectsVector> {
    run(sample, event, cfg, Statistic::Residual)
}

/// Shapley effects of the mean-absolute-deviation cost, with conditional
/// probabilities taken as neighbour means in the `A` coordinates.
/// Marked experimental in the output.
pub fn estimate_target_shapley_l1_knn(sample: &SampleSet, event: &FailureEvent, cfg: &KnnConfig) -> Result<EffectsVector> {
    run(sample, event, cfg, Statistic::L1)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConfidenceIntervals {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub mean: Vec<f64>,
    pub successful: usize,
    /// Repetitions whose subsample had a degenerate failure probability.
    pub failed: usize,
    pub subsample_size: usize,
}

/// Linear-interpolation quantile of sorted data.
fn quantile(sorted: &[f64], q: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * q;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// 95% intervals from repeated estimation on subsamples drawn without replacement.
pub fn subsample_confidence(
    sample: &SampleSet,
    event: &FailureEvent,
    cfg: &KnnConfig,
    fraction: f64,
    repetitions: usize,
) -> Result<ConfidenceIntervals> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(Error::InvalidConfig(format!("subsample fraction {fraction} must lie in (0, 1)")));
    }
    if repetitions < 2 {
        return Err(Error::InvalidConfig(format!("need at least 2 repetitions, got {repetitions}")));
    }
    let m = (fraction * sample.len() as f64).round() as usize;
    if m < 2 || m < cfg.n_s {
        return Err(Error::InvalidConfig(format!("subsample of {m} rows is too small")));
    }
    let results: Vec<Result<Option<Vec<f64>>>> = (0..repetitions)
        .into_par_iter()
        .map(|r| {
            let mut rows: Vec<usize> = (0..sample.len()).collect();
            rows.partial_shuffle(&mut stream(cfg.seed, Purpose::Subsample, r as u64, 0), m);
            rows.truncate(m);
            rows.sort_unstable();
            let sub = sample.select_rows(&rows)?;
            let rep_cfg = KnnConfig { seed: child_seed(cfg.seed, r as u64), ..*cfg };
            match estimate_target_shapley_knn(&sub, event, &rep_cfg) {
                Ok(e) => Ok(Some(e.effects)),
                Err(Error::DegenerateProbability { .. }) => Ok(None),
                Err(e) => Err(e),
            }
        })
        .collect();
    let mut ok = Vec::new();
    let mut failed = 0;
    for r in results {
        match r? {
            Some(e) => ok.push(e),
            None => failed += 1,
        }
    }
    if ok.len() < 2 {
        return Err(Error::DegenerateProbability { probability: f64::NAN, threshold: event.threshold() });
    }
    let d = sample.dim();
    let mut lower = Vec::with_capacity(d);
    let mut upper = Vec::with_capacity(d);
    let mut mean = Vec::with_capacity(d);
    for j in 0..d {
        let mut v: Vec<f64> = ok.iter().map(|e| e[j]).collect();
        v.sort_by(|a, b| a.total_cmp(b));
        lower.push(quantile(&v, 0.025));
        upper.push(quantile(&v, 0.975));
        mean.push(v.iter().sum::<f64>() / v.len() as f64);
    }
    Ok(ConfidenceIntervals { lower, upper, mean, successful: ok.len(), failed, subsample_size: m })
}
