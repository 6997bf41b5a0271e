//! Shapley aggregation of a cost function over input subsets.
//!
//! Two routes are provided: the weighted sum over all subsets not containing
//! a player, and the average of marginal contributions over permutations
//! (all `d!` of them, or `m` sampled uniformly with replacement). With every
//! permutation the two routes coincide.

use std::collections::HashMap;

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::effects::{EffectsVector, EstimatorKind};
use crate::error::{Error, Result};
use crate::rng::{stream, Purpose};
use crate::subset::{shapley_weight, CostTable, SubsetIndex, MAX_DIM};

/// Largest dimension for which all `d!` permutations may be enumerated.
pub const EXHAUSTIVE_LIMIT: usize = 8;

/// Compensated (Neumaier) summation.
#[derive(Debug, Default, Clone, Copy)]
pub(crate) struct KahanSum {
    sum: f64,
    c: f64,
}

impl KahanSum {
    #[inline]
    pub(crate) fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.c += (self.sum - t) + x;
        } else {
            self.c += (x - t) + self.sum;
        }
        self.sum = t;
    }

    #[inline]
    pub(crate) fn value(&self) -> f64 {
        self.sum + self.c
    }
}

/// Exact Shapley values of a complete cost table.
pub fn shapley_exact(costs: &CostTable) -> Result<Vec<f64>> {
    costs.check_complete()?;
    let d = costs.dim();
    let weights: Vec<f64> = (0..d).map(|k| shapley_weight(d, k)).collect::<Result<_>>()?;
    let full = (1u64 << d) - 1;
    let effects = (0..d)
        .into_par_iter()
        .map(|j| {
            let bit = 1u64 << j;
            let mut acc = KahanSum::default();
            for mask in 0..=full {
                if mask & bit != 0 {
                    continue;
                }
                let with = costs.get_mask(mask | bit).unwrap();
                let without = costs.get_mask(mask).unwrap();
                acc.add(weights[mask.count_ones() as usize] * (with - without));
            }
            acc.value()
        })
        .collect();
    Ok(effects)
}

/// [`shapley_exact`] wrapped as an [`EffectsVector`].
pub fn aggregate_exact(costs: &CostTable) -> Result<EffectsVector> {
    Ok(EffectsVector::new(shapley_exact(costs)?, EstimatorKind::Table, 0))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "mode", content = "m")]
pub enum PermutationMode {
    /// Every permutation of `{1..d}`; only for `d <= 8`.
    Exhaustive,
    /// `m` permutations drawn uniformly with replacement.
    Sampled(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PermutationPlan {
    pub mode: PermutationMode,
    pub seed: u64,
}

impl PermutationPlan {
    pub fn exhaustive() -> Self {
        Self { mode: PermutationMode::Exhaustive, seed: 0 }
    }

    pub fn sampled(m: usize, seed: u64) -> Self {
        Self { mode: PermutationMode::Sampled(m), seed }
    }

    pub fn validate(&self, d: usize) -> Result<()> {
        if d == 0 || d > MAX_DIM {
            return Err(Error::DimensionOutOfRange(d));
        }
        match self.mode {
            PermutationMode::Sampled(0) => Err(Error::InvalidPlan("m must be at least 1".into())),
            PermutationMode::Exhaustive if d > EXHAUSTIVE_LIMIT => Err(Error::InvalidPlan(format!(
                "exhaustive permutations need d <= {EXHAUSTIVE_LIMIT}, got d = {d}"
            ))),
            _ => Ok(()),
        }
    }

    /// The permutations this plan visits, in a fixed order.
    pub fn permutations(&self, d: usize) -> Result<Vec<Vec<usize>>> {
        self.validate(d)?;
        Ok(match self.mode {
            PermutationMode::Exhaustive => all_permutations(d),
            PermutationMode::Sampled(m) => (0..m)
                .map(|k| {
                    let mut p: Vec<usize> = (0..d).collect();
                    p.shuffle(&mut stream(self.seed, Purpose::Permutations, k as u64, 0));
                    p
                })
                .collect(),
        })
    }
}

fn all_permutations(d: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut p: Vec<usize> = (0..d).collect();
    loop {
        out.push(p.clone());
        // next lexicographic permutation
        let Some(i) = (0..d.saturating_sub(1)).rev().find(|&i| p[i] < p[i + 1]) else {
            break;
        };
        let k = (i + 1..d).rev().find(|&k| p[k] > p[i]).unwrap();
        p.swap(i, k);
        p[i + 1..].reverse();
    }
    out
}

/// Result of a permutation-based aggregation.
#[derive(Debug, Clone, PartialEq)]
pub struct PermutationOutcome {
    pub effects: Vec<f64>,
    pub permutations: usize,
    /// Distinct subsets whose cost was evaluated, including `∅` and the full set.
    pub distinct_subsets: Vec<SubsetIndex>,
    /// Proper, non-empty prefixes visited counting repeats (`m * (d - 1)`).
    pub proper_prefix_visits: usize,
}

/// Shapley values as the average marginal contribution along permutations.
///
/// Every distinct prefix is evaluated once; evaluations run in parallel and
/// the per-permutation increments telescope, so the effects always sum to
/// `val(full) - val(∅)`.
pub fn aggregate_permutation<F>(cost_eval: F, d: usize, plan: &PermutationPlan) -> Result<PermutationOutcome>
where
    F: Fn(SubsetIndex) -> Result<f64> + Sync,
{
    let perms = plan.permutations(d)?;
    let mut needed: Vec<u64> = Vec::new();
    for p in &perms {
        let mut mask = 0u64;
        needed.push(mask);
        for &j in p {
            mask |= 1 << j;
            needed.push(mask);
        }
    }
    needed.sort_by_key(|m| (m.count_ones(), *m));
    needed.dedup();
    let subsets: Vec<SubsetIndex> =
        needed.iter().map(|&m| SubsetIndex::from_mask(m, d)).collect::<Result<_>>()?;
    let values: Vec<f64> = subsets.par_iter().map(|&s| cost_eval(s)).collect::<Result<_>>()?;
    let memo: HashMap<u64, f64> = needed.iter().copied().zip(values).collect();

    let mut acc = vec![KahanSum::default(); d];
    for p in &perms {
        let mut mask = 0u64;
        let mut prev = memo[&mask];
        for &j in p {
            mask |= 1 << j;
            let cur = memo[&mask];
            acc[j].add(cur - prev);
            prev = cur;
        }
    }
    let m = perms.len() as f64;
    Ok(PermutationOutcome {
        effects: acc.iter().map(|a| a.value() / m).collect(),
        permutations: perms.len(),
        distinct_subsets: subsets,
        proper_prefix_visits: perms.len() * d.saturating_sub(1),
    })
}

/// Permutation aggregation of a complete (or sufficiently filled) table.
pub fn aggregate_permutation_table(costs: &CostTable, plan: &PermutationPlan) -> Result<EffectsVector> {
    let out = aggregate_permutation(
        |s| {
            costs.get(s).ok_or(Error::IncompleteCostTable {
                missing: costs.missing(),
                total: 1 << costs.dim(),
            })
        },
        costs.dim(),
        plan,
    )?;
    Ok(EffectsVector::new(out.effects, EstimatorKind::Table, plan.seed))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AxiomCheck {
    pub passed: bool,
    /// Largest violation observed (0 when nothing was checked).
    pub max_violation: f64,
    /// Number of instances checked (pairs for symmetry, players for dummy).
    pub checked: usize,
}

impl AxiomCheck {
    fn from_violations(violations: impl Iterator<Item = f64>, tol: f64) -> Self {
        let mut max_violation = 0.0f64;
        let mut checked = 0;
        for v in violations {
            checked += 1;
            max_violation = max_violation.max(v);
        }
        Self { passed: max_violation <= tol, max_violation, checked }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AxiomReport {
    pub efficiency: AxiomCheck,
    pub symmetry: AxiomCheck,
    pub dummy: AxiomCheck,
    pub linearity: Option<AxiomCheck>,
}

impl AxiomReport {
    pub fn all_passed(&self) -> bool {
        self.efficiency.passed
            && self.symmetry.passed
            && self.dummy.passed
            && self.linearity.as_ref().is_none_or(|c| c.passed)
    }
}

/// Checks efficiency, symmetry (on detected symmetric pairs), dummy (on
/// detected dummy players) and, when a second table is given, additivity.
pub fn verify_axioms(
    costs: &CostTable,
    effects: &[f64],
    tol: f64,
    other: Option<&CostTable>,
) -> Result<AxiomReport> {
    costs.check_complete()?;
    let d = costs.dim();
    if effects.len() != d {
        return Err(Error::InvalidInput(format!("{} effects for d = {d}", effects.len())));
    }
    let full = (1u64 << d) - 1;
    let val = |m: u64| costs.get_mask(m).unwrap();

    let total = val(full) - val(0);
    let efficiency =
        AxiomCheck::from_violations(std::iter::once((effects.iter().sum::<f64>() - total).abs()), tol);

    let mut sym = Vec::new();
    for i in 0..d {
        for j in i + 1..d {
            let (bi, bj) = (1u64 << i, 1u64 << j);
            let symmetric = (0..=full)
                .filter(|m| m & (bi | bj) == 0)
                .all(|m| (val(m | bi) - val(m | bj)).abs() <= tol);
            if symmetric {
                sym.push((effects[i] - effects[j]).abs());
            }
        }
    }
    let symmetry = AxiomCheck::from_violations(sym.into_iter(), tol);

    let mut dum = Vec::new();
    for i in 0..d {
        let bi = 1u64 << i;
        let is_dummy = (0..=full).filter(|m| m & bi == 0).all(|m| (val(m | bi) - val(m)).abs() <= tol);
        if is_dummy {
            dum.push(effects[i].abs());
        }
    }
    let dummy = AxiomCheck::from_violations(dum.into_iter(), tol);

    let linearity = match other {
        None => None,
        Some(o) => {
            let sum_table = costs.zip_with(o, |a, b| a + b)?;
            let lhs = shapley_exact(&sum_table)?;
            let a = shapley_exact(costs)?;
            let b = shapley_exact(o)?;
            Some(AxiomCheck::from_violations(
                (0..d).map(|j| (lhs[j] - a[j] - b[j]).abs()),
                tol,
            ))
        }
    };

    Ok(AxiomReport { efficiency, symmetry, dummy, linearity })
}

/// How an estimator turns subset costs into effects.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind", content = "permutations")]
pub enum Aggregation {
    /// Weighted sum over the full power set.
    #[default]
    Exact,
    Permutations(PermutationMode),
}

/// Effects plus the bookkeeping estimators report.
#[derive(Debug, Clone, PartialEq)]
pub struct AggregationOutcome {
    pub effects: Vec<f64>,
    /// Every subset whose cost was evaluated, including `∅` and the full set.
    pub evaluated: Vec<SubsetIndex>,
    pub permutations: Option<usize>,
    /// Cost table when every subset was evaluated.
    pub costs: Option<CostTable>,
}

impl AggregationOutcome {
    /// Evaluated subsets other than `∅` and the full set.
    pub fn proper_subsets(&self) -> usize {
        self.evaluated.iter().filter(|s| !s.is_empty() && !s.is_full()).count()
    }
}

/// Evaluates `cost_eval` where needed and aggregates. Evaluations run on the
/// rayon pool when `parallel` is set and sequentially otherwise; results do
/// not depend on the choice as long as `cost_eval` is deterministic.
pub fn aggregate<F>(cost_eval: F, d: usize, aggregation: Aggregation, seed: u64, parallel: bool) -> Result<AggregationOutcome>
where
    F: Fn(SubsetIndex) -> Result<f64> + Sync + Send,
{
    let run = || match aggregation {
        Aggregation::Exact => {
            let costs = CostTable::par_from_fn(d, &cost_eval)?;
            let effects = shapley_exact(&costs)?;
            Ok(AggregationOutcome {
                effects,
                evaluated: crate::subset::enumerate_subsets(d)?,
                permutations: None,
                costs: Some(costs),
            })
        }
        Aggregation::Permutations(mode) => {
            let out = aggregate_permutation(&cost_eval, d, &PermutationPlan { mode, seed })?;
            Ok(AggregationOutcome {
                effects: out.effects,
                evaluated: out.distinct_subsets,
                permutations: Some(out.permutations),
                costs: None,
            })
        }
    };
    if parallel {
        run()
    } else {
        rayon::ThreadPoolBuilder::new()
            .num_threads(1)
            .build()
            .map_err(|e| Error::InvalidConfig(format!("thread pool: {e}")))?
            .install(run)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::subset::enumerate_subsets;

    fn two_player() -> CostTable {
        CostTable::from_values(2, &[0.0, 0.5, 0.3, 1.0]).unwrap()
    }

    #[test]
    fn two_player_hand_example() {
        // Sh1 = 1/2 (0.5 - 0) + 1/2 (1.0 - 0.3)
        let e = shapley_exact(&two_player()).unwrap();
        assert!((e[0] - 0.6).abs() < 1e-15);
        assert!((e[1] - 0.4).abs() < 1e-15);
    }

    #[test]
    fn symmetric_and_dummy_games() {
        let t = CostTable::from_fn(3, |s| Ok(s.len() as f64 / 3.0)).unwrap();
        for v in shapley_exact(&t).unwrap() {
            assert!((v - 1.0 / 3.0).abs() < 1e-15);
        }
        // player 2 (index 1) never changes the value
        let t = CostTable::from_fn(3, |s| Ok(s.without(1).mask() as f64 * 0.1)).unwrap();
        assert!(shapley_exact(&t).unwrap()[1].abs() < 1e-15);
    }

    #[test]
    fn single_permutation_telescopes() {
        let plan = PermutationPlan::sampled(1, 0);
        let perm = plan.permutations(2).unwrap();
        let t = two_player();
        let out = aggregate_permutation_table(&t, &plan).unwrap();
        // increments along the one sampled order
        let expected = if perm[0] == vec![0, 1] { [0.5, 0.5] } else { [0.7, 0.3] };
        assert!((out[0] - expected[0]).abs() < 1e-15);
        assert!((out[1] - expected[1]).abs() < 1e-15);
    }

    #[test]
    fn exhaustive_two_player_matches_hand_value() {
        let t = two_player();
        let out = aggregate_permutation(
            |s| Ok(t.get(s).unwrap()),
            2,
            &PermutationPlan::exhaustive(),
        )
        .unwrap();
        assert_eq!(out.permutations, 2);
        assert!((out.effects[0] - 0.6).abs() < 1e-15);
    }

    #[test]
    fn exhaustive_counts() {
        assert_eq!(all_permutations(1).len(), 1);
        assert_eq!(all_permutations(4).len(), 24);
        assert_eq!(all_permutations(5).len(), 120);
        assert!(PermutationPlan::exhaustive().validate(9).is_err());
        assert!(PermutationPlan::sampled(0, 1).validate(3).is_err());
    }

    #[test]
    fn perturbed_effects_fail_efficiency() {
        let t = two_player();
        let mut e = shapley_exact(&t).unwrap();
        assert!(verify_axioms(&t, &e, 1e-6, None).unwrap().all_passed());
        e[0] += 0.01;
        let report = verify_axioms(&t, &e, 1e-6, None).unwrap();
        assert!(!report.efficiency.passed);
    }

    #[test]
    fn incomplete_table_is_rejected() {
        let t = CostTable::new(2).unwrap();
        assert!(matches!(shapley_exact(&t), Err(Error::IncompleteCostTable { .. })));
    }

    #[test]
    fn additive_cost_is_recovered_by_any_plan() {
        let c = [0.2, -0.1, 0.7, 0.05];
        let t = CostTable::from_fn(4, |s| Ok(s.iter().map(|i| c[i]).sum())).unwrap();
        for m in [1, 3, 17] {
            let e = aggregate_permutation_table(&t, &PermutationPlan::sampled(m, 9)).unwrap();
            for j in 0..4 {
                assert!((e[j] - c[j]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn memo_evaluates_each_subset_once() {
        use std::sync::atomic::{AtomicUsize, Ordering};
        let calls = AtomicUsize::new(0);
        let out = aggregate_permutation(
            |s| {
                calls.fetch_add(1, Ordering::Relaxed);
                Ok(s.len() as f64)
            },
            4,
            &PermutationPlan::exhaustive(),
        )
        .unwrap();
        assert_eq!(calls.load(Ordering::Relaxed), 16);
        assert_eq!(out.distinct_subsets.len(), 16);
        assert_eq!(out.proper_prefix_visits, 24 * 3);
        assert_eq!(enumerate_subsets(4).unwrap(), out.distinct_subsets);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn table(d: usize) -> impl Strategy<Value = CostTable> {
            proptest::collection::vec(-1.0f64..1.0, 1 << d)
                .prop_map(move |v| CostTable::from_values(d, &v).unwrap())
        }

        proptest! {
            #[test]
            fn exhaustive_matches_exact(t in (1usize..=5).prop_flat_map(table)) {
                let a = shapley_exact(&t).unwrap();
                let b = aggregate_permutation_table(&t, &PermutationPlan::exhaustive()).unwrap();
                for j in 0..t.dim() {
                    prop_assert!((a[j] - b[j]).abs() < 1e-12);
                }
            }

            #[test]
            fn sampled_permutations_telescope(t in (2usize..=6).prop_flat_map(table), m in 1usize..10, seed in any::<u64>()) {
                let e = aggregate_permutation_table(&t, &PermutationPlan::sampled(m, seed)).unwrap();
                let full = SubsetIndex::full(t.dim()).unwrap();
                let total = t.get(full).unwrap() - t.get(SubsetIndex::empty(t.dim()).unwrap()).unwrap();
                prop_assert!((e.sum() - total).abs() < 1e-12);
            }

            #[test]
            fn aggregation_is_linear(a in table(4), b in table(4), c in -3.0f64..3.0) {
                let lhs = shapley_exact(&a.zip_with(&b, |x, y| c * x + y).unwrap()).unwrap();
                let sa = shapley_exact(&a).unwrap();
                let sb = shapley_exact(&b).unwrap();
                for j in 0..4 {
                    prop_assert!((lhs[j] - (c * sa[j] + sb[j])).abs() < 1e-12);
                }
                let report = verify_axioms(&a, &sa, 1e-12, Some(&b)).unwrap();
                prop_assert!(report.all_passed());
            }

            #[test]
            fn monotone_cost_gives_nonnegative_effects(inc in proptest::collection::vec(0.0f64..1.0, 1 << 4)) {
                // val(A) = sum of non-negative increments over subsets of A is monotone
                let t = CostTable::from_fn(4, |s| {
                    Ok((0..16u64).filter(|m| m & !s.mask() == 0).map(|m| inc[m as usize]).sum())
                }).unwrap();
                for e in shapley_exact(&t).unwrap() {
                    prop_assert!(e >= -1e-12);
                }
            }
        }
    }
}
