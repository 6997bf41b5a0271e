mod common;

use common::shapley_by_permutations;
use proptest::prelude::*;
use tshap::shapley::{aggregate_permutation_table, shapley_exact, verify_axioms, PermutationPlan};
use tshap::CostTable;

fn table_strategy(max_d: usize) -> impl Strategy<Value = CostTable> {
    (1..=max_d).prop_flat_map(|d| {
        prop::collection::vec(-5.0f64..5.0, 1 << d).prop_map(move |v| CostTable::from_values(d, &v).unwrap())
    })
}

fn values(t: &CostTable) -> Vec<f64> {
    t.iter().map(|(_, v)| v.unwrap()).collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn exact_matches_plain_permutation_loop(t in table_strategy(5)) {
        let v = values(&t);
        let want = shapley_by_permutations(t.dim(), &|m| v[m as usize]);
        let got = shapley_exact(&t).unwrap();
        for (g, w) in got.iter().zip(&want) {
            prop_assert!((g - w).abs() < 1e-12);
        }
    }

    #[test]
    fn exhaustive_permutations_equal_exact(t in table_strategy(5)) {
        let a = shapley_exact(&t).unwrap();
        let b = aggregate_permutation_table(&t, &PermutationPlan::exhaustive()).unwrap().effects;
        for (x, y) in a.iter().zip(&b) {
            prop_assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn sampled_permutations_telescope(t in table_strategy(6), m in 1usize..20, seed in any::<u64>()) {
        let v = values(&t);
        let e = aggregate_permutation_table(&t, &PermutationPlan::sampled(m, seed)).unwrap();
        let total = v[v.len() - 1] - v[0];
        prop_assert!((e.sum() - total).abs() < 1e-12);
    }

    #[test]
    fn axioms_hold(t in table_strategy(5), u in table_strategy(5)) {
        prop_assume!(t.dim() == u.dim());
        let e = shapley_exact(&t).unwrap();
        let r = verify_axioms(&t, &e, 1e-10, Some(&u)).unwrap();
        prop_assert!(r.all_passed(), "{r:?}");
    }

    #[test]
    fn planted_dummy_and_symmetry(w in prop::collection::vec(0.0f64..3.0, 4)) {
        // val(A) = g(w restricted to {0, 1, 2} and A), input 3 never matters,
        // and inputs 0 and 1 share the weight w[0]
        let d = 4;
        let weight = [w[0], w[0], w[2], 0.0];
        let vals: Vec<f64> = (0..1u64 << d)
            .map(|m| {
                let s: f64 = (0..d).filter(|j| m >> j & 1 == 1).map(|j| weight[j]).sum();
                s * s
            })
            .collect();
        let t = CostTable::from_values(d, &vals).unwrap();
        let e = shapley_exact(&t).unwrap();
        prop_assert!(e[3].abs() < 1e-12);
        prop_assert!((e[0] - e[1]).abs() < 1e-12);
    }

    #[test]
    fn linearity(t in table_strategy(4), c in -3.0f64..3.0) {
        let scaled = t.map(|v| c * v);
        let a = shapley_exact(&t).unwrap();
        let b = shapley_exact(&scaled).unwrap();
        for (x, y) in a.iter().zip(&b) {
            prop_assert!((c * x - y).abs() < 1e-11);
        }
    }
}

#[test]
fn sampled_permutations_converge() {
    let d = 4;
    let vals: Vec<f64> = (0..1u64 << d).map(|m| (m as f64).sqrt() + (m.count_ones() as f64).powi(2)).collect();
    let t = CostTable::from_values(d, &vals).unwrap();
    let exact = shapley_exact(&t).unwrap();
    let e = aggregate_permutation_table(&t, &PermutationPlan::sampled(20_000, 3)).unwrap().effects;
    for (a, b) in exact.iter().zip(&e) {
        assert!((a - b).abs() < 0.05, "{exact:?} vs {e:?}");
    }
}

#[test]
fn exhaustive_rejects_large_d() {
    let t = CostTable::from_values(9, &vec![0.0; 512]).unwrap();
    assert!(aggregate_permutation_table(&t, &PermutationPlan::exhaustive()).is_err());
}
