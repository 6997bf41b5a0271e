mod common;

use common::{random_problem, shapley_by_permutations, to_model, upper_orthant, Problem};
use nalgebra::DMatrix;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use tshap::gaussian::{closed_sobol_indices, target_shapley_oracle, target_shapley_oracle_with, OracleCost};
use tshap::models::{correlated_case, exogenous_case, independent_case};

#[test]
fn orthant_reference_limits() {
    // rho = 1 gives P(Z > h); rho = -1 gives 0 for h > 0
    let sf = 1.0 - 0.841_344_746_068_542_9;
    assert!((upper_orthant(1.0, 1.0) - sf).abs() < 1e-9);
    assert!(upper_orthant(0.5, -1.0).abs() < 1e-9);
    // P(Z1 > 0, Z2 > 0) = 1/4 + asin(rho) / (2π)
    let r: f64 = 0.3;
    assert!((upper_orthant(0.0, r) - (0.25 + r.asin() / (2.0 * std::f64::consts::PI))).abs() < 1e-12);
}

#[test]
fn closed_sobol_costs_match_orthant_reference() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..100 {
        let p = random_problem(&mut rng, 4);
        let model = to_model(&p);
        for (a, v) in closed_sobol_indices(&model).unwrap() {
            let want = p.closed_target_sobol(a.mask());
            assert!((v - want).abs() < 1e-7, "mask {:b}: {v} vs {want}", a.mask());
        }
    }
}

#[test]
fn effects_match_permutation_reference() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    for _ in 0..15 {
        let p = random_problem(&mut rng, 4);
        let want = shapley_by_permutations(p.d(), &|m| p.closed_target_sobol(m));
        let got = target_shapley_oracle(&to_model(&p)).unwrap();
        for (g, w) in got.effects.iter().zip(&want) {
            assert!((g - w).abs() < 1e-7, "{:?} vs {want:?}", got.effects);
        }
    }
}

#[test]
fn correlated_case_values() {
    // X2 and X3 are exchangeable; X1 carries less weight once they correlate
    let m = correlated_case(0.6, 3.0).unwrap();
    let e = target_shapley_oracle(&m).unwrap().effects;
    assert!((e[1] - e[2]).abs() < 1e-9);
    assert!(e[0] < e[1]);
    let p = Problem {
        beta0: 0.0,
        beta: vec![1.0; 3],
        mu: vec![0.0; 3],
        sigma: DMatrix::from_row_slice(3, 3, &[1.0, 0.0, 0.0, 0.0, 1.0, 0.6, 0.0, 0.6, 1.0]),
        t: 3.0,
    };
    let want = shapley_by_permutations(3, &|mask| p.closed_target_sobol(mask));
    for (g, w) in e.iter().zip(&want) {
        assert!((g - w).abs() < 1e-7);
    }
}

#[test]
fn independent_case_is_symmetric_for_every_cost() {
    for t in [-1.0, 0.5, 2.5] {
        let m = independent_case(t).unwrap();
        for cost in [OracleCost::ClosedSobol, OracleCost::Residual, OracleCost::L1] {
            for e in target_shapley_oracle_with(&m, cost).unwrap().effects {
                assert!((e - 1.0 / 3.0).abs() < 1e-7, "{cost:?} t={t}");
            }
        }
    }
}

#[test]
fn exogenous_input_gets_nothing_when_uncorrelated() {
    let m = exogenous_case(0.0, 16.0).unwrap();
    let e = target_shapley_oracle(&m).unwrap().effects;
    assert!(e[3].abs() < 1e-8, "{e:?}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    #[test]
    fn duality_and_efficiency(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let model = to_model(&random_problem(&mut rng, 3));
        let s = target_shapley_oracle_with(&model, OracleCost::ClosedSobol).unwrap().effects;
        let e = target_shapley_oracle_with(&model, OracleCost::Residual).unwrap().effects;
        let l1 = target_shapley_oracle_with(&model, OracleCost::L1).unwrap().effects;
        for j in 0..s.len() {
            prop_assert!((s[j] - e[j]).abs() < 1e-6);
            prop_assert!(s[j] >= -1e-8 && l1[j] >= -1e-8);
        }
        prop_assert!((s.iter().sum::<f64>() - 1.0).abs() < 1e-6);
        prop_assert!((l1.iter().sum::<f64>() - 1.0).abs() < 1e-6);
    }

    #[test]
    fn relabelling_inputs_permutes_effects(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let p = random_problem(&mut rng, 3);
        let d = p.d();
        let perm: Vec<usize> = (0..d).rev().collect();
        let q = Problem {
            beta0: p.beta0,
            beta: perm.iter().map(|&i| p.beta[i]).collect(),
            mu: perm.iter().map(|&i| p.mu[i]).collect(),
            sigma: DMatrix::from_fn(d, d, |i, j| p.sigma[(perm[i], perm[j])]),
            t: p.t,
        };
        let a = target_shapley_oracle(&to_model(&p)).unwrap().effects;
        let b = target_shapley_oracle(&to_model(&q)).unwrap().effects;
        for i in 0..d {
            prop_assert!((b[i] - a[perm[i]]).abs() < 1e-8);
        }
    }
}

