mod common;

use common::{venn_areas, venn_sample};
use tshap::linear_diag::{diagnose, lmg, ols, pcc, r_squared, spcc, src};
use tshap::{Error, SampleSet, SubsetIndex};

#[test]
fn venn_formulas_hold_for_correlated_inputs() {
    let (b1, b2, r, s) = (1.0, 0.7, 0.5, 0.8);
    let data = venn_sample(b1, b2, r, s, 200_000, 1);
    let (a, b, c, e) = venn_areas(b1, b2, r, s);
    let total = a + b + c + e;
    let d = diagnose(&data).unwrap();
    assert!((d.fit.r_squared - (a + b + c) / total).abs() < 0.01);
    assert!((d.pcc[0].unwrap().powi(2) - a / (a + e)).abs() < 0.01);
    assert!((d.pcc[1].unwrap().powi(2) - c / (c + e)).abs() < 0.01);
    assert!((d.spcc[0].unwrap().powi(2) - a / total).abs() < 0.01);
    assert!((d.lmg.effects[0] - (a + b / 2.0) / total).abs() < 0.01);
    assert!((d.lmg.effects[1] - (c + b / 2.0) / total).abs() < 0.01);
    // with correlated inputs SRC² is β²V(X)/V(Y), not (a + b)/total
    assert!((d.src[0].powi(2) - b1 * b1 / total).abs() < 0.01);
}

#[test]
fn venn_src_matches_when_uncorrelated() {
    let (b1, b2, s) = (1.2, -0.5, 1.0);
    let data = venn_sample(b1, b2, 0.0, s, 200_000, 2);
    let (a, b, c, e) = venn_areas(b1, b2, 0.0, s);
    let fit = ols(&data).unwrap();
    let src = src(&fit, &data).unwrap();
    assert!((src[0].powi(2) - (a + b) / (a + b + c + e)).abs() < 0.01);
    assert!(src[1] < 0.0);
    // independent inputs: SPCC² = SRC²
    assert!((spcc(&data, 0).unwrap().powi(2) - src[0].powi(2)).abs() < 0.01);
}

#[test]
fn spcc_identity_and_lmg_efficiency() {
    let data = venn_sample(0.3, 2.0, -0.4, 0.5, 20_000, 3);
    let full = r_squared(&data, SubsetIndex::full(2).unwrap()).unwrap();
    let without_0 = r_squared(&data, SubsetIndex::from_indices(&[1], 2).unwrap()).unwrap();
    assert!((spcc(&data, 0).unwrap().powi(2) - (full - without_0)).abs() < 1e-8);
    let l = lmg(&data).unwrap();
    assert!((l.effects.iter().sum::<f64>() - full).abs() < 1e-12);
    assert!(l.rank_deficient_subsets.is_empty());
}

#[test]
fn residuals_are_orthogonal_to_regressors() {
    let data = venn_sample(1.0, 1.0, 0.2, 1.0, 5_000, 4);
    let fit = ols(&data).unwrap();
    let res: Vec<f64> = fit.residuals(data.output().unwrap()).collect();
    assert!(res.iter().sum::<f64>().abs() < 1e-8);
    for j in 0..2 {
        let dot: f64 = res.iter().zip(data.column(j)).map(|(r, x)| r * x).sum();
        assert!(dot.abs() < 1e-8, "{dot}");
    }
}

#[test]
fn duplicated_input_is_collinear() {
    let base = venn_sample(1.0, 0.5, 0.0, 1.0, 1_000, 5);
    let x = base.column(0).to_vec();
    let data = SampleSet::new(
        vec![x.clone(), x, base.column(1).to_vec()],
        tshap::sample::default_names(3),
        base.output().map(|o| o.to_vec()),
    )
    .unwrap();
    assert!(matches!(pcc(&data, 0), Err(Error::Collinear(_))));
    assert!(matches!(spcc(&data, 1), Err(Error::Collinear(_))));
    let d = diagnose(&data).unwrap();
    assert!(d.pcc.iter().all(Option::is_none));
    assert!(ols(&data).unwrap().rank_deficient);
    let l = lmg(&data).unwrap();
    assert!(!l.rank_deficient_subsets.is_empty());
    // the duplicated pair splits its share evenly
    assert!((l.effects[0] - l.effects[1]).abs() < 1e-9);
}
