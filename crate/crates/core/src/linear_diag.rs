//! Linear-regression importance measures: R², SRC, PCC, SPCC and LMG.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::sample::{mean_sd, SampleSet};
use crate::shapley::shapley_exact;
use crate::subset::{CostTable, SubsetIndex};

/// Relative threshold on the QR diagonal below which a design is rank deficient.
const RANK_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OlsFit {
    pub intercept: f64,
    pub coefficients: Vec<f64>,
    pub residual_variance: f64,
    pub r_squared: f64,
    #[serde(skip)]
    pub fitted: Vec<f64>,
    /// The design was rank deficient and a minimum-norm solution was used.
    pub rank_deficient: bool,
}

impl OlsFit {
    pub fn residuals<'a>(&'a self, y: &'a [f64]) -> impl Iterator<Item = f64> + 'a {
        y.iter().zip(&self.fitted).map(|(a, b)| a - b)
    }
}

fn output(sample: &SampleSet) -> Result<&[f64]> {
    sample.output().ok_or_else(|| Error::InvalidInput("sample has no output column".into()))
}

/// Least squares of `y` on the given columns plus an intercept.
pub fn ols_columns(cols: &[&[f64]], y: &[f64]) -> Result<OlsFit> {
    let n = y.len();
    let k = cols.len();
    if cols.iter().any(|c| c.len() != n) {
        return Err(Error::InvalidInput("regressor length differs from output length".into()));
    }
    if n <= k + 1 {
        return Err(Error::InvalidInput(format!("{n} observations for {k} regressors")));
    }
    let (ymean, ysd) = mean_sd(y);
    let sst = ysd * ysd * n as f64;
    if k == 0 {
        return Ok(OlsFit {
            intercept: ymean,
            coefficients: Vec::new(),
            residual_variance: sst / (n - 1) as f64,
            r_squared: 0.0,
            fitted: vec![ymean; n],
            rank_deficient: false,
        });
    }
    let stats: Vec<(f64, f64)> = cols.iter().map(|c| mean_sd(c)).collect();
    // centred and scaled to unit norm so the rank test is unit-free
    let scales: Vec<f64> = stats.iter().map(|&(_, sd)| sd * (n as f64).sqrt()).collect();
    let x = DMatrix::from_fn(n, k, |i, j| {
        if scales[j] > 0.0 {
            (cols[j][i] - stats[j].0) / scales[j]
        } else {
            0.0
        }
    });
    let yc = DVector::from_iterator(n, y.iter().map(|v| v - ymean));
    let qr = x.clone().qr();
    let diag = qr.r().diagonal().map(f64::abs);
    let rank_deficient = diag.iter().any(|&v| v <= RANK_TOL) || scales.contains(&0.0);
    let b = if rank_deficient {
        x.clone()
            .svd(true, true)
            .solve(&yc, RANK_TOL)
            .map_err(|e| Error::Singular(e.to_string()))?
    } else {
        let qty = qr.q().tr_mul(&yc);
        qr.r()
            .solve_upper_triangular(&qty)
            .ok_or_else(|| Error::Singular("least-squares system".into()))?
    };
    let coefficients: Vec<f64> =
        (0..k).map(|j| if scales[j] > 0.0 { b[j] / scales[j] } else { 0.0 }).collect();
    let intercept = ymean - coefficients.iter().zip(&stats).map(|(c, s)| c * s.0).sum::<f64>();
    let fitted_c = &x * &b;
    let fitted: Vec<f64> = fitted_c.iter().map(|v| v + ymean).collect();
    let sse: f64 = yc.iter().zip(fitted_c.iter()).map(|(a, b)| (a - b) * (a - b)).sum();
    let r_squared = if sst > 0.0 { (1.0 - sse / sst).clamp(0.0, 1.0) } else { 0.0 };
    Ok(OlsFit {
        intercept,
        coefficients,
        residual_variance: sse / (n - k - 1) as f64,
        r_squared,
        fitted,
        rank_deficient,
    })
}

/// OLS of the output on every input column.
pub fn ols(sample: &SampleSet) -> Result<OlsFit> {
    let cols: Vec<&[f64]> = (0..sample.dim()).map(|j| sample.column(j)).collect();
    ols_columns(&cols, output(sample)?)
}

fn fit_subset(sample: &SampleSet, a: SubsetIndex) -> Result<OlsFit> {
    let cols: Vec<&[f64]> = a.iter().map(|j| sample.column(j)).collect();
    ols_columns(&cols, output(sample)?)
}

/// `R²` of the regression on `X_A`; zero for `A = ∅`.
pub fn r_squared(sample: &SampleSet, a: SubsetIndex) -> Result<f64> {
    Ok(fit_subset(sample, a)?.r_squared)
}

/// Standardized regression coefficients `β_j sd(X_j) / sd(Y)`.
pub fn src(fit: &OlsFit, sample: &SampleSet) -> Result<Vec<f64>> {
    let (_, ysd) = mean_sd(output(sample)?);
    if ysd == 0.0 {
        return Err(Error::ZeroVariance);
    }
    Ok(fit
        .coefficients
        .iter()
        .enumerate()
        .map(|(j, b)| b * mean_sd(sample.column(j)).1 / ysd)
        .collect())
}

fn correlation(a: &[f64], b: &[f64]) -> f64 {
    let (ma, sa) = mean_sd(a);
    let (mb, sb) = mean_sd(b);
    if sa == 0.0 || sb == 0.0 {
        return 0.0;
    }
    let cov = a.iter().zip(b).map(|(x, y)| (x - ma) * (y - mb)).sum::<f64>() / a.len() as f64;
    (cov / (sa * sb)).clamp(-1.0, 1.0)
}

/// Residual of column `j` regressed on the other inputs, erroring when
/// those inputs are collinear.
fn residualize(sample: &SampleSet, j: usize, target: &[f64]) -> Result<Vec<f64>> {
    let others: Vec<&[f64]> = (0..sample.dim()).filter(|&c| c != j).map(|c| sample.column(c)).collect();
    let fit = ols_columns(&others, target)?;
    if fit.rank_deficient {
        return Err(Error::Collinear(format!("inputs other than {} are collinear", sample.names()[j])));
    }
    Ok(fit.residuals(target).collect())
}

fn check_input(sample: &SampleSet, j: usize) -> Result<()> {
    if j >= sample.dim() {
        return Err(Error::InvalidInput(format!("input {j} out of range")));
    }
    if mean_sd(output(sample)?).1 == 0.0 {
        return Err(Error::ZeroVariance);
    }
    Ok(())
}

/// Part of `X_j` not explained by the other inputs.
fn input_residual(sample: &SampleSet, j: usize) -> Result<Vec<f64>> {
    let x = sample.column(j);
    let xr = residualize(sample, j, x)?;
    let sd = mean_sd(x).1;
    if sd == 0.0 || mean_sd(&xr).1 <= RANK_TOL * sd {
        return Err(Error::Collinear(format!(
            "{} is a linear combination of the other inputs",
            sample.names()[j]
        )));
    }
    Ok(xr)
}

/// Partial correlation of `X_j` and `Y` given the other inputs.
pub fn pcc(sample: &SampleSet, j: usize) -> Result<f64> {
    check_input(sample, j)?;
    let y = output(sample)?;
    let xr = input_residual(sample, j)?;
    let yr = residualize(sample, j, y)?;
    Ok(correlation(&xr, &yr))
}

/// Semi-partial correlation: `Y` against `X_j` with the other inputs removed from `X_j`.
pub fn spcc(sample: &SampleSet, j: usize) -> Result<f64> {
    check_input(sample, j)?;
    let xr = input_residual(sample, j)?;
    Ok(correlation(&xr, output(sample)?))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LmgResult {
    pub effects: Vec<f64>,
    pub r_squared: f64,
    /// Subsets whose regression was rank deficient.
    pub rank_deficient_subsets: Vec<String>,
}

/// Shapley values of `A -> R²(A)`.
pub fn lmg(sample: &SampleSet) -> Result<LmgResult> {
    use rayon::prelude::*;
    let d = sample.dim();
    let subsets = crate::subset::enumerate_subsets(d)?;
    let fits: Vec<(SubsetIndex, f64, bool)> = subsets
        .par_iter()
        .map(|&a| fit_subset(sample, a).map(|f| (a, f.r_squared, f.rank_deficient)))
        .collect::<Result<_>>()?;
    let mut table = CostTable::new(d)?;
    let mut flagged = Vec::new();
    for (a, r2, bad) in fits {
        table.set(a, r2);
        if bad {
            flagged.push(a.to_string());
        }
    }
    let full = table.get(SubsetIndex::full(d)?).expect("table is complete");
    Ok(LmgResult { effects: shapley_exact(&table)?, r_squared: full, rank_deficient_subsets: flagged })
}

/// All diagnostics at once.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LinearDiagnostics {
    pub names: Vec<String>,
    pub fit: OlsFit,
    pub src: Vec<f64>,
    /// `None` for inputs that are linear combinations of the others.
    pub pcc: Vec<Option<f64>>,
    pub spcc: Vec<Option<f64>>,
    pub lmg: LmgResult,
}

fn unless_collinear(r: Result<f64>) -> Result<Option<f64>> {
    match r {
        Ok(v) => Ok(Some(v)),
        Err(Error::Collinear(_)) => Ok(None),
        Err(e) => Err(e),
    }
}

pub fn diagnose(sample: &SampleSet) -> Result<LinearDiagnostics> {
    let fit = ols(sample)?;
    let src = src(&fit, sample)?;
    let d = sample.dim();
    let pcc = (0..d).map(|j| unless_collinear(pcc(sample, j))).collect::<Result<_>>()?;
    let spcc = (0..d).map(|j| unless_collinear(spcc(sample, j))).collect::<Result<_>>()?;
    let lmg = lmg(sample)?;
    Ok(LinearDiagnostics { names: sample.names().to_vec(), fit, src, pcc, spcc, lmg })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{stream, Purpose};
    use rand::Rng;
    use rand_distr::StandardNormal;

    fn planted(n: usize, beta: [f64; 2], r: f64, noise: f64, seed: u64) -> SampleSet {
        let mut rng = stream(seed, Purpose::Dataset, 0, 0);
        let mut rows = Vec::with_capacity(n);
        let mut y = Vec::with_capacity(n);
        for _ in 0..n {
            let z1: f64 = rng.sample(StandardNormal);
            let z2: f64 = rng.sample(StandardNormal);
            let e: f64 = rng.sample(StandardNormal);
            let x1 = z1;
            let x2 = r * z1 + (1.0 - r * r).sqrt() * z2;
            rows.push(vec![x1, x2]);
            y.push(beta[0] * x1 + beta[1] * x2 + noise * e);
        }
        SampleSet::from_rows(&rows, Some(y)).unwrap()
    }

    #[test]
    fn exact_fit_recovers_coefficients() {
        let rows: Vec<Vec<f64>> = (0..20).map(|i| vec![i as f64, ((i * 7) % 5) as f64]).collect();
        let y: Vec<f64> = rows.iter().map(|r| 1.5 + 2.0 * r[0] - 3.0 * r[1]).collect();
        let s = SampleSet::from_rows(&rows, Some(y)).unwrap();
        let fit = ols(&s).unwrap();
        assert!((fit.intercept - 1.5).abs() < 1e-10);
        assert!((fit.coefficients[0] - 2.0).abs() < 1e-10);
        assert!((fit.coefficients[1] + 3.0).abs() < 1e-10);
        assert!((fit.r_squared - 1.0).abs() < 1e-12);
    }

    #[test]
    fn residuals_are_orthogonal_to_regressors() {
        let s = planted(2000, [1.0, -0.5], 0.4, 1.0, 1);
        let fit = ols(&s).unwrap();
        let res: Vec<f64> = fit.residuals(s.output().unwrap()).collect();
        for j in 0..2 {
            let dot: f64 = res.iter().zip(s.column(j)).map(|(a, b)| a * b).sum();
            assert!(dot.abs() < 1e-8, "{dot}");
        }
        assert!(res.iter().sum::<f64>().abs() < 1e-8);
    }

    #[test]
    fn spcc_matches_nested_r_squared_difference() {
        let s = planted(3000, [1.0, 2.0], 0.5, 1.5, 2);
        let full = r_squared(&s, SubsetIndex::full(2).unwrap()).unwrap();
        for j in 0..2 {
            let reduced = r_squared(&s, SubsetIndex::full(2).unwrap().without(j)).unwrap();
            let sp = spcc(&s, j).unwrap();
            assert!((sp * sp - (full - reduced)).abs() < 1e-8);
        }
    }

    #[test]
    fn negative_effect_has_negative_src() {
        let s = planted(500, [-2.0, 0.0], 0.0, 0.3, 3);
        let fit = ols(&s).unwrap();
        assert!(src(&fit, &s).unwrap()[0] < 0.0);
    }

    #[test]
    fn duplicated_input_is_collinear() {
        let rows: Vec<Vec<f64>> = (0..30).map(|i| vec![i as f64, i as f64, (i % 4) as f64]).collect();
        let y: Vec<f64> = rows.iter().map(|r| r[0] + r[2]).collect();
        let s = SampleSet::from_rows(&rows, Some(y)).unwrap();
        assert!(matches!(pcc(&s, 2), Err(Error::Collinear(_))));
        let l = lmg(&s).unwrap();
        assert!(!l.rank_deficient_subsets.is_empty());
        assert!((l.effects.iter().sum::<f64>() - l.r_squared).abs() < 1e-10);
    }

    #[test]
    fn lmg_matches_ordering_average() {
        let s = planted(2000, [1.0, 0.7], 0.3, 1.0, 4);
        let full = r_squared(&s, SubsetIndex::full(2).unwrap()).unwrap();
        let r1 = r_squared(&s, SubsetIndex::from_indices(&[0], 2).unwrap()).unwrap();
        let r2 = r_squared(&s, SubsetIndex::from_indices(&[1], 2).unwrap()).unwrap();
        let l = lmg(&s).unwrap();
        assert!((l.effects[0] - 0.5 * (r1 + full - r2)).abs() < 1e-10);
        assert!((l.effects[1] - 0.5 * (r2 + full - r1)).abs() < 1e-10);
    }
}
