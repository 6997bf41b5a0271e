//! Multivariate normal marginals and conditionals by block partition.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::subset::SubsetIndex;

pub(crate) fn submatrix(m: &DMatrix<f64>, rows: &[usize], cols: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(rows.len(), cols.len(), |i, j| m[(rows[i], cols[j])])
}

pub(crate) fn subvector(v: &[f64], idx: &[usize]) -> DVector<f64> {
    DVector::from_iterator(idx.len(), idx.iter().map(|&i| v[i]))
}

/// Lower Cholesky factor, allowing an exactly zero matrix (point mass).
fn cholesky_psd(m: &DMatrix<f64>, what: &str) -> Result<DMatrix<f64>> {
    if m.nrows() == 0 {
        return Ok(m.clone());
    }
    let scale = m.diagonal().iter().fold(0.0f64, |a, &b| a.max(b.abs()));
    if scale == 0.0 {
        return Ok(DMatrix::zeros(m.nrows(), m.ncols()));
    }
    match m.clone().cholesky() {
        Some(c) => Ok(c.l()),
        None => {
            // Schur complements of a full-rank matrix can lose definiteness
            // to rounding when correlations are close to ±1.
            let jitter = DMatrix::identity(m.nrows(), m.ncols()) * (scale * 1e-12);
            (m + jitter)
                .cholesky()
                .map(|c| c.l())
                .ok_or_else(|| Error::Singular(format!("{what} is not positive definite")))
        }
    }
}

/// Mean and covariance of a Gaussian vector, with samplers for the marginal
/// of a subset and for the rest of the vector given that subset.
#[derive(Debug, Clone)]
pub struct Mvn {
    mean: Vec<f64>,
    cov: DMatrix<f64>,
    chol: DMatrix<f64>,
}

impl Mvn {
    pub fn new(mean: Vec<f64>, cov: DMatrix<f64>) -> Result<Self> {
        let d = mean.len();
        if cov.nrows() != d || cov.ncols() != d {
            return Err(Error::InvalidInput(format!(
                "covariance is {}x{}, expected {d}x{d}",
                cov.nrows(),
                cov.ncols()
            )));
        }
        for i in 0..d {
            for j in 0..i {
                let tol = 1e-10 * (cov[(i, i)].abs() + cov[(j, j)].abs()).max(1e-300);
                if (cov[(i, j)] - cov[(j, i)]).abs() > tol {
                    return Err(Error::InvalidInput("covariance is not symmetric".into()));
                }
            }
        }
        if mean.iter().chain(cov.iter()).any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("non-finite mean or covariance".into()));
        }
        let chol = cov
            .clone()
            .cholesky()
            .ok_or_else(|| Error::Singular("covariance is not positive definite".into()))?
            .l();
        Ok(Self { mean, cov, chol })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    pub fn cov(&self) -> &DMatrix<f64> {
        &self.cov
    }

    /// Fills `out` (length `d`) with one joint draw.
    pub fn sample_into<R: Rng + ?Sized>(&self, rng: &mut R, z: &mut [f64], out: &mut [f64]) {
        let d = self.dim();
        for zi in z.iter_mut() {
            *zi = rng.sample(StandardNormal);
        }
        for i in 0..d {
            let mut acc = self.mean[i];
            for k in 0..=i {
                acc += self.chol[(i, k)] * z[k];
            }
            out[i] = acc;
        }
    }

    pub fn marginal(&self, subset: SubsetIndex) -> Result<Mvn> {
        let idx = subset.indices();
        Mvn::new(idx.iter().map(|&i| self.mean[i]).collect(), submatrix(&self.cov, &idx, &idx))
    }

    /// Law of the complement of `given`, conditional on the `given` block.
    pub fn conditional(&self, given: SubsetIndex) -> Result<GaussianConditional> {
        let a = given.indices();
        let b = given.complement().indices();
        let mu_a = subvector(&self.mean, &a);
        let mu_b = subvector(&self.mean, &b);
        if a.is_empty() {
            let cov_bb = self.cov.clone();
            return Ok(GaussianConditional {
                given: a,
                target: b,
                mu_a,
                mu_b,
                gain: DMatrix::zeros(self.dim(), 0),
                chol: cholesky_psd(&cov_bb, "covariance")?,
            });
        }
        let s_aa = submatrix(&self.cov, &a, &a);
        let s_ba = submatrix(&self.cov, &b, &a);
        let s_bb = submatrix(&self.cov, &b, &b);
        let chol_aa = s_aa
            .cholesky()
            .ok_or_else(|| Error::Singular(format!("conditioning block {given} is singular")))?;
        // gain = S_ba S_aa^{-1}, i.e. gain^T = S_aa^{-1} S_ab
        let gain = chol_aa.solve(&s_ba.transpose()).transpose();
        let schur = &s_bb - &gain * s_ba.transpose();
        let schur = (&schur + schur.transpose()) * 0.5;
        Ok(GaussianConditional {
            given: a,
            target: b,
            mu_a,
            mu_b,
            gain,
            chol: cholesky_psd(&schur, "conditional covariance")?,
        })
    }
}

/// `X_B | X_A = x_A ~ N(mu_B + K (x_A - mu_A), S)` with `B` the complement of `A`.
#[derive(Debug, Clone)]
pub struct GaussianConditional {
    pub(crate) given: Vec<usize>,
    pub(crate) target: Vec<usize>,
    mu_a: DVector<f64>,
    mu_b: DVector<f64>,
    gain: DMatrix<f64>,
    chol: DMatrix<f64>,
}

impl GaussianConditional {
    pub fn given(&self) -> &[usize] {
        &self.given
    }

    pub fn target(&self) -> &[usize] {
        &self.target
    }

    pub fn mean(&self, x_given: &[f64]) -> DVector<f64> {
        if self.given.is_empty() {
            return self.mu_b.clone();
        }
        let dx = DVector::from_column_slice(x_given) - &self.mu_a;
        &self.mu_b + &self.gain * dx
    }

    pub fn covariance(&self) -> DMatrix<f64> {
        &self.chol * self.chol.transpose()
    }

    /// `n` draws of the target block, one per row.
    pub fn sample<R: Rng + ?Sized>(&self, x_given: &[f64], n: usize, rng: &mut R) -> DMatrix<f64> {
        let m = self.mean(x_given);
        let k = self.target.len();
        let mut out = DMatrix::zeros(n, k);
        let mut z = vec![0.0; k];
        for r in 0..n {
            for zi in z.iter_mut() {
                *zi = rng.sample(StandardNormal);
            }
            for i in 0..k {
                let mut acc = m[i];
                for j in 0..=i {
                    acc += self.chol[(i, j)] * z[j];
                }
                out[(r, i)] = acc;
            }
        }
        out
    }
}
