//! Linear models with Gaussian inputs, sampled with exact conditionals.

use nalgebra::DMatrix;
use rand::RngCore;

use super::{ConditionalSampler, InputModel};
use crate::error::Result;
use crate::gaussian::LinearGaussianModel;
use crate::mvn::GaussianConditional;
use crate::sample::FailureEvent;
use crate::subset::SubsetIndex;

/// Sampling view of a [`LinearGaussianModel`].
#[derive(Debug, Clone)]
pub struct LinearGaussianInputs {
    pub model: LinearGaussianModel,
}

impl LinearGaussianInputs {
    pub fn new(model: LinearGaussianModel) -> Self {
        Self { model }
    }
}

impl From<LinearGaussianModel> for LinearGaussianInputs {
    fn from(model: LinearGaussianModel) -> Self {
        Self { model }
    }
}

struct Conditional(GaussianConditional);

impl ConditionalSampler for Conditional {
    fn target(&self) -> &[usize] {
        self.0.target()
    }

    fn sample(&self, given: &[f64], n: usize, rng: &mut dyn RngCore) -> Result<Vec<f64>> {
        let m = self.0.sample(given, n, rng);
        // nalgebra storage is column-major; transpose to row-major
        Ok(m.transpose().as_slice().to_vec())
    }
}

impl InputModel for LinearGaussianInputs {
    fn dim(&self) -> usize {
        self.model.dim()
    }

    fn event(&self) -> FailureEvent {
        self.model.event()
    }

    fn evaluate(&self, x: &[f64]) -> Result<f64> {
        Ok(self.model.evaluate(x))
    }

    fn sample_joint(&self, n: usize, rng: &mut dyn RngCore) -> Result<Vec<f64>> {
        let d = self.dim();
        let mut out = vec![0.0; n * d];
        let mut z = vec![0.0; d];
        for row in out.chunks_exact_mut(d) {
            self.model.inputs().sample_into(rng, &mut z, row);
        }
        Ok(out)
    }

    fn sample_marginal(&self, a: SubsetIndex, n: usize, rng: &mut dyn RngCore) -> Result<Vec<f64>> {
        let k = a.len();
        if k == 0 {
            return Ok(Vec::new());
        }
        let sub = self.model.inputs().marginal(a)?;
        let mut out = vec![0.0; n * k];
        let mut z = vec![0.0; k];
        for row in out.chunks_exact_mut(k) {
            sub.sample_into(rng, &mut z, row);
        }
        Ok(out)
    }

    fn conditional(&self, a: SubsetIndex) -> Result<Box<dyn ConditionalSampler + '_>> {
        Ok(Box::new(Conditional(self.model.inputs().conditional(a)?)))
    }
}

/// Three independent standard normals, `Y = X1 + X2 + X3`.
pub fn independent_case(threshold: f64) -> Result<LinearGaussianModel> {
    LinearGaussianModel::new(0.0, vec![1.0; 3], vec![0.0; 3], DMatrix::identity(3, 3), FailureEvent::new(threshold)?)
}

/// `Y = X1 + X2 + X3` with `X1` independent and `Corr(X2, X3) = rho`.
pub fn correlated_case(rho: f64, threshold: f64) -> Result<LinearGaussianModel> {
    let sigma = DMatrix::from_row_slice(3, 3, &[1.0, 0.0, 0.0, 0.0, 1.0, rho, 0.0, rho, 1.0]);
    LinearGaussianModel::new(0.0, vec![1.0; 3], vec![0.0; 3], sigma, FailureEvent::new(threshold)?)
}

/// `Y = X1 + 6 X2 + 4 X3` with a fourth input, absent from `Y`, correlated to `X2`.
pub fn exogenous_case(rho: f64, threshold: f64) -> Result<LinearGaussianModel> {
    let mut sigma = DMatrix::identity(4, 4);
    sigma[(1, 3)] = rho;
    sigma[(3, 1)] = rho;
    LinearGaussianModel::new(0.0, vec![1.0, 6.0, 4.0, 0.0], vec![0.0; 4], sigma, FailureEvent::new(threshold)?)
}
