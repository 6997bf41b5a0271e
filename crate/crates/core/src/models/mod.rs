//! Input models: samplers for `X`, a deterministic `G` and a threshold.

pub mod copula;
pub mod flood;
pub mod linear;
pub mod marginal;

use rand::RngCore;

use crate::error::Result;
use crate::sample::{FailureEvent, SampleSet};
use crate::subset::SubsetIndex;

pub use copula::{solve_gaussian_correlation, CopulaModel, DependenceSpec};
pub use flood::{
    flood_dependence, flood_height, flood_marginals, flood_model, flood_model_with, sample_flood_inputs, FLOOD_NAMES,
    FLOOD_THRESHOLD,
};
pub use linear::{correlated_case, exogenous_case, independent_case, LinearGaussianInputs};
pub use marginal::MarginalSpec;

/// Draws of the complement block given a value of the conditioning block.
pub trait ConditionalSampler: Send + Sync {
    /// Indices of the sampled block, in the column order of the output.
    fn target(&self) -> &[usize];

    /// `n` draws, stored row-major with `target().len()` values per row.
    fn sample(&self, given: &[f64], n: usize, rng: &mut dyn RngCore) -> Result<Vec<f64>>;
}

/// Joint, marginal and conditional samplers for `X` plus `G` and the event.
pub trait InputModel: Sync {
    fn dim(&self) -> usize;

    fn names(&self) -> Vec<String> {
        crate::sample::default_names(self.dim())
    }

    fn event(&self) -> FailureEvent;

    /// Deterministic model output for one input row.
    fn evaluate(&self, x: &[f64]) -> Result<f64>;

    /// `n` joint draws, row-major.
    fn sample_joint(&self, n: usize, rng: &mut dyn RngCore) -> Result<Vec<f64>>;

    /// `n` draws of `X_A`, row-major with the columns of `A` in increasing order.
    fn sample_marginal(&self, a: SubsetIndex, n: usize, rng: &mut dyn RngCore) -> Result<Vec<f64>>;

    /// Sampler for `X_Ā | X_A`.
    fn conditional(&self, a: SubsetIndex) -> Result<Box<dyn ConditionalSampler + '_>>;

    /// Whether samplers may be used from several threads at once.
    fn concurrent_sampling(&self) -> bool {
        true
    }
}

/// Draws `n` joint rows and evaluates `G` on each.
pub fn sample_with_output(model: &dyn InputModel, n: usize, rng: &mut dyn RngCore) -> Result<SampleSet> {
    let d = model.dim();
    let flat = model.sample_joint(n, rng)?;
    let mut columns = vec![Vec::with_capacity(n); d];
    let mut output = Vec::with_capacity(n);
    for row in flat.chunks_exact(d) {
        for (c, v) in columns.iter_mut().zip(row) {
            c.push(*v);
        }
        output.push(model.evaluate(row)?);
    }
    SampleSet::new(columns, model.names(), Some(output))
}
