//! Target Shapley effects: Shapley attribution of the variance of a failure
//! indicator `1{G(X) > t}` to the inputs of `G`, under dependent inputs.

pub mod cli;
pub mod effects;
pub mod error;
pub mod gaussian;
pub mod knn;
pub mod linear_diag;
pub mod mc;
pub mod models;
pub mod mvn;
pub mod rng;
pub mod sample;
pub mod shapley;
pub mod special;
pub mod subset;

pub use effects::{EffectsVector, EstimatorKind};
pub use error::{Error, Result};
pub use sample::{FailureEvent, SampleSet};
pub use subset::{enumerate_subsets, shapley_weight, CostTable, SubsetIndex};
