use serde::{Deserialize, Serialize};

/// Which procedure produced an [`EffectsVector`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EstimatorKind {
    Oracle,
    Mc,
    Knn,
    McPerm,
    KnnPerm,
    /// Shapley values of a user-provided cost table.
    Table,
}

/// Per-input attributions together with enough metadata to reproduce them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EffectsVector {
    pub effects: Vec<f64>,
    pub estimator: EstimatorKind,
    /// Sum of the effects before any normalization was applied.
    pub raw_sum: f64,
    pub normalized: bool,
    pub seed: u64,
    /// Free-form configuration echo (sample sizes, neighbour count, ...).
    #[serde(default)]
    pub config: serde_json::Value,
    /// Set for estimators whose statistical behaviour is not established.
    #[serde(default)]
    pub experimental: bool,
}

impl EffectsVector {
    pub fn new(effects: Vec<f64>, estimator: EstimatorKind, seed: u64) -> Self {
        let raw_sum = effects.iter().sum();
        Self {
            effects,
            estimator,
            raw_sum,
            normalized: false,
            seed,
            config: serde_json::Value::Null,
            experimental: false,
        }
    }

    pub fn dim(&self) -> usize {
        self.effects.len()
    }

    pub fn sum(&self) -> f64 {
        self.effects.iter().sum()
    }

    /// Rescales the effects to sum to one, keeping the raw sum on record.
    /// A zero or non-finite sum leaves the vector untouched.
    pub fn normalize(&mut self) {
        let s = self.sum();
        if s != 0.0 && s.is_finite() {
            for e in &mut self.effects {
                *e /= s;
            }
            self.normalized = true;
        }
    }

    pub fn with_config(mut self, config: serde_json::Value) -> Self {
        self.config = config;
        self
    }
}

impl std::ops::Index<usize> for EffectsVector {
    type Output = f64;
    fn index(&self, i: usize) -> &f64 {
        &self.effects[i]
    }
}
