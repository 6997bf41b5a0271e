//! Input-output samples and the failure event.

use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Failure is `G(X) > threshold`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FailureEvent {
    threshold: f64,
}

impl FailureEvent {
    pub fn new(threshold: f64) -> Result<Self> {
        if !threshold.is_finite() {
            return Err(Error::InvalidInput(format!("threshold must be finite, got {threshold}")));
        }
        Ok(Self { threshold })
    }

    #[inline]
    pub fn threshold(&self) -> f64 {
        self.threshold
    }

    #[inline]
    pub fn fails(&self, y: f64) -> bool {
        y > self.threshold
    }

    #[inline]
    pub fn indicator(&self, y: f64) -> f64 {
        if self.fails(y) {
            1.0
        } else {
            0.0
        }
    }
}

/// `N` realizations of `d` inputs stored column by column, optionally with
/// the matching output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleSet {
    columns: Vec<Vec<f64>>,
    names: Vec<String>,
    output: Option<Vec<f64>>,
}

impl SampleSet {
    pub fn new(columns: Vec<Vec<f64>>, names: Vec<String>, output: Option<Vec<f64>>) -> Result<Self> {
        if columns.is_empty() {
            return Err(Error::InvalidInput("sample has no input columns".into()));
        }
        if names.len() != columns.len() {
            return Err(Error::InvalidInput(format!(
                "{} column names for {} columns",
                names.len(),
                columns.len()
            )));
        }
        let n = columns[0].len();
        if n < 2 {
            return Err(Error::InvalidInput(format!("sample needs at least 2 rows, got {n}")));
        }
        for (c, col) in columns.iter().enumerate() {
            if col.len() != n {
                return Err(Error::InvalidInput(format!(
                    "column {} has {} rows, expected {n}",
                    names[c],
                    col.len()
                )));
            }
            if let Some(r) = col.iter().position(|v| !v.is_finite()) {
                return Err(Error::InvalidInput(format!(
                    "non-finite value in column {} at row {r}",
                    names[c]
                )));
            }
        }
        let mut seen = HashSet::new();
        for name in &names {
            if !seen.insert(name.as_str()) {
                return Err(Error::InvalidInput(format!("duplicate column name {name:?}")));
            }
        }
        if let Some(out) = &output {
            if out.len() != n {
                return Err(Error::InvalidInput(format!(
                    "output has {} rows, expected {n}",
                    out.len()
                )));
            }
            if let Some(r) = out.iter().position(|v| !v.is_finite()) {
                return Err(Error::NonFiniteOutput { row: r });
            }
        }
        Ok(Self { columns, names, output })
    }

    /// Builds a sample from rows, with default names `X1..Xd`.
    pub fn from_rows(rows: &[Vec<f64>], output: Option<Vec<f64>>) -> Result<Self> {
        let d = rows.first().map(|r| r.len()).unwrap_or(0);
        if rows.iter().any(|r| r.len() != d) {
            return Err(Error::InvalidInput("ragged rows".into()));
        }
        let columns = (0..d).map(|j| rows.iter().map(|r| r[j]).collect()).collect();
        Self::new(columns, default_names(d), output)
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.columns[0].len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.columns.len()
    }

    pub fn column(&self, j: usize) -> &[f64] {
        &self.columns[j]
    }

    pub fn columns(&self) -> &[Vec<f64>] {
        &self.columns
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn output(&self) -> Option<&[f64]> {
        self.output.as_deref()
    }

    pub fn row(&self, i: usize) -> Vec<f64> {
        self.columns.iter().map(|c| c[i]).collect()
    }

    pub fn with_output(mut self, output: Vec<f64>) -> Result<Self> {
        let names = std::mem::take(&mut self.names);
        Self::new(self.columns, names, Some(output))
    }

    /// Rows selected by `rows`, in that order.
    pub fn select_rows(&self, rows: &[usize]) -> Result<Self> {
        let columns = self
            .columns
            .iter()
            .map(|c| rows.iter().map(|&r| c[r]).collect())
            .collect();
        let output = self.output.as_ref().map(|o| rows.iter().map(|&r| o[r]).collect());
        Self::new(columns, self.names.clone(), output)
    }

    /// Failure indicator of the output column.
    pub fn indicator(&self, event: &FailureEvent) -> Result<Vec<f64>> {
        let out = self
            .output
            .as_ref()
            .ok_or_else(|| Error::InvalidInput("sample has no output column".into()))?;
        Ok(out.iter().map(|&y| event.indicator(y)).collect())
    }

    /// Column mean and standard deviation (population form).
    pub fn column_moments(&self, j: usize) -> (f64, f64) {
        mean_sd(&self.columns[j])
    }
}

pub(crate) fn mean_sd(x: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    let var = x.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

pub fn default_names(d: usize) -> Vec<String> {
    (1..=d).map(|i| format!("X{i}")).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_small_or_bad_samples() {
        assert!(SampleSet::from_rows(&[vec![1.0]], None).is_err());
        assert!(SampleSet::from_rows(&[vec![1.0], vec![f64::NAN]], None).is_err());
        let dup = SampleSet::new(
            vec![vec![1.0, 2.0], vec![1.0, 2.0]],
            vec!["a".into(), "a".into()],
            None,
        );
        assert!(dup.is_err());
    }

    #[test]
    fn indicator_uses_strict_exceedance() {
        let ev = FailureEvent::new(1.0).unwrap();
        let s = SampleSet::from_rows(&[vec![0.0], vec![1.0], vec![2.0]], Some(vec![0.5, 1.0, 1.5]))
            .unwrap();
        assert_eq!(s.indicator(&ev).unwrap(), vec![0.0, 0.0, 1.0]);
        assert!(FailureEvent::new(f64::INFINITY).is_err());
    }
}
