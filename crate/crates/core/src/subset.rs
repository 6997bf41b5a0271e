//! Subsets of input positions as bitmasks, the Shapley subset weights and
//! the cost table that the aggregation step consumes.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Largest dimension representable by a [`SubsetIndex`].
pub const MAX_DIM: usize = 62;

/// Largest dimension for which a full power-set table is built by default.
pub const EXACT_LIMIT: usize = 20;

/// A subset of `{0, .., d-1}` stored as a bitmask.
///
/// Positions are zero-based in code; the `Display` impl prints them
/// one-based, matching the way inputs are usually named (`X1`, `X2`, ...).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct SubsetIndex {
    mask: u64,
    d: u8,
}

fn check_dim(d: usize) -> Result<()> {
    if d == 0 || d > MAX_DIM {
        return Err(Error::DimensionOutOfRange(d));
    }
    Ok(())
}

#[inline]
fn full_mask(d: usize) -> u64 {
    (1u64 << d) - 1
}

impl SubsetIndex {
    pub fn from_mask(mask: u64, d: usize) -> Result<Self> {
        check_dim(d)?;
        if mask & !full_mask(d) != 0 {
            return Err(Error::InvalidInput(format!(
                "mask {mask:#b} has bits outside of d = {d}"
            )));
        }
        Ok(Self { mask, d: d as u8 })
    }

    pub fn from_indices(indices: &[usize], d: usize) -> Result<Self> {
        check_dim(d)?;
        let mut mask = 0u64;
        for &i in indices {
            if i >= d {
                return Err(Error::InvalidInput(format!("index {i} out of range for d = {d}")));
            }
            mask |= 1 << i;
        }
        Ok(Self { mask, d: d as u8 })
    }

    pub fn empty(d: usize) -> Result<Self> {
        Self::from_mask(0, d)
    }

    pub fn full(d: usize) -> Result<Self> {
        check_dim(d)?;
        Ok(Self { mask: full_mask(d), d: d as u8 })
    }

    #[inline]
    pub fn mask(self) -> u64 {
        self.mask
    }

    #[inline]
    pub fn dim(self) -> usize {
        self.d as usize
    }

    #[inline]
    pub fn len(self) -> usize {
        self.mask.count_ones() as usize
    }

    #[inline]
    pub fn is_empty(self) -> bool {
        self.mask == 0
    }

    #[inline]
    pub fn is_full(self) -> bool {
        self.mask == full_mask(self.dim())
    }

    #[inline]
    pub fn contains(self, i: usize) -> bool {
        i < self.dim() && self.mask & (1 << i) != 0
    }

    #[inline]
    pub fn complement(self) -> Self {
        Self { mask: !self.mask & full_mask(self.dim()), d: self.d }
    }

    #[inline]
    pub fn with(self, i: usize) -> Self {
        debug_assert!(i < self.dim());
        Self { mask: self.mask | (1 << i), d: self.d }
    }

    #[inline]
    pub fn without(self, i: usize) -> Self {
        Self { mask: self.mask & !(1 << i), d: self.d }
    }

    pub fn union(self, other: Self) -> Self {
        debug_assert_eq!(self.d, other.d);
        Self { mask: self.mask | other.mask, d: self.d }
    }

    /// Member positions in increasing order.
    pub fn indices(self) -> Vec<usize> {
        self.iter().collect()
    }

    pub fn iter(self) -> impl Iterator<Item = usize> {
        let mut m = self.mask;
        std::iter::from_fn(move || {
            if m == 0 {
                None
            } else {
                let i = m.trailing_zeros() as usize;
                m &= m - 1;
                Some(i)
            }
        })
    }
}

impl fmt::Display for SubsetIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("{")?;
        for (n, i) in self.iter().enumerate() {
            if n > 0 {
                f.write_str(",")?;
            }
            write!(f, "{}", i + 1)?;
        }
        f.write_str("}")
    }
}

/// All `2^d` subsets, ordered by cardinality and then by numeric mask.
pub fn enumerate_subsets(d: usize) -> Result<Vec<SubsetIndex>> {
    check_dim(d)?;
    if d > EXACT_LIMIT {
        return Err(Error::ExactAggregationTooLarge { d, limit: EXACT_LIMIT });
    }
    let mut masks: Vec<u64> = (0..=full_mask(d)).collect();
    masks.sort_by_key(|m| (m.count_ones(), *m));
    Ok(masks.into_iter().map(|mask| SubsetIndex { mask, d: d as u8 }).collect())
}

/// `C(n, k)` as a float; exact for the sizes used here (n <= 62).
pub fn binomial(n: usize, k: usize) -> f64 {
    if k > n {
        return 0.0;
    }
    let k = k.min(n - k);
    let mut acc = 1.0f64;
    for i in 0..k {
        acc = acc * (n - i) as f64 / (i + 1) as f64;
    }
    acc.round()
}

/// Weight `1 / (d * C(d-1, k))` of a coalition of size `k` not containing
/// the player.
pub fn shapley_weight(d: usize, k: usize) -> Result<f64> {
    check_dim(d)?;
    if k >= d {
        return Err(Error::CardinalityOutOfRange { d, k });
    }
    Ok(1.0 / (d as f64 * binomial(d - 1, k)))
}

/// Cost value for every subset of `{0, .., d-1}`, indexed by mask.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostTable {
    d: usize,
    values: Vec<Option<f64>>,
}

impl CostTable {
    pub fn new(d: usize) -> Result<Self> {
        check_dim(d)?;
        if d > EXACT_LIMIT {
            return Err(Error::ExactAggregationTooLarge { d, limit: EXACT_LIMIT });
        }
        Ok(Self { d, values: vec![None; 1 << d] })
    }

    /// Builds a complete table by evaluating `f` on every subset.
    pub fn from_fn<F>(d: usize, mut f: F) -> Result<Self>
    where
        F: FnMut(SubsetIndex) -> Result<f64>,
    {
        let mut table = Self::new(d)?;
        for s in enumerate_subsets(d)? {
            table.values[s.mask() as usize] = Some(f(s)?);
        }
        Ok(table)
    }

    /// Like [`CostTable::from_fn`] with subsets evaluated in parallel.
    pub fn par_from_fn<F>(d: usize, f: F) -> Result<Self>
    where
        F: Fn(SubsetIndex) -> Result<f64> + Sync,
    {
        use rayon::prelude::*;
        let mut table = Self::new(d)?;
        let subsets = enumerate_subsets(d)?;
        let values: Vec<f64> = subsets.par_iter().map(|&s| f(s)).collect::<Result<_>>()?;
        for (s, v) in subsets.into_iter().zip(values) {
            table.values[s.mask() as usize] = Some(v);
        }
        Ok(table)
    }

    /// Builds a complete table from values listed by mask (`values[mask]`).
    pub fn from_values(d: usize, values: &[f64]) -> Result<Self> {
        let mut table = Self::new(d)?;
        if values.len() != table.values.len() {
            return Err(Error::InvalidInput(format!(
                "expected {} values for d = {d}, got {}",
                table.values.len(),
                values.len()
            )));
        }
        for (slot, v) in table.values.iter_mut().zip(values) {
            *slot = Some(*v);
        }
        Ok(table)
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn set(&mut self, s: SubsetIndex, value: f64) {
        assert_eq!(s.dim(), self.d, "subset dimension mismatch");
        self.values[s.mask() as usize] = Some(value);
    }

    #[inline]
    pub fn get(&self, s: SubsetIndex) -> Option<f64> {
        self.values.get(s.mask() as usize).copied().flatten()
    }

    #[inline]
    pub(crate) fn get_mask(&self, mask: u64) -> Option<f64> {
        self.values[mask as usize]
    }

    pub fn missing(&self) -> usize {
        self.values.iter().filter(|v| v.is_none()).count()
    }

    pub fn is_complete(&self) -> bool {
        self.missing() == 0
    }

    pub fn check_complete(&self) -> Result<()> {
        let missing = self.missing();
        if missing > 0 {
            return Err(Error::IncompleteCostTable { missing, total: self.values.len() });
        }
        Ok(())
    }

    /// Table shifted so that `val(∅) = 0`.
    pub fn centered(&self) -> Result<Self> {
        self.check_complete()?;
        let base = self.values[0].unwrap_or(0.0);
        Ok(self.map(|v| v - base))
    }

    pub fn map<F: Fn(f64) -> f64>(&self, f: F) -> Self {
        Self { d: self.d, values: self.values.iter().map(|v| v.map(&f)).collect() }
    }

    /// Pointwise combination of two complete tables of the same dimension.
    pub fn zip_with<F: Fn(f64, f64) -> f64>(&self, other: &Self, f: F) -> Result<Self> {
        if self.d != other.d {
            return Err(Error::InvalidInput("cost tables differ in dimension".into()));
        }
        self.check_complete()?;
        other.check_complete()?;
        let values = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| Some(f(a.unwrap(), b.unwrap())))
            .collect();
        Ok(Self { d: self.d, values })
    }

    pub fn iter(&self) -> impl Iterator<Item = (SubsetIndex, Option<f64>)> + '_ {
        let d = self.d as u8;
        self.values
            .iter()
            .enumerate()
            .map(move |(m, v)| (SubsetIndex { mask: m as u64, d }, *v))
    }
}
