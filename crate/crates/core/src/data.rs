//! Sparse instance-major dataset.
//!
//! Rows are stored CSR-style. An absent entry is a missing value; an explicitly
//! stored `0.0` is a present value and is treated like any other number by the
//! split finder.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// One stored cell of a sparse row.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Entry {
    pub index: u32,
    pub value: f64,
}

impl Entry {
    pub fn new(index: u32, value: f64) -> Self {
        Self { index, value }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DataMatrix {
    n_features: usize,
    row_ptr: Vec<usize>,
    entries: Vec<Entry>,
    labels: Vec<f64>,
    weights: Option<Vec<f64>>,
}

impl DataMatrix {
    /// Builds a matrix from per-row entry lists, validating every invariant.
    pub fn from_rows(
        rows: Vec<Vec<Entry>>,
        labels: Vec<f64>,
        weights: Option<Vec<f64>>,
        n_features: usize,
    ) -> Result<Self> {
        let mut builder = MatrixBuilder::new(n_features);
        for (row, label) in rows.into_iter().zip(labels.iter().copied()) {
            builder.push_row(&row, label)?;
        }
        if builder.labels.len() != labels.len() {
            return Err(Error::InvalidInput(format!(
                "{} labels for {} rows",
                labels.len(),
                builder.labels.len()
            )));
        }
        builder.finish(weights)
    }

    /// Builds a fully dense matrix (every cell present) from row-major values.
    pub fn from_dense(values: &[Vec<f64>], labels: Vec<f64>) -> Result<Self> {
        let n_features = values.first().map_or(0, Vec::len);
        let rows = values
            .iter()
            .map(|r| {
                r.iter()
                    .enumerate()
                    .map(|(j, &v)| Entry::new(j as u32, v))
                    .collect()
            })
            .collect();
        Self::from_rows(rows, labels, None, n_features)
    }

    pub fn n_rows(&self) -> usize {
        self.labels.len()
    }

    pub fn n_features(&self) -> usize {
        self.n_features
    }

    pub fn nnz(&self) -> usize {
        self.entries.len()
    }

    pub fn row(&self, i: usize) -> &[Entry] {
        &self.entries[self.row_ptr[i]..self.row_ptr[i + 1]]
    }

    pub fn rows(&self) -> impl ExactSizeIterator<Item = &[Entry]> + '_ {
        (0..self.n_rows()).map(move |i| self.row(i))
    }

    pub fn labels(&self) -> &[f64] {
        &self.labels
    }

    pub fn weights(&self) -> Option<&[f64]> {
        self.weights.as_deref()
    }

    pub fn weight(&self, i: usize) -> f64 {
        self.weights.as_ref().map_or(1.0, |w| w[i])
    }

    /// Returns a matrix with `n_features` widened (never narrowed).
    pub fn with_n_features(mut self, n_features: usize) -> Result<Self> {
        if n_features < self.n_features {
            return Err(Error::InvalidInput(format!(
                "cannot narrow feature count from {} to {n_features}",
                self.n_features
            )));
        }
        self.n_features = n_features;
        Ok(self)
    }

    /// Copies the listed rows, in the given order, into a new matrix.
    pub fn select_rows(&self, indices: &[usize]) -> DataMatrix {
        let mut row_ptr = Vec::with_capacity(indices.len() + 1);
        row_ptr.push(0);
        let mut entries = Vec::new();
        let mut labels = Vec::with_capacity(indices.len());
        for &i in indices {
            entries.extend_from_slice(self.row(i));
            row_ptr.push(entries.len());
            labels.push(self.labels[i]);
        }
        let weights = self
            .weights
            .as_ref()
            .map(|w| indices.iter().map(|&i| w[i]).collect());
        DataMatrix {
            n_features: self.n_features,
            row_ptr,
            entries,
            labels,
            weights,
        }
    }

    /// Looks up the stored value of `feature` in row `i`, `None` if missing.
    pub fn value(&self, i: usize, feature: u32) -> Option<f64> {
        lookup(self.row(i), feature)
    }

    pub fn stats(&self) -> DatasetStats {
        let mut per_feature = vec![0usize; self.n_features];
        for e in &self.entries {
            per_feature[e.index as usize] += 1;
        }
        let cells = self.n_rows() * self.n_features;
        DatasetStats {
            nnz: self.nnz(),
            density: if cells == 0 {
                0.0
            } else {
                self.nnz() as f64 / cells as f64
            },
            feature_counts: per_feature,
        }
    }
}

/// Binary search for a feature in a row sorted by feature index.
pub fn lookup(row: &[Entry], feature: u32) -> Option<f64> {
    row.binary_search_by_key(&feature, |e| e.index)
        .ok()
        .map(|k| row[k].value)
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetStats {
    pub nnz: usize,
    pub density: f64,
    /// Non-missing count per feature.
    pub feature_counts: Vec<usize>,
}

/// Incremental row-by-row construction used by the parser and generators.
#[derive(Debug)]
pub struct MatrixBuilder {
    n_features: usize,
    row_ptr: Vec<usize>,
    entries: Vec<Entry>,
    labels: Vec<f64>,
}

impl MatrixBuilder {
    pub fn new(n_features: usize) -> Self {
        Self {
            n_features,
            row_ptr: vec![0],
            entries: Vec::new(),
            labels: Vec::new(),
        }
    }

    pub fn push_row(&mut self, row: &[Entry], label: f64) -> Result<()> {
        if !label.is_finite() {
            return Err(Error::InvalidInput(format!(
                "row {}: non-finite label",
                self.labels.len()
            )));
        }
        for (k, e) in row.iter().enumerate() {
            if !e.value.is_finite() {
                return Err(Error::InvalidInput(format!(
                    "row {}: non-finite value for feature {}",
                    self.labels.len(),
                    e.index
                )));
            }
            if (e.index as usize) >= self.n_features {
                return Err(Error::InvalidInput(format!(
                    "row {}: feature {} out of range (n_features = {})",
                    self.labels.len(),
                    e.index,
                    self.n_features
                )));
            }
            if k > 0 && row[k - 1].index >= e.index {
                return Err(Error::InvalidInput(format!(
                    "row {}: feature indices not strictly increasing",
                    self.labels.len()
                )));
            }
        }
        self.entries.extend_from_slice(row);
        self.row_ptr.push(self.entries.len());
        self.labels.push(label);
        Ok(())
    }

    /// Like `push_row` but grows `n_features` to fit the row.
    pub(crate) fn push_row_growing(&mut self, row: &[Entry], label: f64) -> Result<()> {
        if let Some(last) = row.last() {
            self.n_features = self.n_features.max(last.index as usize + 1);
        }
        self.push_row(row, label)
    }

    pub fn n_rows(&self) -> usize {
        self.labels.len()
    }

    pub fn finish(self, weights: Option<Vec<f64>>) -> Result<DataMatrix> {
        if let Some(w) = &weights {
            if w.len() != self.labels.len() {
                return Err(Error::InvalidInput(format!(
                    "{} instance weights for {} rows",
                    w.len(),
                    self.labels.len()
                )));
            }
            if let Some(bad) = w.iter().position(|&x| !(x > 0.0 && x.is_finite())) {
                return Err(Error::InvalidInput(format!(
                    "row {bad}: instance weight must be positive and finite"
                )));
            }
        }
        Ok(DataMatrix {
            n_features: self.n_features,
            row_ptr: self.row_ptr,
            entries: self.entries,
            labels: self.labels,
            weights,
        })
    }
}

/// Deterministically partitions rows into `(train, holdout)`.
///
/// The holdout receives `round(fraction * n)` rows, clamped so both sides are
/// nonempty. Row order inside each side follows the original order.
pub fn split_holdout(
    matrix: &DataMatrix,
    fraction: f64,
    seed: u64,
) -> Result<(DataMatrix, DataMatrix)> {
    let n = matrix.n_rows();
    if n < 2 {
        return Err(Error::InvalidInput(format!(
            "need at least 2 rows to split, got {n}"
        )));
    }
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(Error::InvalidInput(format!(
            "holdout fraction {fraction} not in (0, 1)"
        )));
    }
    let holdout_len = ((fraction * n as f64).round() as usize).clamp(1, n - 1);
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut holdout = order[..holdout_len].to_vec();
    let mut train = order[holdout_len..].to_vec();
    holdout.sort_unstable();
    train.sort_unstable();
    Ok((matrix.select_rows(&train), matrix.select_rows(&holdout)))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ten_rows() -> DataMatrix {
        let rows = (0..10)
            .map(|i| vec![Entry::new(0, i as f64)])
            .collect::<Vec<_>>();
        DataMatrix::from_rows(rows, (0..10).map(f64::from).collect(), None, 1).unwrap()
    }

    #[test]
    fn rejects_unsorted_and_out_of_range() {
        let bad = DataMatrix::from_rows(
            vec![vec![Entry::new(2, 1.0), Entry::new(1, 1.0)]],
            vec![0.0],
            None,
            3,
        );
        assert!(bad.is_err());
        let bad = DataMatrix::from_rows(vec![vec![Entry::new(3, 1.0)]], vec![0.0], None, 3);
        assert!(bad.is_err());
        let bad = DataMatrix::from_rows(vec![vec![Entry::new(0, f64::NAN)]], vec![0.0], None, 3);
        assert!(bad.is_err());
    }

    #[test]
    fn rejects_non_positive_weights() {
        let bad = DataMatrix::from_rows(vec![vec![]], vec![0.0], Some(vec![0.0]), 1);
        assert!(bad.is_err());
    }

    #[test]
    fn stats_density() {
        let m = DataMatrix::from_rows(
            vec![vec![Entry::new(0, 0.0)], vec![Entry::new(0, 1.0), Entry::new(1, 2.0)]],
            vec![0.0, 1.0],
            None,
            2,
        )
        .unwrap();
        let s = m.stats();
        assert_eq!(s.nnz, 3);
        assert_eq!(s.density, 0.75);
        assert_eq!(s.feature_counts, vec![2, 1]);
        // explicit zero is present, not missing
        assert_eq!(m.value(0, 0), Some(0.0));
        assert_eq!(m.value(0, 1), None);
    }

    #[test]
    fn holdout_ten_rows() {
        let m = ten_rows();
        let (a, b) = split_holdout(&m, 0.2, 7).unwrap();
        assert_eq!((a.n_rows(), b.n_rows()), (8, 2));
        let (a2, b2) = split_holdout(&m, 0.2, 7).unwrap();
        assert_eq!(a, a2);
        assert_eq!(b, b2);
    }

    #[test]
    fn holdout_two_rows() {
        let m = ten_rows().select_rows(&[3, 4]);
        let (a, b) = split_holdout(&m, 0.5, 1).unwrap();
        assert_eq!((a.n_rows(), b.n_rows()), (1, 1));
    }

    #[test]
    fn holdout_errors() {
        let m = ten_rows().select_rows(&[0]);
        assert!(split_holdout(&m, 0.5, 1).is_err());
        assert!(split_holdout(&ten_rows(), 1.0, 1).is_err());
        assert!(split_holdout(&ten_rows(), 0.0, 1).is_err());
    }
}
