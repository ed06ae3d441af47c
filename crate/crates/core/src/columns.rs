//! Value-sorted column access shared by the split finders.

use std::cmp::Reverse;
use std::collections::BinaryHeap;

use crate::block_store::{add_sort_comparisons, BlockColumn, ColumnBlock};
use crate::data::DataMatrix;

/// A feature column as `(global_row, value)` pairs in non-decreasing value
/// order, ties in ascending row order.
pub trait SortedColumn {
    fn len(&self) -> usize;

    fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn iter(&self) -> impl DoubleEndedIterator<Item = (u32, f64)> + '_;
}

/// Anything that hands out value-sorted columns by feature index: the global
/// column set or a single row block.
pub trait ColumnAccess: Sync {
    type Column<'a>: SortedColumn
    where
        Self: 'a;

    fn n_features(&self) -> usize;

    fn column(&self, feature: usize) -> Self::Column<'_>;
}

impl ColumnAccess for ColumnBlock {
    type Column<'a> = BlockColumn<'a>;

    fn n_features(&self) -> usize {
        ColumnBlock::n_features(self)
    }

    fn column(&self, feature: usize) -> BlockColumn<'_> {
        ColumnBlock::column(self, feature)
    }
}

impl ColumnAccess for SortedColumns {
    type Column<'a> = GlobalColumn<'a>;

    fn n_features(&self) -> usize {
        SortedColumns::n_features(self)
    }

    fn column(&self, feature: usize) -> GlobalColumn<'_> {
        SortedColumns::column(self, feature)
    }
}

#[derive(Debug, Clone, Copy)]
pub struct GlobalColumn<'a> {
    pub rows: &'a [u32],
    pub values: &'a [f64],
}

impl SortedColumn for GlobalColumn<'_> {
    fn len(&self) -> usize {
        self.rows.len()
    }

    fn iter(&self) -> impl DoubleEndedIterator<Item = (u32, f64)> + '_ {
        self.rows.iter().copied().zip(self.values.iter().copied())
    }
}

/// All rows of every feature in one value-sorted CSC structure.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SortedColumns {
    col_ptr: Vec<usize>,
    rows: Vec<u32>,
    values: Vec<f64>,
}

impl SortedColumns {
    /// Sorts each feature of a matrix directly.
    pub fn from_matrix(matrix: &DataMatrix) -> Self {
        let m = matrix.n_features();
        let mut per_feature: Vec<Vec<(f64, u32)>> = vec![Vec::new(); m];
        for (i, row) in matrix.rows().enumerate() {
            for e in row {
                per_feature[e.index as usize].push((e.value, i as u32));
            }
        }
        let mut out = Self {
            col_ptr: Vec::with_capacity(m + 1),
            rows: Vec::with_capacity(matrix.nnz()),
            values: Vec::with_capacity(matrix.nnz()),
        };
        out.col_ptr.push(0);
        let mut comparisons = 0u64;
        for mut col in per_feature {
            col.sort_by(|a, b| {
                comparisons += 1;
                a.0.total_cmp(&b.0)
            });
            for (v, r) in col {
                out.rows.push(r);
                out.values.push(v);
            }
            out.col_ptr.push(out.rows.len());
        }
        add_sort_comparisons(comparisons);
        out
    }

    /// K-way merges the per-block columns into global order. Equal values
    /// come out in ascending row order, matching a stable global sort.
    pub fn from_blocks<B: AsRef<ColumnBlock>>(blocks: &[B], n_features: usize) -> Self {
        let total: usize = blocks.iter().map(|b| b.as_ref().nnz()).sum();
        let mut out = Self {
            col_ptr: Vec::with_capacity(n_features + 1),
            rows: Vec::with_capacity(total),
            values: Vec::with_capacity(total),
        };
        out.col_ptr.push(0);
        let mut comparisons = 0u64;
        for f in 0..n_features {
            let cols: Vec<_> = blocks.iter().map(|b| b.as_ref().column(f)).collect();
            let mut heap = BinaryHeap::new();
            let mut cursors = vec![0usize; cols.len()];
            for (k, c) in cols.iter().enumerate() {
                if !c.is_empty() {
                    heap.push(Reverse(HeapKey(c.value_at(0), c.row_at(0), k)));
                }
            }
            while let Some(Reverse(HeapKey(v, r, k))) = heap.pop() {
                // a heap pop costs about log2(k) comparisons
                comparisons += u64::from(usize::BITS - cols.len().leading_zeros());
                out.rows.push(r);
                out.values.push(v);
                cursors[k] += 1;
                let c = &cols[k];
                if cursors[k] < c.len() {
                    let at = cursors[k];
                    heap.push(Reverse(HeapKey(c.value_at(at), c.row_at(at), k)));
                }
            }
            out.col_ptr.push(out.rows.len());
        }
        add_sort_comparisons(comparisons);
        out
    }

    pub fn n_features(&self) -> usize {
        self.col_ptr.len().saturating_sub(1)
    }

    pub fn nnz(&self) -> usize {
        self.rows.len()
    }

    pub fn column(&self, feature: usize) -> GlobalColumn<'_> {
        let (a, b) = (self.col_ptr[feature], self.col_ptr[feature + 1]);
        GlobalColumn {
            rows: &self.rows[a..b],
            values: &self.values[a..b],
        }
    }
}

struct HeapKey(f64, u32, usize);

impl PartialEq for HeapKey {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other).is_eq()
    }
}

impl Eq for HeapKey {}

impl PartialOrd for HeapKey {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for HeapKey {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.0
            .total_cmp(&other.0)
            .then(self.1.cmp(&other.1))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::block_store::build_blocks;
    use crate::data::Entry;

    #[test]
    fn merged_blocks_equal_direct_sort() {
        let rows: Vec<Vec<Entry>> = (0..1000u32)
            .map(|i| {
                let mut r = vec![Entry::new(0, f64::from((i * 37) % 11))];
                if i % 3 == 0 {
                    r.push(Entry::new(1, f64::from(i % 7) - 3.0));
                }
                r
            })
            .collect();
        let m = DataMatrix::from_rows(rows, vec![0.0; 1000], None, 2).unwrap();
        let direct = SortedColumns::from_matrix(&m);
        let blocks = build_blocks(&m, 256).unwrap();
        assert_eq!(blocks.len(), 4);
        let merged = SortedColumns::from_blocks(&blocks, 2);
        assert_eq!(direct, merged);
    }
}
