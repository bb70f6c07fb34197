//! Compressed sparse row matrices and the kernels the walk models are built from.
//!
//! Every matrix keeps sorted, unique column indices within a row and never stores
//! zeros. Constructors that take unsorted input (triplets, dense rows) normalize it.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Rows per rayon task in [`SparseMatrix::spmm`].
const SPMM_CHUNK: usize = 256;

#[derive(Clone, Debug, PartialEq)]
pub struct SparseMatrix<T> {
    n_rows: usize,
    n_cols: usize,
    row_offsets: Vec<usize>,
    col_indices: Vec<usize>,
    values: Vec<T>,
}

impl<T: Scalar> SparseMatrix<T> {
    /// Builds a matrix from raw CSR arrays, checking every structural invariant.
    /// Stored zeros are removed.
    pub fn from_csr(
        n_rows: usize,
        n_cols: usize,
        row_offsets: Vec<usize>,
        col_indices: Vec<usize>,
        values: Vec<T>,
    ) -> Result<Self> {
        if row_offsets.len() != n_rows + 1 {
            return Err(Error::InvalidStructure(format!(
                "row_offsets has length {}, expected {}",
                row_offsets.len(),
                n_rows + 1
            )));
        }
        if col_indices.len() != values.len() {
            return Err(Error::InvalidStructure(format!(
                "{} column indices but {} values",
                col_indices.len(),
                values.len()
            )));
        }
        if row_offsets[0] != 0 || row_offsets[n_rows] != col_indices.len() {
            return Err(Error::InvalidStructure(
                "row_offsets must start at 0 and end at nnz".into(),
            ));
        }
        for row in 0..n_rows {
            let (start, end) = (row_offsets[row], row_offsets[row + 1]);
            if start > end {
                return Err(Error::InvalidStructure(format!(
                    "row_offsets decrease at row {row}"
                )));
            }
            let cols = &col_indices[start..end];
            if cols.windows(2).any(|w| w[0] >= w[1]) {
                return Err(Error::InvalidStructure(format!(
                    "columns of row {row} are not strictly increasing"
                )));
            }
            if let Some(&last) = cols.last() {
                if last >= n_cols {
                    return Err(Error::InvalidStructure(format!(
                        "column {last} out of range in row {row} (n_cols = {n_cols})"
                    )));
                }
            }
        }
        let mut m = Self {
            n_rows,
            n_cols,
            row_offsets,
            col_indices,
            values,
        };
        m.retain(|_, _, v| v != T::zero());
        Ok(m)
    }

    pub fn zeros(n_rows: usize, n_cols: usize) -> Self {
        Self {
            n_rows,
            n_cols,
            row_offsets: vec![0; n_rows + 1],
            col_indices: Vec::new(),
            values: Vec::new(),
        }
    }

    pub fn identity(n: usize) -> Self {
        Self {
            n_rows: n,
            n_cols: n,
            row_offsets: (0..=n).collect(),
            col_indices: (0..n).collect(),
            values: vec![T::one(); n],
        }
    }

    /// Builds a matrix from `(row, col, value)` triplets in any order.
    /// Duplicate coordinates are summed; zero results are dropped.
    pub fn from_triplets<I>(n_rows: usize, n_cols: usize, triplets: I) -> Result<Self>
    where
        I: IntoIterator<Item = (usize, usize, T)>,
    {
        let mut entries: Vec<(usize, usize, T)> = triplets.into_iter().collect();
        for &(r, c, _) in &entries {
            if r >= n_rows || c >= n_cols {
                return Err(Error::InvalidStructure(format!(
                    "triplet ({r}, {c}) outside a {n_rows}x{n_cols} matrix"
                )));
            }
        }
        // Stable sort keeps summation order equal to input order.
        entries.sort_by_key(|&(r, c, _)| (r, c));
        let mut row_offsets = vec![0usize; n_rows + 1];
        let mut col_indices = Vec::with_capacity(entries.len());
        let mut values: Vec<T> = Vec::with_capacity(entries.len());
        let mut last: Option<(usize, usize)> = None;
        for (r, c, v) in entries {
            if last == Some((r, c)) {
                let tail = values.last_mut().expect("previous entry");
                *tail = *tail + v;
            } else {
                row_offsets[r + 1] += 1;
                col_indices.push(c);
                values.push(v);
                last = Some((r, c));
            }
        }
        for r in 0..n_rows {
            row_offsets[r + 1] += row_offsets[r];
        }
        let mut m = Self {
            n_rows,
            n_cols,
            row_offsets,
            col_indices,
            values,
        };
        m.retain(|_, _, v| v != T::zero());
        Ok(m)
    }

    /// Builds a matrix from dense rows of equal length.
    pub fn from_dense(rows: &[Vec<T>]) -> Result<Self> {
        let n_rows = rows.len();
        let n_cols = rows.first().map_or(0, Vec::len);
        let mut row_offsets = Vec::with_capacity(n_rows + 1);
        row_offsets.push(0);
        let mut col_indices = Vec::new();
        let mut values = Vec::new();
        for (r, row) in rows.iter().enumerate() {
            if row.len() != n_cols {
                return Err(Error::InvalidStructure(format!(
                    "row {r} has {} columns, expected {n_cols}",
                    row.len()
                )));
            }
            for (c, &v) in row.iter().enumerate() {
                if v != T::zero() {
                    col_indices.push(c);
                    values.push(v);
                }
            }
            row_offsets.push(col_indices.len());
        }
        Ok(Self {
            n_rows,
            n_cols,
            row_offsets,
            col_indices,
            values,
        })
    }

    pub fn to_dense(&self) -> Vec<Vec<T>> {
        let mut dense = vec![vec![T::zero(); self.n_cols]; self.n_rows];
        for (r, c, v) in self.iter() {
            dense[r][c] = v;
        }
        dense
    }

    #[inline]
    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    #[inline]
    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    #[inline]
    pub fn shape(&self) -> (usize, usize) {
        (self.n_rows, self.n_cols)
    }

    #[inline]
    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row_offsets(&self) -> &[usize] {
        &self.row_offsets
    }

    pub fn col_indices(&self) -> &[usize] {
        &self.col_indices
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    /// Column indices and values stored in `row`.
    #[inline]
    pub fn row(&self, row: usize) -> (&[usize], &[T]) {
        let (start, end) = (self.row_offsets[row], self.row_offsets[row + 1]);
        (&self.col_indices[start..end], &self.values[start..end])
    }

    #[inline]
    pub fn row_nnz(&self, row: usize) -> usize {
        self.row_offsets[row + 1] - self.row_offsets[row]
    }

    /// Value at `(row, col)`, zero when not stored.
    pub fn get(&self, row: usize, col: usize) -> T {
        let (cols, vals) = self.row(row);
        match cols.binary_search(&col) {
            Ok(pos) => vals[pos],
            Err(_) => T::zero(),
        }
    }

    /// Iterates stored entries in row-major order.
    pub fn iter(&self) -> impl Iterator<Item = (usize, usize, T)> + '_ {
        (0..self.n_rows).flat_map(move |r| {
            let (cols, vals) = self.row(r);
            cols.iter().zip(vals).map(move |(&c, &v)| (r, c, v))
        })
    }

    pub fn row_sums(&self) -> Vec<T> {
        (0..self.n_rows)
            .map(|r| self.row(r).1.iter().fold(T::zero(), |acc, &v| acc + v))
            .collect()
    }

    /// Number of stored entries per column.
    pub fn col_nnz(&self) -> Vec<usize> {
        let mut counts = vec![0usize; self.n_cols];
        for &c in &self.col_indices {
            counts[c] += 1;
        }
        counts
    }

    /// Keeps the entries for which `keep(row, col, value)` holds.
    pub fn retain<F>(&mut self, mut keep: F)
    where
        F: FnMut(usize, usize, T) -> bool,
    {
        let mut write = 0;
        let mut start = 0;
        for r in 0..self.n_rows {
            let end = self.row_offsets[r + 1];
            for read in start..end {
                let (c, v) = (self.col_indices[read], self.values[read]);
                if keep(r, c, v) {
                    self.col_indices[write] = c;
                    self.values[write] = v;
                    write += 1;
                }
            }
            start = end;
            self.row_offsets[r + 1] = write;
        }
        self.col_indices.truncate(write);
        self.values.truncate(write);
    }

    /// Applies `f(row, col, value)` to every stored entry, dropping zero results.
    pub fn map_entries<F>(&self, mut f: F) -> Self
    where
        F: FnMut(usize, usize, T) -> T,
    {
        let mut out = self.clone();
        let mut idx = 0;
        for r in 0..out.n_rows {
            for _ in out.row_offsets[r]..out.row_offsets[r + 1] {
                out.values[idx] = f(r, out.col_indices[idx], out.values[idx]);
                idx += 1;
            }
        }
        out.retain(|_, _, v| v != T::zero());
        out
    }

    /// Scales each row so that its stored values sum to one. All-zero rows stay zero.
    pub fn row_normalize(&self) -> Result<Self> {
        if let Some((row, col, value)) = self.iter().find(|&(_, _, v)| v < T::zero()) {
            return Err(Error::NegativeValue {
                row,
                col,
                value: value.to_f64_lossy(),
            });
        }
        let mut out = self.clone();
        for r in 0..out.n_rows {
            let (start, end) = (out.row_offsets[r], out.row_offsets[r + 1]);
            let sum = out.values[start..end]
                .iter()
                .fold(T::zero(), |acc, &v| acc + v);
            if sum > T::zero() {
                for v in &mut out.values[start..end] {
                    *v = *v / sum;
                }
            }
        }
        Ok(out)
    }

    /// Sparse product `self * rhs`. Rows are computed independently (in parallel for
    /// large inputs) with a fixed accumulation order, so output never depends on
    /// the thread count.
    pub fn spmm(&self, rhs: &Self) -> Result<Self> {
        self.spmm_impl(rhs, None)
    }

    /// [`spmm`](Self::spmm) keeping only the `k` largest entries of each output row
    /// (ties to the smaller column), without materializing the full product.
    pub fn spmm_top_k(&self, rhs: &Self, k: usize) -> Result<Self> {
        self.spmm_impl(rhs, Some(k))
    }

    fn spmm_impl(&self, rhs: &Self, keep: Option<usize>) -> Result<Self> {
        if self.n_cols != rhs.n_rows {
            return Err(Error::DimensionMismatch {
                op: "spmm",
                left_rows: self.n_rows,
                left_cols: self.n_cols,
                right_rows: rhs.n_rows,
                right_cols: rhs.n_cols,
            });
        }
        let n_cols = rhs.n_cols;
        let tol = T::drop_tolerance();
        let chunks: Vec<(Vec<usize>, Vec<usize>, Vec<T>)> = (0..self.n_rows)
            .collect::<Vec<_>>()
            .par_chunks(SPMM_CHUNK)
            .map(|rows| {
                let mut acc = vec![T::zero(); n_cols];
                let mut touched = vec![false; n_cols];
                let mut pattern: Vec<usize> = Vec::new();
                let mut lens = Vec::with_capacity(rows.len());
                let mut cols_out = Vec::new();
                let mut vals_out = Vec::new();
                for &r in rows {
                    let (a_cols, a_vals) = self.row(r);
                    for (&k, &a) in a_cols.iter().zip(a_vals) {
                        let (b_cols, b_vals) = rhs.row(k);
                        for (&c, &b) in b_cols.iter().zip(b_vals) {
                            if !touched[c] {
                                touched[c] = true;
                                pattern.push(c);
                            }
                            acc[c] = acc[c] + a * b;
                        }
                    }
                    pattern.sort_unstable();
                    let before = cols_out.len();
                    for &c in &pattern {
                        let v = acc[c];
                        if v.abs() >= tol {
                            cols_out.push(c);
                            vals_out.push(v);
                        }
                        acc[c] = T::zero();
                        touched[c] = false;
                    }
                    pattern.clear();
                    if let Some(k) = keep {
                        if cols_out.len() - before > k {
                            truncate_row(&mut cols_out, &mut vals_out, before, k);
                        }
                    }
                    lens.push(cols_out.len() - before);
                }
                (lens, cols_out, vals_out)
            })
            .collect();

        let mut row_offsets = Vec::with_capacity(self.n_rows + 1);
        row_offsets.push(0);
        let total: usize = chunks.iter().map(|c| c.1.len()).sum();
        let mut col_indices = Vec::with_capacity(total);
        let mut values = Vec::with_capacity(total);
        for (lens, cols, vals) in chunks {
            for len in lens {
                row_offsets.push(row_offsets.last().copied().unwrap_or(0) + len);
            }
            col_indices.extend(cols);
            values.extend(vals);
        }
        Ok(Self {
            n_rows: self.n_rows,
            n_cols,
            row_offsets,
            col_indices,
            values,
        })
    }

    pub fn transpose(&self) -> Self {
        let mut counts = vec![0usize; self.n_cols + 1];
        for &c in &self.col_indices {
            counts[c + 1] += 1;
        }
        for c in 0..self.n_cols {
            counts[c + 1] += counts[c];
        }
        let row_offsets = counts.clone();
        let mut next = counts;
        let mut col_indices = vec![0usize; self.nnz()];
        let mut values = vec![T::zero(); self.nnz()];
        // Rows are visited in increasing order, so output columns come out sorted.
        for (r, c, v) in self.iter() {
            let pos = next[c];
            col_indices[pos] = r;
            values[pos] = v;
            next[c] += 1;
        }
        Self {
            n_rows: self.n_cols,
            n_cols: self.n_rows,
            row_offsets,
            col_indices,
            values,
        }
    }

    /// Multiplies column `j` by `factors[j]`. Entries scaled to zero are dropped.
    pub fn scale_columns(&self, factors: &[T]) -> Result<Self> {
        if factors.len() != self.n_cols {
            return Err(Error::LengthMismatch {
                op: "scale_columns",
                expected: self.n_cols,
                actual: factors.len(),
            });
        }
        if let Some(index) = factors.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidValue {
                what: "column scale factors",
                index,
                value: factors[index].to_f64_lossy(),
            });
        }
        Ok(self.map_entries(|_, c, v| v * factors[c]))
    }

    /// Keeps the `k` largest entries of every row. Ties go to the smaller column.
    pub fn top_k_per_row(&self, k: usize) -> Self {
        let mut keep = vec![false; self.nnz()];
        let mut order: Vec<usize> = Vec::new();
        for r in 0..self.n_rows {
            let (start, end) = (self.row_offsets[r], self.row_offsets[r + 1]);
            if end - start <= k {
                keep[start..end].iter_mut().for_each(|x| *x = true);
                continue;
            }
            order.clear();
            order.extend(start..end);
            // Positions are already in column order, so a stable sort on value
            // alone leaves ties ordered by column.
            order.sort_by(|&a, &b| self.values[b].partial_cmp(&self.values[a]).unwrap_or(std::cmp::Ordering::Equal));
            for &pos in &order[..k] {
                keep[pos] = true;
            }
        }
        let mut out = self.clone();
        let mut idx = 0;
        out.retain(|_, _, _| {
            let k = keep[idx];
            idx += 1;
            k
        });
        out
    }

    /// Keeps only columns whose `mask` entry is true.
    pub fn restrict_columns(&self, mask: &[bool]) -> Result<Self> {
        if mask.len() != self.n_cols {
            return Err(Error::LengthMismatch {
                op: "restrict_columns",
                expected: self.n_cols,
                actual: mask.len(),
            });
        }
        let mut out = self.clone();
        out.retain(|_, c, _| mask[c]);
        Ok(out)
    }

    /// Keeps only rows whose `mask` entry is true; other rows become empty.
    pub fn restrict_rows(&self, mask: &[bool]) -> Result<Self> {
        if mask.len() != self.n_rows {
            return Err(Error::LengthMismatch {
                op: "restrict_rows",
                expected: self.n_rows,
                actual: mask.len(),
            });
        }
        let mut out = self.clone();
        out.retain(|r, _, _| mask[r]);
        Ok(out)
    }
}

/// Keeps the `k` largest of `cols[start..]`/`vals[start..]`, preserving column order.
fn truncate_row<T: Scalar>(cols: &mut Vec<usize>, vals: &mut Vec<T>, start: usize, k: usize) {
    let mut order: Vec<usize> = (start..cols.len()).collect();
    order.sort_by(|&a, &b| vals[b].partial_cmp(&vals[a]).unwrap_or(std::cmp::Ordering::Equal));
    order.truncate(k);
    order.sort_unstable();
    for (dst, &src) in (start..).zip(&order) {
        cols[dst] = cols[src];
        vals[dst] = vals[src];
    }
    cols.truncate(start + k);
    vals.truncate(start + k);
}
