//! Compressed sparse row matrices with plain and fused SpMV.

mod assemble;
mod market;

pub use assemble::{assemble_stencil, ASSEMBLY_LIMIT};
pub use market::{read_matrix_market, write_matrix_market};

use std::ops::Range;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::operator::{with_combine, Combine, LinearOperator};
use crate::scalar::Scalar;

/// Rows handed to one rayon task in SpMV.
const ROW_CHUNK: usize = 2048;

/// Index storage, 32-bit unless a value would not fit.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum IndexArray {
    U32(Vec<u32>),
    U64(Vec<u64>),
}

impl IndexArray {
    fn from_usize(v: Vec<usize>, wide: bool) -> Self {
        if wide {
            IndexArray::U64(v.into_iter().map(|i| i as u64).collect())
        } else {
            IndexArray::U32(v.into_iter().map(|i| i as u32).collect())
        }
    }

    pub fn len(&self) -> usize {
        match self {
            IndexArray::U32(v) => v.len(),
            IndexArray::U64(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    #[inline]
    pub fn get(&self, k: usize) -> usize {
        match self {
            IndexArray::U32(v) => v[k] as usize,
            IndexArray::U64(v) => v[k] as usize,
        }
    }

    /// Bytes per stored index.
    pub fn width(&self) -> usize {
        match self {
            IndexArray::U32(_) => 4,
            IndexArray::U64(_) => 8,
        }
    }

    fn to_usize(&self) -> Vec<usize> {
        (0..self.len()).map(|k| self.get(k)).collect()
    }
}

trait Idx: Copy + Send + Sync {
    fn at(self) -> usize;
}

impl Idx for u32 {
    #[inline(always)]
    fn at(self) -> usize {
        self as usize
    }
}

impl Idx for u64 {
    #[inline(always)]
    fn at(self) -> usize {
        self as usize
    }
}

/// Bytes of a CSR matrix holding `nnz` values of `value_bytes` each with
/// `index_bytes`-wide column indices and row pointers.
pub fn csr_footprint(nrows: usize, nnz: usize, value_bytes: usize, index_bytes: usize) -> usize {
    value_bytes * nnz + index_bytes * nnz + index_bytes * (nrows + 1)
}

#[derive(Clone, Debug, PartialEq)]
pub struct CsrMatrix<T> {
    nrows: usize,
    ncols: usize,
    row_ptr: IndexArray,
    col_idx: IndexArray,
    values: Vec<T>,
}

impl<T: Scalar> CsrMatrix<T> {
    /// Builds a matrix from raw arrays, checking every structural invariant.
    pub fn new(
        nrows: usize,
        ncols: usize,
        row_ptr: Vec<usize>,
        col_idx: Vec<usize>,
        values: Vec<T>,
    ) -> Result<Self> {
        if row_ptr.len() != nrows + 1 {
            return Err(Error::invalid(format!(
                "row_ptr has length {}, expected {}",
                row_ptr.len(),
                nrows + 1
            )));
        }
        if col_idx.len() != values.len() {
            return Err(Error::invalid(format!(
                "{} column indices for {} values",
                col_idx.len(),
                values.len()
            )));
        }
        if row_ptr[0] != 0 || row_ptr[nrows] != values.len() {
            return Err(Error::invalid("row_ptr must start at 0 and end at nnz"));
        }
        for i in 0..nrows {
            if row_ptr[i] > row_ptr[i + 1] {
                return Err(Error::invalid(format!("row_ptr decreases at row {i}")));
            }
            let cols = &col_idx[row_ptr[i]..row_ptr[i + 1]];
            for (k, &c) in cols.iter().enumerate() {
                if c >= ncols {
                    return Err(Error::invalid(format!(
                        "column {c} out of bounds in row {i} ({ncols} columns)"
                    )));
                }
                if k > 0 && cols[k - 1] >= c {
                    return Err(Error::invalid(format!(
                        "columns not strictly increasing in row {i}"
                    )));
                }
            }
        }
        let wide_cols = ncols > (1usize << 31);
        let wide_ptr = values.len() > u32::MAX as usize;
        Ok(CsrMatrix {
            nrows,
            ncols,
            row_ptr: IndexArray::from_usize(row_ptr, wide_ptr),
            col_idx: IndexArray::from_usize(col_idx, wide_cols),
            values,
        })
    }

    /// Builds from `(row, col, value)` triplets in any order. Duplicates are rejected.
    pub fn from_triplets(nrows: usize, ncols: usize, mut triplets: Vec<(usize, usize, T)>) -> Result<Self> {
        for &(i, j, _) in &triplets {
            if i >= nrows || j >= ncols {
                return Err(Error::invalid(format!(
                    "entry ({i}, {j}) outside a {nrows}x{ncols} matrix"
                )));
            }
        }
        triplets.sort_by_key(|&(i, j, _)| (i, j));
        for w in triplets.windows(2) {
            if (w[0].0, w[0].1) == (w[1].0, w[1].1) {
                return Err(Error::invalid(format!("duplicate entry ({}, {})", w[0].0, w[0].1)));
            }
        }
        let mut row_ptr = vec![0usize; nrows + 1];
        for &(i, _, _) in &triplets {
            row_ptr[i + 1] += 1;
        }
        for i in 0..nrows {
            row_ptr[i + 1] += row_ptr[i];
        }
        let col_idx = triplets.iter().map(|t| t.1).collect();
        let values = triplets.into_iter().map(|t| t.2).collect();
        Self::new(nrows, ncols, row_ptr, col_idx, values)
    }

    pub fn identity(n: usize) -> Self {
        Self::new(n, n, (0..=n).collect(), (0..n).collect(), vec![T::one(); n])
            .expect("identity is well formed")
    }

    /// Row-major dense input; exact zeros are dropped.
    pub fn from_dense(nrows: usize, ncols: usize, dense: &[T]) -> Result<Self> {
        if dense.len() != nrows * ncols {
            return Err(Error::Dimension {
                expected: nrows * ncols,
                actual: dense.len(),
            });
        }
        let mut trip = Vec::new();
        for i in 0..nrows {
            for j in 0..ncols {
                let v = dense[i * ncols + j];
                if v != T::zero() {
                    trip.push((i, j, v));
                }
            }
        }
        Self::from_triplets(nrows, ncols, trip)
    }

    /// Row-major dense copy.
    pub fn to_dense(&self) -> Vec<T> {
        let mut d = vec![T::zero(); self.nrows * self.ncols];
        for i in 0..self.nrows {
            for (j, v) in self.row(i) {
                d[i * self.ncols + j] = v;
            }
        }
        d
    }

    /// Forces 64-bit column indices and row pointers.
    pub fn into_wide_indices(self) -> Self {
        CsrMatrix {
            row_ptr: IndexArray::from_usize(self.row_ptr.to_usize(), true),
            col_idx: IndexArray::from_usize(self.col_idx.to_usize(), true),
            ..self
        }
    }

    pub fn nrows(&self) -> usize {
        self.nrows
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row_ptr(&self) -> &IndexArray {
        &self.row_ptr
    }

    pub fn col_idx(&self) -> &IndexArray {
        &self.col_idx
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn row_range(&self, i: usize) -> Range<usize> {
        self.row_ptr.get(i)..self.row_ptr.get(i + 1)
    }

    /// Stored `(column, value)` pairs of row `i`.
    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, T)> + '_ {
        self.row_range(i).map(move |k| (self.col_idx.get(k), self.values[k]))
    }

    pub fn get(&self, i: usize, j: usize) -> T {
        let r = self.row_range(i);
        let (mut lo, mut hi) = (r.start, r.end);
        while lo < hi {
            let mid = (lo + hi) / 2;
            let c = self.col_idx.get(mid);
            if c == j {
                return self.values[mid];
            } else if c < j {
                lo = mid + 1;
            } else {
                hi = mid;
            }
        }
        T::zero()
    }

    pub fn is_square(&self) -> bool {
        self.nrows == self.ncols
    }

    /// Whether `|a_ij - conj(a_ji)| ≤ tol` for every stored entry.
    pub fn is_hermitian(&self, tol: f64) -> bool {
        self.is_square()
            && (0..self.nrows).all(|i| self.row(i).all(|(j, v)| (v - self.get(j, i).conj()).abs() <= tol))
    }

    /// Storage footprint of values, column indices and row pointers in bytes.
    pub fn memory_bytes(&self) -> usize {
        T::KIND.bytes() * self.nnz() + self.col_idx.width() * self.nnz() + self.row_ptr.width() * (self.nrows + 1)
    }

    /// `y = A x`, rows in parallel, each row summed in stored order.
    pub fn spmv(&self, x: &[T]) -> Result<Vec<T>> {
        let mut y = vec![T::zero(); self.nrows];
        self.spmv_into(x, &mut y)?;
        Ok(y)
    }

    pub fn spmv_into(&self, x: &[T], y: &mut [T]) -> Result<()> {
        if x.len() != self.ncols {
            return Err(Error::Dimension {
                expected: self.ncols,
                actual: x.len(),
            });
        }
        if y.len() != self.nrows {
            return Err(Error::Dimension {
                expected: self.nrows,
                actual: y.len(),
            });
        }
        self.par_rows(x, y, &|ax: T, _x: T| ax, false);
        Ok(())
    }

    /// `α A x + β x` in one pass. `A` must be square.
    pub fn fused_spmv(&self, alpha: T, beta: T, x: &[T]) -> Result<Vec<T>> {
        let mut y = vec![T::zero(); self.nrows];
        self.fused_spmv_into(alpha, beta, x, &mut y)?;
        Ok(y)
    }

    pub fn fused_spmv_into(&self, alpha: T, beta: T, x: &[T], y: &mut [T]) -> Result<()> {
        if !self.is_square() {
            return Err(Error::invalid(format!(
                "fused SpMV needs a square matrix, got {}x{}",
                self.nrows, self.ncols
            )));
        }
        if x.len() != self.ncols || y.len() != self.nrows {
            return Err(Error::Dimension {
                expected: self.ncols,
                actual: if x.len() != self.ncols { x.len() } else { y.len() },
            });
        }
        let mode = Combine::new(alpha, beta);
        with_combine!(mode, |comb| self.par_rows(x, y, &comb, true));
        Ok(())
    }

    fn par_rows<C: Fn(T, T) -> T + Sync>(&self, x: &[T], y: &mut [T], comb: &C, square: bool) {
        y.par_chunks_mut(ROW_CHUNK).enumerate().for_each(|(k, yc)| {
            let start = k * ROW_CHUNK;
            self.rows_into(start..start + yc.len(), x, yc, comb, square);
        });
    }

    /// Rows `rows` of `comb(A x, x)` into `out`, reading `x` by global column.
    pub(crate) fn rows_into<C: Fn(T, T) -> T>(
        &self,
        rows: Range<usize>,
        x: &[T],
        out: &mut [T],
        comb: &C,
        square: bool,
    ) {
        macro_rules! go {
            ($p:expr, $c:expr) => {
                rows_kernel($p, $c, &self.values, rows, x, out, comb, square)
            };
        }
        match (&self.row_ptr, &self.col_idx) {
            (IndexArray::U32(p), IndexArray::U32(c)) => go!(p, c),
            (IndexArray::U32(p), IndexArray::U64(c)) => go!(p, c),
            (IndexArray::U64(p), IndexArray::U32(c)) => go!(p, c),
            (IndexArray::U64(p), IndexArray::U64(c)) => go!(p, c),
        }
    }

    /// Gershgorin interval of the real projection: `Re(a_ii) ± Σ_{j≠i} |a_ij|`.
    pub fn gershgorin(&self) -> (f64, f64) {
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for i in 0..self.nrows {
            let mut center = 0.0;
            let mut radius = 0.0;
            for (j, v) in self.row(i) {
                if j == i {
                    center = v.to_c64().re;
                } else {
                    radius += v.abs();
                }
            }
            lo = lo.min(center - radius);
            hi = hi.max(center + radius);
        }
        if self.nrows == 0 {
            (0.0, 0.0)
        } else {
            (lo, hi)
        }
    }
}

#[allow(clippy::too_many_arguments)]
#[inline]
fn rows_kernel<T: Scalar, P: Idx, I: Idx, C: Fn(T, T) -> T>(
    ptr: &[P],
    cols: &[I],
    vals: &[T],
    rows: Range<usize>,
    x: &[T],
    out: &mut [T],
    comb: &C,
    square: bool,
) {
    for (o, i) in out.iter_mut().zip(rows) {
        let (s, e) = (ptr[i].at(), ptr[i + 1].at());
        let mut acc = T::zero();
        for (c, &v) in cols[s..e].iter().zip(&vals[s..e]) {
            acc += v * x[c.at()];
        }
        *o = comb(acc, if square { x[i] } else { T::zero() });
    }
}

impl<T: Scalar> LinearOperator<T> for CsrMatrix<T> {
    type Vector = Vec<T>;

    fn dim(&self) -> usize {
        self.nrows
    }

    fn fused_apply(&self, alpha: T, beta: T, x: &Vec<T>, out: &mut Vec<T>) -> Result<()> {
        self.fused_spmv_into(alpha, beta, x, out)
    }

    fn gershgorin_bounds(&self) -> (f64, f64) {
        self.gershgorin()
    }

    fn vector_from(&self, values: &[T]) -> Result<Vec<T>> {
        if values.len() != self.nrows {
            return Err(Error::Dimension {
                expected: self.nrows,
                actual: values.len(),
            });
        }
        Ok(values.to_vec())
    }

    fn vector_to_vec(&self, v: &Vec<T>) -> Vec<T> {
        v.clone()
    }
}
