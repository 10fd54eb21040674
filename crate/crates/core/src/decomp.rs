//! Slab decomposition of stencil operators and row-block decomposition of CSR
//! matrices over a pool of in-process workers.
//!
//! Each worker owns a contiguous block of every vector. An apply runs in two
//! phases separated by a barrier: workers first copy the remote values they read
//! into private halo buffers, then compute their block. Every copied scalar is
//! counted in a [`TransferLedger`]. Results are bitwise identical to the
//! single-domain operators for any worker count.

use std::ops::Range;
use std::path::Path;
use std::sync::{Barrier, Mutex};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::Grid3D;
use crate::matfunc::{newton_apply, LejaInterpolant, NewtonResult};
use crate::operator::{with_combine, ChunkFn, Combine, LinearOperator, VectorOps};
use crate::scalar::Scalar;
use crate::sparse::CsrMatrix;
use crate::stencil::{BoundaryCondition, Slab, StencilOperator};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PartitionMode {
    /// z-slabs of a structured grid with a one-plane halo.
    StencilSlab,
    /// Row blocks of a square matrix; every worker reads the full vector.
    CsrRows,
}

/// Halo planes received from the lower and upper neighbor.
type Halos<T> = (Option<Vec<T>>, Option<Vec<T>>);

/// Balanced split of `0..extent` (planes or rows) into `m` nonempty ranges.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Partition {
    mode: PartitionMode,
    ranges: Vec<Range<usize>>,
    /// Scalars per plane or row.
    unit: usize,
}

impl Partition {
    pub fn new(extent: usize, m: usize, mode: PartitionMode, unit: usize) -> Result<Self> {
        if m == 0 {
            return Err(Error::invalid("worker count must be at least 1"));
        }
        if m > extent {
            let what = match mode {
                PartitionMode::StencilSlab => "z-planes",
                PartitionMode::CsrRows => "rows",
            };
            return Err(Error::invalid(format!(
                "{m} workers requested but there are only {extent} {what}"
            )));
        }
        let (base, extra) = (extent / m, extent % m);
        let mut ranges = Vec::with_capacity(m);
        let mut lo = 0;
        for w in 0..m {
            let len = base + usize::from(w < extra);
            ranges.push(lo..lo + len);
            lo += len;
        }
        Ok(Partition { mode, ranges, unit })
    }

    pub fn stencil(grid: Grid3D, m: usize) -> Result<Self> {
        Self::new(grid.nz(), m, PartitionMode::StencilSlab, grid.plane_len())
    }

    pub fn csr_rows(n: usize, m: usize) -> Result<Self> {
        Self::new(n, m, PartitionMode::CsrRows, 1)
    }

    pub fn m(&self) -> usize {
        self.ranges.len()
    }

    pub fn mode(&self) -> PartitionMode {
        self.mode
    }

    /// Owned planes (stencil) or rows (CSR) per worker.
    pub fn ranges(&self) -> &[Range<usize>] {
        &self.ranges
    }

    pub fn sizes(&self) -> Vec<usize> {
        self.ranges.iter().map(|r| r.len()).collect()
    }

    /// Owned vector entries per worker.
    pub fn index_ranges(&self) -> Vec<Range<usize>> {
        self.ranges
            .iter()
            .map(|r| r.start * self.unit..r.end * self.unit)
            .collect()
    }

    /// Halo depth in planes, `None` when the whole remote vector is exchanged.
    pub fn halo_planes(&self) -> Option<usize> {
        match self.mode {
            PartitionMode::StencilSlab => Some(1),
            PartitionMode::CsrRows => None,
        }
    }

    pub fn len(&self) -> usize {
        self.ranges.last().map_or(0, |r| r.end * self.unit)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Splits global values into worker blocks.
    pub fn split<T: Scalar>(&self, values: &[T]) -> Result<SlabVector<T>> {
        if values.len() != self.len() {
            return Err(Error::Dimension {
                expected: self.len(),
                actual: values.len(),
            });
        }
        let ranges = self.index_ranges();
        let parts = ranges.iter().map(|r| values[r.clone()].to_vec()).collect();
        Ok(SlabVector { parts, ranges })
    }
}

/// Scalars moved per stencil apply: two planes per interface, plus the wrap-around
/// interface when z is periodic and there is more than one worker.
pub fn stencil_halo_scalars(grid: Grid3D, m: usize, periodic_z: bool) -> u64 {
    if m <= 1 {
        return 0;
    }
    let interfaces = if periodic_z { m } else { m - 1 };
    2 * interfaces as u64 * grid.plane_len() as u64
}

/// Scalars moved per CSR apply when every worker gathers the full vector.
pub fn csr_exchange_scalars(n: usize, m: usize) -> u64 {
    m.saturating_sub(1) as u64 * n as u64
}

/// A vector stored as one block per worker.
#[derive(Clone, Debug, PartialEq)]
pub struct SlabVector<T> {
    parts: Vec<Vec<T>>,
    ranges: Vec<Range<usize>>,
}

impl<T: Scalar> SlabVector<T> {
    pub fn parts(&self) -> &[Vec<T>] {
        &self.parts
    }

    pub fn ranges(&self) -> &[Range<usize>] {
        &self.ranges
    }

    pub fn to_vec(&self) -> Vec<T> {
        self.parts.concat()
    }
}

impl<T: Scalar> VectorOps<T> for SlabVector<T> {
    fn len(&self) -> usize {
        self.ranges.last().map_or(0, |r| r.end)
    }

    fn zeros_like(&self) -> Self {
        SlabVector {
            parts: self.parts.iter().map(|p| vec![T::zero(); p.len()]).collect(),
            ranges: self.ranges.clone(),
        }
    }

    fn axpy(&mut self, a: T, x: &Self) {
        debug_assert_eq!(self.ranges, x.ranges);
        for (p, q) in self.parts.iter_mut().zip(&x.parts) {
            for (y, &xi) in p.iter_mut().zip(q) {
                *y += a * xi;
            }
        }
    }

    fn scale(&mut self, a: T) {
        for y in self.parts.iter_mut().flatten() {
            *y = a * *y;
        }
    }

    fn norm2(&self) -> f64 {
        self.parts
            .iter()
            .flatten()
            .fold(0.0, |acc, v| acc + v.norm_sqr())
            .sqrt()
    }

    fn max_abs(&self) -> f64 {
        self.parts.iter().flatten().map(|v| v.abs()).fold(0.0, f64::max)
    }

    fn map_chunks(
        &self,
        out: &mut Self,
        f: &ChunkFn<'_, T>,
    ) -> Result<()> {
        if self.parts.len() == 1 {
            return f(&self.parts[0], 0, &mut out.parts[0]);
        }
        std::thread::scope(|s| {
            let handles: Vec<_> = self
                .parts
                .iter()
                .zip(out.parts.iter_mut())
                .zip(&self.ranges)
                .map(|((x, o), r)| s.spawn(move || f(x, r.start, o)))
                .collect();
            let results: Vec<Result<()>> = handles.into_iter().map(join).collect();
            results.into_iter().collect()
        })
    }

    fn chunk_ranges(&self) -> Vec<Range<usize>> {
        self.ranges.clone()
    }
}

fn join<R>(h: std::thread::ScopedJoinHandle<'_, R>) -> R {
    h.join().unwrap_or_else(|e| std::panic::resume_unwind(e))
}

/// One row of the ledger CSV.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TransferRecord {
    pub apply: u64,
    pub scalars_moved: u64,
    pub cumulative_bytes: u64,
}

/// Scalars copied between workers, per apply and in total.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct TransferLedger {
    records: Vec<TransferRecord>,
    total_scalars: u64,
    total_bytes: u64,
}

impl TransferLedger {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn record(&mut self, scalars: u64, scalar_bytes: usize) {
        self.total_scalars += scalars;
        self.total_bytes += scalars * scalar_bytes as u64;
        self.records.push(TransferRecord {
            apply: self.records.len() as u64,
            scalars_moved: scalars,
            cumulative_bytes: self.total_bytes,
        });
    }

    pub fn applies(&self) -> usize {
        self.records.len()
    }

    pub fn records(&self) -> &[TransferRecord] {
        &self.records
    }

    pub fn last(&self) -> Option<u64> {
        self.records.last().map(|r| r.scalars_moved)
    }

    pub fn total_scalars(&self) -> u64 {
        self.total_scalars
    }

    pub fn total_bytes(&self) -> u64 {
        self.total_bytes
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut w = csv::Writer::from_path(path)?;
        for r in &self.records {
            w.serialize(r)?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }

    pub fn read_csv(path: impl AsRef<Path>) -> Result<Self> {
        let mut ledger = TransferLedger::new();
        let mut prev = 0;
        for r in csv::Reader::from_path(path)?.deserialize() {
            let r: TransferRecord = r?;
            ledger.total_scalars += r.scalars_moved;
            ledger.total_bytes = r.cumulative_bytes;
            if r.cumulative_bytes < prev || r.apply != ledger.records.len() as u64 {
                return Err(Error::invalid(format!("ledger record {} is out of sequence", r.apply)));
            }
            prev = r.cumulative_bytes;
            ledger.records.push(r);
        }
        Ok(ledger)
    }
}

fn check_vector<T>(part: &Partition, x: &SlabVector<T>) -> Result<()> {
    if x.ranges != part.index_ranges() {
        let actual = x.ranges.last().map_or(0, |r| r.end);
        return Err(if actual != part.len() {
            Error::Dimension {
                expected: part.len(),
                actual,
            }
        } else {
            Error::invalid(format!(
                "vector split into {} blocks does not match the {}-worker partition",
                x.ranges.len(),
                part.m()
            ))
        });
    }
    Ok(())
}

/// Copy-only modes need no remote data.
fn apply_local<T: Scalar, C: Fn(T, T) -> T>(x: &SlabVector<T>, out: &mut SlabVector<T>, comb: &C) {
    for (p, o) in x.parts.iter().zip(out.parts.iter_mut()) {
        for (oi, &xi) in o.iter_mut().zip(p) {
            *oi = comb(T::zero(), xi);
        }
    }
}

/// Runs `work(worker, out_block)` on one thread per block, after `exchange(worker)`
/// has completed on every worker. Returns the total of the exchange counts.
fn superstep<T, H, E, W>(out: &mut SlabVector<T>, exchange: E, work: W) -> Result<u64>
where
    T: Scalar,
    H: Send,
    E: Fn(usize) -> (H, u64) + Sync,
    W: Fn(usize, &H, &mut [T]) -> Result<()> + Sync,
{
    let m = out.parts.len();
    if m == 1 {
        let (halo, moved) = exchange(0);
        work(0, &halo, &mut out.parts[0])?;
        return Ok(moved);
    }
    let barrier = Barrier::new(m);
    let (exchange, work, barrier) = (&exchange, &work, &barrier);
    std::thread::scope(|s| {
        let handles: Vec<_> = out
            .parts
            .iter_mut()
            .enumerate()
            .map(|(w, o)| {
                s.spawn(move || {
                    let (halo, moved) = exchange(w);
                    barrier.wait();
                    work(w, &halo, o).map(|()| moved)
                })
            })
            .collect();
        let results: Vec<Result<u64>> = handles.into_iter().map(join).collect();
        results.into_iter().sum()
    })
}

/// A stencil operator split into z-slabs.
pub struct PartitionedStencil<'a> {
    op: &'a StencilOperator,
    part: Partition,
    ledger: Mutex<TransferLedger>,
}

impl<'a> PartitionedStencil<'a> {
    pub fn new(op: &'a StencilOperator, m: usize) -> Result<Self> {
        Self::with_partition(op, Partition::stencil(op.grid(), m)?)
    }

    pub fn with_partition(op: &'a StencilOperator, part: Partition) -> Result<Self> {
        if part.mode != PartitionMode::StencilSlab || part.len() != op.grid().len() {
            return Err(Error::invalid(format!(
                "partition of {} entries ({:?}) does not fit a stencil on {}",
                part.len(),
                part.mode,
                op.grid()
            )));
        }
        Ok(PartitionedStencil {
            op,
            part,
            ledger: Mutex::new(TransferLedger::new()),
        })
    }

    pub fn operator(&self) -> &StencilOperator {
        self.op
    }

    pub fn partition(&self) -> &Partition {
        &self.part
    }

    pub fn ledger(&self) -> TransferLedger {
        self.ledger.lock().expect("ledger lock").clone()
    }

    pub fn reset_ledger(&self) {
        *self.ledger.lock().expect("ledger lock") = TransferLedger::new();
    }

    /// Scalars one operator apply moves.
    pub fn scalars_per_apply(&self) -> u64 {
        stencil_halo_scalars(self.op.grid(), self.part.m(), self.periodic_z())
    }

    fn periodic_z(&self) -> bool {
        matches!(self.op.boundary(), BoundaryCondition::Periodic) && self.op.grid().active()[2]
    }

    /// `α(Ax + b) + βx` with the boundary function evaluated inline.
    pub fn affine_fused_apply<T: Scalar>(
        &self,
        alpha: T,
        beta: T,
        x: &SlabVector<T>,
        out: &mut SlabVector<T>,
    ) -> Result<()> {
        check_vector(&self.part, x)?;
        check_vector(&self.part, out)?;
        let mode = Combine::new(alpha, beta);
        if !mode.uses_operator() {
            with_combine!(mode, |comb| apply_local(x, out, &comb));
            return Ok(());
        }
        let moved = with_combine!(mode, |comb| self.run(x, out, &comb))?;
        self.ledger.lock().expect("ledger lock").record(moved, T::KIND.bytes());
        Ok(())
    }

    fn run<T, C>(&self, x: &SlabVector<T>, out: &mut SlabVector<T>, comb: &C) -> Result<u64>
    where
        T: Scalar,
        C: Fn(T, T) -> T + Sync,
    {
        let m = self.part.m();
        let pl = self.op.grid().plane_len();
        let wrap = self.periodic_z();
        let first = |w: usize| &x.parts[w][..pl];
        let last = |w: usize| &x.parts[w][x.parts[w].len() - pl..];
        // Halo planes are pulled into private buffers. With one worker a periodic
        // wrap reads the worker's own planes and moves nothing.
        let exchange = |w: usize| -> (Halos<T>, u64) {
            if m == 1 {
                return ((None, None), 0);
            }
            let below = if w > 0 {
                Some(last(w - 1).to_vec())
            } else if wrap {
                Some(last(m - 1).to_vec())
            } else {
                None
            };
            let above = if w + 1 < m {
                Some(first(w + 1).to_vec())
            } else if wrap {
                Some(first(0).to_vec())
            } else {
                None
            };
            let moved = (below.is_some() as u64 + above.is_some() as u64) * pl as u64;
            ((below, above), moved)
        };
        let work = |w: usize, halo: &(Option<Vec<T>>, Option<Vec<T>>), o: &mut [T]| {
            let (below, above) = if m == 1 && wrap {
                (Some(last(0)), Some(first(0)))
            } else {
                (halo.0.as_deref(), halo.1.as_deref())
            };
            let slab = Slab {
                z_lo: self.part.ranges[w].start,
                planes: &x.parts[w],
                below,
                above,
            };
            self.op.run_slab(&slab, o, comb)
        };
        superstep(out, exchange, work)
    }
}

impl<T: Scalar> LinearOperator<T> for PartitionedStencil<'_> {
    type Vector = SlabVector<T>;

    fn dim(&self) -> usize {
        self.part.len()
    }

    fn fused_apply(&self, alpha: T, beta: T, x: &SlabVector<T>, out: &mut SlabVector<T>) -> Result<()> {
        if !self.op.boundary().is_linear() {
            return Err(Error::BoundaryKind(
                "fused_apply needs a linear operator; use apply_affine_split to separate the boundary function".into(),
            ));
        }
        self.affine_fused_apply(alpha, beta, x, out)
    }

    fn gershgorin_bounds(&self) -> (f64, f64) {
        self.op.gershgorin()
    }

    fn vector_from(&self, values: &[T]) -> Result<SlabVector<T>> {
        self.part.split(values)
    }

    fn vector_to_vec(&self, v: &SlabVector<T>) -> Vec<T> {
        v.to_vec()
    }
}

/// A square CSR matrix split into row blocks.
pub struct PartitionedCsr<'a, T> {
    a: &'a CsrMatrix<T>,
    part: Partition,
    ledger: Mutex<TransferLedger>,
}

impl<'a, T: Scalar> PartitionedCsr<'a, T> {
    pub fn new(a: &'a CsrMatrix<T>, m: usize) -> Result<Self> {
        if !a.is_square() {
            return Err(Error::invalid(format!(
                "row-block decomposition needs a square matrix, got {}x{}",
                a.nrows(),
                a.ncols()
            )));
        }
        Ok(PartitionedCsr {
            a,
            part: Partition::csr_rows(a.nrows(), m)?,
            ledger: Mutex::new(TransferLedger::new()),
        })
    }

    pub fn matrix(&self) -> &CsrMatrix<T> {
        self.a
    }

    pub fn partition(&self) -> &Partition {
        &self.part
    }

    pub fn ledger(&self) -> TransferLedger {
        self.ledger.lock().expect("ledger lock").clone()
    }

    pub fn reset_ledger(&self) {
        *self.ledger.lock().expect("ledger lock") = TransferLedger::new();
    }

    pub fn scalars_per_apply(&self) -> u64 {
        csr_exchange_scalars(self.a.nrows(), self.part.m())
    }

    fn run<C>(&self, x: &SlabVector<T>, out: &mut SlabVector<T>, comb: &C) -> Result<u64>
    where
        C: Fn(T, T) -> T + Sync,
    {
        let n = self.a.nrows();
        // Every worker assembles the full vector; only remote blocks count as moved.
        let exchange = |w: usize| -> (Vec<T>, u64) {
            let mut full = Vec::with_capacity(n);
            for p in &x.parts {
                full.extend_from_slice(p);
            }
            (full, (n - x.parts[w].len()) as u64)
        };
        let work = |w: usize, full: &Vec<T>, o: &mut [T]| {
            self.a.rows_into(self.part.ranges[w].clone(), full, o, comb, true);
            Ok(())
        };
        superstep(out, exchange, work)
    }
}

impl<T: Scalar> LinearOperator<T> for PartitionedCsr<'_, T> {
    type Vector = SlabVector<T>;

    fn dim(&self) -> usize {
        self.a.nrows()
    }

    fn fused_apply(&self, alpha: T, beta: T, x: &SlabVector<T>, out: &mut SlabVector<T>) -> Result<()> {
        check_vector(&self.part, x)?;
        check_vector(&self.part, out)?;
        let mode = Combine::new(alpha, beta);
        if !mode.uses_operator() {
            with_combine!(mode, |comb| apply_local(x, out, &comb));
            return Ok(());
        }
        let moved = with_combine!(mode, |comb| self.run(x, out, &comb))?;
        self.ledger.lock().expect("ledger lock").record(moved, T::KIND.bytes());
        Ok(())
    }

    fn gershgorin_bounds(&self) -> (f64, f64) {
        self.a.gershgorin()
    }

    fn vector_from(&self, values: &[T]) -> Result<SlabVector<T>> {
        self.part.split(values)
    }

    fn vector_to_vec(&self, v: &SlabVector<T>) -> Vec<T> {
        v.to_vec()
    }
}

/// `αAx + βx` on global vectors through a decomposed operator.
pub fn partitioned_apply<T, P>(op: &P, alpha: T, beta: T, x: &[T]) -> Result<Vec<T>>
where
    T: Scalar,
    P: LinearOperator<T, Vector = SlabVector<T>>,
{
    let xs = op.vector_from(x)?;
    let mut out = xs.zeros_like();
    op.fused_apply(alpha, beta, &xs, &mut out)?;
    Ok(out.to_vec())
}

/// Newton interpolation on global vectors with every product running through the
/// decomposed operator.
pub fn partitioned_newton_apply<T, P>(
    op: &P,
    interp: &LejaInterpolant,
    v: &[T],
    tol: f64,
) -> Result<NewtonResult<Vec<T>>>
where
    T: Scalar,
    P: LinearOperator<T, Vector = SlabVector<T>>,
{
    let vs = op.vector_from(v)?;
    let r = newton_apply::<T, P>(op, interp, &vs, tol)?;
    Ok(NewtonResult {
        value: r.value.to_vec(),
        matvecs: r.matvecs,
        degree: r.degree,
    })
}
