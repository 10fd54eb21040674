//! Timing harness for the operator kernels.
//!
//! Each run applies one kernel `warmup + repetitions` times to a seeded random
//! input and reports the median and minimum wall time of the timed repetitions,
//! a throughput figure from a declared per-point flop count, a traffic estimate
//! and a checksum of the output.

use std::fmt;
use std::path::Path;
use std::str::FromStr;
use std::time::Instant;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::decomp::{PartitionedCsr, PartitionedStencil, SlabVector};
use crate::error::{Error, Result};
use crate::grid::Grid3D;
use crate::integrator::{Combustion, Nonlinearity};
use crate::operator::{LinearOperator, VectorOps};
use crate::scalar::{checksum, Scalar, ScalarKind};
use crate::sparse::assemble_stencil;
use crate::stencil::{BoundaryCondition, Coefficient, StencilOperator, Traversal};

pub const DEFAULT_REPETITIONS: usize = 10;
pub const DEFAULT_WARMUP: usize = 2;
pub const MIN_REPETITIONS: usize = 3;

/// `α` and `β` of the timed fused products, an implicit-Euler-like `I - hA`.
const ALPHA: f64 = -1e-4;
const BETA: f64 = 1.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum KernelId {
    /// `(αA + βI)x` with the boundary function evaluated inline.
    Fused,
    /// As `Fused` with the coefficient `1/sqrt(1+x²+y²)`.
    FusedCoeff,
    /// Homogeneous fused product plus a precomputed boundary vector.
    Split,
    /// The combustion source evaluated pointwise.
    CombustionG,
    /// Fused SpMV on the assembled stencil matrix.
    CsrFused,
    /// `α = 0, β = 1`: a copy, no arithmetic.
    Copy,
}

impl KernelId {
    pub const ALL: [KernelId; 6] = [
        KernelId::Fused,
        KernelId::FusedCoeff,
        KernelId::Split,
        KernelId::CombustionG,
        KernelId::CsrFused,
        KernelId::Copy,
    ];

    pub fn name(self) -> &'static str {
        match self {
            KernelId::Fused => "fused",
            KernelId::FusedCoeff => "fused-coeff",
            KernelId::Split => "split",
            KernelId::CombustionG => "combustion-g",
            KernelId::CsrFused => "csr-fused",
            KernelId::Copy => "copy",
        }
    }

    /// Declared flops per grid point. The CSR kernel counts `2·nnz + 3·n` per apply
    /// instead, see [`csr_flops`].
    pub fn flops_per_point(self) -> f64 {
        match self {
            KernelId::Fused => 10.0,
            KernelId::FusedCoeff => 10.0 + Coefficient::inverse_radial().flops() as f64,
            KernelId::Split => 12.0,
            KernelId::CombustionG => 7.0,
            KernelId::CsrFused => 0.0,
            KernelId::Copy => 0.0,
        }
    }

    /// Whether the traversal order applies to this kernel.
    pub fn uses_traversal(self) -> bool {
        matches!(self, KernelId::Fused | KernelId::FusedCoeff | KernelId::Split | KernelId::Copy)
    }
}

impl fmt::Display for KernelId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for KernelId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim().to_ascii_lowercase();
        KernelId::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::invalid(format!("unknown kernel `{s}`")))
    }
}

/// `2·nnz + 3·n`: one multiply-add per stored entry and `αy + βx` per row.
pub fn csr_flops(n: usize, nnz: usize) -> f64 {
    2.0 * nnz as f64 + 3.0 * n as f64
}

#[derive(Clone, Debug)]
pub struct BenchSpec {
    pub kernel: KernelId,
    pub grid: Grid3D,
    pub precision: ScalarKind,
    pub boundary: BoundaryCondition,
    pub traversal: Traversal,
    pub repetitions: usize,
    pub warmup: usize,
    pub workers: usize,
    pub seed: u64,
}

impl BenchSpec {
    pub fn new(kernel: KernelId, grid: Grid3D) -> Self {
        BenchSpec {
            kernel,
            grid,
            precision: ScalarKind::F64,
            boundary: BoundaryCondition::HomogeneousDirichlet,
            traversal: Traversal::Naive,
            repetitions: DEFAULT_REPETITIONS,
            warmup: DEFAULT_WARMUP,
            workers: 1,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.repetitions < MIN_REPETITIONS {
            return Err(Error::invalid(format!(
                "at least {MIN_REPETITIONS} repetitions are needed, got {}",
                self.repetitions
            )));
        }
        if self.workers == 0 || self.workers > self.grid.nz() {
            return Err(Error::invalid(format!(
                "worker count {} must be between 1 and nz = {}",
                self.workers,
                self.grid.nz()
            )));
        }
        Ok(())
    }

    fn method(&self) -> &'static str {
        if self.kernel.uses_traversal() {
            self.traversal.name()
        } else {
            "n/a"
        }
    }
}

/// One line of a report; the CSV and JSON forms carry the same fields.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchRow {
    pub device: String,
    pub kernel: String,
    pub grid: String,
    pub boundary: String,
    pub method: String,
    pub precision: String,
    pub workers: usize,
    pub repetitions: usize,
    pub median_ms: f64,
    pub min_ms: f64,
    pub gflops: f64,
    pub bytes_per_apply: u64,
    pub checksum: String,
}

#[derive(Clone, Debug)]
pub struct BenchResult {
    pub row: BenchRow,
    /// Timed repetitions in seconds, warmup excluded.
    pub times: Vec<f64>,
    pub flops_per_apply: f64,
    pub checksum: u64,
}

pub fn device_tag() -> String {
    format!("cpu-{}t", rayon::current_num_threads())
}

/// Median, averaging the two middle values for an even count.
pub fn median(times: &[f64]) -> f64 {
    if times.is_empty() {
        return f64::NAN;
    }
    let mut t = times.to_vec();
    t.sort_by(f64::total_cmp);
    let k = t.len() / 2;
    if t.len() % 2 == 1 {
        t[k]
    } else {
        0.5 * (t[k - 1] + t[k])
    }
}

/// `flops / seconds` in units of 10⁹. Zero work reports zero.
pub fn gflops(flops: f64, seconds: f64) -> f64 {
    if flops == 0.0 {
        0.0
    } else {
        flops / seconds / 1e9
    }
}

fn alloc<T: Clone>(n: usize, fill: T, what: &'static str) -> Result<Vec<T>> {
    let mut v = Vec::new();
    v.try_reserve_exact(n).map_err(|_| Error::Allocation {
        what,
        bytes: n.saturating_mul(std::mem::size_of::<T>()),
    })?;
    v.resize(n, fill);
    Ok(v)
}

fn random_input<T: Scalar>(n: usize, seed: u64) -> Result<Vec<T>> {
    let mut v = alloc(n, T::zero(), "the input field")?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    // inside the domain of the combustion source
    for x in &mut v {
        *x = T::from_f64(rng.gen_range(0.5..1.5));
    }
    Ok(v)
}

fn time_reps(spec: &BenchSpec, mut f: impl FnMut() -> Result<()>) -> Result<Vec<f64>> {
    for _ in 0..spec.warmup {
        f()?;
    }
    let mut times = Vec::with_capacity(spec.repetitions);
    for _ in 0..spec.repetitions {
        let t0 = Instant::now();
        f()?;
        times.push(t0.elapsed().as_secs_f64());
    }
    Ok(times)
}

/// Timings, output values, flops and bytes of one apply.
type Measured<T> = (Vec<f64>, Vec<T>, f64, u64);

fn measure<T: Scalar>(spec: &BenchSpec) -> Result<Measured<T>> {
    let g = spec.grid;
    let n = g.len();
    let b = T::KIND.bytes() as u64;
    let mut op = StencilOperator::new(g, spec.boundary.clone()).with_traversal(spec.traversal);
    if spec.kernel == KernelId::FusedCoeff {
        op = op.with_coefficient(Coefficient::inverse_radial());
    }
    let x = random_input::<T>(n, spec.seed)?;
    let (alpha, beta) = (T::from_f64(ALPHA), T::from_f64(BETA));
    let point_flops = spec.kernel.flops_per_point() * n as f64;
    let stream = 2 * n as u64 * b;
    let m = spec.workers;

    match spec.kernel {
        KernelId::Fused | KernelId::FusedCoeff | KernelId::Copy => {
            let (a, be) = if spec.kernel == KernelId::Copy {
                (T::zero(), T::one())
            } else {
                (alpha, beta)
            };
            let (times, out) = if m == 1 {
                let mut out = alloc(n, T::zero(), "the output field")?;
                let times = time_reps(spec, || op.affine_fused_apply_into(a, be, &x, &mut out))?;
                (times, out)
            } else {
                let p = PartitionedStencil::new(&op, m)?;
                let xs = p.vector_from(&x)?;
                let mut out = xs.zeros_like();
                let times = time_reps(spec, || p.affine_fused_apply(a, be, &xs, &mut out))?;
                (times, out.to_vec())
            };
            Ok((times, out, point_flops, stream))
        }
        KernelId::Split => {
            let hom = op.homogeneous();
            let bvec = op.boundary_source::<T>()?;
            let (times, out) = if m == 1 {
                let mut out = alloc(n, T::zero(), "the output field")?;
                let times = time_reps(spec, || {
                    hom.fused_apply_into(alpha, beta, &x, &mut out)?;
                    out.axpy(alpha, &bvec);
                    Ok(())
                })?;
                (times, out)
            } else {
                let p = PartitionedStencil::new(&hom, m)?;
                let xs = p.vector_from(&x)?;
                let bs: SlabVector<T> = p.vector_from(&bvec)?;
                let mut out = xs.zeros_like();
                let times = time_reps(spec, || {
                    p.fused_apply(alpha, beta, &xs, &mut out)?;
                    out.axpy(alpha, &bs);
                    Ok(())
                })?;
                (times, out.to_vec())
            };
            Ok((times, out, point_flops, 5 * n as u64 * b))
        }
        KernelId::CombustionG => {
            let (times, out) = if m == 1 {
                let mut out = alloc(n, T::zero(), "the output field")?;
                let times = time_reps(spec, || x.map_chunks(&mut out, &|u, off, o| Combustion.eval(0.0, u, off, o)))?;
                (times, out)
            } else {
                let part = crate::decomp::Partition::stencil(g, m)?;
                let xs = part.split(&x)?;
                let mut out = xs.zeros_like();
                let times = time_reps(spec, || xs.map_chunks(&mut out, &|u, off, o| Combustion.eval(0.0, u, off, o)))?;
                (times, out.to_vec())
            };
            Ok((times, out, point_flops, stream))
        }
        KernelId::CsrFused => {
            let (a, _) = assemble_stencil::<T>(&op.homogeneous())?;
            let flops = csr_flops(n, a.nnz());
            let bytes = a.memory_bytes() as u64 + stream;
            let (times, out) = if m == 1 {
                let mut out = alloc(n, T::zero(), "the output vector")?;
                let times = time_reps(spec, || a.fused_spmv_into(alpha, beta, &x, &mut out))?;
                (times, out)
            } else {
                let p = PartitionedCsr::new(&a, m)?;
                let xs = p.vector_from(&x)?;
                let mut out = xs.zeros_like();
                let times = time_reps(spec, || p.fused_apply(alpha, beta, &xs, &mut out))?;
                (times, out.to_vec())
            };
            Ok((times, out, flops, bytes))
        }
    }
}

pub fn run_bench(spec: &BenchSpec) -> Result<BenchResult> {
    spec.validate()?;
    let (times, flops, bytes, sum) = match spec.precision {
        ScalarKind::F32 => finish(measure::<f32>(spec)?),
        ScalarKind::F64 => finish(measure::<f64>(spec)?),
        ScalarKind::C64 => finish(measure::<Complex64>(spec)?),
    };
    let med = median(&times);
    let min = times.iter().copied().fold(f64::INFINITY, f64::min);
    let g = spec.grid;
    Ok(BenchResult {
        row: BenchRow {
            device: device_tag(),
            kernel: spec.kernel.name().into(),
            grid: format!("{}x{}x{}", g.nx(), g.ny(), g.nz()),
            boundary: spec.boundary.label().into(),
            method: spec.method().into(),
            precision: spec.precision.name().into(),
            workers: spec.workers,
            repetitions: spec.repetitions,
            median_ms: med * 1e3,
            min_ms: min * 1e3,
            gflops: gflops(flops, med),
            bytes_per_apply: bytes,
            checksum: format!("{sum:016x}"),
        },
        times,
        flops_per_apply: flops,
        checksum: sum,
    })
}

fn finish<T: Scalar>((times, out, flops, bytes): Measured<T>) -> (Vec<f64>, f64, u64, u64) {
    (times, flops, bytes, checksum(&out))
}

pub fn write_csv(rows: &[BenchRow], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    write_csv_to(rows, file)?;
    Ok(())
}

/// Writes the header even when `rows` is empty.
pub fn write_csv_to<W: std::io::Write>(rows: &[BenchRow], w: W) -> Result<()> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(w);
    w.write_record([
        "device",
        "kernel",
        "grid",
        "boundary",
        "method",
        "precision",
        "workers",
        "repetitions",
        "median_ms",
        "min_ms",
        "gflops",
        "bytes_per_apply",
        "checksum",
    ])?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush().map_err(|e| Error::io("<csv output>", e))
}

pub fn read_csv(path: impl AsRef<Path>) -> Result<Vec<BenchRow>> {
    let mut r = csv::Reader::from_path(path)?;
    let rows = r.deserialize().collect::<std::result::Result<Vec<BenchRow>, _>>()?;
    Ok(rows)
}

pub fn to_json(rows: &[BenchRow]) -> Result<String> {
    Ok(serde_json::to_string_pretty(rows)?)
}

pub fn from_json(text: &str) -> Result<Vec<BenchRow>> {
    Ok(serde_json::from_str(text)?)
}
