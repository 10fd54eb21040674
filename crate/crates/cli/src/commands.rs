use std::io::Write;
use std::path::Path;

use expint::bench::{self, BenchSpec, KernelId, DEFAULT_REPETITIONS, DEFAULT_WARMUP};
use expint::decomp::{PartitionedCsr, PartitionedStencil};
use expint::expr::Expr;
use expint::integrator::{
    integrate, Combustion, Integration, SemilinearProblem, StepReport, StepperConfig, DEFAULT_MAX_DEGREE,
};
use expint::matfunc::{Axis, Propagator, PropagatorStats, SpectralInterval};
use expint::sparse::{read_matrix_market, CsrMatrix};
use expint::stencil::{BoundaryCondition, StencilOperator, Traversal};
use expint::verify::{self, Suite, VerifyOptions};
use expint::{Complex64, Error, Field, Grid3D, LinearOperator, Scalar, ScalarKind, VectorOps};
use serde_json::json;

use crate::config::{ConfigError, ConfigResult, Params};
use crate::Failure;

pub const BENCH_KEYS: &[&str] = &[
    "grid", "precision", "workers", "boundary", "method", "out", "json", "kernel", "repetitions", "warmup", "seed",
];
pub const SOLVE_KEYS: &[&str] = &[
    "grid", "precision", "workers", "tol", "h", "t-end", "boundary", "method", "out", "json", "init", "steps-csv",
    "max-degree",
];
pub const PROPAGATE_KEYS: &[&str] = &[
    "workers", "tol", "h", "t-end", "out", "json", "matrix", "initial", "hermitian", "ledger", "max-degree",
];
pub const VERIFY_KEYS: &[&str] = &["json", "only", "inject-failure"];

fn boundary(p: &Params) -> ConfigResult<BoundaryCondition> {
    Ok(BoundaryCondition::parse(p.raw("boundary").unwrap_or("homogeneous"))?)
}

fn workers(p: &Params, limit: usize, what: &str) -> ConfigResult<usize> {
    let m: usize = p.get_or("workers", 1)?;
    if m == 0 || m > limit {
        return Err(ConfigError(format!("workers must be between 1 and {limit} ({what}), got {m}")));
    }
    Ok(m)
}

/// Writes `text` to the `out` path, or stdout without one.
fn emit(p: &Params, text: &str) -> Result<(), Failure> {
    match p.raw("out") {
        Some(path) => std::fs::write(path, text).map_err(|e| io_error(path, e))?,
        None => {
            let mut out = std::io::stdout().lock();
            out.write_all(text.as_bytes()).map_err(|e| io_error("<stdout>", e))?;
        }
    }
    Ok(())
}

fn io_error(path: impl AsRef<Path>, e: std::io::Error) -> Failure {
    Failure::Runtime(Error::Io {
        path: path.as_ref().to_path_buf(),
        source: e,
    })
}

pub fn bench(p: &Params) -> Result<(), Failure> {
    let grid = p.grid(64)?;
    let precisions: Vec<ScalarKind> = p.list("precision", "f64")?;
    let methods: Vec<Traversal> = p.list("method", "naive")?;
    let kernels: Vec<KernelId> = p.list("kernel", "fused")?;
    let bc = boundary(p)?;
    let json = p.flag("json")?;

    let mut specs = Vec::new();
    for &kernel in &kernels {
        for &precision in &precisions {
            let used: &[Traversal] = if kernel.uses_traversal() { &methods } else { &methods[..1] };
            for &traversal in used {
                let mut s = BenchSpec::new(kernel, grid);
                s.precision = precision;
                s.boundary = bc.clone();
                s.traversal = traversal;
                s.repetitions = p.get_or("repetitions", DEFAULT_REPETITIONS)?;
                s.warmup = p.get_or("warmup", DEFAULT_WARMUP)?;
                s.workers = p.get_or("workers", 1)?;
                s.seed = p.get_or("seed", 0)?;
                s.validate().map_err(ConfigError::from)?;
                specs.push(s);
            }
        }
    }

    let mut rows = Vec::with_capacity(specs.len());
    for s in &specs {
        let r = bench::run_bench(s)?;
        eprintln!(
            "{} {} {} {} [{}]: median {:.4} ms, min {:.4} ms, {:.3} Gflops/s, checksum {}",
            r.row.kernel, r.row.grid, r.row.precision, r.row.method, r.row.boundary, r.row.median_ms, r.row.min_ms,
            r.row.gflops, r.row.checksum
        );
        rows.push(r.row);
    }
    let text = if json {
        bench::to_json(&rows)? + "\n"
    } else {
        let mut buf = Vec::new();
        bench::write_csv_to(&rows, &mut buf)?;
        String::from_utf8(buf).expect("CSV output is UTF-8")
    };
    emit(p, &text)
}

struct SolveSetup {
    grid: Grid3D,
    bc: BoundaryCondition,
    traversal: Traversal,
    init: Expr,
    workers: usize,
    cfg: StepperConfig,
}

pub fn solve_combustion(p: &Params) -> Result<(), Failure> {
    let grid = p.grid(33)?;
    let precision: ScalarKind = p.get_or("precision", ScalarKind::F64)?;
    let bc = boundary(p)?;
    if matches!(bc, BoundaryCondition::Periodic) {
        return Err(ConfigError("the combustion model needs a Dirichlet boundary, not `none`".into()).into());
    }
    let h = p.positive("h", Some(1e-4))?;
    let mut cfg = StepperConfig::new(h, p.positive("t-end", Some(h))?, p.positive("tol", Some(1e-6))?);
    cfg.max_degree = p.get_or("max-degree", DEFAULT_MAX_DEGREE)?;
    cfg.validate().map_err(ConfigError::from)?;
    let setup = SolveSetup {
        grid,
        bc,
        traversal: p.get_or("method", Traversal::Naive)?,
        init: Expr::parse(p.raw("init").unwrap_or("1")).map_err(ConfigError::from)?,
        workers: workers(p, grid.nz(), "at most nz")?,
        cfg,
    };
    match precision {
        ScalarKind::F32 => solve::<f32>(p, &setup),
        ScalarKind::F64 => solve::<f64>(p, &setup),
        ScalarKind::C64 => Err(ConfigError("solve-combustion runs in f32 or f64".into()).into()),
    }
}

fn run_problem<T: Scalar, A: LinearOperator<T>>(
    op: &A,
    b: Option<Vec<T>>,
    u0: &[T],
    cfg: &StepperConfig,
    reports: &mut Vec<StepReport>,
) -> expint::Result<(Vec<T>, Integration<A::Vector>)> {
    let mut problem = SemilinearProblem::new(op, &Combustion);
    if let Some(b) = b {
        problem = problem.with_boundary_source(b)?;
    }
    let r = integrate(&problem, &op.vector_from(u0)?, cfg, &mut |s| reports.push(*s))?;
    Ok((op.vector_to_vec(&r.u), r))
}

fn solve<T: Scalar>(p: &Params, s: &SolveSetup) -> Result<(), Failure> {
    let op = StencilOperator::new(s.grid, s.bc.clone()).with_traversal(s.traversal);
    let lin = op.homogeneous();
    let b = if s.bc.is_linear() { None } else { Some(op.boundary_source::<T>()?) };
    let u0: Field<T> = Field::from_fn(s.grid, |x, y, z| s.init.eval(x, y, z))?;
    let mut reports = Vec::new();
    let (u, steps, t, matvecs) = if s.workers == 1 {
        let (u, r) = run_problem(&lin, b, u0.values(), &s.cfg, &mut reports)?;
        (u, r.steps, r.t, r.matvecs)
    } else {
        let part = PartitionedStencil::new(&lin, s.workers)?;
        let (u, r) = run_problem(&part, b, u0.values(), &s.cfg, &mut reports)?;
        (u, r.steps, r.t, r.matvecs)
    };
    let field = Field::from_values(s.grid, u)?;
    if let Some(path) = p.raw("out") {
        field.write_auto(path)?;
    }
    if let Some(path) = p.raw("steps-csv") {
        let mut w = csv::Writer::from_path(path).map_err(Error::from)?;
        for r in &reports {
            w.serialize(r).map_err(Error::from)?;
        }
        w.flush().map_err(|e| io_error(path, e))?;
    }
    eprintln!(
        "{} {}: {steps} step(s) to t = {t}, {matvecs} matvecs, max|u| = {}",
        s.grid,
        T::KIND,
        field.max_norm()
    );
    if p.flag("json")? {
        let summary = json!({
            "grid": s.grid.dims(),
            "precision": T::KIND.name(),
            "workers": s.workers,
            "steps": steps,
            "t": t,
            "matvecs": matvecs,
            "max_norm": field.max_norm(),
            "reports": reports,
        });
        println!("{}", serde_json::to_string_pretty(&summary).map_err(Error::from)?);
    }
    Ok(())
}

/// One entry per line, `re` or `re im`, separated by whitespace or a comma.
/// Blank lines and lines starting with `#` or `%` are skipped.
pub fn read_vector(path: &str) -> expint::Result<Vec<Complex64>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::Io {
        path: path.into(),
        source: e,
    })?;
    let mut out = Vec::new();
    for (k, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') || line.starts_with('%') {
            continue;
        }
        let bad = |message: String| Error::Parse {
            path: path.into(),
            line: k + 1,
            message,
        };
        let parts: Vec<&str> = line.split(|c: char| c == ',' || c.is_whitespace()).filter(|s| !s.is_empty()).collect();
        let num = |s: &str| s.parse::<f64>().map_err(|e| bad(format!("`{s}`: {e}")));
        let v = match parts[..] {
            [re] => Complex64::new(num(re)?, 0.0),
            [re, im] => Complex64::new(num(re)?, num(im)?),
            _ => return Err(bad(format!("expected `re` or `re im`, got {} fields", parts.len()))),
        };
        out.push(v);
    }
    Ok(out)
}

pub fn write_vector(path: &str, v: &[Complex64]) -> expint::Result<()> {
    let mut text = String::with_capacity(v.len() * 48);
    for z in v {
        text.push_str(&format!("{} {}\n", z.re, z.im));
    }
    std::fs::write(path, text).map_err(|e| Error::Io {
        path: path.into(),
        source: e,
    })
}

struct Propagation {
    psi: Vec<Complex64>,
    stats: PropagatorStats,
    steps: usize,
    max_drift: f64,
}

fn propagate_with<A: LinearOperator<Complex64>>(
    op: &A,
    interval: SpectralInterval,
    psi0: &[Complex64],
    t_end: f64,
    h: f64,
    tol: f64,
    max_degree: usize,
) -> expint::Result<Propagation> {
    let prop = Propagator::new(op, interval, tol, max_degree)?;
    let n = ((t_end / h) * (1.0 - 1e-12)).ceil().max(1.0) as usize;
    let mut v = op.vector_from(psi0)?;
    let norm0 = v.norm2();
    let mut max_drift: f64 = 0.0;
    for k in 0..n {
        let hk = if k + 1 == n { t_end - (n - 1) as f64 * h } else { h };
        v = prop.exp_apply(hk, &v).map_err(|e| Error::Step {
            step: k + 1,
            source: Box::new(e),
        })?;
        if norm0 > 0.0 {
            max_drift = max_drift.max((v.norm2() - norm0).abs() / norm0);
        }
    }
    Ok(Propagation {
        psi: op.vector_to_vec(&v),
        stats: prop.stats(),
        steps: n,
        max_drift,
    })
}

pub fn propagate(p: &Params) -> Result<(), Failure> {
    let matrix: String = p.require("matrix")?;
    let initial: String = p.require("initial")?;
    let hermitian = p.flag("hermitian")?;
    let t_end = p.positive("t-end", None)?;
    let h = p.positive("h", Some(t_end))?;
    let tol = p.positive("tol", Some(1e-8))?;
    let max_degree: usize = p.get_or("max-degree", DEFAULT_MAX_DEGREE)?;
    let m: usize = p.get_or("workers", 1)?;
    if m == 0 {
        return Err(ConfigError("workers must be at least 1".into()).into());
    }

    let a: CsrMatrix<Complex64> = read_matrix_market(&matrix)?;
    if !a.is_square() {
        return Err(Error::InvalidArgument(format!("{matrix}: matrix is {}x{}, not square", a.nrows(), a.ncols())).into());
    }
    let psi0 = read_vector(&initial)?;
    if psi0.len() != a.nrows() {
        return Err(Error::Dimension {
            expected: a.nrows(),
            actual: psi0.len(),
        }
        .into());
    }
    let scale = a.values().iter().fold(0.0f64, |s, v| s.max(v.norm()));
    if hermitian && !a.is_hermitian(1e-12 * scale.max(1.0)) {
        return Err(Error::InvalidArgument(format!("{matrix}: matrix is not Hermitian")).into());
    }
    let (lo, hi) = a.gershgorin();
    let axis = if hermitian { Axis::Imaginary } else { Axis::Real };
    let interval = SpectralInterval::new(lo, hi, axis)?;

    let (run, ledger) = if m == 1 {
        (propagate_with(&a, interval, &psi0, t_end, h, tol, max_degree)?, None)
    } else {
        let part = PartitionedCsr::new(&a, m)?;
        let run = propagate_with(&part, interval, &psi0, t_end, h, tol, max_degree)?;
        (run, Some(part.ledger()))
    };
    if let Some(path) = p.raw("out") {
        write_vector(path, &run.psi)?;
    }
    if let (Some(path), Some(l)) = (p.raw("ledger"), &ledger) {
        l.write_csv(path)?;
    }
    let (scalars, bytes) = ledger.as_ref().map_or((0, 0), |l| (l.total_scalars(), l.total_bytes()));
    if p.flag("json")? {
        let summary = json!({
            "n": a.nrows(),
            "nnz": a.nnz(),
            "hermitian": hermitian,
            "t_end": t_end,
            "steps": run.steps,
            "matvecs": run.stats.matvecs,
            "halvings": run.stats.halvings,
            "max_degree_used": run.stats.max_degree_used,
            "norm_drift": run.max_drift,
            "workers": m,
            "scalars_moved": scalars,
            "bytes_moved": bytes,
        });
        println!("{}", serde_json::to_string_pretty(&summary).map_err(Error::from)?);
    } else {
        println!(
            "n = {}, nnz = {}, {} step(s) to t = {t_end}: {} matvecs, max degree {}, norm drift {:.3e}, {} scalars ({} bytes) moved between {m} worker(s)",
            a.nrows(),
            a.nnz(),
            run.steps,
            run.stats.matvecs,
            run.stats.max_degree_used,
            run.max_drift,
            scalars,
            bytes
        );
    }
    Ok(())
}

pub fn verify(p: &Params) -> Result<(), Failure> {
    let only: Vec<Suite> = match p.raw("only") {
        Some(_) => p.list("only", "")?,
        None => Vec::new(),
    };
    let opts = VerifyOptions {
        only,
        inject_failure: p.flag("inject-failure")?,
    };
    let checks = verify::run(&opts);
    if p.flag("json")? {
        let rows: Vec<_> = checks
            .iter()
            .map(|c| json!({"suite": c.suite.name(), "name": c.name, "passed": c.passed, "detail": c.detail}))
            .collect();
        println!("{}", serde_json::to_string_pretty(&rows).map_err(Error::from)?);
    } else {
        for c in &checks {
            println!("{c}");
        }
    }
    let failed = checks.iter().filter(|c| !c.passed).count();
    println!("{}/{} checks passed", checks.len() - failed, checks.len());
    if failed > 0 {
        return Err(Failure::Checks(failed));
    }
    Ok(())
}
