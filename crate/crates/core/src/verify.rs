//! Oracle and convergence checks that can be run from an installed binary.

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::decomp::{partitioned_apply, partitioned_newton_apply, stencil_halo_scalars, PartitionedStencil};
use crate::error::{Error, Result};
use crate::grid::{Field, Grid3D};
use crate::integrator::{integrate, Combustion, PointwiseFn, SemilinearProblem, Stepper, StepperConfig};
use crate::matfunc::{gershgorin_interval, newton_apply, phi1, Axis, LejaInterpolant, Target};
use crate::sparse::{assemble_stencil, CsrMatrix};
use crate::stencil::{BoundaryCondition, StencilOperator, Traversal};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Suite {
    Stencil,
    Leja,
    Partition,
    Order,
}

impl Suite {
    pub const ALL: [Suite; 4] = [Suite::Stencil, Suite::Leja, Suite::Partition, Suite::Order];

    pub fn name(self) -> &'static str {
        match self {
            Suite::Stencil => "stencil",
            Suite::Leja => "leja",
            Suite::Partition => "partition",
            Suite::Order => "order",
        }
    }
}

impl fmt::Display for Suite {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Suite {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim().to_ascii_lowercase();
        Suite::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::invalid(format!("unknown suite `{s}` (expected stencil, leja, partition or order)")))
    }
}

#[derive(Clone, Debug)]
pub struct Check {
    pub suite: Suite,
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl fmt::Display for Check {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let status = if self.passed { "PASS" } else { "FAIL" };
        write!(f, "[{status}] {}: {} ({})", self.suite, self.name, self.detail)
    }
}

#[derive(Clone, Debug, Default)]
pub struct VerifyOptions {
    /// Empty runs every suite.
    pub only: Vec<Suite>,
    /// Adds a check that always fails, to exercise the failure path.
    pub inject_failure: bool,
}

pub fn run(opts: &VerifyOptions) -> Vec<Check> {
    let suites: Vec<Suite> = if opts.only.is_empty() {
        Suite::ALL.to_vec()
    } else {
        opts.only.clone()
    };
    let mut out = Vec::new();
    for s in suites {
        let res = match s {
            Suite::Stencil => stencil_suite(),
            Suite::Leja => leja_suite(),
            Suite::Partition => partition_suite(),
            Suite::Order => order_suite(),
        };
        match res {
            Ok(checks) => out.extend(checks),
            Err(e) => out.push(Check {
                suite: s,
                name: "suite".into(),
                passed: false,
                detail: e.to_string(),
            }),
        }
        if opts.inject_failure {
            out.push(Check {
                suite: s,
                name: "injected failure".into(),
                passed: false,
                detail: "requested by the caller".into(),
            });
        }
    }
    out
}

fn check(suite: Suite, name: String, err: f64, bound: f64) -> Check {
    Check {
        suite,
        name,
        passed: err <= bound,
        detail: format!("error {err:.3e}, bound {bound:.1e}"),
    }
}

fn max_rel(a: &[f64], b: &[f64]) -> f64 {
    let scale = b.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(f64::MIN_POSITIVE);
    a.iter().zip(b).fold(0.0f64, |m, (x, y)| m.max((x - y).abs())) / scale
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn random(n: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()
}

fn stencil_suite() -> Result<Vec<Check>> {
    let mut out = Vec::new();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let bcs = [
        BoundaryCondition::Periodic,
        BoundaryCondition::HomogeneousDirichlet,
        BoundaryCondition::dirichlet_expr("z*(1-z)*x*y")?,
        BoundaryCondition::dirichlet_expr("sin(pi*z)*exp(-x*y)")?,
    ];
    for g in [Grid3D::cube(5)?, Grid3D::new(7, 5, 3)?] {
        for bc in &bcs {
            let op = StencilOperator::new(g, bc.clone());
            let (a, b) = assemble_stencil::<f64>(&op)?;
            let u = random(g.len(), &mut rng);
            let mut want = a.spmv(&u)?;
            for (w, bi) in want.iter_mut().zip(&b) {
                *w += bi;
            }
            for t in [Traversal::Naive, Traversal::tiled()] {
                let got = op.clone().with_traversal(t).apply(&Field::from_values(g, u.clone())?)?;
                out.push(check(
                    Suite::Stencil,
                    format!("{g} {} {}", bc.label(), t.name()),
                    max_rel(got.values(), &want),
                    1e-13,
                ));
            }
        }
    }
    Ok(out)
}

fn leja_suite() -> Result<Vec<Check>> {
    let mut out = Vec::new();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let tol = 1e-10;
    for k in 0..4 {
        let n = 20 + 10 * k;
        let eigs: Vec<f64> = (0..n).map(|_| rng.gen_range(0.0..50.0)).collect();
        let q = DMatrix::from_fn(n, n, |_, _| rng.gen_range(-1.0..1.0)).qr().q();
        let d = &q * DMatrix::from_diagonal(&DVector::from_column_slice(&eigs)) * q.transpose();
        let d = (&d + d.transpose()) * 0.5;
        let trip: Vec<(usize, usize, f64)> = (0..n).flat_map(|i| (0..n).map(move |j| (i, j))).map(|(i, j)| (i, j, d[(i, j)])).collect();
        let a = CsrMatrix::from_triplets(n, n, trip)?;
        let v = random(n, &mut rng);
        let eig = SymmetricEigen::new(d.clone());
        let interval = gershgorin_interval::<f64, _>(&a, Axis::Real);
        for target in [Target::Exp, Target::Phi1] {
            let h = 1e-2;
            let interp = LejaInterpolant::new(interval, target, h, 150)?;
            let got = newton_apply::<f64, _>(&a, &interp, &v, tol)?.value;
            let coeff = eig.eigenvectors.transpose() * DVector::from_column_slice(&v);
            let scaled = DVector::from_iterator(
                n,
                coeff.iter().zip(eig.eigenvalues.iter()).map(|(c, &l)| {
                    c * match target {
                        Target::Exp => (-h * l).exp(),
                        Target::Phi1 => phi1(-h * l),
                    }
                }),
            );
            let want: Vec<f64> = (&eig.eigenvectors * scaled).iter().copied().collect();
            let err = norm(&got.iter().zip(&want).map(|(x, y)| x - y).collect::<Vec<_>>()) / norm(&want);
            out.push(check(
                Suite::Leja,
                format!("n={n} {} h={h}", target.name()),
                err,
                (10.0 * tol).max(1e-8),
            ));
        }
    }
    Ok(out)
}

fn partition_suite() -> Result<Vec<Check>> {
    let mut out = Vec::new();
    let g = Grid3D::cube(17)?;
    let op = StencilOperator::new(g, BoundaryCondition::HomogeneousDirichlet);
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let x = random(g.len(), &mut rng);
    let u0: Vec<f64> = (0..g.len()).map(|_| 1.0 + 0.1 * rng.gen::<f64>()).collect();

    let mut want = vec![0.0; g.len()];
    op.fused_apply_into(-0.5, 2.0, &x, &mut want)?;
    let interp = LejaInterpolant::new(gershgorin_interval::<f64, _>(&op, Axis::Real), Target::Exp, 1e-3, 150)?;
    let want_newton = newton_apply::<f64, _>(&op, &interp, &x, 1e-10)?.value;
    let single = SemilinearProblem::new(&op, &Combustion);
    let (want_step, _) = Stepper::new(&single, 1e-6, 150)?.step(0.0, &u0, 1e-4)?;

    for m in 1..=4 {
        let p = PartitionedStencil::new(&op, m)?;
        let same = partitioned_apply(&p, -0.5, 2.0, &x)? == want;
        let ledger_ok = p.ledger().last() == Some(stencil_halo_scalars(g, m, false));
        let newton = partitioned_newton_apply(&p, &interp, &x, 1e-10)?.value == want_newton;
        let problem = SemilinearProblem::new(&p, &Combustion);
        let (step, _) = Stepper::new(&problem, 1e-6, 150)?.step(0.0, &p.partition().split(&u0)?, 1e-4)?;
        let step = step.to_vec() == want_step;
        for (name, ok) in [("fused apply", same), ("ledger", ledger_ok), ("newton apply", newton), ("combustion step", step)] {
            out.push(Check {
                suite: Suite::Partition,
                name: format!("{name} m={m}"),
                passed: ok,
                detail: if ok { "bitwise equal".into() } else { "differs from m=1".into() },
            });
        }
    }
    Ok(out)
}

/// Relative error at `t = 0.1` of the manufactured problem `u' + Au = u² + F` on
/// 31 points with exact solution `e^{-t} sin(πx)`.
pub fn manufactured_error(h: f64) -> Result<f64> {
    use std::f64::consts::PI;
    let n = 31;
    let t_end = 0.1;
    let op = StencilOperator::new(Grid3D::new(n, 1, 1)?, BoundaryCondition::HomogeneousDirichlet);
    let dx = 1.0 / (n + 1) as f64;
    let lambda = (2.0 - 2.0 * (PI * dx).cos()) / (dx * dx);
    let s: Vec<f64> = (0..n).map(|i| (PI * (i + 1) as f64 * dx).sin()).collect();
    let s2 = s.clone();
    let g = PointwiseFn(move |t: f64, u: f64, i: usize| {
        u * u + (lambda - 1.0) * (-t).exp() * s2[i] - (-2.0 * t).exp() * s2[i] * s2[i]
    });
    let p = SemilinearProblem::new(&op, &g);
    let out = integrate(&p, &s, &StepperConfig::new(h, t_end, 1e-10), &mut |_| {})?;
    let exact: Vec<f64> = s.iter().map(|v| (-t_end).exp() * v).collect();
    let diff: Vec<f64> = out.u.iter().zip(&exact).map(|(a, b)| a - b).collect();
    Ok(norm(&diff) / norm(&exact))
}

fn order_suite() -> Result<Vec<Check>> {
    let hs = [1e-2, 5e-3, 2.5e-3, 1.25e-3];
    let errs = hs.iter().map(|&h| manufactured_error(h)).collect::<Result<Vec<_>>>()?;
    Ok(hs
        .windows(2)
        .zip(errs.windows(2))
        .map(|(h, e)| {
            let order = (e[0] / e[1]).log2();
            Check {
                suite: Suite::Order,
                name: format!("h={:.2e} -> {:.2e}", h[0], h[1]),
                passed: (0.9..=1.1).contains(&order),
                detail: format!("observed order {order:.4}"),
            }
        })
        .collect())
}
