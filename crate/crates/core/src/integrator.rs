//! Exponential Euler time stepping for `u' + Au = g(t, u)`:
//!
//! ```text
//! u_{n+1} = e^{-hA} u_n + h φ₁(-hA) g(t_n, u_n)
//! ```
//!
//! Inhomogeneous Dirichlet data enters as a constant source, `g̃ = g - b`, so that
//! `A` stays linear.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::Field;
use crate::matfunc::{gershgorin_interval, Axis, Propagator, PropagatorStats, SpectralInterval};
use crate::operator::{LinearOperator, VectorOps};
use crate::scalar::Scalar;

/// Degree cap used when none is configured.
pub const DEFAULT_MAX_DEGREE: usize = 150;

/// A pointwise nonlinearity `g(t, u)_i`. Chunks carry their global offset so that
/// position-dependent terms can be evaluated.
pub trait Nonlinearity<T: Scalar>: Sync {
    fn eval(&self, t: f64, u: &[T], offset: usize, out: &mut [T]) -> Result<()>;
}

/// `g ≡ 0`.
#[derive(Clone, Copy, Debug, Default)]
pub struct ZeroNonlinearity;

impl<T: Scalar> Nonlinearity<T> for ZeroNonlinearity {
    fn eval(&self, _t: f64, _u: &[T], _offset: usize, out: &mut [T]) -> Result<()> {
        out.fill(T::zero());
        Ok(())
    }
}

/// `g ≡ c`.
#[derive(Clone, Copy, Debug)]
pub struct ConstantNonlinearity<T>(pub T);

impl<T: Scalar> Nonlinearity<T> for ConstantNonlinearity<T> {
    fn eval(&self, _t: f64, _u: &[T], _offset: usize, out: &mut [T]) -> Result<()> {
        out.fill(self.0);
        Ok(())
    }
}

/// `g(t, u)_i = f(t, u_i, i)` from a closure.
pub struct PointwiseFn<F>(pub F);

impl<T, F> Nonlinearity<T> for PointwiseFn<F>
where
    T: Scalar,
    F: Fn(f64, T, usize) -> T + Sync,
{
    fn eval(&self, t: f64, u: &[T], offset: usize, out: &mut [T]) -> Result<()> {
        for (i, (o, &v)) in out.iter_mut().zip(u).enumerate() {
            *o = (self.0)(t, v, offset + i);
        }
        Ok(())
    }
}

/// `g(u) = ¼(2 - u)·exp(20(1 - 1/u))`, defined for `u > 0`.
#[derive(Clone, Copy, Debug, Default)]
pub struct Combustion;

impl Combustion {
    #[inline]
    pub fn value(u: f64) -> f64 {
        0.25 * (2.0 - u) * (20.0 * (1.0 - 1.0 / u)).exp()
    }
}

impl<T: Scalar> Nonlinearity<T> for Combustion {
    fn eval(&self, _t: f64, u: &[T], offset: usize, out: &mut [T]) -> Result<()> {
        for (i, (o, &v)) in out.iter_mut().zip(u).enumerate() {
            let x = v.to_c64().re;
            if !(x > 0.0 && x.is_finite()) {
                return Err(Error::Domain {
                    what: "the combustion source",
                    index: offset + i,
                    value: x,
                });
            }
            *o = T::from_f64(Combustion::value(x));
        }
        Ok(())
    }
}

/// The combustion source evaluated on a whole field.
pub fn combustion_g(u: &Field<f64>) -> Result<Field<f64>> {
    let mut out = Field::zeros(u.grid());
    Combustion.eval(0.0, u.values(), 0, out.values_mut())?;
    Ok(out)
}

/// `u' + Au = g(t, u) - b`.
pub struct SemilinearProblem<'a, T: Scalar, A: LinearOperator<T>> {
    pub op: &'a A,
    pub g: &'a dyn Nonlinearity<T>,
    pub boundary_source: Option<Vec<T>>,
}

impl<'a, T: Scalar, A: LinearOperator<T>> SemilinearProblem<'a, T, A> {
    pub fn new(op: &'a A, g: &'a dyn Nonlinearity<T>) -> Self {
        SemilinearProblem {
            op,
            g,
            boundary_source: None,
        }
    }

    pub fn with_boundary_source(mut self, b: Vec<T>) -> Result<Self> {
        if b.len() != self.op.dim() {
            return Err(Error::Dimension {
                expected: self.op.dim(),
                actual: b.len(),
            });
        }
        self.boundary_source = Some(b);
        Ok(self)
    }

    /// `g̃(t, u) = g(t, u) - b`.
    pub fn source(&self, t: f64, u: &A::Vector) -> Result<A::Vector> {
        let mut out = u.zeros_like();
        let b = self.boundary_source.as_deref();
        u.map_chunks(&mut out, &|x, offset, o| {
            self.g.eval(t, x, offset, o)?;
            if let Some(b) = b {
                for (v, &bi) in o.iter_mut().zip(&b[offset..offset + x.len()]) {
                    *v = *v - bi;
                }
            }
            Ok(())
        })?;
        Ok(out)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepperConfig {
    pub h: f64,
    pub t_end: f64,
    pub tol: f64,
    pub max_degree: usize,
}

impl StepperConfig {
    pub fn new(h: f64, t_end: f64, tol: f64) -> Self {
        StepperConfig {
            h,
            t_end,
            tol,
            max_degree: DEFAULT_MAX_DEGREE,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.h > 0.0 && self.h.is_finite()) {
            return Err(Error::invalid(format!("time step {} must be positive", self.h)));
        }
        if !(self.t_end >= self.h && self.t_end.is_finite()) {
            return Err(Error::invalid(format!(
                "final time {} must be at least the time step {}",
                self.t_end, self.h
            )));
        }
        if self.tol.is_nan() || self.tol <= 0.0 {
            return Err(Error::invalid(format!("tolerance {} must be positive", self.tol)));
        }
        if self.max_degree == 0 {
            return Err(Error::invalid("max_degree must be at least 1"));
        }
        Ok(())
    }

    /// Number of steps; the last one is shortened to end exactly at `t_end`.
    pub fn steps(&self) -> usize {
        ((self.t_end / self.h) * (1.0 - 1e-12)).ceil().max(1.0) as usize
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct StepStats {
    pub matvecs: usize,
    /// Largest polynomial degree used by either expansion.
    pub degree: usize,
    pub halvings: u32,
}

/// Progress record passed to observers after each step.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepReport {
    /// 1-based step index.
    pub step: usize,
    pub t: f64,
    pub matvecs: usize,
    pub max_norm: f64,
}

/// Repeated exponential Euler steps sharing one spectral interval and one
/// interpolant cache.
pub struct Stepper<'a, T: Scalar, A: LinearOperator<T>> {
    problem: &'a SemilinearProblem<'a, T, A>,
    prop: Propagator<'a, T, A>,
}

impl<'a, T: Scalar, A: LinearOperator<T>> Stepper<'a, T, A> {
    /// Uses the Gershgorin interval of the operator.
    pub fn new(problem: &'a SemilinearProblem<'a, T, A>, tol: f64, max_degree: usize) -> Result<Self> {
        let interval = gershgorin_interval(problem.op, Axis::Real);
        Self::with_interval(problem, interval, tol, max_degree)
    }

    pub fn with_interval(
        problem: &'a SemilinearProblem<'a, T, A>,
        interval: SpectralInterval,
        tol: f64,
        max_degree: usize,
    ) -> Result<Self> {
        Ok(Stepper {
            problem,
            prop: Propagator::new(problem.op, interval, tol, max_degree)?,
        })
    }

    pub fn interval(&self) -> &SpectralInterval {
        self.prop.interval()
    }

    pub fn totals(&self) -> PropagatorStats {
        self.prop.stats()
    }

    /// `u_{n+1}` from `u_n` at time `t`.
    pub fn step(&self, t: f64, u: &A::Vector, h: f64) -> Result<(A::Vector, StepStats)> {
        let before = self.prop.stats();
        let g = self.problem.source(t, u)?;
        let next = self.prop.euler_step(h, u, &g)?;
        let after = self.prop.stats();
        Ok((
            next,
            StepStats {
                matvecs: after.matvecs - before.matvecs,
                degree: after.max_degree_used,
                halvings: after.halvings,
            },
        ))
    }
}

/// One exponential Euler step with a fresh interval estimate.
pub fn exponential_euler_step<T: Scalar, A: LinearOperator<T>>(
    problem: &SemilinearProblem<'_, T, A>,
    u: &A::Vector,
    h: f64,
    tol: f64,
) -> Result<(A::Vector, StepStats)> {
    Stepper::new(problem, tol, DEFAULT_MAX_DEGREE)?.step(0.0, u, h)
}

/// Result of [`integrate`].
#[derive(Clone, Debug)]
pub struct Integration<V> {
    pub u: V,
    pub steps: usize,
    pub t: f64,
    pub matvecs: usize,
}

/// Advances `u0` from `t = 0` to `cfg.t_end`, reporting after every step.
pub fn integrate<T: Scalar, A: LinearOperator<T>>(
    problem: &SemilinearProblem<'_, T, A>,
    u0: &A::Vector,
    cfg: &StepperConfig,
    observer: &mut dyn FnMut(&StepReport),
) -> Result<Integration<A::Vector>> {
    cfg.validate()?;
    let stepper = Stepper::new(problem, cfg.tol, cfg.max_degree)?;
    let n = cfg.steps();
    let mut u = u0.clone();
    let mut t = 0.0;
    let mut matvecs = 0;
    for k in 0..n {
        let h = if k + 1 == n { cfg.t_end - (n - 1) as f64 * cfg.h } else { cfg.h };
        let (next, stats) = stepper.step(t, &u, h).map_err(|e| Error::Step {
            step: k + 1,
            source: Box::new(e),
        })?;
        u = next;
        t = if k + 1 == n { cfg.t_end } else { (k + 1) as f64 * cfg.h };
        matvecs += stats.matvecs;
        observer(&StepReport {
            step: k + 1,
            t,
            matvecs: stats.matvecs,
            max_norm: u.max_abs(),
        });
    }
    Ok(Integration { u, steps: n, t, matvecs })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sparse::CsrMatrix;

    #[test]
    fn combustion_values() {
        assert_eq!(Combustion::value(1.0), 0.25);
        assert_eq!(Combustion::value(2.0), 0.0);
        assert!((Combustion::value(0.5) - 0.25 * 1.5 * (-20.0f64).exp()).abs() < 1e-24);
        assert!((Combustion::value(0.5) - 7.73e-10).abs() < 1e-12);
        let mut out = [0.0; 3];
        let err = Combustion.eval(0.0, &[1.0, 0.0, -1.0], 5, &mut out).unwrap_err();
        assert!(matches!(err, Error::Domain { index: 6, .. }));
    }

    #[test]
    fn zero_operator_steps() {
        let a = CsrMatrix::<f64>::from_triplets(3, 3, vec![]).unwrap();
        let u = vec![1.0, 2.0, 3.0];
        let p = SemilinearProblem::new(&a, &ZeroNonlinearity);
        let (next, _) = exponential_euler_step(&p, &u, 0.1, 1e-10).unwrap();
        assert_eq!(next, u);

        let c = ConstantNonlinearity(0.5);
        let p = SemilinearProblem::new(&a, &c);
        let (next, _) = exponential_euler_step(&p, &u, 0.1, 1e-10).unwrap();
        for (x, y) in next.iter().zip(&u) {
            assert!((x - (y + 0.05)).abs() < 1e-15);
        }
        let cfg = StepperConfig::new(0.1, 0.3, 1e-10);
        let out = integrate(&p, &u, &cfg, &mut |_| {}).unwrap();
        assert_eq!(out.steps, 3);
        for (x, y) in out.u.iter().zip(&u) {
            assert!((x - (y + 0.15)).abs() < 1e-14);
        }
    }

    #[test]
    fn scalar_decay() {
        let a = CsrMatrix::<f64>::identity(1);
        let p = SemilinearProblem::new(&a, &ZeroNonlinearity);
        let (next, _) = exponential_euler_step(&p, &vec![1.0], 1.0, 1e-12).unwrap();
        assert!((next[0] - (-1.0f64).exp()).abs() < 1e-14);
    }

    #[test]
    fn last_step_is_shortened() {
        let a = CsrMatrix::<f64>::from_triplets(1, 1, vec![]).unwrap();
        let c = ConstantNonlinearity(1.0);
        let p = SemilinearProblem::new(&a, &c);
        let cfg = StepperConfig::new(0.1, 0.25, 1e-10);
        let mut times = Vec::new();
        let out = integrate(&p, &vec![0.0], &cfg, &mut |r| times.push(r.t)).unwrap();
        assert_eq!(times.len(), 3);
        assert_eq!(*times.last().unwrap(), 0.25);
        assert!((out.u[0] - 0.25).abs() < 1e-14);
        assert_eq!(StepperConfig::new(0.1, 0.3, 1e-8).steps(), 3);
    }

    #[test]
    fn config_validation() {
        assert!(StepperConfig::new(0.0, 1.0, 1e-8).validate().is_err());
        assert!(StepperConfig::new(0.5, 0.1, 1e-8).validate().is_err());
        assert!(StepperConfig::new(0.1, 1.0, 0.0).validate().is_err());
    }

    #[test]
    fn step_errors_carry_index() {
        let a = CsrMatrix::<f64>::from_triplets(2, 2, vec![]).unwrap();
        let p = SemilinearProblem::new(&a, &Combustion);
        let cfg = StepperConfig::new(0.1, 0.2, 1e-8);
        let err = integrate(&p, &vec![1.0, -1.0], &cfg, &mut |_| {}).unwrap_err();
        assert!(matches!(err, Error::Step { step: 1, .. }));
    }
}
