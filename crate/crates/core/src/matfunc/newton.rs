//! Newton-form evaluation of `target(s·A)v` and the step-halving propagator.

use std::collections::HashMap;
use std::marker::PhantomData;
use std::sync::{Arc, Mutex};

use num_complex::Complex64;

use super::dd::first_column;
use super::leja::canonical_leja;
use super::{SpectralInterval, Target};
use crate::error::{Error, Result};
use crate::operator::{LinearOperator, VectorOps};
use crate::scalar::Scalar;

/// Divided differences are computed for prefixes of this many nodes, then doubled.
const FIRST_BLOCK: usize = 32;

/// Step halvings tried after a non-converged expansion.
pub const MAX_HALVINGS: u32 = 10;

/// Interpolant of `f(λ) = target(s·λ)` at the Leja points of an interval.
///
/// Divided differences are computed on demand in doubling blocks and cached.
pub struct LejaInterpolant {
    interval: SpectralInterval,
    target: Target,
    h: f64,
    scale: Complex64,
    max_degree: usize,
    /// Canonical nodes ξ_k on `[-2, 2]`.
    xi: Vec<f64>,
    dd: Mutex<Vec<Complex64>>,
}

impl std::fmt::Debug for LejaInterpolant {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("LejaInterpolant")
            .field("interval", &self.interval)
            .field("target", &self.target)
            .field("h", &self.h)
            .field("max_degree", &self.max_degree)
            .finish()
    }
}

impl LejaInterpolant {
    pub fn new(interval: SpectralInterval, target: Target, h: f64, max_degree: usize) -> Result<Self> {
        if !(h.is_finite() && h >= 0.0) {
            return Err(Error::invalid(format!("step size {h} must be finite and nonnegative")));
        }
        let xi = if interval.is_degenerate() {
            vec![2.0]
        } else {
            canonical_leja(max_degree + 1)?
        };
        Ok(LejaInterpolant {
            interval,
            target,
            h,
            scale: interval.scale(h),
            max_degree,
            xi,
            dd: Mutex::new(Vec::new()),
        })
    }

    pub fn interval(&self) -> &SpectralInterval {
        &self.interval
    }

    pub fn target(&self) -> Target {
        self.target
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    pub fn max_degree(&self) -> usize {
        self.max_degree
    }

    /// Nodes on `[a, b]`.
    pub fn nodes(&self) -> Vec<f64> {
        if self.interval.is_degenerate() {
            return vec![self.interval.a];
        }
        let (c, g) = (self.interval.center(), self.interval.gamma());
        self.xi.iter().map(|&x| c + g * x).collect()
    }

    /// Node count available (`max_degree + 1`, or 1 for a degenerate interval).
    pub fn len(&self) -> usize {
        self.xi.len()
    }

    pub fn is_empty(&self) -> bool {
        self.xi.is_empty()
    }

    /// First `count` divided differences (in the canonical variable ξ).
    pub fn divided_differences(&self, count: usize) -> Result<Vec<Complex64>> {
        let count = count.min(self.len());
        let mut cache = self.dd.lock().unwrap_or_else(|p| p.into_inner());
        if cache.len() < count {
            let mut size = FIRST_BLOCK.max(cache.len() * 2);
            while size < count {
                size *= 2;
            }
            *cache = self.compute(size.min(self.len()))?;
        }
        Ok(cache[..count].to_vec())
    }

    fn compute(&self, n: usize) -> Result<Vec<Complex64>> {
        let x0 = self.nodes()[0];
        let direct = self.target.eval(self.scale * x0);
        if self.interval.is_degenerate() {
            return Ok(vec![direct]);
        }
        let (c, g) = (self.interval.center(), self.interval.gamma());
        let s = self.scale;
        let diag: Vec<Complex64> = self.xi[..n].iter().map(|&x| s * (c + g * x)).collect();
        let sub = s * g;
        let bound = s.norm() * (c.abs() + 3.0 * g);
        let mut dd = first_column(&diag, sub, self.target, bound)?;
        dd[0] = direct;
        Ok(dd)
    }
}

#[derive(Clone, Debug)]
pub struct NewtonResult<V> {
    pub value: V,
    pub matvecs: usize,
    /// Degree of the truncated polynomial.
    pub degree: usize,
}

/// `target(s·A)v ≈ Σ_k dd_k w_k` with `w₀ = v`, `w_{k+1} = (A/γ - c/γ - ξ_k) w_k`.
///
/// Stops once `|dd_k|·‖w_k‖ ≤ tol·‖result‖` holds for two consecutive `k`.
pub fn newton_apply<T, A>(op: &A, interp: &LejaInterpolant, v: &A::Vector, tol: f64) -> Result<NewtonResult<A::Vector>>
where
    T: Scalar,
    A: LinearOperator<T>,
{
    if v.len() != op.dim() {
        return Err(Error::Dimension {
            expected: op.dim(),
            actual: v.len(),
        });
    }
    if !T::KIND.is_complex() && interp.scale.im != 0.0 {
        return Err(Error::invalid(format!(
            "imaginary-axis propagation needs complex vectors, got {}",
            T::KIND
        )));
    }
    let convert = |z: Complex64| T::from_c64(z);
    let mut dd = interp.divided_differences(FIRST_BLOCK)?;
    let mut result = v.zeros_like();
    result.axpy(convert(dd[0]), v);
    if interp.interval.is_degenerate() {
        return Ok(NewtonResult {
            value: result,
            matvecs: 0,
            degree: 0,
        });
    }

    let (c, g) = (interp.interval.center(), interp.interval.gamma());
    let alpha = T::from_f64(1.0 / g);
    let mut w = v.clone();
    let mut next = v.zeros_like();
    let mut small = 0;
    let mut ratio = f64::INFINITY;
    for k in 0..interp.max_degree {
        if k + 1 >= dd.len() {
            dd = interp.divided_differences(dd.len() * 2)?;
        }
        let beta = T::from_f64(-c / g - interp.xi[k]);
        op.fused_apply(alpha, beta, &w, &mut next)?;
        std::mem::swap(&mut w, &mut next);
        let d = dd[k + 1];
        result.axpy(convert(d), &w);
        let incr = d.norm() * w.norm2();
        let norm = result.norm2();
        ratio = if norm > 0.0 { incr / norm } else { incr };
        if incr <= tol * norm {
            small += 1;
            if small == 2 {
                return Ok(NewtonResult {
                    value: result,
                    matvecs: k + 1,
                    degree: k + 1,
                });
            }
        } else {
            small = 0;
        }
    }
    Err(Error::NonConvergence {
        degree: interp.max_degree,
        residual: ratio,
    })
}

/// Counters accumulated by a [`Propagator`].
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct PropagatorStats {
    pub matvecs: usize,
    pub expansions: usize,
    pub max_degree_used: usize,
    pub halvings: u32,
}

/// Applies `e^{-hA}` and `hφ₁(-hA)` to vectors, caching interpolants per step size.
///
/// A non-converged expansion is retried on two half steps, composing
/// `e^{-2τA} = e^{-τA}e^{-τA}` and `2τφ₁(-2τA)g = e^{-τA}(τφ₁(-τA)g) + τφ₁(-τA)g`,
/// down to [`MAX_HALVINGS`] levels.
pub struct Propagator<'a, T, A> {
    op: &'a A,
    _scalar: PhantomData<T>,
    interval: SpectralInterval,
    tol: f64,
    max_degree: usize,
    cache: Mutex<HashMap<(Target, u64), Arc<LejaInterpolant>>>,
    stats: Mutex<PropagatorStats>,
}

impl<'a, T: Scalar, A: LinearOperator<T>> Propagator<'a, T, A> {
    pub fn new(op: &'a A, interval: SpectralInterval, tol: f64, max_degree: usize) -> Result<Self> {
        if tol.is_nan() || tol <= 0.0 {
            return Err(Error::invalid(format!("tolerance {tol} must be positive")));
        }
        if max_degree == 0 {
            return Err(Error::invalid("max_degree must be at least 1"));
        }
        Ok(Propagator {
            op,
            _scalar: PhantomData,
            interval,
            tol,
            max_degree,
            cache: Mutex::new(HashMap::new()),
            stats: Mutex::new(PropagatorStats::default()),
        })
    }

    pub fn interval(&self) -> &SpectralInterval {
        &self.interval
    }

    pub fn operator(&self) -> &'a A {
        self.op
    }

    pub fn stats(&self) -> PropagatorStats {
        *self.stats.lock().unwrap_or_else(|p| p.into_inner())
    }

    pub fn interpolant(&self, target: Target, h: f64) -> Result<Arc<LejaInterpolant>> {
        let mut cache = self.cache.lock().unwrap_or_else(|p| p.into_inner());
        if let Some(i) = cache.get(&(target, h.to_bits())) {
            return Ok(i.clone());
        }
        let interp = Arc::new(LejaInterpolant::new(self.interval, target, h, self.max_degree)?);
        cache.insert((target, h.to_bits()), interp.clone());
        Ok(interp)
    }

    fn expand(&self, target: Target, h: f64, v: &A::Vector) -> Result<Option<A::Vector>> {
        let interp = self.interpolant(target, h)?;
        match newton_apply(self.op, &interp, v, self.tol) {
            Ok(r) => {
                let mut s = self.stats.lock().unwrap_or_else(|p| p.into_inner());
                s.matvecs += r.matvecs;
                s.expansions += 1;
                s.max_degree_used = s.max_degree_used.max(r.degree);
                Ok(Some(r.value))
            }
            Err(Error::NonConvergence { .. }) => {
                let mut s = self.stats.lock().unwrap_or_else(|p| p.into_inner());
                s.matvecs += self.max_degree;
                Ok(None)
            }
            Err(e) => Err(e),
        }
    }

    fn give_up(&self, h: f64) -> Error {
        Error::NonConvergence {
            degree: self.max_degree,
            residual: h,
        }
    }

    /// `e^{-hA}v` (or `e^{-ihA}v` on the imaginary axis).
    pub fn exp_apply(&self, h: f64, v: &A::Vector) -> Result<A::Vector> {
        self.exp_level(h, v, 0)
    }

    fn exp_level(&self, h: f64, v: &A::Vector, level: u32) -> Result<A::Vector> {
        if let Some(r) = self.expand(Target::Exp, h, v)? {
            return Ok(r);
        }
        if level == MAX_HALVINGS {
            return Err(self.give_up(h));
        }
        self.note_halving(level);
        let half = self.exp_level(0.5 * h, v, level + 1)?;
        self.exp_level(0.5 * h, &half, level + 1)
    }

    /// `h·φ₁(-hA)g`.
    pub fn phi1_apply(&self, h: f64, g: &A::Vector) -> Result<A::Vector> {
        self.phi1_level(h, g, 0)
    }

    fn phi1_level(&self, h: f64, g: &A::Vector, level: u32) -> Result<A::Vector> {
        if let Some(mut r) = self.expand(Target::Phi1, h, g)? {
            r.scale(T::from_f64(h));
            return Ok(r);
        }
        if level == MAX_HALVINGS {
            return Err(self.give_up(h));
        }
        self.note_halving(level);
        let tau = 0.5 * h;
        let first = self.phi1_level(tau, g, level + 1)?;
        let mut out = self.exp_level(tau, &first, level + 1)?;
        out.axpy(T::one(), &first);
        Ok(out)
    }

    fn note_halving(&self, level: u32) {
        let mut s = self.stats.lock().unwrap_or_else(|p| p.into_inner());
        s.halvings = s.halvings.max(level + 1);
    }

    /// One exponential Euler step `e^{-hA}u + hφ₁(-hA)g`.
    pub fn euler_step(&self, h: f64, u: &A::Vector, g: &A::Vector) -> Result<A::Vector> {
        let mut out = self.exp_apply(h, u)?;
        let p = self.phi1_apply(h, g)?;
        out.axpy(T::one(), &p);
        Ok(out)
    }
}
