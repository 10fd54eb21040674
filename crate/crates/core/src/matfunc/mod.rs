//! `exp(-hA)v` and `φ₁(-hA)v` by Newton interpolation at Leja points.
//!
//! The interpolation variable is the spectrum of `A`. Nodes are generated once on
//! the canonical interval `[-2, 2]` and mapped affinely onto a spectral interval
//! `[a, b]`; the Newton basis then only needs products `(αA + βI)w`.

mod dd;
mod leja;
mod newton;

pub use dd::divided_differences;
pub use leja::{canonical_leja, leja_points, LEJA_CANDIDATES};
pub use newton::{newton_apply, LejaInterpolant, NewtonResult, Propagator, PropagatorStats, MAX_HALVINGS};

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::operator::LinearOperator;
use crate::scalar::Scalar;

/// Which scalar multiplies `A` inside the target function.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Axis {
    /// `f(-hA)`, for operators with real nonnegative spectrum.
    Real,
    /// `f(-ihH)` for Hermitian `H`, i.e. the propagator of `ψ' = -iHψ`.
    Imaginary,
}

/// Interval `[a, b]` on the real line containing the spectrum of the operator.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SpectralInterval {
    pub a: f64,
    pub b: f64,
    pub axis: Axis,
}

impl SpectralInterval {
    pub fn new(a: f64, b: f64, axis: Axis) -> Result<Self> {
        if !(a.is_finite() && b.is_finite()) || a > b {
            return Err(Error::invalid(format!("invalid spectral interval [{a}, {b}]")));
        }
        Ok(SpectralInterval { a, b, axis })
    }

    pub fn real(a: f64, b: f64) -> Result<Self> {
        Self::new(a, b, Axis::Real)
    }

    pub fn center(&self) -> f64 {
        0.5 * (self.a + self.b)
    }

    /// Quarter width: maps the canonical `[-2, 2]` onto `[a, b]`.
    pub fn gamma(&self) -> f64 {
        0.25 * (self.b - self.a)
    }

    pub fn is_degenerate(&self) -> bool {
        self.a == self.b
    }

    /// Widens by `delta` on both sides.
    pub fn widened(&self, delta: f64) -> Self {
        SpectralInterval {
            a: self.a - delta,
            b: self.b + delta,
            axis: self.axis,
        }
    }

    /// Factor `s` with `f(-hA) = target(s·λ)`: `-h` or `-ih`.
    pub fn scale(&self, h: f64) -> Complex64 {
        match self.axis {
            Axis::Real => Complex64::new(-h, 0.0),
            Axis::Imaginary => Complex64::new(0.0, -h),
        }
    }
}

/// Interval from the operator's Gershgorin disks.
pub fn gershgorin_interval<T: Scalar, A: LinearOperator<T>>(op: &A, axis: Axis) -> SpectralInterval {
    let (a, b) = op.gershgorin_bounds();
    SpectralInterval { a, b, axis }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Target {
    Exp,
    Phi1,
}

impl Target {
    pub fn eval(self, z: Complex64) -> Complex64 {
        match self {
            Target::Exp => z.exp(),
            Target::Phi1 => phi1_complex(z),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Target::Exp => "exp",
            Target::Phi1 => "phi1",
        }
    }
}

const PHI1_SWITCH: f64 = 1e-2;

/// `φ₁(z) = (e^z - 1)/z`, with `φ₁(0) = 1`.
pub fn phi1(z: f64) -> f64 {
    if z.abs() > PHI1_SWITCH {
        z.exp_m1() / z
    } else {
        phi1_taylor(z)
    }
}

fn phi1_taylor<F>(z: F) -> F
where
    F: Copy + std::ops::Mul<Output = F> + std::ops::Add<Output = F> + From<f64>,
{
    // Σ_{k<8} z^k/(k+1)!, Horner from the top
    let mut acc = F::from(1.0 / 40320.0);
    let mut fact = 40320.0;
    for k in (0..7).rev() {
        fact /= (k + 2) as f64;
        acc = F::from(1.0 / fact) + z * acc;
    }
    acc
}

pub fn phi1_complex(z: Complex64) -> Complex64 {
    if z.norm() > PHI1_SWITCH {
        let (x, y) = (z.re, z.im);
        let s = (0.5 * y).sin();
        let em1 = Complex64::new(x.exp_m1() * y.cos() - 2.0 * s * s, x.exp() * y.sin());
        em1 / z
    } else {
        phi1_taylor(z)
    }
}
