//! Independent oracles shared by the integration tests.
#![allow(dead_code)]

use std::f64::consts::PI;

use expint::integrator::{integrate, PointwiseFn, SemilinearProblem, StepperConfig};
use expint::matfunc::Target;
use expint::stencil::{BoundaryCondition, StencilOperator};
use expint::{Complex64, Grid3D};
use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, ToPrimitive, Zero};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use twofloat::TwoFloat;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// `φ₁(x + iy)` by its Taylor series in double-double arithmetic.
pub fn phi1_oracle(x: f64, y: f64) -> Complex64 {
    let (zr, zi) = (TwoFloat::from(x), TwoFloat::from(y));
    // term_k = z^k/(k+1)!
    let (mut tr, mut ti) = (TwoFloat::from(1.0), TwoFloat::from(0.0));
    let (mut sr, mut si) = (tr, ti);
    for k in 1..400 {
        let nr = tr * zr - ti * zi;
        let ni = tr * zi + ti * zr;
        let d = (k + 1) as f64;
        tr = nr / d;
        ti = ni / d;
        sr += tr;
        si += ti;
        if f64::from(tr).abs() + f64::from(ti).abs() < 1e-40 * (f64::from(sr).abs() + f64::from(si).abs()) {
            break;
        }
    }
    Complex64::new(f64::from(sr), f64::from(si))
}

/// Fractional bits of the fixed-point oracle arithmetic.
const FRAC_BITS: u64 = 1024;

fn fixed(x: f64) -> BigInt {
    let r = BigRational::from_float(x).expect("finite");
    (r.numer() << FRAC_BITS) / r.denom()
}

fn fixed_mul(a: &BigInt, b: &BigInt) -> BigInt {
    (a * b) >> FRAC_BITS
}

fn fixed_to_f64(a: &BigInt) -> f64 {
    let bits = a.bits();
    let shift = bits.saturating_sub(60);
    let top = (a >> shift).to_f64().unwrap();
    top * 2f64.powi(shift as i32 - FRAC_BITS as i32)
}

/// Divided differences `f[x₀..x_k]` of `f(z) = target(s·z)` for real `s`, from the
/// power series of `target` truncated after `terms` terms and the identity
/// `y^m[y₀..y_k] = h_{m-k}(y₀..y_k)` (complete homogeneous symmetric polynomials) at
/// `y = s·x`, in fixed-point arithmetic with 1024 fractional bits.
pub fn exact_divided_differences(nodes: &[f64], target: Target, s: f64, terms: usize) -> Vec<f64> {
    let sf = fixed(s);
    let shift = match target {
        Target::Exp => 0,
        Target::Phi1 => 1,
    };
    let one = BigInt::one() << FRAC_BITS;
    // c_m = 1/(m+shift)!
    let mut coeffs = Vec::with_capacity(terms);
    let mut fact = BigInt::one();
    for k in 1..=shift {
        fact *= BigInt::from(k);
    }
    for m in 0..terms {
        if m > 0 {
            fact *= BigInt::from(m + shift);
        }
        coeffs.push(&one / &fact);
    }
    let xs: Vec<BigInt> = nodes.iter().map(|&x| fixed_mul(&fixed(x), &sf)).collect();
    // h[j] = h_j(x₀..x_k), updated as nodes are added
    let mut h: Vec<BigInt> = (0..terms).map(|j| if j == 0 { one.clone() } else { BigInt::zero() }).collect();
    let mut out = Vec::with_capacity(nodes.len());
    for xk in &xs {
        for j in 1..terms {
            let add = fixed_mul(&h[j - 1], xk);
            h[j] += add;
        }
        let k = out.len();
        let mut dd = BigInt::zero();
        for m in k..terms {
            dd += fixed_mul(&coeffs[m], &h[m - k]);
        }
        // f[x₀..x_k] = s^k target[y₀..y_k]
        out.push(fixed_to_f64(&dd) * s.powi(k as i32));
    }
    out
}

/// Random orthogonal matrix from the QR factor of a Gaussian-ish matrix.
pub fn random_orthogonal(n: usize, rng: &mut impl Rng) -> DMatrix<f64> {
    let m = DMatrix::from_fn(n, n, |_, _| rng.gen_range(-1.0..1.0));
    m.qr().q()
}

/// Symmetric `Q diag(λ) Qᵀ` with the given spectrum.
pub fn symmetric_with_spectrum(eigs: &[f64], rng: &mut impl Rng) -> DMatrix<f64> {
    let q = random_orthogonal(eigs.len(), rng);
    let d = DMatrix::from_diagonal(&DVector::from_column_slice(eigs));
    let a = &q * d * q.transpose();
    (&a + a.transpose()) * 0.5
}

/// `f(A)v` for symmetric `A` through its eigendecomposition.
pub fn dense_apply_fn(a: &DMatrix<f64>, v: &[f64], f: impl Fn(f64) -> f64) -> Vec<f64> {
    let eig = SymmetricEigen::new(a.clone());
    let q = &eig.eigenvectors;
    let coeff = q.transpose() * DVector::from_column_slice(v);
    let scaled = DVector::from_iterator(coeff.len(), coeff.iter().zip(eig.eigenvalues.iter()).map(|(c, &l)| c * f(l)));
    (q * scaled).iter().copied().collect()
}

pub fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

pub fn diff_norm(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

pub fn rel_err(a: &[f64], b: &[f64]) -> f64 {
    diff_norm(a, b) / norm(b).max(f64::MIN_POSITIVE)
}

pub fn max_rel_err(a: &[f64], b: &[f64]) -> f64 {
    let scale = b.iter().fold(0.0f64, |m, x| m.max(x.abs())).max(f64::MIN_POSITIVE);
    a.iter().zip(b).fold(0.0f64, |m, (x, y)| m.max((x - y).abs())) / scale
}

pub fn c_diff_norm(a: &[Complex64], b: &[Complex64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).norm_sqr()).sum::<f64>().sqrt()
}

pub fn c_norm(a: &[Complex64]) -> f64 {
    a.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt()
}

/// Boundary handling for [`stencil_oracle`].
pub enum Ghost<'a> {
    Periodic,
    Zero,
    Func(&'a dyn Fn(f64, f64, f64) -> f64),
}

/// `(−Δ_h u)` point by point from the textbook formula, optionally times `coeff` at
/// the output point. Axes with one point carry no coupling.
pub fn stencil_oracle(
    dims: [usize; 3],
    ghost: &Ghost,
    coeff: Option<&dyn Fn(f64, f64, f64) -> f64>,
    u: &[f64],
) -> Vec<f64> {
    let h = dims.map(|n| 1.0 / (n as f64 + 1.0));
    let idx = |p: [usize; 3]| p[0] + dims[0] * (p[1] + dims[1] * p[2]);
    let pos = |p: [i64; 3]| -> [f64; 3] {
        [0, 1, 2].map(|a| (p[a] + 1) as f64 * h[a])
    };
    let mut out = vec![0.0; u.len()];
    for iz in 0..dims[2] {
        for iy in 0..dims[1] {
            for ix in 0..dims[0] {
                let p = [ix, iy, iz];
                let mut acc = 0.0;
                for a in 0..3 {
                    if dims[a] == 1 {
                        continue;
                    }
                    let w = 1.0 / (h[a] * h[a]);
                    let mut nb = 0.0;
                    for step in [-1i64, 1] {
                        let mut q = p.map(|v| v as i64);
                        q[a] += step;
                        if q[a] >= 0 && q[a] < dims[a] as i64 {
                            nb += u[idx(q.map(|v| v as usize))];
                        } else {
                            nb += match ghost {
                                Ghost::Zero => 0.0,
                                Ghost::Periodic => {
                                    q[a] = q[a].rem_euclid(dims[a] as i64);
                                    u[idx(q.map(|v| v as usize))]
                                }
                                Ghost::Func(f) => {
                                    let mut x = pos(q);
                                    x[a] = if q[a] < 0 { 0.0 } else { 1.0 };
                                    f(x[0], x[1], x[2])
                                }
                            };
                        }
                    }
                    acc += w * (2.0 * u[idx(p)] - nb);
                }
                if let Some(d) = coeff {
                    let x = pos(p.map(|v| v as i64));
                    acc *= d(x[0], x[1], x[2]);
                }
                out[idx(p)] = acc;
            }
        }
    }
    out
}

/// Error at `t_end` of the manufactured problem `u' + Au = u² + F(t)` with exact
/// solution `e^{-t} sin(πx)`.
pub fn manufactured_error(h: f64, t_end: f64) -> f64 {
    let n = 31;
    let op = StencilOperator::new(Grid3D::new(n, 1, 1).unwrap(), BoundaryCondition::HomogeneousDirichlet);
    let dx = 1.0 / (n + 1) as f64;
    let lambda = (2.0 - 2.0 * (PI * dx).cos()) / (dx * dx);
    let s: Vec<f64> = (0..n).map(|i| (PI * (i + 1) as f64 * dx).sin()).collect();
    let s2 = s.clone();
    let g = PointwiseFn(move |t: f64, u: f64, i: usize| {
        u * u + (lambda - 1.0) * (-t).exp() * s2[i] - (-2.0 * t).exp() * s2[i] * s2[i]
    });
    let p = SemilinearProblem::new(&op, &g);
    let cfg = StepperConfig::new(h, t_end, 1e-10);
    let out = integrate(&p, &s, &cfg, &mut |_| {}).unwrap();
    let exact: Vec<f64> = s.iter().map(|v| (-t_end).exp() * v).collect();
    diff_norm(&out.u, &exact) / norm(&exact)
}
