//! Divided differences through a function of a lower bidiagonal matrix.
//!
//! For `M` with the nodes on the diagonal and `σ` on the subdiagonal, the first
//! column of `f(M)` holds `σ^k f[x₀, …, x_k]`. `f(M)` is formed by a truncated
//! power series of `M/2^s` followed by `s` doubling steps.

use num_complex::Complex64;

use super::Target;
use crate::error::{Error, Result};

/// Terms kept beyond the first contribution to each entry.
const TAIL_TERMS: usize = 20;
/// Norm the scaled matrix is brought under before the Taylor polynomial.
const SCALED_NORM: f64 = 0.5;

/// Divided differences `f[x₀..x_k]`, `k < nodes.len()`, of `f(z) = target(scale·z)`.
/// `dd[0]` is `target(scale·x₀)` evaluated directly.
pub fn divided_differences(nodes: &[f64], target: Target, scale: Complex64) -> Result<Vec<Complex64>> {
    if nodes.is_empty() {
        return Ok(Vec::new());
    }
    let diag: Vec<Complex64> = nodes.iter().map(|&x| scale * x).collect();
    let radius = nodes.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    let bound = scale.norm() * (radius + 1.0);
    let mut dd = first_column(&diag, scale, target, bound)?;
    dd[0] = target.eval(scale * nodes[0]);
    Ok(dd)
}

/// First column of `target(M)` for lower bidiagonal `M = diag + sub·J`.
///
/// `norm_bound` must bound `‖M‖∞`. It alone fixes the scaling, so the result for a
/// leading block of `M` is bitwise the leading part of the full result.
pub(crate) fn first_column(
    diag: &[Complex64],
    sub: Complex64,
    target: Target,
    norm_bound: f64,
) -> Result<Vec<Complex64>> {
    let n = diag.len();
    let squarings = if norm_bound > SCALED_NORM {
        (norm_bound / SCALED_NORM).log2().ceil() as i32
    } else {
        0
    };
    if squarings > 1000 {
        return Err(Error::Overflow(format!(
            "matrix norm bound {norm_bound:e} is too large for the requested degree"
        )));
    }
    let inv = 0.5f64.powi(squarings);
    let d: Vec<Complex64> = diag.iter().map(|&v| v * inv).collect();
    let sub = sub * inv;

    // E = Σ X^m/m!, P = Σ X^m/(m+1)!. Powers of the bidiagonal X are banded, and
    // entry (i, j) takes terms up to m = (i - j) + TAIL_TERMS, which bounds its
    // relative truncation error by 0.5^TAIL_TERMS/TAIL_TERMS!.
    let mut e = Lower::identity(n, 1.0);
    let mut p = Lower::identity(n, 1.0);
    let mut power = Lower::identity(n, 1.0);
    let mut inv_fact = 1.0; // 1/m!
    let last = n.saturating_sub(1) + TAIL_TERMS;
    for m in 1..=last {
        // power ← X·power, bandwidth min(m, n-1)
        let band = m.min(n.saturating_sub(1));
        for i in (0..n).rev() {
            let lo = i.saturating_sub(band);
            for j in lo..=i {
                let mut v = d[i] * power.get(i, j);
                if i > 0 && j < i {
                    v += sub * power.get(i - 1, j);
                }
                power.set(i, j, v);
            }
        }
        inv_fact /= m as f64;
        let inv_fact_p = inv_fact / (m + 1) as f64;
        let first = m.saturating_sub(TAIL_TERMS);
        for i in first..n {
            for j in 0..=(i - first).min(i) {
                if i - j + TAIL_TERMS < m {
                    continue;
                }
                let v = power.get(i, j);
                e.add(i, j, v * inv_fact);
                p.add(i, j, v * inv_fact_p);
            }
        }
    }

    for _ in 0..squarings {
        if target == Target::Phi1 {
            let mut ep = e.clone();
            ep.add_identity(1.0);
            p = p.mul(&ep);
            p.scale(0.5);
        }
        e = e.mul(&e);
    }

    let out = match target {
        Target::Exp => e.first_column(),
        Target::Phi1 => p.first_column(),
    };
    if let Some(k) = out.iter().position(|v| !v.re.is_finite() || !v.im.is_finite()) {
        return Err(Error::Overflow(format!(
            "divided difference {k} is not finite; the interval is too large for degree {}",
            n - 1
        )));
    }
    Ok(out)
}

/// Dense storage of a lower triangular matrix, row major.
#[derive(Clone)]
struct Lower {
    n: usize,
    a: Vec<Complex64>,
}

impl Lower {
    fn zeros(n: usize) -> Self {
        Lower {
            n,
            a: vec![Complex64::new(0.0, 0.0); n * n],
        }
    }

    fn identity(n: usize, d: f64) -> Self {
        let mut m = Self::zeros(n);
        m.add_identity(d);
        m
    }

    #[inline]
    fn get(&self, i: usize, j: usize) -> Complex64 {
        self.a[i * self.n + j]
    }

    #[inline]
    fn set(&mut self, i: usize, j: usize, v: Complex64) {
        self.a[i * self.n + j] = v;
    }

    #[inline]
    fn add(&mut self, i: usize, j: usize, v: Complex64) {
        self.a[i * self.n + j] += v;
    }

    fn add_identity(&mut self, d: f64) {
        for i in 0..self.n {
            self.a[i * self.n + i] += d;
        }
    }

    fn scale(&mut self, s: f64) {
        for v in &mut self.a {
            *v *= s;
        }
    }

    /// Entry `(i, j)` sums `k = j..=i` in ascending order.
    fn mul(&self, other: &Lower) -> Lower {
        let n = self.n;
        let mut c = Lower::zeros(n);
        for i in 0..n {
            let row = &self.a[i * n..(i + 1) * n];
            for j in 0..=i {
                let mut s = Complex64::new(0.0, 0.0);
                for (k, &aik) in row.iter().enumerate().take(i + 1).skip(j) {
                    s += aik * other.a[k * n + j];
                }
                c.a[i * n + j] = s;
            }
        }
        c
    }

    fn first_column(&self) -> Vec<Complex64> {
        (0..self.n).map(|i| self.a[i * self.n]).collect()
    }
}
