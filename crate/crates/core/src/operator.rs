//! The two traits the matrix-function and time-stepping code are written against.

use std::ops::Range;

use rayon::prelude::*;

use crate::error::Result;
use crate::scalar::Scalar;

/// Chunk length used by [`VectorOps::map_chunks`] on plain vectors.
const MAP_CHUNK: usize = 1 << 14;

/// `f(input_chunk, global_offset, output_chunk)` as taken by [`VectorOps::map_chunks`].
pub type ChunkFn<'a, T> = dyn Fn(&[T], usize, &mut [T]) -> Result<()> + Sync + 'a;

/// Vector storage used by an operator: a plain `Vec<T>` for single-domain operators
/// or a [`crate::decomp::SlabVector`] for decomposed ones.
///
/// Reductions visit entries in global index order with a single accumulator, so
/// results do not depend on how a vector is split across workers.
pub trait VectorOps<T: Scalar>: Clone + Send + Sync {
    fn len(&self) -> usize;

    fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn zeros_like(&self) -> Self;

    /// `self += a * x`
    fn axpy(&mut self, a: T, x: &Self);

    fn scale(&mut self, a: T);

    fn norm2(&self) -> f64;

    fn max_abs(&self) -> f64;

    /// Applies `f(input_chunk, global_offset, output_chunk)` over contiguous chunks,
    /// possibly in parallel. On failure the error of the lowest chunk is returned.
    /// Decomposed vectors call it once per slab, on the owning worker.
    fn map_chunks(
        &self,
        out: &mut Self,
        f: &ChunkFn<'_, T>,
    ) -> Result<()>;

    /// Global index ranges of the chunks handed to [`VectorOps::map_chunks`].
    fn chunk_ranges(&self) -> Vec<Range<usize>>;
}

impl<T: Scalar> VectorOps<T> for Vec<T> {
    fn len(&self) -> usize {
        Vec::len(self)
    }

    fn zeros_like(&self) -> Self {
        vec![T::zero(); Vec::len(self)]
    }

    fn axpy(&mut self, a: T, x: &Self) {
        debug_assert_eq!(Vec::len(self), Vec::len(x));
        for (y, &xi) in self.iter_mut().zip(x) {
            *y += a * xi;
        }
    }

    fn scale(&mut self, a: T) {
        for y in self.iter_mut() {
            *y = a * *y;
        }
    }

    fn norm2(&self) -> f64 {
        self.iter().fold(0.0, |acc, v| acc + v.norm_sqr()).sqrt()
    }

    fn max_abs(&self) -> f64 {
        self.iter().map(|v| v.abs()).fold(0.0, f64::max)
    }

    fn map_chunks(
        &self,
        out: &mut Self,
        f: &ChunkFn<'_, T>,
    ) -> Result<()> {
        let results: Vec<Result<()>> = self
            .par_chunks(MAP_CHUNK)
            .zip(out.par_chunks_mut(MAP_CHUNK))
            .enumerate()
            .map(|(k, (x, o))| f(x, k * MAP_CHUNK, o))
            .collect();
        results.into_iter().collect()
    }

    fn chunk_ranges(&self) -> Vec<Range<usize>> {
        let n = Vec::len(self);
        (0..n.div_ceil(MAP_CHUNK).max(1))
            .map(|k| k * MAP_CHUNK..((k + 1) * MAP_CHUNK).min(n))
            .collect()
    }
}

/// A linear operator `A` that can form `(αA + βI)x`.
pub trait LinearOperator<T: Scalar>: Sync {
    type Vector: VectorOps<T>;

    fn dim(&self) -> usize;

    /// `out = α·A·x + β·x` in a single pass.
    fn fused_apply(&self, alpha: T, beta: T, x: &Self::Vector, out: &mut Self::Vector)
        -> Result<()>;

    /// `[min, max]` over Gershgorin disks of the real projection `center ± radius`
    /// with `center = Re(a_ii)`.
    fn gershgorin_bounds(&self) -> (f64, f64);

    /// Builds an operator-compatible vector from global values.
    fn vector_from(&self, values: &[T]) -> Result<Self::Vector>;

    /// Global values of an operator-compatible vector.
    fn vector_to_vec(&self, v: &Self::Vector) -> Vec<T>;
}

/// Picks the arithmetic used for `α·ax + β·x` so that the degenerate cases are exact:
/// `α = 0, β = 1` copies `x` and `α = 1, β = 0` returns `ax` bit for bit.
#[derive(Clone, Copy, Debug, PartialEq)]
pub(crate) enum Combine<T> {
    Copy,
    Scale(T),
    Plain,
    ScaledOp(T),
    Full(T, T),
}

impl<T: Scalar> Combine<T> {
    pub(crate) fn new(alpha: T, beta: T) -> Self {
        let zero = T::zero();
        let one = T::one();
        if alpha == zero {
            if beta == one {
                Combine::Copy
            } else {
                Combine::Scale(beta)
            }
        } else if beta == zero {
            if alpha == one {
                Combine::Plain
            } else {
                Combine::ScaledOp(alpha)
            }
        } else {
            Combine::Full(alpha, beta)
        }
    }

    /// Whether the operator part is needed at all.
    pub(crate) fn uses_operator(&self) -> bool {
        !matches!(self, Combine::Copy | Combine::Scale(_))
    }
}

/// Dispatches a generic kernel on the combine mode so each variant is monomorphized.
macro_rules! with_combine {
    ($mode:expr, |$f:ident| $body:expr) => {
        match $mode {
            $crate::operator::Combine::Copy => {
                let $f = |_ax: T, x: T| x;
                $body
            }
            $crate::operator::Combine::Scale(b) => {
                let $f = move |_ax: T, x: T| b * x;
                $body
            }
            $crate::operator::Combine::Plain => {
                let $f = |ax: T, _x: T| ax;
                $body
            }
            $crate::operator::Combine::ScaledOp(a) => {
                let $f = move |ax: T, _x: T| a * ax;
                $body
            }
            $crate::operator::Combine::Full(a, b) => {
                let $f = move |ax: T, x: T| a * ax + b * x;
                $body
            }
        }
    };
}
pub(crate) use with_combine;
