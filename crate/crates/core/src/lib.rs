//! Matrix-free exponential integrators.
//!
//! The crate is organised bottom-up:
//!
//! * [`grid`]: structured grids on the unit cube, fields and their file formats.
//! * [`stencil`]: the seven-point `-Δ_h` operator applied without storing a matrix,
//!   including boundary data and a position-dependent coefficient.
//! * [`sparse`]: CSR matrices, fused SpMV and Matrix Market I/O.
//! * [`matfunc`]: `exp(-hA)v` and `φ₁(-hA)v` by Newton interpolation at Leja points.
//! * [`integrator`]: the exponential Euler method for `u' + Au = g(u)`.
//! * [`decomp`]: slab / row-block decomposition over a worker pool with halo exchange.
//! * [`bench`]: timing harness with flop accounting.
//! * [`verify`]: oracle suites runnable at run time.
//!
//! Every matrix function evaluation is reduced to products `(αA + βI)x`, which is the
//! only kernel an operator has to provide (see [`operator::LinearOperator`]).

pub mod bench;
pub mod decomp;
pub mod error;
pub mod expr;
pub mod grid;
pub mod integrator;
pub mod matfunc;
pub mod operator;
pub mod scalar;
pub mod sparse;
pub mod stencil;
pub mod verify;

pub use error::{Error, Result};
pub use grid::{Field, Grid3D};
pub use operator::{LinearOperator, VectorOps};
pub use scalar::{Scalar, ScalarKind};
pub use num_complex::Complex64;
