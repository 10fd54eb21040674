//! Matrix-free seven-point operator `A = -Δ_h`, optionally scaled pointwise by a
//! diffusion coefficient `D(x, y, z)` evaluated at the output point.
//!
//! Per point the kernel computes
//!
//! ```text
//! (Au)_i = D_i * ( d*u_i - (cx*(u_xm + u_xp) + cy*(u_ym + u_yp) + cz*(u_zm + u_zp)) )
//! ```
//!
//! with `c_a = 1/h_a²` and `d = 2(cx + cy + cz)`, summed in exactly that order. The
//! traversal only changes the visiting order of points, never the arithmetic of a
//! point, so naive, tiled, parallel and decomposed runs agree bit for bit.

use std::fmt;
use std::ops::Range;
use std::sync::Arc;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::expr::Expr;
use crate::grid::{Field, Grid3D};
use crate::operator::{with_combine, Combine, LinearOperator};
use crate::scalar::Scalar;

/// Default tile shape `(x, y)` of the tiled traversal.
pub const DEFAULT_TILE: (usize, usize) = (64, 8);

pub type PointFn = Arc<dyn Fn(f64, f64, f64) -> f64 + Send + Sync>;

/// A function of position with a printable label.
#[derive(Clone)]
pub struct NamedFn {
    label: String,
    f: PointFn,
}

impl NamedFn {
    pub fn new(label: impl Into<String>, f: impl Fn(f64, f64, f64) -> f64 + Send + Sync + 'static) -> Self {
        NamedFn {
            label: label.into(),
            f: Arc::new(f),
        }
    }

    pub fn from_expr(expr: Expr) -> Self {
        let label = expr.source().to_string();
        NamedFn::new(label, move |x, y, z| expr.eval(x, y, z))
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    #[inline]
    pub fn eval(&self, x: f64, y: f64, z: f64) -> f64 {
        (self.f)(x, y, z)
    }
}

impl fmt::Debug for NamedFn {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "NamedFn({})", self.label)
    }
}

/// Dirichlet data on the boundary of the unit cube.
#[derive(Clone, Debug)]
pub enum BoundaryCondition {
    /// Periodic wraparound. Benchmark-only stand-in for "no boundary handling";
    /// the integrator never uses it.
    Periodic,
    HomogeneousDirichlet,
    /// Ghost values come from `f` evaluated at the boundary point.
    Dirichlet(NamedFn),
}

impl BoundaryCondition {
    pub fn dirichlet_expr(source: &str) -> Result<Self> {
        Ok(BoundaryCondition::Dirichlet(NamedFn::from_expr(Expr::parse(source)?)))
    }

    /// `none`, `homogeneous`, or the function label.
    pub fn label(&self) -> &str {
        match self {
            BoundaryCondition::Periodic => "none",
            BoundaryCondition::HomogeneousDirichlet => "homogeneous",
            BoundaryCondition::Dirichlet(f) => f.label(),
        }
    }

    /// Parses `none`/`periodic`, `homogeneous`/`zero`, or an expression in x, y, z.
    pub fn parse(spec: &str) -> Result<Self> {
        match spec.trim().to_ascii_lowercase().as_str() {
            "none" | "periodic" => Ok(BoundaryCondition::Periodic),
            "homogeneous" | "zero" | "dirichlet" => Ok(BoundaryCondition::HomogeneousDirichlet),
            _ => Self::dirichlet_expr(spec),
        }
    }

    /// Whether `apply` is linear (no constant boundary contribution).
    pub fn is_linear(&self) -> bool {
        !matches!(self, BoundaryCondition::Dirichlet(_))
    }
}

/// Position-dependent diffusion coefficient with its declared flop cost per point.
#[derive(Clone, Debug)]
pub struct Coefficient {
    func: NamedFn,
    flops: u32,
}

impl Coefficient {
    pub fn new(func: NamedFn, flops: u32) -> Self {
        Coefficient { func, flops }
    }

    /// `D = 1/sqrt(1 + x² + y²)`, declared as 6 flops (2 mul, 2 add, 1 sqrt, 1 div).
    pub fn inverse_radial() -> Self {
        Coefficient::new(
            NamedFn::new("1/sqrt(1+x^2+y^2)", |x, y, _| 1.0 / (1.0 + x * x + y * y).sqrt()),
            6,
        )
    }

    pub fn label(&self) -> &str {
        self.func.label()
    }

    pub fn flops(&self) -> u32 {
        self.flops
    }

    #[inline]
    pub fn eval(&self, x: f64, y: f64, z: f64) -> f64 {
        self.func.eval(x, y, z)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Traversal {
    /// Plane by plane, row by row.
    Naive,
    /// `(x, y)` tiles marching over z.
    Tiled { tile_x: usize, tile_y: usize },
}

impl Traversal {
    pub fn tiled() -> Self {
        Traversal::Tiled {
            tile_x: DEFAULT_TILE.0,
            tile_y: DEFAULT_TILE.1,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Traversal::Naive => "naive",
            Traversal::Tiled { .. } => "tiled",
        }
    }
}

impl std::str::FromStr for Traversal {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "naive" => Ok(Traversal::Naive),
            "tiled" | "optimized" => Ok(Traversal::tiled()),
            other => Err(Error::invalid(format!("unknown traversal `{other}`"))),
        }
    }
}

#[derive(Clone, Debug)]
pub struct StencilOperator {
    grid: Grid3D,
    bc: BoundaryCondition,
    coeff: Option<Coefficient>,
    traversal: Traversal,
}

impl StencilOperator {
    pub fn new(grid: Grid3D, bc: BoundaryCondition) -> Self {
        StencilOperator {
            grid,
            bc,
            coeff: None,
            traversal: Traversal::Naive,
        }
    }

    pub fn with_coefficient(mut self, coeff: Coefficient) -> Self {
        self.coeff = Some(coeff);
        self
    }

    pub fn with_traversal(mut self, traversal: Traversal) -> Self {
        self.traversal = traversal;
        self
    }

    pub fn grid(&self) -> Grid3D {
        self.grid
    }

    pub fn boundary(&self) -> &BoundaryCondition {
        &self.bc
    }

    pub fn coefficient(&self) -> Option<&Coefficient> {
        self.coeff.as_ref()
    }

    pub fn traversal(&self) -> Traversal {
        self.traversal
    }

    /// Same operator with homogeneous Dirichlet data in place of a boundary function.
    pub fn homogeneous(&self) -> Self {
        let mut op = self.clone();
        if !op.bc.is_linear() {
            op.bc = BoundaryCondition::HomogeneousDirichlet;
        }
        op
    }

    fn check_field<T>(&self, u: &Field<T>) -> Result<()>
    where
        T: Scalar,
    {
        if u.grid() != self.grid {
            return Err(Error::GridMismatch {
                expected: self.grid.to_string(),
                actual: u.grid().to_string(),
            });
        }
        Ok(())
    }

    fn check_len(&self, len: usize) -> Result<()> {
        if len != self.grid.len() {
            return Err(Error::Dimension {
                expected: self.grid.len(),
                actual: len,
            });
        }
        Ok(())
    }

    /// `A u` including the boundary contribution, whatever the boundary kind.
    pub fn apply<T: Scalar>(&self, u: &Field<T>) -> Result<Field<T>> {
        self.check_field(u)?;
        let mut out = Field::zeros(self.grid);
        self.apply_into(u.values(), out.values_mut())?;
        Ok(out)
    }

    pub fn apply_into<T: Scalar>(&self, x: &[T], out: &mut [T]) -> Result<()> {
        self.affine_fused_apply_into(T::one(), T::zero(), x, out)
    }

    /// `(αA + βI)x` for a linear operator. Boundary functions are rejected: split them
    /// off with [`StencilOperator::apply_affine_split`] first.
    pub fn fused_apply<T: Scalar>(&self, alpha: T, beta: T, x: &Field<T>) -> Result<Field<T>> {
        self.check_field(x)?;
        let mut out = Field::zeros(self.grid);
        self.fused_apply_into(alpha, beta, x.values(), out.values_mut())?;
        Ok(out)
    }

    pub fn fused_apply_into<T: Scalar>(&self, alpha: T, beta: T, x: &[T], out: &mut [T]) -> Result<()> {
        if !self.bc.is_linear() {
            return Err(Error::BoundaryKind(
                "fused_apply needs a linear operator; use apply_affine_split to separate the boundary function".into(),
            ));
        }
        self.affine_fused_apply_into(alpha, beta, x, out)
    }

    /// `α(Ax + b) + βx` with the boundary function evaluated inline, the form timed
    /// by the benchmark harness. Equal to [`StencilOperator::fused_apply_into`] for
    /// linear boundary kinds.
    pub fn affine_fused_apply_into<T: Scalar>(
        &self,
        alpha: T,
        beta: T,
        x: &[T],
        out: &mut [T],
    ) -> Result<()> {
        self.check_len(x.len())?;
        self.check_len(out.len())?;
        let mode = Combine::new(alpha, beta);
        with_combine!(mode, |comb| self.drive(x, out, &comb, mode.uses_operator()))
    }

    /// Splits `apply(u) = A_hom u + b` where `b` is the (u-independent) boundary term.
    pub fn apply_affine_split<T: Scalar>(&self, u: &Field<T>) -> Result<(Field<T>, Field<T>)> {
        if self.bc.is_linear() {
            return Err(Error::BoundaryKind(format!(
                "apply_affine_split needs a boundary function, operator has `{}`",
                self.bc.label()
            )));
        }
        self.check_field(u)?;
        let hom = self.homogeneous().apply(u)?;
        let b = Field::from_values(self.grid, self.boundary_source()?)?;
        Ok((hom, b))
    }

    /// The boundary term `b = apply(0)`; zero for linear boundary kinds.
    pub fn boundary_source<T: Scalar>(&self) -> Result<Vec<T>> {
        let zeros = vec![T::zero(); self.grid.len()];
        let mut b = vec![T::zero(); self.grid.len()];
        if !self.bc.is_linear() {
            self.apply_into(&zeros, &mut b)?;
        }
        Ok(b)
    }

    /// Gershgorin bounds `[min(center - radius), max(center + radius)]` over all rows.
    pub fn gershgorin(&self) -> (f64, f64) {
        let g = self.grid;
        let dims = g.dims();
        let active = g.active();
        let c = axis_weights(g);
        let diag: f64 = 2.0 * (c[0] + c[1] + c[2]);
        let periodic = matches!(self.bc, BoundaryCondition::Periodic);
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for iz in 0..dims[2] {
            for iy in 0..dims[1] {
                for ix in 0..dims[0] {
                    let idx = [ix, iy, iz];
                    let mut radius = 0.0;
                    for a in 0..3 {
                        if !active[a] {
                            continue;
                        }
                        let present = if periodic {
                            2.0
                        } else {
                            (idx[a] > 0) as u8 as f64 + (idx[a] + 1 < dims[a]) as u8 as f64
                        };
                        radius += c[a] * present;
                    }
                    let d = match &self.coeff {
                        Some(k) => {
                            let [x, y, z] = g.position(ix, iy, iz);
                            k.eval(x, y, z).abs()
                        }
                        None => 1.0,
                    };
                    lo = lo.min(d * (diag - radius));
                    hi = hi.max(d * (diag + radius));
                }
            }
        }
        (lo, hi)
    }

    /// Single-domain driver: disjoint plane chunks in parallel.
    fn drive<T, C>(&self, x: &[T], out: &mut [T], comb: &C, uses_op: bool) -> Result<()>
    where
        T: Scalar,
        C: Fn(T, T) -> T + Sync,
    {
        if !uses_op {
            out.par_iter_mut()
                .zip(x.par_iter())
                .for_each(|(o, &xi)| *o = comb(T::zero(), xi));
            return Ok(());
        }
        let g = self.grid;
        let pl = g.plane_len();
        let nz = g.nz();
        let chunk = if g.len() < 1 << 15 {
            nz
        } else {
            (nz / (4 * rayon::current_num_threads())).max(1)
        };
        let wrap = matches!(self.bc, BoundaryCondition::Periodic) && g.active()[2];
        out.par_chunks_mut(chunk * pl)
            .enumerate()
            .try_for_each(|(k, oc)| {
                let z_lo = k * chunk;
                let z_hi = z_lo + oc.len() / pl;
                let below = if z_lo > 0 {
                    Some(&x[(z_lo - 1) * pl..z_lo * pl])
                } else if wrap {
                    Some(&x[(nz - 1) * pl..])
                } else {
                    None
                };
                let above = if z_hi < nz {
                    Some(&x[z_hi * pl..(z_hi + 1) * pl])
                } else if wrap {
                    Some(&x[..pl])
                } else {
                    None
                };
                let slab = Slab {
                    z_lo,
                    planes: &x[z_lo * pl..z_hi * pl],
                    below,
                    above,
                };
                self.run_slab(&slab, oc, comb)
            })
    }

    /// Computes the owned planes of `slab` into `out` (same length as `slab.planes`).
    /// Missing `below`/`above` planes mean a physical boundary.
    pub(crate) fn run_slab<T, C>(&self, slab: &Slab<'_, T>, out: &mut [T], comb: &C) -> Result<()>
    where
        T: Scalar,
        C: Fn(T, T) -> T,
    {
        let k = Kernel::new(self);
        let g = self.grid;
        let (nx, ny, pl) = (g.nx(), g.ny(), g.plane_len());
        let np = slab.planes.len() / pl;
        debug_assert_eq!(out.len(), slab.planes.len());
        let mut err: Option<Error> = None;

        let plane = |p: usize| &slab.planes[p * pl..(p + 1) * pl];
        let z_nb = |p: usize, up: bool| -> Nb<'_, T> {
            if !k.active[2] {
                return Nb::Absent;
            }
            if up {
                if p + 1 < np {
                    Nb::Row(plane(p + 1))
                } else {
                    slab.above.map_or(Nb::Ghost, Nb::Row)
                }
            } else if p > 0 {
                Nb::Row(plane(p - 1))
            } else {
                slab.below.map_or(Nb::Ghost, Nb::Row)
            }
        };

        let mut do_row = |p: usize, iy: usize, xr: Range<usize>, out: &mut [T]| {
            let cur = plane(p);
            let cen = &cur[iy * nx..(iy + 1) * nx];
            let (ym, yp) = if !k.active[1] {
                (Nb::Absent, Nb::Absent)
            } else {
                let lo = if iy > 0 {
                    Nb::Row(&cur[(iy - 1) * nx..iy * nx])
                } else if k.periodic {
                    Nb::Row(&cur[(ny - 1) * nx..])
                } else {
                    Nb::Ghost
                };
                let hi = if iy + 1 < ny {
                    Nb::Row(&cur[(iy + 1) * nx..(iy + 2) * nx])
                } else if k.periodic {
                    Nb::Row(&cur[..nx])
                } else {
                    Nb::Ghost
                };
                (lo, hi)
            };
            let zm = z_nb(p, false).row(iy, nx);
            let zp = z_nb(p, true).row(iy, nx);
            let orow = &mut out[p * pl + iy * nx..p * pl + (iy + 1) * nx];
            k.row(iy, slab.z_lo + p, xr, cen, &ym, &yp, &zm, &zp, orow, comb, &mut err);
        };

        match self.traversal {
            Traversal::Naive => {
                for p in 0..np {
                    for iy in 0..ny {
                        do_row(p, iy, 0..nx, out);
                    }
                }
            }
            Traversal::Tiled { tile_x, tile_y } => {
                let (tx, ty) = (tile_x.max(1), tile_y.max(1));
                for y0 in (0..ny).step_by(ty) {
                    for x0 in (0..nx).step_by(tx) {
                        for p in 0..np {
                            for iy in y0..(y0 + ty).min(ny) {
                                do_row(p, iy, x0..(x0 + tx).min(nx), out);
                            }
                        }
                    }
                }
            }
        }
        match err {
            Some(e) => Err(e),
            None => Ok(()),
        }
    }
}

/// `1/h²` per active axis, zero for collapsed axes.
pub(crate) fn axis_weights(g: Grid3D) -> [f64; 3] {
    let h = g.spacing();
    let active = g.active();
    [0, 1, 2].map(|a| if active[a] { 1.0 / (h[a] * h[a]) } else { 0.0 })
}

/// Owned planes of a z-slab plus the neighboring planes it reads.
pub(crate) struct Slab<'a, T> {
    pub z_lo: usize,
    pub planes: &'a [T],
    pub below: Option<&'a [T]>,
    pub above: Option<&'a [T]>,
}

#[derive(Clone, Copy, Debug)]
enum Face {
    XLo,
    XHi,
    YLo,
    YHi,
    ZLo,
    ZHi,
}

enum Nb<'a, T> {
    Row(&'a [T]),
    Ghost,
    Absent,
}

impl<'a, T> Nb<'a, T> {
    /// Row `iy` of a neighboring plane.
    fn row(self, iy: usize, nx: usize) -> Nb<'a, T> {
        match self {
            Nb::Row(p) => Nb::Row(&p[iy * nx..(iy + 1) * nx]),
            other => other,
        }
    }
}

struct Kernel<'a, T> {
    grid: Grid3D,
    c: [T; 3],
    diag: T,
    active: [bool; 3],
    periodic: bool,
    bc: &'a BoundaryCondition,
    coeff: Option<&'a Coefficient>,
}

impl<'a, T: Scalar> Kernel<'a, T> {
    fn new(op: &'a StencilOperator) -> Self {
        let w = axis_weights(op.grid);
        Kernel {
            grid: op.grid,
            c: w.map(T::from_f64),
            diag: T::from_f64(2.0 * (w[0] + w[1] + w[2])),
            active: op.grid.active(),
            periodic: matches!(op.bc, BoundaryCondition::Periodic),
            bc: &op.bc,
            coeff: op.coeff.as_ref(),
        }
    }

    #[cold]
    fn ghost(&self, face: Face, ix: usize, iy: usize, iz: usize, err: &mut Option<Error>) -> T {
        match self.bc {
            BoundaryCondition::HomogeneousDirichlet => T::zero(),
            BoundaryCondition::Dirichlet(f) => {
                let [mut x, mut y, mut z] = self.grid.position(ix, iy, iz);
                match face {
                    Face::XLo => x = 0.0,
                    Face::XHi => x = 1.0,
                    Face::YLo => y = 0.0,
                    Face::YHi => y = 1.0,
                    Face::ZLo => z = 0.0,
                    Face::ZHi => z = 1.0,
                }
                let v = f.eval(x, y, z);
                if !v.is_finite() && err.is_none() {
                    *err = Some(Error::NonFinite {
                        what: "boundary function",
                        value: v,
                        x,
                        y,
                        z,
                    });
                }
                T::from_f64(v)
            }
            // periodic neighbors are always resolved to rows by the caller
            BoundaryCondition::Periodic => unreachable!("periodic ghost"),
        }
    }

    #[inline(always)]
    fn nb_value(&self, nb: &Nb<'_, T>, face: Face, ix: usize, iy: usize, iz: usize, err: &mut Option<Error>) -> T {
        match nb {
            Nb::Row(r) => r[ix],
            Nb::Ghost => self.ghost(face, ix, iy, iz, err),
            Nb::Absent => T::zero(),
        }
    }

    #[inline(always)]
    fn scale_by_coeff(&self, a: T, ix: usize, iy: usize, iz: usize, err: &mut Option<Error>) -> T {
        match self.coeff {
            None => a,
            Some(k) => {
                let [x, y, z] = self.grid.position(ix, iy, iz);
                let d = k.eval(x, y, z);
                if !d.is_finite() && err.is_none() {
                    *err = Some(Error::NonFinite {
                        what: "diffusion coefficient",
                        value: d,
                        x,
                        y,
                        z,
                    });
                }
                a * T::from_f64(d)
            }
        }
    }

    /// General point: any neighbor may be a ghost or absent.
    #[inline(always)]
    #[allow(clippy::too_many_arguments)]
    fn point(
        &self,
        ix: usize,
        iy: usize,
        iz: usize,
        cen: &[T],
        ym: &Nb<'_, T>,
        yp: &Nb<'_, T>,
        zm: &Nb<'_, T>,
        zp: &Nb<'_, T>,
        err: &mut Option<Error>,
    ) -> T {
        let nx = cen.len();
        let mut s = T::zero();
        if self.active[0] {
            let l = if ix > 0 {
                cen[ix - 1]
            } else if self.periodic {
                cen[nx - 1]
            } else {
                self.ghost(Face::XLo, ix, iy, iz, err)
            };
            let r = if ix + 1 < nx {
                cen[ix + 1]
            } else if self.periodic {
                cen[0]
            } else {
                self.ghost(Face::XHi, ix, iy, iz, err)
            };
            s += self.c[0] * (l + r);
        }
        if self.active[1] {
            let l = self.nb_value(ym, Face::YLo, ix, iy, iz, err);
            let r = self.nb_value(yp, Face::YHi, ix, iy, iz, err);
            s += self.c[1] * (l + r);
        }
        if self.active[2] {
            let l = self.nb_value(zm, Face::ZLo, ix, iy, iz, err);
            let r = self.nb_value(zp, Face::ZHi, ix, iy, iz, err);
            s += self.c[2] * (l + r);
        }
        self.scale_by_coeff(self.diag * cen[ix] - s, ix, iy, iz, err)
    }

    #[allow(clippy::too_many_arguments)]
    fn row<C: Fn(T, T) -> T>(
        &self,
        iy: usize,
        iz: usize,
        xr: Range<usize>,
        cen: &[T],
        ym: &Nb<'_, T>,
        yp: &Nb<'_, T>,
        zm: &Nb<'_, T>,
        zp: &Nb<'_, T>,
        out: &mut [T],
        comb: &C,
        err: &mut Option<Error>,
    ) {
        let nx = cen.len();
        let interior = match (ym, yp, zm, zp) {
            (Nb::Row(a), Nb::Row(b), Nb::Row(c), Nb::Row(d)) if self.active == [true; 3] => {
                Some((*a, *b, *c, *d))
            }
            _ => None,
        };
        let Some((rym, ryp, rzm, rzp)) = interior else {
            for ix in xr {
                let a = self.point(ix, iy, iz, cen, ym, yp, zm, zp, err);
                out[ix] = comb(a, cen[ix]);
            }
            return;
        };
        // same arithmetic as `point`, without the ghost branches
        let lo = xr.start.max(1);
        let hi = xr.end.min(nx - 1).max(lo);
        for ix in xr.start..lo.min(xr.end) {
            let a = self.point(ix, iy, iz, cen, ym, yp, zm, zp, err);
            out[ix] = comb(a, cen[ix]);
        }
        let [cx, cy, cz] = self.c;
        let diag = self.diag;
        for ix in lo..hi {
            let mut s = T::zero();
            s += cx * (cen[ix - 1] + cen[ix + 1]);
            s += cy * (rym[ix] + ryp[ix]);
            s += cz * (rzm[ix] + rzp[ix]);
            let a = self.scale_by_coeff(diag * cen[ix] - s, ix, iy, iz, err);
            out[ix] = comb(a, cen[ix]);
        }
        for ix in hi.max(xr.start)..xr.end {
            let a = self.point(ix, iy, iz, cen, ym, yp, zm, zp, err);
            out[ix] = comb(a, cen[ix]);
        }
    }
}

impl<T: Scalar> LinearOperator<T> for StencilOperator {
    type Vector = Vec<T>;

    fn dim(&self) -> usize {
        self.grid.len()
    }

    fn fused_apply(&self, alpha: T, beta: T, x: &Vec<T>, out: &mut Vec<T>) -> Result<()> {
        self.fused_apply_into(alpha, beta, x, out)
    }

    fn gershgorin_bounds(&self) -> (f64, f64) {
        self.gershgorin()
    }

    fn vector_from(&self, values: &[T]) -> Result<Vec<T>> {
        self.check_len(values.len())?;
        Ok(values.to_vec())
    }

    fn vector_to_vec(&self, v: &Vec<T>) -> Vec<T> {
        v.clone()
    }
}
