//! Explicit assembly of the seven-point operator.

use std::collections::BTreeMap;

use super::CsrMatrix;
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::stencil::{axis_weights, BoundaryCondition, StencilOperator};

/// Largest grid `assemble_stencil` accepts.
pub const ASSEMBLY_LIMIT: usize = 1 << 22;

/// Assembles `(A, b)` with `op.apply(u) = A u + b`, point by point from the
/// stencil definition. Periodic wraparound entries landing in the same column are
/// summed.
pub fn assemble_stencil<T: Scalar>(op: &StencilOperator) -> Result<(CsrMatrix<T>, Vec<T>)> {
    let g = op.grid();
    let n = g.len();
    if n > ASSEMBLY_LIMIT {
        return Err(Error::SizeGuard {
            size: n,
            limit: ASSEMBLY_LIMIT,
        });
    }
    let dims = g.dims();
    let active = g.active();
    let c = axis_weights(g);
    let diag = 2.0 * (c[0] + c[1] + c[2]);

    let mut row_ptr = Vec::with_capacity(n + 1);
    let mut col_idx = Vec::with_capacity(7 * n);
    let mut values = Vec::with_capacity(7 * n);
    let mut b = vec![T::zero(); n];
    row_ptr.push(0);

    for (row, bi) in b.iter_mut().enumerate() {
        let (ix, iy, iz) = g.triple(row);
        let idx = [ix, iy, iz];
        let pos = g.position(ix, iy, iz);
        let d = match op.coefficient() {
            Some(k) => k.eval(pos[0], pos[1], pos[2]),
            None => 1.0,
        };
        let mut entries: BTreeMap<usize, f64> = BTreeMap::new();
        *entries.entry(row).or_default() += d * diag;
        let mut bsum = 0.0;
        for a in 0..3 {
            if !active[a] {
                continue;
            }
            for step in [-1i64, 1] {
                let k = idx[a] as i64 + step;
                let inside = k >= 0 && k < dims[a] as i64;
                let mut nb = idx;
                if inside {
                    nb[a] = k as usize;
                } else {
                    match op.boundary() {
                        BoundaryCondition::Periodic => nb[a] = k.rem_euclid(dims[a] as i64) as usize,
                        BoundaryCondition::HomogeneousDirichlet => continue,
                        BoundaryCondition::Dirichlet(f) => {
                            let mut p = pos;
                            p[a] = if step < 0 { 0.0 } else { 1.0 };
                            let v = f.eval(p[0], p[1], p[2]);
                            if !v.is_finite() {
                                return Err(Error::NonFinite {
                                    what: "boundary function",
                                    value: v,
                                    x: p[0],
                                    y: p[1],
                                    z: p[2],
                                });
                            }
                            bsum += c[a] * v;
                            continue;
                        }
                    }
                }
                let col = g.index(nb[0], nb[1], nb[2]);
                *entries.entry(col).or_default() -= d * c[a];
            }
        }
        *bi = T::from_f64(-d * bsum);
        for (col, v) in entries {
            col_idx.push(col);
            values.push(T::from_f64(v));
        }
        row_ptr.push(col_idx.len());
    }
    Ok((CsrMatrix::new(n, n, row_ptr, col_idx, values)?, b))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Grid3D;

    #[test]
    fn tridiagonal_1d() {
        let g = Grid3D::new(3, 1, 1).unwrap();
        let op = StencilOperator::new(g, BoundaryCondition::HomogeneousDirichlet);
        let (a, b) = assemble_stencil::<f64>(&op).unwrap();
        assert_eq!(
            a.to_dense(),
            vec![32.0, -16.0, 0.0, -16.0, 32.0, -16.0, 0.0, -16.0, 32.0]
        );
        assert!(b.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn circulant_1d() {
        let g = Grid3D::new(3, 1, 1).unwrap();
        let op = StencilOperator::new(g, BoundaryCondition::Periodic);
        let (a, _) = assemble_stencil::<f64>(&op).unwrap();
        assert_eq!(
            a.to_dense(),
            vec![32.0, -16.0, -16.0, -16.0, 32.0, -16.0, -16.0, -16.0, 32.0]
        );
    }

    #[test]
    fn periodic_pair_merges_duplicates() {
        let g = Grid3D::new(2, 1, 1).unwrap();
        let op = StencilOperator::new(g, BoundaryCondition::Periodic);
        let (a, _) = assemble_stencil::<f64>(&op).unwrap();
        let c = 9.0;
        assert_eq!(a.to_dense(), vec![2.0 * c, -2.0 * c, -2.0 * c, 2.0 * c]);
    }

    #[test]
    fn guard() {
        let g = Grid3D::new(1 << 12, 1 << 11, 1).unwrap();
        let op = StencilOperator::new(g, BoundaryCondition::HomogeneousDirichlet);
        assert!(matches!(assemble_stencil::<f64>(&op), Err(Error::SizeGuard { .. })));
    }
}
