mod common;

use common::*;
use expint::matfunc::{
    canonical_leja, divided_differences, gershgorin_interval, leja_points, newton_apply, phi1, phi1_complex,
    Axis, LejaInterpolant, Propagator, SpectralInterval, Target, LEJA_CANDIDATES,
};
use expint::sparse::{assemble_stencil, CsrMatrix};
use expint::stencil::{BoundaryCondition, Coefficient, StencilOperator};
use expint::{Complex64, Grid3D, LinearOperator};
use nalgebra::{DMatrix, SymmetricEigen};
use proptest::prelude::*;
use rand::Rng;

fn csr_from_dense(a: &DMatrix<f64>) -> CsrMatrix<f64> {
    let n = a.nrows();
    let rows: Vec<f64> = (0..n * n).map(|k| a[(k / n, k % n)]).collect();
    CsrMatrix::from_dense(n, n, &rows).unwrap()
}

#[test]
fn phi1_small_argument_matches_extended_precision() {
    let z = -1e-3;
    let want = phi1_oracle(z, 0.0).re;
    assert!((phi1(z) - want).abs() <= 1e-15 * want.abs());
}

#[test]
fn phi1_is_continuous_across_the_switch() {
    for &s in &[1.0, -1.0] {
        let below = s * 1e-2;
        let above = s * f64::from_bits(1e-2f64.to_bits() + 1);
        let (a, b) = (phi1(below), phi1(above));
        assert!((a - b).abs() <= 1e-15 * a.abs(), "{a} {b}");
        for z in [below, above] {
            let want = phi1_oracle(z, 0.0).re;
            assert!((phi1(z) - want).abs() <= 1e-15 * want.abs());
        }
    }
    let zc = Complex64::new(0.0, 1e-2);
    let zc2 = Complex64::new(0.0, f64::from_bits(1e-2f64.to_bits() + 1));
    assert!((phi1_complex(zc) - phi1_complex(zc2)).norm() <= 1e-15);
}

fn brute_force_leja(count: usize) -> Vec<f64> {
    let grid: Vec<f64> = (0..100_001).map(|i| -2.0 + 4.0 * i as f64 / 100_000.0).collect();
    let mut nodes = vec![2.0];
    while nodes.len() < count {
        let mut best = (f64::NEG_INFINITY, 0.0);
        for &x in &grid {
            let p: f64 = nodes.iter().map(|&n| (x - n).abs()).product();
            if p > best.0 {
                best = (p, x);
            }
        }
        nodes.push(best.1);
    }
    nodes
}

#[test]
fn leja_points_match_brute_force_maximization() {
    let ours = canonical_leja(8).unwrap();
    let oracle = brute_force_leja(8);
    assert_eq!(&ours[..3], &[2.0, -2.0, 0.0]);
    for (a, b) in ours.iter().zip(&oracle) {
        assert!((a - b).abs() < 1e-4, "{ours:?} vs {oracle:?}");
    }
    assert_eq!(canonical_leja(40).unwrap(), canonical_leja(40).unwrap());
    assert!(canonical_leja(LEJA_CANDIDATES + 1).is_err());
}

#[test]
fn mapped_leja_points_stay_in_interval_and_are_distinct() {
    let iv = SpectralInterval::real(3.0, 11.0).unwrap();
    let pts = leja_points(&iv, 120).unwrap();
    assert_eq!(pts[0], 11.0);
    for (i, p) in pts.iter().enumerate() {
        assert!((3.0..=11.0).contains(p));
        for q in &pts[..i] {
            assert_ne!(p, q);
        }
    }
}

#[test]
fn divided_differences_match_exact_series() {
    let s = Complex64::new(-0.1, 0.0);
    let dd = divided_differences(&[2.0, -2.0, 0.0], Target::Phi1, s).unwrap();
    let exact = exact_divided_differences(&[2.0, -2.0, 0.0], Target::Phi1, -0.1, 200);
    for (a, b) in dd.iter().zip(&exact) {
        assert!((a.re - b).abs() <= 1e-12 * b.abs(), "{a} vs {b}");
    }
}

#[test]
fn interpolant_divided_differences_on_thirty_leja_nodes() {
    for (a, b, h) in [(0.0, 40.0, 0.01), (0.0, 50.0, 0.1), (2.0, 30.0, 0.05), (0.0, 400.0, 0.1)] {
        let iv = SpectralInterval::real(a, b).unwrap();
        for target in [Target::Exp, Target::Phi1] {
            let interp = LejaInterpolant::new(iv, target, h, 29).unwrap();
            let dd = interp.divided_differences(30).unwrap();
            // interpolant works in ξ with x = c + γξ, so f(ξ) = target(-h(c + γξ))
            let xi = canonical_leja(30).unwrap();
            let (c, g) = (iv.center(), iv.gamma());
            let nodes: Vec<f64> = xi.iter().map(|&x| c + g * x).collect();
            let exact = exact_divided_differences(&nodes, target, -h, 400);
            for k in 0..30 {
                // f[ξ₀..ξ_k] = γ^k f[x₀..x_k]
                let want = exact[k] * g.powi(k as i32);
                let got = dd[k].re;
                assert!(
                    (got - want).abs() <= 1e-12 * want.abs(),
                    "[{a},{b}] h={h} {target:?} k={k}: {got:e} vs {want:e}"
                );
            }
        }
    }
}

#[test]
fn gershgorin_examples() {
    let g = Grid3D::new(3, 1, 1).unwrap();
    let op = StencilOperator::new(g, BoundaryCondition::HomogeneousDirichlet);
    let iv = gershgorin_interval::<f64, _>(&op, Axis::Real);
    assert_eq!((iv.a, iv.b), (0.0, 64.0));
    let zero = CsrMatrix::<f64>::from_triplets(3, 3, vec![]).unwrap();
    let iv = gershgorin_interval(&zero, Axis::Real);
    assert_eq!((iv.a, iv.b), (0.0, 0.0));
    let diag = CsrMatrix::from_triplets(2, 2, vec![(0, 0, 1.0), (1, 1, 5.0)]).unwrap();
    let iv = gershgorin_interval(&diag, Axis::Real);
    assert_eq!((iv.a, iv.b), (1.0, 5.0));
}

#[test]
fn gershgorin_interval_contains_assembled_spectra() {
    let grids = [Grid3D::cube(4).unwrap(), Grid3D::new(6, 5, 3).unwrap(), Grid3D::cube(6).unwrap()];
    for g in grids {
        for bc in [BoundaryCondition::HomogeneousDirichlet, BoundaryCondition::Periodic] {
            for coeff in [false, true] {
                let mut op = StencilOperator::new(g, bc.clone());
                if coeff {
                    op = op.with_coefficient(Coefficient::inverse_radial());
                }
                let iv = gershgorin_interval::<f64, _>(&op, Axis::Real);
                let (a, _) = assemble_stencil::<f64>(&op).unwrap();
                let n = a.nrows();
                let dense = DMatrix::from_row_slice(n, n, &a.to_dense());
                // D·L is similar to the symmetric D^{1/2} L D^{1/2}
                let sym = if coeff {
                    let dvec: Vec<f64> = (0..n)
                        .map(|i| {
                            let (ix, iy, iz) = g.triple(i);
                            let [x, y, z] = g.position(ix, iy, iz);
                            Coefficient::inverse_radial().eval(x, y, z)
                        })
                        .collect();
                    DMatrix::from_fn(n, n, |i, j| dense[(i, j)] * (dvec[j] / dvec[i]).sqrt())
                } else {
                    dense
                };
                let sym = (&sym + sym.transpose()) * 0.5;
                let eig = SymmetricEigen::new(sym).eigenvalues;
                for &l in eig.iter() {
                    assert!(l >= iv.a - 1e-9 * iv.b && l <= iv.b * (1.0 + 1e-12), "{l} not in [{}, {}]", iv.a, iv.b);
                }
            }
        }
    }
}

#[test]
fn newton_on_zero_matrix_returns_input() {
    let zero = CsrMatrix::<f64>::from_triplets(4, 4, vec![]).unwrap();
    let iv = gershgorin_interval(&zero, Axis::Real);
    let interp = LejaInterpolant::new(iv, Target::Exp, 0.7, 50).unwrap();
    let v = vec![1.0, -2.0, 3.0, 0.5];
    let r = newton_apply(&zero, &interp, &v, 1e-10).unwrap();
    assert_eq!(r.value, v);
    assert!(r.matvecs <= 2);
}

#[test]
fn newton_matches_dense_eigendecomposition() {
    let mut rng = rng(7);
    let n = 50;
    let mut eigs: Vec<f64> = (0..n).map(|_| rng.gen_range(0.0..40.0)).collect();
    eigs[0] = 0.0;
    eigs[1] = 40.0;
    let a = symmetric_with_spectrum(&eigs, &mut rng);
    let csr = csr_from_dense(&a);
    let v: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let h = 0.01;
    let iv = gershgorin_interval(&csr, Axis::Real);
    for target in [Target::Exp, Target::Phi1] {
        let interp = LejaInterpolant::new(iv, target, h, 150).unwrap();
        let r = newton_apply(&csr, &interp, &v, 1e-10).unwrap();
        let want = dense_apply_fn(&a, &v, |l| match target {
            Target::Exp => (-h * l).exp(),
            Target::Phi1 => phi1(-h * l),
        });
        let err = rel_err(&r.value, &want);
        assert!(err <= 1e-8, "{target:?}: {err:e}");
    }
}

#[test]
fn newton_converges_on_17_cube_laplacian() {
    let g = Grid3D::cube(17).unwrap();
    let op = StencilOperator::new(g, BoundaryCondition::HomogeneousDirichlet);
    let iv = gershgorin_interval::<f64, _>(&op, Axis::Real);
    let h = 20.0 / iv.gamma();
    let v: Vec<f64> = (0..g.len()).map(|i| ((i * 7919) % 101) as f64 / 101.0).collect();
    for target in [Target::Exp, Target::Phi1] {
        let interp = LejaInterpolant::new(iv, target, h, 150).unwrap();
        let r = newton_apply::<f64, _>(&op, &interp, &v, 1e-8).unwrap();
        assert!(r.degree <= 150);
    }
}

#[test]
fn widening_the_interval_barely_changes_the_result() {
    let g = Grid3D::cube(9).unwrap();
    let op = StencilOperator::new(g, BoundaryCondition::HomogeneousDirichlet);
    let iv = gershgorin_interval::<f64, _>(&op, Axis::Real);
    let v: Vec<f64> = (0..g.len()).map(|i| (i as f64 * 0.37).sin()).collect();
    let tol = 1e-8;
    for target in [Target::Exp, Target::Phi1] {
        let a = newton_apply::<f64, _>(&op, &LejaInterpolant::new(iv, target, 1e-3, 150).unwrap(), &v, tol).unwrap();
        let b = newton_apply::<f64, _>(&op, &LejaInterpolant::new(iv.widened(1.0), target, 1e-3, 150).unwrap(), &v, tol)
            .unwrap();
        assert!(diff_norm(&a.value, &b.value) <= 10.0 * tol * norm(&v));
    }
}

#[test]
fn polynomial_exactness_on_diagonal_matrices() {
    let iv = SpectralInterval::real(0.0, 20.0).unwrap();
    let d = 6;
    let nodes = leja_points(&iv, d).unwrap();
    let a = CsrMatrix::from_triplets(d, d, nodes.iter().enumerate().map(|(i, &x)| (i, i, x)).collect()).unwrap();
    let v = vec![1.0; d];
    for target in [Target::Exp, Target::Phi1] {
        let interp = LejaInterpolant::new(iv, target, 0.3, 40).unwrap();
        let r = newton_apply(&a, &interp, &v, 1e-14).unwrap();
        for (i, &x) in nodes.iter().enumerate() {
            let want = target.eval(Complex64::new(-0.3 * x, 0.0)).re;
            assert!((r.value[i] - want).abs() <= 1e-13 * want.abs().max(1e-3), "{target:?} {i}");
        }
        assert!(r.degree <= d + 1);
    }
}

#[test]
fn non_convergence_is_reported_then_rescued_by_halving() {
    let g = Grid3D::cube(9).unwrap();
    let op = StencilOperator::new(g, BoundaryCondition::HomogeneousDirichlet);
    let iv = gershgorin_interval::<f64, _>(&op, Axis::Real);
    let v: Vec<f64> = (0..g.len()).map(|i| (i as f64).cos()).collect();
    let h = 0.05;
    let interp = LejaInterpolant::new(iv, Target::Exp, h, 30).unwrap();
    assert!(matches!(
        newton_apply::<f64, _>(&op, &interp, &v, 1e-10),
        Err(expint::Error::NonConvergence { .. })
    ));
    let prop = Propagator::new(&op, iv, 1e-10, 30).unwrap();
    let out = prop.exp_apply(h, &v).unwrap();
    assert!(prop.stats().halvings > 0);
    let (a, _) = assemble_stencil::<f64>(&op).unwrap();
    let dense = DMatrix::from_row_slice(a.nrows(), a.ncols(), &a.to_dense());
    let want = dense_apply_fn(&dense, &v, |l| (-h * l).exp());
    assert!(rel_err(&out, &want) < 1e-8);
}

#[test]
fn imaginary_axis_needs_complex_vectors() {
    let h = CsrMatrix::<f64>::identity(3);
    let iv = SpectralInterval::new(0.0, 2.0, Axis::Imaginary).unwrap();
    let interp = LejaInterpolant::new(iv, Target::Exp, 0.5, 30).unwrap();
    assert!(newton_apply(&h, &interp, &vec![1.0; 3], 1e-8).is_err());
}

#[test]
fn imaginary_axis_propagation_is_unitary_on_a_two_level_system() {
    let one = Complex64::new(1.0, 0.0);
    let h = CsrMatrix::from_triplets(2, 2, vec![(0, 1, one), (1, 0, one)]).unwrap();
    let iv = gershgorin_interval(&h, Axis::Imaginary);
    let t = 0.9;
    let interp = LejaInterpolant::new(iv, Target::Exp, t, 80).unwrap();
    let r = newton_apply(&h, &interp, &vec![one, Complex64::new(0.0, 0.0)], 1e-12).unwrap();
    // exp(-i t σx) e₀ = (cos t, -i sin t)
    assert!((r.value[0] - Complex64::new(t.cos(), 0.0)).norm() < 1e-11);
    assert!((r.value[1] - Complex64::new(0.0, -t.sin())).norm() < 1e-11);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn phi1_real_matches_oracle(z in -10.0f64..10.0) {
        let want = phi1_oracle(z, 0.0).re;
        prop_assert!((phi1(z) - want).abs() <= 1e-14 * want.abs());
    }

    #[test]
    fn phi1_imaginary_matches_oracle(y in -10.0f64..10.0) {
        let want = phi1_oracle(0.0, y);
        let got = phi1_complex(Complex64::new(0.0, y));
        prop_assert!((got - want).norm() <= 1e-14 * want.norm());
    }

    #[test]
    fn leja_prefixes_are_stable(n in 1usize..60, m in 1usize..60) {
        let a = canonical_leja(n.max(m)).unwrap();
        let b = canonical_leja(n.min(m)).unwrap();
        prop_assert_eq!(&a[..b.len()], &b[..]);
    }

    #[test]
    fn csr_interval_contains_random_symmetric_spectra(seed in 0u64..1000) {
        let mut r = rng(seed);
        let n = r.gen_range(2..12);
        let a = DMatrix::from_fn(n, n, |_, _| if r.gen_bool(0.4) { r.gen_range(-3.0..3.0) } else { 0.0 });
        let a = (&a + a.transpose()) * 0.5;
        let csr = csr_from_dense(&a);
        let iv = gershgorin_interval(&csr, Axis::Real);
        for &l in SymmetricEigen::new(a).eigenvalues.iter() {
            prop_assert!(l >= iv.a - 1e-12 && l <= iv.b + 1e-12);
        }
    }
}

#[test]
fn linear_operator_dims_agree() {
    let g = Grid3D::new(4, 3, 2).unwrap();
    let op = StencilOperator::new(g, BoundaryCondition::HomogeneousDirichlet);
    assert_eq!(LinearOperator::<f64>::dim(&op), 24);
}
