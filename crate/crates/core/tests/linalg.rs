mod common;

use common::*;
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::Rng;
use reprocs::linalg::*;

fn det_shifted(a: &DMatrix<f64>, lambda: f64) -> f64 {
    let n = a.nrows();
    (a - DMatrix::identity(n, n) * lambda).determinant()
}

/// Eigenvalues of a symmetric matrix as roots of `det(A − λI)`, bracketed on
/// a fine grid inside the Gershgorin interval and refined by bisection.
fn charpoly_roots(a: &DMatrix<f64>) -> Vec<f64> {
    let n = a.nrows();
    let radius = (0..n)
        .map(|i| a[(i, i)].abs() + (0..n).filter(|&j| j != i).map(|j| a[(i, j)].abs()).sum::<f64>())
        .fold(0.0, f64::max)
        + 1.0;
    let steps = 20_000;
    let h = 2.0 * radius / steps as f64;
    let mut roots = Vec::new();
    let mut lo = -radius;
    let mut f_lo = det_shifted(a, lo);
    for i in 1..=steps {
        let hi = -radius + i as f64 * h;
        let f_hi = det_shifted(a, hi);
        if f_lo == 0.0 {
            roots.push(lo);
        } else if f_lo.signum() != f_hi.signum() && f_hi != 0.0 {
            let (mut a0, mut b0, mut fa) = (lo, hi, f_lo);
            for _ in 0..200 {
                let mid = 0.5 * (a0 + b0);
                let fm = det_shifted(a, mid);
                if fm.signum() == fa.signum() {
                    a0 = mid;
                    fa = fm;
                } else {
                    b0 = mid;
                }
            }
            roots.push(0.5 * (a0 + b0));
        }
        lo = hi;
        f_lo = f_hi;
    }
    roots.sort_by(|x, y| y.total_cmp(x));
    roots
}

#[test]
fn qr_identity_and_diagonal() {
    let (q, r) = qr_decompose(&DMatrix::identity(3, 3)).unwrap();
    assert!((q.as_matrix() - DMatrix::<f64>::identity(3, 3)).amax() < 1e-15);
    assert!((r - DMatrix::<f64>::identity(3, 3)).amax() < 1e-15);

    let (q, r) = qr_decompose(&DMatrix::from_diagonal(&DVector::from_vec(vec![2.0, 3.0]))).unwrap();
    assert!((q.as_matrix() - DMatrix::<f64>::identity(2, 2)).amax() < 1e-15);
    assert!((r - DMatrix::from_diagonal(&DVector::from_vec(vec![2.0, 3.0]))).amax() < 1e-15);
}

#[test]
fn qr_reconstructs_random_matrices() {
    let mut g = rng(11);
    let mut checked = 0;
    while checked < 20 {
        let m = gaussian(&mut g, 6, 3);
        let sv = m.clone().singular_values();
        if sv.max() / sv.min() >= 100.0 {
            continue;
        }
        let (q, r) = qr_decompose(&m).unwrap();
        assert!(q.orthonormality_error() <= 1e-12);
        assert!(svd_norm(&(q.as_matrix() * &r - &m)) <= 1e-10 * svd_norm(&m));
        for i in 0..3 {
            assert!(r[(i, i)] > 0.0);
            for j in 0..i {
                assert_eq!(r[(i, j)], 0.0);
            }
        }
        checked += 1;
    }
}

#[test]
fn qr_rejects_rank_deficiency() {
    let mut m = DMatrix::zeros(4, 2);
    m[(0, 0)] = 1.0;
    m[(0, 1)] = 2.0;
    assert!(matches!(qr_decompose(&m), Err(LinalgError::RankDeficient { .. })));
}

#[test]
fn evd_small_cases() {
    let d = DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, 5.0, 3.0]));
    let e = sym_evd(&d).unwrap();
    assert_eq!(e.values.as_slice(), &[5.0, 3.0, 1.0]);
    let expected_rows = [1, 2, 0];
    for (col, &row) in expected_rows.iter().enumerate() {
        assert!((e.vectors.as_matrix()[(row, col)].abs() - 1.0).abs() < 1e-14);
    }

    let v = DVector::from_vec(vec![1.0, -2.0, 2.0]) / 3.0;
    let e = sym_evd(&(&v * v.transpose())).unwrap();
    assert!((e.values[0] - 1.0).abs() < 1e-14);
    assert!(e.values.iter().skip(1).all(|x| x.abs() < 1e-14));
    let top = e.vectors.as_matrix().column(0);
    assert!((top.dot(&v).abs() - 1.0).abs() < 1e-14);
}

#[test]
fn evd_matches_characteristic_polynomial() {
    let mut g = rng(5);
    for _ in 0..10 {
        let a = random_symmetric(&mut g, 5);
        let e = sym_evd(&a).unwrap();
        let roots = charpoly_roots(&a);
        assert_eq!(roots.len(), 5, "roots {roots:?}");
        for (x, y) in e.values.iter().zip(&roots) {
            assert!((x - y).abs() <= 1e-8, "{x} vs {y}");
        }
    }
}

#[test]
fn evd_rejects_asymmetric_input() {
    let mut a = DMatrix::identity(3, 3);
    a[(0, 1)] = 1e-3;
    assert!(matches!(sym_evd(&a), Err(LinalgError::NotSymmetric(_))));
}

#[test]
fn proj_pca_examples() {
    let v = DVector::from_vec(vec![0.6, 0.0, 0.8]);
    let d = DMatrix::from_columns(&[v.clone(), &v * 2.0, -&v]);
    let out = proj_pca(&d, &BasisMatrix::empty(3), 1).unwrap();
    assert!((out.basis.as_matrix().column(0).dot(&v).abs() - 1.0).abs() < 1e-12);

    let cols: Vec<DVector<f64>> = [(1.0, 2.0), (3.0, -1.0), (-2.0, 0.5), (0.0, 1.0)]
        .iter()
        .map(|&(a, b)| DVector::from_vec(vec![a, b, 0.0, 0.0]))
        .collect();
    let d = DMatrix::from_columns(&cols);
    let out = proj_pca(&d, &BasisMatrix::unit(4, 0), 1).unwrap();
    assert!((out.basis.as_matrix()[(1, 0)].abs() - 1.0).abs() < 1e-12);
}

#[test]
fn proj_pca_matches_explicit_evd() {
    let mut g = rng(8);
    for _ in 0..10 {
        let (n, alpha, r) = (8, 50, 2);
        let p = random_basis(&mut g, n, 2);
        let d = gaussian(&mut g, n, alpha);
        let out = proj_pca(&d, &p, r).unwrap();
        let d_proj = (DMatrix::identity(n, n) - p.projector()) * &d;
        let cov = &d_proj * d_proj.transpose() / alpha as f64;
        let svd = cov.svd(true, false);
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&i, &j| svd.singular_values[j].total_cmp(&svd.singular_values[i]));
        let top = svd.u.unwrap().select_columns(order[..r].iter());
        let oracle = orthonormalize(&top).unwrap();
        assert!(subspace_error(&out.basis, &oracle).unwrap() <= 1e-9);
        assert!(subspace_error(&p, &out.basis).unwrap() >= 1.0 - 1e-9, "output must be orthogonal to p");
    }
}

#[test]
fn proj_pca_flags_degenerate_cuts() {
    let d = DMatrix::<f64>::identity(4, 4);
    let out = proj_pca(&d, &BasisMatrix::empty(4), 2).unwrap();
    assert!(out.ambiguous_cut);
    let d = DMatrix::from_column_slice(4, 2, &[1.0, 0.0, 0.0, 0.0, 2.0, 0.0, 0.0, 0.0]);
    let out = proj_pca(&d, &BasisMatrix::empty(4), 2).unwrap();
    assert!(out.rank_deficient);
}

#[test]
fn subspace_error_examples() {
    let e1 = BasisMatrix::unit(2, 0);
    let e2 = BasisMatrix::unit(2, 1);
    assert_eq!(subspace_error(&e1, &e1).unwrap(), 0.0);
    assert!((subspace_error(&e1, &e2).unwrap() - 1.0).abs() < 1e-15);
    let diag = orthonormalize(&DMatrix::from_column_slice(2, 1, &[1.0, 1.0])).unwrap();
    assert!((subspace_error(&e1, &diag).unwrap() - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-15);
    assert!(subspace_error(&BasisMatrix::unit(3, 0), &e1).is_err());
}

#[test]
fn kappa_examples() {
    let e1 = DMatrix::from_column_slice(5, 1, &[1.0, 0.0, 0.0, 0.0, 0.0]);
    assert!((kappa_s_exact(&e1, 1).unwrap() - 1.0).abs() < 1e-15);
    let flat = DMatrix::from_element(4, 1, 0.5);
    assert!((kappa_s_exact(&flat, 2).unwrap() - 0.5f64.sqrt()).abs() < 1e-15);

    let b = DMatrix::<f64>::identity(3, 2);
    assert!((kappa_proxy(&b, &[0]).unwrap() - 1.0).abs() < 1e-15);
    let h = DMatrix::from_element(2, 1, std::f64::consts::FRAC_1_SQRT_2);
    assert!((kappa_proxy(&h, &[1]).unwrap() - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-15);

    assert!(matches!(kappa_s_exact(&DMatrix::zeros(25, 1), 1), Err(LinalgError::TooLarge { .. })));
    assert!(matches!(kappa_proxy(&DMatrix::zeros(4, 1), &[0]), Err(LinalgError::Degenerate(_))));
}

#[test]
fn kappa_exact_matches_enumeration() {
    let mut g = rng(21);
    for _ in 0..5 {
        let b = random_basis(&mut g, 8, 2).into_matrix();
        let mut best = 0.0_f64;
        let supports = subsets(8, 3);
        assert_eq!(supports.len(), 56);
        for t in supports {
            best = best.max(svd_norm(&b.select_rows(t.iter())) / svd_norm(&b));
        }
        assert!((kappa_s_exact(&b, 3).unwrap() - best).abs() < 1e-12);
    }
}

#[test]
fn kappa_proxy_matches_explicit_svd() {
    let mut g = rng(3);
    let b = gaussian(&mut g, 10, 2);
    let support = [0, 3, 6];
    let expected = svd_norm(&b.select_rows(support.iter())) / svd_norm(&b);
    assert!((kappa_proxy(&b, &support).unwrap() - expected).abs() < 1e-12);
}

#[test]
fn ric_examples() {
    assert!((ric_complement(&BasisMatrix::unit(2, 0), 1).unwrap() - 1.0).abs() < 1e-15);
    let diag = orthonormalize(&DMatrix::from_column_slice(2, 1, &[1.0, 1.0])).unwrap();
    assert!((ric_complement(&diag, 1).unwrap() - 0.5).abs() < 1e-15);
}

#[test]
fn ric_matches_brute_force_random() {
    let mut g = rng(33);
    let p = random_basis(&mut g, 10, 3);
    let a = DMatrix::identity(10, 10) - p.projector();
    assert!((ric_complement(&p, 2).unwrap() - ric_brute_force(&a, 2)).abs() < 1e-10);
}

#[test]
fn span_basis_denseness_ignores_scaling() {
    let mut g = rng(4);
    let b = gaussian(&mut g, 9, 2);
    let scaled = &b * DMatrix::from_column_slice(2, 2, &[3.0, 0.0, 1.0, 0.1]);
    let x = kappa_s_exact_with(&b, 2, Denseness::SpanBasis).unwrap();
    let y = kappa_s_exact_with(&scaled, 2, Denseness::SpanBasis).unwrap();
    assert!((x - y).abs() < 1e-12);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn produced_bases_are_orthonormal(seed in any::<u64>(), n in 2usize..12, r in 1usize..6) {
        let r = r.min(n);
        let mut g = rng(seed);
        let p = random_basis(&mut g, n, r);
        prop_assert!(p.orthonormality_error() <= 1e-10);
        let d = gaussian(&mut g, n, 7);
        let out = proj_pca(&d, &p, (n - r).min(7).min(2)).unwrap();
        prop_assert!(out.basis.orthonormality_error() <= 1e-10);
        let e = sym_evd(&random_symmetric(&mut g, n)).unwrap();
        prop_assert!(e.vectors.orthonormality_error() <= 1e-10);
    }

    #[test]
    fn evd_reconstructs_and_sorts(seed in any::<u64>(), n in 1usize..9) {
        let mut g = rng(seed);
        let a = random_symmetric(&mut g, n);
        let e = sym_evd(&a).unwrap();
        prop_assert!(e.values.as_slice().windows(2).all(|w| w[0] >= w[1]));
        let u = e.vectors.as_matrix();
        let rec = u * DMatrix::from_diagonal(&e.values) * u.transpose();
        prop_assert!(svd_norm(&(rec - &a)) <= 1e-9 * svd_norm(&a));
    }

    #[test]
    fn proj_pca_invariances(seed in any::<u64>(), n in 4usize..10, alpha in 3usize..12) {
        let mut g = rng(seed);
        let p = random_basis(&mut g, n, 1);
        let d = gaussian(&mut g, n, alpha);
        let r = 2.min(alpha);
        let base = proj_pca(&d, &p, r).unwrap();
        prop_assume!(!base.ambiguous_cut && !base.rank_deficient);
        let gap = base.eigenvalues[r - 1] - base.eigenvalues.get(r).copied().unwrap_or(0.0);
        prop_assume!(gap > 1e-3 * base.eigenvalues[0]);

        let mut perm: Vec<usize> = (0..alpha).collect();
        perm.reverse();
        perm.rotate_left(seed as usize % alpha);
        let permuted = proj_pca(&d.select_columns(perm.iter()), &p, r).unwrap();
        prop_assert!(subspace_error(&permuted.basis, &base.basis).unwrap() <= 1e-9);

        let q = random_orthogonal(&mut g, alpha);
        let rotated = proj_pca(&(&d * q), &p, r).unwrap();
        prop_assert!(subspace_error(&rotated.basis, &base.basis).unwrap() <= 1e-9);
    }

    #[test]
    fn subspace_error_symmetric_for_equal_ranks(seed in any::<u64>(), n in 2usize..12, r in 1usize..6) {
        let r = r.min(n);
        let mut g = rng(seed);
        let a = random_basis(&mut g, n, r);
        let b = random_basis(&mut g, n, r);
        let ab = subspace_error(&a, &b).unwrap();
        let ba = subspace_error(&b, &a).unwrap();
        prop_assert!((ab - ba).abs() <= 1e-9);
        prop_assert!((0.0..=1.0).contains(&ab));
    }

    #[test]
    fn projector_gap_bounded_by_twice_subspace_error(seed in any::<u64>(), n in 2usize..12, r in 1usize..6) {
        let mut g = rng(seed);
        let p = random_basis(&mut g, n, r.min(n));
        let p_hat = random_basis(&mut g, n, r.min(n));
        let gap = svd_norm(&(p.projector() - p_hat.projector()));
        prop_assert!(gap <= 2.0 * subspace_error(&p_hat, &p).unwrap() + 1e-12);
    }

    #[test]
    fn sin_theta_bound(seed in any::<u64>(), n in 3usize..9, c in 1usize..3) {
        let c = c.min(n - 1);
        let mut g = rng(seed);
        let basis = random_orthogonal(&mut g, n);
        let e = basis.columns(0, c).into_owned();
        let top: Vec<f64> = (0..c).map(|i| 10.0 + i as f64 + g.random::<f64>()).collect();
        let rest: Vec<f64> = (c..n).map(|_| 4.0 * g.random::<f64>()).collect();
        let lam = DVector::from_iterator(n, top.iter().chain(&rest).copied());
        let a = &basis * DMatrix::from_diagonal(&lam) * basis.transpose();
        let raw = random_symmetric(&mut g, n);
        let room = top.iter().copied().fold(f64::INFINITY, f64::min) - rest.iter().copied().fold(0.0, f64::max);
        let h = &raw * (0.9 * room * g.random::<f64>() / svd_norm(&raw));
        let h_norm = svd_norm(&h);
        prop_assert!(room > h_norm);
        let evd = sym_evd(&(&a + &h)).unwrap();
        let f = evd.vectors.select_columns(&(0..c).collect::<Vec<_>>());
        let lhs = svd_norm(&f.project_out_matrix(&e));
        prop_assert!(lhs <= h_norm / (room - h_norm) + 1e-12);
    }

    #[test]
    fn kappa_monotone_and_projector_invariant(seed in any::<u64>(), n in 3usize..10, r in 1usize..4) {
        let r = r.min(n);
        let mut g = rng(seed);
        let p = random_basis(&mut g, n, r);
        let mut prev = 0.0;
        for s in 1..=n {
            let k = kappa_s_exact(p.as_matrix(), s).unwrap();
            prop_assert!(k >= prev - 1e-15);
            let kp = kappa_s_exact(&p.projector(), s).unwrap();
            prop_assert!((k - kp).abs() <= 1e-10);
            prev = k;
        }
    }

    #[test]
    fn ric_identity(seed in any::<u64>(), n in 2usize..8, r in 1usize..4, s in 1usize..4) {
        let r = r.min(n);
        let s = s.min(n);
        let mut g = rng(seed);
        let p = random_basis(&mut g, n, r);
        let k = kappa_s_exact(p.as_matrix(), s).unwrap();
        prop_assert_eq!(ric_complement(&p, s).unwrap(), k * k);
        let a = DMatrix::identity(n, n) - p.projector();
        prop_assert!((ric_complement(&p, s).unwrap() - ric_brute_force(&a, s)).abs() <= 1e-10);
    }
}
