//! Helpers shared by the integration tests.
#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use reprocs::linalg::{orthonormalize, BasisMatrix};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn gaussian(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| rng.sample(StandardNormal))
}

pub fn gaussian_vec(rng: &mut ChaCha8Rng, n: usize) -> DVector<f64> {
    DVector::from_fn(n, |_, _| rng.sample(StandardNormal))
}

pub fn random_basis(rng: &mut ChaCha8Rng, n: usize, r: usize) -> BasisMatrix {
    orthonormalize(&gaussian(rng, n, r)).expect("gaussian matrices have full rank")
}

pub fn random_orthogonal(rng: &mut ChaCha8Rng, n: usize) -> DMatrix<f64> {
    random_basis(rng, n, n).into_matrix()
}

pub fn random_symmetric(rng: &mut ChaCha8Rng, n: usize) -> DMatrix<f64> {
    let g = gaussian(rng, n, n);
    (&g + g.transpose()) * 0.5
}

/// Largest singular value via nalgebra's SVD, independent of the crate's
/// Gram-matrix route.
pub fn svd_norm(m: &DMatrix<f64>) -> f64 {
    if m.nrows() == 0 || m.ncols() == 0 {
        return 0.0;
    }
    m.clone().singular_values().max()
}

/// All `k`-subsets of `0..n` in lexicographic order.
pub fn subsets(n: usize, k: usize) -> Vec<Vec<usize>> {
    fn go(n: usize, k: usize, start: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == k {
            out.push(cur.clone());
            return;
        }
        for i in start..n {
            if n - i < k - cur.len() {
                break;
            }
            cur.push(i);
            go(n, k, i + 1, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    go(n, k, 0, &mut Vec::new(), &mut out);
    out
}

/// `s`-restricted isometry constant of `a` by definition: the largest
/// deviation from 1 of any eigenvalue of `A_T' A_T` over `|T| = s`.
pub fn ric_brute_force(a: &DMatrix<f64>, s: usize) -> f64 {
    let mut best = 0.0_f64;
    for t in subsets(a.ncols(), s) {
        let cols = a.select_columns(t.iter());
        let gram = cols.tr_mul(&cols);
        let eig = gram.symmetric_eigenvalues();
        best = best.max(1.0 - eig.min()).max(eig.max() - 1.0);
    }
    best
}

/// One projected-CS instance `y = Φ(x₀ + β)` with `‖β‖₂ ≤ ξ`.
pub struct CsInstance {
    pub basis: BasisMatrix,
    pub x0: DVector<f64>,
    pub y: DVector<f64>,
    pub xi: f64,
    /// `δ_{2s}(I − P̂P̂')`.
    pub ric: f64,
}

/// Draws 2-dimensional bases in `R^30` until `δ_6(I − P̂P̂') < √2 − 1`, then
/// a 3-sparse signal with magnitudes in `[2, 3]` and a bounded perturbation.
pub fn cs_instance(g: &mut ChaCha8Rng) -> CsInstance {
    let (n, s) = (30, 3);
    let (basis, ric) = loop {
        let p = dense_rank2_basis(g, n);
        let b = ric_rank2(&p, 2 * s);
        if b < std::f64::consts::SQRT_2 - 1.0 {
            break (p, b);
        }
    };
    let mut x0 = DVector::zeros(n);
    let mut placed = 0;
    while placed < s {
        let i = g.random_range(0..n);
        if x0[i] == 0.0 {
            let sign = if g.random::<bool>() { 1.0 } else { -1.0 };
            x0[i] = sign * g.random_range(2.0..3.0);
            placed += 1;
        }
    }
    let xi = g.random_range(0.05..1.0);
    let dir = gaussian_vec(g, n);
    let beta = &dir * (xi * g.random::<f64>() / dir.norm());
    let y = basis.project_out(&(&x0 + beta));
    CsInstance { basis, x0, y, xi, ric }
}

/// Rank-2 basis whose rows point in jittered, evenly spread directions, so
/// no few rows carry much of its energy. Gaussian bases in `R^30` almost
/// never have `δ_6 < √2 − 1`.
pub fn dense_rank2_basis(g: &mut ChaCha8Rng, n: usize) -> BasisMatrix {
    let phase = g.random_range(0.0..std::f64::consts::TAU);
    let mut rows: Vec<(f64, f64)> = (0..n)
        .map(|i| {
            let theta = std::f64::consts::TAU * (i as f64 + g.random_range(-0.15..0.15)) / n as f64 + phase;
            (theta.cos(), theta.sin())
        })
        .collect();
    for i in (1..n).rev() {
        rows.swap(i, g.random_range(0..=i));
    }
    let m = DMatrix::from_fn(n, 2, |i, j| if j == 0 { rows[i].0 } else { rows[i].1 });
    orthonormalize(&m).expect("spread directions give full rank")
}

/// `C₁ = 4√(1+b) / (1 − (√2+1) b)`.
pub fn c1_constant(b: f64) -> f64 {
    4.0 * (1.0 + b).sqrt() / (1.0 - (std::f64::consts::SQRT_2 + 1.0) * b)
}

/// `δ_s(I − PP')` for a rank-2 `P` by enumerating every support: for each
/// `|T| = s`, `(I − PP')_T'(I − PP')_T = I − P_T P_T'` whose eigenvalues
/// below 1 are `1 − eig(P_T' P_T)`, a 2×2 problem.
pub fn ric_rank2(p: &BasisMatrix, s: usize) -> f64 {
    let m = p.as_matrix();
    assert_eq!(m.ncols(), 2);
    let rows: Vec<[f64; 3]> = (0..m.nrows())
        .map(|i| [m[(i, 0)] * m[(i, 0)], m[(i, 0)] * m[(i, 1)], m[(i, 1)] * m[(i, 1)]])
        .collect();
    fn go(rows: &[[f64; 3]], left: usize, start: usize, acc: [f64; 3], best: &mut f64) {
        if left == 0 {
            let [a, b, d] = acc;
            let top = 0.5 * (a + d) + (0.25 * (a - d) * (a - d) + b * b).sqrt();
            *best = best.max(top);
            return;
        }
        for i in start..=rows.len() - left {
            let r = rows[i];
            go(rows, left - 1, i + 1, [acc[0] + r[0], acc[1] + r[1], acc[2] + r[2]], best);
        }
    }
    let mut best = 0.0;
    go(&rows, s.min(rows.len()), 0, [0.0; 3], &mut best);
    best
}
