//! Dense linear-algebra kernels: QR with a fixed sign convention, symmetric
//! eigendecomposition in non-increasing order, projection-PCA, subspace error
//! and the denseness coefficient `kappa_s` together with the restricted
//! isometry constant it induces on `I - P P'`.
//!
//! Index sets are 0-based throughout.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use thiserror::Error;

/// Dense real matrix.
pub type Matrix = DMatrix<f64>;

/// Orthonormality tolerance for [`BasisMatrix`] in spectral norm.
pub const BASIS_TOL: f64 = 1e-10;

/// Largest row dimension accepted by [`kappa_s_exact`].
pub const KAPPA_EXACT_MAX_ROWS: usize = 24;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LinalgError {
    #[error("matrix is rank deficient (smallest singular value {smallest:e}, largest {largest:e})")]
    RankDeficient { smallest: f64, largest: f64 },
    #[error("matrix is not symmetric (relative asymmetry {0:e})")]
    NotSymmetric(f64),
    #[error("matrix has non-finite entries")]
    NonFinite,
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("exhaustive denseness needs at most {max} rows, got {rows}; use kappa_proxy instead")]
    TooLarge { rows: usize, max: usize },
    #[error("degenerate input: {0}")]
    Degenerate(&'static str),
    #[error("columns are not orthonormal (deviation {0:e})")]
    NotOrthonormal(f64),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

pub type Result<T> = std::result::Result<T, LinalgError>;

/// Tall matrix with orthonormal columns. Zero columns is a valid (empty) basis.
#[derive(Debug, Clone, PartialEq)]
pub struct BasisMatrix(Matrix);

impl BasisMatrix {
    /// Empty basis in `R^n`.
    pub fn empty(n: usize) -> Self {
        BasisMatrix(Matrix::zeros(n, 0))
    }

    /// Wraps `m` after checking `‖m'm − I‖₂ ≤ 1e-10`.
    pub fn new(m: Matrix) -> Result<Self> {
        if m.iter().any(|v| !v.is_finite()) {
            return Err(LinalgError::NonFinite);
        }
        let dev = orthonormality_error(&m);
        if dev > BASIS_TOL {
            return Err(LinalgError::NotOrthonormal(dev));
        }
        Ok(BasisMatrix(m))
    }

    pub(crate) fn from_orthonormal(m: Matrix) -> Self {
        debug_assert!(orthonormality_error(&m) <= 1e-8);
        BasisMatrix(m)
    }

    /// The `i`-th standard basis vector of `R^n` as a one-column basis.
    pub fn unit(n: usize, i: usize) -> Self {
        let mut m = Matrix::zeros(n, 1);
        m[(i, 0)] = 1.0;
        BasisMatrix(m)
    }

    /// Ambient dimension `n`.
    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    /// Number of columns.
    pub fn rank(&self) -> usize {
        self.0.ncols()
    }

    pub fn is_empty(&self) -> bool {
        self.0.ncols() == 0
    }

    pub fn as_matrix(&self) -> &Matrix {
        &self.0
    }

    pub fn into_matrix(self) -> Matrix {
        self.0
    }

    /// `‖P'P − I‖₂`.
    pub fn orthonormality_error(&self) -> f64 {
        orthonormality_error(&self.0)
    }

    /// Selected columns, in the given order.
    pub fn select_columns(&self, cols: &[usize]) -> BasisMatrix {
        BasisMatrix(self.0.select_columns(cols.iter()))
    }

    /// `[self, other]`. The caller guarantees that the blocks are mutually
    /// orthogonal; this is checked in debug builds.
    pub fn hstack(&self, other: &BasisMatrix) -> BasisMatrix {
        assert_eq!(self.dim(), other.dim(), "hstack of bases with different row counts");
        let mut m = Matrix::zeros(self.dim(), self.rank() + other.rank());
        m.columns_mut(0, self.rank()).copy_from(&self.0);
        m.columns_mut(self.rank(), other.rank()).copy_from(&other.0);
        BasisMatrix::from_orthonormal(m)
    }

    /// Concatenation of several bases.
    pub fn concat<'a>(n: usize, parts: impl IntoIterator<Item = &'a BasisMatrix>) -> BasisMatrix {
        parts
            .into_iter()
            .fold(BasisMatrix::empty(n), |acc, p| acc.hstack(p))
    }

    /// `(I − P P') x`.
    pub fn project_out(&self, x: &DVector<f64>) -> DVector<f64> {
        if self.is_empty() {
            return x.clone();
        }
        let coeffs = self.0.tr_mul(x);
        let mut out = x.clone();
        out.gemv(-1.0, &self.0, &coeffs, 1.0);
        out
    }

    /// `(I − P P') D` for a matrix `D`.
    pub fn project_out_matrix(&self, d: &Matrix) -> Matrix {
        if self.is_empty() {
            return d.clone();
        }
        let coeffs = self.0.tr_mul(d);
        let mut out = d.clone();
        out.gemm(-1.0, &self.0, &coeffs, 1.0);
        out
    }

    /// `P P'` as a dense matrix.
    pub fn projector(&self) -> Matrix {
        &self.0 * self.0.transpose()
    }
}

fn orthonormality_error(m: &Matrix) -> f64 {
    if m.ncols() == 0 {
        return 0.0;
    }
    let mut g = m.tr_mul(m);
    for i in 0..g.nrows() {
        g[(i, i)] -= 1.0;
    }
    sym_spectral_radius(&g)
}

/// Largest absolute eigenvalue of a symmetric matrix.
fn sym_spectral_radius(a: &Matrix) -> f64 {
    if a.nrows() == 0 {
        return 0.0;
    }
    SymmetricEigen::new(a.clone())
        .eigenvalues
        .iter()
        .fold(0.0_f64, |acc, v| acc.max(v.abs()))
}

/// Largest eigenvalue of a small symmetric positive semidefinite matrix.
fn psd_max_eigenvalue(g: &Matrix) -> f64 {
    match g.nrows() {
        0 => 0.0,
        1 => g[(0, 0)].max(0.0),
        2 => {
            let (a, b, d) = (g[(0, 0)], g[(0, 1)], g[(1, 1)]);
            let half_tr = 0.5 * (a + d);
            let disc = (0.25 * (a - d) * (a - d) + b * b).sqrt();
            (half_tr + disc).max(0.0)
        }
        _ => SymmetricEigen::new(g.clone())
            .eigenvalues
            .iter()
            .fold(0.0_f64, |acc, &v| acc.max(v)),
    }
}

/// Spectral norm (largest singular value).
pub fn spectral_norm(m: &Matrix) -> f64 {
    if m.nrows() == 0 || m.ncols() == 0 {
        return 0.0;
    }
    let g = if m.ncols() <= m.nrows() { m.tr_mul(m) } else { m * m.transpose() };
    psd_max_eigenvalue(&g).sqrt()
}

/// Flips each column so that its largest-magnitude entry is positive.
fn normalize_column_signs(m: &mut Matrix) {
    for mut col in m.column_iter_mut() {
        let mut best = 0.0_f64;
        let mut sign = 1.0;
        for &v in col.iter() {
            if v.abs() > best {
                best = v.abs();
                sign = v.signum();
            }
        }
        if sign < 0.0 {
            col.neg_mut();
        }
    }
}

/// QR factorization `M = Q R` with `Q'Q = I` and positive diagonal in `R`.
pub fn qr_decompose(m: &Matrix) -> Result<(BasisMatrix, Matrix)> {
    if m.iter().any(|v| !v.is_finite()) {
        return Err(LinalgError::NonFinite);
    }
    if m.ncols() > m.nrows() {
        return Err(LinalgError::RankDeficient { smallest: 0.0, largest: spectral_norm(m) });
    }
    if m.ncols() == 0 {
        return Ok((BasisMatrix::empty(m.nrows()), Matrix::zeros(0, 0)));
    }
    let sv = m.clone().singular_values();
    let largest = sv.max();
    let smallest = sv.min();
    if largest == 0.0 || smallest <= 1e-12 * largest {
        return Err(LinalgError::RankDeficient { smallest, largest });
    }
    let qr = m.clone().qr();
    let mut q = qr.q();
    let mut r = qr.r();
    for i in 0..r.nrows() {
        if r[(i, i)] < 0.0 {
            q.column_mut(i).neg_mut();
            r.row_mut(i).neg_mut();
        }
    }
    Ok((BasisMatrix::from_orthonormal(q), r))
}

/// Orthonormal basis of the column span of a full-column-rank matrix.
pub fn orthonormalize(m: &Matrix) -> Result<BasisMatrix> {
    qr_decompose(m).map(|(q, _)| q)
}

/// Symmetric eigendecomposition with eigenvalues in non-increasing order.
#[derive(Debug, Clone)]
pub struct Evd {
    pub vectors: BasisMatrix,
    pub values: DVector<f64>,
}

/// Eigendecomposition of a symmetric matrix.
///
/// Eigenvalues come back non-increasing; each eigenvector has its
/// largest-magnitude entry positive.
pub fn sym_evd(a: &Matrix) -> Result<Evd> {
    if !a.is_square() {
        return Err(LinalgError::DimensionMismatch(format!(
            "sym_evd needs a square matrix, got {}x{}",
            a.nrows(),
            a.ncols()
        )));
    }
    if a.iter().any(|v| !v.is_finite()) {
        return Err(LinalgError::NonFinite);
    }
    let scale = a.amax();
    let asym = (a - a.transpose()).amax();
    if scale > 0.0 && asym > 1e-10 * scale {
        return Err(LinalgError::NotSymmetric(asym / scale));
    }
    Ok(sym_evd_unchecked((a + a.transpose()) * 0.5))
}

fn sym_evd_unchecked(a: Matrix) -> Evd {
    let n = a.nrows();
    let eig = SymmetricEigen::new(a);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[j].total_cmp(&eig.eigenvalues[i]).then(i.cmp(&j)));
    let values = DVector::from_iterator(n, order.iter().map(|&i| eig.eigenvalues[i]));
    let mut vectors = eig.eigenvectors.select_columns(order.iter());
    normalize_column_signs(&mut vectors);
    Evd { vectors: BasisMatrix(vectors), values }
}

/// Output of [`proj_pca`].
#[derive(Debug, Clone)]
pub struct ProjPca {
    pub basis: BasisMatrix,
    /// Leading eigenvalues of `(1/α) D_proj D_proj'` in non-increasing order
    /// (at most `min(n, α)` of them).
    pub eigenvalues: Vec<f64>,
    /// Eigenvalues `r` and `r+1` coincide to within `1e-12` relative.
    pub ambiguous_cut: bool,
    /// The `r`-th eigenvalue is numerically zero.
    pub rank_deficient: bool,
}

/// Projection-PCA: top-`r` eigenvectors of `(1/α) D_proj D_proj'` with
/// `D_proj = (I − P P') D` and `α` the number of columns of `D`.
///
/// With an empty `P` this is plain PCA. When `α < n` the eigenvectors are
/// obtained from the `α × α` Gram matrix and mapped back, which spans the
/// same subspace as the explicit `n × n` route.
pub fn proj_pca(d: &Matrix, p: &BasisMatrix, r: usize) -> Result<ProjPca> {
    let (n, alpha) = d.shape();
    if p.dim() != n {
        return Err(LinalgError::DimensionMismatch(format!(
            "data has {n} rows but basis has {}",
            p.dim()
        )));
    }
    if alpha == 0 {
        return Err(LinalgError::InvalidArgument("proj_pca needs at least one column".into()));
    }
    if r > n || r > alpha {
        return Err(LinalgError::InvalidArgument(format!(
            "cannot extract {r} components from {n}x{alpha} data"
        )));
    }
    if d.iter().any(|v| !v.is_finite()) {
        return Err(LinalgError::NonFinite);
    }
    let d_proj = p.project_out_matrix(d);
    let inv_alpha = 1.0 / alpha as f64;

    let (mut vectors, values) = if alpha < n {
        let gram = d_proj.tr_mul(&d_proj) * inv_alpha;
        let evd = sym_evd_unchecked(gram);
        let values: Vec<f64> = evd.values.iter().copied().collect();
        if r == 0 || !cut_is_deficient(&values, r) {
            let v = evd.vectors.as_matrix().columns(0, r);
            let mut u = &d_proj * v;
            for (i, mut col) in u.column_iter_mut().enumerate() {
                col /= (alpha as f64 * values[i]).sqrt();
            }
            (u, values)
        } else {
            let cov = &d_proj * d_proj.transpose() * inv_alpha;
            let evd = sym_evd_unchecked(cov);
            let u = evd.vectors.as_matrix().columns(0, r).into_owned();
            (u, values)
        }
    } else {
        let cov = &d_proj * d_proj.transpose() * inv_alpha;
        let evd = sym_evd_unchecked(cov);
        let u = evd.vectors.as_matrix().columns(0, r).into_owned();
        (u, evd.values.iter().copied().collect::<Vec<_>>())
    };

    let top = values.first().copied().unwrap_or(0.0).max(0.0);
    let rank_deficient = r > 0 && cut_is_deficient(&values, r);
    let ambiguous_cut =
        r > 0 && r < values.len() && (values[r - 1] - values[r]).abs() <= 1e-12 * top.max(f64::MIN_POSITIVE);

    if r > 0 && !rank_deficient {
        // Re-project and re-orthonormalize so the block is orthogonal to `p`
        // to working precision.
        let cleaned = p.project_out_matrix(&vectors);
        if let Ok((q, _)) = qr_decompose(&cleaned) {
            vectors = q.into_matrix();
        }
    }
    normalize_column_signs(&mut vectors);
    let basis = if rank_deficient {
        BasisMatrix(vectors)
    } else {
        BasisMatrix::from_orthonormal(vectors)
    };
    Ok(ProjPca { basis, eigenvalues: values, ambiguous_cut, rank_deficient })
}

fn cut_is_deficient(values: &[f64], r: usize) -> bool {
    let top = values[0];
    top <= 0.0 || values[r - 1] <= 1e-14 * top
}

/// Directed subspace error `‖(I − P̂ P̂') P‖₂`, clamped to `[0, 1]`.
pub fn subspace_error(p_hat: &BasisMatrix, p: &BasisMatrix) -> Result<f64> {
    if p_hat.dim() != p.dim() {
        return Err(LinalgError::DimensionMismatch(format!(
            "subspace_error of bases in R^{} and R^{}",
            p_hat.dim(),
            p.dim()
        )));
    }
    if p.is_empty() {
        return Ok(0.0);
    }
    let residual = p_hat.project_out_matrix(p.as_matrix());
    Ok(spectral_norm(&residual).clamp(0.0, 1.0))
}

/// Which denseness coefficient to compute.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Denseness {
    /// `max_{|T|≤s} ‖I_T' B‖₂ / ‖B‖₂`.
    #[default]
    Ratio,
    /// `max_{|T|≤s} ‖I_T' Q(B)‖₂` with `Q(B)` an orthonormal basis of
    /// `span(B)`; a property of the span alone.
    SpanBasis,
}

/// Exact denseness coefficient `κ_s(B)` by enumeration of all supports of
/// size `min(s, n)`.
pub fn kappa_s_exact(b: &Matrix, s: usize) -> Result<f64> {
    kappa_s_exact_with(b, s, Denseness::Ratio)
}

/// [`kappa_s_exact`] with a selectable denseness definition.
pub fn kappa_s_exact_with(b: &Matrix, s: usize, kind: Denseness) -> Result<f64> {
    let rows = b.nrows();
    if rows > KAPPA_EXACT_MAX_ROWS {
        return Err(LinalgError::TooLarge { rows, max: KAPPA_EXACT_MAX_ROWS });
    }
    if s == 0 {
        return Err(LinalgError::InvalidArgument("support size must be at least 1".into()));
    }
    let norm = spectral_norm(b);
    if norm < 1e-14 {
        return Err(LinalgError::Degenerate("denseness of a (numerically) zero matrix"));
    }
    let (basis, denom) = match kind {
        Denseness::Ratio => (b.clone(), norm),
        Denseness::SpanBasis => (span_basis(b), 1.0),
    };
    let best = max_row_block_norm_sq(&basis, s.min(rows)).sqrt();
    Ok((best / denom).min(1.0))
}

fn span_basis(b: &Matrix) -> Matrix {
    let svd = b.clone().svd(true, false);
    let u = svd.u.expect("left singular vectors requested");
    let top = svd.singular_values.max();
    let keep: Vec<usize> = (0..svd.singular_values.len())
        .filter(|&i| svd.singular_values[i] > 1e-12 * top)
        .collect();
    u.select_columns(keep.iter())
}

/// `max_{|T| = s} λ_max(Σ_{i∈T} b_i b_i')` over rows `b_i` of `b`.
fn max_row_block_norm_sq(b: &Matrix, s: usize) -> f64 {
    let k = b.ncols();
    let rows: Vec<Matrix> = (0..b.nrows())
        .map(|i| {
            let row = b.row(i).transpose();
            &row * row.transpose()
        })
        .collect();
    let mut best = 0.0_f64;
    let mut acc = vec![Matrix::zeros(k, k); s + 1];
    enumerate_supports(&rows, s, 0, 0, &mut acc, &mut best);
    best
}

fn enumerate_supports(
    rows: &[Matrix],
    s: usize,
    start: usize,
    depth: usize,
    acc: &mut Vec<Matrix>,
    best: &mut f64,
) {
    if depth == s {
        *best = best.max(psd_max_eigenvalue(&acc[depth]));
        return;
    }
    let remaining = s - depth;
    for i in start..=rows.len() - remaining {
        let next = &acc[depth] + &rows[i];
        acc[depth + 1] = next;
        enumerate_supports(rows, s, i + 1, depth + 1, acc, best);
    }
}

/// `‖I_T' B‖₂ / ‖B‖₂` for one support `T` (0-based row indices).
pub fn kappa_proxy(b: &Matrix, support: &[usize]) -> Result<f64> {
    if let Some(&bad) = support.iter().find(|&&i| i >= b.nrows()) {
        return Err(LinalgError::InvalidArgument(format!(
            "support index {bad} out of range for {} rows",
            b.nrows()
        )));
    }
    let norm = spectral_norm(b);
    if norm < 1e-14 {
        return Err(LinalgError::Degenerate("denseness proxy of a (numerically) zero matrix"));
    }
    let sub = b.select_rows(support.iter());
    Ok((spectral_norm(&sub) / norm).min(1.0))
}

/// `δ_s(I − P P')`, which equals `κ_s(P)²` for a basis matrix `P`.
pub fn ric_complement(p: &BasisMatrix, s: usize) -> Result<f64> {
    let kappa = kappa_s_exact(p.as_matrix(), s)?;
    Ok(kappa * kappa)
}
