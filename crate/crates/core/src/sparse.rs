//! Projected compressive sensing: `ℓ1` minimization under a quadratic
//! residual constraint, support estimation by thresholding and least-squares
//! debiasing on the estimated support.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg::BasisMatrix;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SparseError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("degenerate input: {0}")]
    Degenerate(&'static str),
    #[error("columns of the projected support are nearly dependent (smallest singular value {0:e})")]
    RankDeficient(f64),
}

pub type Result<T> = std::result::Result<T, SparseError>;

/// `x ↦ (I − P̂ P̂') x`, applied through two products with `P̂` instead of a
/// formed `n × n` matrix.
#[derive(Debug, Clone, Copy)]
pub struct ProjectorOperator<'a> {
    basis: &'a BasisMatrix,
}

impl<'a> ProjectorOperator<'a> {
    pub fn new(basis: &'a BasisMatrix) -> Self {
        ProjectorOperator { basis }
    }

    pub fn dim(&self) -> usize {
        self.basis.dim()
    }

    pub fn basis(&self) -> &BasisMatrix {
        self.basis
    }

    pub fn apply(&self, x: &DVector<f64>) -> DVector<f64> {
        self.basis.project_out(x)
    }

    fn apply_into(&self, x: &DVector<f64>, coeffs: &mut DVector<f64>, out: &mut DVector<f64>) {
        out.copy_from(x);
        if self.basis.is_empty() {
            return;
        }
        let p = self.basis.as_matrix();
        coeffs.gemv_tr(1.0, p, x, 0.0);
        out.gemv(-1.0, p, coeffs, 1.0);
    }
}

/// Stopping rule for [`solve_bpdn`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BpdnOptions {
    pub tol: f64,
    pub max_iter: usize,
    /// Constraint slack relative to `ξ`: a converged `x` has
    /// `‖y − Φx‖₂ ≤ ξ(1 + xi_slack)`.
    #[serde(default = "default_xi_slack")]
    pub xi_slack: f64,
}

fn default_xi_slack() -> f64 {
    1e-6
}

impl Default for BpdnOptions {
    fn default() -> Self {
        BpdnOptions { tol: 1e-7, max_iter: 5000, xi_slack: default_xi_slack() }
    }
}

/// Result of [`solve_bpdn`].
#[derive(Debug, Clone)]
pub struct CsSolution {
    pub x: DVector<f64>,
    pub iterations: usize,
    /// Final ADMM primal residual `‖x − w‖₂`, relative to `‖y‖₂`.
    pub primal_residual: f64,
    pub converged: bool,
    /// `‖x‖₁` of the best feasible iterate, recorded every iteration once an
    /// iterate within tolerance of the constraint has been seen.
    pub objective_trace: Vec<f64>,
}

/// Solver state from a previous solve, used to start a related one.
#[derive(Debug, Clone)]
pub struct WarmStart {
    w: DVector<f64>,
    u: DVector<f64>,
    rho: f64,
}

/// `min ‖x‖₁  s.t.  ‖y − Φ x‖₂ ≤ ξ` for an orthogonal projector `Φ`.
///
/// Two-block ADMM on `x = w`: `x` is projected onto the constraint set,
/// which has a closed form because the set only restricts the `range(Φ)`
/// component, and `w` is soft-thresholded. The penalty is rebalanced from
/// the residual ratio.
///
/// The returned `x` is the sparse iterate with the smallest `ℓ1` norm among
/// those whose constraint violation is within `tol · ‖y‖₂`.
pub fn solve_bpdn(
    phi: &ProjectorOperator<'_>,
    y: &DVector<f64>,
    xi: f64,
    opts: &BpdnOptions,
) -> Result<CsSolution> {
    solve_bpdn_warm(phi, y, xi, opts, None).map(|(sol, _)| sol)
}

/// [`solve_bpdn`] started from the state of an earlier solve. Returns the
/// state to pass to the next call.
pub fn solve_bpdn_warm(
    phi: &ProjectorOperator<'_>,
    y: &DVector<f64>,
    xi: f64,
    opts: &BpdnOptions,
    warm: Option<&WarmStart>,
) -> Result<(CsSolution, WarmStart)> {
    if !(xi >= 0.0) || !xi.is_finite() {
        return Err(SparseError::InvalidArgument(format!("xi must be a finite non-negative number, got {xi}")));
    }
    if !(opts.tol > 0.0) || !(opts.xi_slack >= 0.0) {
        return Err(SparseError::InvalidArgument("tol must be positive and xi_slack non-negative".into()));
    }
    let n = phi.dim();
    if y.len() != n {
        return Err(SparseError::InvalidArgument(format!(
            "measurement has length {} but operator acts on R^{n}",
            y.len()
        )));
    }
    if y.iter().any(|v| !v.is_finite()) {
        return Err(SparseError::InvalidArgument("measurement has non-finite entries".into()));
    }
    let y_norm = y.norm();
    if xi >= y_norm {
        let sol = CsSolution {
            x: DVector::zeros(n),
            iterations: 0,
            primal_residual: 0.0,
            converged: true,
            objective_trace: vec![0.0],
        };
        let state = WarmStart { w: DVector::zeros(n), u: DVector::zeros(n), rho: 0.0 };
        return Ok((sol, state));
    }

    // ‖y − Φx‖² = ‖Φy − Φx‖² + ‖y − Φy‖², so the constraint is a ball of
    // radius `radius` around `target` inside range(Φ).
    let mut coeffs = DVector::zeros(phi.basis().rank());
    let mut target = DVector::zeros(n);
    phi.apply_into(y, &mut coeffs, &mut target);
    let mut outside = (y - &target).norm_squared();
    // Rounding in `y = Φm` leaves a residue of order ε‖y‖ outside range(Φ).
    if outside.sqrt() <= 1e-12 * y_norm {
        outside = 0.0;
    }
    if outside > xi * xi {
        return Err(SparseError::InvalidArgument(format!(
            "constraint is infeasible: the component of y outside range(Φ) has norm {:e} > xi",
            outside.sqrt()
        )));
    }
    let radius = (xi * xi - outside).sqrt();

    let scale = y_norm;
    // Slack allowed on ‖Φw − target‖ beyond `radius`. For ξ > 0 this keeps
    // ‖y − Φw‖ ≤ ξ(1 + xi_slack); ξ = 0 cannot be met exactly in floating point.
    let feas_tol = if xi > 0.0 {
        let excess = (opts.tol * scale).min(opts.xi_slack * xi);
        ((xi + excess).powi(2) - outside).sqrt() - radius
    } else {
        opts.tol * scale
    };
    let (mut w, mut u, mut rho) = match warm {
        Some(ws) if ws.w.len() == n && ws.rho > 0.0 => (ws.w.clone(), ws.u.clone(), ws.rho),
        _ => (DVector::zeros(n), DVector::zeros(n), 1.0 / y.amax()),
    };
    let mut x = DVector::<f64>::zeros(n);
    let mut a = DVector::<f64>::zeros(n);
    let mut phi_a = DVector::<f64>::zeros(n);
    let mut phi_w = DVector::<f64>::zeros(n);
    let mut w_old = DVector::<f64>::zeros(n);

    let mut best: Option<(f64, DVector<f64>)> = None;
    let mut trace = Vec::new();
    let mut converged = false;
    let mut primal = f64::INFINITY;
    let mut iterations = 0;

    for it in 1..=opts.max_iter {
        iterations = it;
        // x = proj_C(w − u)
        a.copy_from(&w);
        a -= &u;
        phi.apply_into(&a, &mut coeffs, &mut phi_a);
        phi_a -= &target;
        let dn = phi_a.norm();
        x.copy_from(&a);
        if dn > radius {
            x.axpy(-(1.0 - radius / dn), &phi_a, 1.0);
        }

        // w = soft(x + u, 1/ρ)
        w_old.copy_from(&w);
        let thresh = 1.0 / rho;
        for i in 0..n {
            let v = x[i] + u[i];
            w[i] = v.signum() * (v.abs() - thresh).max(0.0);
        }

        let mut r_sq = 0.0;
        let mut dw_sq = 0.0;
        for i in 0..n {
            let r = x[i] - w[i];
            u[i] += r;
            r_sq += r * r;
            let d = w[i] - w_old[i];
            dw_sq += d * d;
        }
        let primal_abs = r_sq.sqrt();
        let dual_abs = rho * dw_sq.sqrt();
        primal = primal_abs / scale;

        phi.apply_into(&w, &mut coeffs, &mut phi_w);
        phi_w -= &target;
        let gap = (phi_w.norm() - radius).max(0.0);
        let obj: f64 = w.iter().map(|v| v.abs()).sum();
        if gap <= feas_tol && best.as_ref().is_none_or(|(b, _)| obj < *b) {
            best = Some((obj, w.clone()));
        }
        if let Some((b, _)) = &best {
            trace.push(*b);
        }

        let eps_pri = opts.tol * x.norm().max(w.norm()).max(scale * 1e-3);
        let eps_dual = opts.tol * rho * u.norm();
        if primal_abs <= eps_pri && dual_abs <= eps_dual && gap <= feas_tol {
            converged = true;
            break;
        }

        if it % 10 == 0 {
            let factor = if primal_abs > 10.0 * dual_abs {
                2.0
            } else if dual_abs > 10.0 * primal_abs {
                0.5
            } else {
                1.0
            };
            if factor != 1.0 {
                rho *= factor;
                u /= factor;
            }
        }
    }

    let state = WarmStart { w: w.clone(), u, rho };
    let x_out = match best {
        Some((_, b)) => b,
        None => w,
    };
    let sol = CsSolution { x: x_out, iterations, primal_residual: primal, converged, objective_trace: trace };
    Ok((sol, state))
}

/// `{i : |x_i| > ω}` (strict inequality).
pub fn estimate_support(x: &DVector<f64>, omega: f64) -> Vec<usize> {
    x.iter()
        .enumerate()
        .filter(|(_, v)| v.abs() > omega)
        .map(|(i, _)| i)
        .collect()
}

/// Energy threshold: the largest magnitude `m` such that
/// `{i : |v_i| ≥ m}` carries at least `fraction` of `‖v‖₂²`.
pub fn energy_threshold(v: &DVector<f64>, fraction: f64) -> Result<f64> {
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(SparseError::InvalidArgument(format!("energy fraction must lie in (0, 1], got {fraction}")));
    }
    let mut mags: Vec<f64> = v.iter().map(|x| x.abs()).collect();
    mags.sort_by(|a, b| b.total_cmp(a));
    let total: f64 = mags.iter().map(|m| m * m).sum();
    if total == 0.0 {
        return Err(SparseError::Degenerate("energy threshold of a zero vector"));
    }
    let target = fraction * total;
    let mut acc = 0.0;
    for (i, &m) in mags.iter().enumerate() {
        acc += m * m;
        // keep ties together: the set {|v_i| ≥ m} includes every equal entry
        let next_is_tie = mags.get(i + 1).is_some_and(|&n| n == m);
        if acc >= target && !next_is_tie {
            return Ok(m);
        }
    }
    Ok(*mags.iter().rev().find(|&&m| m > 0.0).unwrap_or(&0.0))
}

/// Least-squares estimate on `support`: `(Φ_T)† y` on `T`, zero elsewhere.
///
/// Uses `(Φ_T)'Φ_T = I − P_T P_T'` (with `P_T` the rows of `P̂` in `T`), so
/// only a `|T| × |T|` system is solved.
pub fn ls_debias(phi: &ProjectorOperator<'_>, y: &DVector<f64>, support: &[usize]) -> Result<DVector<f64>> {
    let n = phi.dim();
    if y.len() != n {
        return Err(SparseError::InvalidArgument(format!("measurement has length {} but n = {n}", y.len())));
    }
    if let Some(&bad) = support.iter().find(|&&i| i >= n) {
        return Err(SparseError::InvalidArgument(format!("support index {bad} out of range")));
    }
    let mut out = DVector::zeros(n);
    if support.is_empty() {
        return Ok(out);
    }
    let k = support.len();
    let p = phi.basis().as_matrix();
    let p_t = p.select_rows(support.iter());
    let mut normal = -(&p_t * p_t.transpose());
    for i in 0..k {
        normal[(i, i)] += 1.0;
    }
    let phi_y = phi.apply(y);
    let rhs = DVector::from_iterator(k, support.iter().map(|&i| phi_y[i]));

    let eig = normal.clone().symmetric_eigen();
    let min_eig = eig.eigenvalues.min().max(0.0);
    let min_sv = min_eig.sqrt();
    if min_sv <= 1e-10 {
        return Err(SparseError::RankDeficient(min_sv));
    }
    let sol = match normal.clone().cholesky() {
        Some(ch) => ch.solve(&rhs),
        None => {
            let inv = DMatrix::from_diagonal(&eig.eigenvalues.map(|l| 1.0 / l));
            &eig.eigenvectors * inv * eig.eigenvectors.transpose() * &rhs
        }
    };
    for (j, &i) in support.iter().enumerate() {
        out[i] = sol[j];
    }
    Ok(out)
}
