//! Closed-form bound quantities for the tracker's performance guarantee and
//! a checker for its verifiable hypotheses.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TheoryError {
    #[error("domain error: {0}")]
    Domain(String),
    #[error("outside the guarantee regime at step {step}: {reason}")]
    Regime { step: usize, reason: String },
}

pub type Result<T> = std::result::Result<T, TheoryError>;

/// Scalar model and bound constants.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TheoryParams {
    pub n: usize,
    /// Number of change times `J`.
    pub j_changes: usize,
    /// `r = r0 + c`.
    pub r: usize,
    /// `c = max_j c_j,new`.
    pub c: usize,
    pub r0: usize,
    pub zeta: f64,
    pub gamma_star: f64,
    pub gamma_new: f64,
    pub lambda_plus: f64,
    pub lambda_minus: f64,
    pub kappa_2s_star: f64,
    pub kappa_2s_new: f64,
    pub kappa_s: f64,
    pub kappa_tilde_2s: f64,
    pub kappa_s_e: f64,
    pub g_plus: f64,
    pub g_tilde_max: f64,
    pub h_tilde_max: f64,
    pub c_tilde_min: usize,
    pub theta_max: usize,
    pub phi_plus: f64,
    pub rho: f64,
}

pub const PHI_PLUS: f64 = 1.1735;

impl TheoryParams {
    fn base(n: usize, r0: usize, c: usize, j_changes: usize) -> TheoryParams {
        TheoryParams {
            n,
            j_changes,
            r: r0 + c,
            c,
            r0,
            zeta: 0.0,
            gamma_star: 400.0,
            gamma_new: 1.0,
            lambda_plus: 400.0f64.powi(2) / 3.0,
            lambda_minus: 1.0 / 3.0,
            kappa_2s_star: 0.3,
            kappa_2s_new: 0.15,
            kappa_s: 0.15,
            kappa_tilde_2s: 0.15,
            kappa_s_e: 0.15,
            g_plus: std::f64::consts::SQRT_2,
            g_tilde_max: 4.0,
            h_tilde_max: 300.0 / (400.0f64.powi(2) / 3.0),
            c_tilde_min: 7,
            theta_max: 3,
            phi_plus: PHI_PLUS,
            rho: 1.0,
        }
    }

    /// Full-size simulation constants, with `ζ` at the largest admissible value.
    pub fn paper() -> TheoryParams {
        let mut p = Self::base(2048, 36, 1, 2);
        p.zeta = zeta_bound(&p).value;
        p
    }

    /// Scaled-down constants matching the desk data preset.
    pub fn desk() -> TheoryParams {
        let mut p = Self::base(256, 10, 1, 2);
        p.c_tilde_min = 1;
        p.zeta = zeta_bound(&p).value;
        p
    }

    /// `f = λ⁺ / λ⁻`.
    pub fn f(&self) -> f64 {
        self.lambda_plus / self.lambda_minus
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("zeta", self.zeta),
            ("gamma_star", self.gamma_star),
            ("gamma_new", self.gamma_new),
            ("lambda_plus", self.lambda_plus),
            ("lambda_minus", self.lambda_minus),
            ("phi_plus", self.phi_plus),
            ("g_plus", self.g_plus),
            ("g_tilde_max", self.g_tilde_max),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(TheoryError::Domain(format!("{name} must be positive and finite, got {v}")));
            }
        }
        for (name, v) in [("n", self.n), ("J", self.j_changes), ("r", self.r), ("c", self.c), ("theta_max", self.theta_max)] {
            if v == 0 {
                return Err(TheoryError::Domain(format!("{name} must be positive")));
            }
        }
        if self.f() < 1.0 {
            return Err(TheoryError::Domain(format!("f = {} is below 1", self.f())));
        }
        if self.g_tilde_max < 1.0 {
            return Err(TheoryError::Domain("g_tilde_max must be at least 1".into()));
        }
        if !(0.0..1.0).contains(&self.h_tilde_max) {
            return Err(TheoryError::Domain("h_tilde_max must lie in [0, 1)".into()));
        }
        for (name, v) in [
            ("kappa_2s_star", self.kappa_2s_star),
            ("kappa_2s_new", self.kappa_2s_new),
            ("kappa_s", self.kappa_s),
            ("kappa_tilde_2s", self.kappa_tilde_2s),
            ("kappa_s_e", self.kappa_s_e),
            ("rho", self.rho),
        ] {
            if !(v >= 0.0 && v <= 1.0) {
                return Err(TheoryError::Domain(format!("{name} must lie in [0, 1], got {v}")));
            }
        }
        Ok(())
    }
}

/// Snaps values within rounding distance of an integer before taking the
/// ceiling, so that exact ratios such as `log 0.36 / log 0.6` give 2.
fn ceil_snapped(x: f64) -> f64 {
    let r = x.round();
    if (x - r).abs() <= 1e-9 * r.abs().max(1.0) {
        r
    } else {
        x.ceil()
    }
}

/// `K(ζ) = ⌈log(0.6 c ζ) / log 0.6⌉`.
pub fn k_of_zeta(zeta: f64, c: usize) -> Result<usize> {
    let arg = 0.6 * c as f64 * zeta;
    if !(arg > 0.0 && arg < 1.0) {
        return Err(TheoryError::Domain(format!("0.6·c·ζ = {arg} must lie in (0, 1)")));
    }
    Ok(ceil_snapped(arg.ln() / 0.6f64.ln()).max(1.0) as usize)
}

/// `ξ₀(ζ) = √c γ_new + 1.06 √ζ`.
pub fn xi0(zeta: f64, c: usize, gamma_new: f64) -> f64 {
    (c as f64).sqrt() * gamma_new + 1.06 * zeta.sqrt()
}

/// Number of frames per addition step required by the guarantee.
///
/// The value is usually far beyond `u64` range in practice-relevant regimes,
/// so it is returned as an integral-valued `f64`.
pub fn alpha_add(p: &TheoryParams) -> Result<f64> {
    let k = k_of_zeta(p.zeta, p.c)? as f64;
    let j = p.j_changes as f64;
    let c = p.c as f64;
    let lead = (6.0 * k * j).ln() + 11.0 * (p.n as f64).ln();
    let scale = 8.0 * 24.0f64.powi(2) / (p.zeta * p.lambda_minus).powi(2);
    let ramp = (1.2f64.powf(4.0 * k) * p.gamma_new.powi(4)).min(p.gamma_star.powi(4));
    let poly = 4.0 * (0.186 * p.gamma_new.powi(2) + 0.0034 * p.gamma_new + 2.3).powi(2);
    let m = ramp.max(16.0 / (c * c)).max(poly);
    Ok((lead * scale * m).ceil())
}

/// Number of frames per cluster-PCA step required by the guarantee.
pub fn alpha_del(p: &TheoryParams) -> Result<f64> {
    if p.zeta <= 0.0 || p.lambda_minus <= 0.0 {
        return Err(TheoryError::Domain("ζ and λ⁻ must be positive".into()));
    }
    let lead = (6.0 * p.theta_max as f64 * p.j_changes as f64).ln() + 11.0 * (p.n as f64).ln();
    let scale = 8.0 * 10.0f64.powi(2) / (p.zeta * p.lambda_minus).powi(2);
    let b7 = ((p.r as f64).sqrt() * p.gamma_star + p.phi_plus * p.zeta.sqrt()).powi(2);
    let m = 4.2f64.powi(2).max(4.0 * b7 * b7);
    Ok((lead * scale * m).ceil())
}

/// Constants `C`, `C'`, `C̃` of the `ζ_k⁺` recursion.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SeriesConstants {
    pub c: f64,
    pub c_prime: f64,
    pub c_tilde: f64,
}

pub fn series_constants(p: &TheoryParams) -> SeriesConstants {
    let zs = p.r as f64 * p.zeta;
    let root = (1.0 - zs * zs).sqrt();
    let phi = p.phi_plus;
    let kap = p.kappa_s;
    SeriesConstants {
        c: 2.0 * kap * phi / root + phi,
        c_prime: phi * phi + 2.0 * phi / root + 1.0 + phi + kap * phi / root + kap * phi * phi / root,
        c_tilde: phi * phi + kap * phi * phi / root,
    }
}

/// `ζ_0⁺ … ζ_K⁺`.
pub fn zeta_plus_series(p: &TheoryParams, k_max: usize) -> Result<Vec<f64>> {
    let zs = p.r as f64 * p.zeta;
    if zs >= 1.0 {
        return Err(TheoryError::Domain(format!("r·ζ = {zs} must be below 1")));
    }
    let SeriesConstants { c: cc, c_prime, c_tilde } = series_constants(p);
    let f = p.f();
    let c = p.c as f64;
    let kap = p.kappa_s;
    let g = p.g_plus;
    let mut out = Vec::with_capacity(k_max + 1);
    out.push(1.0);
    for k in 1..=k_max {
        let prev = out[k - 1];
        let b = cc * kap * g * prev + c_tilde * kap * kap * g * prev * prev + c_prime * f * zs * zs;
        let den = 1.0 - zs * zs - zs * zs * f - 0.25 * c * p.zeta - b;
        if !(den > 0.0) {
            return Err(TheoryError::Regime { step: k, reason: format!("denominator {den:e} is not positive") });
        }
        out.push((b + 0.125 * c * p.zeta) / den);
    }
    Ok(out)
}

/// `f_inc(g̃, h̃)`.
pub fn f_inc(g: f64, h: f64, p: &TheoryParams) -> f64 {
    let r = p.r as f64;
    let rc = (p.r + p.c) as f64;
    let z = p.zeta;
    let k = p.kappa_s_e;
    let phi = p.phi_plus;
    let rz2 = r * r * z * z;
    let g_term = 3.0 * k * phi * g;
    let h_term = (k * phi + k * (1.0 + 2.0 * phi) * rz2 / (1.0 - rz2).sqrt()) * h;
    let f_term = (r * r / rc * z + 4.0 * r * z * k * phi + 2.0 * rc * z * (1.0 + k * k) * phi * phi) * p.f();
    rc * z * (g_term + h_term + f_term + 0.2 / rc)
}

/// `f_dec(g̃, h̃)`.
pub fn f_dec(g: f64, h: f64, p: &TheoryParams) -> f64 {
    let r = p.r as f64;
    let z = p.zeta;
    1.0 - h - 0.2 * z - r * r * z * z * p.f() - r * r * z * z - f_inc(g, h, p)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FIncDec {
    pub f_inc: f64,
    pub f_dec: f64,
    /// `ζ̃⁺ = f_inc / f_dec`.
    pub zeta_tilde: f64,
}

pub fn f_inc_dec(g: f64, h: f64, p: &TheoryParams) -> Result<FIncDec> {
    let fi = f_inc(g, h, p);
    let fd = f_dec(g, h, p);
    if !(fd > 0.0) {
        return Err(TheoryError::Regime { step: 0, reason: format!("f_dec = {fd:e} is not positive") });
    }
    Ok(FIncDec { f_inc: fi, f_dec: fd, zeta_tilde: fi / fd })
}

/// The three-way bound on `ζ` and which branch is binding.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ZetaBound {
    pub value: f64,
    pub branches: [f64; 3],
}

pub fn zeta_bound(p: &TheoryParams) -> ZetaBound {
    let rc = (p.r + p.c) as f64;
    let branches = [1e-4 / (rc * rc), 1.5e-4 / (rc * rc * p.f()), 1.0 / (rc.powi(3) * p.gamma_star.powi(2))];
    ZetaBound { value: branches.iter().copied().fold(f64::INFINITY, f64::min), branches }
}

/// Quantities measured on a concrete configuration or simulation. Unset
/// fields leave the corresponding condition unevaluated.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Measurements {
    pub xi: Option<f64>,
    pub omega: Option<f64>,
    pub s_min: Option<f64>,
    pub k_steps: Option<usize>,
    pub alpha: Option<f64>,
    pub alpha_tilde: Option<f64>,
    /// Smallest gap `t_{j+1} − t_j`.
    pub min_spacing: Option<usize>,
    pub kappa_2s_prev: Option<f64>,
    pub kappa_2s_new: Option<f64>,
    pub kappa_2s_d_new: Option<f64>,
    pub kappa_2s_q_new: Option<f64>,
    pub kappa_s_e: Option<f64>,
    /// Largest `‖a_t,new‖_∞ / γ_new,k` over all addition windows.
    pub a_new_ratio: Option<f64>,
    /// Largest `g_{j,k}`.
    pub g_max: Option<f64>,
    /// Per-cluster `(g̃_k, h̃_k)` for the `ζ̃_k⁺` values.
    pub clusters: Option<Vec<(f64, f64)>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionCheck {
    pub name: String,
    /// `None` when the inputs needed were not supplied.
    pub passed: Option<bool>,
    /// Signed slack; positive means satisfied.
    pub margin: Option<f64>,
    pub detail: String,
}

impl ConditionCheck {
    fn new(name: &str, margin: Option<f64>, strict: bool, detail: String) -> Self {
        let passed = margin.map(|m| if strict { m > 0.0 } else { m >= 0.0 });
        ConditionCheck { name: name.to_string(), passed, margin, detail }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundReport {
    pub params: TheoryParams,
    pub f: f64,
    pub k: Option<usize>,
    pub xi0: f64,
    pub alpha_add: Option<f64>,
    pub alpha_del: Option<f64>,
    pub zeta_plus: Vec<f64>,
    /// Step at which the `ζ_k⁺` denominator turned non-positive, if any.
    pub zeta_plus_failed_at: Option<usize>,
    pub zeta_tilde: Vec<f64>,
    pub f_inc: f64,
    pub f_dec: f64,
    pub conditions: Vec<ConditionCheck>,
    /// Small-`f` alternative to the clustering condition; evaluated when `ϑ_max = 1`.
    pub corollary: Option<ConditionCheck>,
    /// All evaluated conditions hold.
    pub verdict: bool,
}

pub fn check_conditions(p: &TheoryParams, m: &Measurements) -> Result<BoundReport> {
    p.validate()?;
    let f = p.f();
    let k = k_of_zeta(p.zeta, p.c).ok();
    let x0 = xi0(p.zeta, p.c, p.gamma_new);
    let a_add = alpha_add(p).ok();
    let a_del = alpha_del(p).ok();
    let mut conditions = Vec::new();

    let zb = zeta_bound(p);
    let names = ["1e-4/(r+c)^2", "1.5e-4/((r+c)^2 f)", "1/((r+c)^3 gamma*^2)"];
    let violated: Vec<&str> = zb.branches.iter().zip(names).filter(|(b, _)| p.zeta > **b).map(|(_, n)| n).collect();
    let detail = if violated.is_empty() {
        format!("zeta = {:e} <= {:e}", p.zeta, zb.value)
    } else {
        format!("zeta = {:e} exceeds {}", p.zeta, violated.join(", "))
    };
    conditions.push(ConditionCheck::new("zeta_bound", Some(zb.value - p.zeta), false, detail));

    // algorithm parameters
    let rho_xi = 7.0 * p.rho * m.xi.unwrap_or(x0);
    let xi_margin = m.xi.map(|x| -(x - x0).abs() / x0.max(f64::MIN_POSITIVE) + 1e-12);
    conditions.push(ConditionCheck::new("xi_equals_xi0", xi_margin, false, format!("xi0 = {x0:e}")));
    let omega_margin = m.omega.and_then(|w| Some((w - rho_xi).min(m.s_min? - rho_xi - w)));
    conditions.push(ConditionCheck::new(
        "omega_window",
        omega_margin,
        false,
        format!("need 7 rho xi = {rho_xi:e} <= omega <= S_min - 7 rho xi"),
    ));
    let k_margin = match (m.k_steps, k) {
        (Some(ks), Some(k)) => Some(if ks == k { 0.0 } else { -(ks as f64 - k as f64).abs() }),
        _ => None,
    };
    conditions.push(ConditionCheck::new("k_equals_k_of_zeta", k_margin, false, format!("K(zeta) = {k:?}")));
    conditions.push(ConditionCheck::new(
        "alpha_ge_alpha_add",
        m.alpha.zip(a_add).map(|(a, b)| a - b),
        false,
        format!("alpha_add = {a_add:?}"),
    ));
    conditions.push(ConditionCheck::new(
        "alpha_tilde_ge_alpha_del",
        m.alpha_tilde.zip(a_del).map(|(a, b)| a - b),
        false,
        format!("alpha_del = {a_del:?}"),
    ));

    // denseness
    let dense = [
        ("kappa_2s_prev", m.kappa_2s_prev, p.kappa_2s_star),
        ("kappa_2s_new", m.kappa_2s_new, p.kappa_2s_new),
        ("kappa_2s_d_new", m.kappa_2s_d_new, p.kappa_s),
        ("kappa_2s_q_new", m.kappa_2s_q_new, p.kappa_tilde_2s),
        ("kappa_s_e", m.kappa_s_e, p.kappa_s_e),
    ];
    for (name, value, bound) in dense {
        conditions.push(ConditionCheck::new(name, value.map(|v| bound - v), false, format!("bound {bound}")));
    }

    // slow subspace change
    let busy = match (m.k_steps.or(k), m.alpha, m.alpha_tilde) {
        (Some(ks), Some(a), Some(at)) => Some(ks as f64 * a + p.theta_max as f64 * at),
        _ => None,
    };
    conditions.push(ConditionCheck::new(
        "change_spacing",
        m.min_spacing.map(|s| s as f64).zip(busy).map(|(s, b)| s - b),
        true,
        format!("need spacing > K alpha + theta_max alpha_tilde = {busy:?}"),
    ));
    conditions.push(ConditionCheck::new(
        "a_new_within_ramp",
        m.a_new_ratio.map(|r| 1.0 - r),
        false,
        "max |a_new| / gamma_new,k <= 1".into(),
    ));
    conditions.push(ConditionCheck::new(
        "s_min_vs_xi0",
        m.s_min.map(|s| s - 14.0 * p.rho * x0),
        false,
        format!("need 14 rho xi0 = {:e} <= S_min", 14.0 * p.rho * x0),
    ));

    conditions.push(ConditionCheck::new(
        "g_jk_le_g_plus",
        m.g_max.map(|g| p.g_plus - g),
        false,
        format!("g+ = {}", p.g_plus),
    ));

    let fi = f_inc(p.g_tilde_max, p.h_tilde_max, p);
    let fd = f_dec(p.g_tilde_max, p.h_tilde_max, p);
    let ct = p.c_tilde_min as f64;
    let cluster_margin = if p.c_tilde_min == 0 { None } else { Some(fd - fi / (ct * p.zeta)) };
    conditions.push(ConditionCheck::new(
        "clustered_eigenvalues",
        cluster_margin,
        true,
        format!("f_dec = {fd:e}, f_inc = {fi:e}, c_tilde_min = {}", p.c_tilde_min),
    ));

    let corollary = (p.theta_max == 1).then(|| {
        let a = f_inc(f, 0.0, p);
        let b = f_dec(f, 0.0, p) * ct * p.zeta;
        ConditionCheck::new("small_f", Some(b - a), false, format!("f_inc(f,0) = {a:e}, f_dec(f,0) c_min zeta = {b:e}"))
    });

    let (zeta_plus, failed_at) = match k {
        Some(kk) => match zeta_plus_series(p, kk) {
            Ok(s) => (s, None),
            Err(TheoryError::Regime { step, .. }) => (Vec::new(), Some(step)),
            Err(_) => (Vec::new(), None),
        },
        None => (Vec::new(), None),
    };
    let pairs = m.clusters.clone().unwrap_or_else(|| vec![(p.g_tilde_max, p.h_tilde_max)]);
    let zeta_tilde = pairs.iter().map(|&(g, h)| f_inc(g, h, p) / f_dec(g, h, p)).collect();

    let verdict = conditions.iter().all(|c| c.passed != Some(false)) && failed_at.is_none();
    Ok(BoundReport {
        params: p.clone(),
        f,
        k,
        xi0: x0,
        alpha_add: a_add,
        alpha_del: a_del,
        zeta_plus,
        zeta_plus_failed_at: failed_at,
        zeta_tilde,
        f_inc: fi,
        f_dec: fd,
        conditions,
        corollary,
        verdict,
    })
}

impl BoundReport {
    /// Human-readable summary, one quantity per line.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let p = &self.params;
        s.push_str(&format!("n = {}, J = {}, r = {}, c = {}, zeta = {:e}, f = {:e}\n", p.n, p.j_changes, p.r, p.c, p.zeta, self.f));
        s.push_str(&format!("K(zeta) = {}\n", self.k.map_or("undefined".into(), |k| k.to_string())));
        s.push_str(&format!("xi0 = {:.6e}\n", self.xi0));
        s.push_str(&format!("alpha_add = {}\n", self.alpha_add.map_or("undefined".into(), |a| format!("{a:.6e}"))));
        s.push_str(&format!("alpha_del = {}\n", self.alpha_del.map_or("undefined".into(), |a| format!("{a:.6e}"))));
        s.push_str(&format!("f_inc = {:.6e}, f_dec = {:.6e}\n", self.f_inc, self.f_dec));
        if let Some(k) = self.zeta_plus_failed_at {
            s.push_str(&format!("zeta_k+ denominator fails at k = {k}\n"));
        } else if !self.zeta_plus.is_empty() {
            let tail: Vec<String> = self.zeta_plus.iter().map(|z| format!("{z:.3e}")).collect();
            s.push_str(&format!("zeta_k+ = [{}]\n", tail.join(", ")));
        }
        let zt: Vec<String> = self.zeta_tilde.iter().map(|z| format!("{z:.3e}")).collect();
        s.push_str(&format!("zeta_tilde+ = [{}]\n", zt.join(", ")));
        for c in self.conditions.iter().chain(self.corollary.iter()) {
            let status = match c.passed {
                Some(true) => "pass",
                Some(false) => "FAIL",
                None => "n/a",
            };
            let margin = c.margin.map_or(String::new(), |m| format!(" margin {m:.3e}"));
            s.push_str(&format!("[{status}] {}{margin} ({})\n", c.name, c.detail));
        }
        s.push_str(&format!("verdict: {}\n", if self.verdict { "all evaluated conditions hold" } else { "violated" }));
        s
    }
}
