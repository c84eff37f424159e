//! Browser demo: three small computations exposed to JavaScript, each
//! returning a JSON string. The plain functions are usable natively too.

use reprocs::datagen::{
    generate, ChangeEvent, CoefficientSchedule, DataConfig, EpochCoefficients, Ramp, SubspaceChangeModel,
    SupportSchedule,
};
use reprocs::harness::{track_sequence, Algorithm, ExperimentConfig};
use reprocs::linalg::subspace_error;
use reprocs::theory::{k_of_zeta, zeta_bound, zeta_plus_series, TheoryError, TheoryParams};
use reprocs::tracker::{
    cluster_eigenvalues, ChangeSpec, ClusterSpec, OmegaMode, TrackerConfig, UpdateEvent, XiMode,
};
use reprocs::sparse::BpdnOptions;
use serde::Serialize;
use wasm_bindgen::prelude::*;

#[derive(Debug, Serialize)]
pub struct ClusterView {
    pub lambdas: Vec<f64>,
    pub sizes: Vec<usize>,
    pub g_tilde: Vec<f64>,
    pub h_tilde: Vec<f64>,
    pub g_max: f64,
    pub h_max: f64,
}

/// Groups the variances `γ²/3` of uniform coefficients with bounds `gammas`.
pub fn cluster_view(gammas: &[f64], split_steps: usize, g_cap: f64) -> Result<ClusterView, String> {
    let mut lambdas: Vec<f64> = gammas.iter().map(|g| g * g / 3.0).collect();
    lambdas.sort_by(|a, b| b.total_cmp(a));
    let c = cluster_eigenvalues(&lambdas, split_steps, g_cap).map_err(|e| e.to_string())?;
    Ok(ClusterView { g_max: c.g_max(), h_max: c.h_max(), lambdas, sizes: c.sizes, g_tilde: c.g_tilde, h_tilde: c.h_tilde })
}

#[derive(Debug, Serialize)]
pub struct ZetaView {
    pub zeta: f64,
    pub k: usize,
    pub series: Vec<f64>,
    /// `0.6^k + 0.4 c ζ`.
    pub envelope: Vec<f64>,
    /// First step whose denominator is not positive.
    pub failed_at: Option<usize>,
}

/// `ζ_k⁺` for `k ≤ K(ζ)` with `ζ` set to `zeta_fraction` of its admissible bound.
pub fn zeta_view(r0: usize, c: usize, f: f64, kappa_s: f64, g_plus: f64, zeta_fraction: f64) -> Result<ZetaView, String> {
    let mut p = TheoryParams::desk();
    p.r0 = r0;
    p.c = c;
    p.r = r0 + c;
    p.lambda_minus = 1.0;
    p.lambda_plus = f;
    p.kappa_s = kappa_s;
    p.g_plus = g_plus;
    p.zeta = zeta_bound(&p).value * zeta_fraction;
    let k = k_of_zeta(p.zeta, c).map_err(|e| e.to_string())?;
    let envelope = (0..=k).map(|i| 0.6f64.powi(i as i32) + 0.4 * c as f64 * p.zeta).collect();
    let (series, failed_at) = match zeta_plus_series(&p, k) {
        Ok(s) => (s, None),
        Err(TheoryError::Regime { step, .. }) => (Vec::new(), Some(step)),
        Err(e) => return Err(e.to_string()),
    };
    Ok(ZetaView { zeta: p.zeta, k, series, envelope, failed_at })
}

#[derive(Debug, Serialize)]
pub struct SeView {
    pub t: Vec<usize>,
    pub se_reprocs: Vec<f64>,
    pub se_cpca: Vec<f64>,
    /// `(t, label)` for every subspace update of the deletion-enabled run.
    pub events: Vec<(usize, String)>,
}

const N: usize = 64;
const T_TRAIN: usize = 50;
const CHANGE: usize = 201;
const ALPHA: usize = 40;
const ALPHA_TILDE: usize = 80;
const K_STEPS: usize = 4;

/// A 64-dimensional sequence with one change: three of six directions
/// leave and one slowly growing direction joins.
fn small_data(delta: usize, s: usize) -> DataConfig {
    DataConfig {
        t_max: CHANGE + K_STEPS * ALPHA + 3 * ALPHA_TILDE + 100,
        t_train: T_TRAIN,
        model: SubspaceChangeModel { n: N, r0: 6, changes: vec![ChangeEvent { time: CHANGE, c_new: 1, deleted: vec![1, 3, 5] }] },
        coefficients: CoefficientSchedule {
            initial: vec![100.0, 100.0, 10.0, 10.0, 1.0, 1.0],
            epochs: vec![EpochCoefficients {
                retained: vec![100.0, 10.0, 1.0],
                ramp: Ramp { gamma_new: 1.0, ratio: 1.1, width: ALPHA, steps: 4, cap: 100.0 },
            }],
        },
        support: SupportSchedule { s, delta, low: 2.0, high: 3.0 },
        training_noise: 1e-3,
    }
}

fn small_tracker() -> TrackerConfig {
    TrackerConfig {
        xi: XiMode::Adaptive,
        omega: OmegaMode::Energy { fraction: 0.99, scale: 0.5 },
        alpha: ALPHA,
        alpha_tilde: ALPHA_TILDE,
        k_steps: K_STEPS,
        changes: vec![ChangeSpec { time: CHANGE, c_new: 1, c_old: 3, clusters: ClusterSpec::Sizes(vec![1, 1, 2]) }],
        deletion_enabled: true,
        solver: BpdnOptions { tol: 1e-4, ..BpdnOptions::default() },
    }
}

/// Subspace error of both trackers on one small sequence, every `stride` frames.
pub fn se_view(seed: u64, delta: usize, s: usize, stride: usize) -> Result<SeView, String> {
    let exp = ExperimentConfig {
        data: Some(small_data(delta.max(1), s)),
        tracker: Some(small_tracker()),
        seed: Some(seed),
        ..Default::default()
    }
    .resolve()
    .map_err(|e| e.to_string())?;
    let seq = generate(&exp.data, seed).map_err(|e| e.to_string())?;
    let stride = stride.max(1);
    let mut view = SeView { t: Vec::new(), se_reprocs: Vec::new(), se_cpca: Vec::new(), events: Vec::new() };
    for algo in [Algorithm::Reprocs, Algorithm::ReprocsCpca] {
        let mut trace = Vec::new();
        let mut times = Vec::new();
        let mut events = Vec::new();
        track_sequence(&seq, &exp, algo, |tracker, rec| {
            for ev in &rec.events {
                events.push((rec.t, label(ev)));
            }
            if (rec.t - T_TRAIN - 1) % stride == 0 {
                times.push(rec.t);
                trace.push(subspace_error(tracker.basis(), seq.basis_at(rec.t)?)?);
            }
            Ok(())
        })
        .map_err(|e| e.to_string())?;
        view.t = times;
        match algo {
            Algorithm::Reprocs => view.se_reprocs = trace,
            Algorithm::ReprocsCpca => {
                view.se_cpca = trace;
                view.events = events;
            }
        }
    }
    Ok(view)
}

fn label(ev: &UpdateEvent) -> String {
    match ev {
        UpdateEvent::Addition { k, .. } => format!("add {k}"),
        UpdateEvent::ClusterStep { i, .. } => format!("cluster {i}"),
        UpdateEvent::ClusterPca { .. } => "cluster-PCA".into(),
    }
}

fn json<T: Serialize>(v: Result<T, String>) -> Result<String, JsError> {
    let v = v.map_err(|e| JsError::new(&e))?;
    serde_json::to_string(&v).map_err(|e| JsError::new(&e.to_string()))
}

#[wasm_bindgen]
pub fn cluster_spectrum(gammas: &[f64], split_steps: usize, g_cap: f64) -> Result<String, JsError> {
    json(cluster_view(gammas, split_steps, g_cap))
}

#[wasm_bindgen]
pub fn zeta_series(r0: usize, c: usize, f: f64, kappa_s: f64, g_plus: f64, zeta_fraction: f64) -> Result<String, JsError> {
    json(zeta_view(r0, c, f, kappa_s, g_plus, zeta_fraction))
}

#[wasm_bindgen]
pub fn se_curves(seed: u64, delta: usize, s: usize, stride: usize) -> Result<String, JsError> {
    json(se_view(seed, delta, s, stride))
}
