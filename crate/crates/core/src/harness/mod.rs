//! Seeded Monte Carlo comparison of the tracker with and without deletion on
//! generated data, with per-frame metrics and CSV output.

mod config;
mod output;

pub use config::{preset_data, preset_tracker, Algorithm, Experiment, ExperimentConfig, Preset};
pub use output::{read_rows_csv, write_mean_csv, write_probes_csv, write_rows_csv};

use std::collections::BTreeMap;
use std::path::Path;

use nalgebra::DVector;
use rayon::prelude::*;
use thiserror::Error;

use crate::datagen::{generate, DataError, GeneratedSequence};
use crate::linalg::{kappa_proxy, spectral_norm, subspace_error, LinalgError};
use crate::tracker::{estimate_initial_subspace, FrameRecord, Tracker, TrackerError, UpdateEvent};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("data generation failed: {0}")]
    Data(#[from] DataError),
    #[error("tracker failed: {0}")]
    Tracker(#[from] TrackerError),
    #[error("linear algebra failure: {0}")]
    Linalg(#[from] LinalgError),
    #[error("csv error on {path}: {message}")]
    Csv { path: String, message: String },
}

impl HarnessError {
    /// Process exit code: 2 for configuration problems, 3 otherwise.
    pub fn exit_code(&self) -> i32 {
        match self {
            HarnessError::Config(_) => 2,
            HarnessError::Data(DataError::Config(_)) => 2,
            HarnessError::Tracker(TrackerError::Config(_)) => 2,
            _ => 3,
        }
    }
}

pub type Result<T> = std::result::Result<T, HarnessError>;

/// One frame of one tracker run.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricsRow {
    pub t: usize,
    pub algo: Algorithm,
    pub trial: usize,
    pub se: f64,
    pub err_s_rel: Option<f64>,
    pub precision: f64,
    pub recall: f64,
    pub kappa_proxy: Option<f64>,
    pub phase: String,
    /// `T̂_t = T_t`.
    pub exact_support: bool,
}

/// Denseness proxy at an addition frame.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbeRecord {
    pub t: usize,
    pub algo: Algorithm,
    pub trial: usize,
    pub j: usize,
    pub k: usize,
    /// `None` when `D_new,k` vanished.
    pub value: Option<f64>,
    pub degenerate: bool,
}

/// Mean over trials for one `(algo, t)`.
#[derive(Debug, Clone, PartialEq)]
pub struct MeanRow {
    pub t: usize,
    pub algo: Algorithm,
    pub se: f64,
    pub err_s_rel: Option<f64>,
    pub precision: f64,
    pub recall: f64,
    pub kappa_proxy: Option<f64>,
    pub phase: String,
}

#[derive(Debug, Clone)]
pub struct ExperimentResult {
    pub experiment: Experiment,
    pub rows: Vec<MetricsRow>,
    pub probes: Vec<ProbeRecord>,
    pub mean: Vec<MeanRow>,
    pub cs_iterations: usize,
    pub frames: usize,
}

impl ExperimentResult {
    pub fn mean_at(&self, algo: Algorithm, t: usize) -> Option<&MeanRow> {
        self.mean.iter().find(|m| m.algo == algo && m.t == t)
    }

    pub fn write_all(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| HarnessError::Io { path: dir.display().to_string(), source: e })?;
        write_rows_csv(&self.rows, &dir.join("rows.csv"))?;
        write_mean_csv(&self.mean, &dir.join("mean.csv"))?;
        write_probes_csv(&self.probes, &dir.join("probes.csv"))?;
        Ok(())
    }
}

/// Support precision and recall, with empty sets scored as 1.
pub fn precision_recall(estimate: &[usize], truth: &[usize]) -> (f64, f64) {
    let hits = estimate.iter().filter(|i| truth.binary_search(i).is_ok()).count() as f64;
    let precision = if estimate.is_empty() { 1.0 } else { hits / estimate.len() as f64 };
    let recall = if truth.is_empty() { 1.0 } else { hits / truth.len() as f64 };
    (precision, recall)
}

/// `‖I_T' D_new,k‖₂ / ‖D_new,k‖₂` with `D_new,k = (I − P̂ P̂') P_new`, where
/// `P̂ = [P̂_{j−1}, P̂_new,k]` is the tracker's estimate right after step `k`.
pub fn kappa_probe(tracker: &Tracker, seq: &GeneratedSequence, j: usize, support: &[usize]) -> Result<Option<f64>> {
    let p_new = seq.new_directions(j);
    let d = tracker.basis().project_out_matrix(p_new.as_matrix());
    if spectral_norm(&d) < 1e-14 {
        return Ok(None);
    }
    Ok(Some(kappa_proxy(&d, support)?))
}

struct TrialOutput {
    rows: Vec<MetricsRow>,
    probes: Vec<ProbeRecord>,
    cs_iterations: usize,
    frames: usize,
}

/// Runs one tracker over a generated sequence, calling `visit` after every
/// frame with the tracker in its post-update state.
pub fn track_sequence(
    seq: &GeneratedSequence,
    exp: &Experiment,
    algo: Algorithm,
    mut visit: impl FnMut(&Tracker, &FrameRecord) -> Result<()>,
) -> Result<()> {
    let block = seq.training_block(seq.config.training_noise);
    let p0 = estimate_initial_subspace(&block, seq.config.model.r0)?.basis;
    let seed = block.column(block.ncols() - 1).into_owned();
    let mut cfg = exp.tracker.clone();
    cfg.deletion_enabled = algo == Algorithm::ReprocsCpca;
    let mut tracker = Tracker::new(p0, cfg, seq.t_train(), Some(&seed))?;
    for t in seq.t_train() + 1..=seq.t_max() {
        let m: DVector<f64> = seq.m.column(t - 1).into_owned();
        let rec = tracker.step(&m)?;
        visit(&tracker, &rec)?;
    }
    Ok(())
}

fn run_trial(exp: &Experiment, trial: usize) -> Result<TrialOutput> {
    let seq = generate(&exp.data, exp.seed.wrapping_add(trial as u64))?;
    let mut out = TrialOutput { rows: Vec::new(), probes: Vec::new(), cs_iterations: 0, frames: 0 };
    for &algo in &exp.algorithms {
        track_sequence(&seq, exp, algo, |tracker, rec| {
            let t = rec.t;
            out.cs_iterations += rec.cs_iterations;
            out.frames += 1;
            let truth = seq.support_at(t)?;
            let mut kappa = None;
            for ev in &rec.events {
                if let UpdateEvent::Addition { j, k } = *ev {
                    let value = kappa_probe(tracker, &seq, j, &truth)?;
                    out.probes.push(ProbeRecord { t, algo, trial, j, k, value, degenerate: value.is_none() });
                    kappa = value;
                }
            }
            if (t - seq.t_train() - 1) % exp.cadence != 0 && kappa.is_none() {
                return Ok(());
            }
            let se = subspace_error(tracker.basis(), seq.basis_at(t)?)?;
            let s_true = seq.s.column(t - 1);
            let s_norm = s_true.norm();
            let err_s_rel = (s_norm > 0.0).then(|| (&rec.s_hat - s_true).norm() / s_norm);
            let (precision, recall) = precision_recall(&rec.support, &truth);
            out.rows.push(MetricsRow {
                t,
                algo,
                trial,
                se,
                err_s_rel,
                precision,
                recall,
                kappa_proxy: kappa,
                phase: rec.phase.label().to_string(),
                exact_support: rec.support == truth,
            });
            Ok(())
        })?;
    }
    Ok(out)
}

/// Mean over trials for every `(algo, t)`, summed in `(algo, t, trial)` order.
pub fn mean_table(rows: &[MetricsRow]) -> Vec<MeanRow> {
    #[derive(Default)]
    struct Acc {
        n: usize,
        se: f64,
        err: f64,
        err_n: usize,
        precision: f64,
        recall: f64,
        kappa: f64,
        kappa_n: usize,
        phase: String,
    }
    let mut groups: BTreeMap<(Algorithm, usize), Acc> = BTreeMap::new();
    let mut sorted: Vec<&MetricsRow> = rows.iter().collect();
    sorted.sort_by_key(|r| (r.algo, r.t, r.trial));
    for r in sorted {
        let a = groups.entry((r.algo, r.t)).or_default();
        a.n += 1;
        a.se += r.se;
        if let Some(e) = r.err_s_rel {
            a.err += e;
            a.err_n += 1;
        }
        a.precision += r.precision;
        a.recall += r.recall;
        if let Some(k) = r.kappa_proxy {
            a.kappa += k;
            a.kappa_n += 1;
        }
        a.phase.clone_from(&r.phase);
    }
    groups
        .into_iter()
        .map(|((algo, t), a)| {
            let n = a.n as f64;
            MeanRow {
                t,
                algo,
                se: a.se / n,
                err_s_rel: (a.err_n > 0).then(|| a.err / a.err_n as f64),
                precision: a.precision / n,
                recall: a.recall / n,
                kappa_proxy: (a.kappa_n > 0).then(|| a.kappa / a.kappa_n as f64),
                phase: a.phase,
            }
        })
        .collect()
}

/// Runs every trial (in parallel on the current rayon pool) and aggregates.
pub fn run_experiment(exp: &Experiment) -> Result<ExperimentResult> {
    let outputs: Vec<TrialOutput> =
        (0..exp.trials).into_par_iter().map(|i| run_trial(exp, i)).collect::<Result<Vec<_>>>()?;
    let mut rows = Vec::new();
    let mut probes = Vec::new();
    let mut cs_iterations = 0;
    let mut frames = 0;
    for o in outputs {
        rows.extend(o.rows);
        probes.extend(o.probes);
        cs_iterations += o.cs_iterations;
        frames += o.frames;
    }
    rows.sort_by_key(|r| (r.trial, r.algo, r.t));
    probes.sort_by_key(|p| (p.trial, p.algo, p.t));
    let mean = mean_table(&rows);
    Ok(ExperimentResult { experiment: exp.clone(), rows, probes, mean, cs_iterations, frames })
}

/// Runs on a dedicated pool of `jobs` threads (0 means rayon's default).
pub fn run_experiment_with_jobs(exp: &Experiment, jobs: usize) -> Result<ExperimentResult> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| HarnessError::Config(format!("could not build thread pool: {e}")))?;
    pool.install(|| run_experiment(exp))
}
