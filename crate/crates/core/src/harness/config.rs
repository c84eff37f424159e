use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::HarnessError;
use crate::datagen::DataConfig;
use crate::sparse::BpdnOptions;
use crate::tracker::{ChangeSpec, ClusterSpec, OmegaMode, TrackerConfig, XiMode};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Preset {
    Paper,
    Desk,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize, clap::ValueEnum)]
pub enum Algorithm {
    /// Addition only.
    #[serde(rename = "reprocs")]
    #[value(name = "reprocs")]
    Reprocs,
    /// Addition plus cluster-PCA deletion.
    #[serde(rename = "reprocs-cpca")]
    #[value(name = "reprocs-cpca")]
    ReprocsCpca,
}

impl Algorithm {
    pub fn name(&self) -> &'static str {
        match self {
            Algorithm::Reprocs => "reprocs",
            Algorithm::ReprocsCpca => "reprocs-cpca",
        }
    }
}

/// JSON experiment document. Every field is optional; unset fields fall
/// back to the preset (default `desk`).
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub preset: Option<Preset>,
    /// Inline data model; replaces the preset's.
    pub data: Option<DataConfig>,
    /// Inline tracker parameters; `deletion_enabled` is set per algorithm.
    pub tracker: Option<TrackerConfig>,
    /// Support shift period override.
    pub delta: Option<usize>,
    pub training_noise: Option<f64>,
    pub trials: Option<usize>,
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    /// Emit every `cadence`-th frame.
    pub cadence: Option<usize>,
    pub algorithms: Option<Vec<Algorithm>>,
    pub jobs: Option<usize>,
}

impl ExperimentConfig {
    pub fn from_json_file(path: &Path) -> Result<ExperimentConfig, HarnessError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| HarnessError::Io { path: path.display().to_string(), source: e })?;
        serde_json::from_str(&text).map_err(|e| HarnessError::Config(format!("{}: {e}", path.display())))
    }

    pub fn resolve(&self) -> Result<Experiment, HarnessError> {
        let preset = self.preset.unwrap_or(Preset::Desk);
        let delta = self.delta.unwrap_or(10);
        let mut data = self.data.clone().unwrap_or_else(|| preset_data(preset, delta));
        if let Some(d) = self.delta {
            data.support.delta = d;
        }
        if let Some(noise) = self.training_noise {
            data.training_noise = noise;
        }
        data.validate().map_err(|e| HarnessError::Config(e.to_string()))?;
        let tracker = self.tracker.clone().unwrap_or_else(|| preset_tracker(preset));
        let trials = self.trials.unwrap_or(1);
        if trials == 0 {
            return Err(HarnessError::Config("trials must be at least 1".into()));
        }
        let cadence = self.cadence.unwrap_or(1);
        if cadence == 0 {
            return Err(HarnessError::Config("cadence must be at least 1".into()));
        }
        let mut algorithms = self.algorithms.clone().unwrap_or_else(|| vec![Algorithm::Reprocs, Algorithm::ReprocsCpca]);
        algorithms.sort();
        algorithms.dedup();
        if algorithms.is_empty() {
            return Err(HarnessError::Config("algorithms must be nonempty".into()));
        }
        if tracker.changes.len() != data.model.changes.len()
            || tracker.changes.iter().zip(&data.model.changes).any(|(a, b)| a.time != b.time)
        {
            return Err(HarnessError::Config("tracker change times must match the data model".into()));
        }
        Ok(Experiment { data, tracker, trials, seed: self.seed.unwrap_or(0), cadence, algorithms })
    }
}

/// A fully resolved experiment.
#[derive(Debug, Clone, PartialEq)]
pub struct Experiment {
    pub data: DataConfig,
    pub tracker: TrackerConfig,
    pub trials: usize,
    pub seed: u64,
    pub cadence: usize,
    pub algorithms: Vec<Algorithm>,
}

pub fn preset_data(preset: Preset, delta: usize) -> DataConfig {
    match preset {
        Preset::Paper => DataConfig::paper(delta),
        Preset::Desk => DataConfig::desk(delta),
    }
}

pub fn preset_tracker(preset: Preset) -> TrackerConfig {
    let change = |time, sizes: Vec<usize>| ChangeSpec { time, c_new: 1, c_old: 3, clusters: ClusterSpec::Sizes(sizes) };
    let base = TrackerConfig {
        xi: XiMode::Adaptive,
        omega: OmegaMode::Energy { fraction: 0.99, scale: 0.5 },
        alpha: 0,
        alpha_tilde: 0,
        k_steps: 0,
        changes: Vec::new(),
        deletion_enabled: true,
        solver: BpdnOptions { tol: 1e-4, ..BpdnOptions::default() },
    };
    match preset {
        Preset::Paper => TrackerConfig {
            alpha: 100,
            alpha_tilde: 200,
            k_steps: 15,
            changes: vec![change(301, vec![8, 8, 18]), change(2501, vec![7, 7, 18])],
            ..base
        },
        Preset::Desk => TrackerConfig {
            alpha: 60,
            alpha_tilde: 120,
            k_steps: 6,
            changes: vec![change(301, vec![2, 2, 4]), change(1401, vec![1, 1, 4])],
            ..base
        },
    }
}
