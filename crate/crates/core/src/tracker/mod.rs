//! The online tracker: per-frame projected sparse recovery, addition of new
//! directions by projection-PCA after each change time, and optional
//! deletion of stale directions by cluster-PCA.

mod clustering;

pub use clustering::{cluster_eigenvalues, Clustering};

use nalgebra::DVector;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg::{proj_pca, BasisMatrix, LinalgError, Matrix, ProjPca};
use crate::sparse::{
    energy_threshold, estimate_support, ls_debias, solve_bpdn_warm, BpdnOptions, ProjectorOperator, SparseError,
    WarmStart,
};

#[derive(Debug, Error)]
pub enum TrackerError {
    #[error("invalid tracker configuration: {0}")]
    Config(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
    #[error(transparent)]
    Sparse(#[from] SparseError),
}

pub type Result<T> = std::result::Result<T, TrackerError>;

/// Bound `ξ` on the projected residual used by the `ℓ1` step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum XiMode {
    Fixed(f64),
    /// `ξ_t = 2 ‖(I − P̂ P̂') L̂_{t−1}‖₂`.
    Adaptive,
}

/// Support threshold `ω`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum OmegaMode {
    Fixed(f64),
    /// `ω_t = scale · energy_threshold(Ŝ_cs, fraction)`.
    Energy { fraction: f64, scale: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum ClusterSpec {
    /// Known cluster sizes `c̃_{j,1..ϑ}`; must sum to the epoch rank.
    Sizes(Vec<usize>),
    /// Sizes from clustering the eigenvalues of the first deletion window.
    Auto { split_steps: usize, g_cap: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChangeSpec {
    /// 1-based change time `t_j` (assumed known).
    pub time: usize,
    pub c_new: usize,
    pub c_old: usize,
    pub clusters: ClusterSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrackerConfig {
    pub xi: XiMode,
    pub omega: OmegaMode,
    pub alpha: usize,
    pub alpha_tilde: usize,
    pub k_steps: usize,
    pub changes: Vec<ChangeSpec>,
    /// Off runs plain ReProCS: new directions are only ever added.
    pub deletion_enabled: bool,
    #[serde(default)]
    pub solver: BpdnOptions,
}

impl TrackerConfig {
    fn validate(&self, r0: usize, n: usize, t_train: usize) -> Result<()> {
        let bad = |m: String| Err(TrackerError::Config(m));
        if self.alpha == 0 || self.alpha_tilde == 0 || self.k_steps == 0 {
            return bad("alpha, alpha_tilde and k_steps must be at least 1".into());
        }
        match self.xi {
            XiMode::Fixed(x) if !(x >= 0.0 && x.is_finite()) => return bad(format!("fixed xi must be >= 0, got {x}")),
            _ => {}
        }
        match self.omega {
            OmegaMode::Fixed(w) if !(w >= 0.0 && w.is_finite()) => {
                return bad(format!("fixed omega must be >= 0, got {w}"))
            }
            OmegaMode::Energy { fraction, scale } if !(fraction > 0.0 && fraction <= 1.0 && scale >= 0.0) => {
                return bad(format!("energy omega needs fraction in (0,1] and scale >= 0, got {fraction}, {scale}"))
            }
            _ => {}
        }
        if !(self.solver.tol > 0.0) || self.solver.max_iter == 0 || !(self.solver.xi_slack >= 0.0) {
            return bad("solver tol must be positive, max_iter at least 1 and xi_slack non-negative".into());
        }
        let mut rank = r0;
        let mut prev = t_train;
        for (idx, ch) in self.changes.iter().enumerate() {
            let j = idx + 1;
            if ch.time <= prev {
                return bad(format!("change {j} at t={} must come after t={prev}", ch.time));
            }
            if ch.c_new == 0 {
                return bad(format!("change {j} adds no directions"));
            }
            if ch.c_new > self.alpha {
                return bad(format!("change {j}: c_new={} exceeds alpha={}", ch.c_new, self.alpha));
            }
            let busy = self.k_steps * self.alpha;
            if let Some(next) = self.changes.get(idx + 1) {
                let mut need = busy;
                if self.deletion_enabled {
                    if let ClusterSpec::Sizes(s) = &ch.clusters {
                        need += s.len() * self.alpha_tilde;
                    } else {
                        need += self.alpha_tilde;
                    }
                }
                if next.time - ch.time <= need {
                    return bad(format!(
                        "changes {j} and {} are {} frames apart but the updates need more than {need}",
                        j + 1,
                        next.time - ch.time
                    ));
                }
            }
            if self.deletion_enabled {
                if ch.c_old > rank {
                    return bad(format!("change {j} deletes {} of {rank} directions", ch.c_old));
                }
                rank = rank + ch.c_new - ch.c_old;
                match &ch.clusters {
                    ClusterSpec::Sizes(s) => {
                        if s.is_empty() || s.contains(&0) || s.iter().sum::<usize>() != rank {
                            return bad(format!("change {j}: cluster sizes {s:?} must be positive and sum to rank {rank}"));
                        }
                        if s.iter().any(|&c| c > self.alpha_tilde) {
                            return bad(format!("change {j}: a cluster is larger than alpha_tilde"));
                        }
                    }
                    ClusterSpec::Auto { g_cap, .. } => {
                        if !(*g_cap >= 1.0) {
                            return bad(format!("change {j}: g_cap must be at least 1"));
                        }
                        if rank > self.alpha_tilde {
                            return bad(format!("change {j}: rank {rank} exceeds alpha_tilde"));
                        }
                    }
                }
            } else {
                rank += ch.c_new;
            }
            if rank > n {
                return bad(format!("change {j}: rank {rank} exceeds n={n}"));
            }
            prev = ch.time;
        }
        Ok(())
    }
}

/// What the tracker is doing at a frame.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Phase {
    Stable,
    /// Collecting window `k` of change `j` (both 1-based).
    Addition { j: usize, k: usize },
    /// Collecting deletion window `i` of change `j`.
    Deletion { j: usize, i: usize },
}

impl Phase {
    pub fn label(&self) -> &'static str {
        match self {
            Phase::Stable => "stable",
            Phase::Addition { .. } => "addition",
            Phase::Deletion { .. } => "deletion",
        }
    }
}

/// Subspace updates performed at the end of a frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum UpdateEvent {
    Addition { j: usize, k: usize },
    ClusterStep { j: usize, i: usize },
    /// The full re-estimate `P̂_j = [Ĝ_1 … Ĝ_ϑ]` replaced the running estimate.
    ClusterPca { j: usize, sizes: Vec<usize> },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Warning {
    CsNotConverged,
    /// `(Φ)_T̂` was rank deficient; the frame fell back to `Ŝ = 0`.
    LsRankDeficient,
    AmbiguousCut,
    /// The projection-PCA window had no energy in the requested directions;
    /// the previous estimate was kept.
    RankDeficientPca,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FrameRecord {
    pub t: usize,
    pub s_hat: DVector<f64>,
    pub l_hat: DVector<f64>,
    /// `T̂_t`, sorted, 0-based.
    pub support: Vec<usize>,
    pub xi: f64,
    pub omega: f64,
    pub phase: Phase,
    pub cs_iterations: usize,
    pub failed: bool,
    pub warnings: Vec<Warning>,
    pub events: Vec<UpdateEvent>,
}

/// Top `r0` left singular vectors of the training block.
pub fn estimate_initial_subspace(training_block: &Matrix, r0: usize) -> Result<ProjPca> {
    let n = training_block.nrows();
    if r0 > n || r0 > training_block.ncols() {
        return Err(TrackerError::InvalidArgument(format!(
            "r0={r0} exceeds the {}x{} training block",
            n,
            training_block.ncols()
        )));
    }
    if r0 == 0 {
        return Ok(ProjPca {
            basis: BasisMatrix::empty(n),
            eigenvalues: Vec::new(),
            ambiguous_cut: false,
            rank_deficient: false,
        });
    }
    Ok(proj_pca(training_block, &BasisMatrix::empty(n), r0)?)
}

/// Tracker state. Single owner, advanced one frame at a time by [`Tracker::step`].
#[derive(Debug, Clone)]
pub struct Tracker {
    config: TrackerConfig,
    n: usize,
    t: usize,
    p_hat: BasisMatrix,
    p_prev: BasisMatrix,
    p_new: BasisMatrix,
    g_hats: Vec<BasisMatrix>,
    cluster_sizes: Vec<usize>,
    next_change: usize,
    phase: Phase,
    window: Vec<DVector<f64>>,
    xi_next: f64,
    warm: Option<WarmStart>,
}

impl Tracker {
    /// Starts tracking after frame `t_train` with initial estimate `p0`.
    ///
    /// `residual_seed` is a frame whose projected norm bootstraps the
    /// adaptive `ξ` (normally the last training column); without one the
    /// first adaptive frame uses `ξ = 0`.
    pub fn new(
        p0: BasisMatrix,
        config: TrackerConfig,
        t_train: usize,
        residual_seed: Option<&DVector<f64>>,
    ) -> Result<Tracker> {
        let n = p0.dim();
        if p0.is_empty() {
            return Err(TrackerError::Config("initial basis must be nonempty".into()));
        }
        config.validate(p0.rank(), n, t_train)?;
        let xi_next = match (config.xi, residual_seed) {
            (XiMode::Fixed(x), _) => x,
            (XiMode::Adaptive, Some(seed)) => {
                if seed.len() != n {
                    return Err(TrackerError::InvalidArgument("residual seed has the wrong length".into()));
                }
                2.0 * p0.project_out(seed).norm()
            }
            (XiMode::Adaptive, None) => 0.0,
        };
        Ok(Tracker {
            config,
            n,
            t: t_train,
            p_prev: p0.clone(),
            p_hat: p0,
            p_new: BasisMatrix::empty(n),
            g_hats: Vec::new(),
            cluster_sizes: Vec::new(),
            next_change: 0,
            phase: Phase::Stable,
            window: Vec::new(),
            xi_next,
            warm: None,
        })
    }

    pub fn config(&self) -> &TrackerConfig {
        &self.config
    }

    /// Last processed frame.
    pub fn time(&self) -> usize {
        self.t
    }

    pub fn phase(&self) -> Phase {
        self.phase
    }

    /// `P̂_(t)`.
    pub fn basis(&self) -> &BasisMatrix {
        &self.p_hat
    }

    /// `P̂_{j−1}`, the estimate held when the current change began.
    pub fn previous_basis(&self) -> &BasisMatrix {
        &self.p_prev
    }

    /// `P̂_{j,new,k}` from the latest addition step.
    pub fn new_basis(&self) -> &BasisMatrix {
        &self.p_new
    }

    pub fn cluster_bases(&self) -> &[BasisMatrix] {
        &self.g_hats
    }

    /// Processes frame `t + 1`.
    pub fn step(&mut self, m: &DVector<f64>) -> Result<FrameRecord> {
        if m.len() != self.n {
            return Err(TrackerError::InvalidArgument(format!("frame has length {} but n={}", m.len(), self.n)));
        }
        if m.iter().any(|v| !v.is_finite()) {
            return Err(TrackerError::InvalidArgument("frame has non-finite entries".into()));
        }
        let t = self.t + 1;
        self.t = t;
        if let Some(ch) = self.config.changes.get(self.next_change) {
            if ch.time == t {
                self.p_prev = self.p_hat.clone();
                self.p_new = BasisMatrix::empty(self.n);
                self.g_hats.clear();
                self.window.clear();
                self.phase = Phase::Addition { j: self.next_change + 1, k: 1 };
                self.next_change += 1;
            }
        }

        let mut warnings = Vec::new();
        let xi = self.xi_next;
        let phi = ProjectorOperator::new(&self.p_hat);
        let y = phi.apply(m);
        let (cs, warm) = solve_bpdn_warm(&phi, &y, xi, &self.config.solver, self.warm.as_ref())?;
        self.warm = Some(warm);
        if !cs.converged {
            warnings.push(Warning::CsNotConverged);
        }
        let omega = match self.config.omega {
            OmegaMode::Fixed(w) => w,
            OmegaMode::Energy { fraction, scale } => match energy_threshold(&cs.x, fraction) {
                Ok(v) => scale * v,
                Err(SparseError::Degenerate(_)) => 0.0,
                Err(e) => return Err(e.into()),
            },
        };
        let support = estimate_support(&cs.x, omega);
        let (s_hat, failed) = match ls_debias(&phi, &y, &support) {
            Ok(s) => (s, false),
            Err(SparseError::RankDeficient(_)) => {
                warnings.push(Warning::LsRankDeficient);
                (DVector::zeros(self.n), true)
            }
            Err(e) => return Err(e.into()),
        };
        let l_hat = m - &s_hat;

        let phase = self.phase;
        let mut events = Vec::new();
        if !failed && phase != Phase::Stable {
            self.window.push(l_hat.clone());
        }
        match phase {
            Phase::Stable => {}
            Phase::Addition { j, k } => {
                let ch = &self.config.changes[j - 1];
                if t == ch.time + k * self.config.alpha - 1 {
                    self.addition_update(j, k, &mut warnings)?;
                    events.push(UpdateEvent::Addition { j, k });
                }
            }
            Phase::Deletion { j, i } => {
                let ch = &self.config.changes[j - 1];
                let start = ch.time + self.config.k_steps * self.config.alpha;
                if t == start + i * self.config.alpha_tilde - 1 {
                    self.cluster_step(j, i, &mut warnings, &mut events)?;
                }
            }
        }

        if !failed {
            self.xi_next = match self.config.xi {
                XiMode::Fixed(x) => x,
                XiMode::Adaptive => 2.0 * self.p_hat.project_out(&l_hat).norm(),
            };
        }

        Ok(FrameRecord {
            t,
            s_hat,
            l_hat,
            support,
            xi,
            omega,
            phase,
            cs_iterations: cs.iterations,
            failed,
            warnings,
            events,
        })
    }

    fn window_matrix(&mut self) -> Matrix {
        let cols = std::mem::take(&mut self.window);
        if cols.is_empty() {
            return Matrix::zeros(self.n, 0);
        }
        Matrix::from_columns(&cols)
    }

    fn addition_update(&mut self, j: usize, k: usize, warnings: &mut Vec<Warning>) -> Result<()> {
        let c_new = self.config.changes[j - 1].c_new;
        let data = self.window_matrix();
        if data.ncols() >= c_new {
            let pca = proj_pca(&data, &self.p_prev, c_new)?;
            if pca.ambiguous_cut {
                warnings.push(Warning::AmbiguousCut);
            }
            if pca.rank_deficient {
                warnings.push(Warning::RankDeficientPca);
            } else {
                self.p_new = pca.basis;
                self.p_hat = self.p_prev.hstack(&self.p_new);
            }
        } else {
            warnings.push(Warning::RankDeficientPca);
        }
        self.phase = if k < self.config.k_steps {
            Phase::Addition { j, k: k + 1 }
        } else if self.config.deletion_enabled {
            Phase::Deletion { j, i: 1 }
        } else {
            Phase::Stable
        };
        Ok(())
    }

    fn cluster_step(
        &mut self,
        j: usize,
        i: usize,
        warnings: &mut Vec<Warning>,
        events: &mut Vec<UpdateEvent>,
    ) -> Result<()> {
        let data = self.window_matrix();
        let ch = self.config.changes[j - 1].clone();
        if i == 1 {
            let rank = self.p_prev.rank() + ch.c_new - ch.c_old;
            self.cluster_sizes = match &ch.clusters {
                ClusterSpec::Sizes(s) => s.clone(),
                ClusterSpec::Auto { split_steps, g_cap } => self.auto_clusters(&data, rank, *split_steps, *g_cap)?,
            };
            let theta = self.cluster_sizes.len();
            let end = ch.time + self.config.k_steps * self.config.alpha + theta * self.config.alpha_tilde - 1;
            if let Some(next) = self.config.changes.get(j) {
                if end >= next.time {
                    return Err(TrackerError::Config(format!(
                        "{theta} clusters for change {j} run past the next change at t={}",
                        next.time
                    )));
                }
            }
        }
        let c = self.cluster_sizes[i - 1];
        let found = BasisMatrix::concat(self.n, &self.g_hats);
        if data.ncols() >= c {
            let pca = proj_pca(&data, &found, c)?;
            if pca.ambiguous_cut {
                warnings.push(Warning::AmbiguousCut);
            }
            if pca.rank_deficient {
                warnings.push(Warning::RankDeficientPca);
            } else {
                self.g_hats.push(pca.basis);
            }
        } else {
            warnings.push(Warning::RankDeficientPca);
        }
        events.push(UpdateEvent::ClusterStep { j, i });
        if i < self.cluster_sizes.len() {
            self.phase = Phase::Deletion { j, i: i + 1 };
        } else {
            let estimate = BasisMatrix::concat(self.n, &self.g_hats);
            let full: usize = self.cluster_sizes.iter().sum();
            if estimate.rank() == full {
                self.p_hat = estimate;
                events.push(UpdateEvent::ClusterPca { j, sizes: self.cluster_sizes.clone() });
            } else {
                warnings.push(Warning::RankDeficientPca);
            }
            self.phase = Phase::Stable;
        }
        Ok(())
    }

    fn auto_clusters(&self, data: &Matrix, rank: usize, split_steps: usize, g_cap: f64) -> Result<Vec<usize>> {
        if data.ncols() < rank {
            return Err(TrackerError::InvalidArgument("deletion window shorter than the epoch rank".into()));
        }
        let gram = data.tr_mul(data) / data.ncols() as f64;
        let mut values: Vec<f64> = gram.symmetric_eigenvalues().iter().copied().collect();
        values.sort_by(|a, b| b.total_cmp(a));
        let top = values[0].max(f64::MIN_POSITIVE);
        let lambdas: Vec<f64> = values[..rank].iter().map(|v| v.max(1e-300 * top).max(f64::MIN_POSITIVE)).collect();
        Ok(cluster_eigenvalues(&lambdas, split_steps, g_cap)?.sizes)
    }
}
