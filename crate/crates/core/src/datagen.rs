//! Synthetic ground truth: a low-rank sequence `L_t = P_(t) a_t` whose basis
//! gains and loses directions at known change times, plus a sparse sequence
//! with a slowly drifting support.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg::{qr_decompose, BasisMatrix, Matrix};

#[derive(Debug, Error)]
pub enum DataError {
    #[error("invalid data configuration: {0}")]
    Config(String),
    #[error("time {t} outside 1..={t_max}")]
    TimeOutOfRange { t: usize, t_max: usize },
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed sequence file {path}: {reason}")]
    Format { path: String, reason: String },
}

pub type Result<T> = std::result::Result<T, DataError>;

const MAGIC: &[u8; 4] = b"RPCS";
const FORMAT_VERSION: u32 = 1;

/// Random streams, one per role.
#[derive(Debug, Clone, Copy)]
#[repr(u64)]
enum Stream {
    Basis = 0,
    Signs = 1,
    Magnitudes = 2,
    Coefficients = 3,
    Noise = 4,
}

fn stream_rng(seed: u64, stream: Stream) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream as u64);
    rng
}

/// One subspace change: at `time` the columns of `U` listed in `deleted`
/// leave the basis and `c_new` fresh columns are appended.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChangeEvent {
    /// 1-based frame index `t_j`.
    pub time: usize,
    pub c_new: usize,
    /// 0-based column ids of `U`, which must be present in the previous basis.
    pub deleted: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SubspaceChangeModel {
    pub n: usize,
    pub r0: usize,
    pub changes: Vec<ChangeEvent>,
}

impl SubspaceChangeModel {
    pub fn total_columns(&self) -> usize {
        self.r0 + self.changes.iter().map(|c| c.c_new).sum::<usize>()
    }

    /// `U` column ids that make up `P_j` for every epoch `j = 0..=J`.
    pub fn epoch_columns(&self) -> Result<Vec<Vec<usize>>> {
        let mut epochs = vec![(0..self.r0).collect::<Vec<_>>()];
        let mut next = self.r0;
        for (j, change) in self.changes.iter().enumerate() {
            let prev = epochs.last().unwrap();
            let mut seen = std::collections::HashSet::new();
            for &d in &change.deleted {
                if !prev.contains(&d) {
                    return Err(DataError::Config(format!(
                        "change {}: deleted column {d} is not part of the current basis",
                        j + 1
                    )));
                }
                if !seen.insert(d) {
                    return Err(DataError::Config(format!("change {}: column {d} deleted twice", j + 1)));
                }
            }
            let mut cols: Vec<usize> = prev.iter().copied().filter(|c| !change.deleted.contains(c)).collect();
            cols.extend(next..next + change.c_new);
            next += change.c_new;
            epochs.push(cols);
        }
        Ok(epochs)
    }
}

/// Geometric ramp `γ_new,k = min(gamma_new · ratio^(min(k, steps) − 1), cap)`
/// with `k` counting windows of `width` frames from the change time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Ramp {
    pub gamma_new: f64,
    pub ratio: f64,
    pub width: usize,
    pub steps: usize,
    pub cap: f64,
}

impl Ramp {
    /// Bound for a frame `offset` frames after the change time (0-based).
    pub fn at(&self, offset: usize) -> f64 {
        let k = (offset / self.width + 1).min(self.steps);
        (self.gamma_new * self.ratio.powi(k as i32 - 1)).min(self.cap)
    }

    pub fn saturated(&self) -> f64 {
        self.at(self.width * self.steps)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EpochCoefficients {
    /// Bounds for the retained columns, in basis order.
    pub retained: Vec<f64>,
    /// Ramp shared by the new columns of this epoch.
    pub ramp: Ramp,
}

/// Per-column bounds `γ_i,t`; entries of `a_t` are uniform on `[−γ, γ]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CoefficientSchedule {
    pub initial: Vec<f64>,
    pub epochs: Vec<EpochCoefficients>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SupportSchedule {
    pub s: usize,
    pub delta: usize,
    pub low: f64,
    pub high: f64,
}

impl SupportSchedule {
    /// 0-based support of `S_t`; empty for `t ≤ t_train`. The window starts at
    /// `q = ⌊(t − t_train − 1)/Δ⌋` and wraps modulo `n`.
    pub fn support_at(&self, t: usize, t_train: usize, n: usize) -> Vec<usize> {
        if t <= t_train {
            return Vec::new();
        }
        let q = (t - t_train - 1) / self.delta;
        let mut idx: Vec<usize> = (0..self.s).map(|i| (q + i) % n).collect();
        idx.sort_unstable();
        idx
    }
}

/// Everything needed to generate a sequence.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataConfig {
    pub t_max: usize,
    pub t_train: usize,
    pub model: SubspaceChangeModel,
    pub coefficients: CoefficientSchedule,
    pub support: SupportSchedule,
    pub training_noise: f64,
}

impl DataConfig {
    /// Full-size setting: `n = 2048`, 5200 frames, two changes.
    pub fn paper(delta: usize) -> DataConfig {
        let alpha = 100;
        let mut initial = vec![400.0; 9];
        initial.extend([30.0; 9]);
        initial.extend([2.0; 9]);
        initial.extend([1.0; 9]);
        let mut first = vec![400.0; 8];
        first.extend([30.0; 8]);
        first.extend([2.0; 8]);
        first.extend([1.0; 9]);
        let mut second = vec![400.0; 7];
        second.extend([30.0; 7]);
        second.extend([2.0; 7]);
        second.extend([1.0; 9]);
        second.push(1.1f64.powi(3));
        DataConfig {
            t_max: 5200,
            t_train: 200,
            model: SubspaceChangeModel {
                n: 2048,
                r0: 36,
                changes: vec![
                    ChangeEvent { time: 301, c_new: 1, deleted: vec![8, 17, 35] },
                    ChangeEvent { time: 2501, c_new: 1, deleted: vec![7, 16, 34] },
                ],
            },
            coefficients: CoefficientSchedule {
                initial,
                epochs: vec![
                    EpochCoefficients {
                        retained: first,
                        ramp: Ramp { gamma_new: 1.0, ratio: 1.1, width: alpha, steps: 4, cap: 400.0 },
                    },
                    EpochCoefficients {
                        retained: second,
                        ramp: Ramp { gamma_new: 1.0, ratio: 1.1, width: alpha, steps: 7, cap: 400.0 },
                    },
                ],
            },
            support: SupportSchedule { s: 20, delta, low: 2.0, high: 3.0 },
            training_noise: 1e-3,
        }
    }

    /// Scaled-down setting with the same three-tier spectrum shape.
    pub fn desk(delta: usize) -> DataConfig {
        let alpha = 60;
        DataConfig {
            t_max: 2600,
            t_train: 100,
            model: SubspaceChangeModel {
                n: 256,
                r0: 10,
                changes: vec![
                    ChangeEvent { time: 301, c_new: 1, deleted: vec![2, 5, 9] },
                    ChangeEvent { time: 1401, c_new: 1, deleted: vec![1, 4, 8] },
                ],
            },
            coefficients: CoefficientSchedule {
                initial: vec![400.0, 400.0, 400.0, 30.0, 30.0, 30.0, 2.0, 2.0, 1.0, 1.0],
                epochs: vec![
                    EpochCoefficients {
                        retained: vec![400.0, 400.0, 30.0, 30.0, 2.0, 2.0, 1.0],
                        ramp: Ramp { gamma_new: 1.0, ratio: 1.1, width: alpha, steps: 4, cap: 400.0 },
                    },
                    EpochCoefficients {
                        retained: vec![400.0, 30.0, 2.0, 2.0, 1.1f64.powi(3)],
                        ramp: Ramp { gamma_new: 1.0, ratio: 1.1, width: alpha, steps: 7, cap: 400.0 },
                    },
                ],
            },
            support: SupportSchedule { s: 8, delta, low: 2.0, high: 3.0 },
            training_noise: 1e-3,
        }
    }

    pub fn n(&self) -> usize {
        self.model.n
    }

    pub fn validate(&self) -> Result<()> {
        let m = &self.model;
        let bad = |msg: String| Err(DataError::Config(msg));
        if m.n == 0 {
            return bad("n must be positive".into());
        }
        if self.t_max == 0 || self.t_train >= self.t_max {
            return bad(format!("need 0 <= t_train < t_max, got t_train={} t_max={}", self.t_train, self.t_max));
        }
        if m.total_columns() > m.n {
            return bad(format!("{} basis columns do not fit in R^{}", m.total_columns(), m.n));
        }
        let mut last = self.t_train;
        for (j, c) in m.changes.iter().enumerate() {
            if c.time <= last {
                return bad(format!("change time {} must exceed {} (t_train or the previous change)", c.time, last));
            }
            if c.time > self.t_max {
                return bad(format!("change {} at t={} is past t_max={}", j + 1, c.time, self.t_max));
            }
            last = c.time;
        }
        let epochs = m.epoch_columns()?;
        let co = &self.coefficients;
        if co.initial.len() != m.r0 {
            return bad(format!("{} initial bounds for r0={}", co.initial.len(), m.r0));
        }
        if co.epochs.len() != m.changes.len() {
            return bad(format!("{} coefficient epochs for {} changes", co.epochs.len(), m.changes.len()));
        }
        for (j, e) in co.epochs.iter().enumerate() {
            let kept = epochs[j].len() - m.changes[j].deleted.len();
            if e.retained.len() != kept {
                return bad(format!("epoch {}: {} retained bounds for {kept} retained columns", j + 1, e.retained.len()));
            }
            let r = &e.ramp;
            if r.width == 0 || r.steps == 0 || !(r.gamma_new > 0.0) || !(r.ratio > 0.0) || !(r.cap > 0.0) {
                return bad(format!("epoch {}: ramp needs positive width, steps, gamma_new, ratio and cap", j + 1));
            }
        }
        let all = co.initial.iter().chain(co.epochs.iter().flat_map(|e| e.retained.iter()));
        if all.clone().any(|g| !(g.is_finite() && *g >= 0.0)) {
            return bad("coefficient bounds must be finite and non-negative".into());
        }
        let s = &self.support;
        if s.s > m.n {
            return bad(format!("support size {} exceeds n={}", s.s, m.n));
        }
        if s.delta == 0 {
            return bad("support shift period must be positive".into());
        }
        if !(s.low >= 0.0 && s.high >= s.low && s.high.is_finite()) {
            return bad(format!("bad magnitude range [{}, {}]", s.low, s.high));
        }
        if !(self.training_noise >= 0.0 && self.training_noise.is_finite()) {
            return bad("training noise amplitude must be finite and non-negative".into());
        }
        Ok(())
    }
}

/// Generated `M = S + L` together with the ground-truth schedules.
#[derive(Debug, Clone)]
pub struct GeneratedSequence {
    pub config: DataConfig,
    pub seed: u64,
    /// `n × t_max`; column `t − 1` holds frame `t`.
    pub m: Matrix,
    pub s: Matrix,
    pub l: Matrix,
    u: Matrix,
    epoch_columns: Vec<Vec<usize>>,
    bases: Vec<BasisMatrix>,
    coefficients: Vec<DVector<f64>>,
}

/// Draws the sequence. Deterministic in `(config, seed)`; each random role
/// has its own stream so that, for example, changing the support schedule
/// leaves `L` untouched.
pub fn generate(config: &DataConfig, seed: u64) -> Result<GeneratedSequence> {
    config.validate()?;
    let n = config.n();
    let t_max = config.t_max;
    let width = config.model.total_columns();

    let mut basis_rng = stream_rng(seed, Stream::Basis);
    let gauss = Matrix::from_fn(n, width, |_, _| basis_rng.sample(StandardNormal));
    let u = if width == 0 {
        Matrix::zeros(n, 0)
    } else {
        qr_decompose(&gauss)
            .map_err(|e| DataError::Config(format!("could not orthonormalize U: {e}")))?
            .0
            .into_matrix()
    };
    let epoch_columns = config.model.epoch_columns()?;
    let bases: Vec<BasisMatrix> = epoch_columns
        .iter()
        .map(|cols| BasisMatrix::from_orthonormal(u.select_columns(cols.iter())))
        .collect();

    let mut coef_rng = stream_rng(seed, Stream::Coefficients);
    let mut sign_rng = stream_rng(seed, Stream::Signs);
    let mut mag_rng = stream_rng(seed, Stream::Magnitudes);

    let mut l = Matrix::zeros(n, t_max);
    let mut s = Matrix::zeros(n, t_max);
    let mut coefficients = Vec::with_capacity(t_max);
    let sup = &config.support;
    for t in 1..=t_max {
        let j = epoch_of(&config.model, t);
        let bounds = bounds_at(config, j, t);
        let a = DVector::from_iterator(
            bounds.len(),
            bounds.iter().map(|&g| if g > 0.0 { coef_rng.random_range(-g..=g) } else { 0.0 }),
        );
        if !a.is_empty() {
            l.column_mut(t - 1).gemv(1.0, bases[j].as_matrix(), &a, 0.0);
        }
        coefficients.push(a);
        for i in sup.support_at(t, config.t_train, n) {
            let sign = if sign_rng.random_bool(0.5) { 1.0 } else { -1.0 };
            let mag = if sup.high > sup.low { mag_rng.random_range(sup.low..=sup.high) } else { sup.low };
            s[(i, t - 1)] = sign * mag;
        }
    }
    let m = &s + &l;
    Ok(GeneratedSequence { config: config.clone(), seed, m, s, l, u, epoch_columns, bases, coefficients })
}

fn epoch_of(model: &SubspaceChangeModel, t: usize) -> usize {
    model.changes.iter().take_while(|c| c.time <= t).count()
}

fn bounds_at(config: &DataConfig, j: usize, t: usize) -> Vec<f64> {
    if j == 0 {
        return config.coefficients.initial.clone();
    }
    let change = &config.model.changes[j - 1];
    let epoch = &config.coefficients.epochs[j - 1];
    let mut b = epoch.retained.clone();
    let g = epoch.ramp.at(t - change.time);
    b.extend(std::iter::repeat_n(g, change.c_new));
    b
}

impl GeneratedSequence {
    pub fn n(&self) -> usize {
        self.config.n()
    }

    pub fn t_max(&self) -> usize {
        self.config.t_max
    }

    pub fn t_train(&self) -> usize {
        self.config.t_train
    }

    pub fn change_times(&self) -> Vec<usize> {
        self.config.model.changes.iter().map(|c| c.time).collect()
    }

    fn check_t(&self, t: usize) -> Result<()> {
        if t == 0 || t > self.t_max() {
            return Err(DataError::TimeOutOfRange { t, t_max: self.t_max() });
        }
        Ok(())
    }

    /// Epoch index `j` in effect at frame `t`.
    pub fn epoch_at(&self, t: usize) -> usize {
        epoch_of(&self.config.model, t)
    }

    /// The orthonormalized Gaussian matrix whose columns make up every `P_j`.
    pub fn u(&self) -> &Matrix {
        &self.u
    }

    /// `P_j`.
    pub fn epoch_basis(&self, j: usize) -> &BasisMatrix {
        &self.bases[j]
    }

    /// `U` column ids of `P_j`, in basis order.
    pub fn epoch_columns(&self, j: usize) -> &[usize] {
        &self.epoch_columns[j]
    }

    /// `P_(t)`.
    pub fn basis_at(&self, t: usize) -> Result<&BasisMatrix> {
        self.check_t(t)?;
        Ok(&self.bases[self.epoch_at(t)])
    }

    /// Columns of `P_j` added at change `j` (`P_j,new`).
    pub fn new_directions(&self, j: usize) -> BasisMatrix {
        if j == 0 {
            return BasisMatrix::empty(self.n());
        }
        let c = self.config.model.changes[j - 1].c_new;
        let cols = &self.epoch_columns[j];
        BasisMatrix::from_orthonormal(self.u.select_columns(cols[cols.len() - c..].iter()))
    }

    /// Columns of `P_{j−1}` removed at change `j` (`P_j,old`).
    pub fn deleted_directions(&self, j: usize) -> BasisMatrix {
        if j == 0 {
            return BasisMatrix::empty(self.n());
        }
        let del = &self.config.model.changes[j - 1].deleted;
        BasisMatrix::from_orthonormal(self.u.select_columns(del.iter()))
    }

    /// `a_t`, aligned with the columns of `P_(t)`.
    pub fn coefficients_at(&self, t: usize) -> Result<&DVector<f64>> {
        self.check_t(t)?;
        Ok(&self.coefficients[t - 1])
    }

    /// Per-column bounds `γ_i,t`, aligned with the columns of `P_(t)`.
    pub fn bounds_at(&self, t: usize) -> Result<Vec<f64>> {
        self.check_t(t)?;
        Ok(bounds_at(&self.config, self.epoch_at(t), t))
    }

    /// `T_t` (0-based, sorted).
    pub fn support_at(&self, t: usize) -> Result<Vec<usize>> {
        self.check_t(t)?;
        Ok(self.config.support.support_at(t, self.t_train(), self.n()))
    }

    /// Training block `L_1..L_{t_train}` plus uniform noise on `[−amplitude, amplitude]`.
    pub fn training_block(&self, noise_amplitude: f64) -> Matrix {
        let tt = self.t_train();
        let mut block = self.l.columns(0, tt).into_owned();
        if noise_amplitude > 0.0 {
            let mut rng = stream_rng(self.seed, Stream::Noise);
            for v in block.iter_mut() {
                *v += rng.random_range(-noise_amplitude..=noise_amplitude);
            }
        }
        block
    }

    /// Diagonal of `Λ_t = Cov[a_t]`, sorted non-increasing.
    pub fn covariance_spectrum(&self, t: usize) -> Result<Vec<f64>> {
        let mut v: Vec<f64> = self.bounds_at(t)?.iter().map(|g| g * g / 3.0).collect();
        v.sort_by(|a, b| b.total_cmp(a));
        Ok(v)
    }

    /// Writes `M`, `S`, `L` to the flat binary format.
    pub fn write_binary(&self, path: &Path) -> Result<()> {
        let io = |e| DataError::Io { path: path.display().to_string(), source: e };
        let mut w = BufWriter::new(File::create(path).map_err(io)?);
        let n = u32::try_from(self.n()).map_err(|_| DataError::Config("n too large for file header".into()))?;
        let t = u32::try_from(self.t_max()).map_err(|_| DataError::Config("t_max too large for file header".into()))?;
        w.write_all(MAGIC).map_err(io)?;
        for v in [FORMAT_VERSION, n, t] {
            w.write_all(&v.to_le_bytes()).map_err(io)?;
        }
        for mat in [&self.m, &self.s, &self.l] {
            for v in mat.as_slice() {
                w.write_all(&v.to_le_bytes()).map_err(io)?;
            }
        }
        w.flush().map_err(io)
    }
}

/// Matrices read back from a sequence file.
#[derive(Debug, Clone, PartialEq)]
pub struct SequenceFile {
    pub m: Matrix,
    pub s: Matrix,
    pub l: Matrix,
}

pub fn read_binary(path: &Path) -> Result<SequenceFile> {
    let p = path.display().to_string();
    let io = |e| DataError::Io { path: p.clone(), source: e };
    let mut r = BufReader::new(File::open(path).map_err(io)?);
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic).map_err(io)?;
    if &magic != MAGIC {
        return Err(DataError::Format { path: p, reason: "bad magic".into() });
    }
    let mut word = [0u8; 4];
    let mut header = [0u32; 3];
    for h in header.iter_mut() {
        r.read_exact(&mut word).map_err(io)?;
        *h = u32::from_le_bytes(word);
    }
    let [version, n, t] = header;
    if version != FORMAT_VERSION {
        return Err(DataError::Format { path: p, reason: format!("unsupported version {version}") });
    }
    let (n, t) = (n as usize, t as usize);
    let mut read_matrix = || -> Result<Matrix> {
        let mut data = vec![0f64; n * t];
        let mut buf = [0u8; 8];
        for v in data.iter_mut() {
            r.read_exact(&mut buf).map_err(io)?;
            *v = f64::from_le_bytes(buf);
        }
        Ok(Matrix::from_vec(n, t, data))
    };
    let m = read_matrix()?;
    let s = read_matrix()?;
    let l = read_matrix()?;
    Ok(SequenceFile { m, s, l })
}
