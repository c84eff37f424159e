use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use nalgebra::DVector;

use reprocs::datagen::{generate, read_binary};
use reprocs::harness::{
    precision_recall, run_experiment_with_jobs, Algorithm, ExperimentConfig, HarnessError, Preset,
};
use reprocs::theory::{check_conditions, Measurements, TheoryParams};
use reprocs::tracker::{estimate_initial_subspace, ClusterSpec, Tracker};

#[derive(Parser)]
#[command(name = "reprocs", version, about = "Sparse + low-rank separation with subspace tracking")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// JSON experiment document; unknown keys are rejected.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, value_enum)]
    preset: Option<Preset>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads for independent trials (0 = all cores).
    #[arg(long)]
    jobs: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Write a generated sequence to a flat binary file.
    Generate {
        #[command(flatten)]
        common: Common,
        /// Support shift period.
        #[arg(long)]
        delta: Option<usize>,
    },
    /// Run one tracker over a sequence file or a generated preset sequence.
    Track {
        #[command(flatten)]
        common: Common,
        /// Sequence written by `generate`.
        #[arg(long)]
        input: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "reprocs-cpca")]
        algo: Algorithm,
        #[arg(long)]
        delta: Option<usize>,
    },
    /// Evaluate the bound quantities and hypothesis checks.
    Theory {
        #[command(flatten)]
        common: Common,
        /// Print the report as JSON instead of text.
        #[arg(long)]
        json: bool,
    },
    /// Monte Carlo comparison of the tracker with and without deletion.
    Experiment {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        trials: Option<usize>,
        #[arg(long)]
        delta: Option<usize>,
        #[arg(long = "algo", value_enum)]
        algorithms: Vec<Algorithm>,
    },
}

fn load_config(common: &Common) -> Result<ExperimentConfig, HarnessError> {
    let mut cfg = match &common.config {
        Some(p) => ExperimentConfig::from_json_file(p)?,
        None => ExperimentConfig::default(),
    };
    if common.preset.is_some() {
        cfg.preset = common.preset;
    }
    if common.seed.is_some() {
        cfg.seed = common.seed;
    }
    if common.out.is_some() {
        cfg.out.clone_from(&common.out);
    }
    if common.jobs.is_some() {
        cfg.jobs = common.jobs;
    }
    Ok(cfg)
}

fn out_dir(cfg: &ExperimentConfig) -> Result<PathBuf, HarnessError> {
    let dir = cfg.out.clone().unwrap_or_else(|| PathBuf::from("out"));
    std::fs::create_dir_all(&dir).map_err(|e| HarnessError::Io { path: dir.display().to_string(), source: e })?;
    Ok(dir)
}

fn cmd_generate(common: &Common, delta: Option<usize>) -> Result<(), HarnessError> {
    let mut cfg = load_config(common)?;
    if delta.is_some() {
        cfg.delta = delta;
    }
    let exp = cfg.resolve()?;
    let seq = generate(&exp.data, exp.seed)?;
    let path = out_dir(&cfg)?.join("sequence.bin");
    seq.write_binary(&path)?;
    println!("wrote {} ({} x {})", path.display(), seq.n(), seq.t_max());
    Ok(())
}

fn cmd_track(common: &Common, input: Option<&Path>, algo: Algorithm, delta: Option<usize>) -> Result<(), HarnessError> {
    let mut cfg = load_config(common)?;
    if delta.is_some() {
        cfg.delta = delta;
    }
    cfg.trials = Some(1);
    let exp = cfg.resolve()?;
    let (m, s) = match input {
        Some(p) => {
            let f = read_binary(p)?;
            (f.m, f.s)
        }
        None => {
            let seq = generate(&exp.data, exp.seed)?;
            (seq.m, seq.s)
        }
    };
    let n = m.nrows();
    let t_train = exp.data.t_train;
    if n != exp.data.model.n || m.ncols() <= t_train {
        return Err(HarnessError::Config(format!(
            "sequence is {}x{} but the configuration expects n={} and more than {t_train} frames",
            n,
            m.ncols(),
            exp.data.model.n
        )));
    }
    let block = m.columns(0, t_train).into_owned();
    let p0 = estimate_initial_subspace(&block, exp.data.model.r0)?.basis;
    let seed = block.column(t_train - 1).into_owned();
    let mut tcfg = exp.tracker.clone();
    tcfg.deletion_enabled = algo == Algorithm::ReprocsCpca;
    let mut tracker = Tracker::new(p0, tcfg, t_train, Some(&seed))?;

    let path = out_dir(&cfg)?.join("track.csv");
    let io = |e: csv::Error| HarnessError::Csv { path: path.display().to_string(), message: e.to_string() };
    let mut w = csv::Writer::from_path(&path).map_err(io)?;
    w.write_record(["t", "algo", "err_s_rel", "precision", "recall", "rank", "phase"]).map_err(io)?;
    for t in t_train + 1..=m.ncols() {
        let frame: DVector<f64> = m.column(t - 1).into_owned();
        let rec = tracker.step(&frame)?;
        let truth: Vec<usize> = (0..n).filter(|&i| s[(i, t - 1)] != 0.0).collect();
        let s_norm = s.column(t - 1).norm();
        let err = if s_norm > 0.0 {
            format!("{:.16e}", (&rec.s_hat - s.column(t - 1)).norm() / s_norm)
        } else {
            String::new()
        };
        let (p, r) = precision_recall(&rec.support, &truth);
        w.write_record([
            t.to_string(),
            algo.name().to_string(),
            err,
            format!("{p:.16e}"),
            format!("{r:.16e}"),
            tracker.basis().rank().to_string(),
            rec.phase.label().to_string(),
        ])
        .map_err(io)?;
    }
    w.flush().map_err(|e| HarnessError::Io { path: path.display().to_string(), source: e })?;
    println!("wrote {}", path.display());
    Ok(())
}

fn cmd_theory(common: &Common, json: bool) -> Result<(), HarnessError> {
    let (params, measurements) = match &common.config {
        Some(p) => {
            #[derive(serde::Deserialize)]
            #[serde(deny_unknown_fields)]
            struct Doc {
                params: TheoryParams,
                #[serde(default)]
                measurements: Measurements,
            }
            let text = std::fs::read_to_string(p)
                .map_err(|e| HarnessError::Io { path: p.display().to_string(), source: e })?;
            let doc: Doc =
                serde_json::from_str(&text).map_err(|e| HarnessError::Config(format!("{}: {e}", p.display())))?;
            (doc.params, doc.measurements)
        }
        None => {
            let preset = common.preset.unwrap_or(Preset::Desk);
            let exp = ExperimentConfig { preset: Some(preset), ..Default::default() }.resolve()?;
            let params = match preset {
                Preset::Paper => TheoryParams::paper(),
                Preset::Desk => TheoryParams::desk(),
            };
            let times: Vec<usize> = exp.tracker.changes.iter().map(|c| c.time).collect();
            let theta = exp
                .tracker
                .changes
                .iter()
                .map(|c| match &c.clusters {
                    ClusterSpec::Sizes(s) => s.len(),
                    ClusterSpec::Auto { .. } => 1,
                })
                .max()
                .unwrap_or(1);
            let params = TheoryParams { theta_max: theta, ..params };
            let m = Measurements {
                s_min: Some(exp.data.support.low),
                k_steps: Some(exp.tracker.k_steps),
                alpha: Some(exp.tracker.alpha as f64),
                alpha_tilde: Some(exp.tracker.alpha_tilde as f64),
                min_spacing: times.windows(2).map(|w| w[1] - w[0]).min(),
                ..Default::default()
            };
            (params, m)
        }
    };
    let report = check_conditions(&params, &measurements).map_err(|e| HarnessError::Config(e.to_string()))?;
    let rendered = serde_json::to_string_pretty(&report).map_err(|e| HarnessError::Config(e.to_string()))?;
    if json {
        println!("{rendered}");
    } else {
        print!("{}", report.to_text());
    }
    if let Some(dir) = &common.out {
        std::fs::create_dir_all(dir).map_err(|e| HarnessError::Io { path: dir.display().to_string(), source: e })?;
        let path = dir.join("theory.json");
        std::fs::write(&path, rendered).map_err(|e| HarnessError::Io { path: path.display().to_string(), source: e })?;
    }
    Ok(())
}

fn cmd_experiment(
    common: &Common,
    trials: Option<usize>,
    delta: Option<usize>,
    algorithms: &[Algorithm],
) -> Result<(), HarnessError> {
    let mut cfg = load_config(common)?;
    if trials.is_some() {
        cfg.trials = trials;
    }
    if delta.is_some() {
        cfg.delta = delta;
    }
    if !algorithms.is_empty() {
        cfg.algorithms = Some(algorithms.to_vec());
    }
    let exp = cfg.resolve()?;
    let result = run_experiment_with_jobs(&exp, cfg.jobs.unwrap_or(0))?;
    let dir = out_dir(&cfg)?;
    result.write_all(&dir)?;
    println!(
        "{} trials, {} rows, mean {:.1} solver iterations per frame; wrote {}",
        exp.trials,
        result.rows.len(),
        result.cs_iterations as f64 / result.frames.max(1) as f64,
        dir.display()
    );
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let res = match &cli.command {
        Command::Generate { common, delta } => cmd_generate(common, *delta),
        Command::Track { common, input, algo, delta } => cmd_track(common, input.as_deref(), *algo, *delta),
        Command::Theory { common, json } => cmd_theory(common, *json),
        Command::Experiment { common, trials, delta, algorithms } => cmd_experiment(common, *trials, *delta, algorithms),
    };
    match res {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
