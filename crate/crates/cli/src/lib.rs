//! Command-line front end: dataset generation, simulation, training, evaluation and export.

// `!(x > 0.0)` style checks deliberately reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod error;

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use cartmech_core::{Flavor, System, SystemConfig, SystemSpec, Tolerances};
use cartmech_learn::data::trajectory_csv;
use cartmech_learn::eval::predict;
use cartmech_learn::metrics::{energy_error, phi_rmse_curve};
use cartmech_learn::{evaluate, train_with, Dataset, Evaluation, Model, Split};
use clap::{Args, Parser, Subcommand};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

pub use config::{EvalConfig, RunConfig};
pub use error::CliError;

/// Environment variable capping the worker pool.
pub const THREADS_ENV: &str = "CARTMECH_THREADS";

#[derive(Parser, Debug)]
#[command(name = "cartmech", version, about = "Constrained mechanics simulation and learned dynamics")]
struct Cli {
    /// Log progress (repeat for more detail).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone, Default)]
struct ConfigArgs {
    /// JSON run configuration; defaults are used when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override a config entry, e.g. `--set train.epochs=50`.
    #[arg(long = "set", value_name = "KEY.PATH=VALUE")]
    overrides: Vec<String>,
}

impl ConfigArgs {
    fn load(&self) -> Result<RunConfig, CliError> {
        RunConfig::load(self.config.as_deref(), &self.overrides)
    }
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Print the effective configuration (a valid input config).
    PrintConfig {
        #[command(flatten)]
        cfg: ConfigArgs,
    },
    /// Generate datasets. Without `--split`, writes `train/` and `test/` under `--out`.
    Generate {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long)]
        out: PathBuf,
        /// Write a single split directly into `--out`.
        #[arg(long)]
        split: Option<String>,
        /// Number of sequences for `--split` (defaults to data.n_traj, or eval.n_test for test).
        #[arg(long)]
        count: Option<usize>,
    },
    /// Roll out the ground truth (or a checkpointed model) from a sampled initial state.
    Simulate {
        #[command(flatten)]
        cfg: ConfigArgs,
        /// System name: npendulum, coupled, magnet, gyroscope or rotor.
        #[arg(long)]
        system: Option<String>,
        /// Number of bodies for chain systems.
        #[arg(long, default_value_t = 2)]
        n: usize,
        /// Duration in seconds (defaults to eval.horizon).
        #[arg(long = "T")]
        duration: Option<f64>,
        /// Output interval (defaults to data.dt).
        #[arg(long)]
        dt: Option<f64>,
        #[arg(long)]
        rtol: Option<f64>,
        #[arg(long)]
        atol: Option<f64>,
        /// Seed of the initial-state draw (defaults to data.seed).
        #[arg(long)]
        seed: Option<u64>,
        /// Roll out this model instead of the ground truth.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        /// Trajectory CSV; the summary is printed to stdout either way.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Train a model; writes `model.ckpt`, `history.csv` and `config.json` under `--out`.
    Train {
        #[command(flatten)]
        cfg: ConfigArgs,
        /// Training set directory (generated from the config when omitted).
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Evaluate a checkpoint on full test trajectories and write the metrics CSV.
    Evaluate {
        #[command(flatten)]
        eval: EvalArgs,
    },
    /// Evaluate a checkpoint with some of its constraints disabled.
    AblateConstraints {
        #[command(flatten)]
        eval: EvalArgs,
        /// Comma-separated indices of constraints to disable.
        #[arg(long, value_delimiter = ',', required = true)]
        disable: Vec<usize>,
    },
    /// Write one stored sequence of a dataset as trajectory CSV.
    Export {
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long, default_value_t = 0)]
        index: usize,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Args, Debug)]
struct EvalArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    /// Test set directory.
    #[arg(long)]
    dataset: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Horizon in steps (defaults to the full stored trajectories).
    #[arg(long)]
    steps: Option<usize>,
    /// RK4 steps per data interval.
    #[arg(long, default_value_t = 1)]
    substeps: usize,
}

/// Parses `argv` (including the program name), runs the command and returns the exit code.
pub fn run<I, S>(argv: I) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).try_init();
    configure_threads();
    match execute(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

/// Sizes the global worker pool from `CARTMECH_THREADS` once per process.
pub fn configure_threads() {
    let Ok(raw) = std::env::var(THREADS_ENV) else { return };
    match raw.trim().parse::<usize>() {
        Ok(n) if n > 0 => {
            if rayon::ThreadPoolBuilder::new().num_threads(n).build_global().is_err() {
                log::debug!("worker pool already configured");
            }
        }
        _ => log::warn!("ignoring {THREADS_ENV}={raw}: expected a positive integer"),
    }
}

fn execute(command: Command) -> Result<(), CliError> {
    match command {
        Command::PrintConfig { cfg } => {
            println!("{}", cfg.load()?.to_json());
            Ok(())
        }
        Command::Generate { cfg, out, split, count } => generate(&cfg.load()?, &out, split.as_deref(), count),
        Command::Simulate { cfg, system, n, duration, dt, rtol, atol, seed, checkpoint, out } => {
            let cfg = cfg.load()?;
            let system_config = match &system {
                Some(name) => SystemConfig::by_name(name, n)?,
                None => cfg.system.clone(),
            };
            let request = SimulateRequest {
                system: system_config,
                duration: duration.unwrap_or(cfg.eval.horizon),
                dt: dt.unwrap_or(cfg.data.dt),
                rtol: rtol.unwrap_or(cfg.data.rtol),
                atol: atol.unwrap_or(cfg.data.atol),
                seed: seed.unwrap_or(cfg.data.seed),
                substeps: cfg.eval.substeps,
            };
            let model = checkpoint.as_deref().map(load_model).transpose()?;
            let (csv, summary) = simulate(&request, model.as_ref())?;
            if let Some(out) = out {
                write(&out, csv)?;
            }
            println!("{}", serde_json::to_string_pretty(&summary).expect("summary serializes"));
            Ok(())
        }
        Command::Train { cfg, data, out } => train(&cfg.load()?, data.as_deref(), &out),
        Command::Evaluate { eval } => {
            let model = load_model(&eval.checkpoint)?;
            let result = run_evaluation(&model, &eval)?;
            println!("geometric-mean relative error {:.6e}", result.gm_rel_err);
            Ok(())
        }
        Command::AblateConstraints { eval, disable } => {
            let model = load_model(&eval.checkpoint)?;
            let count = constraint_count(&model)?;
            if let Some(&bad) = disable.iter().find(|&&i| i >= count) {
                return Err(CliError::User(format!("constraint {bad} does not exist (the system has {count})")));
            }
            let base = model.spec.constraint_mask.clone().unwrap_or_else(|| vec![true; count]);
            let mask = base.iter().enumerate().map(|(i, &on)| on && !disable.contains(&i)).collect();
            let ablated = model.with_mask(Some(mask))?;
            let result = run_evaluation(&ablated, &eval)?;
            println!("geometric-mean relative error with constraints {disable:?} disabled {:.6e}", result.gm_rel_err);
            Ok(())
        }
        Command::Export { dataset, index, out } => {
            let data = load_dataset(&dataset)?;
            if index >= data.len() {
                return Err(CliError::User(format!("sequence {index} out of range ({} stored)", data.len())));
            }
            let d = System::build(&data.manifest.system)?.d();
            let start = data.manifest.starts[index];
            let times: Vec<f64> = (0..data.length()).map(|k| (start + k) as f64 * data.manifest.dt).collect();
            write(&out, trajectory_csv(&times, &data.sequence(index), d)?)
        }
    }
}

fn generate(cfg: &RunConfig, out: &Path, split: Option<&str>, count: Option<usize>) -> Result<(), CliError> {
    let make = |split: Split, count: usize, dir: &Path| -> Result<(), CliError> {
        let data = Dataset::generate(&cfg.system, &cfg.data, split, count)?;
        if data.manifest.resampled > 0 {
            log::warn!("{} initial conditions were redrawn", data.manifest.resampled);
        }
        data.save(dir)?;
        log::info!("wrote {} {:?} sequences to {}", data.len(), split, dir.display());
        Ok(())
    };
    match split {
        Some(s) => {
            let split = Split::parse(s)?;
            let default = if split == Split::Test { cfg.eval.n_test } else { cfg.data.n_traj };
            make(split, count.unwrap_or(default), out)
        }
        None => {
            if count.is_some() {
                return Err(CliError::User("--count requires --split".into()));
            }
            make(Split::Train, cfg.data.n_traj, &out.join("train"))?;
            make(Split::Test, cfg.eval.n_test, &out.join("test"))
        }
    }
}

fn train(cfg: &RunConfig, data_dir: Option<&Path>, out: &Path) -> Result<(), CliError> {
    let data = match data_dir {
        Some(dir) => load_dataset(dir)?,
        None => Dataset::generate(&cfg.system, &cfg.data, Split::Train, cfg.data.n_traj)?,
    };
    if data.manifest.system != cfg.system {
        log::warn!("training on the dataset's system, which differs from the config's");
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.train.seed);
    let mut model = Model::new(cfg.model.clone(), data.manifest.system.clone(), &mut rng)?;
    fs::create_dir_all(out)?;
    let every = cfg.train.checkpoint_every;
    let history = train_with(&mut model, &data, &cfg.train, |record, model| {
        log::info!("epoch {} loss {:.6e}", record.epoch, record.loss);
        if every > 0 && (record.epoch + 1) % every == 0 {
            model.save(out.join(format!("epoch_{}.ckpt", record.epoch + 1)))?;
        }
        Ok(())
    })?;
    model.save(out.join("model.ckpt"))?;
    write(&out.join("history.csv"), history.to_csv())?;
    let mut effective = cfg.clone();
    effective.system = data.manifest.system.clone();
    write(&out.join("config.json"), effective.to_json() + "\n")?;
    if let Some(loss) = history.final_loss() {
        println!("final training loss {loss:.6e}");
    }
    Ok(())
}

fn run_evaluation(model: &Model, args: &EvalArgs) -> Result<Evaluation, CliError> {
    if args.substeps == 0 {
        return Err(CliError::User("--substeps must be positive".into()));
    }
    let test = load_dataset(&args.dataset)?;
    let truth = System::build(&test.manifest.system)?;
    let result = evaluate(model, &truth, &test, args.steps, args.substeps)?;
    if result.failures > 0 {
        log::warn!("{} of {} rollouts failed", result.failures, test.len());
    }
    write(&args.out, result.to_csv())?;
    Ok(result)
}

fn constraint_count(model: &Model) -> Result<usize, CliError> {
    let system = System::build(&model.system_config)?;
    Ok(system.ctx.topology.constraints.len())
}

/// Ground-truth or model rollout from a seeded initial state.
#[derive(Clone, Debug, PartialEq)]
pub struct SimulateRequest {
    pub system: SystemConfig,
    pub duration: f64,
    pub dt: f64,
    pub rtol: f64,
    pub atol: f64,
    pub seed: u64,
    pub substeps: usize,
}

/// Conservation diagnostics of one rollout, relative to the initial state.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SimulationSummary {
    pub system: String,
    pub steps: usize,
    pub duration: f64,
    /// `max_t |H(t) − H(0)| / |H(0)|`.
    pub max_energy_error: f64,
    /// Largest bounded energy error `|H(t) − H(0)| / (|H(t)| + |H(0)|)`.
    pub max_bounded_energy_error: f64,
    pub max_phi_rmse: f64,
    /// `max_t ‖L(t) − L(0)‖∞ / ‖L(0)‖∞`, reported for the free rotor.
    pub angular_momentum_drift: Option<f64>,
}

/// Rolls out `request` and returns the trajectory CSV and its conservation summary.
pub fn simulate(request: &SimulateRequest, model: Option<&Model>) -> Result<(String, SimulationSummary), CliError> {
    if !(request.duration > 0.0) || !(request.dt > 0.0) {
        return Err(CliError::User("duration and dt must be positive".into()));
    }
    let config = model.map_or(&request.system, |m| &m.system_config);
    let system = System::build(config)?;
    let steps = ((request.duration / request.dt).round() as usize).max(1);
    let times: Vec<f64> = (0..=steps).map(|k| k as f64 * request.dt).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(request.seed);
    let z0 = system.sample(&mut rng)?;
    let states = match model {
        None => system.simulate(&z0, &times, &Tolerances::new(request.rtol, request.atol), Flavor::Hamiltonian)?.states,
        Some(m) => predict(m, &[z0], steps, request.dt, request.substeps)
            .pop()
            .flatten()
            .ok_or_else(|| CliError::Numeric("model rollout failed".into()))?,
    };
    let summary = summarize(&system, &states, request.dt)?;
    Ok((trajectory_csv(&times, &states, system.d())?, summary))
}

fn summarize(system: &System, states: &[Vec<f64>], dt: f64) -> Result<SimulationSummary, CliError> {
    let h0 = system.energy(&states[0])?;
    let (mut max_rel, mut max_bounded) = (0.0f64, 0.0f64);
    for z in states {
        let h = system.energy(z)?;
        max_rel = max_rel.max((h - h0).abs() / h0.abs());
        max_bounded = max_bounded.max(energy_error(h, h0));
    }
    let max_phi = phi_rmse_curve(system, states)?.into_iter().fold(0.0, f64::max);
    let angular_momentum_drift = if matches!(system.config.spec, SystemSpec::Rotor { .. }) {
        let l0 = system.angular_momentum(&states[0])?;
        let scale = l0.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let mut drift = 0.0f64;
        for z in states {
            let l = system.angular_momentum(z)?;
            let diff = l.iter().zip(&l0).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
            drift = drift.max(diff / scale);
        }
        Some(drift)
    } else {
        None
    };
    Ok(SimulationSummary {
        system: system.name().to_string(),
        steps: states.len() - 1,
        duration: (states.len() - 1) as f64 * dt,
        max_energy_error: max_rel,
        max_bounded_energy_error: max_bounded,
        max_phi_rmse: max_phi,
        angular_momentum_drift,
    })
}

fn load_model(path: &Path) -> Result<Model, CliError> {
    if !path.exists() {
        return Err(CliError::User(format!("checkpoint {} not found", path.display())));
    }
    Ok(Model::load(path)?)
}

fn load_dataset(dir: &Path) -> Result<Dataset, CliError> {
    if !dir.exists() {
        return Err(CliError::User(format!("dataset {} not found", dir.display())));
    }
    Ok(Dataset::load(dir)?)
}

fn write(path: &Path, contents: String) -> Result<(), CliError> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent)?;
    }
    fs::write(path, contents).map_err(|e| CliError::User(format!("cannot write {}: {e}", path.display())))
}
