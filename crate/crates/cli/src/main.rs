//! `ptzloc`: run closed-loop simulations, generate training images,
//! re-run range estimation over recorded logs and score logs against truth.

mod config;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use ptzloc_core::dataset::{self, DatasetError};
use ptzloc_core::sim::{
    self, evaluate_vs_truth_from, read_log_csv, replay, write_log_csv, FilterMode, ReplayConfig, RunMetrics, SimError,
};
use thiserror::Error;

use config::{parse_assignment, AppConfig, ConfigError, Overrides, SEED_ENV};

#[derive(Debug, Error)]
enum CliError {
    /// Bad configuration or input files.
    #[error("{0}")]
    Config(String),
    #[error("{0}")]
    Runtime(String),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Runtime(_) => 3,
        }
    }
}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        CliError::Config(e.to_string())
    }
}

fn runtime(e: impl std::fmt::Display) -> CliError {
    CliError::Runtime(e.to_string())
}

fn input(e: impl std::fmt::Display) -> CliError {
    CliError::Config(e.to_string())
}

#[derive(Parser)]
#[command(name = "ptzloc", version, about = "Marker-based PTZ localisation simulator and dataset generator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone, Default)]
struct Common {
    /// TOML configuration file.
    #[arg(long, short)]
    config: Option<PathBuf>,
    /// Override any config field, e.g. `--set filter.lambda=10`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE", value_parser = parse_assignment)]
    set: Vec<(String, String)>,
    /// Random seed; takes precedence over the config file and PTZLOC_SEED.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Run one closed-loop simulation and write log, metrics and config.
    Simulate {
        #[command(flatten)]
        common: Common,
        /// Preset scenario (s-path, square-indoor, square-outdoor).
        #[arg(long)]
        scenario: Option<String>,
        /// Trajectory file (TOML or JSON) used instead of a preset.
        #[arg(long)]
        trajectory: Option<PathBuf>,
        /// Range filter: none, apf, fixed:<sigma>, bw:<cutoff_hz>.
        #[arg(long)]
        filter: Option<FilterMode>,
        /// Output directory.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Generate the synthetic ellipse image dataset.
    GenDataset {
        #[command(flatten)]
        common: Common,
        /// Directory of background images (png or jpeg).
        #[arg(long)]
        backgrounds: Option<PathBuf>,
        #[arg(long)]
        total: Option<usize>,
        #[arg(long)]
        positives: Option<usize>,
        /// Output directory.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Re-run range estimation over a recorded log.
    Replay {
        #[command(flatten)]
        common: Common,
        /// Simulation log CSV.
        #[arg(long)]
        log: PathBuf,
        /// Range filter: none, apf, fixed:<sigma>, bw:<cutoff_hz>.
        #[arg(long)]
        filter: Option<FilterMode>,
        /// Metrics JSON destination; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Also write the re-estimated log here.
        #[arg(long)]
        log_out: Option<PathBuf>,
    },
    /// Score a log against its ground truth.
    Eval {
        #[command(flatten)]
        common: Common,
        /// Simulation log CSV.
        #[arg(long)]
        log: PathBuf,
        /// Metrics JSON destination; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn load_config(common: &Common, extra: Vec<(String, String)>) -> Result<AppConfig, CliError> {
    let mut set = common.set.clone();
    set.extend(extra);
    let overrides = Overrides {
        set,
        seed: common.seed,
        env_seed: std::env::var(SEED_ENV).ok(),
    };
    Ok(AppConfig::load_path(common.config.as_deref(), &overrides)?)
}

fn quoted(s: &str) -> String {
    toml::Value::String(s.to_string()).to_string()
}

fn write_json<T: serde::Serialize>(value: &T, dest: Option<&Path>) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value).map_err(runtime)?;
    text.push('\n');
    match dest {
        Some(p) => fs::write(p, text).map_err(|e| runtime(format!("{}: {e}", p.display()))),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn write_log(log: &[sim::StepRecord], path: &Path) -> Result<(), CliError> {
    let f = fs::File::create(path).map_err(|e| runtime(format!("{}: {e}", path.display())))?;
    write_log_csv(log, std::io::BufWriter::new(f)).map_err(runtime)
}

fn read_log(path: &Path) -> Result<Vec<sim::StepRecord>, CliError> {
    let f = fs::File::open(path).map_err(|e| input(format!("{}: {e}", path.display())))?;
    read_log_csv(std::io::BufReader::new(f)).map_err(|e| input(format!("{}: {e}", path.display())))
}

fn print_summary(m: &RunMetrics) {
    eprintln!(
        "samples {}  detection {:.3}  rho median {:.3} m  rho rmse {:.3} m  3d median {:.3} m  3d rmse {:.3} m",
        m.n_samples, m.detection_rate, m.rho_median_m, m.rho_rmse_m, m.median_3d_m, m.rmse_3d_m
    );
}

fn cmd_simulate(
    common: Common,
    scenario: Option<String>,
    trajectory: Option<PathBuf>,
    filter: Option<FilterMode>,
    out: Option<PathBuf>,
) -> Result<(), CliError> {
    let mut extra = Vec::new();
    if let Some(s) = scenario {
        // an empty value clears the other trajectory source
        extra.push(("scenario".into(), quoted(&s)));
        extra.push(("trajectory_file".into(), quoted("")));
    }
    if let Some(t) = trajectory {
        extra.push(("scenario".into(), quoted("")));
        extra.push(("trajectory_file".into(), quoted(&t.display().to_string())));
    }
    if let Some(f) = filter {
        extra.push(("filter_mode".into(), quoted(&f.to_string())));
    }
    if let Some(o) = out {
        extra.push(("output_dir".into(), quoted(&o.display().to_string())));
    }
    let cfg = load_config(&common, extra)?;
    let outcome = sim::run(&cfg.run).map_err(|e| match e {
        SimError::InvalidConfig(_) | SimError::InvalidTrajectory(_) => input(e),
        e => runtime(e),
    })?;
    let dir = &cfg.output_dir;
    fs::create_dir_all(dir).map_err(|e| runtime(format!("{}: {e}", dir.display())))?;
    write_log(&outcome.log, &dir.join("log.csv"))?;
    write_json(&outcome.metrics, Some(&dir.join("metrics.json")))?;
    write_json(&outcome.diagnostics, Some(&dir.join("diagnostics.json")))?;
    fs::write(dir.join("config.toml"), cfg.to_toml()?).map_err(runtime)?;
    for t in &outcome.diagnostics.tracking_lost_at {
        eprintln!("warning: tracking lost at t = {t:.2} s");
    }
    print_summary(&outcome.metrics);
    eprintln!("wrote {}", dir.display());
    Ok(())
}

fn cmd_gen_dataset(
    common: Common,
    backgrounds: Option<PathBuf>,
    total: Option<usize>,
    positives: Option<usize>,
    out: Option<PathBuf>,
) -> Result<(), CliError> {
    let mut extra = Vec::new();
    if let Some(b) = backgrounds {
        extra.push(("dataset.backgrounds_dir".into(), quoted(&b.display().to_string())));
    }
    if let Some(t) = total {
        extra.push(("dataset.total".into(), t.to_string()));
    }
    if let Some(p) = positives {
        extra.push(("dataset.positives".into(), p.to_string()));
    }
    if let Some(o) = out {
        extra.push(("output_dir".into(), quoted(&o.display().to_string())));
    }
    let cfg = load_config(&common, extra)?;
    let bg_dir = cfg
        .dataset
        .backgrounds_dir
        .as_ref()
        .ok_or_else(|| input("no backgrounds directory: pass --backgrounds or set dataset.backgrounds_dir"))?;
    let bgs = dataset::list_backgrounds(bg_dir).map_err(|e| input(format!("{}: {e}", bg_dir.display())))?;
    let manifest = cfg.dataset.manifest(cfg.seed);
    let report = dataset::generate(&manifest, &bgs, &cfg.dataset.augment, &cfg.output_dir).map_err(|e| match e {
        DatasetError::BackgroundUnreadable { .. } | DatasetError::InvalidManifest(_) | DatasetError::InvalidAugment(_) => {
            input(e)
        }
        e => runtime(e),
    })?;
    eprintln!(
        "wrote {} images ({} with marker) and {}",
        report.total,
        report.positives,
        report.label_path.display()
    );
    Ok(())
}

fn cmd_replay(
    common: Common,
    log: PathBuf,
    filter: Option<FilterMode>,
    out: Option<PathBuf>,
    log_out: Option<PathBuf>,
) -> Result<(), CliError> {
    let mut extra = Vec::new();
    if let Some(f) = filter {
        extra.push(("filter_mode".into(), quoted(&f.to_string())));
    }
    let cfg = load_config(&common, extra)?;
    let records = read_log(&log)?;
    let rc = ReplayConfig {
        mode: cfg.run.filter_mode,
        filter: cfg.run.filter,
        dt_s: cfg.run.dt_s,
        seed: cfg.seed,
        camera_position: cfg.run.camera.position,
    };
    let replayed = replay(&records, &rc).map_err(input)?;
    if let Some(p) = log_out {
        write_log(&replayed, &p)?;
    }
    let metrics = evaluate_vs_truth_from(&replayed, cfg.run.camera.position).map_err(input)?;
    print_summary(&metrics);
    write_json(&metrics, out.as_deref())
}

fn cmd_eval(common: Common, log: PathBuf, out: Option<PathBuf>) -> Result<(), CliError> {
    let cfg = load_config(&common, Vec::new())?;
    let records = read_log(&log)?;
    let metrics = evaluate_vs_truth_from(&records, cfg.run.camera.position).map_err(input)?;
    print_summary(&metrics);
    write_json(&metrics, out.as_deref())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Simulate {
            common,
            scenario,
            trajectory,
            filter,
            out,
        } => cmd_simulate(common, scenario, trajectory, filter, out),
        Command::GenDataset {
            common,
            backgrounds,
            total,
            positives,
            out,
        } => cmd_gen_dataset(common, backgrounds, total, positives, out),
        Command::Replay {
            common,
            log,
            filter,
            out,
            log_out,
        } => cmd_replay(common, log, filter, out, log_out),
        Command::Eval { common, log, out } => cmd_eval(common, log, out),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
