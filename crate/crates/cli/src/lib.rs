//! Command-line experiment runner.
//!
//! A run directory holds:
//! - `config.json`: the resolved configuration (loading it reproduces the run)
//! - `metrics.csv`: one row per epoch, rewritten after every epoch
//! - `updates.csv`, `model_losses.csv`: per-update and per-model-round diagnostics
//! - `checkpoint.json`: networks, accuracy estimate, exploitation coefficient and rng states
//! - `diagnostic.json`: written only when a run aborts

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use ipk_core::agent::{evaluate, Checkpoint, EvalReport, Trainer};
use ipk_core::config::{ExperimentConfig, Mode};
use ipk_core::report::{export, read_metrics, write_metrics, write_records, Summary};

/// Relative output directories are resolved against this variable when set.
pub const OUTPUT_ROOT_ENV: &str = "IPK_OUTPUT_ROOT";

pub const CONFIG_FILE: &str = "config.json";
pub const METRICS_FILE: &str = "metrics.csv";
pub const UPDATES_FILE: &str = "updates.csv";
pub const MODEL_LOSSES_FILE: &str = "model_losses.csv";
pub const CHECKPOINT_FILE: &str = "checkpoint.json";
pub const DIAGNOSTIC_FILE: &str = "diagnostic.json";
pub const EXPORT_FILE: &str = "metrics_export.csv";
pub const SUMMARY_FILE: &str = "summary.json";

#[derive(Debug, Parser)]
#[command(name = "ipk", version, about = "Train and evaluate the prior-guided continuum-robot tracker")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train from a JSON config.
    Train {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        mode: Option<Mode>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the deterministic policy stored in a checkpoint.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long, default_value_t = 10)]
        episodes: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Also write the report here.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Add smoothed columns and a summary to a run's metrics.
    Export {
        #[arg(long)]
        run: PathBuf,
    },
}

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Train { config, mode, seed, epochs, out } => {
            let dir = train_cmd(&config, mode, seed, epochs, out.as_deref())?;
            println!("{}", dir.display());
        }
        Command::Eval { checkpoint, episodes, seed, out } => {
            let report = eval_cmd(&checkpoint, episodes, seed)?;
            let text = serde_json::to_string_pretty(&report)?;
            if let Some(path) = out {
                fs::write(&path, &text).with_context(|| format!("writing {}", path.display()))?;
            }
            println!("{text}");
        }
        Command::Export { run } => {
            let summary = export_cmd(&run)?;
            println!("{}", serde_json::to_string_pretty(&summary)?);
        }
    }
    Ok(())
}

fn with_root(p: &Path) -> PathBuf {
    match std::env::var_os(OUTPUT_ROOT_ENV) {
        Some(root) if p.is_relative() => PathBuf::from(root).join(p),
        _ => p.to_path_buf(),
    }
}

/// Output directory: `--out`, then the config's `out_dir`, then `runs/<mode>-seed<seed>`.
pub fn resolve_out_dir(config: &ExperimentConfig, out: Option<&Path>) -> PathBuf {
    let base = match (out, &config.out_dir) {
        (Some(p), _) => p.to_path_buf(),
        (None, Some(d)) => PathBuf::from(d),
        (None, None) => PathBuf::from("runs").join(format!("{}-seed{}", config.mode, config.seed)),
    };
    with_root(&base)
}

pub fn load_config(path: &Path) -> Result<ExperimentConfig> {
    let text = fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
    Ok(ExperimentConfig::from_json(&text).with_context(|| format!("in {}", path.display()))?)
}

fn write_csv<T: serde::Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let f = fs::File::create(path).with_context(|| format!("creating {}", path.display()))?;
    write_records(f, rows)?;
    Ok(())
}

/// Trains and writes all artifacts; returns the run directory. Nothing is
/// written when the config cannot be loaded.
pub fn train_cmd(config_path: &Path, mode: Option<Mode>, seed: Option<u64>, epochs: Option<usize>, out: Option<&Path>) -> Result<PathBuf> {
    let mut config = load_config(config_path)?;
    if let Some(m) = mode {
        config.mode = m;
    }
    if let Some(s) = seed {
        config.seed = s;
    }
    if let Some(e) = epochs {
        config.epochs = e;
    }
    config.validate()?;
    let dir = resolve_out_dir(&config, out);
    let mut trainer = Trainer::new(config.clone())?;
    fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
    fs::write(dir.join(CONFIG_FILE), config.to_json())?;

    for _ in 0..config.epochs {
        if let Err(e) = trainer.run_epoch() {
            let mut snap = trainer.diagnostic();
            snap["error"] = serde_json::Value::String(e.to_string());
            fs::write(dir.join(DIAGNOSTIC_FILE), serde_json::to_string_pretty(&snap)?)?;
            bail!("training aborted: {e} (state in {})", dir.join(DIAGNOSTIC_FILE).display());
        }
        let f = fs::File::create(dir.join(METRICS_FILE))?;
        write_metrics(f, trainer.metrics())?;
    }
    if config.mode.learns() {
        write_csv(&dir.join(UPDATES_FILE), trainer.updates())?;
    }
    if config.mode.uses_models() {
        write_csv(&dir.join(MODEL_LOSSES_FILE), trainer.model_losses())?;
    }
    fs::write(dir.join(CHECKPOINT_FILE), trainer.checkpoint().to_json())?;
    Ok(dir)
}

pub fn eval_cmd(checkpoint: &Path, episodes: usize, seed: u64) -> Result<EvalReport> {
    let text = fs::read_to_string(checkpoint).with_context(|| format!("reading checkpoint {}", checkpoint.display()))?;
    let ckpt = Checkpoint::from_json(&text)?;
    Ok(evaluate(&ckpt, episodes, seed)?)
}

/// Writes `metrics_export.csv` and `summary.json` into the run directory.
pub fn export_cmd(run: &Path) -> Result<Summary> {
    let path = run.join(METRICS_FILE);
    let f = fs::File::open(&path).with_context(|| format!("opening {}", path.display()))?;
    let rows = read_metrics(f).with_context(|| format!("parsing {}", path.display()))?;
    let (smoothed, summary) = export(&rows)?;
    write_csv(&run.join(EXPORT_FILE), &smoothed)?;
    fs::write(run.join(SUMMARY_FILE), serde_json::to_string_pretty(&summary)?)?;
    Ok(summary)
}
