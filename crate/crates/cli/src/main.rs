use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Result};
use clap::{Parser, Subcommand};
use log::info;

use blackfx_cli::commands::{self, SNAPSHOT_FILE};
use blackfx_cli::config::{load_text, ConfigText, RunConfig};

#[derive(Parser)]
#[command(name = "blackfx", version, about = "Train encoders that drive black-box audio effects")]
struct Cli {
    /// Config file or preset name (tube-emulation, gate-cleanup, mastering).
    #[arg(long, global = true)]
    config: Option<String>,
    /// Overrides `run.seed`.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads; 0 picks one per core.
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Extra `key=value` settings applied after the config file.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    set: Vec<String>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Synthesize sources and write a teacher-generated paired dataset.
    Datagen,
    /// Train an encoder on a generated dataset.
    Train {
        /// Dataset directory holding `manifest.tsv`.
        #[arg(long)]
        data: Option<PathBuf>,
        /// Start from an existing checkpoint.
        #[arg(long)]
        resume: Option<PathBuf>,
        /// Gradient estimator: spsa or fd.
        #[arg(long)]
        estimator: Option<String>,
    },
    /// Process a WAV file with a trained encoder.
    Render {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        input: PathBuf,
        /// One-pole smoothing coefficient for the parameter trajectory.
        #[arg(long)]
        smooth: Option<f64>,
    },
    /// MFCC distance of rendered test clips against their targets.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        data: Option<PathBuf>,
    },
    /// Compare gradient estimators against a closed-form gradient.
    Gradcheck {
        /// soft_clip or gain.
        #[arg(long, default_value = "soft_clip")]
        effect: String,
        #[arg(long, default_value_t = 1000)]
        draws: usize,
        #[arg(long, default_value_t = 1e-3)]
        epsilon: f64,
    },
}

/// Config file, else the snapshot stored next to `checkpoint`, else defaults.
fn base_text(cli: &Cli, checkpoint: Option<&Path>) -> Result<ConfigText> {
    if let Some(c) = &cli.config {
        return Ok(load_text(c)?);
    }
    if let Some(snapshot) = checkpoint.and_then(|c| c.parent()).map(|d| d.join(SNAPSHOT_FILE)) {
        if snapshot.exists() {
            return Ok(load_text(&snapshot.to_string_lossy())?);
        }
    }
    Ok(ConfigText::default())
}

fn resolve(cli: &Cli, checkpoint: Option<&Path>, extra: &[(&str, Option<String>)]) -> Result<RunConfig> {
    let mut text = base_text(cli, checkpoint)?;
    for s in &cli.set {
        text.set(s)?;
    }
    let flags = [
        ("run.seed", cli.seed.map(|s| s.to_string())),
        ("run.workers", cli.workers.map(|w| w.to_string())),
        ("run.out", cli.out.as_ref().map(|o| o.display().to_string())),
    ];
    for (k, v) in flags.iter().chain(extra) {
        if let Some(v) = v {
            text.set(&format!("{k}={v}"))?;
        }
    }
    Ok(RunConfig::from_text(&text)?)
}

fn out_dir(cfg: &RunConfig) -> Result<PathBuf> {
    match &cfg.out {
        Some(o) => Ok(o.clone()),
        None => bail!("no output directory: pass --out or set `run.out`"),
    }
}

fn run(cli: Cli) -> Result<bool> {
    match &cli.command {
        Command::Datagen => {
            let cfg = resolve(&cli, None, &[])?;
            let out = out_dir(&cfg)?;
            let s = commands::datagen(&cfg, &out)?;
            println!("{} pairs, manifest {}", s.pairs, s.manifest.display());
        }
        Command::Train { data, resume, estimator } => {
            let extra = [
                ("data.dir", data.as_ref().map(|d| d.display().to_string())),
                ("grad.estimator", estimator.clone()),
            ];
            let cfg = resolve(&cli, None, &extra)?;
            let out = out_dir(&cfg)?;
            let s = commands::train(&cfg, &out, resume.as_deref())?;
            println!(
                "{} epochs, best validation loss {} at epoch {}, {} live effect instances, checkpoint {}",
                s.epochs,
                s.best_val,
                s.best_epoch,
                s.live_instances,
                s.checkpoint.display()
            );
        }
        Command::Render { checkpoint, input, smooth } => {
            let cfg = resolve(&cli, Some(checkpoint), &[("render.smoothing", smooth.map(|s| s.to_string()))])?;
            let out = out_dir(&cfg)?;
            let s = commands::render_file(&cfg, checkpoint, input, &out)?;
            println!(
                "{} frames; audio {}, trajectory {}",
                s.frames,
                s.audio.display(),
                s.trajectory.display()
            );
        }
        Command::Eval { checkpoint, data } => {
            let cfg = resolve(&cli, Some(checkpoint), &[("data.dir", data.as_ref().map(|d| d.display().to_string()))])?;
            let out = out_dir(&cfg)?;
            let report = commands::eval(&cfg, checkpoint, &out)?;
            print!("{}", report.to_tsv());
        }
        Command::Gradcheck { effect, draws, epsilon } => {
            let cfg = resolve(&cli, None, &[])?;
            let report = commands::gradcheck(effect, *epsilon, *draws, cfg.seed)?;
            print!("{}", report.table());
            if !report.passed() {
                info!("gradient check failed");
                return Ok(false);
            }
        }
    }
    Ok(true)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
