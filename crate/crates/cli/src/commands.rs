//! Subcommand implementations. Each validates its inputs before touching
//! the file system.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{bail, Context as _, Result};
use log::info;

use blackfx::effects::{AnalyticVjp, Gain, SoftClip};
use blackfx::encoder::checkpoint;
use blackfx::exec::Executor;
use blackfx::fx::{BlackboxFx, CountingFactory, FxFactory, ParamVector};
use blackfx::grad::{analytic_vjp_check, GradCheck};
use blackfx::io::dataset::{assign_splits, load_split, read_manifest, write_dataset, MANIFEST_FILE};
use blackfx::io::{generate_teacher_pairs, loudness_normalize, synth_sources, wav, SampleFormat, Split};
use blackfx::metrics::{mfcc_distance, MfccConfig};
use blackfx::trainer::{render, run_training, EpochRecord, Model, Trainer};

use crate::config::RunConfig;

pub const SNAPSHOT_FILE: &str = "config.snapshot";
pub const CHECKPOINT_FILE: &str = "checkpoint.bfx";
pub const METRICS_FILE: &str = "metrics.tsv";
pub const TIMING_FILE: &str = "timing.tsv";
pub const EVAL_FILE: &str = "eval.tsv";

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("cannot create output directory {}", dir.display()))
}

fn write_file(path: &Path, contents: &str) -> Result<()> {
    fs::write(path, contents).with_context(|| format!("cannot write {}", path.display()))
}

fn executor(cfg: &RunConfig) -> Result<Executor> {
    Ok(Executor::new(cfg.workers)?)
}

#[derive(Debug)]
pub struct DatagenSummary {
    pub manifest: PathBuf,
    pub pairs: usize,
}

pub fn datagen(cfg: &RunConfig, out: &Path) -> Result<DatagenSummary> {
    let data = cfg.require_data()?;
    let teacher = cfg.teacher()?;
    let factory = teacher.effect.factory()?;
    let sr = cfg.geometry.sample_rate;
    let len = (data.clip_seconds * sr).round() as usize;
    let sources = synth_sources(data.source, data.count, len, sr, cfg.seed)?
        .iter()
        .map(|c| loudness_normalize(c, data.loudness_dbfs))
        .collect::<blackfx::Result<Vec<_>>>()?;
    let pairs = generate_teacher_pairs(&sources, &teacher, cfg.geometry.frame_size, cfg.seed)?;
    let splits = assign_splits(pairs.len(), cfg.seed);

    create_dir(out)?;
    let manifest = write_dataset(out, &pairs, &splits, factory.param_specs(), cfg.geometry.frame_size)?;
    let mut snapshot = cfg.clone();
    snapshot.data_dir = Some(out.to_path_buf());
    write_file(&out.join(SNAPSHOT_FILE), &snapshot.to_text())?;
    info!("wrote {} pairs to {}", pairs.len(), manifest.display());
    Ok(DatagenSummary {
        manifest,
        pairs: pairs.len(),
    })
}

#[derive(Debug)]
pub struct TrainSummary {
    pub checkpoint: PathBuf,
    pub epochs: usize,
    pub best_epoch: usize,
    pub best_val: f64,
    pub live_instances: usize,
}

fn data_dir(cfg: &RunConfig) -> Result<&Path> {
    match &cfg.data_dir {
        Some(d) => Ok(d),
        None => bail!("no dataset directory: pass --data or set `data.dir`"),
    }
}

fn load_model(cfg: &RunConfig, factory: Arc<dyn FxFactory>, checkpoint_path: Option<&Path>) -> Result<Model> {
    match checkpoint_path {
        Some(path) => {
            let encoder = checkpoint::load(path)?;
            Ok(Model::new(cfg.geometry, cfg.mel, encoder, factory)
                .with_context(|| format!("checkpoint {} does not fit this configuration", path.display()))?)
        }
        None => Ok(Model::init(cfg.geometry, cfg.mel, cfg.channels.clone(), factory, cfg.seed)?),
    }
}

pub fn train(cfg: &RunConfig, out: &Path, resume: Option<&Path>) -> Result<TrainSummary> {
    let dir = data_dir(cfg)?;
    let rows = read_manifest(&dir.join(MANIFEST_FILE))?;
    let train = load_split(&rows, Split::Train)?;
    let val = load_split(&rows, Split::Val)?;
    if val.is_empty() {
        bail!("dataset {} has no validation clips", dir.display());
    }
    let counting = CountingFactory::new(cfg.factory()?);
    let counter = counting.counter();
    let model = load_model(cfg, Arc::new(counting), resume)?;
    let mut trainer = Trainer::new(cfg.trainer.clone(), cfg.grad, cfg.loss, model, train, executor(cfg)?)?;
    let live = counter.live();
    info!(
        "{live} live effect instances ({} slots, {} estimator)",
        cfg.trainer.batch_size,
        cfg.grad.estimator.id()
    );

    create_dir(out)?;
    let metrics_path = out.join(METRICS_FILE);
    let mut metrics = format!("{}\n", EpochRecord::HEADER);
    let mut timing = String::from("epoch\tseconds\n");
    let mut write_err = None;
    let outcome = run_training(&mut trainer, &val, |r| {
        info!(
            "epoch {}: train {:.6} (time {:.6}, freq {:.6}), val {:.6}",
            r.epoch, r.train_total, r.train_time, r.train_freq, r.val_total
        );
        metrics.push_str(&r.row());
        metrics.push('\n');
        let _ = writeln!(timing, "{}\t{:.3}", r.epoch, r.seconds);
        if let Err(e) = fs::write(&metrics_path, &metrics) {
            write_err = Some(e);
        }
    })?;
    if let Some(e) = write_err {
        return Err(e).with_context(|| format!("cannot write {}", metrics_path.display()));
    }
    write_file(&out.join(TIMING_FILE), &timing)?;
    let checkpoint_path = out.join(CHECKPOINT_FILE);
    checkpoint::save(&outcome.best, &checkpoint_path)?;
    write_file(&out.join(SNAPSHOT_FILE), &cfg.to_text())?;
    info!(
        "best validation loss {:.6} at epoch {}; checkpoint {}",
        outcome.best_val,
        outcome.best_epoch,
        checkpoint_path.display()
    );
    Ok(TrainSummary {
        checkpoint: checkpoint_path,
        epochs: outcome.records.len(),
        best_epoch: outcome.best_epoch,
        best_val: outcome.best_val,
        live_instances: live,
    })
}

#[derive(Debug)]
pub struct RenderSummary {
    pub audio: PathBuf,
    pub trajectory: PathBuf,
    pub frames: usize,
}

pub fn render_file(cfg: &RunConfig, checkpoint_path: &Path, input: &Path, out: &Path) -> Result<RenderSummary> {
    let factory = cfg.factory()?;
    let specs = factory.param_specs().clone();
    let model = load_model(cfg, Arc::new(factory), Some(checkpoint_path))?;
    let clip = wav::read(input)?;
    let r = render(&model, &clip, cfg.smoother, &executor(cfg)?)?;

    let mut csv = String::from("frame,seconds");
    for s in specs.iter() {
        if s.unit.is_empty() {
            let _ = write!(csv, ",{}", s.name);
        } else {
            let _ = write!(csv, ",{} ({})", s.name, s.unit);
        }
    }
    csv.push('\n');
    let n = cfg.geometry.frame_size as f64;
    for (k, theta) in r.smoothed.iter().enumerate() {
        let _ = write!(csv, "{k},{}", k as f64 * n / clip.sample_rate);
        for v in specs.denormalize(theta)? {
            let _ = write!(csv, ",{v}");
        }
        csv.push('\n');
    }

    create_dir(out)?;
    let stem = input.file_stem().and_then(|s| s.to_str()).unwrap_or("render");
    let audio = out.join(format!("{stem}_rendered.wav"));
    let trajectory = out.join(format!("{stem}_trajectory.csv"));
    wav::write(&audio, &r.output, SampleFormat::Float32)?;
    write_file(&trajectory, &csv)?;
    Ok(RenderSummary {
        audio,
        trajectory,
        frames: r.smoothed.len(),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalRow {
    pub clip: String,
    pub rendered: f64,
    pub baseline: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub rows: Vec<EvalRow>,
    pub mean_rendered: f64,
    pub mean_baseline: f64,
}

impl EvalReport {
    pub fn to_tsv(&self) -> String {
        let mut s = String::from("clip\trendered_vs_target\tbaseline_input_vs_target\n");
        for r in &self.rows {
            let _ = writeln!(s, "{}\t{}\t{}", r.clip, r.rendered, r.baseline);
        }
        let _ = writeln!(s, "mean\t{}\t{}", self.mean_rendered, self.mean_baseline);
        s
    }
}

pub fn eval(cfg: &RunConfig, checkpoint_path: &Path, out: &Path) -> Result<EvalReport> {
    let dir = data_dir(cfg)?;
    let rows = read_manifest(&dir.join(MANIFEST_FILE))?;
    let test = load_split(&rows, Split::Test)?;
    if test.is_empty() {
        bail!("dataset {} has no test clips", dir.display());
    }
    let model = load_model(cfg, Arc::new(cfg.factory()?), Some(checkpoint_path))?;
    let exec = executor(cfg)?;
    let sr = cfg.geometry.sample_rate;
    let mfcc = MfccConfig::default();
    let mut report = EvalReport {
        rows: Vec::with_capacity(test.len()),
        mean_rendered: 0.0,
        mean_baseline: 0.0,
    };
    for pair in &test.pairs {
        let r = render(&model, &pair.input, cfg.smoother, &exec)?;
        let row = EvalRow {
            clip: pair.input.id.clone(),
            rendered: mfcc_distance(&r.output.samples, &pair.target.samples, sr, mfcc)?,
            baseline: mfcc_distance(&pair.input.samples, &pair.target.samples, sr, mfcc)?,
        };
        report.mean_rendered += row.rendered;
        report.mean_baseline += row.baseline;
        report.rows.push(row);
    }
    report.mean_rendered /= test.len() as f64;
    report.mean_baseline /= test.len() as f64;
    create_dir(out)?;
    write_file(&out.join(EVAL_FILE), &report.to_tsv())?;
    Ok(report)
}

pub const FD_TOLERANCE: f64 = 1e-4;
pub const SPSA_TOLERANCE: f64 = 0.05;

#[derive(Debug, Clone, PartialEq)]
pub struct GradcheckReport {
    pub effect: String,
    pub names: Vec<String>,
    pub check: GradCheck,
    pub fd_error: f64,
    pub spsa_error: Vec<f64>,
}

impl GradcheckReport {
    pub fn fd_pass(&self) -> bool {
        self.fd_error < FD_TOLERANCE
    }

    pub fn spsa_pass(&self) -> bool {
        self.spsa_error.iter().all(|e| *e < SPSA_TOLERANCE)
    }

    pub fn passed(&self) -> bool {
        self.fd_pass() && self.spsa_pass()
    }

    pub fn table(&self) -> String {
        let flag = |ok: bool| if ok { "PASS" } else { "FAIL" };
        let mut s = format!(
            "{:<10} {:>14} {:>14} {:>14} {:>11} {:>11}\n",
            "param", "analytic", "fd", "spsa_mean", "fd_rel", "spsa_rel"
        );
        let fd_rel = self.check.fd_relative_error();
        for (i, name) in self.names.iter().enumerate() {
            let _ = writeln!(
                s,
                "{:<10} {:>14.6e} {:>14.6e} {:>14.6e} {:>11.3e} {:>11.3e}",
                name, self.check.analytic[i], self.check.fd[i], self.check.spsa_mean[i], fd_rel[i], self.spsa_error[i]
            );
        }
        let _ = writeln!(
            s,
            "fd vs analytic (normwise) {:.3e} < {FD_TOLERANCE:e}: {}",
            self.fd_error,
            flag(self.fd_pass())
        );
        let _ = writeln!(
            s,
            "spsa mean vs analytic (per coordinate) < {SPSA_TOLERANCE}: {}",
            flag(self.spsa_pass())
        );
        s
    }
}

/// A fixed probe point where both coordinates of the soft clipper carry
/// gradients of similar size; SPSA's cross-term noise on a coordinate scales
/// with the other coordinates' gradients.
fn check_effect<E>(effect: &E, epsilon: f64, draws: usize, seed: u64) -> Result<(Vec<String>, GradCheck)>
where
    E: BlackboxFx + AnalyticVjp + Clone + Sync + 'static,
{
    let p = effect.param_specs().len();
    let names = effect.param_specs().iter().map(|s| s.name.clone()).collect();
    let x: Vec<f64> = (0..256).map(|i| (i as f64 * 0.07).sin() * 0.8).collect();
    let v: Vec<f64> = (0..256).map(|i| (i as f64 * 0.07).cos()).collect();
    let theta = if p == 1 {
        ParamVector::splat(1, 0.5)
    } else {
        ParamVector::new((0..p).map(|i| 0.3 + 0.3 * i as f64 / (p - 1) as f64).collect())?
    };
    Ok((names, analytic_vjp_check(effect, &x, &theta, &v, epsilon, draws, seed)?))
}

/// Finite differences and averaged SPSA against closed-form gradients of a
/// differentiable test effect (`soft_clip` or `gain`).
pub fn gradcheck(effect: &str, epsilon: f64, draws: usize, seed: u64) -> Result<GradcheckReport> {
    let (names, check) = match effect {
        "soft_clip" => check_effect(&SoftClip::new(), epsilon, draws, seed)?,
        "gain" => check_effect(&Gain::new(0.0, 1.0)?, epsilon, draws, seed)?,
        other => bail!("no analytic gradient for `{other}` (soft_clip | gain)"),
    };
    let fd_error = check.fd_normwise_error();
    let spsa_error = check.spsa_relative_error();
    Ok(GradcheckReport {
        effect: effect.to_string(),
        names,
        check,
        fd_error,
        spsa_error,
    })
}
