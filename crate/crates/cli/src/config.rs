//! Run configuration: flat `section.key = value` text with `#` comments.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use blackfx::effects::{EffectFactory, EffectKind, EffectSpec};
use blackfx::encoder::MelConfig;
use blackfx::fx::FxFactory;
use blackfx::grad::{Estimator, PerturbationConfig};
use blackfx::io::{SourceKind, TeacherParams, TeacherSpec};
use blackfx::loss::LossConfig;
use blackfx::trainer::{Geometry, SmootherConfig, TrainerConfig};
use blackfx::{Error, Result};

pub const PRESETS: [(&str, &str); 3] = [
    ("tube-emulation", include_str!("../presets/tube-emulation.conf")),
    ("gate-cleanup", include_str!("../presets/gate-cleanup.conf")),
    ("mastering", include_str!("../presets/mastering.conf")),
];

const KEYS: &[&str] = &[
    "task.name",
    "audio.sample_rate",
    "audio.frame_size",
    "audio.context_size",
    "effect.kind",
    "effect.params",
    "effect.min",
    "effect.max",
    "teacher.params",
    "teacher.values",
    "teacher.lo",
    "teacher.hi",
    "teacher.segment_seconds",
    "data.source",
    "data.count",
    "data.clip_seconds",
    "data.loudness_dbfs",
    "data.dir",
    "grad.estimator",
    "grad.epsilon",
    "trainer.batch_size",
    "trainer.lr",
    "trainer.beta1",
    "trainer.beta2",
    "trainer.adam_eps",
    "trainer.max_epochs",
    "trainer.steps_per_epoch",
    "trainer.patience",
    "loss.alpha_time",
    "loss.alpha_freq",
    "loss.maxlag",
    "loss.log_floor",
    "loss.fft_size",
    "encoder.channels",
    "mel.window",
    "mel.hop",
    "mel.n_mels",
    "mel.fmin",
    "mel.log_offset",
    "render.smoothing",
    "run.seed",
    "run.workers",
    "run.out",
];

const FIXED_PREFIX: &str = "effect.fixed.";

/// Raw key/value pairs.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ConfigText {
    entries: BTreeMap<String, String>,
}

impl ConfigText {
    pub fn parse(text: &str) -> Result<Self> {
        let mut entries = BTreeMap::new();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected `key = value`, got `{line}`", n + 1)))?;
            let (k, v) = (k.trim(), v.trim());
            check_key(k).map_err(|e| Error::Config(format!("line {}: {e}", n + 1)))?;
            if entries.insert(k.to_string(), v.to_string()).is_some() {
                return Err(Error::Config(format!("line {}: `{k}` is set twice", n + 1)));
            }
        }
        Ok(Self { entries })
    }

    /// Applies a `key=value` override, replacing any earlier value.
    pub fn set(&mut self, assignment: &str) -> Result<()> {
        let (k, v) = assignment
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("override `{assignment}` is not `key=value`")))?;
        let k = k.trim();
        check_key(k).map_err(|e| Error::Config(e.to_string()))?;
        self.entries.insert(k.to_string(), v.trim().to_string());
        Ok(())
    }

    fn raw(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(String::as_str)
    }

    fn get<T: FromStr>(&self, key: &str) -> Result<Option<T>> {
        self.raw(key)
            .map(|v| {
                v.parse::<T>()
                    .map_err(|_| Error::Config(format!("`{key}`: cannot parse `{v}`")))
            })
            .transpose()
    }

    fn get_or<T: FromStr>(&self, key: &str, default: T) -> Result<T> {
        Ok(self.get(key)?.unwrap_or(default))
    }

    fn list<T: FromStr>(&self, key: &str) -> Result<Option<Vec<T>>> {
        self.raw(key)
            .map(|v| {
                v.split(',')
                    .map(|s| {
                        s.trim()
                            .parse::<T>()
                            .map_err(|_| Error::Config(format!("`{key}`: cannot parse `{}`", s.trim())))
                    })
                    .collect()
            })
            .transpose()
    }
}

fn check_key(k: &str) -> std::result::Result<(), String> {
    if KEYS.contains(&k) || (k.starts_with(FIXED_PREFIX) && k.len() > FIXED_PREFIX.len()) {
        Ok(())
    } else {
        Err(format!("unknown key `{k}`"))
    }
}

/// Loads a config file, or a built-in preset when `source` names one and no
/// such file exists.
pub fn load_text(source: &str) -> Result<ConfigText> {
    let path = Path::new(source);
    if path.exists() {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Io {
            path: path.to_path_buf(),
            source: e,
        })?;
        return ConfigText::parse(&text);
    }
    match PRESETS.iter().find(|(name, _)| *name == source) {
        Some((_, text)) => ConfigText::parse(text),
        None => Err(Error::Config(format!(
            "`{source}` is neither a config file nor a preset ({})",
            PRESETS.map(|p| p.0).join(", ")
        ))),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum EffectChoice {
    Single(EffectKind),
    MasteringChain,
}

/// Parameters needed only to generate a dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct DataSpec {
    pub source: SourceKind,
    pub count: usize,
    pub clip_seconds: f64,
    pub loudness_dbfs: f64,
    pub teacher: TeacherParams,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub task: String,
    pub geometry: Geometry,
    pub effect: EffectChoice,
    pub fixed: BTreeMap<String, f64>,
    /// `None` when the config has no data-generation section.
    pub data: Option<DataSpec>,
    pub data_dir: Option<PathBuf>,
    pub grad: PerturbationConfig,
    pub trainer: TrainerConfig,
    pub loss: LossConfig,
    pub channels: Vec<usize>,
    pub mel: MelConfig,
    pub smoother: SmootherConfig,
    pub seed: u64,
    pub workers: usize,
    pub out: Option<PathBuf>,
    missing_data: Vec<&'static str>,
}

impl RunConfig {
    pub fn from_text(t: &ConfigText) -> Result<Self> {
        let geometry = Geometry {
            sample_rate: t.get_or("audio.sample_rate", 22050.0)?,
            frame_size: t.get_or("audio.frame_size", 1024)?,
            context_size: t.get_or("audio.context_size", 40960)?,
        };
        let kind = t.raw("effect.kind").unwrap_or("multiband_compressor");
        let effect = match kind {
            "mastering_chain" => EffectChoice::MasteringChain,
            "identity" => EffectChoice::Single(EffectKind::Identity {
                params: t.get_or("effect.params", 1)?,
            }),
            "gain" => EffectChoice::Single(EffectKind::Gain {
                min: t.get_or("effect.min", 0.0)?,
                max: t.get_or("effect.max", 1.0)?,
            }),
            other => EffectChoice::Single(EffectKind::from_id(other).map_err(|e| Error::Config(format!("effect.kind: {e}")))?),
        };
        let mut fixed = BTreeMap::new();
        for (k, v) in &t.entries {
            if let Some(name) = k.strip_prefix(FIXED_PREFIX) {
                let value = v
                    .parse::<f64>()
                    .map_err(|_| Error::Config(format!("`{k}`: cannot parse `{v}`")))?;
                fixed.insert(name.to_string(), value);
            }
        }

        let mut missing_data = Vec::new();
        let source = match t.raw("data.source") {
            Some(s) => Some(SourceKind::parse(s).map_err(|e| Error::Config(format!("data.source: {e}")))?),
            None => {
                missing_data.push("data.source");
                None
            }
        };
        let teacher = match t.raw("teacher.params") {
            None => {
                missing_data.push("teacher.params");
                None
            }
            Some("fixed") => Some(TeacherParams::Fixed(
                t.list("teacher.values")?
                    .ok_or_else(|| Error::Config("`teacher.params = fixed` needs `teacher.values`".into()))?,
            )),
            Some("random") => Some(TeacherParams::Random {
                lo: t.get_or("teacher.lo", 0.2)?,
                hi: t.get_or("teacher.hi", 0.8)?,
            }),
            Some("piecewise") => Some(TeacherParams::Piecewise {
                segment_seconds: t.get_or("teacher.segment_seconds", 1.0)?,
                lo: t.get_or("teacher.lo", 0.2)?,
                hi: t.get_or("teacher.hi", 0.8)?,
            }),
            Some(other) => {
                return Err(Error::Config(format!(
                    "teacher.params: unknown mode `{other}` (fixed | random | piecewise)"
                )))
            }
        };
        let data = match (source, teacher) {
            (Some(source), Some(teacher)) => Some(DataSpec {
                source,
                count: t.get_or("data.count", 60)?,
                clip_seconds: t.get_or("data.clip_seconds", 5.0)?,
                loudness_dbfs: t.get_or("data.loudness_dbfs", -25.0)?,
                teacher,
            }),
            _ => None,
        };

        let seed = t.get_or("run.seed", 0)?;
        let td = TrainerConfig::default();
        let trainer = TrainerConfig {
            batch_size: t.get_or("trainer.batch_size", td.batch_size)?,
            lr: t.get_or("trainer.lr", td.lr)?,
            beta1: t.get_or("trainer.beta1", td.beta1)?,
            beta2: t.get_or("trainer.beta2", td.beta2)?,
            adam_eps: t.get_or("trainer.adam_eps", td.adam_eps)?,
            max_epochs: t.get_or("trainer.max_epochs", td.max_epochs)?,
            steps_per_epoch: t.get_or("trainer.steps_per_epoch", td.steps_per_epoch)?,
            patience: t.get_or("trainer.patience", td.patience)?,
            seed,
        };
        let gd = PerturbationConfig::default();
        let grad = PerturbationConfig {
            estimator: Estimator::parse(t.raw("grad.estimator").unwrap_or(gd.estimator.id()))
                .map_err(|e| Error::Config(format!("grad.estimator: {e}")))?,
            epsilon: t.get_or("grad.epsilon", gd.epsilon)?,
            seed,
        };
        let ld = LossConfig::default();
        let loss = LossConfig {
            alpha_time: t.get_or("loss.alpha_time", ld.alpha_time)?,
            alpha_freq: t.get_or("loss.alpha_freq", ld.alpha_freq)?,
            maxlag: t.get_or("loss.maxlag", ld.maxlag)?,
            log_floor: t.get_or("loss.log_floor", ld.log_floor)?,
            fft_size: t.get_or("loss.fft_size", ld.fft_size)?,
        };
        let md = MelConfig::default();
        let mel = MelConfig {
            window: t.get_or("mel.window", md.window)?,
            hop: t.get_or("mel.hop", md.hop)?,
            n_mels: t.get_or("mel.n_mels", md.n_mels)?,
            fmin: t.get_or("mel.fmin", md.fmin)?,
            fmax: None,
            log_offset: t.get_or("mel.log_offset", md.log_offset)?,
        };
        let cfg = Self {
            task: t.raw("task.name").unwrap_or("custom").to_string(),
            geometry,
            effect,
            fixed,
            data,
            data_dir: t.raw("data.dir").map(PathBuf::from),
            grad,
            trainer,
            loss,
            channels: t.list("encoder.channels")?.unwrap_or_else(|| vec![16, 32, 64]),
            mel,
            smoother: SmootherConfig {
                coefficient: t.get_or("render.smoothing", 0.9)?,
            },
            seed,
            workers: t.get_or("run.workers", 0)?,
            out: t.raw("run.out").map(PathBuf::from),
            missing_data,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn parse(text: &str) -> Result<Self> {
        Self::from_text(&ConfigText::parse(text)?)
    }

    /// Everything except data generation, which is checked by
    /// [`RunConfig::require_data`].
    pub fn validate(&self) -> Result<()> {
        self.geometry.validate()?;
        self.trainer.validate()?;
        self.grad.validate()?;
        self.loss.validate()?;
        self.smoother.validate()?;
        if 2 * self.loss.maxlag >= self.geometry.frame_size {
            return Err(Error::Config(format!(
                "loss.maxlag {} needs frames longer than {} samples",
                self.loss.maxlag,
                2 * self.loss.maxlag
            )));
        }
        let factory = self.factory()?;
        if self.geometry.frame_size % factory.build().block_size() != 0 {
            return Err(Error::Config(format!(
                "effect block size does not divide audio.frame_size {}",
                self.geometry.frame_size
            )));
        }
        if self.mel.frames_for(self.geometry.context_size) == 0 {
            return Err(Error::Config("mel.window exceeds audio.context_size".into()));
        }
        if let Some(d) = &self.data {
            if d.count == 0 || !(d.clip_seconds > 0.0) {
                return Err(Error::Config("data.count and data.clip_seconds must be positive".into()));
            }
            if !d.loudness_dbfs.is_finite() {
                return Err(Error::Config("data.loudness_dbfs must be finite".into()));
            }
        }
        Ok(())
    }

    pub fn require_data(&self) -> Result<&DataSpec> {
        match (&self.data, self.missing_data.first()) {
            (Some(d), _) => Ok(d),
            (None, Some(key)) => Err(Error::Config(format!("dataset generation needs `{key}`"))),
            (None, None) => Err(Error::Config("dataset generation needs a data section".into())),
        }
    }

    pub fn effect_spec(&self) -> Result<EffectSpec> {
        Ok(match &self.effect {
            EffectChoice::MasteringChain => {
                if let Some(name) = self.fixed.keys().next() {
                    return Err(Error::Config(format!(
                        "effect.fixed.{name}: the mastering chain's frozen parameters are built in"
                    )));
                }
                EffectSpec::mastering_chain(self.geometry.sample_rate)
            }
            EffectChoice::Single(kind) => EffectSpec {
                kind: kind.clone(),
                fixed: self.fixed.clone(),
                sample_rate: self.geometry.sample_rate,
            },
        })
    }

    pub fn factory(&self) -> Result<EffectFactory> {
        self.effect_spec()?.factory()
    }

    pub fn teacher(&self) -> Result<TeacherSpec> {
        Ok(TeacherSpec {
            effect: self.effect_spec()?,
            params: self.require_data()?.teacher.clone(),
        })
    }

    fn effect_id(&self) -> &'static str {
        match &self.effect {
            EffectChoice::MasteringChain => "mastering_chain",
            EffectChoice::Single(k) => k.id(),
        }
    }

    /// Fully resolved snapshot; parses back to an equal config.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let mut kv = |k: &str, v: String| {
            let _ = writeln!(s, "{k} = {v}");
        };
        kv("task.name", self.task.clone());
        kv("audio.sample_rate", self.geometry.sample_rate.to_string());
        kv("audio.frame_size", self.geometry.frame_size.to_string());
        kv("audio.context_size", self.geometry.context_size.to_string());
        kv("effect.kind", self.effect_id().to_string());
        match &self.effect {
            EffectChoice::Single(EffectKind::Identity { params }) => kv("effect.params", params.to_string()),
            EffectChoice::Single(EffectKind::Gain { min, max }) => {
                kv("effect.min", min.to_string());
                kv("effect.max", max.to_string());
            }
            _ => {}
        }
        for (name, v) in &self.fixed {
            kv(&format!("{FIXED_PREFIX}{name}"), v.to_string());
        }
        if let Some(d) = &self.data {
            match &d.teacher {
                TeacherParams::Fixed(v) => {
                    kv("teacher.params", "fixed".into());
                    kv("teacher.values", join(v));
                }
                TeacherParams::Random { lo, hi } => {
                    kv("teacher.params", "random".into());
                    kv("teacher.lo", lo.to_string());
                    kv("teacher.hi", hi.to_string());
                }
                TeacherParams::Piecewise { segment_seconds, lo, hi } => {
                    kv("teacher.params", "piecewise".into());
                    kv("teacher.segment_seconds", segment_seconds.to_string());
                    kv("teacher.lo", lo.to_string());
                    kv("teacher.hi", hi.to_string());
                }
            }
            kv("data.source", d.source.id().to_string());
            kv("data.count", d.count.to_string());
            kv("data.clip_seconds", d.clip_seconds.to_string());
            kv("data.loudness_dbfs", d.loudness_dbfs.to_string());
        }
        if let Some(dir) = &self.data_dir {
            kv("data.dir", dir.display().to_string());
        }
        kv("grad.estimator", self.grad.estimator.id().to_string());
        kv("grad.epsilon", self.grad.epsilon.to_string());
        let tr = &self.trainer;
        kv("trainer.batch_size", tr.batch_size.to_string());
        kv("trainer.lr", tr.lr.to_string());
        kv("trainer.beta1", tr.beta1.to_string());
        kv("trainer.beta2", tr.beta2.to_string());
        kv("trainer.adam_eps", tr.adam_eps.to_string());
        kv("trainer.max_epochs", tr.max_epochs.to_string());
        kv("trainer.steps_per_epoch", tr.steps_per_epoch.to_string());
        kv("trainer.patience", tr.patience.to_string());
        kv("loss.alpha_time", self.loss.alpha_time.to_string());
        kv("loss.alpha_freq", self.loss.alpha_freq.to_string());
        kv("loss.maxlag", self.loss.maxlag.to_string());
        kv("loss.log_floor", self.loss.log_floor.to_string());
        kv("loss.fft_size", self.loss.fft_size.to_string());
        kv("encoder.channels", join(&self.channels));
        kv("mel.window", self.mel.window.to_string());
        kv("mel.hop", self.mel.hop.to_string());
        kv("mel.n_mels", self.mel.n_mels.to_string());
        kv("mel.fmin", self.mel.fmin.to_string());
        kv("mel.log_offset", self.mel.log_offset.to_string());
        kv("render.smoothing", self.smoother.coefficient.to_string());
        kv("run.seed", self.seed.to_string());
        kv("run.workers", self.workers.to_string());
        if let Some(out) = &self.out {
            kv("run.out", out.display().to_string());
        }
        s
    }
}

fn join<T: ToString>(v: &[T]) -> String {
    v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",")
}
