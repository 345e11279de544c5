//! Paired (input, target) datasets produced by hidden-parameter teachers,
//! and their on-disk manifest.
//!
//! A dataset directory holds `audio/*.wav`, `manifest.tsv` with one
//! `input<TAB>target<TAB>split` row per pair (paths relative to the
//! manifest), and `hidden_params.tsv` recording the teacher trajectories
//! for diagnostics. Training never reads the sidecar.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::Rng as _;

use super::wav::{self, SampleFormat};
use super::AudioClip;
use crate::effects::EffectSpec;
use crate::error::{Error, Result};
use crate::fx::{process_frames, FxFactory, ParamSpecSet, ParamVector};
use crate::rng::{self, Purpose};

pub const MANIFEST_FILE: &str = "manifest.tsv";
pub const HIDDEN_PARAMS_FILE: &str = "hidden_params.tsv";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub fn id(&self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "train" => Some(Split::Train),
            "val" => Some(Split::Val),
            "test" => Some(Split::Test),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClipPair {
    pub input: AudioClip,
    pub target: AudioClip,
}

impl ClipPair {
    pub fn new(input: AudioClip, target: AudioClip) -> Result<Self> {
        if input.len() != target.len() || input.sample_rate != target.sample_rate {
            return Err(Error::Contract(format!(
                "pair `{}`: input ({} samples @ {} Hz) and target ({} samples @ {} Hz) differ",
                input.id,
                input.len(),
                input.sample_rate,
                target.len(),
                target.sample_rate
            )));
        }
        Ok(Self { input, target })
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Dataset {
    pub pairs: Vec<ClipPair>,
}

impl Dataset {
    pub fn new(pairs: Vec<ClipPair>) -> Self {
        Self { pairs }
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn seconds(&self) -> f64 {
        self.pairs.iter().map(|p| p.input.seconds()).sum()
    }

    pub fn sample_rate(&self) -> Option<f64> {
        self.pairs.first().map(|p| p.input.sample_rate)
    }
}

/// How the hidden teacher parameters are chosen.
#[derive(Debug, Clone, PartialEq)]
pub enum TeacherParams {
    /// One fixed normalized vector for every clip.
    Fixed(Vec<f64>),
    /// One vector drawn uniformly from `[lo, hi]^P`, shared by every clip.
    Random { lo: f64, hi: f64 },
    /// Per-clip piecewise-linear trajectories with knots every
    /// `segment_seconds`, knot values uniform in `[lo, hi]`.
    Piecewise { segment_seconds: f64, lo: f64, hi: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct TeacherSpec {
    pub effect: EffectSpec,
    pub params: TeacherParams,
}

/// Per-frame hidden parameters of one clip.
#[derive(Debug, Clone, PartialEq)]
pub enum Trajectory {
    Constant(ParamVector),
    PiecewiseLinear {
        knots: Vec<ParamVector>,
        /// Frames between consecutive knots (may be fractional).
        segment_frames: f64,
    },
}

impl Trajectory {
    pub fn at(&self, frame: usize) -> ParamVector {
        match self {
            Trajectory::Constant(p) => p.clone(),
            Trajectory::PiecewiseLinear { knots, segment_frames } => {
                let u = frame as f64 / segment_frames;
                let j = (u.floor() as usize).min(knots.len() - 1);
                if j + 1 >= knots.len() {
                    return knots[knots.len() - 1].clone();
                }
                let f = u - j as f64;
                let v = knots[j]
                    .values()
                    .iter()
                    .zip(knots[j + 1].values())
                    .map(|(a, b)| ((1.0 - f) * a + f * b).clamp(0.0, 1.0))
                    .collect();
                ParamVector::new(v).expect("interpolated knots stay in [0, 1]")
            }
        }
    }

    /// Knot times in seconds and values, for the sidecar.
    pub fn knots(&self, frame_size: usize, sample_rate: f64) -> Vec<(f64, &ParamVector)> {
        match self {
            Trajectory::Constant(p) => vec![(0.0, p)],
            Trajectory::PiecewiseLinear { knots, segment_frames } => knots
                .iter()
                .enumerate()
                .map(|(j, k)| (j as f64 * segment_frames * frame_size as f64 / sample_rate, k))
                .collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TeacherPair {
    pub pair: ClipPair,
    pub trajectory: Trajectory,
}

fn check_range(lo: f64, hi: f64) -> Result<()> {
    if !(0.0 <= lo && lo <= hi && hi <= 1.0) {
        return Err(Error::Config(format!("teacher parameter range [{lo}, {hi}] must lie in [0, 1]")));
    }
    Ok(())
}

/// Applies the teacher to every source. Inputs are rounded through `f32`
/// first so targets match what a float WAV of the input would produce.
pub fn generate_teacher_pairs(
    sources: &[AudioClip],
    teacher: &TeacherSpec,
    frame_size: usize,
    seed: u64,
) -> Result<Vec<TeacherPair>> {
    if sources.is_empty() {
        return Err(Error::Config("teacher dataset needs at least one source clip".into()));
    }
    let factory = teacher.effect.factory()?;
    let p = factory.param_specs().len();
    let draw = |lo: f64, hi: f64, key: &[u64]| -> ParamVector {
        let mut r = rng::stream(seed, Purpose::Teacher, key);
        ParamVector::new((0..p).map(|_| r.gen_range(lo..=hi)).collect()).expect("range checked")
    };
    let shared = match &teacher.params {
        TeacherParams::Fixed(v) => {
            if v.len() != p {
                return Err(Error::Config(format!(
                    "teacher has {} hidden parameters, effect `{}` takes {p}",
                    v.len(),
                    teacher.effect.kind.id()
                )));
            }
            Some(ParamVector::new(v.clone()).map_err(|e| Error::Config(e.to_string()))?)
        }
        TeacherParams::Random { lo, hi } => {
            check_range(*lo, *hi)?;
            Some(draw(*lo, *hi, &[]))
        }
        TeacherParams::Piecewise { segment_seconds, lo, hi } => {
            check_range(*lo, *hi)?;
            if !(*segment_seconds > 0.0) {
                return Err(Error::Config("teacher segment length must be positive".into()));
            }
            None
        }
    };
    sources
        .iter()
        .enumerate()
        .map(|(i, src)| {
            if src.sample_rate != teacher.effect.sample_rate {
                return Err(Error::Config(format!(
                    "source `{}` is at {} Hz, teacher runs at {} Hz",
                    src.id, src.sample_rate, teacher.effect.sample_rate
                )));
            }
            let input = src.clone().quantized_f32();
            let trajectory = match (&shared, &teacher.params) {
                (Some(p), _) => Trajectory::Constant(p.clone()),
                (None, TeacherParams::Piecewise { segment_seconds, lo, hi }) => {
                    let segment_frames = segment_seconds * src.sample_rate / frame_size as f64;
                    let frames = src.len().div_ceil(frame_size);
                    let n_knots = (frames as f64 / segment_frames).ceil() as usize + 1;
                    Trajectory::PiecewiseLinear {
                        knots: (0..n_knots).map(|j| draw(*lo, *hi, &[i as u64, j as u64])).collect(),
                        segment_frames,
                    }
                }
                (None, _) => unreachable!("only piecewise teachers have per-clip trajectories"),
            };
            let mut fx = factory.build();
            let target = process_frames(fx.as_mut(), &input.samples, frame_size, |k| Ok(trajectory.at(k)))?;
            let target = AudioClip::new(format!("{}-target", src.id), target, src.sample_rate)?;
            Ok(TeacherPair {
                pair: ClipPair::new(input, target)?,
                trajectory,
            })
        })
        .collect()
}

/// 80/10/10 assignment by clip, shuffled deterministically. With three or
/// more clips every split gets at least one.
pub fn assign_splits(n: usize, seed: u64) -> Vec<Split> {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng::stream(seed, Purpose::Split, &[]));
    let mut n_val = (n as f64 * 0.1).round() as usize;
    let mut n_test = (n as f64 * 0.1).round() as usize;
    if n >= 3 {
        n_val = n_val.max(1);
        n_test = n_test.max(1);
    }
    let mut out = vec![Split::Train; n];
    for (rank, &i) in order.iter().enumerate() {
        if rank < n_val {
            out[i] = Split::Val;
        } else if rank < n_val + n_test {
            out[i] = Split::Test;
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct ManifestRow {
    pub input: PathBuf,
    pub target: PathBuf,
    pub split: Split,
}

/// Writes audio, manifest and hidden-parameter sidecar under `dir`.
pub fn write_dataset(
    dir: &Path,
    pairs: &[TeacherPair],
    splits: &[Split],
    specs: &ParamSpecSet,
    frame_size: usize,
) -> Result<PathBuf> {
    if pairs.len() != splits.len() {
        return Err(Error::Contract("one split label per pair required".into()));
    }
    let audio = dir.join("audio");
    fs::create_dir_all(&audio).map_err(|e| Error::io(&audio, e))?;
    let mut manifest = String::new();
    let mut hidden = String::from("clip\tknot\ttime_s");
    for s in specs {
        let _ = write!(hidden, "\t{}", s.name);
    }
    hidden.push('\n');
    for (tp, split) in pairs.iter().zip(splits) {
        let id = &tp.pair.input.id;
        let (inp, tgt) = (format!("audio/{id}_input.wav"), format!("audio/{id}_target.wav"));
        wav::write(&dir.join(&inp), &tp.pair.input, SampleFormat::Float32)?;
        wav::write(&dir.join(&tgt), &tp.pair.target, SampleFormat::Float32)?;
        let _ = writeln!(manifest, "{inp}\t{tgt}\t{}", split.id());
        for (j, (t, v)) in tp.trajectory.knots(frame_size, tp.pair.input.sample_rate).iter().enumerate() {
            let _ = write!(hidden, "{id}\t{j}\t{t}");
            for x in v.values() {
                let _ = write!(hidden, "\t{x}");
            }
            hidden.push('\n');
        }
    }
    let path = dir.join(MANIFEST_FILE);
    fs::write(&path, manifest).map_err(|e| Error::io(&path, e))?;
    let sidecar = dir.join(HIDDEN_PARAMS_FILE);
    fs::write(&sidecar, hidden).map_err(|e| Error::io(&sidecar, e))?;
    Ok(path)
}

pub fn parse_manifest(text: &str, base: &Path) -> Result<Vec<ManifestRow>> {
    let mut rows = Vec::new();
    let mut offset = 0usize;
    for line in text.split_inclusive('\n') {
        let at = offset;
        offset += line.len();
        let line = line.trim_end_matches(['\n', '\r']);
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        let err = |m: String| Error::Parse {
            offset: at as u64,
            message: m,
        };
        if fields.len() != 3 {
            return Err(err(format!("manifest row has {} fields, expected 3", fields.len())));
        }
        let split = Split::parse(fields[2]).ok_or_else(|| err(format!("unknown split `{}`", fields[2])))?;
        rows.push(ManifestRow {
            input: base.join(fields[0]),
            target: base.join(fields[1]),
            split,
        });
    }
    Ok(rows)
}

pub fn read_manifest(path: &Path) -> Result<Vec<ManifestRow>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_manifest(&text, path.parent().unwrap_or(Path::new(".")))
}

/// Loads every pair of one split.
pub fn load_split(rows: &[ManifestRow], split: Split) -> Result<Dataset> {
    let pairs = rows
        .iter()
        .filter(|r| r.split == split)
        .map(|r| ClipPair::new(wav::read(&r.input)?, wav::read(&r.target)?))
        .collect::<Result<Vec<_>>>()?;
    Ok(Dataset::new(pairs))
}

/// Convenience for in-memory use: splits teacher pairs into datasets.
pub fn partition(pairs: &[TeacherPair], splits: &[Split]) -> (Dataset, Dataset, Dataset) {
    let pick = |s: Split| {
        Dataset::new(
            pairs
                .iter()
                .zip(splits)
                .filter(|(_, &t)| t == s)
                .map(|(p, _)| p.pair.clone())
                .collect(),
        )
    };
    (pick(Split::Train), pick(Split::Val), pick(Split::Test))
}
