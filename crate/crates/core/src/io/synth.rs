//! Deterministic synthetic source material.

use std::f64::consts::PI;

use rand::Rng as _;

use super::AudioClip;
use crate::error::{Error, Result};
use crate::rng::{self, Purpose, Rng};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SourceKind {
    Tones,
    Chirps,
    NoiseBursts,
    Plucks,
}

impl SourceKind {
    pub fn parse(s: &str) -> Result<Self> {
        Ok(match s {
            "tones" => SourceKind::Tones,
            "chirps" => SourceKind::Chirps,
            "noise-bursts" => SourceKind::NoiseBursts,
            "plucks" => SourceKind::Plucks,
            other => {
                return Err(Error::Config(format!(
                    "unknown source kind `{other}` (tones | chirps | noise-bursts | plucks)"
                )))
            }
        })
    }

    pub fn id(&self) -> &'static str {
        match self {
            SourceKind::Tones => "tones",
            SourceKind::Chirps => "chirps",
            SourceKind::NoiseBursts => "noise-bursts",
            SourceKind::Plucks => "plucks",
        }
    }
}

/// Amplitude of a pluck `t` seconds after its onset.
pub fn pluck_envelope(t: f64, decay: f64) -> f64 {
    if t < 0.0 {
        0.0
    } else {
        (-t / decay).exp()
    }
}

/// Exponential sweep from `f0` to `f1` Hz over the whole signal.
pub fn chirp(f0: f64, f1: f64, len: usize, sample_rate: f64) -> Vec<f64> {
    let total = len as f64 / sample_rate;
    let k = (f1 / f0).ln();
    (0..len)
        .map(|i| {
            let t = i as f64 / sample_rate;
            let phase = if k.abs() < 1e-12 {
                2.0 * PI * f0 * t
            } else {
                2.0 * PI * f0 * total / k * ((k * t / total).exp() - 1.0)
            };
            phase.sin()
        })
        .collect()
}

/// Instantaneous frequency of [`chirp`] at time `t`.
pub fn chirp_frequency(f0: f64, f1: f64, t: f64, total: f64) -> f64 {
    f0 * (f1 / f0).powf(t / total)
}

fn log_uniform(r: &mut Rng, lo: f64, hi: f64) -> f64 {
    (r.gen_range(lo.ln()..hi.ln())).exp()
}

fn plucks(r: &mut Rng, len: usize, sr: f64) -> Vec<f64> {
    let nyquist_guard = 0.45 * sr;
    let mut out = vec![0.0; len];
    let mut onset = 0.0;
    let total = len as f64 / sr;
    while onset < total {
        let f0 = log_uniform(r, 82.0, 660.0);
        let decay = r.gen_range(0.15..0.8);
        let amp = r.gen_range(0.3..1.0);
        let start = (onset * sr) as usize;
        let end = len.min(start + (decay * 8.0 * sr) as usize);
        let partials: Vec<(f64, f64, f64, f64)> = (1..=12)
            .map(|k| k as f64)
            .filter(|k| k * f0 < nyquist_guard)
            .map(|k| (k * f0, amp / k.powf(1.2), decay / (1.0 + 0.3 * (k - 1.0)), r.gen_range(0.0..2.0 * PI)))
            .collect();
        for (i, o) in out[start..end].iter_mut().enumerate() {
            let t = i as f64 / sr;
            *o += partials
                .iter()
                .map(|&(f, a, d, p)| a * pluck_envelope(t, d) * (2.0 * PI * f * t + p).sin())
                .sum::<f64>();
        }
        onset += r.gen_range(0.4..1.2);
    }
    out
}

fn tones(r: &mut Rng, len: usize, sr: f64) -> Vec<f64> {
    let n = r.gen_range(1..=3);
    let parts: Vec<(f64, f64, f64, f64, f64)> = (0..n)
        .map(|_| {
            (
                log_uniform(r, 100.0, 4000.0),
                r.gen_range(0.2..0.6),
                r.gen_range(0.2..2.0),
                r.gen_range(0.0..2.0 * PI),
                r.gen_range(0.0..2.0 * PI),
            )
        })
        .collect();
    (0..len)
        .map(|i| {
            let t = i as f64 / sr;
            parts
                .iter()
                .map(|&(f, a, am, p, q)| a * (0.6 + 0.4 * (2.0 * PI * am * t + q).sin()) * (2.0 * PI * f * t + p).sin())
                .sum()
        })
        .collect()
}

fn chirps(r: &mut Rng, len: usize, sr: f64) -> Vec<f64> {
    let lo = r.gen_range(50.0..200.0);
    let hi = r.gen_range(4000.0..(9000.0f64).min(0.45 * sr));
    let (f0, f1) = if r.gen::<bool>() { (lo, hi) } else { (hi, lo) };
    let amp = r.gen_range(0.3..0.8);
    chirp(f0, f1, len, sr).into_iter().map(|s| amp * s).collect()
}

fn noise_bursts(r: &mut Rng, len: usize, sr: f64) -> Vec<f64> {
    let mut out = vec![0.0; len];
    let mut pos = (r.gen_range(0.0..0.2) * sr) as usize;
    while pos < len {
        let burst = (r.gen_range(0.05..0.5) * sr) as usize;
        let amp = r.gen_range(0.1..0.8);
        let coeff: f64 = r.gen_range(0.0..0.9);
        let mut state = 0.0;
        for o in out[pos..len.min(pos + burst)].iter_mut() {
            state = coeff * state + (1.0 - coeff) * r.gen_range(-1.0..1.0);
            *o = amp * state / (1.0 - coeff).sqrt().max(0.3);
        }
        pos += burst + (r.gen_range(0.05..0.5) * sr) as usize;
    }
    out
}

/// `count` clips of `len` samples each, fully determined by `seed`.
pub fn synth_sources(kind: SourceKind, count: usize, len: usize, sample_rate: f64, seed: u64) -> Result<Vec<AudioClip>> {
    if count == 0 || len == 0 {
        return Err(Error::Config("source synthesis needs a positive count and length".into()));
    }
    (0..count)
        .map(|i| {
            let mut r = rng::stream(seed, Purpose::Synthesis, &[kind as u64, i as u64]);
            let samples = match kind {
                SourceKind::Plucks => plucks(&mut r, len, sample_rate),
                SourceKind::Tones => tones(&mut r, len, sample_rate),
                SourceKind::Chirps => chirps(&mut r, len, sample_rate),
                SourceKind::NoiseBursts => noise_bursts(&mut r, len, sample_rate),
            };
            AudioClip::new(format!("{}-{i:04}", kind.id()), samples, sample_rate)
        })
        .collect()
}
