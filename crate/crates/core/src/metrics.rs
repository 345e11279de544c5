//! MFCC cosine distance between two clips.

use crate::error::{Error, Result};
use crate::spectral::{dct2_ortho, hann_periodic, FftPlan, MelFilterbank};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MfccConfig {
    pub n_mfcc: usize,
    pub window: usize,
    pub hop: usize,
    pub n_mels: usize,
    pub fmin: f64,
    /// Power floor before the dB conversion.
    pub amin: f64,
}

impl Default for MfccConfig {
    fn default() -> Self {
        Self {
            n_mfcc: 13,
            window: 1024,
            hop: 256,
            n_mels: 128,
            fmin: 0.0,
            amin: 1e-10,
        }
    }
}

/// Frame-wise MFCC extractor: power spectrum → mel → dB → DCT-II.
#[derive(Clone)]
pub struct Mfcc {
    cfg: MfccConfig,
    plan: FftPlan,
    window: Vec<f64>,
    bank: MelFilterbank,
}

/// A clip's MFCC frames plus which frames were silent.
pub struct MfccFrames {
    pub coeffs: Vec<Vec<f64>>,
    pub silent: Vec<bool>,
}

impl Mfcc {
    pub fn new(cfg: MfccConfig, sample_rate: f64) -> Result<Self> {
        if cfg.n_mfcc == 0 || cfg.n_mfcc > cfg.n_mels || cfg.hop == 0 || cfg.window < 2 {
            return Err(Error::Config(format!("invalid MFCC configuration {cfg:?}")));
        }
        Ok(Self {
            plan: FftPlan::new(cfg.window),
            window: hann_periodic(cfg.window),
            bank: MelFilterbank::new(cfg.n_mels, cfg.window, sample_rate, cfg.fmin, sample_rate / 2.0),
            cfg,
        })
    }

    /// Frames start every `hop` samples; the signal is zero-padded up to at
    /// least one full window.
    pub fn frames(&self, x: &[f64]) -> MfccFrames {
        let w = self.cfg.window;
        let n = if x.len() <= w { 1 } else { (x.len() - w).div_ceil(self.cfg.hop) + 1 };
        let mut coeffs = Vec::with_capacity(n);
        let mut silent = Vec::with_capacity(n);
        let mut seg = vec![0.0; w];
        let mut mel = vec![0.0; self.cfg.n_mels];
        for f in 0..n {
            let start = f * self.cfg.hop;
            for (i, s) in seg.iter_mut().enumerate() {
                *s = x.get(start + i).copied().unwrap_or(0.0) * self.window[i];
            }
            let power = self.plan.power_spectrum(&seg);
            self.bank.apply(&power, &mut mel);
            silent.push(mel.iter().all(|&m| m <= self.cfg.amin));
            let db: Vec<f64> = mel.iter().map(|&m| 10.0 * m.max(self.cfg.amin).log10()).collect();
            coeffs.push(dct2_ortho(&db, self.cfg.n_mfcc));
        }
        MfccFrames { coeffs, silent }
    }

    /// Mean over frames of `1 − cos(mfcc_a, mfcc_b)`. The shorter clip is
    /// zero-padded; frames silent in both clips are skipped.
    pub fn distance(&self, a: &[f64], b: &[f64]) -> f64 {
        let n = a.len().max(b.len());
        let pad = |x: &[f64]| {
            let mut v = x.to_vec();
            v.resize(n, 0.0);
            v
        };
        let (fa, fb) = (self.frames(&pad(a)), self.frames(&pad(b)));
        let mut sum = 0.0;
        let mut count = 0usize;
        for i in 0..fa.coeffs.len() {
            if fa.silent[i] && fb.silent[i] {
                continue;
            }
            sum += 1.0 - cosine(&fa.coeffs[i], &fb.coeffs[i]);
            count += 1;
        }
        if count == 0 {
            0.0
        } else {
            sum / count as f64
        }
    }
}

fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        return if na == nb { 1.0 } else { 0.0 };
    }
    (dot / (na * nb)).clamp(-1.0, 1.0)
}

pub fn mfcc_distance(a: &[f64], b: &[f64], sample_rate: f64, cfg: MfccConfig) -> Result<f64> {
    Ok(Mfcc::new(cfg, sample_rate)?.distance(a, b))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::effects::biquad::{Biquad, Coefficients};
    use crate::rng::{self, Purpose};
    use rand::Rng as _;

    const SR: f64 = 22050.0;

    fn noise(n: usize, seed: u64) -> Vec<f64> {
        let mut r = rng::stream(seed, Purpose::Synthesis, &[]);
        (0..n).map(|_| r.gen_range(-0.5..0.5)).collect()
    }

    fn mfcc() -> Mfcc {
        Mfcc::new(MfccConfig::default(), SR).unwrap()
    }

    #[test]
    fn identical_and_symmetric() {
        let a = noise(8192, 1);
        let b = noise(8192, 2);
        let m = mfcc();
        assert!(m.distance(&a, &a).abs() < 1e-12);
        assert_eq!(m.distance(&a, &b), m.distance(&b, &a));
        assert!(m.distance(&a, &b) > 0.0);
    }

    #[test]
    fn scaling_barely_moves_the_distance() {
        // at the working loudness of -25 dBFS
        let raw = crate::io::AudioClip::new("n", noise(8192, 3), SR).unwrap();
        let a = crate::io::loudness_normalize(&raw, -25.0).unwrap().samples;
        let scaled: Vec<f64> = a.iter().map(|v| 0.9 * v).collect();
        let d = mfcc().distance(&a, &scaled);
        assert!(d > 0.0 && d < 0.01, "{d}");
    }

    #[test]
    fn ordering_light_filter_vs_inverted_spectrum() {
        let a = noise(8192, 4);
        let mut lp = Biquad::new(Coefficients::lowpass(9000.0, 0.707, SR));
        let light: Vec<f64> = a.iter().map(|&v| lp.tick(v)).collect();
        // tilt the spectrum the other way: aggressive highpass plus lowpass notch
        let mut hp = Biquad::new(Coefficients::highpass(4000.0, 0.707, SR));
        let mut hp2 = Biquad::new(Coefficients::highpass(4000.0, 0.707, SR));
        let inverted: Vec<f64> = a.iter().map(|&v| hp2.tick(hp.tick(v))).collect();
        let m = mfcc();
        assert!(m.distance(&a, &inverted) > m.distance(&a, &light));
    }

    #[test]
    fn silent_frames_are_skipped() {
        let mut a = vec![0.0; 8192];
        a[4096..].copy_from_slice(&noise(4096, 5));
        let m = mfcc();
        assert!(m.distance(&a, &a).abs() < 1e-12);
        assert_eq!(m.distance(&[0.0; 4096], &[0.0; 4096]), 0.0);
        let silent = m.frames(&a).silent;
        assert!(silent[0] && !silent[silent.len() - 1]);
        // the shorter clip is zero-padded
        assert!(m.distance(&a, &a[..6000]) > 0.0);
    }

    #[test]
    fn rejects_bad_config() {
        let cfg = MfccConfig {
            n_mfcc: 200,
            ..MfccConfig::default()
        };
        assert!(Mfcc::new(cfg, SR).is_err());
    }
}
