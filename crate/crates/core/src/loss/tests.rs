use super::*;
use crate::rng::{self, Purpose};
use proptest::prelude::*;
use rand::Rng as _;
use std::f64::consts::PI;

fn noise(n: usize, seed: u64) -> Vec<f64> {
    let mut r = rng::stream(seed, Purpose::Synthesis, &[]);
    (0..n).map(|_| r.gen_range(-1.0..1.0)).collect()
}

/// A few low-frequency partials with random phases, `len` samples long.
fn smooth(len: usize, seed: u64) -> Vec<f64> {
    let mut r = rng::stream(seed, Purpose::Synthesis, &[1]);
    let partials: Vec<(f64, f64, f64)> = (0..5)
        .map(|_| (r.gen_range(0.002..0.05), r.gen_range(0.0..2.0 * PI), r.gen_range(0.1..0.5)))
        .collect();
    (0..len)
        .map(|t| partials.iter().map(|(f, p, a)| a * (2.0 * PI * f * t as f64 + p).sin()).sum())
        .collect()
}

fn default_loss() -> FrameLoss {
    FrameLoss::new(LossConfig::default()).unwrap()
}

#[test]
fn identity_alignment_and_zero_loss() {
    let y = smooth(1024, 1);
    let loss = default_loss();
    let b = loss.total_loss(&y, &y).unwrap();
    assert_eq!((b.alignment.tau, b.alignment.polarity), (0, 1));
    assert_eq!(b.total, 0.0);
    assert_eq!(b.output_spectrum.len(), 513);
}

#[test]
fn delayed_output_has_positive_lag() {
    let base = smooth(1100, 2);
    let y = base[10..1034].to_vec();
    let y_hat = base[5..1029].to_vec(); // ȳ[t + 5] = y[t]
    let a = default_loss().estimate_delay(&y_hat, &y).unwrap();
    assert_eq!((a.tau, a.polarity), (5, 1));
    let a = default_loss().estimate_delay(&y, &y_hat).unwrap();
    assert_eq!(a.tau, -5);
}

#[test]
fn inverted_output_is_free() {
    let y = noise(1024, 3);
    let y_hat: Vec<f64> = y.iter().map(|v| -v).collect();
    let b = default_loss().total_loss(&y_hat, &y).unwrap();
    assert_eq!((b.alignment.tau, b.alignment.polarity), (0, -1));
    assert!(b.total < 1e-6, "{}", b.total);
}

#[test]
fn silent_frames_use_identity_alignment() {
    let z = vec![0.0; 1024];
    let a = default_loss().estimate_delay(&z, &z).unwrap();
    assert_eq!((a.tau, a.polarity), (0, 1));
    let (l, _) = time_loss(&[0.1; 1024], &z, &a);
    assert!((l - 0.1).abs() < 1e-12);
}

#[test]
fn time_loss_examples() {
    let y = noise(64, 4);
    let a = DelayAlignment::identity(64);
    assert_eq!(time_loss(&y, &y, &a).0, 0.0);
    let neg: Vec<f64> = y.iter().map(|v| -v).collect();
    assert_eq!(time_loss(&neg, &y, &a).0, 0.0);
}

#[test]
fn half_scale_noise_matches_naive_dft() {
    let n = 1024;
    let y = noise(n, 5);
    let y_hat: Vec<f64> = y.iter().map(|v| 0.5 * v).collect();
    let loss = default_loss();
    let f = loss.freq_loss(&y_hat, &y);

    // independent oracle: naive DFT of the periodic-Hann-windowed target
    let mags: Vec<f64> = (0..=n / 2)
        .map(|k| {
            let (mut re, mut im) = (0.0, 0.0);
            for (t, v) in y.iter().enumerate() {
                let w = 0.5 - 0.5 * (2.0 * PI * t as f64 / n as f64).cos();
                let ph = -2.0 * PI * (k * t) as f64 / n as f64;
                re += v * w * ph.cos();
                im += v * w * ph.sin();
            }
            (re * re + im * im).sqrt()
        })
        .collect();
    let rms_half = (mags.iter().map(|m| 0.25 * m * m).sum::<f64>() / mags.len() as f64).sqrt();
    assert!(mags.iter().all(|&m| 0.5 * m > 1e-7));
    let expected = rms_half + 2f64.ln();
    assert!((f.value - expected).abs() < 1e-9, "{} vs {expected}", f.value);
}

fn max_rel_err(analytic: &[f64], fd: &[f64]) -> f64 {
    let scale = fd.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    analytic
        .iter()
        .zip(fd)
        .map(|(a, f)| (a - f).abs())
        .fold(0.0, f64::max)
        / scale
}

#[test]
fn gradient_matches_finite_differences() {
    let cfg = LossConfig {
        maxlag: 8,
        ..LossConfig::default()
    };
    let loss = FrameLoss::new(cfg).unwrap();
    for seed in 0..5 {
        let y = noise(64, 100 + seed);
        let y_hat: Vec<f64> = noise(64, 200 + seed)
            .iter()
            .zip(&y)
            .map(|(n, y)| 0.7 * y + 0.3 * n)
            .collect();
        let b = loss.total_loss(&y_hat, &y).unwrap();
        let h = 1e-6;
        let fd: Vec<f64> = (0..64)
            .map(|i| {
                let eval = |d: f64| {
                    let mut p = y_hat.clone();
                    p[i] += d;
                    // hold the alignment fixed, as the analytic gradient does
                    let (lt, _) = time_loss(&p, &y, &b.alignment);
                    let (ro, rt) = (b.alignment.output_region(), b.alignment.target_region());
                    let lf = loss.freq_loss(&p[ro], &y[rt]).value;
                    cfg.alpha_time * lt + cfg.alpha_freq * lf
                };
                (eval(h) - eval(-h)) / (2.0 * h)
            })
            .collect();
        let err = max_rel_err(&b.grad_output, &fd);
        assert!(err < 1e-4, "seed {seed}: {err}");
    }
}

#[test]
fn rejects_bad_frames() {
    let loss = default_loss();
    assert!(matches!(loss.total_loss(&[0.0; 8], &[0.0; 9]), Err(Error::Contract(_))));
    assert!(matches!(loss.total_loss(&[0.0; 400], &[0.0; 400]), Err(Error::Contract(_))));
    assert!(FrameLoss::new(LossConfig {
        fft_size: 1000,
        ..LossConfig::default()
    })
    .is_err());
}

#[test]
fn sparse_and_periodic_frames_match_direct_scan() {
    let loss = default_loss();
    let mut click = vec![0.0; 1024];
    click[1000] = 1e-3;
    let tone: Vec<f64> = (0..1024).map(|t| (2.0 * PI * t as f64 / 64.0).sin()).collect();
    let dc = vec![0.25; 1024];
    for (y_hat, y) in [(&click, &tone), (&tone, &click), (&tone, &tone), (&dc, &dc), (&dc, &tone)] {
        assert_eq!(loss.estimate_delay(y_hat, y).unwrap(), estimate_delay(y_hat, y, 256));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn fast_delay_matches_direct_scan(seed in any::<u64>(), mix in 0.0f64..1.0, k in -300isize..=300) {
        let base = smooth(1024 + 700, seed);
        let y = base[350..1374].to_vec();
        let start = (350 - k) as usize;
        let n = noise(1024, seed);
        let y_hat: Vec<f64> = base[start..start + 1024].iter().zip(&n).map(|(s, n)| (1.0 - mix) * s + mix * n).collect();
        prop_assert_eq!(default_loss().estimate_delay(&y_hat, &y).unwrap(), estimate_delay(&y_hat, &y, 256));
    }

    #[test]
    fn shift_invariance(seed in any::<u64>(), k in -256isize..=256) {
        let base = smooth(1024 + 600, seed);
        let y = base[300..1324].to_vec();
        let start = (300 - k) as usize;
        let y_hat = base[start..start + 1024].to_vec();
        let b = default_loss().total_loss(&y_hat, &y).unwrap();
        prop_assert_eq!(b.alignment.tau, k);
        prop_assert!(b.total < 1e-6);
    }

    #[test]
    fn zero_shifted_copy_is_aligned(seed in any::<u64>(), k in 1usize..=256) {
        let y = smooth(1024, seed);
        let mut y_hat = vec![0.0; 1024];
        y_hat[k..].copy_from_slice(&y[..1024 - k]);
        let b = default_loss().total_loss(&y_hat, &y).unwrap();
        prop_assert_eq!(b.alignment.tau, k as isize);
        prop_assert!(b.total < 1e-6);
    }

    #[test]
    fn nonnegative_and_polarity_invariant(seed in any::<u64>(), gain in 0.1f64..2.0) {
        let y = noise(1024, seed);
        let y_hat: Vec<f64> = smooth(1024, seed).iter().map(|v| v * gain).collect();
        let b = default_loss().total_loss(&y_hat, &y).unwrap();
        prop_assert!(b.total >= 0.0 && b.l_time >= 0.0 && b.l_freq >= 0.0);
        let neg: Vec<f64> = y.iter().map(|v| -v).collect();
        prop_assert!(default_loss().total_loss(&neg, &y).unwrap().total < 1e-6);
    }
}
