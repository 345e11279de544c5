//! FFT, window and mel filterbank helpers shared by the encoder front-end,
//! the spectral loss and the MFCC metric.

use std::f64::consts::PI;
use std::sync::Arc;

use realfft::{ComplexToReal, RealFftPlanner, RealToComplex};
use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

/// Periodic Hann window (the STFT convention).
pub fn hann_periodic(len: usize) -> Vec<f64> {
    (0..len)
        .map(|i| 0.5 - 0.5 * (2.0 * PI * i as f64 / len as f64).cos())
        .collect()
}

/// Symmetric Hann window, tapering to zero at both ends.
pub fn hann_symmetric(len: usize) -> Vec<f64> {
    if len == 1 {
        return vec![1.0];
    }
    (0..len)
        .map(|i| 0.5 - 0.5 * (2.0 * PI * i as f64 / (len - 1) as f64).cos())
        .collect()
}

/// A planned real-input FFT of fixed size: one-sided spectra with
/// `size / 2 + 1` bins.
#[derive(Clone)]
pub struct RealFftPlan {
    size: usize,
    forward: Arc<dyn RealToComplex<f64>>,
    inverse: Arc<dyn ComplexToReal<f64>>,
}

impl RealFftPlan {
    pub fn new(size: usize) -> Self {
        let mut planner = RealFftPlanner::new();
        Self {
            size,
            forward: planner.plan_fft_forward(size),
            inverse: planner.plan_fft_inverse(size),
        }
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn bins(&self) -> usize {
        self.size / 2 + 1
    }

    /// One-sided spectrum of `input` zero-padded to the plan size.
    pub fn forward(&self, input: &[f64]) -> Vec<Complex64> {
        let mut buf = vec![0.0; self.size];
        let n = input.len().min(self.size);
        buf[..n].copy_from_slice(&input[..n]);
        let mut out = self.forward.make_output_vec();
        self.forward.process(&mut buf, &mut out).expect("buffer lengths match the plan");
        out
    }

    /// Unnormalized inverse of a Hermitian one-sided spectrum. The imaginary
    /// parts of the DC and Nyquist bins are ignored.
    pub fn inverse(&self, spectrum: &mut [Complex64]) -> Vec<f64> {
        spectrum[0].im = 0.0;
        if self.size % 2 == 0 {
            spectrum[self.size / 2].im = 0.0;
        }
        let mut out = vec![0.0; self.size];
        self.inverse.process(spectrum, &mut out).expect("buffer lengths match the plan");
        out
    }
}

/// A planned complex FFT of fixed size, reusable across threads.
#[derive(Clone)]
pub struct FftPlan {
    size: usize,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

impl FftPlan {
    pub fn new(size: usize) -> Self {
        let mut planner = FftPlanner::new();
        Self {
            size,
            forward: planner.plan_fft_forward(size),
            inverse: planner.plan_fft_inverse(size),
        }
    }

    pub fn size(&self) -> usize {
        self.size
    }

    /// Forward transform of a real signal zero-padded (or truncated) to the
    /// plan size.
    pub fn forward_real(&self, input: &[f64]) -> Vec<Complex64> {
        let mut buf = vec![Complex64::new(0.0, 0.0); self.size];
        for (b, &x) in buf.iter_mut().zip(input) {
            b.re = x;
        }
        self.forward.process(&mut buf);
        buf
    }

    pub fn forward_in_place(&self, buf: &mut [Complex64]) {
        self.forward.process(buf);
    }

    /// Unnormalized inverse transform (`e^{+iωkn}` kernel).
    pub fn inverse_in_place(&self, buf: &mut [Complex64]) {
        self.inverse.process(buf);
    }

    /// One-sided power spectrum `|X_k|²`, `k = 0..=size/2`.
    pub fn power_spectrum(&self, input: &[f64]) -> Vec<f64> {
        let spec = self.forward_real(input);
        spec[..self.size / 2 + 1].iter().map(|c| c.norm_sqr()).collect()
    }
}

pub fn hz_to_mel(f: f64) -> f64 {
    2595.0 * (1.0 + f / 700.0).log10()
}

pub fn mel_to_hz(m: f64) -> f64 {
    700.0 * (10f64.powf(m / 2595.0) - 1.0)
}

/// Triangular mel filterbank as sparse rows of `(bin, weight)`, each
/// triangle scaled to unit area (`2 / (f_hi − f_lo)`).
#[derive(Debug, Clone)]
pub struct MelFilterbank {
    rows: Vec<Vec<(usize, f64)>>,
    centers: Vec<f64>,
}

impl MelFilterbank {
    pub fn new(n_mels: usize, n_fft: usize, sample_rate: f64, fmin: f64, fmax: f64) -> Self {
        let (mlo, mhi) = (hz_to_mel(fmin), hz_to_mel(fmax));
        let edges: Vec<f64> = (0..n_mels + 2)
            .map(|i| mel_to_hz(mlo + (mhi - mlo) * i as f64 / (n_mels + 1) as f64))
            .collect();
        let n_bins = n_fft / 2 + 1;
        let bin_hz = sample_rate / n_fft as f64;
        let rows = (0..n_mels)
            .map(|m| {
                let (lo, c, hi) = (edges[m], edges[m + 1], edges[m + 2]);
                let norm = 2.0 / (hi - lo);
                (0..n_bins)
                    .filter_map(|k| {
                        let f = k as f64 * bin_hz;
                        let w = if f > lo && f <= c {
                            (f - lo) / (c - lo)
                        } else if f > c && f < hi {
                            (hi - f) / (hi - c)
                        } else {
                            0.0
                        };
                        (w > 0.0).then_some((k, w * norm))
                    })
                    .collect()
            })
            .collect();
        Self {
            rows,
            centers: edges[1..=n_mels].to_vec(),
        }
    }

    pub fn n_mels(&self) -> usize {
        self.rows.len()
    }

    pub fn centers(&self) -> &[f64] {
        &self.centers
    }

    pub fn apply(&self, power: &[f64], out: &mut [f64]) {
        for (o, row) in out.iter_mut().zip(&self.rows) {
            *o = row.iter().map(|&(k, w)| w * power[k]).sum();
        }
    }
}

/// Orthonormal DCT-II of `input`, first `n_out` coefficients.
pub fn dct2_ortho(input: &[f64], n_out: usize) -> Vec<f64> {
    let n = input.len() as f64;
    (0..n_out)
        .map(|k| {
            let s: f64 = input
                .iter()
                .enumerate()
                .map(|(i, &x)| x * (PI * k as f64 * (2.0 * i as f64 + 1.0) / (2.0 * n)).cos())
                .sum();
            let scale = if k == 0 { (1.0 / n).sqrt() } else { (2.0 / n).sqrt() };
            s * scale
        })
        .collect()
}
