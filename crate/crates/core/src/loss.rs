//! Delay- and polarity-invariant frame loss with its analytic gradient.
//!
//! The output frame `ȳ` is first aligned to the target `y` by the lag that
//! maximizes the magnitude of their normalized cross-correlation. On the
//! overlapping region of length `L = N − |τ|`:
//!
//! * `L_time = min(mean|ȳ_τ − y_τ|, mean|ȳ_τ + y_τ|)`
//! * `L_freq = rms(|Ȳ_τ| − |Y_τ|) + rms(log max(|Ȳ_τ|, ε) − log max(|Y_τ|, ε))`
//!   over the one-sided bins of a Hann-windowed, zero-padded FFT
//! * `L = α_time · L_time + α_freq · L_freq`
//!
//! The lag and the min branch are constants for differentiation.
//!
//! Sign convention: `τ > 0` means the output lags the target, i.e.
//! `ȳ[t + τ] ≈ y[t]`.

use std::ops::Range;
use std::sync::{Arc, OnceLock};

use rustfft::num_complex::Complex64;

use crate::error::{Error, Result};
use crate::spectral::{hann_periodic, RealFftPlan};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossConfig {
    pub alpha_time: f64,
    pub alpha_freq: f64,
    pub maxlag: usize,
    pub log_floor: f64,
    pub fft_size: usize,
}

impl Default for LossConfig {
    fn default() -> Self {
        Self {
            alpha_time: 10.0,
            alpha_freq: 1.0,
            maxlag: 256,
            log_floor: 1e-7,
            fft_size: 1024,
        }
    }
}

impl LossConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = self.alpha_time >= 0.0
            && self.alpha_freq >= 0.0
            && self.alpha_time.is_finite()
            && self.alpha_freq.is_finite()
            && self.log_floor > 0.0
            && self.fft_size >= 2
            && self.fft_size.is_power_of_two();
        if !ok {
            return Err(Error::Config(format!("invalid loss configuration {self:?}")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DelayAlignment {
    pub tau: isize,
    pub polarity: i8,
    frame_len: usize,
}

impl DelayAlignment {
    pub fn identity(frame_len: usize) -> Self {
        Self {
            tau: 0,
            polarity: 1,
            frame_len,
        }
    }

    pub fn overlap_len(&self) -> usize {
        self.frame_len - self.tau.unsigned_abs()
    }

    /// Indices of the output frame inside the overlap.
    pub fn output_region(&self) -> Range<usize> {
        let l = self.overlap_len();
        if self.tau >= 0 {
            self.tau as usize..self.tau as usize + l
        } else {
            0..l
        }
    }

    /// Indices of the target frame inside the overlap.
    pub fn target_region(&self) -> Range<usize> {
        let l = self.overlap_len();
        if self.tau >= 0 {
            0..l
        } else {
            self.tau.unsigned_abs()..self.frame_len
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LossBreakdown {
    pub l_time: f64,
    pub l_freq: f64,
    pub total: f64,
    pub alignment: DelayAlignment,
    /// `∂total/∂ȳ`, one entry per output sample.
    pub grad_output: Vec<f64>,
    pub output_spectrum: Vec<f64>,
    pub target_spectrum: Vec<f64>,
}

/// Spectral half of the loss on already-aligned frames.
#[derive(Debug, Clone, PartialEq)]
pub struct FreqLoss {
    pub value: f64,
    pub grad: Vec<f64>,
    pub output_spectrum: Vec<f64>,
    pub target_spectrum: Vec<f64>,
}

/// Reusable loss evaluator holding a planned FFT.
#[derive(Clone)]
pub struct FrameLoss {
    cfg: LossConfig,
    plan: RealFftPlan,
    xcorr: RealFftPlan,
    /// Hann windows by overlap length, built on first use.
    windows: Arc<[OnceLock<Vec<f64>>]>,
}

impl FrameLoss {
    pub fn new(cfg: LossConfig) -> Result<Self> {
        cfg.validate()?;
        Ok(Self {
            plan: RealFftPlan::new(cfg.fft_size),
            // long enough that lags up to maxlag do not wrap
            xcorr: RealFftPlan::new(cfg.fft_size + cfg.maxlag),
            windows: (0..=cfg.fft_size).map(|_| OnceLock::new()).collect(),
            cfg,
        })
    }

    pub fn config(&self) -> &LossConfig {
        &self.cfg
    }

    fn window(&self, len: usize) -> &[f64] {
        self.windows[len].get_or_init(|| hann_periodic(len))
    }

    fn check_frames(&self, y_hat: &[f64], y: &[f64]) -> Result<()> {
        if y_hat.len() != y.len() || y.is_empty() {
            return Err(Error::Contract(format!(
                "loss frames differ in length ({} vs {})",
                y_hat.len(),
                y.len()
            )));
        }
        if 2 * self.cfg.maxlag >= y.len() {
            return Err(Error::Contract(format!(
                "maxlag {} must be below half the frame length {}",
                self.cfg.maxlag,
                y.len()
            )));
        }
        if y.len() > self.cfg.fft_size {
            return Err(Error::Contract(format!(
                "frame length {} exceeds the loss FFT size {}",
                y.len(),
                self.cfg.fft_size
            )));
        }
        if y_hat.iter().chain(y).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("loss input".into()));
        }
        Ok(())
    }

    /// Lag in `[−maxlag, maxlag]` maximizing `|⟨ȳ_τ, y_τ⟩| / (‖ȳ_τ‖‖y_τ‖)`.
    /// Lags are visited as 0, −1, +1, −2, … and only a strictly better
    /// score (beyond rounding) replaces the incumbent, so ties go to the
    /// smaller `|τ|` and then to the negative lag.
    ///
    /// An FFT cross-correlation shortlists the lags scoring within
    /// `1e-6` of the best; only those are rescored exactly, so the result
    /// matches the direct scan of [`estimate_delay`].
    pub fn estimate_delay(&self, y_hat: &[f64], y: &[f64]) -> Result<DelayAlignment> {
        self.check_frames(y_hat, y)?;
        let (eh, ey) = (prefix_energy(y_hat), prefix_energy(y));
        let m = self.xcorr.size();
        let mut a = self.xcorr.forward(y_hat);
        let b = self.xcorr.forward(y);
        for (a, b) in a.iter_mut().zip(&b) {
            *a *= b.conj();
        }
        let a = self.xcorr.inverse(&mut a);
        let maxlag = self.cfg.maxlag as isize;
        let inv_m = 1.0 / m as f64;
        // squared scores, so the shortlist test is on `(top − 1e-6)²`
        let approx: Vec<f64> = (-maxlag..=maxlag)
            .map(|tau| {
                let energy = overlap_energy(&eh, &ey, tau, y.len());
                if energy <= 0.0 {
                    return f64::NEG_INFINITY;
                }
                let c = a[if tau >= 0 { tau as usize } else { m - tau.unsigned_abs() }] * inv_m;
                c * c / energy
            })
            .collect();
        const SHORTLIST: f64 = 1e-6;
        let top = approx.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let cut = (top.max(0.0).sqrt() - SHORTLIST).max(0.0).powi(2);
        Ok(scan(y_hat, y, self.cfg.maxlag, &eh, &ey, |tau| {
            approx[(tau + maxlag) as usize] >= cut
        }))
    }

    pub fn time_loss(&self, y_hat: &[f64], y: &[f64], a: &DelayAlignment) -> (f64, Vec<f64>) {
        time_loss(y_hat, y, a)
    }

    /// Spectral loss of two equal-length aligned segments; the gradient is
    /// with respect to `y_hat_aligned`.
    pub fn freq_loss(&self, y_hat_aligned: &[f64], y_aligned: &[f64]) -> FreqLoss {
        let l = y_aligned.len();
        debug_assert_eq!(y_hat_aligned.len(), l);
        let window = self.window(l);
        let windowed = |s: &[f64]| -> Vec<f64> { s.iter().zip(window).map(|(s, w)| s * w).collect() };
        let m = self.plan.size();
        let bins = self.plan.bins();
        let ys_hat = self.plan.forward(&windowed(y_hat_aligned));
        let ys = self.plan.forward(&windowed(y_aligned));
        let mag_hat: Vec<f64> = ys_hat.iter().map(|c| c.norm_sqr().sqrt()).collect();
        let mag: Vec<f64> = ys.iter().map(|c| c.norm_sqr().sqrt()).collect();

        let floor = self.cfg.log_floor;
        let d_mag: Vec<f64> = mag_hat.iter().zip(&mag).map(|(a, b)| a - b).collect();
        let d_log: Vec<f64> = mag_hat
            .iter()
            .zip(&mag)
            .map(|(a, b)| (a.max(floor) / b.max(floor)).ln())
            .collect();
        let (r_mag, r_log) = (rms(&d_mag), rms(&d_log));

        // ∂L/∂|Ȳ_k|
        let k = bins as f64;
        let mut s = vec![Complex64::new(0.0, 0.0); bins];
        for i in 0..bins {
            let mut g = 0.0;
            if r_mag > 0.0 {
                g += d_mag[i] / (k * r_mag);
            }
            if r_log > 0.0 && mag_hat[i] > floor {
                g += d_log[i] / (k * r_log) / mag_hat[i];
            }
            if g != 0.0 && mag_hat[i] > 0.0 {
                s[i] = ys_hat[i] * (g / mag_hat[i]);
            }
        }
        // ∂|Y_k|/∂z_n = Re(Y_k e^{iωkn}) / |Y_k|, summed over the one-sided
        // bins. A Hermitian inverse doubles the interior bins, so they are
        // halved first.
        let interior = if m % 2 == 0 { 1..bins - 1 } else { 1..bins };
        for c in &mut s[interior] {
            *c *= 0.5;
        }
        let s = self.plan.inverse(&mut s);
        let grad = (0..l).map(|n| s[n] * window[n]).collect();
        FreqLoss {
            value: r_mag + r_log,
            grad,
            output_spectrum: mag_hat,
            target_spectrum: mag,
        }
    }

    pub fn total_loss(&self, y_hat: &[f64], y: &[f64]) -> Result<LossBreakdown> {
        let alignment = self.estimate_delay(y_hat, y)?;
        let (l_time, g_time) = time_loss(y_hat, y, &alignment);
        let (ro, rt) = (alignment.output_region(), alignment.target_region());
        let freq = self.freq_loss(&y_hat[ro.clone()], &y[rt]);
        let mut grad_output: Vec<f64> = g_time.iter().map(|g| self.cfg.alpha_time * g).collect();
        for (g, f) in grad_output[ro].iter_mut().zip(&freq.grad) {
            *g += self.cfg.alpha_freq * f;
        }
        let total = self.cfg.alpha_time * l_time + self.cfg.alpha_freq * freq.value;
        if !total.is_finite() || grad_output.iter().any(|g| !g.is_finite()) {
            return Err(Error::NonFinite("loss value or gradient".into()));
        }
        Ok(LossBreakdown {
            l_time,
            l_freq: freq.value,
            total,
            alignment,
            grad_output,
            output_spectrum: freq.output_spectrum,
            target_spectrum: freq.target_spectrum,
        })
    }
}

fn rms(d: &[f64]) -> f64 {
    (d.iter().map(|v| v * v).sum::<f64>() / d.len() as f64).sqrt()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(a, b)| a * b).sum()
}

fn prefix_energy(s: &[f64]) -> Vec<f64> {
    let mut p = Vec::with_capacity(s.len() + 1);
    p.push(0.0);
    let mut acc = 0.0;
    for v in s {
        acc += v * v;
        p.push(acc);
    }
    p
}

fn overlap_energy(eh: &[f64], ey: &[f64], tau: isize, n: usize) -> f64 {
    let a = DelayAlignment {
        tau,
        polarity: 1,
        frame_len: n,
    };
    let (ro, rt) = (a.output_region(), a.target_region());
    (eh[ro.end] - eh[ro.start]) * (ey[rt.end] - ey[rt.start])
}

/// Free-standing direct scan over every lag; see [`FrameLoss::estimate_delay`].
pub fn estimate_delay(y_hat: &[f64], y: &[f64], maxlag: usize) -> DelayAlignment {
    let (eh, ey) = (prefix_energy(y_hat), prefix_energy(y));
    scan(y_hat, y, maxlag, &eh, &ey, |_| true)
}

fn scan(y_hat: &[f64], y: &[f64], maxlag: usize, eh: &[f64], ey: &[f64], keep: impl Fn(isize) -> bool) -> DelayAlignment {
    let n = y.len();
    let mut best = DelayAlignment::identity(n);
    let mut best_score = 0.0;
    const TIE: f64 = 1e-12;
    for step in 0..=2 * maxlag {
        let tau = if step == 0 {
            0
        } else if step % 2 == 1 {
            -((step as isize + 1) / 2)
        } else {
            step as isize / 2
        };
        if !keep(tau) {
            continue;
        }
        let energy = overlap_energy(eh, ey, tau, n);
        if energy <= 0.0 {
            continue;
        }
        let a = DelayAlignment {
            tau,
            polarity: 1,
            frame_len: n,
        };
        let c = dot(&y_hat[a.output_region()], &y[a.target_region()]) / energy.sqrt();
        if c.abs() > best_score + TIE {
            best_score = c.abs();
            best = DelayAlignment {
                polarity: if c < 0.0 { -1 } else { 1 },
                ..a
            };
        }
    }
    best
}

/// Polarity-tolerant mean-L1 distance on the overlap, with its gradient
/// with respect to the full output frame.
pub fn time_loss(y_hat: &[f64], y: &[f64], a: &DelayAlignment) -> (f64, Vec<f64>) {
    let (ro, rt) = (a.output_region(), a.target_region());
    let (yh, yt) = (&y_hat[ro.clone()], &y[rt]);
    let l = yh.len() as f64;
    let minus: f64 = yh.iter().zip(yt).map(|(a, b)| (a - b).abs()).sum::<f64>() / l;
    let plus: f64 = yh.iter().zip(yt).map(|(a, b)| (a + b).abs()).sum::<f64>() / l;
    let sign_of = if plus < minus { 1.0 } else { -1.0 };
    let mut grad = vec![0.0; y_hat.len()];
    for (g, (a, b)) in grad[ro].iter_mut().zip(yh.iter().zip(yt)) {
        let d = a + sign_of * b;
        *g = if d > 0.0 {
            1.0 / l
        } else if d < 0.0 {
            -1.0 / l
        } else {
            0.0
        };
    }
    (minus.min(plus), grad)
}

#[cfg(test)]
mod tests;
