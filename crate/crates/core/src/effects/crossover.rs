//! Four-band Linkwitz-Riley (LR4) crossover.
//!
//! Band layout, with `LPn`/`HPn`/`APn` the LR4 low/high pair and the
//! matching second-order allpass at split `n`:
//!
//! ```text
//! b1 = AP3 · AP2 · LP1
//! b2 = AP3 · LP2 · HP1
//! b3 = LP3 · HP2 · HP1
//! b4 = HP3 · HP2 · HP1
//! ```
//!
//! so that `b1 + b2 + b3 + b4 = AP1 · AP2 · AP3 · x`: flat magnitude with
//! the group delay of three allpasses.

use std::f64::consts::FRAC_1_SQRT_2;

use super::biquad::{Biquad, Coefficients};

pub const BANDS: usize = 4;
pub const SPLITS: usize = 3;

/// Sorts split frequencies ascending; equal neighbours are pushed apart by 1 Hz.
pub fn order_splits(raw: [f64; SPLITS]) -> [f64; SPLITS] {
    let mut s = raw;
    s.sort_by(|a, b| a.total_cmp(b));
    for i in 1..SPLITS {
        if s[i] <= s[i - 1] {
            s[i] = s[i - 1] + 1.0;
        }
    }
    s
}

#[derive(Debug, Clone, Copy, Default)]
struct Lr4 {
    a: Biquad,
    b: Biquad,
}

impl Lr4 {
    fn set(&mut self, c: Coefficients) {
        self.a.coeffs = c;
        self.b.coeffs = c;
    }

    #[inline]
    fn tick(&mut self, x: f64) -> f64 {
        self.b.tick(self.a.tick(x))
    }

    fn reset(&mut self) {
        self.a.reset();
        self.b.reset();
    }
}

#[derive(Debug, Clone)]
pub struct CrossoverBank {
    sample_rate: f64,
    splits: [f64; SPLITS],
    lp: [Lr4; SPLITS],
    hp: [Lr4; SPLITS],
    // b1 compensation (AP2, AP3) and b2 compensation (AP3)
    ap_b1: [Biquad; 2],
    ap_b2: Biquad,
}

impl CrossoverBank {
    pub fn new(splits: [f64; SPLITS], sample_rate: f64) -> Self {
        let mut bank = Self {
            sample_rate,
            splits: [0.0; SPLITS],
            lp: Default::default(),
            hp: Default::default(),
            ap_b1: Default::default(),
            ap_b2: Default::default(),
        };
        bank.set_splits(splits);
        bank
    }

    pub fn splits(&self) -> [f64; SPLITS] {
        self.splits
    }

    /// Updates the split frequencies, keeping filter memories.
    pub fn set_splits(&mut self, raw: [f64; SPLITS]) {
        let splits = order_splits(raw);
        if splits == self.splits {
            return;
        }
        self.splits = splits;
        let sr = self.sample_rate;
        for (i, &f) in splits.iter().enumerate() {
            self.lp[i].set(Coefficients::butterworth_lowpass(f, sr));
            self.hp[i].set(Coefficients::butterworth_highpass(f, sr));
        }
        self.ap_b1[0].coeffs = Coefficients::allpass(splits[1], FRAC_1_SQRT_2, sr);
        self.ap_b1[1].coeffs = Coefficients::allpass(splits[2], FRAC_1_SQRT_2, sr);
        self.ap_b2.coeffs = Coefficients::allpass(splits[2], FRAC_1_SQRT_2, sr);
    }

    #[inline]
    pub fn split(&mut self, x: f64) -> [f64; BANDS] {
        let low1 = self.lp[0].tick(x);
        let high1 = self.hp[0].tick(x);
        let ap2 = self.ap_b1[0].tick(low1);
        let b1 = self.ap_b1[1].tick(ap2);
        let low2 = self.lp[1].tick(high1);
        let high2 = self.hp[1].tick(high1);
        let b2 = self.ap_b2.tick(low2);
        let b3 = self.lp[2].tick(high2);
        let b4 = self.hp[2].tick(high2);
        [b1, b2, b3, b4]
    }

    pub fn reset(&mut self) {
        for f in self.lp.iter_mut().chain(self.hp.iter_mut()) {
            f.reset();
        }
        for f in self.ap_b1.iter_mut() {
            f.reset();
        }
        self.ap_b2.reset();
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ordering_sorts_and_separates_ties() {
        assert_eq!(order_splits([5000.0, 200.0, 1000.0]), [200.0, 1000.0, 5000.0]);
        assert_eq!(order_splits([300.0, 300.0, 300.0]), [300.0, 301.0, 302.0]);
    }

    #[test]
    fn impulse_response_of_band_sum_is_allpass() {
        let sr = 22050.0;
        let mut bank = CrossoverBank::new([200.0, 1000.0, 5000.0], sr);
        let n = 8192;
        let h: Vec<f64> = (0..n)
            .map(|i| bank.split(if i == 0 { 1.0 } else { 0.0 }).iter().sum())
            .collect();
        // Parseval: an allpass impulse response has unit energy.
        let energy: f64 = h.iter().map(|v| v * v).sum();
        assert!((energy - 1.0).abs() < 1e-6, "energy {energy}");
    }
}
