use std::f64::consts::{FRAC_1_SQRT_2, PI};

/// Normalized second-order section coefficients (`a0 = 1`).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Coefficients {
    pub b0: f64,
    pub b1: f64,
    pub b2: f64,
    pub a1: f64,
    pub a2: f64,
}

impl Coefficients {
    pub const IDENTITY: Coefficients = Coefficients {
        b0: 1.0,
        b1: 0.0,
        b2: 0.0,
        a1: 0.0,
        a2: 0.0,
    };

    fn from_raw(b0: f64, b1: f64, b2: f64, a0: f64, a1: f64, a2: f64) -> Self {
        Self {
            b0: b0 / a0,
            b1: b1 / a0,
            b2: b2 / a0,
            a1: a1 / a0,
            a2: a2 / a0,
        }
    }

    fn omega(freq: f64, sample_rate: f64) -> (f64, f64) {
        let w = 2.0 * PI * freq / sample_rate;
        (w.cos(), w.sin())
    }

    pub fn lowpass(freq: f64, q: f64, sample_rate: f64) -> Self {
        let (cos, sin) = Self::omega(freq, sample_rate);
        let alpha = sin / (2.0 * q);
        Self::from_raw(
            (1.0 - cos) / 2.0,
            1.0 - cos,
            (1.0 - cos) / 2.0,
            1.0 + alpha,
            -2.0 * cos,
            1.0 - alpha,
        )
    }

    pub fn highpass(freq: f64, q: f64, sample_rate: f64) -> Self {
        let (cos, sin) = Self::omega(freq, sample_rate);
        let alpha = sin / (2.0 * q);
        Self::from_raw(
            (1.0 + cos) / 2.0,
            -(1.0 + cos),
            (1.0 + cos) / 2.0,
            1.0 + alpha,
            -2.0 * cos,
            1.0 - alpha,
        )
    }

    pub fn allpass(freq: f64, q: f64, sample_rate: f64) -> Self {
        let (cos, sin) = Self::omega(freq, sample_rate);
        let alpha = sin / (2.0 * q);
        Self::from_raw(
            1.0 - alpha,
            -2.0 * cos,
            1.0 + alpha,
            1.0 + alpha,
            -2.0 * cos,
            1.0 - alpha,
        )
    }

    pub fn peaking(freq: f64, q: f64, gain_db: f64, sample_rate: f64) -> Self {
        if gain_db == 0.0 {
            return Self::IDENTITY;
        }
        let a = 10f64.powf(gain_db / 40.0);
        let (cos, sin) = Self::omega(freq, sample_rate);
        let alpha = sin / (2.0 * q);
        Self::from_raw(
            1.0 + alpha * a,
            -2.0 * cos,
            1.0 - alpha * a,
            1.0 + alpha / a,
            -2.0 * cos,
            1.0 - alpha / a,
        )
    }

    pub fn butterworth_lowpass(freq: f64, sample_rate: f64) -> Self {
        Self::lowpass(freq, FRAC_1_SQRT_2, sample_rate)
    }

    pub fn butterworth_highpass(freq: f64, sample_rate: f64) -> Self {
        Self::highpass(freq, FRAC_1_SQRT_2, sample_rate)
    }

    /// Complex response at `freq`, returned as (magnitude, phase).
    pub fn response(&self, freq: f64, sample_rate: f64) -> (f64, f64) {
        let w = 2.0 * PI * freq / sample_rate;
        let (c1, s1) = (w.cos(), w.sin());
        let (c2, s2) = ((2.0 * w).cos(), (2.0 * w).sin());
        let nr = self.b0 + self.b1 * c1 + self.b2 * c2;
        let ni = -(self.b1 * s1 + self.b2 * s2);
        let dr = 1.0 + self.a1 * c1 + self.a2 * c2;
        let di = -(self.a1 * s1 + self.a2 * s2);
        let mag = ((nr * nr + ni * ni) / (dr * dr + di * di)).sqrt();
        let phase = ni.atan2(nr) - di.atan2(dr);
        (mag, phase)
    }
}

/// Transposed direct form II section.
#[derive(Debug, Clone, Copy)]
pub struct Biquad {
    pub coeffs: Coefficients,
    s1: f64,
    s2: f64,
}

impl Biquad {
    pub fn new(coeffs: Coefficients) -> Self {
        Self {
            coeffs,
            s1: 0.0,
            s2: 0.0,
        }
    }

    #[inline]
    pub fn tick(&mut self, x: f64) -> f64 {
        let c = &self.coeffs;
        let y = c.b0 * x + self.s1;
        self.s1 = c.b1 * x - c.a1 * y + self.s2;
        self.s2 = c.b2 * x - c.a2 * y;
        y
    }

    pub fn reset(&mut self) {
        self.s1 = 0.0;
        self.s2 = 0.0;
    }

    /// Identity coefficients with drained memories: ticking is a no-op.
    pub fn is_transparent(&self) -> bool {
        self.coeffs == Coefficients::IDENTITY && self.s1 == 0.0 && self.s2 == 0.0
    }
}

impl Default for Biquad {
    fn default() -> Self {
        Self::new(Coefficients::IDENTITY)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lr4_pair_sums_to_allpass() {
        let sr = 22050.0;
        let fc = 1000.0;
        let lp = Coefficients::butterworth_lowpass(fc, sr);
        let hp = Coefficients::butterworth_highpass(fc, sr);
        let ap = Coefficients::allpass(fc, FRAC_1_SQRT_2, sr);
        for &f in &[50.0, 300.0, 999.0, 1000.0, 4000.0, 10000.0] {
            let (ml, pl) = lp.response(f, sr);
            let (mh, ph) = hp.response(f, sr);
            let (ma, pa) = ap.response(f, sr);
            // lowpass², highpass² summed as complex numbers
            let re = ml * ml * (2.0 * pl).cos() + mh * mh * (2.0 * ph).cos();
            let im = ml * ml * (2.0 * pl).sin() + mh * mh * (2.0 * ph).sin();
            assert!(((re * re + im * im).sqrt() - 1.0).abs() < 1e-9, "f={f}");
            assert!((ma - 1.0).abs() < 1e-12);
            let dphi = (im.atan2(re) - pa).rem_euclid(2.0 * PI);
            assert!(dphi.min(2.0 * PI - dphi) < 1e-9, "phase mismatch at {f}");
        }
    }

    #[test]
    fn peaking_hits_gain_at_center() {
        let sr = 22050.0;
        let c = Coefficients::peaking(1000.0, 4.3, 12.0, sr);
        let (m, _) = c.response(1000.0, sr);
        assert!((20.0 * m.log10() - 12.0).abs() < 1e-9);
        assert_eq!(Coefficients::peaking(1000.0, 4.3, 0.0, sr), Coefficients::IDENTITY);
    }
}
