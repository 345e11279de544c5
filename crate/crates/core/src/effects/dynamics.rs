//! Static gain curves and level detection shared by the dynamics effects.

use crate::error::{Error, Result};

/// Attack and release of every dynamics detector, in milliseconds.
pub const DETECTOR_TIME_MS: f64 = 10.0;

const LEVEL_FLOOR: f64 = 1e-12;

pub fn amp_to_db(a: f64) -> f64 {
    20.0 * a.max(LEVEL_FLOOR).log10()
}

pub fn db_to_amp(db: f64) -> f64 {
    10f64.powf(db / 20.0)
}

/// Soft-knee compressor: gain in dB applied at input level `level` dB.
pub fn compressor_static_gain(level: f64, threshold: f64, ratio: f64, knee: f64) -> Result<f64> {
    if !(ratio >= 1.0) {
        return Err(Error::Domain(format!("compressor ratio {ratio} < 1")));
    }
    if !(knee >= 0.0) {
        return Err(Error::Domain(format!("compressor knee {knee} < 0")));
    }
    Ok(compressor_gain_db(level, threshold, ratio, knee))
}

#[inline]
pub(crate) fn compressor_gain_db(level: f64, threshold: f64, ratio: f64, knee: f64) -> f64 {
    let over = level - threshold;
    let slope = 1.0 / ratio - 1.0;
    if knee > 0.0 && 2.0 * over.abs() <= knee {
        let t = over + knee / 2.0;
        slope * t * t / (2.0 * knee)
    } else if over > 0.0 {
        slope * over
    } else {
        0.0
    }
}

/// Downward expander: 0 dB at or above threshold, `(L − T)(ratio − 1)`
/// below it, never attenuating by more than `|reduction|`.
pub fn gate_static_gain(level: f64, threshold: f64, ratio: f64, reduction: f64) -> Result<f64> {
    if !(ratio >= 1.0) {
        return Err(Error::Domain(format!("gate ratio {ratio} < 1")));
    }
    Ok(gate_gain_db(level, threshold, ratio, reduction))
}

#[inline]
pub(crate) fn gate_gain_db(level: f64, threshold: f64, ratio: f64, reduction: f64) -> f64 {
    if level >= threshold {
        0.0
    } else {
        ((level - threshold) * (ratio - 1.0)).max(-reduction.abs())
    }
}

/// One-pole smoothing coefficient for a time constant in ms.
pub fn time_constant_coeff(ms: f64, sample_rate: f64) -> f64 {
    (-1.0 / (ms * sample_rate / 1000.0)).exp()
}

/// Peak detector: one-pole smoothing of `|x|`, using the attack
/// coefficient while the level rises and the release one while it falls.
#[derive(Debug, Clone)]
pub struct EnvelopeFollower {
    attack: f64,
    release: f64,
    level: f64,
}

impl EnvelopeFollower {
    pub fn new(attack_ms: f64, release_ms: f64, sample_rate: f64) -> Result<Self> {
        if !(attack_ms > 0.0) || !(release_ms > 0.0) {
            return Err(Error::Domain(format!(
                "attack {attack_ms} ms and release {release_ms} ms must be positive"
            )));
        }
        Ok(Self {
            attack: time_constant_coeff(attack_ms, sample_rate),
            release: time_constant_coeff(release_ms, sample_rate),
            level: 0.0,
        })
    }

    pub fn detector(sample_rate: f64) -> Self {
        Self::new(DETECTOR_TIME_MS, DETECTOR_TIME_MS, sample_rate).expect("positive times")
    }

    pub fn with_level(mut self, level: f64) -> Self {
        self.level = level.abs();
        self
    }

    pub fn level(&self) -> f64 {
        self.level
    }

    #[inline]
    pub fn tick(&mut self, x: f64) -> f64 {
        let a = x.abs();
        let c = if a > self.level { self.attack } else { self.release };
        self.level = c * self.level + (1.0 - c) * a;
        self.level
    }

    /// Per-sample envelope of a frame.
    pub fn follow(&mut self, x: &[f64]) -> Vec<f64> {
        x.iter().map(|&s| self.tick(s)).collect()
    }

    pub fn reset(&mut self) {
        self.level = 0.0;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn compressor_curve_examples() {
        assert_eq!(compressor_static_gain(-30.0, -20.0, 4.0, 0.0).unwrap(), 0.0);
        assert!((compressor_static_gain(-10.0, -20.0, 4.0, 0.0).unwrap() + 7.5).abs() < 1e-12);
        for r in [1.0, 2.0, 20.0] {
            assert_eq!(compressor_static_gain(-20.0, -20.0, r, 0.0).unwrap(), 0.0);
        }
        assert!(matches!(
            compressor_static_gain(0.0, -20.0, 0.5, 0.0),
            Err(Error::Domain(_))
        ));
    }

    #[test]
    fn compressor_curve_is_continuous_at_knee_edges() {
        for &(t, r, w) in &[(-20.0, 4.0, 6.0), (-40.0, 20.0, 12.0), (-5.0, 1.5, 0.5)] {
            let mut prev = compressor_gain_db(-100.0, t, r, w);
            let mut l = -100.0;
            while l <= 10.0 {
                let g = compressor_gain_db(l, t, r, w);
                // slope is bounded by |1/R − 1| < 1 dB per dB
                assert!((g - prev).abs() <= 0.01 + 1e-9, "jump at L={l}");
                prev = g;
                l += 0.01;
            }
        }
    }

    #[test]
    fn gate_curve_examples() {
        assert_eq!(gate_static_gain(-10.0, -40.0, 2.0, -80.0).unwrap(), 0.0);
        assert!((gate_static_gain(-60.0, -40.0, 2.0, -80.0).unwrap() + 20.0).abs() < 1e-12);
        assert!((gate_static_gain(-60.0, -40.0, 10.0, -30.0).unwrap() + 30.0).abs() < 1e-12);
        assert!(gate_static_gain(-60.0, -40.0, 0.9, -30.0).is_err());
    }

    #[test]
    fn envelope_fixed_point_and_step_response() {
        let sr = 22050.0;
        let mut env = EnvelopeFollower::new(10.0, 10.0, sr).unwrap().with_level(0.3);
        for v in env.follow(&[0.3; 64]) {
            assert!((v - 0.3).abs() < 1e-15);
        }
        let mut env = EnvelopeFollower::new(10.0, 10.0, sr).unwrap();
        let out = env.follow(&[1.0; 221]);
        // closed form: 1 − a^221 with a = exp(−1/220.5)
        let expected = 1.0 - (-221.0f64 / 220.5).exp();
        assert!((out[220] - expected).abs() < 1e-12);
        assert!((out[220] - 0.632).abs() < 2e-3);
    }

    proptest! {
        #[test]
        fn envelope_decays_monotonically_on_silence(start in 0.0f64..2.0, release in 1.0f64..200.0) {
            let mut env = EnvelopeFollower::new(10.0, release, 22050.0).unwrap().with_level(start);
            let out = env.follow(&[0.0; 512]);
            let mut prev = start;
            for v in out {
                prop_assert!(v <= prev && v >= 0.0);
                prev = v;
            }
        }
    }
}
