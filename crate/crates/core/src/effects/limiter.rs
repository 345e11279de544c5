//! Peak limiter: a compressor with infinite ratio.
//!
//! The detector attacks instantly and releases over the fixed detector
//! time, so the smoothed level never sits below `|x|` and the output peak
//! never exceeds the threshold.

use std::collections::BTreeMap;

use super::dynamics::{db_to_amp, time_constant_coeff, DETECTOR_TIME_MS};
use super::layout::ParamLayout;
use super::multiband::THRESHOLD_RANGE_DB;
use super::EFFECT_BLOCK_SIZE;
use crate::error::Result;
use crate::fx::{BlackboxFx, ParamSpec, ParamSpecSet, ParamVector};

pub fn limiter_specs() -> Vec<ParamSpec> {
    vec![ParamSpec::linear(
        "threshold",
        "dBFS",
        THRESHOLD_RANGE_DB.0,
        THRESHOLD_RANGE_DB.1,
    )]
}

#[derive(Debug, Clone)]
pub struct Limiter {
    layout: ParamLayout,
    release: f64,
    envelope: f64,
    threshold: f64,
}

impl Limiter {
    pub fn new(sample_rate: f64, fixed: &BTreeMap<String, f64>) -> Result<Self> {
        Ok(Self {
            layout: ParamLayout::new(limiter_specs(), fixed)?,
            release: time_constant_coeff(DETECTOR_TIME_MS, sample_rate),
            envelope: 0.0,
            threshold: 1.0,
        })
    }
}

impl BlackboxFx for Limiter {
    fn param_specs(&self) -> &ParamSpecSet {
        self.layout.specs()
    }

    fn block_size(&self) -> usize {
        EFFECT_BLOCK_SIZE
    }

    fn process_block(&mut self, input: &[f64], params: &ParamVector, output: &mut [f64]) {
        if self.layout.resolve(params) {
            self.threshold = db_to_amp(self.layout.physical()[0]);
        }
        for (x, y) in input.iter().zip(output.iter_mut()) {
            let a = x.abs();
            let released = self.release * self.envelope + (1.0 - self.release) * a;
            self.envelope = a.max(released);
            *y = if self.envelope > self.threshold {
                x * (self.threshold / self.envelope)
            } else {
                *x
            };
        }
    }

    fn reset(&mut self) {
        self.envelope = 0.0;
    }
}
