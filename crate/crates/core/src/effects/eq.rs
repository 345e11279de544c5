//! 32-band graphic equalizer: a cascade of fixed-frequency peaking filters.

use std::collections::BTreeMap;

use super::biquad::{Biquad, Coefficients};
use super::dynamics::db_to_amp;
use super::layout::ParamLayout;
use super::EFFECT_BLOCK_SIZE;
use crate::error::Result;
use crate::fx::{BlackboxFx, ParamSpec, ParamSpecSet, ParamVector};

pub const EQ_BANDS: usize = 32;
pub const EQ_Q: f64 = 4.3;
pub const EQ_LOWEST_HZ: f64 = 40.0;
pub const EQ_HIGHEST_HZ: f64 = 10240.0;
pub const EQ_GAIN_RANGE_DB: (f64, f64) = (-24.0, 24.0);

/// Log-spaced band centers from 40 Hz to 10.24 kHz.
pub fn eq_centers() -> [f64; EQ_BANDS] {
    let ratio = EQ_HIGHEST_HZ / EQ_LOWEST_HZ;
    std::array::from_fn(|i| EQ_LOWEST_HZ * ratio.powf(i as f64 / (EQ_BANDS - 1) as f64))
}

pub fn graphic_eq_specs() -> Vec<ParamSpec> {
    let mut v: Vec<ParamSpec> = (1..=EQ_BANDS)
        .map(|b| {
            ParamSpec::linear(
                &format!("band{b:02}.gain"),
                "dB",
                EQ_GAIN_RANGE_DB.0,
                EQ_GAIN_RANGE_DB.1,
            )
        })
        .collect();
    v.push(ParamSpec::linear("output_gain", "dB", EQ_GAIN_RANGE_DB.0, EQ_GAIN_RANGE_DB.1));
    v
}

#[derive(Debug, Clone)]
pub struct GraphicEq {
    layout: ParamLayout,
    centers: [f64; EQ_BANDS],
    filters: [Biquad; EQ_BANDS],
    output_gain: f64,
    sample_rate: f64,
}

impl GraphicEq {
    pub fn new(sample_rate: f64, fixed: &BTreeMap<String, f64>) -> Result<Self> {
        Ok(Self {
            layout: ParamLayout::new(graphic_eq_specs(), fixed)?,
            centers: eq_centers(),
            filters: [Biquad::default(); EQ_BANDS],
            output_gain: 1.0,
            sample_rate,
        })
    }

    fn update(&mut self, params: &ParamVector) {
        if !self.layout.resolve(params) {
            return;
        }
        let p = self.layout.physical();
        for ((f, &fc), &g) in self.filters.iter_mut().zip(&self.centers).zip(p) {
            f.coeffs = Coefficients::peaking(fc, EQ_Q, g, self.sample_rate);
        }
        self.output_gain = db_to_amp(p[EQ_BANDS]);
    }
}

impl BlackboxFx for GraphicEq {
    fn param_specs(&self) -> &ParamSpecSet {
        self.layout.specs()
    }

    fn block_size(&self) -> usize {
        EFFECT_BLOCK_SIZE
    }

    fn process_block(&mut self, input: &[f64], params: &ParamVector, output: &mut [f64]) {
        self.update(params);
        output.copy_from_slice(input);
        for f in self.filters.iter_mut() {
            if f.is_transparent() {
                continue;
            }
            for y in output.iter_mut() {
                *y = f.tick(*y);
            }
        }
        for y in output.iter_mut() {
            *y *= self.output_gain;
        }
    }

    fn reset(&mut self) {
        for f in self.filters.iter_mut() {
            f.reset();
        }
    }
}
