//! Multiband compressor and multiband noise gate.
//!
//! Both run `input gain → 4-band crossover → per-band peak detector and
//! static curve → band sum → output gain`.

use std::collections::BTreeMap;

use super::crossover::{CrossoverBank, BANDS, SPLITS};
use super::dynamics::{compressor_gain_db, db_to_amp, gate_gain_db, amp_to_db, EnvelopeFollower};
use super::layout::ParamLayout;
use super::EFFECT_BLOCK_SIZE;
use crate::error::Result;
use crate::fx::{BlackboxFx, ParamSpec, ParamSpecSet, ParamVector};

pub const THRESHOLD_RANGE_DB: (f64, f64) = (-60.0, 0.0);
pub const GAIN_RANGE_DB: (f64, f64) = (-24.0, 24.0);
pub const RATIO_RANGE: (f64, f64) = (1.0, 20.0);
pub const KNEE_RANGE_DB: (f64, f64) = (0.0, 12.0);
pub const REDUCTION_RANGE_DB: (f64, f64) = (-80.0, 0.0);
pub const SPLIT_RANGE_HZ: (f64, f64) = (40.0, 10000.0);

fn split_and_io_specs(out: &mut Vec<ParamSpec>) {
    for s in 1..=SPLITS {
        out.push(ParamSpec::log(
            &format!("split{s}"),
            "Hz",
            SPLIT_RANGE_HZ.0,
            SPLIT_RANGE_HZ.1,
        ));
    }
    out.push(ParamSpec::linear("input_gain", "dB", GAIN_RANGE_DB.0, GAIN_RANGE_DB.1));
    out.push(ParamSpec::linear("output_gain", "dB", GAIN_RANGE_DB.0, GAIN_RANGE_DB.1));
}

/// Physical parameter list of the compressor: per band threshold, makeup,
/// ratio and knee, then three splits and the input and output gains.
pub fn compressor_specs() -> Vec<ParamSpec> {
    let mut v = Vec::with_capacity(21);
    for b in 1..=BANDS {
        v.push(ParamSpec::linear(
            &format!("band{b}.threshold"),
            "dBFS",
            THRESHOLD_RANGE_DB.0,
            THRESHOLD_RANGE_DB.1,
        ));
        v.push(ParamSpec::linear(&format!("band{b}.makeup"), "dB", GAIN_RANGE_DB.0, GAIN_RANGE_DB.1));
        v.push(ParamSpec::linear(&format!("band{b}.ratio"), "", RATIO_RANGE.0, RATIO_RANGE.1));
        v.push(ParamSpec::linear(&format!("band{b}.knee"), "dB", KNEE_RANGE_DB.0, KNEE_RANGE_DB.1));
    }
    split_and_io_specs(&mut v);
    v
}

/// Physical parameter list of the gate: per band threshold, reduction and
/// ratio, then three splits and the input and output gains.
pub fn gate_specs() -> Vec<ParamSpec> {
    let mut v = Vec::with_capacity(17);
    for b in 1..=BANDS {
        v.push(ParamSpec::linear(
            &format!("band{b}.threshold"),
            "dBFS",
            THRESHOLD_RANGE_DB.0,
            THRESHOLD_RANGE_DB.1,
        ));
        v.push(ParamSpec::linear(
            &format!("band{b}.reduction"),
            "dB",
            REDUCTION_RANGE_DB.0,
            REDUCTION_RANGE_DB.1,
        ));
        v.push(ParamSpec::linear(&format!("band{b}.ratio"), "", RATIO_RANGE.0, RATIO_RANGE.1));
    }
    split_and_io_specs(&mut v);
    v
}

#[derive(Debug, Clone, Copy, Default)]
struct CompressorBand {
    threshold: f64,
    ratio: f64,
    knee: f64,
    makeup: f64,
    /// Detector level below which the curve is flat (lower knee edge).
    onset: f64,
}

#[derive(Debug, Clone)]
pub struct MultibandCompressor {
    layout: ParamLayout,
    xover: CrossoverBank,
    detectors: [EnvelopeFollower; BANDS],
    bands: [CompressorBand; BANDS],
    input_gain: f64,
    output_gain: f64,
    sample_rate: f64,
}

impl MultibandCompressor {
    pub fn new(sample_rate: f64, fixed: &BTreeMap<String, f64>) -> Result<Self> {
        Ok(Self {
            layout: ParamLayout::new(compressor_specs(), fixed)?,
            xover: CrossoverBank::new([100.0, 1000.0, 5000.0], sample_rate),
            detectors: std::array::from_fn(|_| EnvelopeFollower::detector(sample_rate)),
            bands: Default::default(),
            input_gain: 1.0,
            output_gain: 1.0,
            sample_rate,
        })
    }

    fn update(&mut self, params: &ParamVector) {
        if !self.layout.resolve(params) {
            return;
        }
        let p = self.layout.physical();
        for (b, band) in self.bands.iter_mut().enumerate() {
            let o = 4 * b;
            let (threshold, makeup, ratio, knee) = (p[o], p[o + 1], p[o + 2], p[o + 3]);
            *band = CompressorBand {
                threshold,
                ratio: ratio.max(1.0),
                knee: knee.max(0.0),
                makeup: db_to_amp(makeup),
                onset: db_to_amp(threshold - knee.max(0.0) / 2.0),
            };
        }
        let s = 4 * BANDS;
        self.xover.set_splits([p[s], p[s + 1], p[s + 2]]);
        self.input_gain = db_to_amp(p[s + 3]);
        self.output_gain = db_to_amp(p[s + 4]);
    }
}

impl BlackboxFx for MultibandCompressor {
    fn param_specs(&self) -> &ParamSpecSet {
        self.layout.specs()
    }

    fn block_size(&self) -> usize {
        EFFECT_BLOCK_SIZE
    }

    fn process_block(&mut self, input: &[f64], params: &ParamVector, output: &mut [f64]) {
        self.update(params);
        for (x, y) in input.iter().zip(output.iter_mut()) {
            let split = self.xover.split(x * self.input_gain);
            let mut acc = 0.0;
            for ((s, det), band) in split.iter().zip(&mut self.detectors).zip(&self.bands) {
                let env = det.tick(*s);
                let mut g = band.makeup;
                if env > band.onset {
                    g *= db_to_amp(compressor_gain_db(
                        amp_to_db(env),
                        band.threshold,
                        band.ratio,
                        band.knee,
                    ));
                }
                acc += s * g;
            }
            *y = acc * self.output_gain;
        }
    }

    fn reset(&mut self) {
        self.xover.reset();
        self.detectors = std::array::from_fn(|_| EnvelopeFollower::detector(self.sample_rate));
    }
}

#[derive(Debug, Clone, Copy, Default)]
struct GateBand {
    threshold: f64,
    threshold_amp: f64,
    ratio: f64,
    reduction: f64,
}

#[derive(Debug, Clone)]
pub struct MultibandGate {
    layout: ParamLayout,
    xover: CrossoverBank,
    detectors: [EnvelopeFollower; BANDS],
    bands: [GateBand; BANDS],
    input_gain: f64,
    output_gain: f64,
    sample_rate: f64,
}

impl MultibandGate {
    pub fn new(sample_rate: f64, fixed: &BTreeMap<String, f64>) -> Result<Self> {
        Ok(Self {
            layout: ParamLayout::new(gate_specs(), fixed)?,
            xover: CrossoverBank::new([100.0, 1000.0, 5000.0], sample_rate),
            detectors: std::array::from_fn(|_| EnvelopeFollower::detector(sample_rate)),
            bands: Default::default(),
            input_gain: 1.0,
            output_gain: 1.0,
            sample_rate,
        })
    }

    fn update(&mut self, params: &ParamVector) {
        if !self.layout.resolve(params) {
            return;
        }
        let p = self.layout.physical();
        for (b, band) in self.bands.iter_mut().enumerate() {
            let o = 3 * b;
            *band = GateBand {
                threshold: p[o],
                threshold_amp: db_to_amp(p[o]),
                reduction: p[o + 1],
                ratio: p[o + 2].max(1.0),
            };
        }
        let s = 3 * BANDS;
        self.xover.set_splits([p[s], p[s + 1], p[s + 2]]);
        self.input_gain = db_to_amp(p[s + 3]);
        self.output_gain = db_to_amp(p[s + 4]);
    }
}

impl BlackboxFx for MultibandGate {
    fn param_specs(&self) -> &ParamSpecSet {
        self.layout.specs()
    }

    fn block_size(&self) -> usize {
        EFFECT_BLOCK_SIZE
    }

    fn process_block(&mut self, input: &[f64], params: &ParamVector, output: &mut [f64]) {
        self.update(params);
        for (x, y) in input.iter().zip(output.iter_mut()) {
            let split = self.xover.split(x * self.input_gain);
            let mut acc = 0.0;
            for ((s, det), band) in split.iter().zip(&mut self.detectors).zip(&self.bands) {
                let env = det.tick(*s);
                let g = if env >= band.threshold_amp || band.reduction == 0.0 {
                    1.0
                } else {
                    db_to_amp(gate_gain_db(
                        amp_to_db(env),
                        band.threshold,
                        band.ratio,
                        band.reduction,
                    ))
                };
                acc += s * g;
            }
            *y = acc * self.output_gain;
        }
    }

    fn reset(&mut self) {
        self.xover.reset();
        self.detectors = std::array::from_fn(|_| EnvelopeFollower::detector(self.sample_rate));
    }
}
