//! Audio clips on disk and in memory: WAV files, loudness normalization,
//! synthetic sources and teacher-generated paired datasets.

pub mod dataset;
pub mod synth;
pub mod wav;

use crate::error::{Error, Result};

pub use dataset::{
    generate_teacher_pairs, ClipPair, Dataset, ManifestRow, Split, TeacherPair, TeacherParams, TeacherSpec,
    Trajectory,
};
pub use synth::{synth_sources, SourceKind};
pub use wav::SampleFormat;

/// A variable-length mono recording.
#[derive(Debug, Clone, PartialEq)]
pub struct AudioClip {
    pub id: String,
    pub samples: Vec<f64>,
    pub sample_rate: f64,
}

impl AudioClip {
    pub fn new(id: impl Into<String>, samples: Vec<f64>, sample_rate: f64) -> Result<Self> {
        if let Some(i) = samples.iter().position(|s| !s.is_finite()) {
            return Err(Error::Contract(format!("non-finite sample at index {i}")));
        }
        if !(sample_rate > 0.0) {
            return Err(Error::Domain(format!("sample rate {sample_rate} must be positive")));
        }
        Ok(Self {
            id: id.into(),
            samples,
            sample_rate,
        })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn seconds(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate
    }

    /// Samples rounded through `f32`, as a float WAV file stores them.
    pub fn quantized_f32(mut self) -> Self {
        for s in &mut self.samples {
            *s = *s as f32 as f64;
        }
        self
    }
}

/// RMS level in dB relative to a unit-amplitude constant (a full-scale
/// sine sits at −3.01 dBFS).
pub fn rms_dbfs(samples: &[f64]) -> f64 {
    let ms = samples.iter().map(|s| s * s).sum::<f64>() / samples.len().max(1) as f64;
    10.0 * ms.log10()
}

/// Scales `clip` so its RMS level equals `target_dbfs`.
pub fn loudness_normalize(clip: &AudioClip, target_dbfs: f64) -> Result<AudioClip> {
    let level = rms_dbfs(&clip.samples);
    if !level.is_finite() {
        return Err(Error::Domain(format!("clip `{}` is silent; loudness is undefined", clip.id)));
    }
    let gain = 10f64.powf((target_dbfs - level) / 20.0);
    Ok(AudioClip {
        samples: clip.samples.iter().map(|s| s * gain).collect(),
        ..clip.clone()
    })
}

#[cfg(test)]
mod tests;
