use crate::error::{Error, Result};
use crate::spectral::{hann_periodic, FftPlan, MelFilterbank};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MelConfig {
    pub window: usize,
    pub hop: usize,
    pub n_mels: usize,
    pub fmin: f64,
    /// `None` means Nyquist.
    pub fmax: Option<f64>,
    pub log_offset: f64,
}

impl Default for MelConfig {
    fn default() -> Self {
        Self {
            window: 1024,
            hop: 768,
            n_mels: 128,
            fmin: 20.0,
            fmax: None,
            log_offset: 1e-6,
        }
    }
}

impl MelConfig {
    pub fn frames_for(&self, context_len: usize) -> usize {
        if context_len < self.window {
            0
        } else {
            (context_len - self.window) / self.hop + 1
        }
    }
}

/// Log-mel energies, `frames × bands`, row-major by frame.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMap {
    frames: usize,
    bands: usize,
    data: Vec<f64>,
}

impl FeatureMap {
    pub fn new(frames: usize, bands: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != frames * bands || frames == 0 || bands == 0 {
            return Err(Error::Contract(format!(
                "feature map {frames}×{bands} cannot hold {} values",
                data.len()
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("feature map".into()));
        }
        Ok(Self { frames, bands, data })
    }

    pub fn frames(&self) -> usize {
        self.frames
    }

    pub fn bands(&self) -> usize {
        self.bands
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn at(&self, frame: usize, band: usize) -> f64 {
        self.data[frame * self.bands + band]
    }
}

/// Non-trainable log-mel front-end.
#[derive(Clone)]
pub struct MelFrontend {
    cfg: MelConfig,
    context_len: usize,
    plan: FftPlan,
    window: Vec<f64>,
    bank: MelFilterbank,
}

impl MelFrontend {
    pub fn new(cfg: MelConfig, context_len: usize, sample_rate: f64) -> Result<Self> {
        let nyquist = sample_rate / 2.0;
        let fmax = cfg.fmax.unwrap_or(nyquist);
        if cfg.window < 2 || cfg.hop == 0 || cfg.n_mels == 0 || cfg.window > context_len {
            return Err(Error::Config(format!(
                "mel front-end window {} / hop {} / bands {} invalid for context {context_len}",
                cfg.window, cfg.hop, cfg.n_mels
            )));
        }
        if !(cfg.fmin >= 0.0 && cfg.fmin < fmax && fmax <= nyquist) || cfg.log_offset <= 0.0 {
            return Err(Error::Config(format!(
                "mel range {}–{fmax} Hz or log offset {} invalid",
                cfg.fmin, cfg.log_offset
            )));
        }
        Ok(Self {
            plan: FftPlan::new(cfg.window),
            window: hann_periodic(cfg.window),
            bank: MelFilterbank::new(cfg.n_mels, cfg.window, sample_rate, cfg.fmin, fmax),
            cfg,
            context_len,
        })
    }

    pub fn config(&self) -> &MelConfig {
        &self.cfg
    }

    pub fn frames(&self) -> usize {
        self.cfg.frames_for(self.context_len)
    }

    pub fn bank(&self) -> &MelFilterbank {
        &self.bank
    }

    pub fn compute(&self, context: &[f64]) -> Result<FeatureMap> {
        if context.len() != self.context_len {
            return Err(Error::Contract(format!(
                "context has {} samples, front-end expects {}",
                context.len(),
                self.context_len
            )));
        }
        let (w, hop, bands) = (self.cfg.window, self.cfg.hop, self.cfg.n_mels);
        let frames = self.frames();
        let mut data = vec![0.0; frames * bands];
        let mut seg = vec![0.0; w];
        for (f, row) in data.chunks_exact_mut(bands).enumerate() {
            let src = &context[f * hop..f * hop + w];
            for ((s, x), win) in seg.iter_mut().zip(src).zip(&self.window) {
                *s = x * win;
            }
            let power = self.plan.power_spectrum(&seg);
            self.bank.apply(&power, row);
            for v in row.iter_mut() {
                *v = (*v + self.cfg.log_offset).ln();
            }
        }
        FeatureMap::new(frames, bands, data)
    }
}
