//! Opaque, stateful effect interface.
//!
//! Everything outside `effects` talks to a processor only through
//! [`process`] and [`BlackboxFx::reset`]. Parameters cross the boundary in
//! normalized form ([`ParamVector`], every value in `[0, 1]`); each effect
//! maps them onto physical ranges with its own [`ParamSpecSet`].

mod params;
pub mod probe;
mod registry;

use crate::error::{Error, Result};

pub use params::{Mapping, ParamSpec, ParamSpecSet, ParamVector};
pub use registry::{CountingFactory, InstanceCounter};

pub const DEFAULT_FRAME_SIZE: usize = 1024;
pub const DEFAULT_CONTEXT_SIZE: usize = 40960;
pub const DEFAULT_SAMPLE_RATE: f64 = 22050.0;

/// A fixed-size block of mono samples.
#[derive(Debug, Clone, PartialEq)]
pub struct AudioFrame {
    samples: Vec<f64>,
    sample_rate: f64,
}

impl AudioFrame {
    pub fn new(samples: Vec<f64>, sample_rate: f64) -> Result<Self> {
        if let Some(i) = samples.iter().position(|s| !s.is_finite()) {
            return Err(Error::Contract(format!("non-finite sample at index {i}")));
        }
        Ok(Self {
            samples,
            sample_rate,
        })
    }

    pub fn zeros(len: usize, sample_rate: f64) -> Self {
        Self {
            samples: vec![0.0; len],
            sample_rate,
        }
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn sample_rate(&self) -> f64 {
        self.sample_rate
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn into_samples(self) -> Vec<f64> {
        self.samples
    }
}

/// A larger window with the current frame at its center.
#[derive(Debug, Clone, PartialEq)]
pub struct ContextFrame {
    samples: Vec<f64>,
    sample_rate: f64,
}

impl ContextFrame {
    /// Cuts a `context_len` window centered on `signal[offset..offset + frame_len]`,
    /// zero-padding wherever the window leaves the signal.
    pub fn centered(
        signal: &[f64],
        offset: usize,
        frame_len: usize,
        context_len: usize,
        sample_rate: f64,
    ) -> Result<Self> {
        if frame_len == 0 || context_len % frame_len != 0 {
            return Err(Error::Contract(format!(
                "context length {context_len} is not a multiple of frame length {frame_len}"
            )));
        }
        let mut samples = vec![0.0; context_len];
        let start = offset as i64 - ((context_len - frame_len) / 2) as i64;
        for (k, s) in samples.iter_mut().enumerate() {
            let idx = start + k as i64;
            if idx >= 0 && (idx as usize) < signal.len() {
                *s = signal[idx as usize];
            }
        }
        Ok(Self {
            samples,
            sample_rate,
        })
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn sample_rate(&self) -> f64 {
        self.sample_rate
    }

    /// The central `frame_len` samples.
    pub fn center(&self, frame_len: usize) -> &[f64] {
        let start = (self.samples.len() - frame_len) / 2;
        &self.samples[start..start + frame_len]
    }
}

/// A stateful processor reachable only through its block interface.
///
/// Implementations must be deterministic given (state, input, params). An
/// instance is driven by one caller at a time; distinct instances are
/// independent and may live on different threads.
pub trait BlackboxFx: Send {
    fn param_specs(&self) -> &ParamSpecSet;

    /// Internal block size. Must divide the frame size.
    fn block_size(&self) -> usize {
        1
    }

    /// Reported latency in samples, for diagnostics.
    fn latency(&self) -> usize {
        0
    }

    /// Processes one block. `input` and `output` have equal length, a
    /// multiple of `block_size`; `params` has already been validated.
    fn process_block(&mut self, input: &[f64], params: &ParamVector, output: &mut [f64]);

    /// Restores the freshly-constructed state.
    fn reset(&mut self);
}

impl BlackboxFx for Box<dyn BlackboxFx> {
    fn param_specs(&self) -> &ParamSpecSet {
        (**self).param_specs()
    }
    fn block_size(&self) -> usize {
        (**self).block_size()
    }
    fn latency(&self) -> usize {
        (**self).latency()
    }
    fn process_block(&mut self, input: &[f64], params: &ParamVector, output: &mut [f64]) {
        (**self).process_block(input, params, output)
    }
    fn reset(&mut self) {
        (**self).reset()
    }
}

/// Builds fresh instances of one effect configuration.
pub trait FxFactory: Send + Sync {
    fn build(&self) -> Box<dyn BlackboxFx>;
}

impl<F> FxFactory for F
where
    F: Fn() -> Box<dyn BlackboxFx> + Send + Sync,
{
    fn build(&self) -> Box<dyn BlackboxFx> {
        self()
    }
}

/// Runs `input` through `fx` with parameters held for the whole slice,
/// writing into `output`. The state advances by exactly `input.len()` samples.
pub fn process_into(
    fx: &mut dyn BlackboxFx,
    input: &[f64],
    params: &ParamVector,
    output: &mut [f64],
) -> Result<()> {
    let p = fx.param_specs().len();
    if params.len() != p {
        return Err(Error::Contract(format!(
            "effect expects {p} parameters, got {}",
            params.len()
        )));
    }
    if input.len() != output.len() {
        return Err(Error::Contract(format!(
            "input length {} differs from output length {}",
            input.len(),
            output.len()
        )));
    }
    let block = fx.block_size().max(1);
    if input.len() % block != 0 {
        return Err(Error::Contract(format!(
            "block size {block} does not divide frame length {}",
            input.len()
        )));
    }
    if let Some(i) = input.iter().position(|s| !s.is_finite()) {
        return Err(Error::Contract(format!("non-finite input sample at index {i}")));
    }
    for (inp, out) in input.chunks(block).zip(output.chunks_mut(block)) {
        fx.process_block(inp, params, out);
    }
    Ok(())
}

/// `ȳ = f(x, θ)` for one frame.
pub fn process(fx: &mut dyn BlackboxFx, x: &AudioFrame, params: &ParamVector) -> Result<AudioFrame> {
    let mut out = vec![0.0; x.len()];
    process_into(fx, x.samples(), params, &mut out)?;
    Ok(AudioFrame {
        samples: out,
        sample_rate: x.sample_rate(),
    })
}

/// Runs a whole signal through `fx` as consecutive `frame_len` frames, frame
/// `k` using `params(k)`. A final partial frame is zero-padded and the output
/// trimmed back to the input length.
pub fn process_frames(
    fx: &mut dyn BlackboxFx,
    signal: &[f64],
    frame_len: usize,
    mut params: impl FnMut(usize) -> Result<ParamVector>,
) -> Result<Vec<f64>> {
    if frame_len == 0 {
        return Err(Error::Contract("frame length must be positive".into()));
    }
    let frames = signal.len().div_ceil(frame_len);
    let mut out = vec![0.0; frames * frame_len];
    let mut frame = vec![0.0; frame_len];
    for k in 0..frames {
        let src = &signal[k * frame_len..signal.len().min((k + 1) * frame_len)];
        frame[..src.len()].copy_from_slice(src);
        frame[src.len()..].fill(0.0);
        let p = params(k)?;
        process_into(fx, &frame, &p, &mut out[k * frame_len..(k + 1) * frame_len])?;
    }
    out.truncate(signal.len());
    Ok(out)
}

/// Nominal, plus and minus instances of one configuration. All three see
/// the same input history; only their parameters differ per call.
pub struct ReplicaSet {
    nominal: Box<dyn BlackboxFx>,
    plus: Box<dyn BlackboxFx>,
    minus: Box<dyn BlackboxFx>,
}

impl ReplicaSet {
    pub fn new(factory: &dyn FxFactory) -> Self {
        Self {
            nominal: factory.build(),
            plus: factory.build(),
            minus: factory.build(),
        }
    }

    pub fn param_count(&self) -> usize {
        self.nominal.param_specs().len()
    }

    pub fn param_specs(&self) -> &ParamSpecSet {
        self.nominal.param_specs()
    }

    pub fn nominal_mut(&mut self) -> &mut dyn BlackboxFx {
        self.nominal.as_mut()
    }

    /// Feeds the same `x` to all three replicas.
    pub fn process(
        &mut self,
        x: &[f64],
        nominal: &ParamVector,
        plus: &ParamVector,
        minus: &ParamVector,
    ) -> Result<(Vec<f64>, Vec<f64>, Vec<f64>)> {
        let y = self.process_nominal(x, nominal)?;
        let (yp, ym) = self.process_perturbed(x, plus, minus)?;
        Ok((y, yp, ym))
    }

    /// Nominal half of a training step; must be followed by
    /// [`ReplicaSet::process_perturbed`] on the same `x`.
    pub fn process_nominal(&mut self, x: &[f64], params: &ParamVector) -> Result<Vec<f64>> {
        let mut y = vec![0.0; x.len()];
        process_into(self.nominal.as_mut(), x, params, &mut y)?;
        Ok(y)
    }

    pub fn process_perturbed(
        &mut self,
        x: &[f64],
        plus: &ParamVector,
        minus: &ParamVector,
    ) -> Result<(Vec<f64>, Vec<f64>)> {
        let mut yp = vec![0.0; x.len()];
        let mut ym = vec![0.0; x.len()];
        process_into(self.plus.as_mut(), x, plus, &mut yp)?;
        process_into(self.minus.as_mut(), x, minus, &mut ym)?;
        Ok((yp, ym))
    }

    pub fn reset(&mut self) {
        self.nominal.reset();
        self.plus.reset();
        self.minus.reset();
    }
}

/// `2P + 1` instances for two-sided finite differences: one nominal and a
/// plus/minus pair per coordinate.
pub struct FdPool {
    nominal: Box<dyn BlackboxFx>,
    pairs: Vec<(Box<dyn BlackboxFx>, Box<dyn BlackboxFx>)>,
}

impl FdPool {
    pub fn new(factory: &dyn FxFactory) -> Self {
        let nominal = factory.build();
        let p = nominal.param_specs().len();
        let pairs = (0..p).map(|_| (factory.build(), factory.build())).collect();
        Self { nominal, pairs }
    }

    pub fn param_count(&self) -> usize {
        self.pairs.len()
    }

    pub fn param_specs(&self) -> &ParamSpecSet {
        self.nominal.param_specs()
    }

    pub fn instance_count(&self) -> usize {
        1 + 2 * self.pairs.len()
    }

    pub fn nominal_mut(&mut self) -> &mut dyn BlackboxFx {
        self.nominal.as_mut()
    }

    pub fn pair_mut(&mut self, i: usize) -> (&mut dyn BlackboxFx, &mut dyn BlackboxFx) {
        let (p, m) = &mut self.pairs[i];
        (p.as_mut(), m.as_mut())
    }

    pub fn reset(&mut self) {
        self.nominal.reset();
        for (p, m) in &mut self.pairs {
            p.reset();
            m.reset();
        }
    }
}
