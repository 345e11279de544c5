//! Minibatch training over audio streams and offline rendering.

use std::sync::Arc;
use std::time::Instant;

use log::{debug, warn};
use rand::Rng as _;

use crate::encoder::{Encoder, EncoderConfig, FeatureMap, MelConfig, MelFrontend};
use crate::error::{Error, Result};
use crate::exec::Executor;
use crate::fx::{
    process_frames, process_into, ContextFrame, FxFactory, ParamSpecSet, ParamVector, DEFAULT_CONTEXT_SIZE,
    DEFAULT_FRAME_SIZE, DEFAULT_SAMPLE_RATE,
};
use crate::grad::{BlackboxLayer, PerturbationConfig};
use crate::io::{AudioClip, Dataset};
use crate::loss::{FrameLoss, LossConfig};
use crate::rng::{self, Purpose};

/// Frame size `N`, context size `C` and sample rate shared by every stage.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Geometry {
    pub frame_size: usize,
    pub context_size: usize,
    pub sample_rate: f64,
}

impl Default for Geometry {
    fn default() -> Self {
        Self {
            frame_size: DEFAULT_FRAME_SIZE,
            context_size: DEFAULT_CONTEXT_SIZE,
            sample_rate: DEFAULT_SAMPLE_RATE,
        }
    }
}

impl Geometry {
    pub fn validate(&self) -> Result<()> {
        if self.frame_size == 0 || self.context_size < self.frame_size || self.context_size % self.frame_size != 0 {
            return Err(Error::Config(format!(
                "context size {} must be a positive multiple of frame size {}",
                self.context_size, self.frame_size
            )));
        }
        if !(self.sample_rate > 0.0) {
            return Err(Error::Config(format!("sample rate {} must be positive", self.sample_rate)));
        }
        Ok(())
    }

    /// Number of frames covering `len` samples, the last one possibly partial.
    pub fn frames_for(&self, len: usize) -> usize {
        len.div_ceil(self.frame_size)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainerConfig {
    /// Batch slots `M`.
    pub batch_size: usize,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub adam_eps: f64,
    pub max_epochs: usize,
    pub steps_per_epoch: usize,
    /// Epochs without validation improvement before stopping.
    pub patience: usize,
    pub seed: u64,
}

impl Default for TrainerConfig {
    fn default() -> Self {
        Self {
            batch_size: 16,
            lr: 1e-4,
            beta1: 0.9,
            beta2: 0.999,
            adam_eps: 1e-8,
            max_epochs: 100,
            steps_per_epoch: 250,
            patience: 10,
            seed: 0,
        }
    }
}

impl TrainerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::Config("trainer.batch_size must be at least 1".into()));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::Config(format!("trainer.lr {} must be positive", self.lr)));
        }
        if !((0.0..1.0).contains(&self.beta1) && (0.0..1.0).contains(&self.beta2)) {
            return Err(Error::Config("Adam betas must lie in [0, 1)".into()));
        }
        if !(self.adam_eps > 0.0) {
            return Err(Error::Config("trainer.adam_eps must be positive".into()));
        }
        if self.max_epochs == 0 || self.steps_per_epoch == 0 || self.patience == 0 {
            return Err(Error::Config(
                "trainer.max_epochs, steps_per_epoch and patience must be at least 1".into(),
            ));
        }
        Ok(())
    }
}

/// One-pole lowpass applied to θ̂ trajectories at render time.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SmootherConfig {
    /// Fraction of the previous value retained per frame.
    pub coefficient: f64,
}

impl Default for SmootherConfig {
    fn default() -> Self {
        Self { coefficient: 0.9 }
    }
}

impl SmootherConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.coefficient) {
            return Err(Error::Config(format!(
                "smoothing coefficient {} must lie in [0, 1)",
                self.coefficient
            )));
        }
        Ok(())
    }
}

/// `s₀ = θ₀`, `s_k = s_{k−1} + (1 − c)(θ_k − s_{k−1})`.
pub fn smooth(raw: &[ParamVector], cfg: SmootherConfig) -> Result<Vec<ParamVector>> {
    cfg.validate()?;
    if cfg.coefficient == 0.0 {
        return Ok(raw.to_vec());
    }
    let mut out: Vec<ParamVector> = Vec::with_capacity(raw.len());
    let mut state: Option<Vec<f64>> = None;
    for theta in raw {
        let s = match state.as_mut() {
            None => theta.values().to_vec(),
            Some(s) => {
                for (v, t) in s.iter_mut().zip(theta.values()) {
                    *v += (1.0 - cfg.coefficient) * (t - *v);
                }
                s.clone()
            }
        };
        out.push(ParamVector::new(s.clone())?);
        state = Some(s);
    }
    Ok(out)
}

/// Front-end, encoder and black-box effect, checked for consistency.
#[derive(Clone)]
pub struct Model {
    pub geometry: Geometry,
    pub frontend: MelFrontend,
    pub encoder: Encoder,
    pub factory: Arc<dyn FxFactory>,
    specs: ParamSpecSet,
}

impl Model {
    pub fn new(geometry: Geometry, mel: MelConfig, encoder: Encoder, factory: Arc<dyn FxFactory>) -> Result<Self> {
        geometry.validate()?;
        let frontend = MelFrontend::new(mel, geometry.context_size, geometry.sample_rate)?;
        let ec = encoder.config();
        if ec.frames != frontend.frames() || ec.bands != mel.n_mels {
            return Err(Error::Config(format!(
                "encoder expects {}×{} features, front-end produces {}×{}",
                ec.frames,
                ec.bands,
                frontend.frames(),
                mel.n_mels
            )));
        }
        let specs = factory.build().param_specs().clone();
        if specs.len() != ec.params {
            return Err(Error::Config(format!(
                "encoder head emits {} parameters but the effect takes {}",
                ec.params,
                specs.len()
            )));
        }
        Ok(Self {
            geometry,
            frontend,
            encoder,
            factory,
            specs,
        })
    }

    /// A freshly initialized encoder sized for `factory`.
    pub fn init(
        geometry: Geometry,
        mel: MelConfig,
        channels: Vec<usize>,
        factory: Arc<dyn FxFactory>,
        seed: u64,
    ) -> Result<Self> {
        let p = factory.build().param_specs().len();
        let mut cfg = EncoderConfig::new(mel.frames_for(geometry.context_size), mel.n_mels, p);
        cfg.channels = channels;
        let encoder = Encoder::new(cfg, seed)?;
        Self::new(geometry, mel, encoder, factory)
    }

    pub fn param_specs(&self) -> &ParamSpecSet {
        &self.specs
    }

    fn features(&self, signal: &[f64], offset: usize) -> Result<FeatureMap> {
        let g = &self.geometry;
        let ctx = ContextFrame::centered(signal, offset, g.frame_size, g.context_size, g.sample_rate)?;
        self.frontend.compute(ctx.samples())
    }

    /// Evaluation-mode θ̂ for the frame starting at `offset`.
    pub fn predict(&self, signal: &[f64], offset: usize) -> Result<ParamVector> {
        ParamVector::new(self.encoder.infer(&self.features(signal, offset)?)?)
    }

    /// θ̂ for the first `frames` frames of `signal`.
    pub fn predict_frames(&self, signal: &[f64], frames: usize, exec: &Executor) -> Result<Vec<ParamVector>> {
        let offsets: Vec<usize> = (0..frames).map(|k| k * self.geometry.frame_size).collect();
        exec.try_map(&offsets, |_, &o| self.predict(signal, o))
    }

    fn check_rate(&self, clip: &AudioClip) -> Result<()> {
        if clip.sample_rate != self.geometry.sample_rate {
            return Err(Error::Config(format!(
                "clip `{}` is at {} Hz but the model runs at {} Hz",
                clip.id, clip.sample_rate, self.geometry.sample_rate
            )));
        }
        Ok(())
    }
}

/// Bias-corrected Adam over a flat weight vector.
#[derive(Debug, Clone, PartialEq)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    t: u64,
}

impl Adam {
    pub fn new(n: usize, lr: f64, beta1: f64, beta2: f64, eps: f64) -> Self {
        Self {
            lr,
            beta1,
            beta2,
            eps,
            m: vec![0.0; n],
            v: vec![0.0; n],
            t: 0,
        }
    }

    pub fn from_config(n: usize, cfg: &TrainerConfig) -> Self {
        Self::new(n, cfg.lr, cfg.beta1, cfg.beta2, cfg.adam_eps)
    }

    pub fn steps(&self) -> u64 {
        self.t
    }

    pub fn moments(&self) -> (&[f64], &[f64]) {
        (&self.m, &self.v)
    }

    pub fn update(&mut self, weights: &mut [f64], grads: &[f64]) -> Result<()> {
        if weights.len() != self.m.len() || grads.len() != self.m.len() {
            return Err(Error::Contract(format!(
                "Adam holds {} moments, got {} weights and {} gradients",
                self.m.len(),
                weights.len(),
                grads.len()
            )));
        }
        self.t += 1;
        let c1 = 1.0 - self.beta1.powf(self.t as f64);
        let c2 = 1.0 - self.beta2.powf(self.t as f64);
        for ((w, g), (m, v)) in weights.iter_mut().zip(grads).zip(self.m.iter_mut().zip(self.v.iter_mut())) {
            *m = self.beta1 * *m + (1.0 - self.beta1) * g;
            *v = self.beta2 * *v + (1.0 - self.beta2) * g * g;
            *w -= self.lr * (*m / c1) / ((*v / c2).sqrt() + self.eps);
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopDecision {
    Improved,
    Continue,
    Stop,
}

/// Stops after `patience` consecutive epochs without a new best.
#[derive(Debug, Clone, PartialEq)]
pub struct EarlyStopping {
    patience: usize,
    best: Option<(usize, f64)>,
    bad_epochs: usize,
}

impl EarlyStopping {
    pub fn new(patience: usize) -> Self {
        Self {
            patience,
            best: None,
            bad_epochs: 0,
        }
    }

    pub fn best(&self) -> Option<(usize, f64)> {
        self.best
    }

    pub fn observe(&mut self, epoch: usize, val: f64) -> StopDecision {
        match self.best {
            Some((_, b)) if !(val < b) => {
                self.bad_epochs += 1;
                if self.bad_epochs >= self.patience {
                    StopDecision::Stop
                } else {
                    StopDecision::Continue
                }
            }
            _ => {
                self.best = Some((epoch, val));
                self.bad_epochs = 0;
                StopDecision::Improved
            }
        }
    }
}

/// Where a slot reads from: clip index and the start of its next frame.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Cursor {
    pub clip: usize,
    pub offset: usize,
}

/// One lane of the minibatch: a clip cursor plus the effect instances that
/// have seen that clip's history.
pub struct BatchSlot {
    index: usize,
    cursor: Cursor,
    swaps: u64,
    layer: BlackboxLayer,
}

impl BatchSlot {
    pub fn cursor(&self) -> Cursor {
        self.cursor
    }

    pub fn swaps(&self) -> u64 {
        self.swaps
    }

    pub fn layer(&self) -> &BlackboxLayer {
        &self.layer
    }
}

/// What one slot computed during a step.
#[derive(Debug, Clone, PartialEq)]
pub struct SlotOutcome {
    pub cursor: Cursor,
    pub theta: Vec<f64>,
    pub output: Vec<f64>,
    pub total: f64,
    pub l_time: f64,
    pub l_freq: f64,
    pub finite: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepReport {
    pub step: u64,
    pub total: f64,
    pub l_time: f64,
    pub l_freq: f64,
    /// Set when a non-finite loss or gradient skipped the update.
    pub aborted: bool,
    pub slots: Vec<SlotOutcome>,
}

struct FrameTask {
    context: Vec<f64>,
    x: Vec<f64>,
    y: Vec<f64>,
}

struct SlotWork {
    outcome: SlotOutcome,
    grad: Option<Vec<f64>>,
}

pub struct Trainer {
    cfg: TrainerConfig,
    grad: PerturbationConfig,
    loss: FrameLoss,
    model: Model,
    data: Dataset,
    eligible: Vec<usize>,
    slots: Vec<BatchSlot>,
    adam: Adam,
    exec: Executor,
    step: u64,
}

impl Trainer {
    pub fn new(
        cfg: TrainerConfig,
        grad: PerturbationConfig,
        loss: LossConfig,
        model: Model,
        data: Dataset,
        exec: Executor,
    ) -> Result<Self> {
        cfg.validate()?;
        grad.validate()?;
        let loss = FrameLoss::new(loss)?;
        let n = model.geometry.frame_size;
        if data.is_empty() {
            return Err(Error::Config("training dataset is empty".into()));
        }
        let mut eligible = Vec::new();
        for (i, p) in data.pairs.iter().enumerate() {
            model.check_rate(&p.input)?;
            if p.input.len() < n {
                warn!("skipping clip `{}`: {} samples is shorter than one frame", p.input.id, p.input.len());
            } else {
                eligible.push(i);
            }
        }
        if eligible.is_empty() {
            return Err(Error::Config(format!("no training clip holds a full {n}-sample frame")));
        }
        if 2 * loss.config().maxlag >= n {
            return Err(Error::Config(format!(
                "loss.maxlag {} is too large for {n}-sample frames",
                loss.config().maxlag
            )));
        }
        let adam = Adam::from_config(model.encoder.num_weights(), &cfg);
        let mut t = Self {
            slots: Vec::with_capacity(cfg.batch_size),
            cfg,
            grad,
            loss,
            model,
            data,
            eligible,
            adam,
            exec,
            step: 0,
        };
        for index in 0..t.cfg.batch_size {
            let clip = t.pick_clip(index, 0);
            let layer = BlackboxLayer::new(t.grad.estimator, t.model.factory.as_ref());
            t.slots.push(BatchSlot {
                index,
                cursor: Cursor { clip, offset: 0 },
                swaps: 0,
                layer,
            });
        }
        Ok(t)
    }

    fn pick_clip(&self, slot: usize, swap: u64) -> usize {
        let mut r = rng::stream(self.cfg.seed, Purpose::ClipSwap, &[slot as u64, swap]);
        self.eligible[r.gen_range(0..self.eligible.len())]
    }

    pub fn config(&self) -> &TrainerConfig {
        &self.cfg
    }

    pub fn model(&self) -> &Model {
        &self.model
    }

    pub fn into_model(self) -> Model {
        self.model
    }

    pub fn slots(&self) -> &[BatchSlot] {
        &self.slots
    }

    pub fn steps_taken(&self) -> u64 {
        self.step
    }

    pub fn executor(&self) -> &Executor {
        &self.exec
    }

    fn schedule(&self) -> Vec<FrameTask> {
        let g = &self.model.geometry;
        let n = g.frame_size;
        self.slots
            .iter()
            .map(|s| {
                let pair = &self.data.pairs[s.cursor.clip];
                let o = s.cursor.offset;
                let ctx = ContextFrame::centered(&pair.input.samples, o, n, g.context_size, g.sample_rate)
                    .expect("geometry validated at construction");
                FrameTask {
                    context: ctx.samples().to_vec(),
                    x: pair.input.samples[o..o + n].to_vec(),
                    y: pair.target.samples[o..o + n].to_vec(),
                }
            })
            .collect()
    }

    fn advance(&mut self) {
        let n = self.model.geometry.frame_size;
        for i in 0..self.slots.len() {
            let next = self.slots[i].cursor.offset + n;
            if next + n <= self.data.pairs[self.slots[i].cursor.clip].input.len() {
                self.slots[i].cursor.offset = next;
                continue;
            }
            let swap = self.slots[i].swaps + 1;
            let clip = self.pick_clip(i, swap);
            let slot = &mut self.slots[i];
            slot.swaps = swap;
            slot.cursor = Cursor { clip, offset: 0 };
            slot.layer.reset();
        }
    }

    /// One forward/backward pass over all slots followed by an Adam update.
    pub fn train_step(&mut self) -> Result<StepReport> {
        let tasks = self.schedule();
        let feats = self.exec.try_map(&tasks, |_, t| self.model.frontend.compute(&t.context))?;
        let refs: Vec<&FeatureMap> = feats.iter().collect();
        let stats = self.model.encoder.batch_stats(&refs)?;

        let step = self.step;
        let encoder = &self.model.encoder;
        let loss = &self.loss;
        let grad_cfg = self.grad;
        let mut work: Vec<(&mut BatchSlot, &FrameTask, &FeatureMap)> = self
            .slots
            .iter_mut()
            .zip(&tasks)
            .zip(&feats)
            .map(|((s, t), f)| (s, t, f))
            .collect();
        let results = self.exec.try_map_mut(&mut work, |_, (slot, task, feat)| -> Result<SlotWork> {
            let cache = encoder.forward_with(feat, &stats)?;
            let theta = ParamVector::new(cache.theta().to_vec())?;
            let y_hat = slot.layer.forward(&task.x, &theta)?;
            let lb = match loss.total_loss(&y_hat, &task.y) {
                Ok(lb) => Some(lb),
                Err(Error::NonFinite(_)) => None,
                Err(e) => return Err(e),
            };
            // perturbed replicas must see this frame even when the update is dropped
            let v = match &lb {
                Some(lb) => lb.grad_output.clone(),
                None => vec![0.0; y_hat.len()],
            };
            let mut rng = grad_cfg.stream(slot.index, step);
            let g_theta = slot.layer.backward(&task.x, &theta, &v, grad_cfg.epsilon, &mut rng)?;
            let grad = match &lb {
                Some(_) => Some(encoder.backward(&cache, &g_theta)?).filter(|g| g.iter().all(|v| v.is_finite())),
                None => None,
            };
            let (total, l_time, l_freq) = lb.map_or((f64::NAN, f64::NAN, f64::NAN), |lb| (lb.total, lb.l_time, lb.l_freq));
            Ok(SlotWork {
                outcome: SlotOutcome {
                    cursor: slot.cursor,
                    theta: theta.into_inner(),
                    output: y_hat,
                    total,
                    l_time,
                    l_freq,
                    finite: grad.is_some(),
                },
                grad,
            })
        })?;
        drop(work);

        let m = results.len() as f64;
        let aborted = results.iter().any(|r| r.grad.is_none());
        let mut report = StepReport {
            step,
            total: results.iter().map(|r| r.outcome.total).sum::<f64>() / m,
            l_time: results.iter().map(|r| r.outcome.l_time).sum::<f64>() / m,
            l_freq: results.iter().map(|r| r.outcome.l_freq).sum::<f64>() / m,
            aborted,
            slots: Vec::with_capacity(results.len()),
        };
        if aborted {
            warn!("step {step}: non-finite loss or gradient, update skipped");
        } else {
            let mut mean = vec![0.0; self.model.encoder.num_weights()];
            for r in &results {
                for (a, g) in mean.iter_mut().zip(r.grad.as_deref().unwrap_or_default()) {
                    *a += g;
                }
            }
            for a in &mut mean {
                *a /= m;
            }
            self.adam.update(self.model.encoder.weights_mut(), &mean)?;
            self.model.encoder.update_running(&stats);
        }
        report.slots = results.into_iter().map(|r| r.outcome).collect();
        self.step += 1;
        self.advance();
        debug!("step {step}: loss {:.6}", report.total);
        Ok(report)
    }

    /// Mean per-frame loss over `val` with evaluation-mode normalization,
    /// raw θ̂ and a fresh effect instance per clip.
    pub fn validate(&self, val: &Dataset) -> Result<f64> {
        validation_loss(&self.model, &self.loss, val, &self.exec)
    }
}

/// See [`Trainer::validate`].
pub fn validation_loss(model: &Model, loss: &FrameLoss, val: &Dataset, exec: &Executor) -> Result<f64> {
    let n = model.geometry.frame_size;
    let mut sum = 0.0;
    let mut count = 0usize;
    for pair in &val.pairs {
        model.check_rate(&pair.input)?;
        let frames = pair.input.len() / n;
        if frames == 0 {
            continue;
        }
        let thetas = model.predict_frames(&pair.input.samples, frames, exec)?;
        let mut fx = model.factory.build();
        let mut y_hat = vec![0.0; n];
        for (k, theta) in thetas.iter().enumerate() {
            let r = k * n..(k + 1) * n;
            process_into(fx.as_mut(), &pair.input.samples[r.clone()], theta, &mut y_hat)?;
            sum += loss.total_loss(&y_hat, &pair.target.samples[r])?.total;
            count += 1;
        }
    }
    if count == 0 {
        return Err(Error::Config("validation split holds no full frame".into()));
    }
    Ok(sum / count as f64)
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpochRecord {
    /// 1-based.
    pub epoch: usize,
    pub train_total: f64,
    pub train_time: f64,
    pub train_freq: f64,
    pub val_total: f64,
    pub aborted_steps: usize,
    pub seconds: f64,
}

impl EpochRecord {
    pub const HEADER: &'static str = "epoch\ttrain_total\ttrain_l_time\ttrain_l_freq\tval_total\taborted_steps";

    /// Tab-separated row without wall-clock time, so reruns compare equal.
    pub fn row(&self) -> String {
        format!(
            "{}\t{}\t{}\t{}\t{}\t{}",
            self.epoch, self.train_total, self.train_time, self.train_freq, self.val_total, self.aborted_steps
        )
    }
}

pub struct TrainingOutcome {
    pub best: Encoder,
    pub best_epoch: usize,
    pub best_val: f64,
    pub records: Vec<EpochRecord>,
    pub stopped_early: bool,
}

/// Epochs of `steps_per_epoch` steps with a validation pass after each,
/// until `max_epochs` or early stopping. Keeps the best-validation weights.
pub fn run_training(
    trainer: &mut Trainer,
    val: &Dataset,
    mut on_epoch: impl FnMut(&EpochRecord),
) -> Result<TrainingOutcome> {
    if val.is_empty() {
        return Err(Error::Config("validation dataset is empty".into()));
    }
    let mut stopper = EarlyStopping::new(trainer.cfg.patience);
    let mut best = trainer.model.encoder.clone();
    let mut records = Vec::new();
    let mut stopped_early = false;
    for epoch in 1..=trainer.cfg.max_epochs {
        let start = Instant::now();
        let (mut total, mut time, mut freq) = (0.0, 0.0, 0.0);
        let mut aborted = 0;
        for _ in 0..trainer.cfg.steps_per_epoch {
            let r = trainer.train_step()?;
            if r.aborted {
                aborted += 1;
            } else {
                total += r.total;
                time += r.l_time;
                freq += r.l_freq;
            }
        }
        let done = (trainer.cfg.steps_per_epoch - aborted).max(1) as f64;
        let val_total = trainer.validate(val)?;
        let record = EpochRecord {
            epoch,
            train_total: total / done,
            train_time: time / done,
            train_freq: freq / done,
            val_total,
            aborted_steps: aborted,
            seconds: start.elapsed().as_secs_f64(),
        };
        on_epoch(&record);
        records.push(record);
        match stopper.observe(epoch, val_total) {
            StopDecision::Improved => best = trainer.model.encoder.clone(),
            StopDecision::Continue => {}
            StopDecision::Stop => {
                stopped_early = true;
                break;
            }
        }
    }
    let (best_epoch, best_val) = stopper.best().expect("at least one epoch ran");
    Ok(TrainingOutcome {
        best,
        best_epoch,
        best_val,
        records,
        stopped_early,
    })
}

pub struct Rendered {
    pub output: AudioClip,
    pub raw: Vec<ParamVector>,
    pub smoothed: Vec<ParamVector>,
}

/// Offline inference: per-frame θ̂ from full-context windows, smoothed, then
/// one fresh effect instance run over the whole clip.
pub fn render(model: &Model, clip: &AudioClip, smoother: SmootherConfig, exec: &Executor) -> Result<Rendered> {
    smoother.validate()?;
    model.check_rate(clip)?;
    if clip.is_empty() {
        return Err(Error::Domain(format!("clip `{}` is empty", clip.id)));
    }
    let raw = model.predict_frames(&clip.samples, model.geometry.frames_for(clip.len()), exec)?;
    let smoothed = smooth(&raw, smoother)?;
    let samples = render_with_trajectory(model.factory.as_ref(), &clip.samples, model.geometry.frame_size, &smoothed)?;
    Ok(Rendered {
        output: AudioClip::new(clip.id.clone(), samples, clip.sample_rate)?,
        raw,
        smoothed,
    })
}

/// Runs `signal` through a fresh instance with one parameter vector per frame.
pub fn render_with_trajectory(
    factory: &dyn FxFactory,
    signal: &[f64],
    frame_size: usize,
    trajectory: &[ParamVector],
) -> Result<Vec<f64>> {
    if trajectory.len() != signal.len().div_ceil(frame_size.max(1)) {
        return Err(Error::Contract(format!(
            "{} parameter frames for a {}-sample signal at frame size {frame_size}",
            trajectory.len(),
            signal.len()
        )));
    }
    let mut fx = factory.build();
    process_frames(fx.as_mut(), signal, frame_size, |k| Ok(trajectory[k].clone()))
}
