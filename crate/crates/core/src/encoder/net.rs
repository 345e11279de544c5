use std::ops::Range;

use rand::Rng as _;

use super::mel::FeatureMap;
use crate::error::{Error, Result};
use crate::rng::{self, Purpose};

/// Pre-activations beyond this magnitude saturate the head; keeps θ̂
/// strictly inside `(0, 1)` in floating point.
const HEAD_CLAMP: f64 = 30.0;

#[derive(Debug, Clone, PartialEq)]
pub struct EncoderConfig {
    /// Feature frames (image height).
    pub frames: usize,
    /// Mel bands (image width).
    pub bands: usize,
    pub channels: Vec<usize>,
    pub params: usize,
    pub bn_momentum: f64,
    pub bn_eps: f64,
}

impl EncoderConfig {
    pub fn new(frames: usize, bands: usize, params: usize) -> Self {
        Self {
            frames,
            bands,
            channels: vec![16, 32, 64],
            params,
            bn_momentum: 0.1,
            bn_eps: 1e-5,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.channels.is_empty() || self.channels.contains(&0) || self.params == 0 {
            return Err(Error::Config(format!(
                "encoder needs ≥1 conv block and ≥1 output (channels {:?}, params {})",
                self.channels, self.params
            )));
        }
        let shrink = 1usize << self.channels.len();
        if self.frames < shrink || self.bands < shrink {
            return Err(Error::Config(format!(
                "{}×{} features are too small for {} pooling stages",
                self.frames,
                self.bands,
                self.channels.len()
            )));
        }
        if !(self.bn_momentum > 0.0 && self.bn_momentum <= 1.0 && self.bn_eps > 0.0) {
            return Err(Error::Config("batch-norm momentum/epsilon out of range".into()));
        }
        Ok(())
    }

    fn blocks(&self) -> Vec<Block> {
        let (mut h, mut w, mut ci) = (self.frames, self.bands, 1);
        self.channels
            .iter()
            .map(|&co| {
                let b = Block { ci, co, h, w };
                (h, w, ci) = (h / 2, w / 2, co);
                b
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy)]
struct Block {
    ci: usize,
    co: usize,
    h: usize,
    w: usize,
}

impl Block {
    fn hp(&self) -> usize {
        self.h / 2
    }
    fn wp(&self) -> usize {
        self.w / 2
    }
    fn padded_plane(&self) -> usize {
        (self.h + 2) * (self.w + 2)
    }
}

/// Offsets of every tensor inside the flat parameter vector.
#[derive(Debug, Clone)]
pub struct Layout {
    pub gamma: Range<usize>,
    pub beta: Range<usize>,
    pub conv: Vec<(Range<usize>, Range<usize>)>,
    pub dense_w: Range<usize>,
    pub dense_b: Range<usize>,
    pub total: usize,
}

impl Layout {
    fn new(cfg: &EncoderConfig) -> Self {
        let mut at = 0;
        let mut take = |n: usize| {
            let r = at..at + n;
            at += n;
            r
        };
        let gamma = take(cfg.bands);
        let beta = take(cfg.bands);
        let conv = cfg
            .blocks()
            .iter()
            .map(|b| (take(b.co * b.ci * 9), take(b.co)))
            .collect();
        let last = *cfg.channels.last().expect("validated");
        let dense_w = take(cfg.params * last);
        let dense_b = take(cfg.params);
        Self {
            gamma,
            beta,
            conv,
            dense_w,
            dense_b,
            total: at,
        }
    }
}

/// Per-band normalization statistics.
#[derive(Debug, Clone, PartialEq)]
pub struct BnStats {
    pub mean: Vec<f64>,
    pub var: Vec<f64>,
    /// Rows the statistics were computed from.
    pub count: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

struct BlockCache {
    input: Vec<f64>,
    pre: Vec<f64>,
    argmax: Vec<u32>,
}

/// Activations kept for the backward pass.
pub struct ForwardCache {
    version: u64,
    xhat: Vec<f64>,
    blocks: Vec<BlockCache>,
    hidden: Vec<f64>,
    theta: Vec<f64>,
    saturated: Vec<bool>,
}

impl ForwardCache {
    pub fn theta(&self) -> &[f64] {
        &self.theta
    }
}

/// BN → conv blocks (3×3 same, ReLU, 2×2 max-pool) → global average pool
/// → dense → sigmoid, with trainable weights in one flat vector.
#[derive(Debug, Clone)]
pub struct Encoder {
    cfg: EncoderConfig,
    layout: Layout,
    weights: Vec<f64>,
    running: BnStats,
    version: u64,
}

impl Encoder {
    /// Fan-in-scaled uniform init; BN scale 1, all biases 0.
    pub fn new(cfg: EncoderConfig, seed: u64) -> Result<Self> {
        cfg.validate()?;
        let layout = Layout::new(&cfg);
        let mut weights = vec![0.0; layout.total];
        weights[layout.gamma.clone()].fill(1.0);
        let mut r = rng::stream(seed, Purpose::Init, &[]);
        for (block, (w, _)) in cfg.blocks().iter().zip(&layout.conv) {
            let bound = (6.0 / (block.ci * 9) as f64).sqrt();
            for v in &mut weights[w.clone()] {
                *v = r.gen_range(-bound..bound);
            }
        }
        let last = *cfg.channels.last().expect("validated");
        let bound = (3.0 / last as f64).sqrt();
        for v in &mut weights[layout.dense_w.clone()] {
            *v = r.gen_range(-bound..bound);
        }
        Ok(Self {
            running: BnStats {
                mean: vec![0.0; cfg.bands],
                var: vec![1.0; cfg.bands],
                count: 0,
            },
            cfg,
            layout,
            weights,
            version: 0,
        })
    }

    /// Rebuilds an encoder from stored tensors.
    pub fn from_parts(cfg: EncoderConfig, weights: Vec<f64>, running: BnStats) -> Result<Self> {
        cfg.validate()?;
        let layout = Layout::new(&cfg);
        if weights.len() != layout.total
            || running.mean.len() != cfg.bands
            || running.var.len() != cfg.bands
        {
            return Err(Error::Contract("encoder tensors do not match the configuration".into()));
        }
        if weights.iter().chain(&running.mean).chain(&running.var).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("encoder weights".into()));
        }
        Ok(Self {
            cfg,
            layout,
            weights,
            running,
            version: 0,
        })
    }

    pub fn config(&self) -> &EncoderConfig {
        &self.cfg
    }

    pub fn layout(&self) -> &Layout {
        &self.layout
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Mutable weights; invalidates outstanding caches.
    pub fn weights_mut(&mut self) -> &mut [f64] {
        self.version += 1;
        &mut self.weights
    }

    pub fn num_weights(&self) -> usize {
        self.layout.total
    }

    pub fn running_stats(&self) -> &BnStats {
        &self.running
    }

    fn check_features(&self, f: &FeatureMap) -> Result<()> {
        if f.frames() != self.cfg.frames || f.bands() != self.cfg.bands {
            return Err(Error::Contract(format!(
                "features are {}×{}, encoder expects {}×{}",
                f.frames(),
                f.bands(),
                self.cfg.frames,
                self.cfg.bands
            )));
        }
        Ok(())
    }

    /// Per-band mean and biased variance over every frame of the batch,
    /// accumulated in batch order.
    pub fn batch_stats(&self, batch: &[&FeatureMap]) -> Result<BnStats> {
        if batch.is_empty() {
            return Err(Error::Contract("empty batch".into()));
        }
        let bands = self.cfg.bands;
        let mut mean = vec![0.0; bands];
        let mut sq = vec![0.0; bands];
        for f in batch {
            self.check_features(f)?;
            for row in f.data().chunks_exact(bands) {
                for ((m, s), v) in mean.iter_mut().zip(sq.iter_mut()).zip(row) {
                    *m += v;
                    *s += v * v;
                }
            }
        }
        let count = batch.len() * self.cfg.frames;
        let n = count as f64;
        let var = mean
            .iter_mut()
            .zip(&sq)
            .map(|(m, s)| {
                *m /= n;
                (s / n - *m * *m).max(0.0)
            })
            .collect();
        Ok(BnStats { mean, var, count })
    }

    /// Exponential update of the running statistics (unbiased variance).
    pub fn update_running(&mut self, batch: &BnStats) {
        let m = self.cfg.bn_momentum;
        let n = batch.count as f64;
        let unbias = if batch.count > 1 { n / (n - 1.0) } else { 1.0 };
        for (r, b) in self.running.mean.iter_mut().zip(&batch.mean) {
            *r = (1.0 - m) * *r + m * b;
        }
        for (r, b) in self.running.var.iter_mut().zip(&batch.var) {
            *r = (1.0 - m) * *r + m * b * unbias;
        }
        self.running.count += batch.count;
    }

    /// Forward pass using `stats` for normalization (batch statistics in
    /// training, [`Encoder::running_stats`] in evaluation).
    pub fn forward_with(&self, feat: &FeatureMap, stats: &BnStats) -> Result<ForwardCache> {
        self.check_features(feat)?;
        let (h, w) = (self.cfg.frames, self.cfg.bands);
        let eps = self.cfg.bn_eps;
        let gamma = &self.weights[self.layout.gamma.clone()];
        let beta = &self.weights[self.layout.beta.clone()];
        let inv: Vec<f64> = stats.var.iter().map(|v| 1.0 / (v + eps).sqrt()).collect();
        let mut xhat = vec![0.0; h * w];
        for (row_out, row_in) in xhat.chunks_exact_mut(w).zip(feat.data().chunks_exact(w)) {
            for (f, (o, x)) in row_out.iter_mut().zip(row_in).enumerate() {
                *o = (x - stats.mean[f]) * inv[f];
            }
        }

        let blocks = self.cfg.blocks();
        let mut input = vec![0.0; blocks[0].padded_plane()];
        for y in 0..h {
            let dst = &mut input[(y + 1) * (w + 2) + 1..][..w];
            for (f, (d, x)) in dst.iter_mut().zip(&xhat[y * w..(y + 1) * w]).enumerate() {
                *d = gamma[f] * x + beta[f];
            }
        }

        let mut caches = Vec::with_capacity(blocks.len());
        for (bi, b) in blocks.iter().enumerate() {
            let (wr, br) = &self.layout.conv[bi];
            let mut pre = vec![0.0; b.co * b.h * b.w];
            conv3x3_forward(&input, b, &self.weights[wr.clone()], &self.weights[br.clone()], &mut pre);
            let (hp, wp) = (b.hp(), b.wp());
            let last = bi + 1 == blocks.len();
            // Next block's padded input, or the last block's pooled map.
            let (nh, nw) = if last { (hp, wp) } else { (hp + 2, wp + 2) };
            let off = usize::from(!last);
            let mut next = vec![0.0; b.co * nh * nw];
            let mut argmax = vec![0u32; b.co * hp * wp];
            for c in 0..b.co {
                let plane = &pre[c * b.h * b.w..(c + 1) * b.h * b.w];
                for py in 0..hp {
                    for px in 0..wp {
                        let mut best = (2 * py) * b.w + 2 * px;
                        for (dy, dx) in [(0, 1), (1, 0), (1, 1)] {
                            let i = (2 * py + dy) * b.w + 2 * px + dx;
                            if plane[i] > plane[best] {
                                best = i;
                            }
                        }
                        argmax[(c * hp + py) * wp + px] = best as u32;
                        next[c * nh * nw + (py + off) * nw + px + off] = plane[best].max(0.0);
                    }
                }
            }
            caches.push(BlockCache {
                input: std::mem::replace(&mut input, next),
                pre,
                argmax,
            });
        }

        let last = blocks.last().expect("validated");
        let area = (last.hp() * last.wp()) as f64;
        let hidden: Vec<f64> = input
            .chunks_exact(last.hp() * last.wp())
            .map(|p| p.iter().sum::<f64>() / area)
            .collect();
        let dw = &self.weights[self.layout.dense_w.clone()];
        let db = &self.weights[self.layout.dense_b.clone()];
        let mut theta = Vec::with_capacity(self.cfg.params);
        let mut saturated = Vec::with_capacity(self.cfg.params);
        for (row, b) in dw.chunks_exact(hidden.len()).zip(db) {
            let z = dot(row, &hidden) + b;
            saturated.push(z.abs() > HEAD_CLAMP);
            theta.push(1.0 / (1.0 + (-z.clamp(-HEAD_CLAMP, HEAD_CLAMP)).exp()));
        }
        Ok(ForwardCache {
            version: self.version,
            xhat,
            blocks: caches,
            hidden,
            theta,
            saturated,
        })
    }

    pub fn forward(&self, feat: &FeatureMap, mode: Mode, batch: Option<&BnStats>) -> Result<ForwardCache> {
        match (mode, batch) {
            (Mode::Eval, _) => self.forward_with(feat, &self.running),
            (Mode::Train, Some(stats)) => self.forward_with(feat, stats),
            (Mode::Train, None) => {
                let stats = self.batch_stats(&[feat])?;
                self.forward_with(feat, &stats)
            }
        }
    }

    /// Evaluation-mode parameters for one feature map.
    pub fn infer(&self, feat: &FeatureMap) -> Result<Vec<f64>> {
        Ok(self.forward_with(feat, &self.running)?.theta)
    }

    /// Gradient of `Σ_i grad_theta_i · θ̂_i` with respect to every weight.
    /// Normalization statistics are treated as constants.
    pub fn backward(&self, cache: &ForwardCache, grad_theta: &[f64]) -> Result<Vec<f64>> {
        if cache.version != self.version {
            return Err(Error::Contract("forward cache predates a weight update".into()));
        }
        if grad_theta.len() != self.cfg.params {
            return Err(Error::Contract(format!(
                "{} upstream gradients for {} outputs",
                grad_theta.len(),
                self.cfg.params
            )));
        }
        let mut grads = vec![0.0; self.layout.total];
        let blocks = self.cfg.blocks();

        let gz: Vec<f64> = grad_theta
            .iter()
            .zip(&cache.theta)
            .zip(&cache.saturated)
            .map(|((g, t), &sat)| if sat { 0.0 } else { g * t * (1.0 - t) })
            .collect();
        let nh = cache.hidden.len();
        let dw = &self.weights[self.layout.dense_w.clone()];
        let mut g_hidden = vec![0.0; nh];
        {
            let (gw, gb) = split_two(&mut grads, &self.layout.dense_w, &self.layout.dense_b);
            for (p, &g) in gz.iter().enumerate() {
                gb[p] = g;
                for j in 0..nh {
                    gw[p * nh + j] = g * cache.hidden[j];
                    g_hidden[j] += g * dw[p * nh + j];
                }
            }
        }

        let last = blocks.last().expect("validated");
        let area = last.hp() * last.wp();
        // gradient w.r.t. the pooled output of the current block
        let mut g_pooled: Vec<f64> = g_hidden
            .iter()
            .flat_map(|g| std::iter::repeat_n(g / area as f64, area))
            .collect();

        let mut g_bn = Vec::new();
        for bi in (0..blocks.len()).rev() {
            let b = &blocks[bi];
            let bc = &cache.blocks[bi];
            let (hp, wp) = (b.hp(), b.wp());
            let mut g_pre = vec![0.0; b.co * b.h * b.w];
            for c in 0..b.co {
                for k in 0..hp * wp {
                    let i = bc.argmax[c * hp * wp + k] as usize;
                    let plane = c * b.h * b.w;
                    if bc.pre[plane + i] > 0.0 {
                        g_pre[plane + i] += g_pooled[c * hp * wp + k];
                    }
                }
            }
            let (wr, br) = &self.layout.conv[bi];
            let mut g_in = vec![0.0; bc.input.len()];
            {
                let (gw, gb) = split_two(&mut grads, wr, br);
                conv3x3_backward(&bc.input, b, &self.weights[wr.clone()], &g_pre, gw, gb, &mut g_in);
            }
            // strip the padding
            let (h, w) = (b.h, b.w);
            let mut g_inner = vec![0.0; b.ci * h * w];
            for c in 0..b.ci {
                for y in 0..h {
                    let src = &g_in[c * b.padded_plane() + (y + 1) * (w + 2) + 1..][..w];
                    g_inner[(c * h + y) * w..(c * h + y + 1) * w].copy_from_slice(src);
                }
            }
            if bi == 0 {
                g_bn = g_inner;
            } else {
                g_pooled = g_inner;
            }
        }

        let w = self.cfg.bands;
        let (gg, gb) = split_two(&mut grads, &self.layout.gamma, &self.layout.beta);
        for (g_row, x_row) in g_bn.chunks_exact(w).zip(cache.xhat.chunks_exact(w)) {
            for f in 0..w {
                gg[f] += g_row[f] * x_row[f];
                gb[f] += g_row[f];
            }
        }
        Ok(grads)
    }
}

/// Disjoint mutable views of two non-overlapping ranges, `a` before `b`.
fn split_two<'a>(v: &'a mut [f64], a: &Range<usize>, b: &Range<usize>) -> (&'a mut [f64], &'a mut [f64]) {
    debug_assert!(a.end <= b.start);
    let (lo, hi) = v.split_at_mut(b.start);
    (&mut lo[a.clone()], &mut hi[..b.len()])
}

/// Dot product with four independent accumulators so the compiler can
/// vectorize it.
fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = [0.0; 4];
    let (ca, cb) = (a.chunks_exact(4), b.chunks_exact(4));
    let (ra, rb) = (ca.remainder(), cb.remainder());
    for (x, y) in ca.zip(cb) {
        for k in 0..4 {
            acc[k] += x[k] * y[k];
        }
    }
    let mut s = (acc[0] + acc[1]) + (acc[2] + acc[3]);
    for (x, y) in ra.iter().zip(rb) {
        s += x * y;
    }
    s
}

fn conv3x3_forward(input: &[f64], b: &Block, weights: &[f64], bias: &[f64], out: &mut [f64]) {
    let (h, w, pw) = (b.h, b.w, b.w + 2);
    for o in 0..b.co {
        let plane = &mut out[o * h * w..(o + 1) * h * w];
        plane.fill(bias[o]);
        for i in 0..b.ci {
            let inp = &input[i * b.padded_plane()..(i + 1) * b.padded_plane()];
            for ky in 0..3 {
                for kx in 0..3 {
                    let wv = weights[((o * b.ci + i) * 3 + ky) * 3 + kx];
                    for y in 0..h {
                        let src = &inp[(y + ky) * pw + kx..][..w];
                        for (d, s) in plane[y * w..(y + 1) * w].iter_mut().zip(src) {
                            *d += wv * s;
                        }
                    }
                }
            }
        }
    }
}

fn conv3x3_backward(
    input: &[f64],
    b: &Block,
    weights: &[f64],
    g_out: &[f64],
    g_w: &mut [f64],
    g_b: &mut [f64],
    g_in: &mut [f64],
) {
    let (h, w, pw) = (b.h, b.w, b.w + 2);
    for o in 0..b.co {
        let g = &g_out[o * h * w..(o + 1) * h * w];
        g_b[o] = g.iter().sum();
        for i in 0..b.ci {
            let inp = &input[i * b.padded_plane()..(i + 1) * b.padded_plane()];
            let gin = &mut g_in[i * b.padded_plane()..(i + 1) * b.padded_plane()];
            for ky in 0..3 {
                for kx in 0..3 {
                    let k = ((o * b.ci + i) * 3 + ky) * 3 + kx;
                    let wv = weights[k];
                    let mut acc = 0.0;
                    for y in 0..h {
                        let g_row = &g[y * w..(y + 1) * w];
                        acc += dot(g_row, &inp[(y + ky) * pw + kx..][..w]);
                        for (d, s) in gin[(y + ky) * pw + kx..][..w].iter_mut().zip(g_row) {
                            *d += wv * s;
                        }
                    }
                    g_w[k] = acc;
                }
            }
        }
    }
}
