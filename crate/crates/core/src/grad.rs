//! Gradient estimates through a black-box effect.
//!
//! Only the parameter gradient is estimated; the effect is treated as a
//! constant with respect to its input signal. Both estimators are written
//! as vector-Jacobian products: given the upstream gradient `v = ∂L/∂ȳ`
//! they return `∂L/∂θ̂` directly, contracting with `v` before dividing by
//! the perturbation.
//!
//! * SPSA: `g_i = Δ_i · Σ_t v_t (f(θ + εΔ)_t − f(θ − εΔ)_t) / 2ε`, two
//!   perturbed evaluations whatever the parameter count (`1/Δ_i = Δ_i`).
//! * FD: `g_i = Σ_t v_t (f(θ + εe_i)_t − f(θ − εe_i)_t) / 2ε`, `2P`
//!   evaluations, each on its own instance.
//!
//! Perturbed parameters are clipped into `[0, 1]`; the denominator keeps
//! the nominal `ε`.

use rand::Rng as _;

use crate::effects::AnalyticVjp;
use crate::error::{Error, Result};
use crate::fx::{process_into, BlackboxFx, FdPool, FxFactory, ParamVector, ReplicaSet};
use crate::rng::{self, Purpose, Rng};

pub const DEFAULT_EPSILON: f64 = 0.01;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Estimator {
    Spsa,
    Fd,
}

impl Estimator {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "spsa" => Ok(Estimator::Spsa),
            "fd" => Ok(Estimator::Fd),
            other => Err(Error::Config(format!("unknown estimator `{other}` (spsa | fd)"))),
        }
    }

    pub fn id(&self) -> &'static str {
        match self {
            Estimator::Spsa => "spsa",
            Estimator::Fd => "fd",
        }
    }

    /// Effect instances needed per batch slot.
    pub fn instances_per_slot(&self, params: usize) -> usize {
        match self {
            Estimator::Spsa => 3,
            Estimator::Fd => 2 * params + 1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PerturbationConfig {
    pub epsilon: f64,
    pub seed: u64,
    pub estimator: Estimator,
}

impl Default for PerturbationConfig {
    fn default() -> Self {
        Self {
            epsilon: DEFAULT_EPSILON,
            seed: 0,
            estimator: Estimator::Spsa,
        }
    }
}

impl PerturbationConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon > 0.0 && self.epsilon < 0.5) {
            return Err(Error::Config(format!(
                "perturbation epsilon {} must lie in (0, 0.5)",
                self.epsilon
            )));
        }
        Ok(())
    }

    /// Perturbation stream for one (slot, step).
    pub fn stream(&self, slot: usize, step: u64) -> Rng {
        rng::stream(self.seed, Purpose::Perturbation, &[slot as u64, step])
    }
}

/// A ±1 vector with i.i.d. symmetric Bernoulli entries.
#[derive(Debug, Clone, PartialEq)]
pub struct PerturbationVector(Vec<f64>);

impl PerturbationVector {
    pub fn new(signs: Vec<f64>) -> Result<Self> {
        if signs.iter().any(|&s| s != 1.0 && s != -1.0) {
            return Err(Error::Domain("perturbation entries must be ±1".into()));
        }
        Ok(Self(signs))
    }

    /// The `index`-th of the `2^P` sign patterns (bit `i` set → `−1`).
    pub fn pattern(p: usize, index: u64) -> Self {
        Self(
            (0..p)
                .map(|i| if index >> i & 1 == 1 { -1.0 } else { 1.0 })
                .collect(),
        )
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

pub fn sample_perturbation(p: usize, rng: &mut Rng) -> PerturbationVector {
    PerturbationVector((0..p).map(|_| if rng.gen::<bool>() { 1.0 } else { -1.0 }).collect())
}

/// Output frame and parameter gradient of one VJP evaluation.
#[derive(Debug, Clone, PartialEq)]
pub struct Vjp {
    pub output: Vec<f64>,
    pub grad: Vec<f64>,
}

fn check_upstream(v: &[f64], x: &[f64]) -> Result<()> {
    if v.len() != x.len() {
        return Err(Error::Contract(format!(
            "upstream gradient has {} samples, frame has {}",
            v.len(),
            x.len()
        )));
    }
    Ok(())
}

/// `Σ_t v_t (y⁺_t − y⁻_t) / 2ε`, summed in index order.
fn contract(v: &[f64], plus: &[f64], minus: &[f64], epsilon: f64) -> f64 {
    let mut acc = 0.0;
    for ((v, p), m) in v.iter().zip(plus).zip(minus) {
        acc += v * (p - m);
    }
    acc / (2.0 * epsilon)
}

/// SPSA parameter gradient from the two perturbed outputs.
pub fn spsa_gradient(
    v: &[f64],
    plus: &[f64],
    minus: &[f64],
    epsilon: f64,
    delta: &PerturbationVector,
) -> Vec<f64> {
    let c = contract(v, plus, minus, epsilon);
    delta.values().iter().map(|d| d * c).collect()
}

/// Perturbed half of an SPSA step: the plus and minus replicas process
/// `x` at `clip(θ ± εΔ)`. Call after the nominal replica has processed `x`.
pub fn spsa_backward(
    replicas: &mut ReplicaSet,
    x: &[f64],
    theta: &ParamVector,
    v: &[f64],
    epsilon: f64,
    delta: &PerturbationVector,
) -> Result<Vec<f64>> {
    check_upstream(v, x)?;
    if delta.len() != theta.len() {
        return Err(Error::Contract("perturbation length differs from θ".into()));
    }
    let plus = theta.perturbed(delta.values(), epsilon);
    let minus = theta.perturbed(delta.values(), -epsilon);
    let (yp, ym) = replicas.process_perturbed(x, &plus, &minus)?;
    Ok(spsa_gradient(v, &yp, &ym, epsilon, delta))
}

/// Full SPSA VJP with an explicit perturbation.
pub fn spsa_vjp_with(
    replicas: &mut ReplicaSet,
    x: &[f64],
    theta: &ParamVector,
    v: &[f64],
    epsilon: f64,
    delta: &PerturbationVector,
) -> Result<Vjp> {
    check_upstream(v, x)?;
    let output = replicas.process_nominal(x, theta)?;
    let grad = spsa_backward(replicas, x, theta, v, epsilon, delta)?;
    Ok(Vjp { output, grad })
}

/// Full SPSA VJP drawing one fresh perturbation from `rng`.
pub fn spsa_vjp(
    replicas: &mut ReplicaSet,
    x: &[f64],
    theta: &ParamVector,
    v: &[f64],
    epsilon: f64,
    rng: &mut Rng,
) -> Result<Vjp> {
    let delta = sample_perturbation(theta.len(), rng);
    spsa_vjp_with(replicas, x, theta, v, epsilon, &delta)
}

/// Perturbed half of a two-sided FD step: `2P` process calls.
pub fn fd_backward(
    pool: &mut FdPool,
    x: &[f64],
    theta: &ParamVector,
    v: &[f64],
    epsilon: f64,
) -> Result<Vec<f64>> {
    check_upstream(v, x)?;
    if pool.param_count() != theta.len() {
        return Err(Error::Contract("FD pool size differs from θ".into()));
    }
    let mut yp = vec![0.0; x.len()];
    let mut ym = vec![0.0; x.len()];
    let mut grad = Vec::with_capacity(theta.len());
    for i in 0..theta.len() {
        let (plus_fx, minus_fx) = pool.pair_mut(i);
        process_into(plus_fx, x, &theta.perturbed_at(i, epsilon), &mut yp)?;
        process_into(minus_fx, x, &theta.perturbed_at(i, -epsilon), &mut ym)?;
        grad.push(contract(v, &yp, &ym, epsilon));
    }
    Ok(grad)
}

pub fn fd_vjp(
    pool: &mut FdPool,
    x: &[f64],
    theta: &ParamVector,
    v: &[f64],
    epsilon: f64,
) -> Result<Vjp> {
    check_upstream(v, x)?;
    let mut output = vec![0.0; x.len()];
    process_into(pool.nominal_mut(), x, theta, &mut output)?;
    let grad = fd_backward(pool, x, theta, v, epsilon)?;
    Ok(Vjp { output, grad })
}

/// The effect instances behind one batch slot, for either estimator.
pub enum BlackboxLayer {
    Spsa(ReplicaSet),
    Fd(FdPool),
}

impl BlackboxLayer {
    pub fn new(estimator: Estimator, factory: &dyn FxFactory) -> Self {
        match estimator {
            Estimator::Spsa => BlackboxLayer::Spsa(ReplicaSet::new(factory)),
            Estimator::Fd => BlackboxLayer::Fd(FdPool::new(factory)),
        }
    }

    pub fn param_count(&self) -> usize {
        match self {
            BlackboxLayer::Spsa(r) => r.param_count(),
            BlackboxLayer::Fd(p) => p.param_count(),
        }
    }

    /// Nominal forward pass.
    pub fn forward(&mut self, x: &[f64], theta: &ParamVector) -> Result<Vec<f64>> {
        match self {
            BlackboxLayer::Spsa(r) => r.process_nominal(x, theta),
            BlackboxLayer::Fd(p) => {
                let mut y = vec![0.0; x.len()];
                process_into(p.nominal_mut(), x, theta, &mut y)?;
                Ok(y)
            }
        }
    }

    /// Perturbed evaluations on the same `x`, returning `∂L/∂θ̂`.
    pub fn backward(
        &mut self,
        x: &[f64],
        theta: &ParamVector,
        v: &[f64],
        epsilon: f64,
        rng: &mut Rng,
    ) -> Result<Vec<f64>> {
        match self {
            BlackboxLayer::Spsa(r) => {
                let delta = sample_perturbation(theta.len(), rng);
                spsa_backward(r, x, theta, v, epsilon, &delta)
            }
            BlackboxLayer::Fd(p) => fd_backward(p, x, theta, v, epsilon),
        }
    }

    pub fn reset(&mut self) {
        match self {
            BlackboxLayer::Spsa(r) => r.reset(),
            BlackboxLayer::Fd(p) => p.reset(),
        }
    }
}

/// Analytic, finite-difference and averaged SPSA gradients of one probe.
#[derive(Debug, Clone, PartialEq)]
pub struct GradCheck {
    pub analytic: Vec<f64>,
    pub fd: Vec<f64>,
    pub spsa_mean: Vec<f64>,
}

impl GradCheck {
    pub fn fd_relative_error(&self) -> Vec<f64> {
        relative_errors(&self.fd, &self.analytic)
    }

    /// `max|fd − analytic| / max|analytic|`.
    pub fn fd_normwise_error(&self) -> f64 {
        let err = self.fd.iter().zip(&self.analytic).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        let scale = self.analytic.iter().fold(0.0f64, |m, a| m.max(a.abs()));
        if scale == 0.0 {
            err
        } else {
            err / scale
        }
    }

    pub fn spsa_relative_error(&self) -> Vec<f64> {
        relative_errors(&self.spsa_mean, &self.analytic)
    }
}

/// Coordinate-wise `|a − b| / |b|` (absolute error where `b = 0`).
pub fn relative_errors(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter()
        .zip(b)
        .map(|(a, b)| {
            let d = (a - b).abs();
            if *b == 0.0 {
                d
            } else {
                d / b.abs()
            }
        })
        .collect()
}

/// Compares both estimators against a closed-form Jacobian. SPSA is
/// averaged over `draws` independent perturbations derived from `seed`.
pub fn analytic_vjp_check<E>(
    effect: &E,
    x: &[f64],
    theta: &ParamVector,
    v: &[f64],
    epsilon: f64,
    draws: usize,
    seed: u64,
) -> Result<GradCheck>
where
    E: BlackboxFx + AnalyticVjp + Clone + Sync + 'static,
{
    if draws == 0 {
        return Err(Error::Config("gradient check needs at least one SPSA draw".into()));
    }
    let factory = {
        let proto = effect.clone();
        move || Box::new(proto.clone()) as Box<dyn BlackboxFx>
    };
    let analytic = effect.analytic_vjp(x, theta, v);
    let fd = fd_vjp(&mut FdPool::new(&factory), x, theta, v, epsilon)?.grad;
    let mut spsa_mean = vec![0.0; theta.len()];
    for d in 0..draws {
        let mut rng = rng::stream(seed, Purpose::GradCheck, &[d as u64]);
        let mut replicas = ReplicaSet::new(&factory);
        let g = spsa_vjp(&mut replicas, x, theta, v, epsilon, &mut rng)?.grad;
        for (m, g) in spsa_mean.iter_mut().zip(g) {
            *m += g;
        }
    }
    for m in spsa_mean.iter_mut() {
        *m /= draws as f64;
    }
    Ok(GradCheck {
        analytic,
        fd,
        spsa_mean,
    })
}

#[cfg(test)]
mod tests;
