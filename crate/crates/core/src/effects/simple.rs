//! Small reference effects: identity, static gain, soft clipper and a
//! one-pole smoother. The memoryless ones have closed-form Jacobians and
//! serve as ground truth for the gradient estimators.

use crate::error::{Error, Result};
use crate::fx::{BlackboxFx, ParamSpec, ParamSpecSet, ParamVector};

/// Effects whose parameter Jacobian is known in closed form.
pub trait AnalyticVjp {
    /// `Σ_t v_t · ∂y_t/∂θ_i` for every normalized coordinate `i`, with the
    /// effect in its freshly-constructed state.
    fn analytic_vjp(&self, x: &[f64], params: &ParamVector, v: &[f64]) -> Vec<f64>;
}

/// Passes audio through untouched; its parameters are ignored.
#[derive(Debug, Clone)]
pub struct Identity {
    specs: ParamSpecSet,
}

impl Identity {
    pub fn new(params: usize) -> Self {
        let specs = (0..params)
            .map(|i| ParamSpec::linear(&format!("unused{}", i + 1), "", 0.0, 1.0))
            .collect();
        Self {
            specs: ParamSpecSet::new(specs).expect("unique names"),
        }
    }
}

impl BlackboxFx for Identity {
    fn param_specs(&self) -> &ParamSpecSet {
        &self.specs
    }

    fn process_block(&mut self, input: &[f64], _params: &ParamVector, output: &mut [f64]) {
        output.copy_from_slice(input);
    }

    fn reset(&mut self) {}
}

/// `y = g · x` with `g` linear in the normalized parameter.
#[derive(Debug, Clone)]
pub struct Gain {
    specs: ParamSpecSet,
}

impl Gain {
    pub fn new(min: f64, max: f64) -> Result<Self> {
        let spec = ParamSpec::new("gain", "x", min, max, crate::fx::Mapping::Linear)?;
        Ok(Self {
            specs: ParamSpecSet::new(vec![spec])?,
        })
    }
}

impl BlackboxFx for Gain {
    fn param_specs(&self) -> &ParamSpecSet {
        &self.specs
    }

    fn process_block(&mut self, input: &[f64], params: &ParamVector, output: &mut [f64]) {
        let g = self.specs.get(0).denormalize_unchecked(params.values()[0]);
        for (x, y) in input.iter().zip(output.iter_mut()) {
            *y = g * x;
        }
    }

    fn reset(&mut self) {}
}

impl AnalyticVjp for Gain {
    fn analytic_vjp(&self, x: &[f64], _params: &ParamVector, v: &[f64]) -> Vec<f64> {
        let dot: f64 = x.iter().zip(v).map(|(x, v)| x * v).sum();
        vec![dot * self.specs.get(0).width()]
    }
}

pub const SOFT_CLIP_DRIVE: (f64, f64) = (0.5, 4.0);
pub const SOFT_CLIP_LEVEL: (f64, f64) = (0.0, 1.0);

/// `y = level · tanh(drive · x)`.
#[derive(Debug, Clone)]
pub struct SoftClip {
    specs: ParamSpecSet,
}

impl SoftClip {
    pub fn new() -> Self {
        let specs = vec![
            ParamSpec::linear("drive", "x", SOFT_CLIP_DRIVE.0, SOFT_CLIP_DRIVE.1),
            ParamSpec::linear("level", "x", SOFT_CLIP_LEVEL.0, SOFT_CLIP_LEVEL.1),
        ];
        Self {
            specs: ParamSpecSet::new(specs).expect("unique names"),
        }
    }

    fn physical(&self, params: &ParamVector) -> (f64, f64) {
        let v = params.values();
        (
            self.specs.get(0).denormalize_unchecked(v[0]),
            self.specs.get(1).denormalize_unchecked(v[1]),
        )
    }
}

impl Default for SoftClip {
    fn default() -> Self {
        Self::new()
    }
}

impl BlackboxFx for SoftClip {
    fn param_specs(&self) -> &ParamSpecSet {
        &self.specs
    }

    fn process_block(&mut self, input: &[f64], params: &ParamVector, output: &mut [f64]) {
        let (drive, level) = self.physical(params);
        for (x, y) in input.iter().zip(output.iter_mut()) {
            *y = level * (drive * x).tanh();
        }
    }

    fn reset(&mut self) {}
}

impl AnalyticVjp for SoftClip {
    fn analytic_vjp(&self, x: &[f64], params: &ParamVector, v: &[f64]) -> Vec<f64> {
        let (drive, level) = self.physical(params);
        let (mut g_drive, mut g_level) = (0.0, 0.0);
        for (&x, &v) in x.iter().zip(v) {
            let t = (drive * x).tanh();
            g_drive += v * level * (1.0 - t * t) * x;
            g_level += v * t;
        }
        vec![
            g_drive * self.specs.get(0).width(),
            g_level * self.specs.get(1).width(),
        ]
    }
}

/// Stateful one-pole lowpass `y_t = a·y_{t−1} + (1 − a)·x_t`.
#[derive(Debug, Clone)]
pub struct OnePole {
    specs: ParamSpecSet,
    state: f64,
}

impl OnePole {
    pub fn new() -> Self {
        Self {
            specs: ParamSpecSet::new(vec![ParamSpec::linear("coefficient", "", 0.0, 0.99)])
                .expect("unique names"),
            state: 0.0,
        }
    }
}

impl Default for OnePole {
    fn default() -> Self {
        Self::new()
    }
}

impl BlackboxFx for OnePole {
    fn param_specs(&self) -> &ParamSpecSet {
        &self.specs
    }

    fn process_block(&mut self, input: &[f64], params: &ParamVector, output: &mut [f64]) {
        let a = self.specs.get(0).denormalize_unchecked(params.values()[0]);
        for (x, y) in input.iter().zip(output.iter_mut()) {
            self.state = a * self.state + (1.0 - a) * x;
            *y = self.state;
        }
    }

    fn reset(&mut self) {
        self.state = 0.0;
    }
}

pub(crate) fn check_len(kind: &str, expected: usize, got: usize) -> Result<()> {
    if expected != got {
        return Err(Error::Contract(format!(
            "{kind} expects {expected} parameters, got {got}"
        )));
    }
    Ok(())
}
