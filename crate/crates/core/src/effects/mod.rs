//! In-process effect implementations behind the [`BlackboxFx`] interface.
//!
//! Effects are registered under string identifiers so configurations can
//! name them: `multiband_compressor`, `multiband_gate`, `graphic_eq`,
//! `limiter`, `gain`, `identity`, `chain`, plus the reference effects
//! `soft_clip` and `one_pole`.

pub mod biquad;
mod chain;
pub mod crossover;
pub mod dynamics;
mod eq;
mod layout;
mod limiter;
mod multiband;
mod simple;

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::fx::{BlackboxFx, FxFactory, ParamSpecSet};

pub use chain::Chain;
pub use dynamics::{compressor_static_gain, gate_static_gain, EnvelopeFollower};
pub use eq::{eq_centers, GraphicEq, EQ_BANDS, EQ_Q};
pub use limiter::Limiter;
pub use multiband::{compressor_specs, gate_specs, MultibandCompressor, MultibandGate};
pub use simple::{AnalyticVjp, Gain, Identity, OnePole, SoftClip};

/// Internal block size of the library effects.
pub const EFFECT_BLOCK_SIZE: usize = 64;

/// Knee used when the mastering chain freezes the compressor knees.
pub const MASTERING_KNEE_DB: f64 = 6.0;

#[derive(Debug, Clone, PartialEq)]
pub enum EffectKind {
    Identity { params: usize },
    Gain { min: f64, max: f64 },
    SoftClip,
    OnePole,
    MultibandCompressor,
    MultibandGate,
    GraphicEq,
    Limiter,
    Chain(Vec<EffectSpec>),
}

impl EffectKind {
    pub fn id(&self) -> &'static str {
        match self {
            EffectKind::Identity { .. } => "identity",
            EffectKind::Gain { .. } => "gain",
            EffectKind::SoftClip => "soft_clip",
            EffectKind::OnePole => "one_pole",
            EffectKind::MultibandCompressor => "multiband_compressor",
            EffectKind::MultibandGate => "multiband_gate",
            EffectKind::GraphicEq => "graphic_eq",
            EffectKind::Limiter => "limiter",
            EffectKind::Chain(_) => "chain",
        }
    }

    /// Looks up a non-chain effect by identifier with default options.
    pub fn from_id(id: &str) -> Result<Self> {
        Ok(match id {
            "identity" => EffectKind::Identity { params: 1 },
            "gain" => EffectKind::Gain { min: 0.0, max: 1.0 },
            "soft_clip" => EffectKind::SoftClip,
            "one_pole" => EffectKind::OnePole,
            "multiband_compressor" => EffectKind::MultibandCompressor,
            "multiband_gate" => EffectKind::MultibandGate,
            "graphic_eq" => EffectKind::GraphicEq,
            "limiter" => EffectKind::Limiter,
            "chain" => {
                return Err(Error::Config(
                    "`chain` needs member effects; build it with EffectKind::Chain".into(),
                ))
            }
            other => return Err(Error::Config(format!("unknown effect `{other}`"))),
        })
    }
}

/// A buildable effect configuration: which effect, which parameters are
/// frozen (and at what physical value), and the sample rate.
#[derive(Debug, Clone, PartialEq)]
pub struct EffectSpec {
    pub kind: EffectKind,
    pub fixed: BTreeMap<String, f64>,
    pub sample_rate: f64,
}

impl EffectSpec {
    pub fn new(kind: EffectKind, sample_rate: f64) -> Self {
        Self {
            kind,
            fixed: BTreeMap::new(),
            sample_rate,
        }
    }

    pub fn with_fixed(mut self, name: &str, value: f64) -> Self {
        self.fixed.insert(name.to_string(), value);
        self
    }

    /// Compressor (16) → graphic EQ (33) → limiter (1). The compressor's
    /// knees and output gain are frozen.
    pub fn mastering_chain(sample_rate: f64) -> Self {
        let mut comp = EffectSpec::new(EffectKind::MultibandCompressor, sample_rate)
            .with_fixed("output_gain", 0.0);
        for b in 1..=crossover::BANDS {
            comp = comp.with_fixed(&format!("band{b}.knee"), MASTERING_KNEE_DB);
        }
        EffectSpec::new(
            EffectKind::Chain(vec![
                comp,
                EffectSpec::new(EffectKind::GraphicEq, sample_rate),
                EffectSpec::new(EffectKind::Limiter, sample_rate),
            ]),
            sample_rate,
        )
    }

    pub fn try_build(&self) -> Result<Box<dyn BlackboxFx>> {
        let sr = self.sample_rate;
        let no_fixed = || -> Result<()> {
            match self.fixed.keys().next() {
                Some(name) => Err(Error::Config(format!(
                    "effect `{}` has no parameter `{name}` to fix",
                    self.kind.id()
                ))),
                None => Ok(()),
            }
        };
        Ok(match &self.kind {
            EffectKind::Identity { params } => {
                no_fixed()?;
                Box::new(Identity::new(*params))
            }
            EffectKind::Gain { min, max } => {
                no_fixed()?;
                Box::new(Gain::new(*min, *max)?)
            }
            EffectKind::SoftClip => {
                no_fixed()?;
                Box::new(SoftClip::new())
            }
            EffectKind::OnePole => {
                no_fixed()?;
                Box::new(OnePole::new())
            }
            EffectKind::MultibandCompressor => Box::new(MultibandCompressor::new(sr, &self.fixed)?),
            EffectKind::MultibandGate => Box::new(MultibandGate::new(sr, &self.fixed)?),
            EffectKind::GraphicEq => Box::new(GraphicEq::new(sr, &self.fixed)?),
            EffectKind::Limiter => Box::new(Limiter::new(sr, &self.fixed)?),
            EffectKind::Chain(members) => {
                no_fixed()?;
                let mut built = Vec::with_capacity(members.len());
                let mut seen: BTreeMap<&str, usize> = BTreeMap::new();
                for m in members {
                    if m.sample_rate != sr {
                        return Err(Error::Config(format!(
                            "chain member `{}` runs at {} Hz, chain at {sr} Hz",
                            m.kind.id(),
                            m.sample_rate
                        )));
                    }
                    let count = seen.entry(m.kind.id()).or_default();
                    *count += 1;
                    let label = if *count == 1 {
                        m.kind.id().to_string()
                    } else {
                        format!("{}{}", m.kind.id(), count)
                    };
                    built.push((label, m.try_build()?));
                }
                Box::new(Chain::new(built)?)
            }
        })
    }

    /// Validates the configuration once and returns a shareable factory.
    pub fn factory(&self) -> Result<EffectFactory> {
        let probe = self.try_build()?;
        Ok(EffectFactory {
            spec: Arc::new(self.clone()),
            specs: probe.param_specs().clone(),
        })
    }
}

/// Factory for a validated [`EffectSpec`].
#[derive(Clone)]
pub struct EffectFactory {
    spec: Arc<EffectSpec>,
    specs: ParamSpecSet,
}

impl EffectFactory {
    pub fn spec(&self) -> &EffectSpec {
        &self.spec
    }

    pub fn param_specs(&self) -> &ParamSpecSet {
        &self.specs
    }
}

impl fmt::Debug for EffectFactory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("EffectFactory")
            .field("kind", &self.spec.kind.id())
            .field("params", &self.specs.len())
            .finish()
    }
}

impl FxFactory for EffectFactory {
    fn build(&self) -> Box<dyn BlackboxFx> {
        self.spec
            .try_build()
            .expect("effect spec validated when the factory was created")
    }
}
