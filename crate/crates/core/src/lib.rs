//! Opaque audio effects as trainable network layers.
//!
//! An encoder looks at a context window of audio and predicts normalized
//! parameters for one or more stateful effects. The effects stay black
//! boxes: gradients through them are estimated from perturbed evaluations
//! (simultaneous perturbation or two-sided finite differences) and chained
//! into ordinary backpropagation through the encoder.

pub mod effects;
pub mod encoder;
pub mod error;
pub mod exec;
pub mod fx;
pub mod io;
pub mod grad;
pub mod loss;
pub mod metrics;
pub mod rng;
pub mod spectral;
pub mod trainer;

pub use error::{Error, Result};
