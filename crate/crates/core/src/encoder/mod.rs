//! The trainable analyzer: a log-mel front-end followed by a small
//! convolutional network whose sigmoid head emits normalized effect
//! parameters. Forward and backward passes are written out by hand over a
//! flat weight vector.

pub mod checkpoint;
mod mel;
mod net;

pub use mel::{FeatureMap, MelConfig, MelFrontend};
pub use net::{BnStats, Encoder, EncoderConfig, ForwardCache, Layout, Mode};
