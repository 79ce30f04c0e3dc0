//! Hard-positive adversarial auto-augmentation at desk scale.
//!
//! The crate generates augmentations that maximize a perceptual distance to
//! the original input while preserving its (pseudo) label, selects which
//! samples to augment by time-consistency, plugs the augmentations into a
//! small semi-supervised trainer, and verifies the underlying
//! information-theoretic identities exactly on discrete distributions.
//!
//! Inner loops that are data-parallel (batch augmentation, gradient
//! accumulation, exhaustive map search) run on rayon when the default
//! `parallel` feature is enabled, and fall back to equivalent sequential
//! code otherwise; both paths produce bit-identical results.

pub mod attack;
pub mod data;
pub mod error;
pub mod infotheory;
pub mod metrics;
pub mod network;
pub mod parallel;
pub mod perceptual;
pub mod rng;
pub mod selection;
pub mod tape;
pub mod tensor;
pub mod trainer;

pub use error::{Error, Result};
pub use tensor::Tensor;
