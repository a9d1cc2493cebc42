//! Training-free contrastive decoding engine for video-language models.
//!
//! The engine decodes against any model implementing [`model::ModelContract`]
//! by contrasting the original video representation with two purpose-built
//! negatives: a temporally homogenized one (layer-wise blending of frame
//! features toward their cross-frame mean) and a Gaussian-noised spatial
//! one. A per-token self-diagnostic compares frame-level attention
//! distributions across the three representations and steers the
//! contrastive penalty toward whichever corruption moved the attention
//! most. Two desk-scale models (a seeded toy transformer and a scripted
//! order probe) plus a scenario/sweep/self-check harness make the whole
//! pipeline verifiable without any external weights or data.

pub mod error;
pub mod model;
pub mod numerics;
pub mod tensor;

pub use error::{Error, Result};
