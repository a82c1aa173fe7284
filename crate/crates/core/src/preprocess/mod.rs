//! Pixel-space pose sequences to model-ready `T × 242` matrices.
//!
//! The normalization and augmentation constants here are defaults, not
//! published values; every one of them is configurable.

mod augment;
mod normalize;

pub use augment::{
    arm_chain, augment, augment_traced, ArmJoint, AugmentTrace, AugmentationDistribution, Side, DRAWS_PER_CALL,
};
pub use normalize::{flatten, normalize, normalize_sequence, subsample_frames, NormalizedSequence};

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PreprocessError {
    #[error("sequence has no frames")]
    EmptySequence,
    #[error("degenerate input: no landmark is present in any frame")]
    NoLandmarks,
    #[error("invalid augmentation distribution: {0}")]
    InvalidDistribution(String),
}

#[cfg(test)]
mod tests;
