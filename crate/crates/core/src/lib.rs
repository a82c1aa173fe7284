//! Few-shot sign-lemma recognition from pose landmarks.
//!
//! - [`pose_data`]: landmark layout, datasets, JSON-lines I/O, class mappings
//! - [`preprocess`]: normalization, geometric augmentation, flattening
//! - [`diffcore`]: reverse-mode differentiation and SGD
//! - [`model`]: the SPOTER transformer and its checkpoint format
//! - [`training`]: the training loop, VSCT, balanced sampling, evaluation

pub mod diffcore;
pub mod gradcheck;
pub mod model;
pub mod pose_data;
pub mod preprocess;
pub mod rng;
pub mod run_config;
pub mod synthetic;
pub mod training;
