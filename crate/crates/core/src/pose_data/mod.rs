//! Landmark layout, the dataset model, JSON-lines I/O and cross-dataset
//! class mappings.

mod jsonl;
mod layout;
mod mapping;
mod stats;
mod types;

pub use jsonl::{
    dataset_to_jsonl, load_dataset, load_dataset_with_vocabulary, parse_record, read_dataset, read_dataset_report,
    save_dataset, LoadReport, Record,
};
pub use layout::{body, LandmarkLayout, Segment, BODY_POINTS, FACE_POINTS, FRAME_DIM, HAND_POINTS, NUM_POINTS};
pub use mapping::{map_labels, parse_mapping_tsv, ClassMapping};
pub use stats::{dataset_stats, DatasetStats};
pub use types::{normalize_gloss, Dataset, GlossVocabulary, PoseFrame, PoseSequence};

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DataError {
    #[error("{path}: {message}")]
    Io { path: String, message: String },
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("line {line}, frame {frame}: expected {expected} landmarks, found {found}")]
    Layout {
        line: usize,
        frame: usize,
        found: usize,
        expected: usize,
    },
    #[error("line {line}, frame {frame}, point {point}: {message}")]
    InvalidPoint {
        line: usize,
        frame: usize,
        point: usize,
        message: String,
    },
    #[error("line {line}: sequence has no frames")]
    EmptySequence { line: usize },
    #[error("line {line}: gloss {gloss:?} not in vocabulary")]
    UnknownGloss { line: usize, gloss: String },
    #[error("sequence {index}: gloss id {gloss_id} outside vocabulary of size {vocabulary}")]
    InvalidLabel {
        index: usize,
        gloss_id: usize,
        vocabulary: usize,
    },
    #[error("duplicate gloss {0:?} in vocabulary")]
    DuplicateGloss(String),
    #[error("dataset vocabulary does not match the mapping's source vocabulary")]
    VocabularyMismatch,
    #[error("gloss {0:?} has no mapping")]
    Unmapped(String),
    #[error("invalid class mapping: {0}")]
    Mapping(String),
}

impl DataError {
    /// 1-based source line, or 0 when the error is not tied to a line.
    pub fn line(&self) -> usize {
        match self {
            DataError::Parse { line, .. }
            | DataError::Layout { line, .. }
            | DataError::InvalidPoint { line, .. }
            | DataError::EmptySequence { line }
            | DataError::UnknownGloss { line, .. } => *line,
            _ => 0,
        }
    }
}
