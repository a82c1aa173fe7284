use std::collections::{BTreeMap, BTreeSet};

use serde::Serialize;

use super::Dataset;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DatasetStats {
    pub vocabulary_size: usize,
    /// Classes with at least one instance.
    pub class_count: usize,
    pub instance_count: usize,
    pub per_class_counts: Vec<usize>,
    /// instances-per-class → number of classes with that many instances
    /// (classes without instances are not listed).
    pub repetition_histogram: BTreeMap<usize, usize>,
    pub signer_count: usize,
    /// `instance_count / class_count`, or 0 for an empty dataset.
    pub mean_repetitions: f64,
}

pub fn dataset_stats(d: &Dataset) -> DatasetStats {
    let mut per_class_counts = vec![0; d.vocabulary.len()];
    let mut signers = BTreeSet::new();
    for s in &d.sequences {
        per_class_counts[s.gloss_id] += 1;
        signers.insert(s.signer_id);
    }
    let mut repetition_histogram = BTreeMap::new();
    for &c in per_class_counts.iter().filter(|&&c| c > 0) {
        *repetition_histogram.entry(c).or_insert(0) += 1;
    }
    let class_count = repetition_histogram.values().sum();
    let instance_count = d.sequences.len();
    let mean_repetitions = if class_count == 0 {
        0.0
    } else {
        instance_count as f64 / class_count as f64
    };
    DatasetStats {
        vocabulary_size: d.vocabulary.len(),
        class_count,
        instance_count,
        per_class_counts,
        repetition_histogram,
        signer_count: signers.len(),
        mean_repetitions,
    }
}
