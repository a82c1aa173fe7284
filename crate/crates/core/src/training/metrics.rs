use std::collections::BTreeMap;
use std::sync::OnceLock;

use rayon::prelude::*;
use serde::{Serialize, Serializer};

use crate::diffcore::Tensor;
use crate::model::{predict_topk, Spoter};
use crate::pose_data::{Dataset, PoseSequence};
use crate::preprocess::{flatten, normalize_sequence};

use super::TrainError;

/// Env var capping evaluation threads.
pub const THREADS_ENV: &str = "VSCT_SPOTER_THREADS";

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize)]
pub struct ClassAccuracy {
    pub correct: usize,
    pub total: usize,
}

impl ClassAccuracy {
    pub fn accuracy(&self) -> f64 {
        self.correct as f64 / self.total as f64
    }
}

/// Per-class top-1 accuracy; classes without samples are absent.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct PerClassAccuracy {
    classes: BTreeMap<usize, ClassAccuracy>,
}

impl PerClassAccuracy {
    pub fn from_predictions(labels: &[usize], predictions: &[usize]) -> Self {
        assert_eq!(labels.len(), predictions.len());
        let mut classes = BTreeMap::<usize, ClassAccuracy>::new();
        for (&l, &p) in labels.iter().zip(predictions) {
            let e = classes.entry(l).or_default();
            e.total += 1;
            e.correct += usize::from(l == p);
        }
        Self { classes }
    }

    /// Builds a table directly from accuracies (one sample per class weight
    /// is irrelevant to selection).
    pub fn from_counts(counts: impl IntoIterator<Item = (usize, ClassAccuracy)>) -> Self {
        Self {
            classes: counts.into_iter().filter(|(_, c)| c.total > 0).collect(),
        }
    }

    pub fn get(&self, class: usize) -> Option<f64> {
        self.classes.get(&class).map(ClassAccuracy::accuracy)
    }

    pub fn counts(&self, class: usize) -> Option<ClassAccuracy> {
        self.classes.get(&class).copied()
    }

    pub fn len(&self) -> usize {
        self.classes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.classes.is_empty()
    }

    /// `(class, accuracy)` in ascending class order.
    pub fn iter(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.classes.iter().map(|(&c, a)| (c, a.accuracy()))
    }

    pub fn merge(&mut self, other: &PerClassAccuracy) {
        for (&c, a) in &other.classes {
            let e = self.classes.entry(c).or_default();
            e.correct += a.correct;
            e.total += a.total;
        }
    }
}

impl Serialize for PerClassAccuracy {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_map(self.classes.iter().map(|(c, a)| (c.to_string(), a.accuracy())))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Evaluation {
    /// k → fraction of samples whose label is among the top-k predictions.
    pub accuracy: BTreeMap<usize, f64>,
    pub per_class: PerClassAccuracy,
    pub samples: usize,
}

impl Evaluation {
    pub fn top(&self, k: usize) -> Option<f64> {
        self.accuracy.get(&k).copied()
    }
}

/// Model input for a sequence: normalized, or raw pixel coordinates.
pub fn prepare_input(s: &PoseSequence, normalize: bool) -> Result<Tensor, TrainError> {
    let flat = if normalize {
        normalize_sequence(s)?
    } else {
        flatten(s)
    };
    Ok(flat.to_tensor())
}

pub fn prepare_inputs(d: &Dataset, normalize: bool) -> Result<Vec<Tensor>, TrainError> {
    d.sequences.iter().map(|s| prepare_input(s, normalize)).collect()
}

fn pool() -> &'static rayon::ThreadPool {
    static POOL: OnceLock<rayon::ThreadPool> = OnceLock::new();
    POOL.get_or_init(|| {
        let mut builder = rayon::ThreadPoolBuilder::new();
        if let Some(n) = std::env::var(THREADS_ENV).ok().and_then(|v| v.parse::<usize>().ok()) {
            builder = builder.num_threads(n.max(1));
        }
        builder.build().expect("evaluation thread pool")
    })
}

/// Eval-mode logits for every input, in input order.
pub fn predict_logits(model: &Spoter, inputs: &[Tensor]) -> Result<Vec<Vec<f64>>, TrainError> {
    pool().install(|| {
        inputs
            .par_iter()
            .map(|x| model.forward(x, false, None).map_err(TrainError::from))
            .collect()
    })
}

/// Top-k accuracies and per-class top-1 counts from raw logits. `k` values
/// larger than the class count are clamped to it.
pub fn score_logits(logits: &[Vec<f64>], labels: &[usize], ks: &[usize]) -> Result<Evaluation, TrainError> {
    if logits.is_empty() {
        return Err(TrainError::EmptyData);
    }
    assert_eq!(logits.len(), labels.len());
    let classes = logits[0].len();
    let k_max = ks.iter().copied().max().unwrap_or(1).min(classes).max(1);
    let mut hits = BTreeMap::<usize, usize>::new();
    let mut top1 = Vec::with_capacity(labels.len());
    for (l, &label) in logits.iter().zip(labels) {
        let ranked = predict_topk(l, k_max)?;
        top1.push(ranked[0]);
        for &k in ks {
            let k_eff = k.min(classes);
            let hit = ranked[..k_eff].contains(&label);
            *hits.entry(k).or_default() += usize::from(hit);
        }
    }
    let n = labels.len();
    Ok(Evaluation {
        accuracy: hits.into_iter().map(|(k, h)| (k, h as f64 / n as f64)).collect(),
        per_class: PerClassAccuracy::from_predictions(labels, &top1),
        samples: n,
    })
}

/// Top-k accuracy over un-augmented inputs.
pub fn evaluate(model: &Spoter, data: &Dataset, ks: &[usize], normalize: bool) -> Result<Evaluation, TrainError> {
    if data.is_empty() {
        return Err(TrainError::EmptyData);
    }
    if ks.contains(&0) {
        return Err(TrainError::Config("k must be >= 1".into()));
    }
    let inputs = prepare_inputs(data, normalize)?;
    evaluate_prepared(model, &inputs, &data.labels(), ks)
}

pub fn evaluate_prepared(model: &Spoter, inputs: &[Tensor], labels: &[usize], ks: &[usize]) -> Result<Evaluation, TrainError> {
    if inputs.is_empty() {
        return Err(TrainError::EmptyData);
    }
    let logits = predict_logits(model, inputs)?;
    score_logits(&logits, labels, ks)
}

/// Per-class top-1 accuracy on un-augmented inputs.
pub fn per_class_accuracy(model: &Spoter, data: &Dataset, normalize: bool) -> Result<PerClassAccuracy, TrainError> {
    Ok(evaluate(model, data, &[1], normalize)?.per_class)
}
