//! Validation score-conscious training: after each epoch, find the classes
//! the model handles worst and take one extra gradient step on a mini-batch
//! drawn from them, augmented with a separate distribution.

use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use rand::Rng;

use crate::diffcore::{Sgd, Tensor};
use crate::model::Spoter;
use crate::pose_data::Dataset;

use super::metrics::{evaluate_prepared, prepare_inputs, PerClassAccuracy};
use super::trainer::{minibatch_step, training_input};
use super::{TauBase, TrainConfig, TrainError, VsctConfig};

/// Slack absorbing binary rounding in `gamma·c` (0.1·30 is 3.0000000000000004).
pub const CEIL_SLACK: f64 = 1e-9;

/// Number of classes VSCT targets: `⌈gamma·c⌉`, at least 1.
pub fn vsct_class_count(gamma: f64, num_classes: usize) -> usize {
    ((gamma * num_classes as f64 - CEIL_SLACK).ceil().max(1.0)) as usize
}

/// The [`vsct_class_count`] lowest-accuracy classes (fewer if `acc` covers
/// fewer classes), worst first. Ties go to the lower class id.
pub fn select_worst_classes(acc: &PerClassAccuracy, gamma: f64, num_classes: usize) -> Vec<usize> {
    let want = vsct_class_count(gamma, num_classes);
    let mut ranked: Vec<(usize, f64)> = acc.iter().collect();
    // stable: entries arrive in ascending id order
    ranked.sort_by(|a, b| a.1.total_cmp(&b.1));
    ranked.into_iter().take(want).map(|(c, _)| c).collect()
}

/// Indices of a uniform random subset of the training samples whose class
/// is in `selected`. The size is `max(1, ⌊tau·|S|⌋)` for
/// [`TauBase::Restricted`] or `min(|S|, max(1, ⌊tau·|train|⌋))` for
/// [`TauBase::Full`], and 0 when S is empty. Order is random.
pub fn build_vsct_minibatch<R: Rng + ?Sized>(
    train: &Dataset,
    selected: &[usize],
    tau: f64,
    tau_base: TauBase,
    rng: &mut R,
) -> Vec<usize> {
    let wanted: BTreeSet<usize> = selected.iter().copied().collect();
    let mut pool: Vec<usize> = train
        .sequences
        .iter()
        .enumerate()
        .filter(|(_, s)| wanted.contains(&s.gloss_id))
        .map(|(i, _)| i)
        .collect();
    if pool.is_empty() {
        return pool;
    }
    let n = match tau_base {
        TauBase::Restricted => ((tau * pool.len() as f64).floor() as usize).max(1),
        TauBase::Full => ((tau * train.len() as f64).floor() as usize).max(1).min(pool.len()),
    };
    pool.shuffle(rng);
    pool.truncate(n);
    pool
}

#[derive(Clone, Debug)]
pub struct VsctOutcome {
    /// Per-class accuracy the selection was based on.
    pub per_class: PerClassAccuracy,
    pub selected: Vec<usize>,
    pub batch: Vec<usize>,
    /// Mean loss over the batch before the update; 0 for an empty batch.
    pub batch_loss: f64,
}

/// One VSCT pass using inputs already prepared for the statistics split.
#[allow(clippy::too_many_arguments)]
pub(crate) fn vsct_step_prepared<R: Rng + ?Sized>(
    model: &mut Spoter,
    sgd: &mut Sgd,
    train: &Dataset,
    stats_inputs: &[Tensor],
    stats_labels: &[usize],
    vsct: &VsctConfig,
    cfg: &TrainConfig,
    rng: &mut R,
) -> Result<VsctOutcome, TrainError> {
    let per_class = evaluate_prepared(model, stats_inputs, stats_labels, &[1])?.per_class;
    let selected = select_worst_classes(&per_class, vsct.gamma, model.config().num_classes);
    let batch = build_vsct_minibatch(train, &selected, vsct.tau, vsct.tau_base, rng);
    let mut samples = Vec::with_capacity(batch.len());
    for &i in &batch {
        let s = &train.sequences[i];
        let x = training_input(s, Some(&vsct.vsct_augmentation), cfg.use_normalization, rng)?;
        samples.push((x, s.gloss_id));
    }
    let batch_loss = if samples.is_empty() {
        0.0
    } else {
        minibatch_step(model, sgd, &samples, None)?
    };
    Ok(VsctOutcome {
        per_class,
        selected,
        batch,
        batch_loss,
    })
}

/// Measures per-class accuracy on `stats_split` (the validation split, or
/// the training split when none exists), selects the worst classes, builds
/// the mini-batch and applies one averaged gradient step at the training
/// learning rate.
pub fn vsct_step<R: Rng + ?Sized>(
    model: &mut Spoter,
    sgd: &mut Sgd,
    train: &Dataset,
    stats_split: &Dataset,
    vsct: &VsctConfig,
    cfg: &TrainConfig,
    rng: &mut R,
) -> Result<VsctOutcome, TrainError> {
    vsct.validate()?;
    let inputs = prepare_inputs(stats_split, cfg.use_normalization)?;
    vsct_step_prepared(model, sgd, train, &inputs, &stats_split.labels(), vsct, cfg, rng)
}
