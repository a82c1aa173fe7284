use std::time::Instant;

use rand::seq::SliceRandom;
use rand::{Rng, RngCore};
use serde::Serialize;

use crate::diffcore::{Sgd, Tensor};
use crate::model::Spoter;
use crate::pose_data::{Dataset, PoseSequence};
use crate::preprocess::{augment, AugmentationDistribution};
use crate::rng::{stream_rng, Stream};

use super::metrics::{evaluate_prepared, prepare_input, prepare_inputs, PerClassAccuracy};
use super::sampler::BalancedSampler;
use super::vsct::vsct_step_prepared;
use super::{TrainConfig, TrainError, VsctConfig};

#[derive(Clone, Debug, Serialize)]
pub struct EpochStats {
    /// 1-based.
    pub epoch: usize,
    /// Mean cross-entropy over the main pass.
    pub loss: f64,
    pub train_top1: f64,
    pub train_top5: f64,
    pub val_top1: Option<f64>,
    pub val_top5: Option<f64>,
    /// Per-class top-1 accuracy on the validation split (training split if
    /// absent), measured after the main pass.
    pub per_class: PerClassAccuracy,
    pub vsct_selected: Vec<usize>,
    pub vsct_batch_size: usize,
    /// Per-sample gradient contributions in the main pass.
    pub main_updates: usize,
    /// Per-sample gradient contributions in the VSCT pass.
    pub vsct_updates: usize,
    pub optimizer_steps: usize,
    pub elapsed_ms: u64,
}

/// Augments (when `aug` is given), then normalizes or flattens raw.
pub(crate) fn training_input<R: Rng + ?Sized>(
    s: &PoseSequence,
    aug: Option<&AugmentationDistribution>,
    normalize: bool,
    rng: &mut R,
) -> Result<Tensor, TrainError> {
    match aug {
        Some(dist) => prepare_input(&augment(s, dist, rng), normalize),
        None => prepare_input(s, normalize),
    }
}

/// Averages per-sample gradients over `samples` and takes one SGD step.
/// Returns the mean loss before the step.
pub(crate) fn minibatch_step(
    model: &mut Spoter,
    sgd: &mut Sgd,
    samples: &[(Tensor, usize)],
    mut dropout_rng: Option<&mut dyn RngCore>,
) -> Result<f64, TrainError> {
    let mut total_loss = 0.0;
    let mut acc: Option<Vec<Tensor>> = None;
    for (x, label) in samples {
        let rng = dropout_rng.as_mut().map(|r| &mut **r as &mut dyn RngCore);
        let (loss, grads) = model.loss_and_grads(x, *label, true, rng)?;
        total_loss += loss;
        match &mut acc {
            None => acc = Some(grads),
            Some(a) => {
                for (a, g) in a.iter_mut().zip(&grads) {
                    for (av, gv) in a.data_mut().iter_mut().zip(g.data()) {
                        *av += gv;
                    }
                }
            }
        }
    }
    let Some(mut grads) = acc else { return Ok(0.0) };
    let n = samples.len() as f64;
    if samples.len() > 1 {
        for g in &mut grads {
            for v in g.data_mut() {
                *v /= n;
            }
        }
    }
    sgd.step(model.params_mut().tensors_mut(), &grads)?;
    Ok(total_loss / n)
}

/// Epoch-by-epoch training state.
pub struct Trainer<'a> {
    model: Spoter,
    sgd: Sgd,
    train: &'a Dataset,
    cfg: TrainConfig,
    vsct: Option<VsctConfig>,
    train_inputs: Vec<Tensor>,
    train_labels: Vec<usize>,
    val_inputs: Option<(Vec<Tensor>, Vec<usize>)>,
    sampler: Option<BalancedSampler>,
    epoch: usize,
}

impl<'a> Trainer<'a> {
    pub fn new(
        model: Spoter,
        train: &'a Dataset,
        val: Option<&'a Dataset>,
        cfg: TrainConfig,
        vsct: Option<VsctConfig>,
    ) -> Result<Self, TrainError> {
        cfg.validate()?;
        if train.is_empty() {
            return Err(TrainError::EmptyData);
        }
        let vsct = if cfg.use_vsct {
            let v = vsct.ok_or_else(|| TrainError::Config("use_vsct is set but no VSCT config was given".into()))?;
            v.validate()?;
            Some(v)
        } else {
            None
        };
        let classes = model.config().num_classes;
        if classes != train.num_classes() {
            return Err(TrainError::Config(format!(
                "model has {classes} classes, training vocabulary has {}",
                train.num_classes()
            )));
        }
        if let Some(v) = val {
            if v.vocabulary != train.vocabulary {
                return Err(TrainError::Config(
                    "validation vocabulary differs from the training vocabulary".into(),
                ));
            }
        }
        let max = model.config().max_frames;
        for s in train.sequences.iter().chain(val.iter().flat_map(|v| v.sequences.iter())) {
            if s.len() > max {
                return Err(TrainError::Model(crate::model::ModelError::SequenceTooLong {
                    len: s.len(),
                    max,
                }));
            }
        }
        let sampler = if cfg.use_balanced_sampling {
            Some(BalancedSampler::new(train)?)
        } else {
            None
        };
        let train_inputs = prepare_inputs(train, cfg.use_normalization)?;
        let val_inputs = match val {
            Some(v) if !v.is_empty() => Some((prepare_inputs(v, cfg.use_normalization)?, v.labels())),
            _ => None,
        };
        let sgd = Sgd::new(cfg.learning_rate, cfg.momentum, cfg.weight_decay);
        Ok(Self {
            model,
            sgd,
            train,
            train_labels: train.labels(),
            cfg,
            vsct,
            train_inputs,
            val_inputs,
            sampler,
            epoch: 0,
        })
    }

    pub fn model(&self) -> &Spoter {
        &self.model
    }

    pub fn into_model(self) -> Spoter {
        self.model
    }

    pub fn epochs_done(&self) -> usize {
        self.epoch
    }

    pub fn has_validation(&self) -> bool {
        self.val_inputs.is_some()
    }

    fn epoch_order(&self, epoch: u64) -> Vec<usize> {
        let mut rng = stream_rng(self.cfg.seed, Stream::Order, epoch, 0);
        match &self.sampler {
            Some(s) => s.stream(&mut rng, self.train.len()),
            None => {
                let mut order: Vec<usize> = (0..self.train.len()).collect();
                order.shuffle(&mut rng);
                order
            }
        }
    }

    pub fn run_epoch(&mut self) -> Result<EpochStats, TrainError> {
        let started = Instant::now();
        self.epoch += 1;
        let epoch = self.epoch as u64;
        let seed = self.cfg.seed;
        let top5 = 5.min(self.model.config().num_classes);

        let order = self.epoch_order(epoch);
        let mut loss_sum = 0.0;
        let mut steps = 0;
        for (step, chunk) in order.chunks(self.cfg.batch_size).enumerate() {
            let mut samples = Vec::with_capacity(chunk.len());
            for (j, &i) in chunk.iter().enumerate() {
                let x = if self.cfg.use_augmentation {
                    let pos = (step * self.cfg.batch_size + j) as u64;
                    let mut rng = stream_rng(seed, Stream::Augment, epoch, pos);
                    training_input(
                        &self.train.sequences[i],
                        Some(&self.cfg.base_augmentation),
                        self.cfg.use_normalization,
                        &mut rng,
                    )?
                } else {
                    self.train_inputs[i].clone()
                };
                samples.push((x, self.train_labels[i]));
            }
            let mut dropout_rng = stream_rng(seed, Stream::Dropout, epoch, step as u64);
            let dropout = (self.model.config().dropout_rate > 0.0).then_some(&mut dropout_rng as &mut dyn RngCore);
            loss_sum += minibatch_step(&mut self.model, &mut self.sgd, &samples, dropout)? * samples.len() as f64;
            steps += 1;
        }
        let main_updates = order.len();

        let (stats_inputs, stats_labels) = match &self.val_inputs {
            Some((x, y)) => (x.as_slice(), y.as_slice()),
            None => (self.train_inputs.as_slice(), self.train_labels.as_slice()),
        };
        let (per_class, vsct_selected, vsct_updates) = match &self.vsct {
            Some(vsct) => {
                let mut rng = stream_rng(seed, Stream::VsctBatch, epoch, 0);
                let out = vsct_step_prepared(
                    &mut self.model,
                    &mut self.sgd,
                    self.train,
                    stats_inputs,
                    stats_labels,
                    vsct,
                    &self.cfg,
                    &mut rng,
                )?;
                if !out.batch.is_empty() {
                    steps += 1;
                }
                (out.per_class, out.selected, out.batch.len())
            }
            None => (
                evaluate_prepared(&self.model, stats_inputs, stats_labels, &[1])?.per_class,
                Vec::new(),
                0,
            ),
        };

        let train_eval = evaluate_prepared(&self.model, &self.train_inputs, &self.train_labels, &[1, top5])?;
        let val_eval = match &self.val_inputs {
            Some((x, y)) => Some(evaluate_prepared(&self.model, x, y, &[1, top5])?),
            None => None,
        };

        Ok(EpochStats {
            epoch: self.epoch,
            loss: loss_sum / main_updates as f64,
            train_top1: train_eval.top(1).unwrap_or_default(),
            train_top5: train_eval.top(top5).unwrap_or_default(),
            val_top1: val_eval.as_ref().and_then(|e| e.top(1)),
            val_top5: val_eval.as_ref().and_then(|e| e.top(top5)),
            per_class,
            vsct_batch_size: vsct_updates,
            vsct_selected,
            main_updates,
            vsct_updates,
            optimizer_steps: steps,
            elapsed_ms: started.elapsed().as_millis() as u64,
        })
    }
}

/// Runs `cfg.epochs` epochs, calling `on_epoch` after each.
pub fn train(
    model: Spoter,
    train: &Dataset,
    val: Option<&Dataset>,
    cfg: &TrainConfig,
    vsct: Option<&VsctConfig>,
    mut on_epoch: impl FnMut(&EpochStats),
) -> Result<(Spoter, Vec<EpochStats>), TrainError> {
    let mut trainer = Trainer::new(model, train, val, cfg.clone(), vsct.cloned())?;
    let mut history = Vec::with_capacity(cfg.epochs);
    for _ in 0..cfg.epochs {
        let stats = trainer.run_epoch()?;
        on_epoch(&stats);
        history.push(stats);
    }
    Ok((trainer.into_model(), history))
}
