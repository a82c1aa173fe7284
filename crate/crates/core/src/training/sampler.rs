use rand::Rng;

use crate::pose_data::Dataset;

use super::TrainError;

/// Class-balanced sampling with replacement: each draw picks a class
/// uniformly, then one of its samples uniformly.
#[derive(Clone, Debug)]
pub struct BalancedSampler {
    by_class: Vec<Vec<usize>>,
}

impl BalancedSampler {
    /// Every vocabulary class must have at least one sample.
    pub fn new(train: &Dataset) -> Result<Self, TrainError> {
        let by_class = train.indices_by_class();
        if let Some(c) = by_class.iter().position(Vec::is_empty) {
            return Err(TrainError::EmptyClass {
                class: c,
                gloss: train.vocabulary.gloss(c).unwrap_or_default().to_owned(),
            });
        }
        Ok(Self { by_class })
    }

    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        let class = &self.by_class[rng.gen_range(0..self.by_class.len())];
        class[rng.gen_range(0..class.len())]
    }

    /// `len` sample indices.
    pub fn stream<R: Rng + ?Sized>(&self, rng: &mut R, len: usize) -> Vec<usize> {
        (0..len).map(|_| self.draw(rng)).collect()
    }
}

pub fn balanced_sampler<R: Rng + ?Sized>(
    train: &Dataset,
    rng: &mut R,
    epoch_length: Option<usize>,
) -> Result<Vec<usize>, TrainError> {
    let sampler = BalancedSampler::new(train)?;
    Ok(sampler.stream(rng, epoch_length.unwrap_or(train.len())))
}
