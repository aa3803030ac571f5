use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{GradientVector, ModelError, ModelParams};
use crate::data::{DataSet, DataShard};

/// Learning rate, local epochs and batch size.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HyperParams {
    pub eta: f64,
    pub epochs: usize,
    pub batch_size: usize,
}

impl Default for HyperParams {
    fn default() -> Self {
        HyperParams {
            eta: 0.01,
            epochs: 5,
            batch_size: 10,
        }
    }
}

impl HyperParams {
    pub fn validate(&self) -> Result<(), ModelError> {
        if !(self.eta.is_finite() && self.eta >= 0.0) {
            return Err(ModelError::InvalidHyperParams(format!("eta = {}", self.eta)));
        }
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(ModelError::InvalidHyperParams(
                "epochs and batch_size must be >= 1".into(),
            ));
        }
        Ok(())
    }

    /// Batch steps one client performs on a shard of `shard_len` rows.
    pub fn steps_for(&self, shard_len: usize) -> usize {
        shard_len.div_ceil(self.batch_size) * self.epochs
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LocalUpdate {
    /// `w_new - w_old` after local training.
    pub gradient: GradientVector,
    pub steps: usize,
}

/// Runs `E` epochs of mini-batch SGD from `params` over the shard and returns
/// the parameter delta. `seed` only controls batch shuffling.
///
/// `eta` may be zero (the identity update) even though configs require a
/// positive rate.
pub fn local_update(
    params: &ModelParams,
    data: &DataSet,
    shard: &DataShard,
    hp: &HyperParams,
    round: u64,
    seed: u64,
) -> Result<LocalUpdate, ModelError> {
    if shard.is_empty() {
        return Err(ModelError::EmptyData);
    }
    hp.validate()?;
    if !params.values().iter().all(|v| v.is_finite()) {
        return Err(ModelError::NonFinite);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut w = params.clone();
    let mut grad = vec![0.0; w.len()];
    let mut order = shard.indices.clone();
    let mut steps = 0;
    for epoch in 0..hp.epochs {
        order.shuffle(&mut rng);
        for (batch, chunk) in order.chunks(hp.batch_size).enumerate() {
            let loss = w.loss_and_grad(data, chunk, &mut grad);
            if !loss.is_finite() || !grad.iter().all(|g| g.is_finite()) {
                return Err(ModelError::NumericalDivergence { epoch, batch });
            }
            for (wi, gi) in w.values_mut().iter_mut().zip(&grad) {
                *wi -= hp.eta * gi;
            }
            steps += 1;
        }
    }
    let delta = w.values().iter().zip(params.values()).map(|(n, o)| n - o).collect();
    Ok(LocalUpdate {
        gradient: GradientVector::local(shard.owner, round, delta),
        steps,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Evaluation {
    /// Regularised mean loss.
    pub loss: f64,
    pub accuracy: f64,
}

pub fn evaluate(params: &ModelParams, data: &DataSet, indices: &[usize]) -> Result<Evaluation, ModelError> {
    if indices.is_empty() {
        return Err(ModelError::EmptyData);
    }
    let correct = indices
        .iter()
        .filter(|&&i| params.predict(data.features(i)) == data.label(i))
        .count();
    Ok(Evaluation {
        loss: params.loss(data, indices),
        accuracy: correct as f64 / indices.len() as f64,
    })
}
