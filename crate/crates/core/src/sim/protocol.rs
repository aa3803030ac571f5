//! Client sampling, miner association, gradient exchange and attacks.

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::index::sample;
use rand::Rng;
use rand_distr::{Distribution, Normal};

use super::config::{AttackConfig, Perturbation};
use super::SimError;
use crate::incentive::GradientSet;
use crate::ledger::MinerId;
use crate::model::{ClientId, GradientVector};
use crate::rng::{self, Stream};

/// Uniform sample of `round(lambda * n)` distinct clients, ascending.
pub fn select_clients(n: usize, lambda: f64, round: u64, seed: u64) -> BTreeSet<ClientId> {
    let k = ((lambda * n as f64).round() as usize).clamp(1, n.max(1));
    let mut rng = rng::stream(seed, Stream::Selection, &[round]);
    sample(&mut rng, n, k).into_iter().map(|i| ClientId(i as u32)).collect()
}

/// Each client independently picks a uniformly random miner.
pub fn associate(clients: &BTreeSet<ClientId>, n_miners: usize, round: u64, seed: u64) -> BTreeMap<ClientId, MinerId> {
    clients
        .iter()
        .map(|&c| {
            let mut rng = rng::stream(seed, Stream::Association, &[round, u64::from(c.0)]);
            (c, MinerId(rng.random_range(0..n_miners) as u32))
        })
        .collect()
}

/// Every miner broadcasts its set and merges what it receives; afterwards all
/// miners hold the same union. A client appearing at two miners is a
/// protocol violation.
pub fn exchange(per_miner: &[GradientSet]) -> Result<Vec<GradientSet>, SimError> {
    let Some(first) = per_miner.first() else {
        return Ok(Vec::new());
    };
    let mut union = GradientSet::new(first.round);
    for set in per_miner {
        for g in set.entries.values() {
            if !union.insert(g.clone())? {
                return Err(SimError::Protocol(format!(
                    "client {} uploaded to more than one miner",
                    g.client.map_or(u32::MAX, |c| c.0)
                )));
            }
        }
    }
    Ok(vec![union; per_miner.len()])
}

/// Draws this round's attackers among `participants`: a uniform count in
/// `[min, max]` (capped by the participant count), then a uniform subset.
pub fn choose_attackers(
    participants: &BTreeSet<ClientId>,
    cfg: &AttackConfig,
    round: u64,
    seed: u64,
) -> BTreeSet<ClientId> {
    if !cfg.enabled || participants.is_empty() {
        return BTreeSet::new();
    }
    let mut rng = rng::stream(seed, Stream::AttackChoice, &[round]);
    let hi = cfg.max_attackers.min(participants.len());
    let lo = cfg.min_attackers.min(hi);
    let count = rng.random_range(lo..=hi);
    let pool: Vec<ClientId> = participants.iter().copied().collect();
    sample(&mut rng, pool.len(), count)
        .into_iter()
        .map(|i| pool[i])
        .collect()
}

/// `SignFlip` returns `-scale * g`; `Gaussian` adds `N(0, scale^2)` noise.
pub fn inject_attack(gradient: &GradientVector, cfg: &AttackConfig, seed: u64) -> GradientVector {
    let mut out = gradient.clone();
    match cfg.perturbation {
        Perturbation::SignFlip => out.values.iter_mut().for_each(|v| *v *= -cfg.scale),
        Perturbation::Gaussian => {
            if cfg.scale > 0.0 {
                let mut rng = rng::stream(seed, Stream::Attack, &[]);
                let noise = Normal::new(0.0, cfg.scale).expect("finite scale");
                out.values.iter_mut().for_each(|v| *v += noise.sample(&mut rng));
            }
        }
    }
    out
}
