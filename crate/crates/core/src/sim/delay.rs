//! Simulated-time delay model.
//!
//! The five per-round terms are computed from a [`RoundTrace`] recorded by the
//! engine. Random inputs (client speeds, uplink jitter, mining times) are
//! drawn from streams keyed by round and participant, so delays never depend
//! on scheduling or on which other clients took part.

use rand::Rng;
use rand_distr::{Distribution, Exp};
use serde::{Deserialize, Serialize};

use super::config::DelayConfig;
use crate::ledger::MinerId;
use crate::model::ClientId;
use crate::rng::{self, Stream};

/// Per-round inputs of the delay model.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RoundTrace {
    pub round: u64,
    pub n_miners: usize,
    /// SGD steps run by each training client.
    pub local_steps: Vec<(ClientId, usize)>,
    /// Uplink payload size per uploading client.
    pub uploads: Vec<(ClientId, usize)>,
    /// Uploads each miner verifies; empty when nothing is signed.
    pub verified_per_miner: Vec<usize>,
    /// Bytes each miner broadcasts during exchange.
    pub exchange_bytes: Vec<usize>,
    /// Points clustered during contribution identification.
    pub clustered: usize,
    /// Gradients entering the final aggregate.
    pub aggregated: usize,
    pub dim: usize,
    /// Seconds until the first miner found a nonce; `None` when nothing is mined.
    pub mining_time: Option<f64>,
    pub block_bytes: usize,
    /// Chain mode only: mean number of rounds the transactions confirmed this
    /// round waited in the queue.
    pub queue_wait_rounds: Option<f64>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Delays {
    pub t_local: f64,
    pub t_up: f64,
    pub t_ex: f64,
    pub t_gl: f64,
    pub t_bl: f64,
}

impl Delays {
    pub fn total(&self) -> f64 {
        self.t_local + self.t_up + self.t_ex + self.t_gl + self.t_bl
    }
}

/// Relative compute speed of `client` in `round`, uniform on `[1 - h, 1 + h]`.
pub(crate) fn speed(seed: u64, round: u64, client: ClientId, heterogeneity: f64) -> f64 {
    let mut rng = rng::stream(seed, Stream::Compute, &[round, u64::from(client.0)]);
    1.0 + heterogeneity * (2.0 * rng.random::<f64>() - 1.0)
}

fn jitter(seed: u64, round: u64, client: ClientId, mean: f64) -> f64 {
    let mut rng = rng::stream(seed, Stream::Jitter, &[round, u64::from(client.0)]);
    Exp::new(1.0 / mean).expect("positive jitter mean").sample(&mut rng)
}

fn link(latency: f64, bytes: usize, per_byte: f64) -> f64 {
    latency + bytes as f64 * per_byte
}

/// Computes the five delay terms of one round.
pub fn compute_delays(trace: &RoundTrace, cfg: &DelayConfig, seed: u64) -> Delays {
    let r = trace.round;
    let t_local = trace
        .local_steps
        .iter()
        .map(|&(c, steps)| steps as f64 * cfg.compute_per_step * speed(seed, r, c, cfg.compute_heterogeneity))
        .fold(0.0, f64::max);

    let uplink = trace
        .uploads
        .iter()
        .map(|&(c, bytes)| link(cfg.client_latency, bytes, cfg.per_byte) + jitter(seed, r, c, cfg.jitter_mean))
        .fold(0.0, f64::max);
    let verify = trace.verified_per_miner.iter().copied().max().unwrap_or(0) as f64 * cfg.verify_cost;
    let t_up = uplink + verify;

    let peers = trace.n_miners.saturating_sub(1) as f64;
    let t_ex = match trace.exchange_bytes.iter().copied().max() {
        Some(bytes) if peers > 0.0 => peers * link(cfg.miner_latency, bytes, cfg.per_byte),
        _ => 0.0,
    };

    let t_gl = if trace.clustered == 0 {
        0.0
    } else {
        let dim = trace.dim as f64;
        let k = trace.clustered as f64;
        cfg.cluster_cost * k * k * dim + cfg.aggregate_cost * trace.aggregated as f64 * dim
    };

    let t_bl = match trace.mining_time {
        None => 0.0,
        Some(mining) => {
            let hop = link(cfg.miner_latency, trace.block_bytes, cfg.per_byte);
            let broadcast = if peers > 0.0 { hop } else { 0.0 };
            match trace.queue_wait_rounds {
                None => mining + broadcast,
                Some(wait) => {
                    // Without round coupling every miner relays every block
                    // it sees to each peer.
                    let relay = peers * hop;
                    let own = mining + broadcast + relay;
                    own + wait * (t_up + t_ex + own)
                }
            }
        }
    };
    Delays {
        t_local,
        t_up,
        t_ex,
        t_gl,
        t_bl,
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MiningRace {
    pub winner: MinerId,
    /// Simulated seconds until the winner's nonce.
    pub time: f64,
}

/// Every miner's time to a valid nonce is exponential with rate
/// `hash_rate / difficulty`; the fastest wins, lowest id on ties.
pub fn mining_race(n_miners: usize, hash_rate: f64, difficulty: u64, round: u64, seed: u64) -> MiningRace {
    let exp = Exp::new(hash_rate / difficulty as f64).expect("positive mining rate");
    let mut best = MiningRace {
        winner: MinerId(0),
        time: f64::INFINITY,
    };
    for k in 0..n_miners {
        let mut rng = rng::stream(seed, Stream::Mining, &[round, k as u64]);
        let t = exp.sample(&mut rng);
        if t < best.time {
            best = MiningRace {
                winner: MinerId(k as u32),
                time: t,
            };
        }
    }
    best
}
