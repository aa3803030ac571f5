//! Run configuration. Defaults follow the reference experimental setup:
//! 100 clients, 2 miners, `eta = 0.01`, 5 local epochs, batch size 10.

use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use super::SimError;
use crate::data::PartitionMode;
use crate::incentive::{ClusterParams, Strategy, Weighting};
use crate::model::{Architecture, HyperParams};

/// Which procedures of a round run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    /// All five procedures: learning coupled with mining.
    Bfl,
    /// Learning only; miner 0 acts as a plain aggregation server.
    Fl,
    /// Blockchain only; clients submit fixed-size transactions that queue
    /// for block space.
    Chain,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Aggregator {
    /// Contribution-weighted aggregation.
    Fair,
    /// Plain FedAvg mean.
    Simple,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LrSchedule {
    Constant,
    /// `eta_r = 2 / (mu (gamma + r))` with `gamma = max(8 L / mu, E)`.
    Decay,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Perturbation {
    SignFlip,
    Gaussian,
}

/// Vectors compared during contribution identification.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScoreSpace {
    /// Local models `w_r + delta_i` against the averaged global model.
    Model,
    /// The uploaded deltas against their simple average.
    Update,
}

/// What a malicious client perturbs before uploading.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AttackTarget {
    /// Its local model; the upload is the perturbed model minus `w_r`.
    Model,
    /// Its delta.
    Update,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TimeMode {
    Simulated,
    Wallclock,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DataSource {
    Synthetic,
    Idx,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AttackConfig {
    pub enabled: bool,
    pub min_attackers: usize,
    pub max_attackers: usize,
    pub perturbation: Perturbation,
    pub scale: f64,
    pub target: AttackTarget,
}

impl Default for AttackConfig {
    fn default() -> Self {
        AttackConfig {
            enabled: false,
            min_attackers: 1,
            max_attackers: 3,
            perturbation: Perturbation::SignFlip,
            scale: 1.0,
            target: AttackTarget::Model,
        }
    }
}

/// Link, compute and hashing costs behind the simulated clock. All times in
/// seconds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DelayConfig {
    pub time_mode: TimeMode,
    /// Cost of one mini-batch SGD step on a nominal client.
    pub compute_per_step: f64,
    /// Client speed factors are uniform on `[1 - h, 1 + h]`.
    pub compute_heterogeneity: f64,
    pub client_latency: f64,
    pub miner_latency: f64,
    pub per_byte: f64,
    /// Mean of the exponential jitter on client uplinks.
    pub jitter_mean: f64,
    /// Hashes per second per miner.
    pub hash_rate: f64,
    pub verify_cost: f64,
    /// Per pairwise-distance coordinate during clustering.
    pub cluster_cost: f64,
    /// Per coordinate during aggregation.
    pub aggregate_cost: f64,
    /// Size of one transaction in chain mode.
    pub tx_bytes: usize,
}

impl Default for DelayConfig {
    fn default() -> Self {
        DelayConfig {
            time_mode: TimeMode::Simulated,
            compute_per_step: 0.01,
            compute_heterogeneity: 0.5,
            client_latency: 0.05,
            miner_latency: 0.01,
            per_byte: 1e-6,
            jitter_mean: 0.02,
            hash_rate: 5000.0,
            verify_cost: 5e-4,
            cluster_cost: 2e-8,
            aggregate_cost: 1e-8,
            tx_bytes: 256,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataConfig {
    pub source: DataSource,
    pub n_samples: usize,
    pub n_features: usize,
    pub class_count: usize,
    pub separation: f64,
    pub idx_images: PathBuf,
    pub idx_labels: PathBuf,
    pub partition: PartitionMode,
    pub shards_per_client: usize,
    /// Fraction of clients whose shard labels are replaced by random classes.
    pub noisy_fraction: f64,
}

impl Default for DataConfig {
    fn default() -> Self {
        DataConfig {
            source: DataSource::Synthetic,
            n_samples: 2000,
            n_features: 20,
            class_count: 10,
            separation: 3.0,
            idx_images: PathBuf::new(),
            idx_labels: PathBuf::new(),
            partition: PartitionMode::NonIid,
            shards_per_client: 2,
            noisy_fraction: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub arch: Architecture,
    /// Hidden width, MLP only.
    pub hidden: usize,
    /// L2 coefficient `mu`.
    pub l2: f64,
    pub lr_schedule: LrSchedule,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            arch: Architecture::Logistic,
            hidden: 32,
            l2: 0.01,
            lr_schedule: LrSchedule::Constant,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimConfig {
    pub n_clients: usize,
    pub n_miners: usize,
    pub lambda: f64,
    pub rounds: usize,
    pub seed: u64,
    pub mode: Mode,
    pub strategy: Strategy,
    pub aggregator: Aggregator,
    /// Scale the weighted aggregate by `1 / lambda`.
    pub literal_aggregation: bool,
    pub weighting: Weighting,
    pub score_space: ScoreSpace,
    pub difficulty: u64,
    pub max_mining_attempts: u64,
    pub block_capacity: usize,
    pub base: f64,
    pub hp: HyperParams,
    pub cluster: ClusterParams,
    pub attack: AttackConfig,
    pub delay: DelayConfig,
    pub data: DataConfig,
    pub model: ModelConfig,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            n_clients: 100,
            n_miners: 2,
            lambda: 0.1,
            rounds: 100,
            seed: 0,
            mode: Mode::Bfl,
            strategy: Strategy::Keep,
            aggregator: Aggregator::Fair,
            literal_aggregation: false,
            weighting: Weighting::Distance,
            score_space: ScoreSpace::Model,
            difficulty: 1024,
            max_mining_attempts: 1 << 32,
            block_capacity: 20,
            base: 1.0,
            hp: HyperParams::default(),
            cluster: ClusterParams::default(),
            attack: AttackConfig::default(),
            delay: DelayConfig::default(),
            data: DataConfig::default(),
            model: ModelConfig::default(),
        }
    }
}

fn invalid(key: &str, why: impl Into<String>) -> SimError {
    SimError::Config {
        key: key.to_string(),
        reason: why.into(),
    }
}

impl SimConfig {
    /// Clients sampled per round: `round(lambda * n)`.
    pub fn selected_per_round(&self) -> usize {
        (self.lambda * self.n_clients as f64).round() as usize
    }

    pub fn validate(&self) -> Result<(), SimError> {
        if self.n_clients == 0 {
            return Err(invalid("n_clients", "must be >= 1"));
        }
        if self.n_miners == 0 {
            return Err(invalid("n_miners", "must be >= 1"));
        }
        if !(self.lambda > 0.0 && self.lambda <= 1.0) {
            return Err(invalid("lambda", format!("{} is outside (0, 1]", self.lambda)));
        }
        let k = self.selected_per_round();
        if k == 0 || k > self.n_clients {
            return Err(invalid("lambda", format!("lambda * n_clients rounds to {k}")));
        }
        if self.rounds == 0 {
            return Err(invalid("rounds", "must be >= 1"));
        }
        if !(self.hp.eta.is_finite() && self.hp.eta > 0.0) {
            return Err(invalid("hp.eta", "must be > 0"));
        }
        if self.hp.epochs == 0 {
            return Err(invalid("hp.epochs", "must be >= 1"));
        }
        if self.hp.batch_size == 0 {
            return Err(invalid("hp.batch_size", "must be >= 1"));
        }
        if self.difficulty == 0 {
            return Err(invalid("difficulty", "must be >= 1"));
        }
        if self.max_mining_attempts == 0 {
            return Err(invalid("max_mining_attempts", "must be >= 1"));
        }
        if self.block_capacity == 0 {
            return Err(invalid("block_capacity", "must be >= 1"));
        }
        if !(self.base.is_finite() && self.base > 0.0) {
            return Err(invalid("base", "must be > 0"));
        }
        if !(self.cluster.eps.is_finite() && self.cluster.eps > 0.0) {
            return Err(invalid("cluster.eps", "must be > 0"));
        }
        if self.cluster.min_pts == 0 {
            return Err(invalid("cluster.min_pts", "must be >= 1"));
        }
        let a = &self.attack;
        if a.enabled {
            if a.min_attackers > a.max_attackers {
                return Err(invalid("attack.min_attackers", "exceeds attack.max_attackers"));
            }
            if a.max_attackers > k {
                return Err(invalid(
                    "attack.max_attackers",
                    format!("exceeds the {k} selected clients"),
                ));
            }
            if !(a.scale.is_finite() && a.scale >= 0.0) {
                return Err(invalid("attack.scale", "must be >= 0"));
            }
        }
        let d = &self.delay;
        for (key, v) in [
            ("delay.compute_per_step", d.compute_per_step),
            ("delay.client_latency", d.client_latency),
            ("delay.miner_latency", d.miner_latency),
            ("delay.per_byte", d.per_byte),
            ("delay.jitter_mean", d.jitter_mean),
            ("delay.hash_rate", d.hash_rate),
            ("delay.verify_cost", d.verify_cost),
            ("delay.cluster_cost", d.cluster_cost),
            ("delay.aggregate_cost", d.aggregate_cost),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(invalid(key, "must be > 0"));
            }
        }
        if !(0.0..1.0).contains(&d.compute_heterogeneity) {
            return Err(invalid("delay.compute_heterogeneity", "must be in [0, 1)"));
        }
        if d.tx_bytes == 0 {
            return Err(invalid("delay.tx_bytes", "must be >= 1"));
        }
        let data = &self.data;
        if data.source == DataSource::Synthetic
            && (data.n_samples == 0 || data.n_features == 0 || data.class_count == 0)
        {
            return Err(invalid("data.n_samples", "synthetic sizes must be positive"));
        }
        if data.source == DataSource::Idx
            && (data.idx_images.as_os_str().is_empty() || data.idx_labels.as_os_str().is_empty())
        {
            return Err(invalid("data.idx_images", "idx source needs both file paths"));
        }
        if !(0.0..=1.0).contains(&data.noisy_fraction) {
            return Err(invalid("data.noisy_fraction", "must be in [0, 1]"));
        }
        if data.partition == PartitionMode::NonIid && data.shards_per_client == 0 {
            return Err(invalid("data.shards_per_client", "must be >= 1"));
        }
        if !(self.model.l2.is_finite() && self.model.l2 >= 0.0) {
            return Err(invalid("model.l2", "must be >= 0"));
        }
        if self.model.arch == Architecture::Mlp && self.model.hidden == 0 {
            return Err(invalid("model.hidden", "must be >= 1 for the MLP"));
        }
        if self.model.lr_schedule == LrSchedule::Decay && !(self.model.l2 > 0.0 && self.model.arch != Architecture::Mlp)
        {
            return Err(invalid(
                "model.lr_schedule",
                "decay needs a strongly convex model (l2 > 0, no MLP)",
            ));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_follow_reference_setup() {
        let c = SimConfig::default();
        assert_eq!((c.n_clients, c.n_miners), (100, 2));
        assert_eq!(
            c.hp,
            HyperParams {
                eta: 0.01,
                epochs: 5,
                batch_size: 10
            }
        );
        assert_eq!(c.selected_per_round(), 10);
        c.validate().unwrap();
    }

    #[test]
    fn invariants_name_the_key() {
        let mut c = SimConfig {
            lambda: 1.5,
            ..SimConfig::default()
        };
        assert!(matches!(c.validate(), Err(SimError::Config { key, .. }) if key == "lambda"));
        c.lambda = 0.001;
        assert!(matches!(c.validate(), Err(SimError::Config { key, .. }) if key == "lambda"));
        let c = SimConfig {
            rounds: 0,
            ..SimConfig::default()
        };
        assert!(matches!(c.validate(), Err(SimError::Config { key, .. }) if key == "rounds"));
        let c = SimConfig {
            attack: AttackConfig {
                enabled: true,
                max_attackers: 11,
                ..AttackConfig::default()
            },
            ..SimConfig::default()
        };
        assert!(matches!(c.validate(), Err(SimError::Config { key, .. }) if key == "attack.max_attackers"));
    }
}
