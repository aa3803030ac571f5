//! The round engine.
//!
//! A round runs local update, upload, exchange, global update and mining in
//! that order, each phase finishing before the next starts. All state changes
//! are staged in locals and committed only after the last phase succeeds, so a
//! failed round leaves model, chains and queues untouched.

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::fmt;
use std::sync::Arc;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::config::{Aggregator, AttackTarget, DataSource, LrSchedule, Mode, ScoreSpace, SimConfig, TimeMode};
use super::convergence::{decayed_eta, lipschitz_estimate};
use super::delay::{compute_delays, mining_race, Delays, RoundTrace};
use super::protocol::{associate, choose_attackers, exchange, inject_attack, select_clients};
use super::SimError;
use crate::data::{load_idx, partition, synth_classification, DataSet, DataShard};
use crate::exec::ExecPolicy;
use crate::incentive::{
    detection_rate, fair_aggregate, identify_contributions, simple_average, AggregationForm, ContributionReport,
    GradientSet, ReportFlag, Strategy,
};
use crate::ledger::{
    check_block, check_upload, sign_upload, upload_payload, Block, Chain, ClientKeys, Digest, Ed25519Scheme,
    KeyRegistry, MinerId, SignedUpload,
};
use crate::model::{
    evaluate, local_update, Architecture, ClientId, GradientVector, HyperParams, ModelLayout, ModelParams,
};
use crate::rng::{self, Stream};

/// Procedures of one round, in execution order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    LocalUpdate,
    Upload,
    Exchange,
    GlobalUpdate,
    Mining,
}

impl fmt::Display for Phase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Phase::LocalUpdate => "local update",
            Phase::Upload => "upload",
            Phase::Exchange => "exchange",
            Phase::GlobalUpdate => "global update",
            Phase::Mining => "mining",
        })
    }
}

/// Checks that phases were entered in strictly increasing `(round, phase)`
/// order with rounds numbered consecutively from 1.
pub fn check_barrier(trace: &[(u64, Phase)]) -> Result<(), SimError> {
    let mut prev: Option<(u64, Phase)> = None;
    for &(round, phase) in trace {
        let ok = match prev {
            None => round == 1,
            Some((r, p)) => (round == r && phase > p) || round == r + 1,
        };
        if !ok {
            return Err(SimError::Protocol(format!(
                "{phase} of round {round} entered after {prev:?}"
            )));
        }
        prev = Some((round, phase));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct RoundReport {
    pub round: u64,
    pub delays: Delays,
    /// Sum of the five delay terms.
    pub total_delay: f64,
    /// Mean over all clients of the global model's accuracy on their shard.
    pub mean_accuracy: f64,
    /// Regularised loss of the global model over all shards.
    pub global_loss: f64,
    pub selected: BTreeSet<ClientId>,
    /// Selected clients minus those benched after the previous round.
    pub participants: BTreeSet<ClientId>,
    pub attackers: BTreeSet<ClientId>,
    pub contribution: ContributionReport,
    /// Share of attackers dropped; only under the discard strategy.
    pub detection_rate: Option<f64>,
    pub winning_miner: Option<MinerId>,
    pub block_hash: Option<Digest>,
    pub mining_attempts: Option<u64>,
    /// Chain mode: transactions still waiting after this round's block.
    pub queue_len: usize,
}

fn layout_for(cfg: &SimConfig, data: &DataSet) -> ModelLayout {
    let m = &cfg.model;
    match m.arch {
        Architecture::Logistic => ModelLayout::logistic(data.dim(), data.class_count(), m.l2),
        Architecture::Linear => ModelLayout::linear(data.dim(), m.l2),
        Architecture::Mlp => ModelLayout::mlp(data.dim(), m.hidden, data.class_count(), m.l2),
    }
}

/// Builds the configured dataset.
pub(crate) fn load_data(cfg: &SimConfig) -> Result<DataSet, SimError> {
    let d = &cfg.data;
    Ok(match d.source {
        DataSource::Synthetic => {
            synth_classification(d.n_samples, d.n_features, d.class_count, d.separation, cfg.seed)?
        }
        DataSource::Idx => load_idx(&d.idx_images, &d.idx_labels)?,
    })
}

struct Staged {
    params: ModelParams,
    chains: Option<Vec<Chain>>,
    server: Option<GradientVector>,
    queue: Option<VecDeque<u64>>,
    benched: BTreeSet<ClientId>,
}

/// `g += sign * base`, elementwise.
fn shift(g: &mut GradientVector, base: &[f64], sign: f64) {
    for (v, b) in g.values.iter_mut().zip(base) {
        *v += sign * b;
    }
}

pub struct Simulation {
    cfg: SimConfig,
    exec: ExecPolicy,
    data: DataSet,
    shards: Vec<DataShard>,
    all_rows: Vec<usize>,
    noisy: BTreeSet<ClientId>,
    params: ModelParams,
    lipschitz: Option<f64>,
    keys: Option<(ClientKeys, KeyRegistry)>,
    chains: Vec<Chain>,
    server: Vec<GradientVector>,
    queue: VecDeque<u64>,
    benched: BTreeSet<ClientId>,
    round: u64,
    trace: Vec<(u64, Phase)>,
}

impl Simulation {
    /// Validates the config, builds the dataset and partitions it.
    pub fn new(cfg: SimConfig, exec: ExecPolicy) -> Result<Self, SimError> {
        cfg.validate()?;
        let data = load_data(&cfg)?;
        Self::with_data(cfg, data, exec)
    }

    /// Like [`Simulation::new`] but with a caller-supplied dataset.
    pub fn with_data(cfg: SimConfig, mut data: DataSet, exec: ExecPolicy) -> Result<Self, SimError> {
        cfg.validate()?;
        let shards = partition(
            &data,
            cfg.n_clients,
            cfg.data.partition,
            cfg.data.shards_per_client,
            cfg.seed,
        )?;

        let noisy_count = (cfg.data.noisy_fraction * cfg.n_clients as f64).round() as usize;
        let mut pick = rng::stream(cfg.seed, Stream::LabelNoise, &[0]);
        let noisy: BTreeSet<ClientId> = rand::seq::index::sample(&mut pick, cfg.n_clients, noisy_count)
            .into_iter()
            .map(|i| ClientId(i as u32))
            .collect();
        for c in &noisy {
            let rows = shards[c.0 as usize].indices.clone();
            data.randomize_labels(&rows, rng::derive(cfg.seed, Stream::LabelNoise, &[1, u64::from(c.0)]));
        }

        let mut all_rows: Vec<usize> = shards.iter().flat_map(|s| s.indices.iter().copied()).collect();
        all_rows.sort_unstable();
        let layout = layout_for(&cfg, &data);
        let params = ModelParams::init(layout, rng::derive(cfg.seed, Stream::Init, &[]));
        let lipschitz = match cfg.model.lr_schedule {
            LrSchedule::Decay => Some(lipschitz_estimate(&data, &all_rows, cfg.model.l2)),
            LrSchedule::Constant => None,
        };
        let keys = (cfg.mode == Mode::Bfl).then(|| {
            let k = ClientKeys::generate(Arc::new(Ed25519Scheme), cfg.n_clients, cfg.seed);
            let reg = k.registry();
            (k, reg)
        });
        let chains = if cfg.mode == Mode::Bfl {
            vec![Chain::genesis(params.len()); cfg.n_miners]
        } else {
            Vec::new()
        };
        Ok(Simulation {
            cfg,
            exec,
            data,
            shards,
            all_rows,
            noisy,
            params,
            lipschitz,
            keys,
            chains,
            server: Vec::new(),
            queue: VecDeque::new(),
            benched: BTreeSet::new(),
            round: 0,
            trace: Vec::new(),
        })
    }

    pub fn config(&self) -> &SimConfig {
        &self.cfg
    }

    pub fn data(&self) -> &DataSet {
        &self.data
    }

    pub fn shards(&self) -> &[DataShard] {
        &self.shards
    }

    /// Every row held by some client, ascending.
    pub fn all_rows(&self) -> &[usize] {
        &self.all_rows
    }

    /// Clients whose labels were randomised.
    pub fn noisy_clients(&self) -> &BTreeSet<ClientId> {
        &self.noisy
    }

    pub fn params(&self) -> &ModelParams {
        &self.params
    }

    /// Smoothness estimate used by the decaying step size.
    pub fn lipschitz(&self) -> Option<f64> {
        self.lipschitz
    }

    /// One chain per miner; empty outside bfl mode.
    pub fn chains(&self) -> &[Chain] {
        &self.chains
    }

    /// Global gradients recorded by the fl-mode server.
    pub fn server_record(&self) -> &[GradientVector] {
        &self.server
    }

    pub fn queue_len(&self) -> usize {
        self.queue.len()
    }

    /// Completed rounds.
    pub fn round(&self) -> u64 {
        self.round
    }

    pub fn trace(&self) -> &[(u64, Phase)] {
        &self.trace
    }

    pub fn global_loss(&self) -> f64 {
        self.params.loss(&self.data, &self.all_rows)
    }

    /// Step size of `round` under the configured schedule.
    pub fn eta_for(&self, round: u64) -> f64 {
        match self.lipschitz {
            Some(l) => decayed_eta(self.cfg.model.l2, l, self.cfg.hp.epochs, round),
            None => self.cfg.hp.eta,
        }
    }

    /// Runs all remaining rounds.
    pub fn run(&mut self) -> Result<Vec<RoundReport>, SimError> {
        let remaining = (self.cfg.rounds as u64).saturating_sub(self.round);
        (0..remaining).map(|_| self.run_round()).collect()
    }

    pub fn run_round(&mut self) -> Result<RoundReport, SimError> {
        let r = self.round + 1;
        let (report, staged) = self.execute(r)?;
        self.params = staged.params;
        if let Some(chains) = staged.chains {
            self.chains = chains;
        }
        if let Some(g) = staged.server {
            self.server.push(g);
        }
        if let Some(q) = staged.queue {
            self.queue = q;
        }
        self.benched = staged.benched;
        self.round = r;
        Ok(report)
    }

    fn enter(&mut self, r: u64, phase: Phase) {
        self.trace.push((r, phase));
    }

    fn execute(&mut self, r: u64) -> Result<(RoundReport, Staged), SimError> {
        let cfg = self.cfg.clone();
        let seed = cfg.seed;
        let wall = cfg.delay.time_mode == TimeMode::Wallclock;
        let aborted = |phase: Phase| {
            move |e: SimError| SimError::RoundAborted {
                round: r,
                phase,
                source: Box::new(e),
            }
        };

        let selected = select_clients(cfg.n_clients, cfg.lambda, r, seed);
        let mut participants: BTreeSet<ClientId> = selected.difference(&self.benched).copied().collect();
        if participants.is_empty() {
            participants = selected.clone();
        }
        let attackers = match cfg.mode {
            Mode::Chain => BTreeSet::new(),
            _ => choose_attackers(&participants, &cfg.attack, r, seed),
        };

        let mut trace = RoundTrace {
            round: r,
            n_miners: cfg.n_miners,
            ..RoundTrace::default()
        };
        let mut measured = Delays::default();
        let mut staged = Staged {
            params: self.params.clone(),
            chains: None,
            server: None,
            queue: None,
            benched: BTreeSet::new(),
        };
        let mut contribution = ContributionReport::default();
        let mut winning_miner = None;
        let mut block_hash = None;
        let mut mining_attempts = None;

        if cfg.mode == Mode::Chain {
            // Clients submit fixed-size transactions; no learning happens.
            self.enter(r, Phase::Upload);
            let t0 = Instant::now();
            let everyone: BTreeSet<ClientId> = (0..cfg.n_clients as u32).map(ClientId).collect();
            trace.uploads = everyone.iter().map(|&c| (c, cfg.delay.tx_bytes)).collect();
            let assoc = associate(&everyone, cfg.n_miners, r, seed);
            let mut per_miner = vec![0usize; cfg.n_miners];
            for m in assoc.values() {
                per_miner[m.0 as usize] += 1;
            }
            trace.verified_per_miner = per_miner;
            let mut queue = self.queue.clone();
            queue.extend(std::iter::repeat_n(r, cfg.n_clients));
            measured.t_up = t0.elapsed().as_secs_f64();

            self.enter(r, Phase::Exchange);
            trace.exchange_bytes = vec![queue.len() * cfg.delay.tx_bytes];

            self.enter(r, Phase::Mining);
            let t0 = Instant::now();
            let race = mining_race(cfg.n_miners, cfg.delay.hash_rate, cfg.difficulty, r, seed);
            let confirmed = queue.len().min(cfg.block_capacity);
            let waited: u64 = queue.drain(..confirmed).map(|arrival| r - arrival).sum();
            trace.mining_time = Some(race.time);
            trace.block_bytes = 128 + confirmed * cfg.delay.tx_bytes;
            trace.queue_wait_rounds = Some(if confirmed == 0 {
                0.0
            } else {
                waited as f64 / confirmed as f64
            });
            winning_miner = Some(race.winner);
            measured.t_bl = t0.elapsed().as_secs_f64();
            staged.queue = Some(queue);
        } else {
            // I. local update
            self.enter(r, Phase::LocalUpdate);
            let t0 = Instant::now();
            let hp = HyperParams {
                eta: self.eta_for(r),
                ..cfg.hp
            };
            let order: Vec<ClientId> = participants.iter().copied().collect();
            let params = &self.params;
            let (data, shards) = (&self.data, &self.shards);
            let updates = self.exec.map(&order, |&c| {
                let shard = &shards[c.0 as usize];
                let up = local_update(
                    params,
                    data,
                    shard,
                    &hp,
                    r,
                    rng::derive(seed, Stream::Shuffle, &[r, u64::from(c.0)]),
                )
                .map_err(|source| SimError::ClientUpdate { client: c, source })?;
                let gradient = if attackers.contains(&c) {
                    let attack_seed = rng::derive(seed, Stream::Attack, &[r, u64::from(c.0)]);
                    match cfg.attack.target {
                        AttackTarget::Update => inject_attack(&up.gradient, &cfg.attack, attack_seed),
                        AttackTarget::Model => {
                            let mut model = up.gradient;
                            shift(&mut model, params.values(), 1.0);
                            let mut forged = inject_attack(&model, &cfg.attack, attack_seed);
                            shift(&mut forged, params.values(), -1.0);
                            forged
                        }
                    }
                } else {
                    up.gradient
                };
                Ok::<_, SimError>((gradient, up.steps))
            });
            let mut gradients = Vec::with_capacity(order.len());
            for (c, u) in order.iter().zip(updates) {
                let (g, steps) = u.map_err(aborted(Phase::LocalUpdate))?;
                trace.local_steps.push((*c, steps));
                gradients.push(g);
            }
            measured.t_local = t0.elapsed().as_secs_f64();

            // II. upload
            self.enter(r, Phase::Upload);
            let t0 = Instant::now();
            let per_miner = if cfg.mode == Mode::Bfl {
                self.upload_signed(r, &participants, gradients, &mut trace)
                    .map_err(aborted(Phase::Upload))?
            } else {
                let mut set = GradientSet::new(r);
                for g in gradients {
                    let c = g.client.expect("local gradient");
                    trace.uploads.push((c, upload_payload(c, &g).len()));
                    set.insert(g).map_err(|e| aborted(Phase::Upload)(e.into()))?;
                }
                vec![set]
            };
            measured.t_up = t0.elapsed().as_secs_f64();

            // III. exchange
            let gset = if cfg.mode == Mode::Bfl {
                self.enter(r, Phase::Exchange);
                let t0 = Instant::now();
                trace.exchange_bytes = per_miner
                    .iter()
                    .map(|s| s.entries.iter().map(|(c, g)| upload_payload(*c, g).len()).sum())
                    .collect();
                let mut sets = exchange(&per_miner).map_err(aborted(Phase::Exchange))?;
                measured.t_ex = t0.elapsed().as_secs_f64();
                sets.swap_remove(0)
            } else {
                trace.n_miners = 1;
                per_miner.into_iter().next().expect("server set")
            };

            // IV. global update
            self.enter(r, Phase::GlobalUpdate);
            let t0 = Instant::now();
            let (report, global) = self.global_update(gset).map_err(aborted(Phase::GlobalUpdate))?;
            trace.clustered = report.labels.len() + 1;
            trace.aggregated = report.labels.len() - report.dropped.len();
            trace.dim = global.dim();
            staged
                .params
                .apply(&global.values)
                .map_err(|e| aborted(Phase::GlobalUpdate)(e.into()))?;
            if cfg.strategy == Strategy::Discard {
                staged.benched = report.dropped.clone();
            }
            measured.t_gl = t0.elapsed().as_secs_f64();

            // V. mining
            if cfg.mode == Mode::Bfl {
                self.enter(r, Phase::Mining);
                let t0 = Instant::now();
                let race = mining_race(cfg.n_miners, cfg.delay.hash_rate, cfg.difficulty, r, seed);
                let (block, attempts) = self
                    .mine_block(r, race.winner, global.clone(), &report)
                    .map_err(aborted(Phase::Mining))?;
                let mut chains = self.chains.clone();
                for chain in &mut chains {
                    chain
                        .append(block.clone(), cfg.difficulty)
                        .map_err(|e| aborted(Phase::Mining)(e.into()))?;
                }
                let digest = chains[0].digest();
                if chains.iter().any(|c| c.digest() != digest) {
                    return Err(aborted(Phase::Mining)(SimError::Protocol(
                        "miner chains diverged".into(),
                    )));
                }
                trace.mining_time = Some(race.time);
                trace.block_bytes = block.to_bytes().len();
                winning_miner = Some(race.winner);
                block_hash = Some(block.hash);
                mining_attempts = Some(attempts);
                staged.chains = Some(chains);
                measured.t_bl = t0.elapsed().as_secs_f64();
            } else {
                staged.server = Some(global);
            }
            contribution = report;
        }

        let delays = if wall {
            measured
        } else {
            compute_delays(&trace, &cfg.delay, seed)
        };
        let (mean_accuracy, global_loss) = self.evaluate(&staged.params)?;
        let detection = (cfg.strategy == Strategy::Discard && !attackers.is_empty())
            .then(|| detection_rate(&attackers, &contribution.dropped))
            .transpose()?;
        let report = RoundReport {
            round: r,
            total_delay: delays.total(),
            delays,
            mean_accuracy,
            global_loss,
            selected,
            participants,
            attackers,
            contribution,
            detection_rate: detection,
            winning_miner,
            block_hash,
            mining_attempts,
            queue_len: staged.queue.as_ref().map_or(self.queue.len(), VecDeque::len),
        };
        Ok((report, staged))
    }

    fn upload_signed(
        &self,
        r: u64,
        participants: &BTreeSet<ClientId>,
        gradients: Vec<GradientVector>,
        trace: &mut RoundTrace,
    ) -> Result<Vec<GradientSet>, SimError> {
        let (keys, registry) = self.keys.as_ref().expect("bfl mode has keys");
        let uploads: Vec<SignedUpload> = self
            .exec
            .map(&gradients, |g| sign_upload(keys, g.clone()))
            .into_iter()
            .collect::<Result<_, _>>()?;
        let assoc = associate(participants, self.cfg.n_miners, r, self.cfg.seed);
        let mut sets = vec![GradientSet::new(r); self.cfg.n_miners];
        let mut verified = vec![0usize; self.cfg.n_miners];
        for up in uploads {
            let miner = assoc[&up.signer];
            check_upload(registry, &up).map_err(|why| {
                SimError::Protocol(format!(
                    "miner {miner} rejected upload of client {}: {why:?}",
                    up.signer
                ))
            })?;
            verified[miner.0 as usize] += 1;
            trace.uploads.push((
                up.signer,
                upload_payload(up.signer, &up.gradient).len() + up.signature.len(),
            ));
            if !sets[miner.0 as usize].insert(up.gradient)? {
                return Err(SimError::Protocol(format!("client {} uploaded twice", up.signer)));
            }
        }
        trace.verified_per_miner = verified;
        Ok(sets)
    }

    /// Contribution identification followed by the configured aggregation.
    fn global_update(&self, mut gset: GradientSet) -> Result<(ContributionReport, GradientVector), SimError> {
        let cfg = &self.cfg;
        gset.global = Some(simple_average(&gset)?);
        let (mut report, mut survivors) = match cfg.score_space {
            ScoreSpace::Update => {
                identify_contributions(&gset, &cfg.cluster, cfg.strategy, cfg.base, cfg.weighting, self.exec)?
            }
            ScoreSpace::Model => {
                let mut models = gset.clone();
                for g in models.entries.values_mut().chain(models.global.iter_mut()) {
                    shift(g, self.params.values(), 1.0);
                }
                let (report, _) =
                    identify_contributions(&models, &cfg.cluster, cfg.strategy, cfg.base, cfg.weighting, self.exec)?;
                let mut kept = gset.clone();
                kept.entries.retain(|c, _| !report.dropped.contains(c));
                (report, kept)
            }
        };
        if survivors.is_empty() {
            report.flags.push(ReportFlag::DiscardFallback);
            report.dropped.clear();
            survivors = gset;
        }
        let global = match cfg.aggregator {
            Aggregator::Simple => simple_average(&survivors)?,
            Aggregator::Fair => {
                let weights: BTreeMap<ClientId, f64> = survivors
                    .entries
                    .keys()
                    .map(|c| (*c, cfg.weighting.weight(report.all_thetas[c])))
                    .collect();
                let form = if cfg.literal_aggregation {
                    AggregationForm::Literal { lambda: cfg.lambda }
                } else {
                    AggregationForm::Normalized
                };
                let agg = fair_aggregate(&survivors, &weights, form)?;
                if agg.zero_theta_fallback && !report.flags.contains(&ReportFlag::ZeroThetaFallback) {
                    report.flags.push(ReportFlag::ZeroThetaFallback);
                }
                agg.global
            }
        };
        Ok((report, global))
    }

    fn mine_block(
        &self,
        r: u64,
        winner: MinerId,
        global: GradientVector,
        report: &ContributionReport,
    ) -> Result<(Block, u64), SimError> {
        let cfg = &self.cfg;
        let tip = self.chains[winner.0 as usize].tip();
        let template = Block::template(tip, r, winner, global, report.rewards.clone());
        let (block, attempts) = template.seal(
            cfg.difficulty,
            cfg.max_mining_attempts,
            rng::derive(cfg.seed, Stream::Nonce, &[r]),
        )?;
        // every miner verifies before anyone appends
        for (k, chain) in self.chains.iter().enumerate() {
            check_block(chain, &block, cfg.difficulty)
                .map_err(|why| SimError::Protocol(format!("miner {k} rejected block {}: {why}", block.index)))?;
        }
        Ok((block, attempts))
    }

    fn evaluate(&self, params: &ModelParams) -> Result<(f64, f64), SimError> {
        let accs = self.exec.map(&self.shards, |s| {
            evaluate(params, &self.data, &s.indices).map(|e| e.accuracy)
        });
        let mut total = 0.0;
        for a in accs {
            total += a?;
        }
        Ok((
            total / self.shards.len() as f64,
            params.loss(&self.data, &self.all_rows),
        ))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::AttackConfig;

    fn small(mode: Mode) -> SimConfig {
        let mut c = SimConfig {
            n_clients: 10,
            n_miners: 2,
            lambda: 1.0,
            rounds: 4,
            mode,
            difficulty: 16,
            ..SimConfig::default()
        };
        c.data.n_samples = 400;
        c.data.n_features = 6;
        c.data.class_count = 4;
        c
    }

    #[test]
    fn bfl_appends_one_block_per_round() {
        let mut sim = Simulation::new(small(Mode::Bfl), ExecPolicy::Sequential).unwrap();
        for r in 1..=4u64 {
            let rep = sim.run_round().unwrap();
            assert_eq!(rep.round, r);
            assert!(sim.chains().iter().all(|c| c.len() == r as usize + 1));
            let bytes = sim.chains()[0].to_bytes();
            assert!(sim.chains().iter().all(|c| c.to_bytes() == bytes));
            assert_eq!(rep.block_hash, Some(sim.chains()[0].tip().hash));
            assert!((sim.chains()[0].tip().reward_total() - 1.0).abs() < 1e-9);
        }
        sim.chains()[1].validate(16).unwrap();
        check_barrier(sim.trace()).unwrap();
        assert_eq!(sim.trace().len(), 4 * 5);
    }

    #[test]
    fn fl_matches_bfl_learning() {
        let mut a = Simulation::new(small(Mode::Bfl), ExecPolicy::Parallel).unwrap();
        let mut b = Simulation::new(small(Mode::Fl), ExecPolicy::Sequential).unwrap();
        let ra = a.run().unwrap();
        let rb = b.run().unwrap();
        for (x, y) in ra.iter().zip(&rb) {
            assert_eq!(x.mean_accuracy, y.mean_accuracy);
            assert_eq!(x.global_loss, y.global_loss);
            assert_eq!(x.contribution, y.contribution);
            assert!(y.delays.t_ex == 0.0 && y.delays.t_bl == 0.0);
            assert!(x.total_delay > y.total_delay);
        }
        assert!(b.chains().is_empty());
        assert_eq!(b.server_record().len(), 4);
        assert_eq!(a.params(), b.params());
    }

    #[test]
    fn chain_mode_queue_grows_past_capacity() {
        let mut c = small(Mode::Chain);
        c.n_clients = 30;
        c.block_capacity = 20;
        c.rounds = 12;
        let mut sim = Simulation::new(c.clone(), ExecPolicy::Sequential).unwrap();
        let reps = sim.run().unwrap();
        let lens: Vec<usize> = reps.iter().map(|r| r.queue_len).collect();
        assert_eq!(lens, (1..=12).map(|r| 10 * r).collect::<Vec<_>>());
        assert!(reps.iter().all(|r| r.delays.t_local == 0.0 && r.delays.t_gl == 0.0));
        // below capacity nothing queues, and the mean delay is far lower
        c.n_clients = 10;
        let mut under = Simulation::new(c, ExecPolicy::Sequential).unwrap();
        let low = under.run().unwrap();
        assert!(low.iter().all(|r| r.queue_len == 0));
        let mean = |v: &[RoundReport]| v.iter().map(|r| r.total_delay).sum::<f64>() / v.len() as f64;
        assert!(mean(&reps) > 2.0 * mean(&low));
    }

    #[test]
    fn discarded_clients_sit_out_one_round() {
        let mut c = small(Mode::Fl);
        c.strategy = Strategy::Discard;
        c.rounds = 6;
        c.attack = AttackConfig {
            enabled: true,
            min_attackers: 1,
            max_attackers: 1,
            ..AttackConfig::default()
        };
        let mut sim = Simulation::new(c, ExecPolicy::Sequential).unwrap();
        let reps = sim.run().unwrap();
        for w in reps.windows(2) {
            let expect: BTreeSet<ClientId> = w[1].selected.difference(&w[0].contribution.dropped).copied().collect();
            assert_eq!(w[1].participants, expect);
        }
        assert!(reps.iter().all(|r| r.detection_rate.is_some()));
    }

    #[test]
    fn failed_round_leaves_state_untouched() {
        let mut c = small(Mode::Bfl);
        c.max_mining_attempts = 1;
        c.difficulty = 1 << 40;
        let mut sim = Simulation::new(c, ExecPolicy::Sequential).unwrap();
        let before = sim.params().clone();
        let err = sim.run_round().unwrap_err();
        assert!(
            matches!(
                err,
                SimError::RoundAborted {
                    round: 1,
                    phase: Phase::Mining,
                    ..
                }
            ),
            "{err}"
        );
        assert_eq!(sim.round(), 0);
        assert_eq!(sim.params(), &before);
        assert!(sim.chains().iter().all(|c| c.len() == 1));
    }

    #[test]
    fn barrier_checker_rejects_reordering() {
        let good = [(1, Phase::LocalUpdate), (1, Phase::Upload), (2, Phase::LocalUpdate)];
        check_barrier(&good).unwrap();
        assert!(check_barrier(&[(1, Phase::Upload), (1, Phase::LocalUpdate)]).is_err());
        assert!(check_barrier(&[(1, Phase::Upload), (3, Phase::Upload)]).is_err());
        assert!(check_barrier(&[(2, Phase::Upload)]).is_err());
    }
}
