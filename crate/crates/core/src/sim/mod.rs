//! Round engine: sampling, association, exchange, attacks, delay accounting
//! and convergence checks.

mod config;
mod convergence;
mod delay;
mod engine;
mod protocol;

use thiserror::Error;

pub use config::{
    Aggregator, AttackConfig, AttackTarget, DataConfig, DataSource, DelayConfig, LrSchedule, Mode, ModelConfig,
    Perturbation, ScoreSpace, SimConfig, TimeMode,
};
pub use convergence::{
    check_convergence, decayed_eta, lipschitz_estimate, reference_optimum, theorem1_envelope, Envelope,
    CONVERGENCE_TOLERANCE, CONVERGENCE_WINDOW,
};
pub use delay::{compute_delays, mining_race, Delays, MiningRace, RoundTrace};
pub use engine::{check_barrier, Phase, RoundReport, Simulation};
pub use protocol::{associate, choose_attackers, exchange, inject_attack, select_clients};

use crate::data::DataError;
use crate::incentive::IncentiveError;
use crate::ledger::LedgerError;
use crate::model::{ClientId, ModelError};

#[derive(Debug, Error)]
pub enum SimError {
    #[error("config key `{key}`: {reason}")]
    Config { key: String, reason: String },
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("local update of client {client} failed: {source}")]
    ClientUpdate { client: ClientId, source: ModelError },
    #[error(transparent)]
    Ledger(#[from] LedgerError),
    #[error(transparent)]
    Incentive(#[from] IncentiveError),
    #[error("protocol violation: {0}")]
    Protocol(String),
    #[error("convergence check needs a strongly convex model: {0}")]
    UnsupportedForConvergenceCheck(String),
    #[error("round {round} aborted during {phase}: {source}")]
    RoundAborted {
        round: u64,
        phase: Phase,
        source: Box<SimError>,
    },
}
