//! Round-synchronous simulator for blockchain-coupled federated learning.
//!
//! Clients train locally, upload signed gradients to miners, miners exchange
//! gradient sets, cluster them against the simple-average global gradient to
//! score contributions, aggregate, and finally a single block holding only the
//! round's global gradient plus reward transactions is mined and appended to
//! every miner's chain.
//!
//! The crate is organised by protocol layer:
//!
//! * [`model`]: local model, mini-batch SGD, evaluation, gradient geometry
//! * [`data`]: IDX loading, synthetic data, IID / label-skewed partitioning
//! * [`ledger`]: signed uploads, blocks, proof of work, chain maintenance
//! * [`incentive`]: DBSCAN, contribution labelling, rewards, aggregation
//! * [`sim`]: configuration, round engine, delay accounting, convergence checks
//! * [`report`]: config parsing, presets, CSV metrics and summaries

pub mod data;
pub mod exec;
pub mod incentive;
pub mod ledger;
pub mod model;
pub mod report;
pub mod rng;
pub mod sim;

pub use exec::ExecPolicy;
pub use model::{ClientId, GradientVector};
