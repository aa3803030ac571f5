//! Per-round CSV rows, run manifests and run summaries.

use std::collections::BTreeMap;
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use super::ReportError;
use crate::sim::{check_convergence, RoundReport, SimConfig};

/// One CSV row per (run, round). List-valued columns use `;` separators and
/// rewards are written as `client:amount`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub run_id: String,
    pub preset: String,
    pub label: String,
    pub seed: u64,
    pub round: u64,
    pub t_local: f64,
    pub t_up: f64,
    pub t_ex: f64,
    pub t_gl: f64,
    pub t_bl: f64,
    pub total_delay: f64,
    pub mean_accuracy: f64,
    pub global_loss: f64,
    pub selected: usize,
    pub participants: usize,
    pub attackers: String,
    pub dropped: String,
    pub high: usize,
    pub rewards: String,
    pub reward_total: f64,
    pub detection_rate: Option<f64>,
    pub winning_miner: Option<u32>,
    pub block_hash: String,
    pub mining_attempts: Option<u64>,
    pub queue_len: usize,
}

/// Header of the metrics CSV, in column order.
pub const COLUMNS: [&str; 25] = [
    "run_id",
    "preset",
    "label",
    "seed",
    "round",
    "t_local",
    "t_up",
    "t_ex",
    "t_gl",
    "t_bl",
    "total_delay",
    "mean_accuracy",
    "global_loss",
    "selected",
    "participants",
    "attackers",
    "dropped",
    "high",
    "rewards",
    "reward_total",
    "detection_rate",
    "winning_miner",
    "block_hash",
    "mining_attempts",
    "queue_len",
];

fn join<I: IntoIterator<Item = T>, T: ToString>(xs: I) -> String {
    xs.into_iter().map(|x| x.to_string()).collect::<Vec<_>>().join(";")
}

impl MetricsRow {
    pub fn from_report(run_id: &str, preset: &str, label: &str, seed: u64, r: &RoundReport) -> Self {
        let c = &r.contribution;
        MetricsRow {
            run_id: run_id.to_string(),
            preset: preset.to_string(),
            label: label.to_string(),
            seed,
            round: r.round,
            t_local: r.delays.t_local,
            t_up: r.delays.t_up,
            t_ex: r.delays.t_ex,
            t_gl: r.delays.t_gl,
            t_bl: r.delays.t_bl,
            total_delay: r.total_delay,
            mean_accuracy: r.mean_accuracy,
            global_loss: r.global_loss,
            selected: r.selected.len(),
            participants: r.participants.len(),
            attackers: join(&r.attackers),
            dropped: join(&c.dropped),
            high: c.high().count(),
            rewards: join(c.rewards.iter().map(|e| format!("{}:{}", e.client, e.amount))),
            reward_total: c.reward_total(),
            detection_rate: r.detection_rate,
            winning_miner: r.winning_miner.map(|m| m.0),
            block_hash: r.block_hash.map(|h| h.to_hex()).unwrap_or_default(),
            mining_attempts: r.mining_attempts,
            queue_len: r.queue_len,
        }
    }

    /// Parses the `rewards` column.
    pub fn reward_entries(&self) -> Result<Vec<(u32, f64)>, ReportError> {
        self.rewards
            .split(';')
            .filter(|s| !s.is_empty())
            .map(|s| {
                let bad = || ReportError::Malformed(format!("reward entry `{s}` in run {}", self.run_id));
                let (c, a) = s.split_once(':').ok_or_else(bad)?;
                Ok((c.parse().map_err(|_| bad())?, a.parse().map_err(|_| bad())?))
            })
            .collect()
    }
}

pub fn write_rows<W: Write>(w: W, rows: &[MetricsRow]) -> Result<(), ReportError> {
    let mut out = csv::Writer::from_writer(w);
    if rows.is_empty() {
        out.write_record(COLUMNS)?;
    }
    for r in rows {
        out.serialize(r)?;
    }
    out.flush().map_err(csv::Error::from)?;
    Ok(())
}

pub fn read_rows<R: Read>(r: R) -> Result<Vec<MetricsRow>, ReportError> {
    let mut rd = csv::Reader::from_reader(r);
    let header: Vec<String> = rd.headers()?.iter().map(str::to_string).collect();
    if header != COLUMNS {
        return Err(ReportError::Malformed(format!("unexpected header {header:?}")));
    }
    rd.deserialize().map(|r| r.map_err(ReportError::from)).collect()
}

/// Sidecar written next to every run's CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub run_id: String,
    pub preset: String,
    pub label: String,
    pub seed: u64,
    pub params: BTreeMap<String, String>,
    pub config: SimConfig,
}

impl Manifest {
    pub fn to_toml(&self) -> Result<String, ReportError> {
        toml::to_string(self).map_err(|e| ReportError::Malformed(e.to_string()))
    }

    pub fn from_toml(text: &str) -> Result<Self, ReportError> {
        toml::from_str(text).map_err(|e| ReportError::Malformed(e.to_string()))
    }
}

/// Content-derived id: first 12 hex digits of SHA-256 over the preset, label
/// and resolved configuration.
pub fn run_id(preset: &str, label: &str, cfg: &SimConfig) -> String {
    let body = toml::to_string(cfg).unwrap_or_default();
    let d = crate::ledger::sha256(&[preset.as_bytes(), b"\0", label.as_bytes(), b"\0", body.as_bytes()]);
    d.to_hex()[..12].to_string()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub run_id: String,
    pub label: String,
    pub rounds: usize,
    /// Sum of round delays over the number of rounds.
    pub avg_delay: f64,
    /// Mean over rounds of the per-round client-averaged accuracy.
    pub avg_accuracy: f64,
    pub final_accuracy: f64,
    pub convergence_round: Option<usize>,
    pub reward_total: f64,
    /// Mean of the rounds that had a detection rate.
    pub detection_rate: Option<f64>,
    pub rewards_per_client: BTreeMap<u32, f64>,
}

/// Groups rows by run id, in first-seen order, and summarises each run.
pub fn summarize(rows: &[MetricsRow]) -> Result<Vec<RunSummary>, ReportError> {
    if rows.is_empty() {
        return Err(ReportError::EmptyMetrics);
    }
    let mut order: Vec<&str> = Vec::new();
    let mut groups: BTreeMap<&str, Vec<&MetricsRow>> = BTreeMap::new();
    for r in rows {
        let g = groups.entry(&r.run_id).or_default();
        if g.is_empty() {
            order.push(&r.run_id);
        }
        g.push(r);
    }
    order
        .into_iter()
        .map(|id| {
            let mut g = groups.remove(id).unwrap_or_default();
            g.sort_by_key(|r| r.round);
            let n = g.len() as f64;
            let acc: Vec<f64> = g.iter().map(|r| r.mean_accuracy).collect();
            let mut per_client = BTreeMap::new();
            for r in &g {
                for (c, a) in r.reward_entries()? {
                    *per_client.entry(c).or_insert(0.0) += a;
                }
            }
            let rates: Vec<f64> = g.iter().filter_map(|r| r.detection_rate).collect();
            Ok(RunSummary {
                run_id: id.to_string(),
                label: g[0].label.clone(),
                rounds: g.len(),
                avg_delay: g.iter().map(|r| r.total_delay).sum::<f64>() / n,
                avg_accuracy: acc.iter().sum::<f64>() / n,
                final_accuracy: *acc.last().unwrap_or(&0.0),
                convergence_round: check_convergence(&acc),
                reward_total: g.iter().map(|r| r.reward_total).sum(),
                detection_rate: (!rates.is_empty()).then(|| rates.iter().sum::<f64>() / rates.len() as f64),
                rewards_per_client: per_client,
            })
        })
        .collect()
}

#[derive(Serialize)]
struct SummaryRecord<'a> {
    run_id: &'a str,
    label: &'a str,
    rounds: usize,
    avg_delay: f64,
    avg_accuracy: f64,
    final_accuracy: f64,
    convergence_round: Option<usize>,
    reward_total: f64,
    detection_rate: Option<f64>,
    rewards_per_client: String,
}

pub fn write_summaries<W: Write>(w: W, runs: &[RunSummary]) -> Result<(), ReportError> {
    let mut out = csv::Writer::from_writer(w);
    for s in runs {
        out.serialize(SummaryRecord {
            run_id: &s.run_id,
            label: &s.label,
            rounds: s.rounds,
            avg_delay: s.avg_delay,
            avg_accuracy: s.avg_accuracy,
            final_accuracy: s.final_accuracy,
            convergence_round: s.convergence_round,
            reward_total: s.reward_total,
            detection_rate: s.detection_rate,
            rewards_per_client: join(s.rewards_per_client.iter().map(|(c, a)| format!("{c}:{a}"))),
        })?;
    }
    out.flush().map_err(csv::Error::from)?;
    Ok(())
}
