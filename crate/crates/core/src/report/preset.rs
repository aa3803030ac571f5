//! Named experiment presets. Each preset is a base layer plus an optional
//! grid of sweep values; every grid point becomes one run.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use toml::{Table, Value};

use super::config::{finish, insert_path, parse_layer, resolve_table, ConfigError};
use crate::sim::SimConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PresetName {
    General,
    LrSweep,
    WorkerSweep,
    MinerSweep,
    DiscardVsKeep,
    Security,
}

impl PresetName {
    pub const ALL: [PresetName; 6] = [
        PresetName::General,
        PresetName::LrSweep,
        PresetName::WorkerSweep,
        PresetName::MinerSweep,
        PresetName::DiscardVsKeep,
        PresetName::Security,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            PresetName::General => "general",
            PresetName::LrSweep => "lr_sweep",
            PresetName::WorkerSweep => "worker_sweep",
            PresetName::MinerSweep => "miner_sweep",
            PresetName::DiscardVsKeep => "discard_vs_keep",
            PresetName::Security => "security",
        }
    }

    fn base(self) -> &'static str {
        match self {
            PresetName::General => "rounds = 50",
            PresetName::LrSweep => "rounds = 50",
            PresetName::WorkerSweep | PresetName::MinerSweep => "rounds = 30\nblock_capacity = 20",
            PresetName::DiscardVsKeep => {
                "rounds = 60\nn_clients = 10\nlambda = 1.0\nscore_space = \"update\"\n\
                 [data]\npartition = \"iid\"\nnoisy_fraction = 0.2"
            }
            PresetName::Security => {
                "rounds = 10\nn_clients = 10\nlambda = 1.0\nstrategy = \"discard\"\n\
                 [attack]\nenabled = true\nmin_attackers = 1\nmax_attackers = 3"
            }
        }
    }

    /// Swept keys and their values; the run grid is their cartesian product.
    pub fn sweep(self) -> Vec<(&'static str, Vec<Value>)> {
        let s = |xs: &[&str]| xs.iter().map(|x| Value::String(x.to_string())).collect::<Vec<_>>();
        let i = |xs: &[i64]| xs.iter().map(|&x| Value::Integer(x)).collect::<Vec<_>>();
        match self {
            PresetName::General => vec![],
            PresetName::LrSweep => {
                vec![(
                    "hp.eta",
                    [0.01, 0.05, 0.10, 0.15, 0.20]
                        .iter()
                        .map(|&x| Value::Float(x))
                        .collect(),
                )]
            }
            PresetName::WorkerSweep => vec![("n_clients", i(&[10, 30, 100])), ("mode", s(&["bfl", "fl", "chain"]))],
            PresetName::MinerSweep => vec![("n_miners", i(&[1, 2, 4, 8])), ("mode", s(&["bfl", "chain"]))],
            PresetName::DiscardVsKeep => vec![("strategy", s(&["keep", "discard"]))],
            PresetName::Security => vec![("data.partition", s(&["noniid", "iid"]))],
        }
    }
}

impl fmt::Display for PresetName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for PresetName {
    type Err = ConfigError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        PresetName::ALL
            .into_iter()
            .find(|p| p.as_str() == s)
            .ok_or_else(|| ConfigError::Invalid {
                key: "preset".into(),
                reason: format!(
                    "unknown preset `{s}`, expected one of {}",
                    PresetName::ALL.map(|p| p.as_str()).join(", ")
                ),
            })
    }
}

/// One fully resolved run of an experiment.
#[derive(Debug, Clone, PartialEq)]
pub struct RunSpec {
    pub label: String,
    /// Swept `(key, value)` pairs that distinguish this run.
    pub params: Vec<(String, String)>,
    pub config: SimConfig,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentPreset {
    pub name: PresetName,
    pub runs: Vec<RunSpec>,
}

fn show(v: &Value) -> String {
    match v {
        Value::String(s) => s.clone(),
        other => other.to_string(),
    }
}

/// Resolves a preset: defaults, preset layer, optional file, overrides, then
/// the sweep values of each grid point.
pub fn build_preset<S: AsRef<str>>(
    name: PresetName,
    path: Option<&Path>,
    overrides: &[S],
) -> Result<ExperimentPreset, ConfigError> {
    let base = parse_layer(name.base(), name.as_str())?;
    let table = resolve_table(Some(&base), path, overrides)?;
    let mut grid: Vec<Vec<(String, Value)>> = vec![vec![]];
    for (key, values) in name.sweep() {
        grid = grid
            .into_iter()
            .flat_map(|point| {
                values.iter().map(move |v| {
                    let mut p = point.clone();
                    p.push((key.to_string(), v.clone()));
                    p
                })
            })
            .collect();
    }
    let runs = grid
        .into_iter()
        .map(|point| {
            let mut t: Table = table.clone();
            for (k, v) in &point {
                insert_path(&mut t, k, v.clone());
            }
            let params: Vec<(String, String)> = point.iter().map(|(k, v)| (k.clone(), show(v))).collect();
            let label = if params.is_empty() {
                name.as_str().to_string()
            } else {
                params
                    .iter()
                    .map(|(k, v)| format!("{k}-{v}"))
                    .collect::<Vec<_>>()
                    .join("_")
            };
            Ok(RunSpec {
                label,
                params,
                config: finish(t)?,
            })
        })
        .collect::<Result<Vec<_>, ConfigError>>()?;
    Ok(ExperimentPreset { name, runs })
}
