//! Configuration parsing, experiment presets, CSV metrics and summaries.
//!
//! A run writes `<label>.csv` (one [`MetricsRow`] per round) and
//! `<label>.manifest.toml` into the experiment directory; the experiment
//! then writes `summary.csv`, and the security preset also writes
//! `security_report.csv`.

mod config;
mod metrics;
mod preset;

use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use thiserror::Error;

pub use config::{
    default_table, finish, insert_path, merge_layer, override_layer, parse_config, parse_layer, read_layer,
    resolve_table, ConfigError,
};
pub use metrics::{
    read_rows, run_id, summarize, write_rows, write_summaries, Manifest, MetricsRow, RunSummary, COLUMNS,
};
pub use preset::{build_preset, ExperimentPreset, PresetName, RunSpec};

use crate::sim::{SimError, Simulation};
use crate::ExecPolicy;

/// Environment variable naming the default output directory.
pub const OUT_DIR_ENV: &str = "FAIRBFL_OUT_DIR";

#[derive(Debug, Error)]
pub enum ReportError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("cannot write {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("no metrics rows to summarise")]
    EmptyMetrics,
    #[error("malformed metrics: {0}")]
    Malformed(String),
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> ReportError + '_ {
    move |source| ReportError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn create(path: &Path) -> Result<BufWriter<File>, ReportError> {
    Ok(BufWriter::new(File::create(path).map_err(io_err(path))?))
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunFailure {
    pub label: String,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SecurityRound {
    pub round: u64,
    pub attackers: String,
    pub dropped: String,
    pub rate: Option<f64>,
}

/// Per-round attackers, drops and detection rate for each run.
#[derive(Debug, Clone, PartialEq)]
pub struct SecurityReport {
    pub runs: Vec<(String, Vec<SecurityRound>)>,
}

impl SecurityReport {
    pub fn from_rows(rows: &[MetricsRow]) -> Self {
        let mut runs: Vec<(String, Vec<SecurityRound>)> = Vec::new();
        for r in rows {
            let entry = SecurityRound {
                round: r.round,
                attackers: r.attackers.clone(),
                dropped: r.dropped.clone(),
                rate: r.detection_rate,
            };
            match runs.iter_mut().find(|(l, _)| *l == r.label) {
                Some((_, v)) => v.push(entry),
                None => runs.push((r.label.clone(), vec![entry])),
            }
        }
        SecurityReport { runs }
    }

    /// Mean detection rate of each run over the rounds that have one.
    pub fn averages(&self) -> Vec<(String, Option<f64>)> {
        self.runs
            .iter()
            .map(|(label, rounds)| {
                let rates: Vec<f64> = rounds.iter().filter_map(|r| r.rate).collect();
                (
                    label.clone(),
                    (!rates.is_empty()).then(|| rates.iter().sum::<f64>() / rates.len() as f64),
                )
            })
            .collect()
    }

    /// Wide table: one row per round with attacker, drop and rate columns for
    /// each run, followed by an `average` row.
    pub fn write<W: std::io::Write>(&self, w: W) -> Result<(), ReportError> {
        let mut out = csv::Writer::from_writer(w);
        let mut header = vec!["round".to_string()];
        for (label, _) in &self.runs {
            header.extend(["attackers", "dropped", "detection_rate"].map(|c| format!("{label}:{c}")));
        }
        out.write_record(&header)?;
        let rounds = self.runs.iter().map(|(_, r)| r.len()).max().unwrap_or(0);
        let rate = |x: Option<f64>| x.map(|v| v.to_string()).unwrap_or_default();
        for i in 0..rounds {
            let mut rec = vec![(i + 1).to_string()];
            for (_, rs) in &self.runs {
                match rs.get(i) {
                    Some(r) => rec.extend([r.attackers.clone(), r.dropped.clone(), rate(r.rate)]),
                    None => rec.extend([String::new(), String::new(), String::new()]),
                }
            }
            out.write_record(&rec)?;
        }
        let mut avg = vec!["average".to_string()];
        for (_, a) in self.averages() {
            avg.extend([String::new(), String::new(), rate(a)]);
        }
        out.write_record(&avg)?;
        out.flush().map_err(csv::Error::from)?;
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentOutcome {
    pub dir: PathBuf,
    pub rows: Vec<MetricsRow>,
    pub summaries: Vec<RunSummary>,
    pub failures: Vec<RunFailure>,
    pub security: Option<SecurityReport>,
}

impl ExperimentOutcome {
    pub fn ok(&self) -> bool {
        self.failures.is_empty()
    }
}

fn execute(name: &str, run: &RunSpec, dir: &Path, exec: ExecPolicy) -> Result<Vec<MetricsRow>, ReportError> {
    let id = run_id(name, &run.label, &run.config);
    let seed = run.config.seed;
    let mut sim = Simulation::new(run.config.clone(), exec)?;
    let reports = sim.run()?;
    let rows: Vec<MetricsRow> = reports
        .iter()
        .map(|r| MetricsRow::from_report(&id, name, &run.label, seed, r))
        .collect();
    let csv_path = dir.join(format!("{}.csv", run.label));
    write_rows(create(&csv_path)?, &rows)?;
    let manifest = Manifest {
        run_id: id,
        preset: name.to_string(),
        label: run.label.clone(),
        seed,
        params: run.params.iter().cloned().collect(),
        config: run.config.clone(),
    };
    let m_path = dir.join(format!("{}.manifest.toml", run.label));
    fs::write(&m_path, manifest.to_toml()?).map_err(io_err(&m_path))?;
    Ok(rows)
}

/// Executes `runs` (in parallel under a parallel policy) into
/// `out_dir/name`, recording failures without stopping the other runs, then
/// writes the summary.
pub fn run_experiment(
    name: &str,
    runs: &[RunSpec],
    out_dir: &Path,
    exec: ExecPolicy,
    security: bool,
) -> Result<ExperimentOutcome, ReportError> {
    let dir = out_dir.join(name);
    fs::create_dir_all(&dir).map_err(io_err(&dir))?;
    let results = exec.map(runs, |run| execute(name, run, &dir, exec));
    let mut rows = Vec::new();
    let mut failures = Vec::new();
    for (run, res) in runs.iter().zip(results) {
        match res {
            Ok(r) => rows.extend(r),
            Err(e) => failures.push(RunFailure {
                label: run.label.clone(),
                error: e.to_string(),
            }),
        }
    }
    let summaries = if rows.is_empty() { Vec::new() } else { summarize(&rows)? };
    let s_path = dir.join("summary.csv");
    write_summaries(create(&s_path)?, &summaries)?;
    let security = if security && !rows.is_empty() {
        let rep = SecurityReport::from_rows(&rows);
        let p = dir.join("security_report.csv");
        rep.write(create(&p)?)?;
        Some(rep)
    } else {
        None
    };
    Ok(ExperimentOutcome {
        dir,
        rows,
        summaries,
        failures,
        security,
    })
}

pub fn run_preset(
    preset: &ExperimentPreset,
    out_dir: &Path,
    exec: ExecPolicy,
) -> Result<ExperimentOutcome, ReportError> {
    run_experiment(
        preset.name.as_str(),
        &preset.runs,
        out_dir,
        exec,
        preset.name == PresetName::Security,
    )
}

/// Single run written under `out_dir/run`.
pub fn run_config(
    config: crate::sim::SimConfig,
    out_dir: &Path,
    exec: ExecPolicy,
) -> Result<ExperimentOutcome, ReportError> {
    let spec = RunSpec {
        label: "run".into(),
        params: Vec::new(),
        config,
    };
    run_experiment("run", std::slice::from_ref(&spec), out_dir, exec, false)
}
