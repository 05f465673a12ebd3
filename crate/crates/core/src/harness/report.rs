//! Multi-seed, multi-policy runs and their CSV outputs.
//!
//! `rounds.csv` has one row per (policy, K, seed, round) with header
//! `seed,k,round,policy,accuracy,trained_devices,scheduled`; `scheduled`
//! lists client ids separated by `;`. `summary.csv` aggregates per
//! (policy, K) with header
//! `policy,k,episodes,final_accuracy_mean,final_accuracy_std,reached,rounds_to_target_mean,energy_cost_mean`.
//! Means over rounds-to-target and energy cost only include episodes that
//! reached the target and are empty when none did. Floats are written in
//! shortest round-trip form.

use std::fs::{self, File};
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scheduler::PolicyKind;

use super::config::{DataBundle, ExperimentConfig};
use super::env::{run_episode, EpisodeResult};

pub const ROUNDS_FILE: &str = "rounds.csv";
pub const SUMMARY_FILE: &str = "summary.csv";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundRow {
    pub seed: u64,
    pub k: usize,
    pub round: usize,
    pub policy: PolicyKind,
    pub accuracy: f64,
    pub trained_devices: usize,
    pub scheduled: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub policy: PolicyKind,
    pub k: usize,
    pub episodes: usize,
    pub final_accuracy_mean: f64,
    pub final_accuracy_std: f64,
    pub reached: usize,
    pub rounds_to_target_mean: Option<f64>,
    pub energy_cost_mean: Option<f64>,
}

/// Which policies, `K` values and seeds to run.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentPlan {
    pub policies: Vec<PolicyKind>,
    pub k_values: Vec<usize>,
    pub seeds: Vec<u64>,
}

impl ExperimentPlan {
    pub fn single(config: &ExperimentConfig) -> Self {
        Self {
            policies: vec![config.policy],
            k_values: vec![config.scheduled],
            seeds: config.episode_seeds(),
        }
    }
}

#[derive(Debug, Default)]
pub struct ExperimentReport {
    pub episodes: Vec<EpisodeResult>,
    pub summary: Vec<SummaryRow>,
    /// Output files written successfully.
    pub written: Vec<PathBuf>,
    /// Output files that failed, with the reason.
    pub io_errors: Vec<Error>,
}

pub fn round_rows(result: &EpisodeResult) -> Vec<RoundRow> {
    result
        .rounds
        .iter()
        .map(|r| RoundRow {
            seed: result.seed,
            k: result.k,
            round: r.round,
            policy: result.policy,
            accuracy: r.test_accuracy,
            trained_devices: r.trained_devices,
            scheduled: r
                .scheduled
                .iter()
                .map(|id| id.to_string())
                .collect::<Vec<_>>()
                .join(";"),
        })
        .collect()
}

fn mean(values: &[f64]) -> Option<f64> {
    (!values.is_empty()).then(|| values.iter().sum::<f64>() / values.len() as f64)
}

/// Per-(policy, K) aggregates in first-seen order.
pub fn summarize(episodes: &[EpisodeResult]) -> Vec<SummaryRow> {
    let mut keys: Vec<(PolicyKind, usize)> = Vec::new();
    for e in episodes {
        if !keys.contains(&(e.policy, e.k)) {
            keys.push((e.policy, e.k));
        }
    }
    keys.into_iter()
        .map(|(policy, k)| {
            let group: Vec<&EpisodeResult> = episodes
                .iter()
                .filter(|e| e.policy == policy && e.k == k)
                .collect();
            let finals: Vec<f64> = group.iter().map(|e| e.final_accuracy()).collect();
            let m = mean(&finals).unwrap_or(0.0);
            let var = finals.iter().map(|a| (a - m).powi(2)).sum::<f64>() / finals.len() as f64;
            let rounds: Vec<f64> = group
                .iter()
                .filter_map(|e| e.rounds_to_target.map(|r| r as f64))
                .collect();
            let energy: Vec<f64> = group
                .iter()
                .filter_map(|e| e.energy_cost.map(|c| c as f64))
                .collect();
            SummaryRow {
                policy,
                k,
                episodes: group.len(),
                final_accuracy_mean: m,
                final_accuracy_std: var.sqrt(),
                reached: rounds.len(),
                rounds_to_target_mean: mean(&rounds),
                energy_cost_mean: mean(&energy),
            }
        })
        .collect()
}

pub fn write_rows<W: Write, T: Serialize>(writer: W, rows: &[T]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    for row in rows {
        w.serialize(row)?;
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}

pub fn read_rows<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>> {
    let mut r = csv::Reader::from_path(path)?;
    r.deserialize().map(|row| row.map_err(Error::from)).collect()
}

/// Per-round CSV of one episode, as written to `rounds.csv`.
pub fn episode_csv(result: &EpisodeResult) -> String {
    let mut buf = Vec::new();
    write_rows(&mut buf, &round_rows(result)).expect("in-memory write");
    String::from_utf8(buf).expect("csv is utf-8")
}

fn write_file<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    write_rows(file, rows).map_err(|e| match e {
        Error::Csv(c) => Error::Parse {
            path: path.to_path_buf(),
            offset: 0,
            message: c.to_string(),
        },
        other => other,
    })
}

/// Runs one episode per (policy, K, seed) and writes `rounds.csv` and
/// `summary.csv` under `out_dir` when given. Episode errors abort the run; a
/// failing output file is recorded and the remaining files are still written.
pub fn run_experiment(
    base: &ExperimentConfig,
    data: &DataBundle,
    plan: &ExperimentPlan,
    out_dir: Option<&Path>,
) -> Result<ExperimentReport> {
    let mut report = ExperimentReport::default();
    for &policy in &plan.policies {
        for &k in &plan.k_values {
            let config = ExperimentConfig {
                policy,
                scheduled: k,
                ..base.clone()
            };
            config.validate()?;
            for &seed in &plan.seeds {
                report.episodes.push(run_episode(&config, data, seed)?);
            }
        }
    }
    report.summary = summarize(&report.episodes);

    if let Some(dir) = out_dir {
        if let Err(e) = fs::create_dir_all(dir) {
            report.io_errors.push(Error::io(dir, e));
            return Ok(report);
        }
        let rows: Vec<RoundRow> = report.episodes.iter().flat_map(round_rows).collect();
        let rounds_path = dir.join(ROUNDS_FILE);
        match write_file(&rounds_path, &rows) {
            Ok(()) => report.written.push(rounds_path),
            Err(e) => report.io_errors.push(e),
        }
        let summary_path = dir.join(SUMMARY_FILE);
        match write_file(&summary_path, &report.summary) {
            Ok(()) => report.written.push(summary_path),
            Err(e) => report.io_errors.push(e),
        }
    }
    Ok(report)
}
