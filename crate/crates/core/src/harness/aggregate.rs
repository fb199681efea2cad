use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::RunConfig;
use super::env::{mean, sample_std};
use super::run::{run, RunResult};
use super::HarnessError;
use crate::market::MetricsReport;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricSummary {
    pub mean: Option<f64>,
    pub std: Option<f64>,
    /// Seeds on which the metric was defined.
    pub n: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub seeds: Vec<u64>,
    pub metrics: BTreeMap<String, MetricSummary>,
    pub per_seed: Vec<(u64, MetricsReport)>,
    /// Result hashes in seed order.
    pub hashes: Vec<String>,
    pub single_seed: bool,
}

impl Aggregate {
    pub fn from_metrics(seeds: &[u64], reports: &[MetricsReport], hashes: Vec<String>) -> Self {
        let metrics = MetricsReport::NAMES
            .iter()
            .map(|name| {
                let v: Vec<f64> = reports.iter().filter_map(|r| r.get(name)).collect();
                let s = MetricSummary {
                    mean: (!v.is_empty()).then(|| mean(&v)),
                    std: (!v.is_empty()).then(|| sample_std(&v)),
                    n: v.len(),
                };
                (name.to_string(), s)
            })
            .collect();
        Self {
            seeds: seeds.to_vec(),
            metrics,
            per_seed: seeds.iter().copied().zip(reports.iter().cloned()).collect(),
            hashes,
            single_seed: seeds.len() == 1,
        }
    }

    pub fn from_results(results: &[RunResult]) -> Self {
        let seeds: Vec<u64> = results.iter().map(|r| r.config.seed).collect();
        let reports: Vec<MetricsReport> = results.iter().map(|r| r.test.metrics.clone()).collect();
        Self::from_metrics(&seeds, &reports, results.iter().map(RunResult::hash).collect())
    }

    pub fn mean_of(&self, name: &str) -> Option<f64> {
        self.metrics.get(name).and_then(|m| m.mean)
    }
}

/// Configs for each seed, in the given order.
pub fn seed_configs(cfg: &RunConfig, seeds: &[u64]) -> Vec<RunConfig> {
    seeds
        .iter()
        .map(|&s| RunConfig { seed: s, ..cfg.clone() })
        .collect()
}

/// Independent runs, one per seed, in parallel.
pub fn run_seeds(cfg: &RunConfig, seeds: &[u64]) -> Result<(Vec<RunResult>, Aggregate), HarnessError> {
    if seeds.is_empty() {
        return Err(HarnessError::Config("at least one seed is required".into()));
    }
    let results = seed_configs(cfg, seeds)
        .par_iter()
        .map(run)
        .collect::<Result<Vec<_>, _>>()?;
    let agg = Aggregate::from_results(&results);
    Ok((results, agg))
}
