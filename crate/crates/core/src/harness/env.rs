use std::collections::BTreeMap;
use std::sync::atomic::{AtomicU64, Ordering};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::{synth_preset, DataSource, RunConfig};
use super::HarnessError;
use crate::canonical::hex_digest;
use crate::market::{load_csv, percentile_linear, synth_generate, write_csv, PriceSeries};
use crate::reflection::MarketSideInfo;
use crate::toolkit::{MarketView, ToolOutput, ToolRegistry};

/// Counts tool calls and reward lookups; a violation is any read of a bar
/// at or after the bar whose return the decision earns.
#[derive(Debug, Default)]
pub struct LookAheadGuard {
    checks: AtomicU64,
    violations: AtomicU64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct GuardStats {
    pub checks: u64,
    pub violations: u64,
}

impl LookAheadGuard {
    /// `visible_until` is the exclusive end of the bars the caller could see.
    pub fn check(&self, visible_until: usize, decision_bar: usize) -> bool {
        self.checks.fetch_add(1, Ordering::Relaxed);
        let ok = visible_until <= decision_bar;
        if !ok {
            self.violations.fetch_add(1, Ordering::Relaxed);
            log::error!("look-ahead: bars up to {visible_until} visible when deciding bar {decision_bar}");
        }
        ok
    }

    pub fn stats(&self) -> GuardStats {
        GuardStats {
            checks: self.checks.load(Ordering::Relaxed),
            violations: self.violations.load(Ordering::Relaxed),
        }
    }
}

/// Price data, tools and every tool output the run can need. Episode `t`
/// decides from bars before `t` and earns the return of bar `t`.
pub struct Environment {
    pub series: PriceSeries,
    pub registry: ToolRegistry,
    /// [bar][ticker] tool name -> output, computed from bars before `bar`.
    outputs: Vec<Vec<BTreeMap<String, ToolOutput>>>,
    pub guard: LookAheadGuard,
    data_hash: String,
}

impl std::fmt::Debug for Environment {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Environment")
            .field("bars", &self.series.n_bars())
            .field("tickers", &self.series.n_tickers())
            .finish()
    }
}

pub fn load_series(cfg: &RunConfig) -> Result<PriceSeries, HarnessError> {
    match &cfg.data {
        DataSource::Synth { config: Some(c), .. } => Ok(synth_generate(c, cfg.seed)?),
        DataSource::Synth { preset, config: None } => {
            let c = synth_preset(preset).ok_or_else(|| HarnessError::Config(format!("unknown preset `{preset}`")))?;
            Ok(synth_generate(&c, cfg.seed)?)
        }
        DataSource::Csv { path } => {
            if !path.exists() {
                return Err(HarnessError::Config(format!("data file not found: {}", path.display())));
            }
            load_csv(path).map_err(|e| HarnessError::Config(format!("{}: {e}", path.display())))
        }
    }
}

pub fn series_hash(series: &PriceSeries) -> String {
    let mut buf = Vec::new();
    write_csv(series, &mut buf).expect("writing to memory");
    hex_digest(&buf)
}

impl Environment {
    pub fn from_config(cfg: &RunConfig) -> Result<Self, HarnessError> {
        let series = load_series(cfg)?;
        if series.n_bars() != cfg.split.total() {
            return Err(HarnessError::Config(format!(
                "split {}+{}+{} does not match {} available bars",
                cfg.split.train,
                cfg.split.val,
                cfg.split.test,
                series.n_bars()
            )));
        }
        let registry = ToolRegistry::finance_from_dir(cfg.tool_params.clone(), cfg.static_data_dir.as_deref())
            .map_err(|e| HarnessError::Config(e.to_string()))?;
        Self::new(series, registry)
    }

    pub fn new(series: PriceSeries, registry: ToolRegistry) -> Result<Self, HarnessError> {
        let guard = LookAheadGuard::default();
        let k = series.n_tickers();
        let outputs = (0..series.n_bars())
            .into_par_iter()
            .map(|t| {
                let view = MarketView::new(&series, t);
                (0..k)
                    .map(|i| {
                        guard.check(view.as_of(), t);
                        registry.run_all(i, view)
                    })
                    .collect::<Result<Vec<_>, _>>()
            })
            .collect::<Result<Vec<_>, _>>()
            .map_err(|e| HarnessError::Runtime(e.to_string()))?;
        let data_hash = series_hash(&series);
        Ok(Self {
            series,
            registry,
            outputs,
            guard,
            data_hash,
        })
    }

    pub fn n_tickers(&self) -> usize {
        self.series.n_tickers()
    }

    pub fn n_bars(&self) -> usize {
        self.series.n_bars()
    }

    pub fn data_hash(&self) -> &str {
        &self.data_hash
    }

    pub fn outputs(&self, bar: usize, ticker: usize) -> &BTreeMap<String, ToolOutput> {
        &self.outputs[bar][ticker]
    }

    /// Return of bar `bar` per ticker, read when the episode settles.
    pub fn settle(&self, decided_with: usize, bar: usize) -> Vec<f64> {
        self.guard.check(decided_with, bar);
        self.series.bar_returns(bar)
    }

    fn window_returns(&self, start: usize, end: usize) -> Vec<Vec<f64>> {
        (0..self.n_tickers())
            .map(|i| (start..end).map(|t| self.series.bar_return(i, t)).collect())
            .collect()
    }

    /// Side information for reflecting on bars `[start, end)`; terciles are
    /// filled in by the caller.
    pub fn side_info(&self, start: usize, end: usize) -> MarketSideInfo {
        let per = self.window_returns(start, end);
        let n = end - start;
        let index: Vec<f64> = (0..n)
            .map(|t| per.iter().map(|r| r[t]).sum::<f64>() / per.len() as f64)
            .collect();
        let mean_return = mean(&index);
        let realized_vol = mean(&per.iter().map(|r| sample_std(r)).collect::<Vec<_>>());
        let mut corr = Vec::new();
        for a in 0..per.len() {
            for b in a + 1..per.len() {
                if let Some(c) = correlation(&per[a], &per[b]) {
                    corr.push(c);
                }
            }
        }
        let mut by_sector: BTreeMap<String, Vec<f64>> = BTreeMap::new();
        for (i, info) in self.series.tickers.iter().enumerate() {
            let cum = per[i].iter().fold(1.0, |e, r| e * (1.0 + r)) - 1.0;
            by_sector.entry(info.sector.clone()).or_default().push(cum);
        }
        MarketSideInfo {
            sector_returns: by_sector.into_iter().map(|(s, v)| (s, mean(&v))).collect(),
            mean_return,
            realized_vol,
            mean_cross_correlation: if corr.is_empty() { 0.0 } else { mean(&corr) },
            vol_terciles: (0.0, 0.0),
        }
    }
}

pub(crate) fn mean(x: &[f64]) -> f64 {
    if x.is_empty() {
        0.0
    } else {
        x.iter().sum::<f64>() / x.len() as f64
    }
}

pub(crate) fn sample_std(x: &[f64]) -> f64 {
    if x.len() < 2 {
        return 0.0;
    }
    let m = mean(x);
    (x.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (x.len() - 1) as f64).sqrt()
}

fn correlation(a: &[f64], b: &[f64]) -> Option<f64> {
    let (ma, mb) = (mean(a), mean(b));
    let cov: f64 = a.iter().zip(b).map(|(x, y)| (x - ma) * (y - mb)).sum();
    let va: f64 = a.iter().map(|x| (x - ma).powi(2)).sum();
    let vb: f64 = b.iter().map(|y| (y - mb).powi(2)).sum();
    (va > 0.0 && vb > 0.0).then(|| cov / (va * vb).sqrt())
}

/// Tercile cut points of the volatilities seen so far.
pub fn terciles(vols: &[f64]) -> (f64, f64) {
    if vols.is_empty() {
        return (0.0, 0.0);
    }
    let mut v = vols.to_vec();
    v.sort_by(f64::total_cmp);
    (percentile_linear(&v, 1.0 / 3.0), percentile_linear(&v, 2.0 / 3.0))
}
