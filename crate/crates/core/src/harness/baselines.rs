use serde::{Deserialize, Serialize};

use super::config::RunConfig;
use super::env::load_series;
use super::HarnessError;
use crate::market::{apply_costs, compute_metrics, step, MetricsReport, PortfolioState, PriceSeries};
use crate::planners::{baseline_allocate, BaselineKind, BASELINE_KINDS};

pub type Baseline = BaselineKind;
pub const BASELINES: [BaselineKind; 4] = BASELINE_KINDS;

/// Trailing window for momentum and variance estimates.
pub const BASELINE_LOOKBACK: usize = 20;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaselineRow {
    pub name: String,
    pub returns: Vec<f64>,
    pub metrics: MetricsReport,
}

/// Runs one allocator over `bars`, deciding each bar from closes before it.
pub fn run_baseline(
    kind: BaselineKind,
    series: &PriceSeries,
    bars: std::ops::Range<usize>,
    cost_bp: f64,
) -> Result<BaselineRow, HarnessError> {
    let closes: Vec<Vec<f64>> = (0..series.n_tickers()).map(|i| series.closes(i)).collect();
    let mut p = PortfolioState::new(series.n_tickers());
    for t in bars {
        let visible: Vec<Vec<f64>> = closes.iter().map(|c| c[..t].to_vec()).collect();
        let d = baseline_allocate(kind, &visible, BASELINE_LOOKBACK);
        let (_, next) = step(&p, &d, &series.bar_returns(t));
        p = next;
    }
    let metrics = compute_metrics(&apply_costs(&p.returns, &p.weight_history, None, cost_bp))?;
    Ok(BaselineRow {
        name: kind.as_str().to_string(),
        returns: p.returns,
        metrics,
    })
}

/// The four reference allocators over the test split of `cfg`'s data.
pub fn run_baselines(cfg: &RunConfig) -> Result<Vec<BaselineRow>, HarnessError> {
    cfg.validate()?;
    let series = load_series(cfg)?;
    if series.n_bars() != cfg.split.total() {
        return Err(HarnessError::Config(format!(
            "split totals {} bars but data has {}",
            cfg.split.total(),
            series.n_bars()
        )));
    }
    let test = cfg.split.train + cfg.split.val..cfg.split.total();
    BASELINES
        .iter()
        .map(|k| run_baseline(*k, &series, test.clone(), cfg.cost_bp))
        .collect()
}
