//! Market environment: OHLCV series, CSV ingestion, synthetic regime-switching
//! data, portfolio stepping, transaction costs and the evaluation metrics.

mod costs;
mod csv_io;
mod metrics;
mod portfolio;
mod series;
mod synth;

pub use costs::{apply_costs, turnover};
pub use csv_io::{load_csv, read_csv, write_csv, CSV_HEADER};
pub use metrics::{
    compute_metrics, max_drawdown, percentile_linear, MetricsReport, ANNUALIZATION_BARS,
};
pub use portfolio::{outcome_score, step, PortfolioState};
pub use series::{Bar, PriceSeries, Regime, TickerInfo, DEFAULT_TICKERS};
pub use synth::{synth_generate, RegimeSegment, SynthConfig, SynthTicker};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum MarketError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("misaligned tickers: {0}")]
    Alignment(String),
    #[error("gap of more than one trading day between {before} and {after}")]
    Gap { before: String, after: String },
    #[error("invalid series: {0}")]
    Invalid(String),
    #[error("need at least {needed} returns, got {got}")]
    TooShort { needed: usize, got: usize },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}
