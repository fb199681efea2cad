//! End-to-end protocol: warm-up, training with slow-window reflection,
//! checkpoint selection on validation, frozen test, plus multi-seed
//! aggregation, ablations and baselines.

mod ablation;
mod aggregate;
mod agent;
mod baselines;
mod config;
mod env;
mod run;

pub use ablation::{ablation_variants, config_diff, run_ablation, AblationRow, AblationTable, AblationVariant, BASE_NAME};
pub use aggregate::{run_seeds, seed_configs, Aggregate, MetricSummary};
pub use agent::{AgentState, EpisodeLog, Phase, Runner};
pub use baselines::{run_baseline, run_baselines, Baseline, BaselineRow, BASELINES, BASELINE_LOOKBACK};
pub use config::{synth_preset, AblationFlags, DataSource, Preset, RunConfig, Split, SYNTH_PRESETS};
pub use env::{load_series, series_hash, terciles, Environment, GuardStats, LookAheadGuard};
pub use run::{
    run, run_frozen, run_with_backend, train, validate, CountingBackend, FrozenCheck, RunResult, TestReport,
    Trained, WindowLog,
};

use thiserror::Error;

use crate::bandits::BanditError;
use crate::credit::CreditError;
use crate::market::MarketError;
use crate::memory::MemoryError;
use crate::planners::PlannerError;
use crate::reflection::BackendError;
use crate::toolkit::ToolError;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("frozen state violated: {0}")]
    Frozen(String),
    #[error("{0}")]
    Runtime(String),
    #[error(transparent)]
    Market(#[from] MarketError),
    #[error(transparent)]
    Tool(#[from] ToolError),
    #[error(transparent)]
    Memory(#[from] MemoryError),
    #[error(transparent)]
    Bandit(#[from] BanditError),
    #[error(transparent)]
    Planner(#[from] PlannerError),
    #[error(transparent)]
    Credit(#[from] CreditError),
    #[error(transparent)]
    Backend(#[from] BackendError),
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
}

impl HarnessError {
    /// Process exit code: 2 for bad configuration, 1 for everything else.
    pub fn exit_code(&self) -> i32 {
        match self {
            HarnessError::Config(_) => 2,
            _ => 1,
        }
    }
}
