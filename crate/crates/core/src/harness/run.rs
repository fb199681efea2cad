use std::collections::BTreeMap;
use std::sync::atomic::{AtomicU64, Ordering};

use serde::{Deserialize, Serialize};

use super::agent::{AgentState, EpisodeLog, Phase, Runner};
use super::config::RunConfig;
use super::env::{mean, terciles, Environment, GuardStats};
use super::HarnessError;
use crate::bandits::BetaArm;
use crate::credit::credit_strategy;
use crate::market::{apply_costs, compute_metrics, MetricsReport, PortfolioState};
use crate::memory::{DistilledPattern, RetrievalPolicy};
use crate::planners::PlannerRegistry;
use crate::reflection::{
    self, backend_by_name, BackendError, CreditRequest, CreditResponse, DistillRequest, PolicyRequest, PriorRequest,
    ReflectionBackend, ReflectionInsight, ReflectionRequest,
};

/// Counts every call that reaches the wrapped backend.
pub struct CountingBackend<'a> {
    inner: &'a dyn ReflectionBackend,
    calls: AtomicU64,
}

impl<'a> CountingBackend<'a> {
    pub fn new(inner: &'a dyn ReflectionBackend) -> Self {
        Self {
            inner,
            calls: AtomicU64::new(0),
        }
    }

    pub fn calls(&self) -> u64 {
        self.calls.load(Ordering::Relaxed)
    }

    fn tick(&self) {
        self.calls.fetch_add(1, Ordering::Relaxed);
    }
}

impl ReflectionBackend for CountingBackend<'_> {
    fn name(&self) -> &str {
        self.inner.name()
    }
    fn reflect(&self, req: &ReflectionRequest) -> Result<ReflectionInsight, BackendError> {
        self.tick();
        self.inner.reflect(req)
    }
    fn distill(&self, req: &DistillRequest) -> Result<Vec<DistilledPattern>, BackendError> {
        self.tick();
        self.inner.distill(req)
    }
    fn credit(&self, req: &CreditRequest) -> Result<CreditResponse, BackendError> {
        self.tick();
        self.inner.credit(req)
    }
    fn priors(&self, req: &PriorRequest) -> Result<BTreeMap<String, (f64, f64)>, BackendError> {
        self.tick();
        self.inner.priors(req)
    }
    fn propose_policy(&self, req: &PolicyRequest) -> Result<Option<RetrievalPolicy>, BackendError> {
        self.tick();
        self.inner.propose_policy(req)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindowLog {
    pub window: usize,
    /// Last training episode of the window.
    pub end_episode: usize,
    pub insight: Option<ReflectionInsight>,
    pub semantic_written: usize,
    pub procedural_written: usize,
    pub new_policy: Option<String>,
    pub new_planner: Option<String>,
    pub validation_mean: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FrozenCheck {
    pub posterior_before: String,
    pub posterior_after: String,
    pub memory_before: String,
    pub memory_after: String,
}

impl FrozenCheck {
    pub fn intact(&self) -> bool {
        self.posterior_before == self.posterior_after && self.memory_before == self.memory_after
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestReport {
    pub cost_bp: f64,
    /// Gross per-bar portfolio returns.
    pub returns: Vec<f64>,
    pub weights: Vec<Vec<f64>>,
    /// Metrics of the cost-adjusted returns.
    pub metrics: MetricsReport,
}

impl TestReport {
    /// Metrics of the same test returns at another cost level.
    pub fn at_cost(&self, cost_bp: f64) -> Result<MetricsReport, HarnessError> {
        Ok(compute_metrics(&apply_costs(&self.returns, &self.weights, None, cost_bp))?)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    pub config: RunConfig,
    pub data_hash: String,
    pub episodes: Vec<EpisodeLog>,
    pub windows: Vec<WindowLog>,
    pub selected_window: usize,
    pub validation_frozen: bool,
    pub frozen: FrozenCheck,
    pub final_policies: Vec<BetaArm>,
    pub backend_calls: u64,
    pub lookahead: GuardStats,
    pub test: TestReport,
}

impl RunResult {
    pub fn canonical_json(&self) -> String {
        crate::canonical::to_canonical_pretty(self)
    }

    pub fn hash(&self) -> String {
        crate::canonical::state_hash(self)
    }
}

/// Output of training: the end-of-window checkpoints plus the log.
pub struct Trained {
    pub checkpoints: Vec<(usize, AgentState)>,
    pub episodes: Vec<EpisodeLog>,
    pub windows: Vec<WindowLog>,
}

fn slow_window(
    runner: &Runner<'_>,
    st: &mut AgentState,
    window: usize,
    last_episode: usize,
    in_warm_up: bool,
) -> Result<WindowLog, HarnessError> {
    st.ensure_mutable("slow window")?;
    let cfg = runner.cfg;
    let env = runner.env;
    let start = last_episode + 1 - cfg.slow_window;
    let mut side = env.side_info(start, last_episode + 1);
    st.window_vols.push(side.realized_vol);
    side.vol_terciles = terciles(&st.window_vols);
    let mut log = WindowLog {
        window,
        end_episode: last_episode,
        insight: None,
        semantic_written: 0,
        procedural_written: 0,
        new_policy: None,
        new_planner: None,
        validation_mean: None,
    };

    if cfg.reflection_enabled() {
        let tool_accuracy = st
            .window_hits
            .tools()
            .filter_map(|t| Some((t.to_string(), st.window_hits.tool_totals(t).hit_rate()?)))
            .collect();
        let n = st.insight_history.len();
        let req = ReflectionRequest {
            window,
            episode_summaries: std::mem::take(&mut st.window_summaries),
            tool_accuracy,
            market: side,
            prior_insights: st.insight_history[n.saturating_sub(3)..].to_vec(),
        };
        st.insight = reflection::reflect(&req, runner.backend, st.insight.as_ref());
        if let Some(i) = &st.insight {
            st.insight_history.push(i.clone());
        }
        log.insight = st.insight.clone();

        if cfg.memory && (last_episode + 1) % cfg.distill_every == 0 {
            let sectors = env
                .series
                .tickers
                .iter()
                .map(|t| (t.symbol.clone(), t.sector.clone()))
                .collect();
            let req = DistillRequest {
                episode: last_episode,
                window_hits: std::mem::take(&mut st.distill_hits),
                sectors,
                regime: st.insight.as_ref().map(|i| i.regime),
                min_observations: 3,
            };
            let patterns = reflection::distill(&req, runner.backend);
            log.semantic_written = st.memory.add_semantic(&patterns, last_episode)?.len();
            log.procedural_written = st.memory.promote_procedural(last_episode)?.len();
        }

        if !in_warm_up {
            if let Some(b) = &st.policy_bandit {
                let req = PolicyRequest {
                    window,
                    mean_reward: b.mean_posterior_reward().unwrap_or(0.5),
                    pool: st.policies.clone(),
                    insight: st.insight.clone(),
                };
                if let Some(p) = reflection::evolve_memory_policy(&cfg.evolution, &req, runner.backend) {
                    log.new_policy = Some(p.policy_id.clone());
                    st.add_policy(p)?;
                }
            }
            if cfg.flags.planner_evolution {
                let means: BTreeMap<String, f64> =
                    st.window_scores.iter().map(|(p, s)| (p.clone(), mean(s))).collect();
                st.failures.record_window(&means);
                let smoke = runner.smoke_context(last_episode);
                if let Some(p) = reflection::planner_evolution_check(&mut st.failures, &smoke, &cfg.planner_params) {
                    log.new_planner = Some(p.id.clone());
                    st.add_planner(p)?;
                }
            }
        }
    }
    st.window_hits.clear();
    st.window_summaries.clear();
    st.window_scores.clear();
    Ok(log)
}

/// Warm-up plus training over the first `split.train` bars.
pub fn train(runner: &Runner<'_>, st: &mut AgentState) -> Result<Trained, HarnessError> {
    let cfg = runner.cfg;
    let w = cfg.warm_up_len();
    let mut portfolio = PortfolioState::new(runner.env.n_tickers());
    let mut episodes = Vec::with_capacity(cfg.split.train);
    let mut windows = Vec::new();
    let mut checkpoints = Vec::new();
    for e in 0..cfg.split.train {
        let phase = if e < w { Phase::WarmUp } else { Phase::Train };
        episodes.push(runner.episode(st, &mut portfolio, e, e, phase)?);
        if (e + 1) % cfg.slow_window == 0 {
            let j = (e + 1) / cfg.slow_window;
            windows.push(slow_window(runner, st, j, e, e < w)?);
            checkpoints.push((j, st.clone()));
        }
    }
    if checkpoints.is_empty() {
        return Err(HarnessError::Config("training produced no checkpoints".into()));
    }
    Ok(Trained {
        checkpoints,
        episodes,
        windows,
    })
}

/// Runs frozen episodes over `bars`, asserting the state hashes are
/// unchanged.
pub fn run_frozen(
    runner: &Runner<'_>,
    st: &mut AgentState,
    bars: std::ops::Range<usize>,
    phase: Phase,
    train_index: usize,
) -> Result<(Vec<EpisodeLog>, PortfolioState, FrozenCheck), HarnessError> {
    if !st.is_frozen() {
        return Err(HarnessError::Frozen("evaluation requires a frozen state".into()));
    }
    let posterior_before = st.posterior_hash();
    let memory_before = st.memory_hash();
    let mut portfolio = PortfolioState::new(runner.env.n_tickers());
    let mut logs = Vec::with_capacity(bars.len());
    for bar in bars {
        logs.push(runner.episode(st, &mut portfolio, bar, train_index, phase)?);
    }
    let check = FrozenCheck {
        posterior_before,
        posterior_after: st.posterior_hash(),
        memory_before,
        memory_after: st.memory_hash(),
    };
    if !check.intact() {
        return Err(HarnessError::Frozen(format!("{phase:?} phase changed the frozen state")));
    }
    Ok((logs, portfolio, check))
}

/// Scores every checkpoint on the validation bars and returns the index of
/// the best mean score (earliest on ties) with all means.
pub fn validate(runner: &Runner<'_>, trained: &Trained) -> Result<(usize, Vec<f64>), HarnessError> {
    let cfg = runner.cfg;
    let bars = cfg.split.train..cfg.split.train + cfg.split.val;
    let mut means = Vec::with_capacity(trained.checkpoints.len());
    for (_, cp) in &trained.checkpoints {
        let mut st = cp.clone();
        st.freeze(cfg.seed, "validation");
        let (logs, _, _) = run_frozen(runner, &mut st, bars.clone(), Phase::Validation, cfg.split.train - 1)?;
        means.push(mean(&logs.iter().map(|l| l.score).collect::<Vec<_>>()));
    }
    let mut best = 0;
    for (i, m) in means.iter().enumerate() {
        if *m > means[best] {
            best = i;
        }
    }
    Ok((best, means))
}

/// Full protocol for one config: train, select a checkpoint on validation,
/// frozen test.
pub fn run_with_backend(
    cfg: &RunConfig,
    env: &Environment,
    backend: &dyn ReflectionBackend,
) -> Result<RunResult, HarnessError> {
    cfg.validate()?;
    let counting = CountingBackend::new(backend);
    let planners = PlannerRegistry::builtin();
    let credit = credit_strategy(&cfg.credit_method).map_err(|e| HarnessError::Config(e.to_string()))?;
    let runner = Runner::new(cfg, env, &planners, &counting, credit.as_ref());
    let mut st = AgentState::new(cfg, env, &planners, &counting)?;

    let mut trained = train(&runner, &mut st)?;
    let (best, means) = validate(&runner, &trained)?;
    for (w, m) in trained.windows.iter_mut().zip(&means) {
        w.validation_mean = Some(*m);
    }
    let (selected_window, mut chosen) = trained.checkpoints.swap_remove(best);
    chosen.freeze(cfg.seed, "test");
    let test_bars = cfg.split.train + cfg.split.val..cfg.split.total();
    let (test_logs, portfolio, frozen) = run_frozen(&runner, &mut chosen, test_bars, Phase::Test, cfg.split.train - 1)?;

    let metrics = compute_metrics(&apply_costs(&portfolio.returns, &portfolio.weight_history, None, cfg.cost_bp))?;
    let mut episodes = trained.episodes;
    episodes.extend(test_logs);
    Ok(RunResult {
        config: cfg.clone(),
        data_hash: env.data_hash().to_string(),
        episodes,
        windows: trained.windows,
        selected_window,
        validation_frozen: true,
        frozen,
        final_policies: chosen
            .policy_bandit
            .as_ref()
            .map(|b| b.arms().to_vec())
            .unwrap_or_default(),
        backend_calls: counting.calls(),
        lookahead: env.guard.stats(),
        test: TestReport {
            cost_bp: cfg.cost_bp,
            returns: portfolio.returns,
            weights: portfolio.weight_history,
            metrics,
        },
    })
}

/// Loads data and the configured backend, then runs the protocol.
pub fn run(cfg: &RunConfig) -> Result<RunResult, HarnessError> {
    cfg.validate()?;
    let env = Environment::from_config(cfg)?;
    let backend = backend_by_name(&cfg.backend).map_err(|e| HarnessError::Config(e.to_string()))?;
    run_with_backend(cfg, &env, backend.as_ref())
}
