//! Slow-timescale diagnosis and evolution behind a completion-backend
//! contract: window reflection, distillation, cold-start priors, memory
//! policy evolution, planner evolution and skill extraction.

mod http;
mod protocol;
mod skills;
mod stub;

pub use http::{HttpBackend, HttpConfig, ENV_BACKEND_TOKEN, ENV_BACKEND_URL};
pub use protocol::{parse_response, render_request, Operation};
pub use skills::{SkillRecord, SkillSet, MAX_SKILLS, SKILL_DECAY};
pub use stub::StubBackend;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::credit::{CreditVector, EpisodeOutcome};
use crate::market::Regime;
use crate::memory::{DistilledPattern, RetrievalPolicy};
use crate::planners::{EvolvedMomentumReversal, Planner, PlannerContext, PlannerParams, ReversalParams};
use crate::toolkit::HitStats;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BackendError {
    #[error("backend transport failed: {0}")]
    Transport(String),
    #[error("malformed backend response: {0}")]
    Malformed(String),
    #[error("backend not configured: {0}")]
    Config(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeSummary {
    pub episode: usize,
    pub ticker: String,
    pub planner: String,
    pub score: f64,
    /// Fraction of decisive tool calls on this ticker that were right.
    pub directional_accuracy: f64,
}

/// Market statistics for the window. Computed from cached prices and only
/// ever shown to the reflection step.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MarketSideInfo {
    pub sector_returns: BTreeMap<String, f64>,
    /// Mean per-bar return of the equal-weight index over the window.
    pub mean_return: f64,
    /// Cross-sectional mean of per-ticker realized volatility.
    pub realized_vol: f64,
    pub mean_cross_correlation: f64,
    /// Volatility terciles from training windows seen so far.
    pub vol_terciles: (f64, f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReflectionRequest {
    pub window: usize,
    pub episode_summaries: Vec<EpisodeSummary>,
    /// Pooled window hit-rate per tool.
    pub tool_accuracy: BTreeMap<String, f64>,
    pub market: MarketSideInfo,
    pub prior_insights: Vec<ReflectionInsight>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReflectionInsight {
    pub causal_insight: String,
    pub regime: Regime,
    pub confidence: f64,
    /// Per-tool reliability in [-1, 1] for the coming window.
    #[serde(default)]
    pub tool_assessment: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistillRequest {
    pub episode: usize,
    /// Hit statistics of the last window only.
    pub window_hits: HitStats,
    pub sectors: BTreeMap<String, String>,
    pub regime: Option<Regime>,
    pub min_observations: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CreditRequest {
    pub outcome: EpisodeOutcome,
    /// A tool warned against a position the planner took anyway.
    pub contradiction: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CreditResponse {
    pub credit: CreditVector,
    pub rationales: BTreeMap<String, String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArmDescription {
    pub arm_id: String,
    pub kind: String,
    pub description: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PriorRequest {
    pub arms: Vec<ArmDescription>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyRequest {
    pub window: usize,
    pub mean_reward: f64,
    pub pool: Vec<RetrievalPolicy>,
    pub insight: Option<ReflectionInsight>,
}

/// Completion backend. Each call is one structured request and response.
pub trait ReflectionBackend: Send + Sync {
    fn name(&self) -> &str;
    fn reflect(&self, req: &ReflectionRequest) -> Result<ReflectionInsight, BackendError>;
    fn distill(&self, req: &DistillRequest) -> Result<Vec<DistilledPattern>, BackendError>;
    fn credit(&self, req: &CreditRequest) -> Result<CreditResponse, BackendError>;
    fn priors(&self, req: &PriorRequest) -> Result<BTreeMap<String, (f64, f64)>, BackendError>;
    fn propose_policy(&self, req: &PolicyRequest) -> Result<Option<RetrievalPolicy>, BackendError>;
}

pub const BACKENDS: [&str; 2] = ["stub", "http"];

pub fn backend_by_name(name: &str) -> Result<Box<dyn ReflectionBackend>, BackendError> {
    match name {
        "stub" => Ok(Box::new(StubBackend::default())),
        "http" => Ok(Box::new(HttpBackend::from_env()?)),
        other => Err(BackendError::Config(format!("unknown backend `{other}`"))),
    }
}

/// Runs reflection; on failure the previous insight carries forward.
pub fn reflect(
    req: &ReflectionRequest,
    backend: &dyn ReflectionBackend,
    previous: Option<&ReflectionInsight>,
) -> Option<ReflectionInsight> {
    match backend.reflect(req) {
        Ok(mut insight) => {
            insight.confidence = insight.confidence.clamp(0.0, 1.0);
            for v in insight.tool_assessment.values_mut() {
                *v = v.clamp(-1.0, 1.0);
            }
            Some(insight)
        }
        Err(e) => {
            log::warn!("reflection failed at window {} ({e}); keeping previous insight", req.window);
            previous.cloned()
        }
    }
}

/// Distillation; backend failure skips the cycle's patterns.
pub fn distill(req: &DistillRequest, backend: &dyn ReflectionBackend) -> Vec<DistilledPattern> {
    backend.distill(req).unwrap_or_else(|e| {
        log::warn!("distillation skipped ({e})");
        Vec::new()
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvolutionSchedule {
    /// Evolution only after this many slow windows.
    pub j_min: usize,
    pub every: usize,
    pub r_min: f64,
}

impl Default for EvolutionSchedule {
    fn default() -> Self {
        Self {
            j_min: 10,
            every: 5,
            r_min: 0.4,
        }
    }
}

impl EvolutionSchedule {
    pub fn due(&self, window: usize) -> bool {
        window > self.j_min && self.every > 0 && window % self.every == 0
    }
}

/// New retrieval policy when the pool's mean posterior reward is low at an
/// evolution window. The result has been validated and differs in shape
/// from every pool member.
pub fn evolve_memory_policy(
    schedule: &EvolutionSchedule,
    req: &PolicyRequest,
    backend: &dyn ReflectionBackend,
) -> Option<RetrievalPolicy> {
    if !schedule.due(req.window) || req.mean_reward >= schedule.r_min {
        return None;
    }
    match backend.propose_policy(req) {
        Ok(Some(p)) => {
            let fresh = !req
                .pool
                .iter()
                .any(|q| q.policy_id == p.policy_id || q.same_shape(&p));
            if p.validate().is_ok() && fresh {
                Some(p)
            } else {
                log::warn!("proposed policy `{}` rejected", p.policy_id);
                None
            }
        }
        Ok(None) => {
            log::warn!("policy grid exhausted");
            None
        }
        Err(e) => {
            log::warn!("policy evolution failed ({e})");
            None
        }
    }
}

pub const PRIOR_RANGE: (f64, f64) = (0.5, 10.0);

/// Validated informed priors; anything outside the allowed range, or
/// missing, becomes (1, 1).
pub fn cold_start_priors(req: &PriorRequest, backend: &dyn ReflectionBackend) -> BTreeMap<String, (f64, f64)> {
    let proposed = backend.priors(req).unwrap_or_else(|e| {
        log::warn!("cold-start priors unavailable ({e})");
        BTreeMap::new()
    });
    let ok = |x: f64| x.is_finite() && (PRIOR_RANGE.0..=PRIOR_RANGE.1).contains(&x);
    req.arms
        .iter()
        .map(|a| {
            let p = match proposed.get(&a.arm_id) {
                Some(&(al, be)) if ok(al) && ok(be) => (al, be),
                Some(bad) => {
                    log::warn!("invalid prior {bad:?} for {}; using (1, 1)", a.arm_id);
                    (1.0, 1.0)
                }
                None => (1.0, 1.0),
            };
            (a.arm_id.clone(), p)
        })
        .collect()
}

/// Consecutive failing slow windows per planner.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct FailureTracker {
    pub streaks: BTreeMap<String, usize>,
    pub threshold: usize,
    /// Evolved variants created so far.
    pub spawned: usize,
}

impl FailureTracker {
    pub fn new(threshold: usize) -> Self {
        Self {
            threshold,
            ..Default::default()
        }
    }

    /// Window means of the planners used in the window; a mean below zero
    /// extends the streak, anything else resets it.
    pub fn record_window(&mut self, planner_means: &BTreeMap<String, f64>) {
        for (p, m) in planner_means {
            let s = self.streaks.entry(p.clone()).or_insert(0);
            if *m < 0.0 {
                *s += 1;
            } else {
                *s = 0;
            }
        }
    }

    pub fn failing(&self) -> Option<&str> {
        self.streaks
            .iter()
            .find(|(_, s)| **s >= self.threshold)
            .map(|(p, _)| p.as_str())
    }
}

/// Instantiates the next template variant when some planner's streak has
/// reached the threshold. The candidate must allocate validly on the smoke
/// context; either way the triggering streak is reset.
pub fn planner_evolution_check(
    tracker: &mut FailureTracker,
    smoke: &PlannerContext,
    params: &PlannerParams,
) -> Option<EvolvedMomentumReversal> {
    let failing = tracker.failing()?.to_string();
    tracker.streaks.insert(failing.clone(), 0);
    let variant = ReversalParams::variant(tracker.spawned)?;
    tracker.spawned += 1;
    if !variant.validate(smoke.n_tickers()) {
        log::warn!("evolved template {} failed validation", tracker.spawned);
        return None;
    }
    let planner = EvolvedMomentumReversal::new(format!("evolved_{}", tracker.spawned), variant);
    match planner.plan(smoke, params) {
        Ok(d) if (d.invested() + d.cash - 1.0).abs() < 1e-9 => {
            log::info!("planner {failing} failed {} windows; added {}", tracker.threshold, planner.id);
            Some(planner)
        }
        _ => {
            log::warn!("evolved planner {} failed its smoke test", planner.id);
            None
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::memory::default_policies;
    use crate::toolkit::{ToolOutput, COMPUTE_MOMENTUM};

    #[test]
    fn evolution_gates() {
        let s = EvolutionSchedule::default();
        let stub = StubBackend::default();
        let mut req = PolicyRequest {
            window: 15,
            mean_reward: 0.6,
            pool: default_policies(),
            insight: None,
        };
        assert!(evolve_memory_policy(&s, &req, &stub).is_none());
        req.mean_reward = 0.3;
        let p = evolve_memory_policy(&s, &req, &stub).unwrap();
        assert!(p.validate().is_ok());
        req.window = 8;
        assert!(evolve_memory_policy(&s, &req, &stub).is_none());
        req.window = 10;
        assert!(evolve_memory_policy(&s, &req, &stub).is_none());
    }

    struct Broken;

    impl ReflectionBackend for Broken {
        fn name(&self) -> &str {
            "broken"
        }
        fn reflect(&self, _: &ReflectionRequest) -> Result<ReflectionInsight, BackendError> {
            Err(BackendError::Transport("down".into()))
        }
        fn distill(&self, _: &DistillRequest) -> Result<Vec<DistilledPattern>, BackendError> {
            Err(BackendError::Transport("down".into()))
        }
        fn credit(&self, _: &CreditRequest) -> Result<CreditResponse, BackendError> {
            Err(BackendError::Malformed("??".into()))
        }
        fn priors(&self, req: &PriorRequest) -> Result<BTreeMap<String, (f64, f64)>, BackendError> {
            Ok(req.arms.iter().map(|a| (a.arm_id.clone(), (-1.0, 3.0))).collect())
        }
        fn propose_policy(&self, _: &PolicyRequest) -> Result<Option<RetrievalPolicy>, BackendError> {
            Ok(None)
        }
    }

    #[test]
    fn invalid_priors_fall_back() {
        let req = PriorRequest {
            arms: vec![ArmDescription {
                arm_id: "compute_momentum".into(),
                kind: "computational_tool".into(),
                description: String::new(),
            }],
        };
        assert_eq!(cold_start_priors(&req, &Broken)["compute_momentum"], (1.0, 1.0));
        assert_eq!(cold_start_priors(&req, &StubBackend::default())["compute_momentum"], (2.0, 1.0));
    }

    #[test]
    fn failed_reflection_carries_forward() {
        let prev = ReflectionInsight {
            causal_insight: "x".into(),
            regime: Regime::Bear,
            confidence: 0.4,
            tool_assessment: BTreeMap::new(),
        };
        let req = ReflectionRequest {
            window: 3,
            episode_summaries: vec![],
            tool_accuracy: BTreeMap::new(),
            market: MarketSideInfo::default(),
            prior_insights: vec![],
        };
        assert_eq!(reflect(&req, &Broken, Some(&prev)), Some(prev));
        assert!(distill(
            &DistillRequest {
                episode: 0,
                window_hits: HitStats::default(),
                sectors: BTreeMap::new(),
                regime: None,
                min_observations: 3
            },
            &Broken
        )
        .is_empty());
    }

    fn smoke() -> PlannerContext {
        let outs = (0..3)
            .map(|i| {
                let mut m = BTreeMap::new();
                m.insert(
                    COMPUTE_MOMENTUM.to_string(),
                    ToolOutput::new(COMPUTE_MOMENTUM, 0.1 * i as f64, 0.5)
                        .with("return_5", 0.01)
                        .with("return_20", -0.01),
                );
                m
            })
            .collect();
        PlannerContext::new(vec!["A".into(), "B".into(), "C".into()], outs)
    }

    #[test]
    fn planner_streak_threshold() {
        let mut t = FailureTracker::new(3);
        let bad: BTreeMap<String, f64> = [("sequential".to_string(), -0.1)].into();
        t.record_window(&bad);
        t.record_window(&bad);
        assert!(planner_evolution_check(&mut t, &smoke(), &PlannerParams::default()).is_none());
        t.record_window(&bad);
        let p = planner_evolution_check(&mut t, &smoke(), &PlannerParams::default()).unwrap();
        assert_eq!(p.id, "evolved_1");
        assert_eq!(t.streaks["sequential"], 0);
        let good: BTreeMap<String, f64> = [("sequential".to_string(), 0.2)].into();
        t.record_window(&good);
        assert!(t.failing().is_none());
    }
}
