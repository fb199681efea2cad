//! Signal-fusion planners, the score-to-simplex map and the deterministic
//! baseline allocators. Planners are registered by name and selected at
//! runtime.

mod baselines;
mod families;

pub use baselines::{baseline_allocate, BaselineKind, BASELINE_KINDS};
pub use families::{
    builtin_planners, fuse, EvolvedMomentumReversal, Family, FamilyPlanner, ReversalParams,
    TOOL_GROUPS,
};

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::market::Regime;
use crate::toolkit::ToolOutput;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PlannerError {
    #[error("negative weight {0}")]
    NegativeWeight(f64),
    #[error("weights sum to {0}, above 1")]
    OverInvested(f64),
    #[error("non-finite weight or score")]
    NonFinite,
    #[error("temperature must be positive, got {0}")]
    Temperature(f64),
    #[error("risk budget must lie in (0, 1], got {0}")]
    RiskBudget(f64),
    #[error("unknown planner `{0}`")]
    UnknownPlanner(String),
    #[error("duplicate planner `{0}`")]
    DuplicatePlanner(String),
    #[error("context has no tickers")]
    EmptyContext,
}

const SIMPLEX_TOL: f64 = 1e-12;

/// Long-only allocation over the tickers, with the remainder held as cash.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AllocationDecision {
    pub weights: Vec<f64>,
    pub cash: f64,
    #[serde(default)]
    pub scores: Vec<f64>,
}

impl AllocationDecision {
    pub fn from_weights(weights: Vec<f64>) -> Result<Self, PlannerError> {
        let scores = vec![0.0; weights.len()];
        Self::with_scores(weights, scores)
    }

    pub fn with_scores(weights: Vec<f64>, scores: Vec<f64>) -> Result<Self, PlannerError> {
        if weights.iter().chain(&scores).any(|w| !w.is_finite()) {
            return Err(PlannerError::NonFinite);
        }
        if let Some(&w) = weights.iter().find(|w| **w < 0.0) {
            return Err(PlannerError::NegativeWeight(w));
        }
        let total: f64 = weights.iter().sum();
        if total > 1.0 + SIMPLEX_TOL {
            return Err(PlannerError::OverInvested(total));
        }
        Ok(Self {
            weights,
            cash: (1.0 - total).max(0.0),
            scores,
        })
    }

    pub fn all_cash(n: usize) -> Self {
        Self {
            weights: vec![0.0; n],
            cash: 1.0,
            scores: vec![0.0; n],
        }
    }

    pub fn invested(&self) -> f64 {
        self.weights.iter().sum()
    }
}

/// Softmax over scores scaled to the risk budget; cash is `1 - risk_budget`.
pub fn score_to_weights(
    scores: &[f64],
    temperature: f64,
    risk_budget: f64,
) -> Result<AllocationDecision, PlannerError> {
    if !(temperature > 0.0) || !temperature.is_finite() {
        return Err(PlannerError::Temperature(temperature));
    }
    if !(risk_budget > 0.0 && risk_budget <= 1.0) {
        return Err(PlannerError::RiskBudget(risk_budget));
    }
    if scores.is_empty() {
        return Err(PlannerError::EmptyContext);
    }
    if scores.iter().any(|s| !s.is_finite()) {
        return Err(PlannerError::NonFinite);
    }
    let top = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = scores.iter().map(|s| ((s - top) / temperature).exp()).collect();
    let z: f64 = exps.iter().sum();
    let mut weights: Vec<f64> = exps.iter().map(|e| risk_budget * e / z).collect();
    // keep Σw exactly at the budget when rounding overshoots 1
    let total: f64 = weights.iter().sum();
    if total > 1.0 {
        weights.iter_mut().for_each(|w| *w /= total);
    }
    AllocationDecision::with_scores(weights, scores.to_vec())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PlannerParams {
    pub temperature: f64,
    pub risk_budget: f64,
    /// Risk-tool weight multiplier when the injected regime is bear.
    pub bear_risk_multiplier: f64,
}

impl Default for PlannerParams {
    fn default() -> Self {
        Self {
            temperature: 0.5,
            risk_budget: 0.9,
            bear_risk_multiplier: 1.5,
        }
    }
}

/// Regime diagnosis handed to the planner for one slow window.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InsightNote {
    pub text: String,
    pub regime: Regime,
    pub confidence: f64,
}

/// Everything a planner sees for one decision.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PlannerContext {
    pub tickers: Vec<String>,
    /// Per ticker, tool name to output; only the tools selected this episode.
    pub tool_outputs: Vec<BTreeMap<String, ToolOutput>>,
    /// Per ticker, tool name to trust multiplier (missing means 1).
    pub tool_trust: Vec<BTreeMap<String, f64>>,
    pub retrieved_memory: String,
    pub insight: Option<InsightNote>,
    pub procedural_rules: Vec<String>,
}

impl PlannerContext {
    pub fn new(tickers: Vec<String>, tool_outputs: Vec<BTreeMap<String, ToolOutput>>) -> Self {
        let n = tickers.len();
        Self {
            tickers,
            tool_outputs,
            tool_trust: vec![BTreeMap::new(); n],
            ..Default::default()
        }
    }

    pub fn n_tickers(&self) -> usize {
        self.tickers.len()
    }

    pub fn trust(&self, ticker: usize, tool: &str) -> f64 {
        self.tool_trust
            .get(ticker)
            .and_then(|m| m.get(tool))
            .copied()
            .unwrap_or(1.0)
    }

    pub fn regime(&self) -> Option<Regime> {
        self.insight.as_ref().map(|i| i.regime)
    }
}

/// A planner turns a context into per-ticker scores; the shared
/// `score_to_weights` map then produces the allocation.
pub trait Planner: Send + Sync {
    fn id(&self) -> &str;
    fn family(&self) -> &str;
    fn scores(&self, ctx: &PlannerContext, params: &PlannerParams) -> Vec<f64>;

    fn plan(&self, ctx: &PlannerContext, params: &PlannerParams) -> Result<AllocationDecision, PlannerError> {
        if ctx.n_tickers() == 0 {
            return Err(PlannerError::EmptyContext);
        }
        let scores = self.scores(ctx, params);
        let decision = score_to_weights(&scores, params.temperature, params.risk_budget)?;
        Ok(self.adjust(ctx, decision))
    }

    /// Post-processing hook on the final weights.
    fn adjust(&self, _ctx: &PlannerContext, decision: AllocationDecision) -> AllocationDecision {
        decision
    }
}

/// Name-indexed planner pool; insertion order is the arm order.
#[derive(Default)]
pub struct PlannerRegistry {
    planners: Vec<Box<dyn Planner>>,
}

impl std::fmt::Debug for PlannerRegistry {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_list().entries(self.ids()).finish()
    }
}

impl PlannerRegistry {
    pub fn builtin() -> Self {
        let mut reg = Self::default();
        for p in builtin_planners() {
            reg.register(p).expect("builtin ids are unique");
        }
        reg
    }

    pub fn register(&mut self, planner: Box<dyn Planner>) -> Result<(), PlannerError> {
        if self.get(planner.id()).is_some() {
            return Err(PlannerError::DuplicatePlanner(planner.id().to_string()));
        }
        self.planners.push(planner);
        Ok(())
    }

    pub fn get(&self, id: &str) -> Option<&dyn Planner> {
        self.planners.iter().find(|p| p.id() == id).map(|b| b.as_ref())
    }

    pub fn require(&self, id: &str) -> Result<&dyn Planner, PlannerError> {
        self.get(id).ok_or_else(|| PlannerError::UnknownPlanner(id.to_string()))
    }

    pub fn ids(&self) -> Vec<String> {
        self.planners.iter().map(|p| p.id().to_string()).collect()
    }

    pub fn len(&self) -> usize {
        self.planners.len()
    }

    pub fn is_empty(&self) -> bool {
        self.planners.is_empty()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn equal_scores_equal_weights() {
        let d = score_to_weights(&[0.3; 10], 0.5, 0.9).unwrap();
        for w in &d.weights {
            assert!((w - 0.09).abs() < 1e-15);
        }
        assert!((d.cash - 0.1).abs() < 1e-12);
    }

    #[test]
    fn softmax_ratio() {
        let mut s = vec![0.0; 10];
        s[0] = 1.0;
        let d = score_to_weights(&s, 0.5, 0.9).unwrap();
        assert!((d.weights[0] / d.weights[1] - 2f64.exp()).abs() < 1e-12);
    }

    #[test]
    fn high_temperature_flattens() {
        let s: Vec<f64> = (0..10).map(|i| i as f64 / 10.0).collect();
        let d = score_to_weights(&s, 1e9, 0.9).unwrap();
        for w in &d.weights {
            assert!((w - 0.09).abs() < 1e-9);
        }
    }

    #[test]
    fn scale_invariance() {
        let s = [0.2, -0.4, 0.9, 0.0];
        let a = score_to_weights(&s, 0.5, 0.9).unwrap();
        let scaled: Vec<f64> = s.iter().map(|x| x * 3.0).collect();
        let b = score_to_weights(&scaled, 1.5, 0.9).unwrap();
        for (x, y) in a.weights.iter().zip(&b.weights) {
            assert!((x - y).abs() < 1e-15);
        }
    }

    #[test]
    fn simplex_validation() {
        assert!(AllocationDecision::from_weights(vec![0.5, 0.6]).is_err());
        assert!(AllocationDecision::from_weights(vec![-0.1, 0.5]).is_err());
        let d = AllocationDecision::from_weights(vec![0.25, 0.5]).unwrap();
        assert_eq!(d.cash, 0.25);
        assert!(score_to_weights(&[1.0], 0.0, 0.9).is_err());
        assert!(score_to_weights(&[1.0], 0.5, 1.5).is_err());
    }

    #[test]
    fn registry_lists_families() {
        let reg = PlannerRegistry::builtin();
        assert_eq!(
            reg.ids(),
            ["sequential", "decompose", "adaptive", "cot_reasoning", "reflexion", "hypothesis_test"]
        );
        assert!(reg.require("oracle").is_err());
    }
}
