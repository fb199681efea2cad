//! Episode outcome to bandit reward: the uniform map, the structural /
//! counterfactual / Shapley credit family and their weighted combination,
//! plus backend-driven credit.

mod shapley;

pub use shapley::{shapley_credit, CharacteristicFunction};

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::reflection::{CreditRequest, ReflectionBackend};
use crate::toolkit::HitCounts;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CreditError {
    #[error("characteristic function is missing coalition mask {0:03b}")]
    MissingCoalition(u8),
    #[error("unknown credit method `{0}`")]
    UnknownMethod(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Module {
    Planner,
    Tools,
    Memory,
}

impl Module {
    pub const ALL: [Module; 3] = [Module::Planner, Module::Tools, Module::Memory];

    pub fn index(&self) -> usize {
        *self as usize
    }

    /// Bit of this module in a coalition mask.
    pub fn bit(&self) -> u8 {
        1 << self.index()
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            Module::Planner => "planner",
            Module::Tools => "tools",
            Module::Memory => "memory",
        }
    }
}

fn clip(x: f64) -> f64 {
    if x.is_finite() {
        x.clamp(-1.0, 1.0)
    } else {
        0.0
    }
}

fn clip01(x: f64) -> f64 {
    if x.is_finite() {
        x.clamp(0.0, 1.0)
    } else {
        0.0
    }
}

/// r = clip((s + 1) / 2, 0, 1).
pub fn uniform_reward(s: f64) -> f64 {
    clip01((s + 1.0) / 2.0)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct CreditVector {
    pub planner: f64,
    pub tools: f64,
    pub memory: f64,
}

impl CreditVector {
    pub fn new(planner: f64, tools: f64, memory: f64) -> Self {
        Self {
            planner: clip(planner),
            tools: clip(tools),
            memory: clip(memory),
        }
    }

    pub fn get(&self, m: Module) -> f64 {
        self.as_array()[m.index()]
    }

    pub fn as_array(&self) -> [f64; 3] {
        [self.planner, self.tools, self.memory]
    }

    pub fn from_array(a: [f64; 3]) -> Self {
        Self::new(a[0], a[1], a[2])
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct PlannerTrace {
    /// Fraction of the planner's stages that had live inputs, in [0, 1].
    pub steps_completed: f64,
    /// Whether the allocation beat the same-budget equal-weight portfolio.
    pub prediction_correct: bool,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EpisodeOutcome {
    pub score: f64,
    pub per_tool_hits: BTreeMap<String, HitCounts>,
    pub planner_trace: PlannerTrace,
    /// Fraction of retrieved entries marked useful; 0.5 when nothing was
    /// retrieved.
    pub memory_usefulness: f64,
}

pub fn structural_credit(outcome: &EpisodeOutcome) -> CreditVector {
    let mut acc = HitCounts::default();
    for c in outcome.per_tool_hits.values() {
        acc.merge(c);
    }
    let tools = if acc.total == 0 {
        0.0
    } else {
        (acc.correct as f64 - acc.incorrect as f64) / acc.total as f64
    };
    let t = &outcome.planner_trace;
    let planner = 0.5 * clip01(t.steps_completed) + 0.5 * if t.prediction_correct { 1.0 } else { -1.0 };
    let memory = 2.0 * clip01(outcome.memory_usefulness) - 1.0;
    CreditVector::new(planner, tools, memory)
}

/// g = s - s^(-m), clipped; a missing replay gives 0.
pub fn counterfactual_credit(actual: f64, counterfactual: Option<f64>) -> f64 {
    match counterfactual {
        Some(c) => clip(actual - c),
        None => {
            log::warn!("counterfactual replay unavailable; credit 0");
            0.0
        }
    }
}

pub const FCC_WEIGHTS: [f64; 3] = [0.2, 0.3, 0.5];

pub fn fcc_combine(structural: &CreditVector, counter: &CreditVector, shap: &CreditVector) -> CreditVector {
    let [a, b, c] = FCC_WEIGHTS;
    let (s, k, h) = (structural.as_array(), counter.as_array(), shap.as_array());
    CreditVector::from_array(std::array::from_fn(|i| a * s[i] + b * k[i] + c * h[i]))
}

/// clip(λ r + (1 - λ) g, 0, 1).
pub fn module_reward(r: f64, g: f64, lambda: f64) -> f64 {
    clip01(lambda * r + (1.0 - lambda) * g)
}

/// Structural credit nudged by 0.1 from planner to tools when a tool's
/// warning was overridden by the planner.
pub fn stub_llm_credit(outcome: &EpisodeOutcome, contradiction: bool) -> CreditVector {
    let base = structural_credit(outcome);
    if contradiction {
        CreditVector::new(base.planner - 0.1, base.tools + 0.1, base.memory)
    } else {
        base
    }
}

/// Backend-judged credit; any backend failure falls back to structural.
pub fn llm_fcc_credit(outcome: &EpisodeOutcome, contradiction: bool, backend: &dyn ReflectionBackend) -> CreditVector {
    let req = CreditRequest {
        outcome: outcome.clone(),
        contradiction,
    };
    match backend.credit(&req) {
        Ok(resp) => resp.credit,
        Err(e) => {
            log::warn!("credit backend failed ({e}); using structural credit");
            structural_credit(outcome)
        }
    }
}

/// Inputs gathered by the episode loop for one credit assignment.
#[derive(Debug, Clone, Copy)]
pub struct CreditInputs<'a> {
    pub outcome: &'a EpisodeOutcome,
    /// Replayed score with each module (planner, tools, memory) swapped to
    /// its default.
    pub counterfactual: [Option<f64>; 3],
    /// Latest block Shapley values.
    pub shapley: CreditVector,
    pub contradiction: bool,
}

/// A credit method. `None` means every module is rewarded with the uniform
/// reward alone.
pub trait CreditStrategy: Send + Sync {
    fn name(&self) -> &'static str;
    /// True when the method needs per-episode counterfactual replays.
    fn needs_replay(&self) -> bool {
        false
    }
    fn assign(&self, inputs: &CreditInputs<'_>, backend: &dyn ReflectionBackend) -> Option<CreditVector>;
}

pub struct UniformCredit;

impl CreditStrategy for UniformCredit {
    fn name(&self) -> &'static str {
        "uniform"
    }
    fn assign(&self, _: &CreditInputs<'_>, _: &dyn ReflectionBackend) -> Option<CreditVector> {
        None
    }
}

pub struct FccCredit;

impl CreditStrategy for FccCredit {
    fn name(&self) -> &'static str {
        "fcc"
    }
    fn needs_replay(&self) -> bool {
        true
    }
    fn assign(&self, inputs: &CreditInputs<'_>, _: &dyn ReflectionBackend) -> Option<CreditVector> {
        let s = inputs.outcome.score;
        let counter = CreditVector::from_array(inputs.counterfactual.map(|c| counterfactual_credit(s, c)));
        Some(fcc_combine(&structural_credit(inputs.outcome), &counter, &inputs.shapley))
    }
}

pub struct LlmFccCredit;

impl CreditStrategy for LlmFccCredit {
    fn name(&self) -> &'static str {
        "llm_fcc"
    }
    fn assign(&self, inputs: &CreditInputs<'_>, backend: &dyn ReflectionBackend) -> Option<CreditVector> {
        Some(llm_fcc_credit(inputs.outcome, inputs.contradiction, backend))
    }
}

pub const CREDIT_METHODS: [&str; 3] = ["uniform", "fcc", "llm_fcc"];

pub fn credit_strategy(name: &str) -> Result<Box<dyn CreditStrategy>, CreditError> {
    match name {
        "uniform" => Ok(Box::new(UniformCredit)),
        "fcc" => Ok(Box::new(FccCredit)),
        "llm_fcc" => Ok(Box::new(LlmFccCredit)),
        other => Err(CreditError::UnknownMethod(other.to_string())),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::reflection::StubBackend;

    fn outcome(c: u64, i: u64, t: u64) -> EpisodeOutcome {
        let mut hits = BTreeMap::new();
        hits.insert(
            "x".to_string(),
            HitCounts {
                correct: c,
                incorrect: i,
                total: t,
            },
        );
        EpisodeOutcome {
            score: 0.0,
            per_tool_hits: hits,
            planner_trace: PlannerTrace::default(),
            memory_usefulness: 0.5,
        }
    }

    #[test]
    fn uniform_examples() {
        assert_eq!(uniform_reward(0.0), 0.5);
        assert_eq!(uniform_reward(1.0), 1.0);
        assert_eq!(uniform_reward(-1.0), 0.0);
    }

    #[test]
    fn structural_examples() {
        assert!((structural_credit(&outcome(8, 2, 10)).tools - 0.6).abs() < 1e-15);
        let mut none = outcome(0, 0, 0);
        none.per_tool_hits.clear();
        let g = structural_credit(&none);
        assert_eq!(g.tools, 0.0);
        assert_eq!(g.memory, 0.0);
    }

    #[test]
    fn counterfactual_examples() {
        assert!((counterfactual_credit(0.4, Some(-0.2)) - 0.6).abs() < 1e-15);
        assert_eq!(counterfactual_credit(-1.0, Some(1.0)), -1.0);
        assert_eq!(counterfactual_credit(0.3, Some(0.3)), 0.0);
        assert_eq!(counterfactual_credit(0.3, None), 0.0);
    }

    #[test]
    fn fcc_examples() {
        let x = CreditVector::new(0.3, -0.2, 0.7);
        let same = fcc_combine(&x, &x, &x);
        for (a, b) in same.as_array().iter().zip(x.as_array()) {
            assert!((a - b).abs() < 1e-15);
        }
        let e = |i: usize| CreditVector::from_array(std::array::from_fn(|j| f64::from(u8::from(i == j))));
        assert_eq!(fcc_combine(&e(0), &e(1), &e(2)).as_array(), [0.2, 0.3, 0.5]);
        let z = CreditVector::default();
        assert_eq!(fcc_combine(&z, &z, &z), z);
    }

    #[test]
    fn module_reward_examples() {
        assert!((module_reward(0.8, 0.2, 0.5) - 0.5).abs() < 1e-15);
        assert_eq!(module_reward(0.37, -1.0, 1.0), 0.37);
        assert_eq!(module_reward(0.1, -1.0, 0.5), 0.0);
    }

    #[test]
    fn overridden_warning_blames_planner() {
        let mut o = outcome(3, 2, 5);
        o.score = -0.6;
        o.planner_trace = PlannerTrace {
            steps_completed: 1.0,
            prediction_correct: false,
        };
        let stub = StubBackend::default();
        let g = llm_fcc_credit(&o, true, &stub);
        assert!(g.planner < g.tools);
        assert_eq!(llm_fcc_credit(&o, false, &stub), structural_credit(&o));
    }

    #[test]
    fn registry_names() {
        for n in CREDIT_METHODS {
            assert_eq!(credit_strategy(n).unwrap().name(), n);
        }
        assert!(credit_strategy("vibes").is_err());
    }
}
