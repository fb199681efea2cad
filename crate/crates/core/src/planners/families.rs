use serde::{Deserialize, Serialize};

use super::{AllocationDecision, Planner, PlannerContext, PlannerParams};
use crate::market::Regime;
use crate::toolkit::{
    COMPUTE_CORRELATIONS, COMPUTE_MOMENTUM, COMPUTE_QUANT_RISK, COMPUTE_TECHNICALS,
    GET_ANALYST_DATA, GET_EARNINGS_DATA, GET_FUNDAMENTALS, GET_OPTIONS_DATA, GET_PRICE_HISTORY,
    RUN_DCF_MODEL, SCORE_COMPOSITE_SIGNAL, SCORE_RISK,
};

const TREND: &[&str] = &[COMPUTE_MOMENTUM, COMPUTE_TECHNICALS, GET_PRICE_HISTORY];
const VALUATION: &[&str] = &[RUN_DCF_MODEL, GET_FUNDAMENTALS, GET_ANALYST_DATA];
const SENTIMENT: &[&str] = &[
    GET_OPTIONS_DATA,
    GET_EARNINGS_DATA,
    SCORE_COMPOSITE_SIGNAL,
    COMPUTE_CORRELATIONS,
];
const RISK: &[&str] = &[COMPUTE_QUANT_RISK, SCORE_RISK];
const QUICK: &[&str] = &[COMPUTE_MOMENTUM, COMPUTE_TECHNICALS];

/// Tool groups used by the decomposing and staged planners, in stage order.
pub const TOOL_GROUPS: [(&str, &[&str]); 4] = [
    ("trend", TREND),
    ("valuation", VALUATION),
    ("sentiment", SENTIMENT),
    ("risk", RISK),
];

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Fused {
    pub score: f64,
    pub confidence: f64,
    /// Tools that contributed (non-neutral outputs).
    pub n: usize,
}

/// Trust-weighted mean signal of the live tools in `subset` (all tools when
/// `None`). A bear insight up-weights the risk tools.
pub fn fuse(ctx: &PlannerContext, ticker: usize, subset: Option<&[&str]>, params: &PlannerParams) -> Fused {
    let bear = ctx.regime() == Some(Regime::Bear);
    let outputs = &ctx.tool_outputs[ticker];
    let mut num = 0.0;
    let mut den = 0.0;
    let mut conf = 0.0;
    let mut n = 0usize;
    for (name, out) in outputs {
        if subset.is_some_and(|s| !s.contains(&name.as_str())) || out.is_neutral() {
            continue;
        }
        let base = if bear && RISK.contains(&name.as_str()) {
            params.bear_risk_multiplier
        } else {
            1.0
        };
        num += base * ctx.trust(ticker, name) * out.signal;
        den += base;
        conf += out.confidence;
        n += 1;
    }
    if n == 0 {
        return Fused::default();
    }
    Fused {
        score: num / den,
        confidence: conf / n as f64,
        n,
    }
}

fn has_any(ctx: &PlannerContext, ticker: usize, tools: &[&str]) -> bool {
    tools.iter().any(|t| ctx.tool_outputs[ticker].contains_key(*t))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    Sequential,
    Decompose,
    Adaptive,
    CotReasoning,
    Reflexion,
    HypothesisTest,
}

impl Family {
    pub const ALL: [Family; 6] = [
        Family::Sequential,
        Family::Decompose,
        Family::Adaptive,
        Family::CotReasoning,
        Family::Reflexion,
        Family::HypothesisTest,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            Family::Sequential => "sequential",
            Family::Decompose => "decompose",
            Family::Adaptive => "adaptive",
            Family::CotReasoning => "cot_reasoning",
            Family::Reflexion => "reflexion",
            Family::HypothesisTest => "hypothesis_test",
        }
    }
}

/// One of the six built-in fusion strategies.
#[derive(Debug, Clone)]
pub struct FamilyPlanner {
    pub family: Family,
    /// |quick score| below this sends the adaptive planner to the full set.
    pub adaptive_band: f64,
    /// Running-score damping on disagreement for the staged planner.
    pub cot_damping: f64,
    /// Mean quick confidence below this triggers a reflexion re-fuse.
    pub reflexion_min_confidence: f64,
}

impl FamilyPlanner {
    pub fn new(family: Family) -> Self {
        Self {
            family,
            adaptive_band: 0.15,
            cot_damping: 0.75,
            reflexion_min_confidence: 0.5,
        }
    }

    fn ticker_score(&self, ctx: &PlannerContext, i: usize, p: &PlannerParams) -> f64 {
        let full = || fuse(ctx, i, None, p).score;
        match self.family {
            Family::Sequential => full(),
            Family::Decompose => {
                let groups: Vec<f64> = TOOL_GROUPS
                    .iter()
                    .map(|(_, g)| fuse(ctx, i, Some(g), p))
                    .filter(|f| f.n > 0)
                    .map(|f| f.score)
                    .collect();
                if groups.is_empty() {
                    0.0
                } else {
                    groups.iter().sum::<f64>() / groups.len() as f64
                }
            }
            Family::Adaptive | Family::Reflexion => {
                if !has_any(ctx, i, QUICK) {
                    log::debug!("{}: quick tools missing, fusing everything", self.family.as_str());
                    return full();
                }
                let quick = fuse(ctx, i, Some(QUICK), p);
                let escalate = match self.family {
                    Family::Adaptive => quick.score.abs() < self.adaptive_band,
                    _ => quick.confidence < self.reflexion_min_confidence,
                };
                if escalate {
                    full()
                } else {
                    quick.score
                }
            }
            Family::CotReasoning => {
                let mut running: Option<f64> = None;
                for (_, g) in TOOL_GROUPS {
                    let f = fuse(ctx, i, Some(g), p);
                    if f.n == 0 {
                        continue;
                    }
                    running = Some(match running {
                        None => f.score,
                        Some(r) if r * f.score < 0.0 => r * self.cot_damping,
                        Some(r) => 0.5 * (r + f.score),
                    });
                }
                running.unwrap_or(0.0)
            }
            Family::HypothesisTest => {
                let bear_regime = ctx.regime() == Some(Regime::Bear);
                let (mut bull, mut bear) = (0.0, 0.0);
                for (name, out) in &ctx.tool_outputs[i] {
                    if out.is_neutral() {
                        continue;
                    }
                    let base = if bear_regime && RISK.contains(&name.as_str()) {
                        p.bear_risk_multiplier
                    } else {
                        1.0
                    };
                    let c = base * ctx.trust(i, name) * out.signal;
                    if c > 0.0 {
                        bull += c;
                    } else {
                        bear -= c;
                    }
                }
                if bull + bear > 0.0 {
                    (bull - bear) / (bull + bear)
                } else {
                    0.0
                }
            }
        }
    }
}

impl Planner for FamilyPlanner {
    fn id(&self) -> &str {
        self.family.as_str()
    }

    fn family(&self) -> &str {
        self.family.as_str()
    }

    fn scores(&self, ctx: &PlannerContext, params: &PlannerParams) -> Vec<f64> {
        (0..ctx.n_tickers()).map(|i| self.ticker_score(ctx, i, params)).collect()
    }
}

pub fn builtin_planners() -> Vec<Box<dyn Planner>> {
    Family::ALL
        .iter()
        .map(|f| Box::new(FamilyPlanner::new(*f)) as Box<dyn Planner>)
        .collect()
}

/// Template parameters for the evolved momentum-reversal planner.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReversalParams {
    /// Short-horizon return field read from compute_momentum.
    pub short_horizon: usize,
    pub long_horizon: usize,
    /// Weight given to tickers whose short and long moves disagree.
    pub floor_weight: f64,
}

impl ReversalParams {
    /// Lexicographic template grid; variant k takes entry k.
    pub fn variant(k: usize) -> Option<Self> {
        const GRID: [(usize, usize, f64); 4] = [(5, 20, 0.01), (5, 10, 0.01), (10, 20, 0.01), (5, 20, 0.0)];
        GRID.get(k).map(|&(s, l, f)| Self {
            short_horizon: s,
            long_horizon: l,
            floor_weight: f,
        })
    }

    pub fn validate(&self, n_tickers: usize) -> bool {
        self.short_horizon > 0
            && self.long_horizon > self.short_horizon
            && self.floor_weight >= 0.0
            && self.floor_weight * n_tickers as f64 <= 1.0
    }
}

/// Sequential fusion with reversal damping: tickers whose short-horizon move
/// opposes the longer trend are floored at a minimal weight and the freed
/// weight is spread over the rest.
#[derive(Debug, Clone)]
pub struct EvolvedMomentumReversal {
    pub id: String,
    pub params: ReversalParams,
}

impl EvolvedMomentumReversal {
    pub fn new(id: impl Into<String>, params: ReversalParams) -> Self {
        Self {
            id: id.into(),
            params,
        }
    }

    fn reversing(&self, ctx: &PlannerContext, i: usize) -> bool {
        let Some(m) = ctx.tool_outputs[i].get(COMPUTE_MOMENTUM) else {
            return false;
        };
        let short = m.num(&format!("return_{}", self.params.short_horizon));
        let long = m.num(&format!("return_{}", self.params.long_horizon));
        matches!((short, long), (Some(s), Some(l)) if s * l < 0.0)
    }
}

impl Planner for EvolvedMomentumReversal {
    fn id(&self) -> &str {
        &self.id
    }

    fn family(&self) -> &str {
        "evolved_momentum_reversal"
    }

    fn scores(&self, ctx: &PlannerContext, params: &PlannerParams) -> Vec<f64> {
        (0..ctx.n_tickers()).map(|i| fuse(ctx, i, None, params).score).collect()
    }

    fn adjust(&self, ctx: &PlannerContext, decision: AllocationDecision) -> AllocationDecision {
        let flagged: Vec<bool> = (0..ctx.n_tickers()).map(|i| self.reversing(ctx, i)).collect();
        let n_flag = flagged.iter().filter(|f| **f).count();
        if n_flag == 0 || n_flag == flagged.len() {
            return decision;
        }
        let budget = decision.invested();
        let floor = self.params.floor_weight.min(budget / flagged.len() as f64);
        let keep: f64 = decision
            .weights
            .iter()
            .zip(&flagged)
            .filter(|(_, f)| !**f)
            .map(|(w, _)| *w)
            .sum();
        let free = budget - floor * n_flag as f64;
        let weights = decision
            .weights
            .iter()
            .zip(&flagged)
            .map(|(w, f)| if *f { floor } else if keep > 0.0 { w / keep * free } else { 0.0 })
            .collect();
        AllocationDecision::with_scores(weights, decision.scores.clone()).unwrap_or(decision)
    }
}

#[cfg(test)]
mod tests {
    use super::super::score_to_weights;
    use super::*;
    use crate::toolkit::ToolOutput;
    use std::collections::BTreeMap;

    fn ctx_with(signals: &[Vec<(&str, f64)>]) -> PlannerContext {
        let outs = signals
            .iter()
            .map(|row| {
                row.iter()
                    .map(|(t, s)| (t.to_string(), ToolOutput::new(t, *s, 0.8)))
                    .collect::<BTreeMap<_, _>>()
            })
            .collect();
        let tickers = (0..signals.len()).map(|i| format!("T{i}")).collect();
        PlannerContext::new(tickers, outs)
    }

    #[test]
    fn neutral_inputs_equal_weights() {
        let row: Vec<(&str, f64)> = crate::toolkit::TOOL_NAMES.iter().map(|t| (*t, 0.0)).collect();
        let ctx = ctx_with(&vec![row; 10]);
        for p in builtin_planners() {
            let d = p.plan(&ctx, &PlannerParams::default()).unwrap();
            for w in &d.weights {
                assert!((w - 0.09).abs() < 1e-12, "{}", p.id());
            }
        }
    }

    #[test]
    fn unanimous_ticker_gets_max_weight() {
        let mut rows = vec![vec![(COMPUTE_MOMENTUM, 0.0), (RUN_DCF_MODEL, 0.0)]; 5];
        rows[2] = vec![(COMPUTE_MOMENTUM, 1.0), (RUN_DCF_MODEL, 1.0)];
        let ctx = ctx_with(&rows);
        for p in builtin_planners() {
            let d = p.plan(&ctx, &PlannerParams::default()).unwrap();
            let best = d.weights.iter().cloned().fold(0.0, f64::max);
            assert_eq!(best, d.weights[2], "{}", p.id());
        }
    }

    #[test]
    fn decompose_matches_sequential_on_equal_group_means() {
        let row = vec![
            (COMPUTE_MOMENTUM, 0.4),
            (RUN_DCF_MODEL, 0.4),
            (GET_OPTIONS_DATA, 0.4),
            (COMPUTE_QUANT_RISK, 0.4),
        ];
        let ctx = ctx_with(&[row.clone(), row.iter().map(|(t, s)| (*t, -s)).collect()]);
        let p = PlannerParams::default();
        let a = FamilyPlanner::new(Family::Sequential).scores(&ctx, &p);
        let b = FamilyPlanner::new(Family::Decompose).scores(&ctx, &p);
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).abs() < 1e-15);
        }
    }

    #[test]
    fn negative_trust_flips_contribution() {
        let mut ctx = ctx_with(&[vec![(COMPUTE_MOMENTUM, 0.6)]]);
        ctx.tool_trust[0].insert(COMPUTE_MOMENTUM.to_string(), -1.0);
        let s = FamilyPlanner::new(Family::Sequential).scores(&ctx, &PlannerParams::default());
        assert!((s[0] + 0.6).abs() < 1e-15);
    }

    #[test]
    fn bear_insight_upweights_risk() {
        let mut ctx = ctx_with(&[vec![(COMPUTE_MOMENTUM, 1.0), (SCORE_RISK, -1.0)]]);
        let p = PlannerParams::default();
        let calm = fuse(&ctx, 0, None, &p).score;
        ctx.insight = Some(super::super::InsightNote {
            text: String::new(),
            regime: Regime::Bear,
            confidence: 1.0,
        });
        let bear = fuse(&ctx, 0, None, &p).score;
        assert_eq!(calm, 0.0);
        assert!((bear - (1.0 - 1.5) / 2.5).abs() < 1e-15);
    }

    #[test]
    fn reversal_floors_flagged_tickers() {
        let mut ctx = ctx_with(&[vec![(RUN_DCF_MODEL, 0.5)], vec![(RUN_DCF_MODEL, 0.0)], vec![(RUN_DCF_MODEL, 0.0)]]);
        ctx.tool_outputs[0].insert(
            COMPUTE_MOMENTUM.into(),
            ToolOutput::new(COMPUTE_MOMENTUM, 0.0, 0.0)
                .with("return_5", -0.01)
                .with("return_20", 0.03),
        );
        let p = EvolvedMomentumReversal::new("evo_1", ReversalParams::variant(0).unwrap());
        let d = p.plan(&ctx, &PlannerParams::default()).unwrap();
        assert_eq!(d.weights[0], 0.01);
        assert!((d.invested() - 0.9).abs() < 1e-12);
        let plain = score_to_weights(&d.scores, 0.5, 0.9).unwrap();
        assert!(plain.weights[0] > 0.01);
    }
}
