use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::config::RunConfig;
use super::env::{mean, sample_std, Environment};
use super::HarnessError;
use crate::bandits::{per_tool_select, BetaArm, LinUcbSelector, ThompsonSelector, CONTEXT_DIM};
use crate::canonical;
use crate::credit::{
    uniform_reward, module_reward, CharacteristicFunction, CreditInputs, CreditStrategy, CreditVector,
    EpisodeOutcome, Module, PlannerTrace, shapley_credit,
};
use crate::market::{outcome_score, step, PortfolioState};
use crate::memory::{
    default_policies, retrieve, EpisodeRecord, MemoryQuery, MemoryStore, RetrievalPolicy, ScoredEntry, Tier,
    DEFAULT_POLICY,
};
use crate::planners::{
    AllocationDecision, EvolvedMomentumReversal, InsightNote, Planner, PlannerContext, PlannerRegistry,
    TOOL_GROUPS,
};
use crate::reflection::{
    ArmDescription, FailureTracker, PriorRequest, ReflectionBackend, ReflectionInsight, SkillSet,
};
use crate::toolkit::{
    direction_outcome, HitCounts, HitStats, ToolOutput, COMPUTE_QUANT_RISK, GET_ANALYST_DATA, GET_OPTIONS_DATA,
    SCORE_RISK,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    WarmUp,
    Train,
    Validation,
    Test,
}

impl Phase {
    pub fn learns(&self) -> bool {
        *self == Phase::Train
    }

    /// Phases that may write episodic memory.
    pub fn writes(&self) -> bool {
        matches!(self, Phase::WarmUp | Phase::Train)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeLog {
    pub episode: usize,
    pub phase: Phase,
    pub policy: Option<String>,
    pub planner: String,
    pub tools: Vec<String>,
    pub portfolio_return: f64,
    pub score: f64,
    pub reward: Option<f64>,
    pub credit: Option<CreditVector>,
    pub memory_usefulness: f64,
    pub retrieved: usize,
    pub weights: Vec<f64>,
}

/// Everything that learns. Cloned for checkpoints.
#[derive(Debug, Clone)]
pub struct AgentState {
    pub policies: Vec<RetrievalPolicy>,
    pub policy_bandit: Option<ThompsonSelector>,
    pub tool_bandit: Option<ThompsonSelector>,
    pub planner_bandit: Option<LinUcbSelector>,
    pub active_planner: String,
    pub evolved: Vec<EvolvedMomentumReversal>,
    pub memory: MemoryStore,
    pub insight: Option<ReflectionInsight>,
    pub insight_history: Vec<ReflectionInsight>,
    pub skills: SkillSet,
    pub failures: FailureTracker,
    pub shapley: CreditVector,
    shapley_block: Vec<[f64; 8]>,
    /// Hits since the last slow window / distillation.
    pub window_hits: HitStats,
    pub distill_hits: HitStats,
    pub window_scores: BTreeMap<String, Vec<f64>>,
    pub window_summaries: Vec<crate::reflection::EpisodeSummary>,
    pub window_vols: Vec<f64>,
    frozen: bool,
}

#[derive(Serialize)]
struct PosteriorView<'a> {
    policies: Option<crate::bandits::PosteriorSnapshot>,
    tools: Option<crate::bandits::PosteriorSnapshot>,
    planners: Option<&'a LinUcbSelector>,
    pool: Vec<&'a str>,
}

fn derive_seed(seed: u64, stream: &str) -> u64 {
    let h = canonical::hex_digest(format!("{seed}/{stream}").as_bytes());
    u64::from_str_radix(&h[..16], 16).expect("hex digest")
}

impl AgentState {
    pub fn new(
        cfg: &RunConfig,
        env: &Environment,
        planners: &PlannerRegistry,
        backend: &dyn ReflectionBackend,
    ) -> Result<Self, HarnessError> {
        let policies = if cfg.memory { default_policies() } else { Vec::new() };
        let tool_names: Vec<&str> = env.registry.names();
        let priors = if cfg.flags.cold_start {
            let mut arms: Vec<ArmDescription> = policies
                .iter()
                .map(|p| ArmDescription {
                    arm_id: p.policy_id.clone(),
                    kind: match p.tiers_enabled.len() {
                        0 => "empty_memory_policy",
                        1 => "memory_policy",
                        _ => "rich_memory_policy",
                    }
                    .into(),
                    description: format!("{} tiers, top {}", p.tiers_enabled.len(), p.top_k),
                })
                .collect();
            if cfg.flags.per_tool_selection {
                arms.extend(tool_names.iter().map(|t| ArmDescription {
                    arm_id: t.to_string(),
                    kind: if env.registry.is_data_backed(t) {
                        "data_tool".into()
                    } else {
                        "computational_tool".into()
                    },
                    description: String::new(),
                }));
            }
            crate::reflection::cold_start_priors(&PriorRequest { arms }, backend)
        } else {
            BTreeMap::new()
        };
        let arm = |id: &str| -> Result<BetaArm, HarnessError> {
            let (a, b) = priors.get(id).copied().unwrap_or((1.0, 1.0));
            Ok(BetaArm::with_prior(id, a, b)?)
        };
        let policy_bandit = if cfg.memory {
            let arms = policies.iter().map(|p| arm(&p.policy_id)).collect::<Result<Vec<_>, _>>()?;
            Some(ThompsonSelector::new(arms, derive_seed(cfg.seed, "policy"))?)
        } else {
            None
        };
        let tool_bandit = if cfg.flags.per_tool_selection {
            cfg.per_tool
                .validate(tool_names.len())
                .map_err(|e| HarnessError::Config(e.to_string()))?;
            let arms = tool_names.iter().map(|t| arm(t)).collect::<Result<Vec<_>, _>>()?;
            Some(ThompsonSelector::new(arms, derive_seed(cfg.seed, "tools"))?)
        } else {
            None
        };
        let planner_bandit = if cfg.flags.planner_selection {
            let mut l = LinUcbSelector::new(cfg.linucb_alpha, CONTEXT_DIM);
            for id in planners.ids() {
                l.add_arm(id)?;
            }
            Some(l)
        } else {
            None
        };
        planners
            .get(&cfg.planner)
            .ok_or_else(|| HarnessError::Config(format!("unknown planner `{}`", cfg.planner)))?;
        Ok(Self {
            policies,
            policy_bandit,
            tool_bandit,
            planner_bandit,
            active_planner: cfg.planner.clone(),
            evolved: Vec::new(),
            memory: MemoryStore::new(cfg.memory_config.clone()),
            insight: None,
            insight_history: Vec::new(),
            skills: SkillSet::default(),
            failures: FailureTracker::new(cfg.planner_failure_streak),
            shapley: CreditVector::default(),
            shapley_block: Vec::new(),
            window_hits: HitStats::default(),
            distill_hits: HitStats::default(),
            window_scores: BTreeMap::new(),
            window_summaries: Vec::new(),
            window_vols: Vec::new(),
            frozen: false,
        })
    }

    /// Disables all learning: bandits, memory writes, reflection and
    /// evolution. Sampling rngs are reseeded for the named phase.
    pub fn freeze(&mut self, seed: u64, phase: &str) {
        self.frozen = true;
        self.memory.set_read_only(true);
        if let Some(b) = &mut self.policy_bandit {
            b.reseed(derive_seed(seed, &format!("{phase}/policy")));
        }
        if let Some(b) = &mut self.tool_bandit {
            b.reseed(derive_seed(seed, &format!("{phase}/tools")));
        }
    }

    pub fn is_frozen(&self) -> bool {
        self.frozen
    }

    pub(super) fn ensure_mutable(&self, what: &str) -> Result<(), HarnessError> {
        if self.frozen {
            Err(HarnessError::Frozen(what.to_string()))
        } else {
            Ok(())
        }
    }

    pub fn posterior_hash(&self) -> String {
        canonical::state_hash(&PosteriorView {
            policies: self.policy_bandit.as_ref().map(ThompsonSelector::snapshot),
            tools: self.tool_bandit.as_ref().map(ThompsonSelector::snapshot),
            planners: self.planner_bandit.as_ref(),
            pool: self.policies.iter().map(|p| p.policy_id.as_str()).collect(),
        })
    }

    pub fn memory_hash(&self) -> String {
        self.memory.state_hash()
    }

    pub fn policy(&self, id: &str) -> Option<&RetrievalPolicy> {
        self.policies.iter().find(|p| p.policy_id == id)
    }

    pub fn add_policy(&mut self, policy: RetrievalPolicy) -> Result<(), HarnessError> {
        self.ensure_mutable("policy pool")?;
        if let Some(b) = &mut self.policy_bandit {
            b.add_arm(BetaArm::new(policy.policy_id.clone()))?;
            self.policies.push(policy);
        }
        Ok(())
    }

    pub fn add_planner(&mut self, p: EvolvedMomentumReversal) -> Result<(), HarnessError> {
        self.ensure_mutable("planner pool")?;
        match &mut self.planner_bandit {
            Some(l) => l.add_arm(p.id.clone())?,
            None => self.active_planner = p.id.clone(),
        }
        self.evolved.push(p);
        Ok(())
    }
}

/// Module choices for one decision.
#[derive(Clone)]
struct Choice<'a> {
    policy: Option<&'a RetrievalPolicy>,
    /// `None` means no tools at all.
    tools: Option<&'a BTreeSet<String>>,
    /// `None` means the equal-weight fallback.
    planner: Option<&'a dyn Planner>,
    /// Use memory evidence and insights when forming trust.
    informed: bool,
}

struct Decision {
    decision: AllocationDecision,
    retrieved: Vec<Vec<ScoredEntry>>,
    ctx: PlannerContext,
}

/// Shared, read-only pieces of one run.
pub struct Runner<'a> {
    pub cfg: &'a RunConfig,
    pub env: &'a Environment,
    pub planners: &'a PlannerRegistry,
    pub backend: &'a dyn ReflectionBackend,
    pub credit: &'a dyn CreditStrategy,
    pub all_tools: BTreeSet<String>,
}

impl<'a> Runner<'a> {
    pub fn new(
        cfg: &'a RunConfig,
        env: &'a Environment,
        planners: &'a PlannerRegistry,
        backend: &'a dyn ReflectionBackend,
        credit: &'a dyn CreditStrategy,
    ) -> Self {
        let all_tools = env.registry.names().iter().map(|s| s.to_string()).collect();
        Self {
            cfg,
            env,
            planners,
            backend,
            credit,
            all_tools,
        }
    }

    fn planner<'s>(&'s self, st: &'s AgentState, id: &str) -> Result<&'s dyn Planner, HarnessError> {
        if let Some(p) = self.planners.get(id) {
            return Ok(p);
        }
        st.evolved
            .iter()
            .find(|p| p.id == id)
            .map(|p| p as &dyn Planner)
            .ok_or_else(|| HarnessError::Runtime(format!("planner `{id}` not in pool")))
    }

    /// Context features for planner selection.
    pub fn context_vector(&self, bar: usize) -> [f64; CONTEXT_DIM] {
        let env = self.env;
        let k = env.n_tickers();
        let series = &env.series;
        let mut sectors: BTreeMap<&str, usize> = BTreeMap::new();
        for t in &series.tickers {
            *sectors.entry(t.sector.as_str()).or_default() += 1;
        }
        let concentration: f64 = sectors.values().map(|c| (*c as f64 / k as f64).powi(2)).sum();
        let from = bar.saturating_sub(120);
        let vol = mean(
            &(0..k)
                .map(|i| sample_std(&(from.max(1)..bar).map(|t| series.bar_return(i, t)).collect::<Vec<_>>()))
                .collect::<Vec<_>>(),
        );
        let log_cap = mean(&series.tickers.iter().map(|t| t.market_cap_bn.max(1e-3).ln()).collect::<Vec<_>>());
        let live = |tool: &str| {
            (0..k)
                .filter(|&i| env.outputs(bar, i).get(tool).is_some_and(|o| !o.is_neutral()))
                .count() as f64
                / k as f64
        };
        let data_tools: Vec<&str> = env
            .registry
            .names()
            .into_iter()
            .filter(|t| env.registry.is_data_backed(t))
            .collect();
        let richness = if data_tools.is_empty() {
            0.0
        } else {
            mean(&data_tools.iter().map(|t| live(t)).collect::<Vec<_>>())
        };
        let start = bar.saturating_sub(20);
        let momentum = mean(
            &(0..k)
                .map(|i| (start..bar).map(|t| series.bar_return(i, t)).sum::<f64>())
                .collect::<Vec<_>>(),
        );
        [
            concentration,
            (vol * 100.0).min(5.0),
            log_cap / 10.0,
            richness,
            (momentum * 10.0).clamp(-1.0, 1.0),
            live(GET_OPTIONS_DATA),
            live(GET_ANALYST_DATA),
        ]
    }

    fn trust(&self, st: &AgentState, visible: &[ScoredEntry], tool: &str) -> f64 {
        let k0 = self.cfg.trust_prior_weight;
        let (mut num, mut den) = (k0, k0);
        for e in visible {
            if let Some(ev) = e.entry.evidence.get(tool) {
                num += e.score * ev;
                den += e.score;
            }
        }
        if self.cfg.reflection_enabled() {
            if let Some(i) = &st.insight {
                if let Some(a) = i.tool_assessment.get(tool) {
                    let w = self.cfg.insight_weight * i.confidence;
                    num += w * a;
                    den += w;
                }
            }
        }
        let mut t = num / den;
        if self.cfg.flags.skill_extraction {
            if let Some(s) = st.skills.best() {
                if s.tools.iter().any(|x| x == tool) {
                    t *= 1.0 + 0.25 * s.success_rate;
                }
            }
        }
        t
    }

    fn decide(&self, st: &AgentState, bar: usize, choice: &Choice<'_>) -> Result<Decision, HarnessError> {
        let env = self.env;
        let k = env.n_tickers();
        let symbols = env.series.symbols();
        let empty = BTreeSet::new();
        let tools = choice.tools.unwrap_or(&empty);
        let outputs: Vec<BTreeMap<String, ToolOutput>> = (0..k)
            .map(|i| {
                env.outputs(bar, i)
                    .iter()
                    .filter(|(n, _)| tools.contains(*n))
                    .map(|(n, o)| (n.clone(), o.clone()))
                    .collect()
            })
            .collect();
        let mut ctx = PlannerContext::new(symbols.clone(), outputs);
        let regime = st.insight.as_ref().map(|i| i.regime);
        let mut retrieved = vec![Vec::new(); k];
        let mut contexts = Vec::new();
        if let Some(policy) = choice.policy {
            for i in 0..k {
                let query = MemoryQuery {
                    ticker: symbols[i].clone(),
                    sector: env.series.tickers[i].sector.clone(),
                    tools: tools.clone(),
                    current_episode: bar,
                    regime,
                };
                let r = retrieve(&st.memory, policy, &query)?;
                if !r.context.is_empty() {
                    contexts.push(format!("## {}\n{}", symbols[i], r.context));
                }
                retrieved[i] = r.visible_entries().to_vec();
            }
            if policy.tiers_enabled.contains(&Tier::Procedural) {
                ctx.procedural_rules = st.memory.procedural_rules();
            }
        }
        ctx.retrieved_memory = contexts.join("\n");
        if choice.informed {
            for i in 0..k {
                for t in ctx.tool_outputs[i].keys() {
                    let v = self.trust(st, &retrieved[i], t);
                    if v != 1.0 {
                        ctx.tool_trust[i].insert(t.clone(), v);
                    }
                }
            }
            if self.cfg.reflection_enabled() {
                ctx.insight = st.insight.as_ref().map(|i| InsightNote {
                    text: i.causal_insight.clone(),
                    regime: i.regime,
                    confidence: i.confidence,
                });
            }
        }
        let decision = match choice.planner {
            Some(p) => p.plan(&ctx, &self.cfg.planner_params)?,
            None => crate::planners::score_to_weights(
                &vec![0.0; k],
                self.cfg.planner_params.temperature,
                self.cfg.planner_params.risk_budget,
            )?,
        };
        Ok(Decision {
            decision,
            retrieved,
            ctx,
        })
    }

    fn score_of(&self, d: &AllocationDecision, rets: &[f64]) -> f64 {
        let r: f64 = d.weights.iter().zip(rets).map(|(w, x)| w * x).sum();
        outcome_score(r, self.cfg.outcome_scale)
    }

    /// Runs one episode on bar `bar`. `train_index` drives the top-K
    /// schedule.
    pub fn episode(
        &self,
        st: &mut AgentState,
        portfolio: &mut PortfolioState,
        bar: usize,
        train_index: usize,
        phase: Phase,
    ) -> Result<EpisodeLog, HarnessError> {
        if phase.learns() || phase.writes() {
            st.ensure_mutable("training episode")?;
        }
        let cfg = self.cfg;
        let selecting = phase != Phase::WarmUp;

        // selection
        let policy_id: Option<String> = match &mut st.policy_bandit {
            None => None,
            Some(_) if !selecting => Some(DEFAULT_POLICY.to_string()),
            Some(b) => Some(b.select()?.to_string()),
        };
        let tools: BTreeSet<String> = match &mut st.tool_bandit {
            Some(b) if selecting => {
                let arms = b.arms().to_vec();
                per_tool_select(&arms, &cfg.per_tool, train_index, b.rng_mut())?
                    .into_iter()
                    .map(|i| arms[i].arm_id.clone())
                    .collect()
            }
            _ => self.all_tools.clone(),
        };
        let phi = self.context_vector(bar);
        let planner_id = match &st.planner_bandit {
            Some(l) if selecting => l.select(&phi)?.to_string(),
            _ => st.active_planner.clone(),
        };

        let planner = self.planner(st, &planner_id)?;
        let policy = policy_id.as_deref().and_then(|id| st.policy(id));
        let choice = Choice {
            policy,
            tools: Some(&tools),
            planner: Some(planner),
            informed: selecting,
        };
        let Decision {
            decision,
            retrieved,
            ctx,
        } = self.decide(st, bar, &choice)?;

        // outcome
        let rets = self.env.settle(bar, bar);
        let (r, next) = step(portfolio, &decision, &rets);
        *portfolio = next;
        let s = outcome_score(r, cfg.outcome_scale);
        let replay = if phase.learns() && self.credit.needs_replay() {
            Some((
                self.counterfactuals(st, bar, &choice, &rets)?,
                self.coalitions(st, bar, &choice, &rets)?,
            ))
        } else {
            None
        };

        let k = self.env.n_tickers();
        let symbols = self.env.series.symbols();
        let mut per_tool_hits: BTreeMap<String, HitCounts> = BTreeMap::new();
        let mut per_ticker_evidence: Vec<BTreeMap<String, f64>> = vec![BTreeMap::new(); k];
        for i in 0..k {
            for (name, out) in &ctx.tool_outputs[i] {
                if out.is_neutral() {
                    continue;
                }
                let d = direction_outcome(out.signal, rets[i]);
                let c = per_tool_hits.entry(name.clone()).or_default();
                c.total += 1;
                match d {
                    1 => c.correct += 1,
                    -1 => c.incorrect += 1,
                    _ => {}
                }
                if d != 0 {
                    per_ticker_evidence[i].insert(name.clone(), f64::from(d));
                }
            }
        }

        // usefulness of what was actually shown
        let visible: Vec<&ScoredEntry> = retrieved.iter().flatten().collect();
        let memory_usefulness = if visible.is_empty() {
            0.5
        } else {
            visible.iter().filter(|e| e.score >= 0.5 && s > 0.0).count() as f64 / visible.len() as f64
        };

        let invested = decision.invested();
        let eqw = invested * mean(&rets);
        let live_groups = (0..k)
            .map(|i| {
                TOOL_GROUPS
                    .iter()
                    .filter(|(_, g)| g.iter().any(|t| ctx.tool_outputs[i].get(*t).is_some_and(|o| !o.is_neutral())))
                    .count() as f64
                    / TOOL_GROUPS.len() as f64
            })
            .collect::<Vec<_>>();
        let outcome = EpisodeOutcome {
            score: s,
            per_tool_hits: per_tool_hits.clone(),
            planner_trace: PlannerTrace {
                steps_completed: mean(&live_groups),
                prediction_correct: r > eqw,
            },
            memory_usefulness,
        };

        let mut log = EpisodeLog {
            episode: bar,
            phase,
            policy: policy_id.clone(),
            planner: planner_id.clone(),
            tools: tools.iter().cloned().collect(),
            portfolio_return: r,
            score: s,
            reward: None,
            credit: None,
            memory_usefulness,
            retrieved: visible.len(),
            weights: decision.weights.clone(),
        };

        if phase.writes() {
            for tool in per_tool_hits.keys() {
                for i in 0..k {
                    if let Some(out) = ctx.tool_outputs[i].get(tool) {
                        if !out.is_neutral() {
                            crate::toolkit::record_hit(&mut st.window_hits, tool, &symbols[i], out.signal, rets[i]);
                            crate::toolkit::record_hit(&mut st.distill_hits, tool, &symbols[i], out.signal, rets[i]);
                        }
                    }
                }
            }
            st.window_scores.entry(planner_id.clone()).or_default().push(s);
            for i in 0..k {
                let ev = &per_ticker_evidence[i];
                let right = ev.values().filter(|v| **v > 0.0).count();
                st.window_summaries.push(crate::reflection::EpisodeSummary {
                    episode: bar,
                    ticker: symbols[i].clone(),
                    planner: planner_id.clone(),
                    score: s,
                    directional_accuracy: if ev.is_empty() { 0.5 } else { right as f64 / ev.len() as f64 },
                });
            }
        }

        if phase.learns() {
            let contradiction = (0..k).any(|i| {
                let warned = [COMPUTE_QUANT_RISK, SCORE_RISK]
                    .iter()
                    .any(|t| ctx.tool_outputs[i].get(*t).is_some_and(|o| o.signal <= -0.3));
                warned && decision.weights[i] > cfg.planner_params.risk_budget / k as f64 && rets[i] < 0.0
            });
            let mut counterfactual = [None; 3];
            if let Some((cf, v)) = replay {
                counterfactual = cf;
                st.shapley_block.push(v);
                if st.shapley_block.len() >= cfg.shapley_every {
                    let avg: [f64; 8] =
                        std::array::from_fn(|m| mean(&st.shapley_block.iter().map(|x| x[m]).collect::<Vec<_>>()));
                    st.shapley = shapley_credit(&CharacteristicFunction::from_fn(|m| avg[usize::from(m)]))?;
                    st.shapley_block.clear();
                }
            }
            let inputs = CreditInputs {
                outcome: &outcome,
                counterfactual,
                shapley: st.shapley,
                contradiction,
            };
            let g = self.credit.assign(&inputs, self.backend);
            let base = uniform_reward(s);
            let blend = |x: f64, m: Module| g.map_or(x, |g| module_reward(x, g.get(m), cfg.lambda));
            let policy_reward = blend(base, Module::Memory);
            if let (Some(b), Some(id)) = (&mut st.policy_bandit, &policy_id) {
                b.update(id, policy_reward)?;
            }
            if let Some(b) = &mut st.tool_bandit {
                for t in &tools {
                    let h = per_tool_hits.get(t).and_then(HitCounts::hit_rate).unwrap_or(0.5);
                    b.update(t, blend(h, Module::Tools))?;
                }
            }
            if let Some(l) = &mut st.planner_bandit {
                l.update(&planner_id, &phi, blend(base, Module::Planner))?;
            }
            if cfg.flags.skill_extraction {
                let net: Vec<&str> = per_tool_hits
                    .iter()
                    .filter(|(_, c)| c.correct > c.incorrect)
                    .map(|(t, _)| t.as_str())
                    .collect();
                st.skills.observe(net, outcome.planner_trace.prediction_correct);
            }
            log.reward = Some(policy_reward);
            log.credit = g;
        }

        if phase.writes() && cfg.memory {
            let regime = st.insight.as_ref().map(|i| i.regime);
            for i in 0..k {
                let ev = &per_ticker_evidence[i];
                let right: Vec<&str> = ev.iter().filter(|(_, v)| **v > 0.0).map(|(t, _)| t.as_str()).collect();
                let wrong: Vec<&str> = ev.iter().filter(|(_, v)| **v < 0.0).map(|(t, _)| t.as_str()).collect();
                let record = EpisodeRecord {
                    episode: bar,
                    ticker: symbols[i].clone(),
                    sector: self.env.series.tickers[i].sector.clone(),
                    tools_used: ev.keys().cloned().collect(),
                    score: s,
                    regime,
                    evidence: ev.clone(),
                    content: format!(
                        "{} bar {bar}: score {s:.3}, return {:.4}, weight {:.3}; right: {}; wrong: {}",
                        symbols[i],
                        rets[i],
                        decision.weights[i],
                        right.join(","),
                        wrong.join(",")
                    ),
                };
                st.memory.write_episodic(&record)?;
            }
        }
        Ok(log)
    }

    /// Scores with one module at a time swapped to its default.
    fn counterfactuals(
        &self,
        st: &AgentState,
        bar: usize,
        choice: &Choice<'_>,
        rets: &[f64],
    ) -> Result<[Option<f64>; 3], HarnessError> {
        let default_planner = self.planner(st, &self.cfg.planner)?;
        let default_policy = st.policy(DEFAULT_POLICY);
        let mut out = [None; 3];
        for m in Module::ALL {
            let mut c = choice.clone();
            match m {
                Module::Planner => c.planner = Some(default_planner),
                Module::Tools => c.tools = Some(&self.all_tools),
                Module::Memory => {
                    if st.policy_bandit.is_none() {
                        continue;
                    }
                    c.policy = default_policy;
                }
            }
            let d = self.decide(st, bar, &c)?;
            out[m.index()] = Some(self.score_of(&d.decision, rets));
        }
        Ok(out)
    }

    /// v(S) for all eight coalitions: members keep their choice, absent
    /// modules are removed (no planner means equal weights).
    fn coalitions(&self, st: &AgentState, bar: usize, choice: &Choice<'_>, rets: &[f64]) -> Result<[f64; 8], HarnessError> {
        let mut v = [0.0; 8];
        for (mask, slot) in v.iter_mut().enumerate() {
            let has = |m: Module| mask as u8 & m.bit() != 0;
            let c = Choice {
                policy: if has(Module::Memory) { choice.policy } else { None },
                tools: if has(Module::Tools) { choice.tools } else { None },
                planner: if has(Module::Planner) { choice.planner } else { None },
                informed: choice.informed,
            };
            let d = self.decide(st, bar, &c)?;
            *slot = uniform_reward(self.score_of(&d.decision, rets));
        }
        Ok(v)
    }

    /// Planner context of `bar` with every tool and neutral trust, used to
    /// smoke-test evolved planners.
    pub fn smoke_context(&self, bar: usize) -> PlannerContext {
        let k = self.env.n_tickers();
        PlannerContext::new(
            self.env.series.symbols(),
            (0..k).map(|i| self.env.outputs(bar, i).clone()).collect(),
        )
    }
}
