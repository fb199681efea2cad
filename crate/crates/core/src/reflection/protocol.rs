//! Structured text exchange with a remote backend.
//!
//! Requests are `### NAME` sections of plain lines. Responses are
//! `key: value` lines, optionally inside a ```response fence; repeated keys
//! are kept in order.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use super::{
    BackendError, CreditRequest, CreditResponse, DistillRequest, PolicyRequest, PriorRequest, ReflectionInsight,
    ReflectionRequest,
};
use crate::credit::CreditVector;
use crate::market::Regime;
use crate::memory::{DistilledPattern, RetrievalFormat, RetrievalPolicy, Tier};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Operation {
    Reflect,
    Distill,
    Credit,
    Priors,
    ProposePolicy,
}

impl Operation {
    pub fn as_str(&self) -> &'static str {
        match self {
            Operation::Reflect => "reflect",
            Operation::Distill => "distill",
            Operation::Credit => "credit",
            Operation::Priors => "priors",
            Operation::ProposePolicy => "propose_policy",
        }
    }

    fn schema(&self) -> &'static str {
        match self {
            Operation::Reflect => "regime: bull|bear|flat|mixed\nconfidence: <0..1>\ninsight: <text>\ntool.<name>: <-1..1>",
            Operation::Distill => "pattern: <tool>,<ticker>,<hit_rate>,<observations>  (one line each)",
            Operation::Credit => "planner: <-1..1>\ntools: <-1..1>\nmemory: <-1..1>\nrationale.<module>: <text>",
            Operation::Priors => "prior.<arm_id>: <alpha>,<beta>",
            Operation::ProposePolicy => {
                "policy: none\n or\npolicy_id: <id>\ntiers: <episodic,semantic,procedural>\ntop_k: <n>\nformat: sliding_window|full|ranked_truncate\nquality_threshold: <0..1>\ntoken_budget: <n>"
            }
        }
    }
}

pub fn render_request(op: Operation, temperature: f64, sections: &[(&str, String)]) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "### OPERATION\n{}\n", op.as_str());
    let _ = writeln!(s, "### TEMPERATURE\n{temperature}\n");
    for (name, body) in sections {
        let _ = writeln!(s, "### {name}\n{}\n", body.trim_end());
    }
    let _ = writeln!(s, "### RESPONSE FORMAT\n```response\n{}\n```", op.schema());
    s
}

/// Key/value lines of a response. Text outside a fence is used only when
/// no fence is present.
pub fn parse_response(text: &str) -> Vec<(String, String)> {
    let body = match text.find("```response") {
        Some(start) => {
            let rest = &text[start + "```response".len()..];
            &rest[..rest.find("```").unwrap_or(rest.len())]
        }
        None => text,
    };
    body.lines()
        .filter_map(|l| {
            let (k, v) = l.split_once(':')?;
            let k = k.trim();
            (!k.is_empty() && !k.contains(' ')).then(|| (k.to_ascii_lowercase(), v.trim().to_string()))
        })
        .collect()
}

fn lookup<'a>(kv: &'a [(String, String)], key: &str) -> Option<&'a str> {
    kv.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
}

fn malformed(what: &str) -> BackendError {
    BackendError::Malformed(what.to_string())
}

fn num(kv: &[(String, String)], key: &str) -> Result<f64, BackendError> {
    lookup(kv, key)
        .and_then(|v| v.parse::<f64>().ok())
        .filter(|x| x.is_finite())
        .ok_or_else(|| malformed(&format!("missing or non-numeric `{key}`")))
}

pub(super) fn render_reflect(req: &ReflectionRequest, temperature: f64) -> String {
    let mut acc = String::new();
    for (t, h) in &req.tool_accuracy {
        let _ = writeln!(acc, "{t}: {h:.4}");
    }
    let m = &req.market;
    let mut market = format!(
        "mean_return: {:.6}\nrealized_vol: {:.6}\nmean_cross_correlation: {:.4}\nvol_terciles: {:.6},{:.6}\n",
        m.mean_return, m.realized_vol, m.mean_cross_correlation, m.vol_terciles.0, m.vol_terciles.1
    );
    for (s, r) in &m.sector_returns {
        let _ = writeln!(market, "sector.{s}: {r:.6}");
    }
    let mut eps = String::new();
    for e in &req.episode_summaries {
        let _ = writeln!(
            eps,
            "{} {} {} {:.4} {:.4}",
            e.episode, e.ticker, e.planner, e.score, e.directional_accuracy
        );
    }
    let mut prior = String::new();
    for p in &req.prior_insights {
        let _ = writeln!(prior, "[{} {:.2}] {}", p.regime.as_str(), p.confidence, p.causal_insight);
    }
    render_request(
        Operation::Reflect,
        temperature,
        &[
            ("WINDOW", req.window.to_string()),
            ("TOOL ACCURACY", acc),
            ("MARKET", market),
            ("EPISODES (episode ticker planner score accuracy)", eps),
            ("PRIOR INSIGHTS", prior),
        ],
    )
}

pub(super) fn parse_reflect(text: &str) -> Result<ReflectionInsight, BackendError> {
    let kv = parse_response(text);
    let regime = lookup(&kv, "regime")
        .and_then(Regime::parse)
        .ok_or_else(|| malformed("regime"))?;
    let confidence = num(&kv, "confidence")?;
    if !(0.0..=1.0).contains(&confidence) {
        return Err(malformed("confidence outside [0, 1]"));
    }
    let tool_assessment = kv
        .iter()
        .filter_map(|(k, v)| Some((k.strip_prefix("tool.")?.to_string(), v.parse::<f64>().ok()?)))
        .filter(|(_, x)| x.is_finite())
        .collect();
    Ok(ReflectionInsight {
        causal_insight: lookup(&kv, "insight").unwrap_or_default().to_string(),
        regime,
        confidence,
        tool_assessment,
    })
}

pub(super) fn render_distill(req: &DistillRequest, temperature: f64) -> String {
    let mut hits = String::new();
    for (tool, m) in &req.window_hits.counts {
        for (ticker, c) in m {
            let _ = writeln!(hits, "{tool} {ticker} {} {} {}", c.correct, c.incorrect, c.total);
        }
    }
    let sectors: String = req.sectors.iter().map(|(t, s)| format!("{t}: {s}\n")).collect();
    render_request(
        Operation::Distill,
        temperature,
        &[
            ("HITS (tool ticker correct incorrect total)", hits),
            ("SECTORS", sectors),
            ("MIN OBSERVATIONS", req.min_observations.to_string()),
        ],
    )
}

pub(super) fn parse_distill(text: &str, req: &DistillRequest) -> Result<Vec<DistilledPattern>, BackendError> {
    let mut out = Vec::new();
    for (k, v) in parse_response(text) {
        if k != "pattern" {
            continue;
        }
        let parts: Vec<&str> = v.split(',').map(str::trim).collect();
        let [tool, ticker, h, n] = parts[..] else {
            return Err(malformed("pattern needs 4 fields"));
        };
        let hit_rate: f64 = h.parse().map_err(|_| malformed("pattern hit rate"))?;
        let observations: u64 = n.parse().map_err(|_| malformed("pattern observations"))?;
        if !(0.0..=1.0).contains(&hit_rate) {
            return Err(malformed("pattern hit rate outside [0, 1]"));
        }
        out.push(DistilledPattern {
            tool: tool.to_string(),
            ticker: ticker.to_string(),
            sector: req.sectors.get(ticker).cloned().unwrap_or_default(),
            hit_rate,
            observations,
            regime: req.regime,
            text: format!("{tool} reliable on {ticker} ({hit_rate:.2} over {observations})"),
        });
    }
    Ok(out)
}

pub(super) fn render_credit(req: &CreditRequest, temperature: f64) -> String {
    let o = &req.outcome;
    let mut hits = String::new();
    for (t, c) in &o.per_tool_hits {
        let _ = writeln!(hits, "{t} {} {} {}", c.correct, c.incorrect, c.total);
    }
    render_request(
        Operation::Credit,
        temperature,
        &[
            (
                "OUTCOME",
                format!(
                    "score: {:.6}\nsteps_completed: {:.4}\nprediction_correct: {}\nmemory_usefulness: {:.4}\ncontradiction: {}",
                    o.score,
                    o.planner_trace.steps_completed,
                    o.planner_trace.prediction_correct,
                    o.memory_usefulness,
                    req.contradiction
                ),
            ),
            ("TOOL HITS (tool correct incorrect total)", hits),
        ],
    )
}

pub(super) fn parse_credit(text: &str) -> Result<CreditResponse, BackendError> {
    let kv = parse_response(text);
    let (p, t, m) = (num(&kv, "planner")?, num(&kv, "tools")?, num(&kv, "memory")?);
    if [p, t, m].iter().any(|x| !(-1.0..=1.0).contains(x)) {
        return Err(malformed("credit outside [-1, 1]"));
    }
    let rationales = kv
        .iter()
        .filter_map(|(k, v)| Some((k.strip_prefix("rationale.")?.to_string(), v.clone())))
        .collect();
    Ok(CreditResponse {
        credit: CreditVector::new(p, t, m),
        rationales,
    })
}

pub(super) fn render_priors(req: &PriorRequest, temperature: f64) -> String {
    let arms: String = req
        .arms
        .iter()
        .map(|a| format!("{} | {} | {}\n", a.arm_id, a.kind, a.description))
        .collect();
    render_request(Operation::Priors, temperature, &[("ARMS (id | kind | description)", arms)])
}

/// Unparseable pairs are dropped here; range checks happen in the caller.
pub(super) fn parse_priors(text: &str) -> Result<BTreeMap<String, (f64, f64)>, BackendError> {
    Ok(parse_response(text)
        .into_iter()
        .filter_map(|(k, v)| {
            let id = k.strip_prefix("prior.")?.to_string();
            let (a, b) = v.split_once(',')?;
            Some((id, (a.trim().parse().ok()?, b.trim().parse().ok()?)))
        })
        .collect())
}

fn describe_policy(p: &RetrievalPolicy) -> String {
    let tiers: Vec<&str> = p.tiers_enabled.iter().map(Tier::as_str).collect();
    format!(
        "{} tiers={} top_k={} format={} quality_threshold={} token_budget={}",
        p.policy_id,
        tiers.join(","),
        p.top_k,
        p.format.as_str(),
        p.quality_threshold,
        p.token_budget
    )
}

pub(super) fn render_policy(req: &PolicyRequest, temperature: f64) -> String {
    let pool: String = req.pool.iter().map(|p| describe_policy(p) + "\n").collect();
    let insight = req
        .insight
        .as_ref()
        .map(|i| format!("[{} {:.2}] {}", i.regime.as_str(), i.confidence, i.causal_insight))
        .unwrap_or_default();
    render_request(
        Operation::ProposePolicy,
        temperature,
        &[
            ("WINDOW", req.window.to_string()),
            ("MEAN REWARD", format!("{:.4}", req.mean_reward)),
            ("POOL", pool),
            ("INSIGHT", insight),
        ],
    )
}

pub(super) fn parse_policy(text: &str) -> Result<Option<RetrievalPolicy>, BackendError> {
    let kv = parse_response(text);
    if lookup(&kv, "policy").is_some_and(|v| v.eq_ignore_ascii_case("none")) {
        return Ok(None);
    }
    let id = lookup(&kv, "policy_id").ok_or_else(|| malformed("policy_id"))?;
    let tiers: BTreeSet<Tier> = lookup(&kv, "tiers")
        .unwrap_or_default()
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| Tier::ALL.into_iter().find(|t| t.as_str() == s).ok_or_else(|| malformed("tier")))
        .collect::<Result<_, _>>()?;
    let format = match lookup(&kv, "format") {
        Some("none") => RetrievalFormat::None,
        Some("sliding_window") => RetrievalFormat::SlidingWindow,
        Some("full") => RetrievalFormat::Full,
        Some("ranked_truncate") => RetrievalFormat::RankedTruncate,
        _ => return Err(malformed("format")),
    };
    let top_k = num(&kv, "top_k")?;
    let budget = num(&kv, "token_budget")?;
    if top_k < 0.0 || budget < 0.0 || top_k.fract() != 0.0 || budget.fract() != 0.0 {
        return Err(malformed("top_k and token_budget must be non-negative integers"));
    }
    Ok(Some(RetrievalPolicy {
        policy_id: id.to_string(),
        tiers_enabled: tiers,
        top_k: top_k as usize,
        format,
        quality_threshold: num(&kv, "quality_threshold")?,
        token_budget: budget as usize,
    }))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fenced_response_wins() {
        let text = "regime: bear\n```response\nregime: bull\nconfidence: 0.7\ninsight: momentum works\ntool.compute_momentum: 0.4\n```\n";
        let i = parse_reflect(text).unwrap();
        assert_eq!(i.regime, Regime::Bull);
        assert_eq!(i.confidence, 0.7);
        assert_eq!(i.tool_assessment["compute_momentum"], 0.4);
    }

    #[test]
    fn malformed_credit_rejected() {
        assert!(parse_credit("planner: 0.2\ntools: x\nmemory: 0").is_err());
        assert!(parse_credit("planner: 2\ntools: 0\nmemory: 0").is_err());
        let c = parse_credit("planner: -0.2\ntools: 0.1\nmemory: 0\nrationale.tools: warned").unwrap();
        assert_eq!(c.credit.planner, -0.2);
        assert_eq!(c.rationales["tools"], "warned");
    }

    #[test]
    fn policy_roundtrip() {
        let p = parse_policy("policy_id: evo\ntiers: episodic,semantic\ntop_k: 3\nformat: full\nquality_threshold: 0.3\ntoken_budget: 400")
            .unwrap()
            .unwrap();
        assert_eq!(p.top_k, 3);
        assert_eq!(p.tiers_enabled.len(), 2);
        assert_eq!(parse_policy("policy: none").unwrap(), None);
    }

    #[test]
    fn request_has_sections() {
        let r = render_request(Operation::Priors, 0.3, &[("ARMS", "a | b | c".into())]);
        assert!(r.contains("### OPERATION\npriors"));
        assert!(r.contains("### TEMPERATURE\n0.3"));
        assert!(r.contains("```response"));
    }
}
