use std::collections::{BTreeMap, BTreeSet};

use super::{
    BackendError, CreditRequest, CreditResponse, DistillRequest, PolicyRequest, PriorRequest, ReflectionBackend,
    ReflectionInsight, ReflectionRequest,
};
use crate::credit::stub_llm_credit;
use crate::market::Regime;
use crate::memory::{policy_grid, DistilledPattern, RetrievalPolicy};

/// Deterministic rule-based backend.
#[derive(Debug, Clone, PartialEq)]
pub struct StubBackend {
    /// A window mean return smaller than `flat_band * realized_vol` in
    /// magnitude counts as sign zero.
    pub flat_band: f64,
}

impl Default for StubBackend {
    fn default() -> Self {
        Self { flat_band: 0.1 }
    }
}

impl StubBackend {
    /// Regime table over (volatility tercile, mean-return sign).
    pub fn regime(&self, mean_return: f64, realized_vol: f64, terciles: (f64, f64)) -> Regime {
        let sign = if mean_return.abs() <= self.flat_band * realized_vol {
            0
        } else if mean_return > 0.0 {
            1
        } else {
            -1
        };
        let tercile = if realized_vol < terciles.0 {
            0
        } else if realized_vol < terciles.1 {
            1
        } else {
            2
        };
        match (tercile, sign) {
            (_, 0) => Regime::Flat,
            (2, _) => Regime::Mixed,
            (_, 1) => Regime::Bull,
            _ => Regime::Bear,
        }
    }
}

fn ranked_tools(acc: &BTreeMap<String, f64>) -> Vec<(&str, f64)> {
    let mut v: Vec<(&str, f64)> = acc
        .iter()
        .filter(|(_, h)| h.is_finite())
        .map(|(t, h)| (t.as_str(), *h))
        .collect();
    // stable: ties keep name order
    v.sort_by(|a, b| b.1.total_cmp(&a.1));
    v
}

impl ReflectionBackend for StubBackend {
    fn name(&self) -> &str {
        "stub"
    }

    fn reflect(&self, req: &ReflectionRequest) -> Result<ReflectionInsight, BackendError> {
        let m = &req.market;
        let regime = self.regime(m.mean_return, m.realized_vol, m.vol_terciles);
        let ranked = ranked_tools(&req.tool_accuracy);
        let (text, confidence) = match (ranked.first(), ranked.last()) {
            (Some(&(best, hb)), Some(&(worst, hw))) => (
                format!(
                    "window {}: {} regime; {best} most reliable ({hb:.2}), {worst} least reliable ({hw:.2})",
                    req.window,
                    regime.as_str()
                ),
                ((hb - 0.5).abs() * 2.0).clamp(0.0, 1.0),
            ),
            _ => (format!("window {}: {} regime; no tool evidence", req.window, regime.as_str()), 0.0),
        };
        let tool_assessment = req
            .tool_accuracy
            .iter()
            .filter(|(_, h)| h.is_finite())
            .map(|(t, h)| (t.clone(), (2.0 * h - 1.0).clamp(-1.0, 1.0)))
            .collect();
        Ok(ReflectionInsight {
            causal_insight: text,
            regime,
            confidence,
            tool_assessment,
        })
    }

    fn distill(&self, req: &DistillRequest) -> Result<Vec<DistilledPattern>, BackendError> {
        let mut out = Vec::new();
        for (tool, per_ticker) in &req.window_hits.counts {
            for (ticker, c) in per_ticker {
                let obs = c.correct + c.incorrect;
                let Some(h) = c.hit_rate() else { continue };
                if obs < req.min_observations || h <= 0.5 {
                    continue;
                }
                out.push(DistilledPattern {
                    tool: tool.clone(),
                    ticker: ticker.clone(),
                    sector: req.sectors.get(ticker).cloned().unwrap_or_default(),
                    hit_rate: h,
                    observations: obs,
                    regime: req.regime,
                    text: format!("{tool} called {ticker} direction correctly {}/{obs} times", c.correct),
                });
            }
        }
        Ok(out)
    }

    fn credit(&self, req: &CreditRequest) -> Result<CreditResponse, BackendError> {
        let credit = stub_llm_credit(&req.outcome, req.contradiction);
        let mut rationales = BTreeMap::new();
        let note = if req.contradiction {
            "tool warning overridden by planner"
        } else {
            "structural attribution"
        };
        for k in ["planner", "tools", "memory"] {
            rationales.insert(k.to_string(), note.to_string());
        }
        Ok(CreditResponse { credit, rationales })
    }

    fn priors(&self, req: &PriorRequest) -> Result<BTreeMap<String, (f64, f64)>, BackendError> {
        Ok(req
            .arms
            .iter()
            .map(|a| {
                let p = match a.kind.as_str() {
                    "computational_tool" | "rich_memory_policy" => (2.0, 1.0),
                    "data_tool" | "empty_memory_policy" => (1.0, 2.0),
                    _ => (1.0, 1.0),
                };
                (a.arm_id.clone(), p)
            })
            .collect())
    }

    fn propose_policy(&self, req: &PolicyRequest) -> Result<Option<RetrievalPolicy>, BackendError> {
        let ids: BTreeSet<&str> = req.pool.iter().map(|p| p.policy_id.as_str()).collect();
        Ok(policy_grid()
            .into_iter()
            .find(|g| !ids.contains(g.policy_id.as_str()) && !req.pool.iter().any(|p| p.same_shape(g))))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::reflection::MarketSideInfo;
    use crate::toolkit::{record_hit, HitStats};

    fn request(acc: &[(&str, f64)], mean: f64, vol: f64) -> ReflectionRequest {
        ReflectionRequest {
            window: 1,
            episode_summaries: vec![],
            tool_accuracy: acc.iter().map(|(t, h)| (t.to_string(), *h)).collect(),
            market: MarketSideInfo {
                mean_return: mean,
                realized_vol: vol,
                vol_terciles: (0.01, 0.02),
                ..Default::default()
            },
            prior_insights: vec![],
        }
    }

    #[test]
    fn regime_table() {
        let s = StubBackend::default();
        assert_eq!(s.reflect(&request(&[], 0.002, 0.005)).unwrap().regime, Regime::Bull);
        assert_eq!(s.reflect(&request(&[], -0.002, 0.015)).unwrap().regime, Regime::Bear);
        assert_eq!(s.reflect(&request(&[], 0.0001, 0.015)).unwrap().regime, Regime::Flat);
        assert_eq!(s.reflect(&request(&[], 0.01, 0.03)).unwrap().regime, Regime::Mixed);
    }

    #[test]
    fn confidence_from_best_tool() {
        let s = StubBackend::default();
        let i = s.reflect(&request(&[("a", 0.5), ("b", 0.5)], 0.0, 0.01)).unwrap();
        assert_eq!(i.confidence, 0.0);
        let i = s.reflect(&request(&[("a", 0.8), ("b", 0.3)], 0.0, 0.01)).unwrap();
        assert!((i.confidence - 0.6).abs() < 1e-12);
        assert!(i.causal_insight.contains("a most reliable"));
        assert_eq!(i, s.reflect(&request(&[("a", 0.8), ("b", 0.3)], 0.0, 0.01)).unwrap());
    }

    #[test]
    fn distill_hit_rates() {
        let mut hits = HitStats::default();
        for i in 0..10 {
            record_hit(&mut hits, "compute_momentum", "AAPL", 1.0, if i < 9 { 0.01 } else { -0.01 });
            record_hit(&mut hits, "score_risk", "AAPL", 1.0, if i < 5 { 0.01 } else { -0.01 });
        }
        let req = DistillRequest {
            episode: 20,
            window_hits: hits,
            sectors: [("AAPL".to_string(), "tech".to_string())].into(),
            regime: Some(Regime::Bull),
            min_observations: 3,
        };
        let p = StubBackend::default().distill(&req).unwrap();
        assert_eq!(p.len(), 1);
        assert_eq!(p[0].tool, "compute_momentum");
        assert!((p[0].hit_rate - 0.9).abs() < 1e-12);
        assert_eq!(p[0].sector, "tech");
    }
}
