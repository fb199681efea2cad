use serde::{Deserialize, Serialize};

use super::AllocationDecision;
use crate::toolkit::indicators::{sample_std, simple_returns};

/// The four deterministic, fully invested reference allocators.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum BaselineKind {
    EqW,
    Mom,
    InvM,
    MinV,
}

pub const BASELINE_KINDS: [BaselineKind; 4] =
    [BaselineKind::EqW, BaselineKind::Mom, BaselineKind::InvM, BaselineKind::MinV];

impl BaselineKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            BaselineKind::EqW => "EqW",
            BaselineKind::Mom => "Mom",
            BaselineKind::InvM => "InvM",
            BaselineKind::MinV => "MinV",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        BASELINE_KINDS
            .into_iter()
            .find(|k| k.as_str().eq_ignore_ascii_case(s))
    }
}

fn normalize_or_uniform(raw: Vec<f64>) -> Vec<f64> {
    let n = raw.len();
    let total: f64 = raw.iter().sum();
    if total > 0.0 && total.is_finite() {
        raw.iter().map(|x| x / total).collect()
    } else {
        vec![1.0 / n as f64; n]
    }
}

fn trailing_return(closes: &[f64], lookback: usize) -> f64 {
    if closes.len() < 2 {
        return 0.0;
    }
    let h = lookback.min(closes.len() - 1);
    closes[closes.len() - 1] / closes[closes.len() - 1 - h] - 1.0
}

/// Weights from each ticker's trailing closes (bars strictly before the
/// decision). `lookback` is the return / variance window in bars.
pub fn baseline_allocate(kind: BaselineKind, closes: &[Vec<f64>], lookback: usize) -> AllocationDecision {
    let n = closes.len();
    let raw: Vec<f64> = match kind {
        BaselineKind::EqW => vec![1.0; n],
        BaselineKind::Mom => closes.iter().map(|c| trailing_return(c, lookback).max(0.0)).collect(),
        BaselineKind::InvM => closes
            .iter()
            .map(|c| (-trailing_return(c, lookback)).max(0.0))
            .collect(),
        BaselineKind::MinV => {
            let vars: Vec<f64> = closes
                .iter()
                .map(|c| {
                    let tail = &c[c.len().saturating_sub(lookback + 1)..];
                    sample_std(&simple_returns(tail)).powi(2)
                })
                .collect();
            if vars.iter().all(|v| *v > 0.0) {
                vars.iter().map(|v| 1.0 / v).collect()
            } else {
                // zero-variance names are riskless; split among them
                vars.iter().map(|v| if *v > 0.0 { 0.0 } else { 1.0 }).collect()
            }
        }
    };
    let weights = normalize_or_uniform(raw);
    AllocationDecision::from_weights(weights).unwrap_or_else(|_| AllocationDecision::all_cash(n))
}
