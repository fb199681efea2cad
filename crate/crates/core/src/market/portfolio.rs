use serde::{Deserialize, Serialize};

use crate::planners::AllocationDecision;

/// Running portfolio: current weights, equity and per-bar history.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PortfolioState {
    pub equity: f64,
    pub weights: Vec<f64>,
    pub cash: f64,
    pub weight_history: Vec<Vec<f64>>,
    pub returns: Vec<f64>,
}

impl PortfolioState {
    /// All-cash portfolio with unit equity.
    pub fn new(n_tickers: usize) -> Self {
        Self {
            equity: 1.0,
            weights: vec![0.0; n_tickers],
            cash: 1.0,
            weight_history: Vec::new(),
            returns: Vec::new(),
        }
    }
}

/// Holds `decision` over one bar: r = Σ w_i r_i (cash earns zero) and
/// equity *= 1 + r.
pub fn step(
    state: &PortfolioState,
    decision: &AllocationDecision,
    bar_returns: &[f64],
) -> (f64, PortfolioState) {
    assert_eq!(
        decision.weights.len(),
        bar_returns.len(),
        "decision and returns cover different tickers"
    );
    let r: f64 = decision
        .weights
        .iter()
        .zip(bar_returns)
        .map(|(w, ri)| w * ri)
        .sum();
    let mut next = state.clone();
    next.equity *= 1.0 + r;
    next.weights = decision.weights.clone();
    next.cash = decision.cash;
    next.weight_history.push(decision.weights.clone());
    next.returns.push(r);
    (r, next)
}

/// Maps a per-bar portfolio return onto [-1, 1]; `scale` is the return that
/// saturates the score.
pub fn outcome_score(portfolio_return: f64, scale: f64) -> f64 {
    if !portfolio_return.is_finite() {
        return 0.0;
    }
    (portfolio_return / scale).clamp(-1.0, 1.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn decision(weights: Vec<f64>) -> AllocationDecision {
        AllocationDecision::from_weights(weights).unwrap()
    }

    #[test]
    fn all_cash_earns_nothing() {
        let s = PortfolioState::new(3);
        let (r, next) = step(&s, &decision(vec![0.0; 3]), &[0.05, -0.02, 0.01]);
        assert_eq!(r, 0.0);
        assert_eq!(next.equity, 1.0);
    }

    #[test]
    fn single_asset() {
        let s = PortfolioState::new(3);
        let (r, next) = step(&s, &decision(vec![1.0, 0.0, 0.0]), &[0.02, 0.5, -0.3]);
        assert_eq!(r, 0.02);
        assert!((next.equity - 1.02).abs() < 1e-15);
        assert_eq!(next.weight_history.len(), 1);
    }

    #[test]
    fn equal_weight_symmetric_returns_cancel() {
        let s = PortfolioState::new(10);
        let mut rets = vec![0.0; 10];
        rets[0] = 0.01;
        rets[1] = -0.01;
        let (r, _) = step(&s, &decision(vec![0.1; 10]), &rets);
        assert!(r.abs() < 1e-18);
    }

    #[test]
    fn outcome_score_examples() {
        assert_eq!(outcome_score(0.0, 0.01), 0.0);
        assert_eq!(outcome_score(0.01, 0.01), 1.0);
        assert_eq!(outcome_score(-0.03, 0.01), -1.0);
        assert!((outcome_score(0.005, 0.01) - 0.5).abs() < 1e-15);
    }
}
