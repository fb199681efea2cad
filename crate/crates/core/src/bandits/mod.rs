//! Online selection: Beta-posterior Thompson Sampling, LinUCB contextual
//! selection and the shrinking top-K tool selector.

mod linucb;
mod per_tool;
mod thompson;

pub use linucb::{linucb_select, ContextVector, LinUcbArm, LinUcbSelector, CONTEXT_DIM};
pub use per_tool::{per_tool_select, PerToolSelectorConfig};
pub use thompson::{BetaArm, PosteriorSnapshot, ThompsonSelector};

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BanditError {
    #[error("selector has no arms")]
    EmptyArms,
    #[error("duplicate arm id `{0}`")]
    DuplicateArm(String),
    #[error("unknown arm id `{0}`")]
    UnknownArm(String),
    #[error("reward {0} outside [0, 1]")]
    RewardOutOfRange(f64),
    #[error("invalid Beta parameters alpha={alpha}, beta={beta}")]
    InvalidPrior { alpha: f64, beta: f64 },
    #[error("context dimension {got} does not match arm dimension {expected}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("context contains a non-finite entry")]
    NonFiniteContext,
    #[error("design matrix is not positive definite")]
    NotPositiveDefinite,
    #[error("invalid per-tool schedule: {0}")]
    InvalidSchedule(String),
}

pub(crate) fn check_reward(reward: f64) -> Result<(), BanditError> {
    if reward.is_finite() && (0.0..=1.0).contains(&reward) {
        Ok(())
    } else {
        Err(BanditError::RewardOutOfRange(reward))
    }
}

/// Index of the maximum score; the lowest index wins ties.
pub(crate) fn argmax_lowest(scores: &[f64]) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (i, &s) in scores.iter().enumerate() {
        match best {
            Some((_, b)) if s <= b => {}
            _ => best = Some((i, s)),
        }
    }
    best.map(|(i, _)| i)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn argmax_prefers_lowest_index_on_ties() {
        assert_eq!(argmax_lowest(&[1.0, 3.0, 3.0, 2.0]), Some(1));
        assert_eq!(argmax_lowest(&[0.0, 0.0]), Some(0));
        assert_eq!(argmax_lowest(&[]), None);
    }

    #[test]
    fn reward_bounds() {
        assert!(check_reward(0.0).is_ok());
        assert!(check_reward(1.0).is_ok());
        assert!(check_reward(1.0 + 1e-12).is_err());
        assert!(check_reward(f64::NAN).is_err());
    }
}
