use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{BanditError, BetaArm};

/// Linear shrink schedule for the number of tools kept per episode:
/// `K(t) = max(k_min, k_initial - floor(t / shrink_every))`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct PerToolSelectorConfig {
    pub k_initial: usize,
    pub k_min: usize,
    pub shrink_every: usize,
}

impl Default for PerToolSelectorConfig {
    fn default() -> Self {
        Self {
            k_initial: 12,
            k_min: 6,
            shrink_every: 40,
        }
    }
}

impl PerToolSelectorConfig {
    pub fn validate(&self, n_tools: usize) -> Result<(), BanditError> {
        if self.k_min == 0 || self.shrink_every == 0 {
            return Err(BanditError::InvalidSchedule(
                "k_min and shrink_every must be positive".into(),
            ));
        }
        if self.k_min > self.k_initial || self.k_initial > n_tools {
            return Err(BanditError::InvalidSchedule(format!(
                "need k_min <= k_initial <= tools, got {} <= {} <= {}",
                self.k_min, self.k_initial, n_tools
            )));
        }
        Ok(())
    }

    pub fn k_at(&self, episode_index: usize) -> usize {
        self.k_initial
            .saturating_sub(episode_index / self.shrink_every)
            .max(self.k_min)
    }
}

/// Samples every arm once and returns the indices of the `K(episode)` largest
/// samples, in descending sample order (lowest index first on ties).
pub fn per_tool_select<R: Rng + ?Sized>(
    tool_arms: &[BetaArm],
    config: &PerToolSelectorConfig,
    episode_index: usize,
    rng: &mut R,
) -> Result<Vec<usize>, BanditError> {
    let k = config.k_at(episode_index);
    if k > tool_arms.len() {
        return Err(BanditError::InvalidSchedule(format!(
            "K = {k} exceeds {} tools",
            tool_arms.len()
        )));
    }
    let samples: Vec<f64> = tool_arms.iter().map(|a| a.sample(rng)).collect();
    let mut order: Vec<usize> = (0..tool_arms.len()).collect();
    order.sort_by(|&i, &j| samples[j].total_cmp(&samples[i]).then(i.cmp(&j)));
    order.truncate(k);
    Ok(order)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn schedule_substitution() {
        let cfg = PerToolSelectorConfig::default();
        assert_eq!(cfg.k_at(0), 12);
        assert_eq!(cfg.k_at(39), 12);
        assert_eq!(cfg.k_at(40), 11);
        assert_eq!(cfg.k_at(200), 7);
        assert_eq!(cfg.k_at(10_000), 6);
    }

    #[test]
    fn k_equal_to_arm_count_selects_all() {
        let arms: Vec<_> = (0..12).map(|i| BetaArm::new(format!("t{i}"))).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut picked = per_tool_select(&arms, &PerToolSelectorConfig::default(), 0, &mut rng).unwrap();
        picked.sort();
        assert_eq!(picked, (0..12).collect::<Vec<_>>());
    }

    #[test]
    fn dominant_tool_wins_top_one() {
        let mut arms = vec![BetaArm::with_prior("hot", 1000.0, 1.0).unwrap()];
        arms.extend((0..11).map(|i| BetaArm::with_prior(format!("cold{i}"), 1.0, 1000.0).unwrap()));
        let cfg = PerToolSelectorConfig {
            k_initial: 1,
            k_min: 1,
            shrink_every: 40,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let hits = (0..500)
            .filter(|_| per_tool_select(&arms, &cfg, 0, &mut rng).unwrap() == vec![0])
            .count();
        assert!(hits as f64 >= 0.99 * 500.0, "hits = {hits}");
    }

    #[test]
    fn validation() {
        let cfg = PerToolSelectorConfig::default();
        assert!(cfg.validate(12).is_ok());
        assert!(cfg.validate(11).is_err());
        let bad = PerToolSelectorConfig {
            k_initial: 4,
            k_min: 5,
            shrink_every: 1,
        };
        assert!(bad.validate(12).is_err());
    }
}
