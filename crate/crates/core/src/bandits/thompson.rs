use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Beta, Distribution};
use serde::{Deserialize, Serialize};

use super::{argmax_lowest, check_reward, BanditError};
use crate::canonical;

/// Beta posterior over an arm's success probability.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BetaArm {
    pub arm_id: String,
    pub alpha: f64,
    pub beta: f64,
}

impl BetaArm {
    /// Uninformative Beta(1, 1) arm.
    pub fn new(arm_id: impl Into<String>) -> Self {
        Self {
            arm_id: arm_id.into(),
            alpha: 1.0,
            beta: 1.0,
        }
    }

    pub fn with_prior(arm_id: impl Into<String>, alpha: f64, beta: f64) -> Result<Self, BanditError> {
        if !(alpha.is_finite() && beta.is_finite() && alpha > 0.0 && beta > 0.0) {
            return Err(BanditError::InvalidPrior { alpha, beta });
        }
        Ok(Self {
            arm_id: arm_id.into(),
            alpha,
            beta,
        })
    }

    pub fn mean(&self) -> f64 {
        self.alpha / (self.alpha + self.beta)
    }

    /// Posterior after observing `reward`: alpha += r, beta += 1 - r.
    pub fn updated(&self, reward: f64) -> Result<Self, BanditError> {
        check_reward(reward)?;
        Ok(Self {
            arm_id: self.arm_id.clone(),
            alpha: self.alpha + reward,
            beta: self.beta + (1.0 - reward),
        })
    }

    pub fn update(&mut self, reward: f64) -> Result<(), BanditError> {
        *self = self.updated(reward)?;
        Ok(())
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        // parameters are validated positive on every construction path
        Beta::new(self.alpha, self.beta)
            .expect("alpha, beta > 0")
            .sample(rng)
    }
}

/// Thompson Sampling over an ordered, growable set of Beta arms.
#[derive(Debug, Clone)]
pub struct ThompsonSelector {
    arms: Vec<BetaArm>,
    rng: ChaCha8Rng,
}

/// Serializable view of a selector's posteriors (rng state excluded).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PosteriorSnapshot {
    pub arms: Vec<BetaArm>,
}

impl PosteriorSnapshot {
    pub fn canonical_json(&self) -> String {
        canonical::to_canonical_string(self)
    }

    pub fn hash(&self) -> String {
        canonical::state_hash(self)
    }
}

impl ThompsonSelector {
    pub fn new(arms: Vec<BetaArm>, seed: u64) -> Result<Self, BanditError> {
        let mut selector = Self {
            arms: Vec::with_capacity(arms.len()),
            rng: ChaCha8Rng::seed_from_u64(seed),
        };
        for arm in arms {
            selector.add_arm(arm)?;
        }
        Ok(selector)
    }

    pub fn with_ids<I, S>(ids: I, seed: u64) -> Result<Self, BanditError>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        Self::new(ids.into_iter().map(BetaArm::new).collect(), seed)
    }

    pub fn arms(&self) -> &[BetaArm] {
        &self.arms
    }

    pub fn len(&self) -> usize {
        self.arms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.arms.is_empty()
    }

    pub fn index_of(&self, arm_id: &str) -> Option<usize> {
        self.arms.iter().position(|a| a.arm_id == arm_id)
    }

    pub fn add_arm(&mut self, arm: BetaArm) -> Result<(), BanditError> {
        if self.index_of(&arm.arm_id).is_some() {
            return Err(BanditError::DuplicateArm(arm.arm_id));
        }
        let arm = BetaArm::with_prior(arm.arm_id, arm.alpha, arm.beta)?;
        self.arms.push(arm);
        Ok(())
    }

    /// Draws one sample per arm and returns the index of the largest.
    pub fn select_index(&mut self) -> Result<usize, BanditError> {
        if self.arms.is_empty() {
            return Err(BanditError::EmptyArms);
        }
        let samples: Vec<f64> = self.arms.iter().map(|a| a.sample(&mut self.rng)).collect();
        Ok(argmax_lowest(&samples).expect("non-empty"))
    }

    pub fn select(&mut self) -> Result<&str, BanditError> {
        let i = self.select_index()?;
        Ok(&self.arms[i].arm_id)
    }

    pub fn update(&mut self, arm_id: &str, reward: f64) -> Result<(), BanditError> {
        let i = self
            .index_of(arm_id)
            .ok_or_else(|| BanditError::UnknownArm(arm_id.to_string()))?;
        self.arms[i].update(reward)
    }

    pub fn update_index(&mut self, index: usize, reward: f64) -> Result<(), BanditError> {
        let arm = self
            .arms
            .get_mut(index)
            .ok_or_else(|| BanditError::UnknownArm(format!("#{index}")))?;
        arm.update(reward)
    }

    /// Mean of the posterior means across all arms.
    pub fn mean_posterior_reward(&self) -> Option<f64> {
        if self.arms.is_empty() {
            return None;
        }
        Some(self.arms.iter().map(BetaArm::mean).sum::<f64>() / self.arms.len() as f64)
    }

    pub fn snapshot(&self) -> PosteriorSnapshot {
        PosteriorSnapshot {
            arms: self.arms.clone(),
        }
    }

    /// Replaces the posteriors while keeping the current rng stream.
    pub fn restore(&mut self, snapshot: &PosteriorSnapshot) {
        self.arms = snapshot.arms.clone();
    }

    pub fn reseed(&mut self, seed: u64) {
        self.rng = ChaCha8Rng::seed_from_u64(seed);
    }

    pub(crate) fn rng_mut(&mut self) -> &mut ChaCha8Rng {
        &mut self.rng
    }
}
