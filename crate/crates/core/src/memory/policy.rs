use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use super::{MemoryError, Tier};

/// Used during warm-up and as the counterfactual default.
pub const DEFAULT_POLICY: &str = "compressed";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RetrievalFormat {
    None,
    SlidingWindow,
    Full,
    RankedTruncate,
}

impl RetrievalFormat {
    pub fn as_str(&self) -> &'static str {
        match self {
            RetrievalFormat::None => "none",
            RetrievalFormat::SlidingWindow => "sliding_window",
            RetrievalFormat::Full => "full",
            RetrievalFormat::RankedTruncate => "ranked_truncate",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetrievalPolicy {
    pub policy_id: String,
    pub tiers_enabled: BTreeSet<Tier>,
    pub top_k: usize,
    pub format: RetrievalFormat,
    pub quality_threshold: f64,
    /// Character budget for the formatted context.
    pub token_budget: usize,
}

impl RetrievalPolicy {
    pub fn new(
        policy_id: &str,
        tiers: &[Tier],
        top_k: usize,
        format: RetrievalFormat,
        quality_threshold: f64,
        token_budget: usize,
    ) -> Self {
        Self {
            policy_id: policy_id.to_string(),
            tiers_enabled: tiers.iter().copied().collect(),
            top_k,
            format,
            quality_threshold,
            token_budget,
        }
    }

    pub fn validate(&self) -> Result<(), MemoryError> {
        let bad = |reason: &str| {
            Err(MemoryError::InvalidPolicy {
                id: self.policy_id.clone(),
                reason: reason.to_string(),
            })
        };
        let none = self.format == RetrievalFormat::None;
        if none != self.tiers_enabled.is_empty() || none != (self.top_k == 0) {
            return bad("format none, empty tiers and top_k 0 must coincide");
        }
        if !(0.0..=1.0).contains(&self.quality_threshold) {
            return bad("quality threshold outside [0, 1]");
        }
        if self.token_budget == 0 {
            return bad("token budget must be positive");
        }
        if self.policy_id.is_empty() {
            return bad("empty policy id");
        }
        Ok(())
    }

    /// Same retrieval behaviour, ignoring the id.
    pub fn same_shape(&self, other: &RetrievalPolicy) -> bool {
        self.tiers_enabled == other.tiers_enabled
            && self.top_k == other.top_k
            && self.format == other.format
            && self.quality_threshold == other.quality_threshold
            && self.token_budget == other.token_budget
    }
}

/// The five starting arms of the memory-policy bandit.
pub fn default_policies() -> Vec<RetrievalPolicy> {
    use RetrievalFormat::*;
    use Tier::*;
    vec![
        RetrievalPolicy::new("none", &[], 0, None, 0.3, 1),
        RetrievalPolicy::new("recent_window", &[Episodic], 5, SlidingWindow, 0.3, 2000),
        RetrievalPolicy::new("full_detailed", &[Episodic, Semantic, Procedural], 5, Full, 0.3, 4000),
        RetrievalPolicy::new(DEFAULT_POLICY, &[Semantic, Procedural], 5, RankedTruncate, 0.3, 800),
        RetrievalPolicy::new(
            "aggressive_learner",
            &[Episodic, Semantic, Procedural],
            8,
            RankedTruncate,
            0.2,
            2000,
        ),
    ]
}

/// Candidate policies for evolution, in fixed lexicographic order of
/// (tier set, top_k, format).
pub fn policy_grid() -> Vec<RetrievalPolicy> {
    let mut tier_sets: Vec<Vec<Tier>> = (1u8..8)
        .map(|mask| {
            Tier::ALL
                .iter()
                .enumerate()
                .filter(|(i, _)| mask & (1 << i) != 0)
                .map(|(_, t)| *t)
                .collect()
        })
        .collect();
    tier_sets.sort();
    let formats = [
        RetrievalFormat::SlidingWindow,
        RetrievalFormat::Full,
        RetrievalFormat::RankedTruncate,
    ];
    let mut out = Vec::new();
    for tiers in &tier_sets {
        for k in [3, 5, 8] {
            for f in formats {
                let tag: Vec<&str> = tiers.iter().map(|t| &t.as_str()[..3]).collect();
                let id = format!("evo_{}_k{k}_{}", tag.join("+"), f.as_str());
                let budget = if f == RetrievalFormat::RankedTruncate { 160 * k } else { 4000 };
                out.push(RetrievalPolicy::new(&id, tiers, k, f, 0.3, budget));
            }
        }
    }
    out
}
