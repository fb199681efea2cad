//! Three-tier memory: raw episodic records, distilled semantic patterns and
//! promoted procedural rules, ranked by a composite relevance score.

mod policy;
mod store;

pub use policy::{default_policies, policy_grid, RetrievalFormat, RetrievalPolicy, DEFAULT_POLICY};
pub use store::{
    retrieve, DistilledPattern, EpisodeRecord, MemoryConfig, MemorySnapshot, MemoryStore,
    Retrieval, ScoredEntry,
};

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::market::Regime;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MemoryError {
    #[error("memory store is read-only (frozen phase)")]
    ReadOnly,
    #[error("invalid retrieval policy `{id}`: {reason}")]
    InvalidPolicy { id: String, reason: String },
    #[error("entry created at episode {created} is newer than the query episode {current}")]
    FromFuture { created: usize, current: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Tier {
    Episodic,
    Semantic,
    Procedural,
}

impl Tier {
    pub const ALL: [Tier; 3] = [Tier::Episodic, Tier::Semantic, Tier::Procedural];

    pub fn boost(&self) -> f64 {
        match self {
            Tier::Episodic => 1.0,
            Tier::Semantic => 1.2,
            Tier::Procedural => 1.5,
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            Tier::Episodic => "episodic",
            Tier::Semantic => "semantic",
            Tier::Procedural => "procedural",
        }
    }

    fn prefix(&self) -> &'static str {
        match self {
            Tier::Episodic => "ep",
            Tier::Semantic => "se",
            Tier::Procedural => "pr",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MemoryEntry {
    pub entry_id: String,
    /// Global write order; breaks score ties.
    pub seq: u64,
    pub tier: Tier,
    pub ticker: String,
    pub sector: String,
    pub tools_used: BTreeSet<String>,
    pub content: String,
    pub quality: f64,
    pub created_at: usize,
    pub regime: Option<Regime>,
    /// Signed per-tool reliability evidence in [-1, 1].
    #[serde(default)]
    pub evidence: BTreeMap<String, f64>,
    /// Distillation cycle in which a semantic entry was written.
    #[serde(default)]
    pub cycle: usize,
    #[serde(default)]
    pub promoted_from: Option<String>,
}

pub(crate) fn entry_id(tier: Tier, seq: u64) -> String {
    format!("{}-{seq:08}", tier.prefix())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MemoryQuery {
    pub ticker: String,
    pub sector: String,
    pub tools: BTreeSet<String>,
    pub current_episode: usize,
    pub regime: Option<Regime>,
}

/// Feature-match bonuses for the relevance score.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MatchWeights {
    pub same_ticker: f64,
    pub same_sector: f64,
    pub per_shared_tool: f64,
    pub same_regime: f64,
    pub floor: f64,
    pub recency_decay: f64,
}

impl Default for MatchWeights {
    fn default() -> Self {
        Self {
            same_ticker: 2.0,
            same_sector: 1.0,
            per_shared_tool: 0.5,
            same_regime: 0.5,
            floor: 0.1,
            recency_decay: 0.01,
        }
    }
}

pub fn f_match(query: &MemoryQuery, entry: &MemoryEntry, w: &MatchWeights) -> f64 {
    let mut s = 0.0;
    if query.ticker == entry.ticker {
        s += w.same_ticker;
    }
    if query.sector == entry.sector {
        s += w.same_sector;
    }
    s += w.per_shared_tool * query.tools.intersection(&entry.tools_used).count() as f64;
    if query.regime.is_some() && query.regime == entry.regime {
        s += w.same_regime;
    }
    s.max(w.floor)
}

pub fn recency_factor(delta: usize, decay: f64) -> f64 {
    0.3 + 0.7 * (-decay * delta as f64).exp()
}

/// f_match · (0.5 + 0.5 q) · (0.3 + 0.7 e^{-λΔ}) · tier boost.
pub fn relevance_score(query: &MemoryQuery, entry: &MemoryEntry, w: &MatchWeights) -> Result<f64, MemoryError> {
    if entry.created_at > query.current_episode {
        return Err(MemoryError::FromFuture {
            created: entry.created_at,
            current: query.current_episode,
        });
    }
    let delta = query.current_episode - entry.created_at;
    Ok(f_match(query, entry, w)
        * (0.5 + 0.5 * entry.quality)
        * recency_factor(delta, w.recency_decay)
        * entry.tier.boost())
}
