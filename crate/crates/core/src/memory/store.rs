use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::{
    entry_id, relevance_score, MatchWeights, MemoryEntry, MemoryError, MemoryQuery, RetrievalFormat,
    RetrievalPolicy, Tier,
};
use crate::canonical;
use crate::market::Regime;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MemoryConfig {
    pub capacity: usize,
    pub write_threshold: f64,
    pub promotion_threshold: f64,
    pub promotion_cycles: usize,
    pub weights: MatchWeights,
}

impl Default for MemoryConfig {
    fn default() -> Self {
        Self {
            capacity: 500,
            write_threshold: 0.3,
            promotion_threshold: 0.8,
            promotion_cycles: 2,
            weights: MatchWeights::default(),
        }
    }
}

/// One episode's outcome for one ticker, as written to the episodic tier.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeRecord {
    pub episode: usize,
    pub ticker: String,
    pub sector: String,
    pub tools_used: BTreeSet<String>,
    /// Episode outcome score in [-1, 1].
    pub score: f64,
    pub regime: Option<Regime>,
    pub evidence: BTreeMap<String, f64>,
    pub content: String,
}

/// A tool-reliability pattern produced by distillation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistilledPattern {
    pub tool: String,
    pub ticker: String,
    pub sector: String,
    pub hit_rate: f64,
    pub observations: u64,
    pub regime: Option<Regime>,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredEntry {
    pub entry: MemoryEntry,
    pub score: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Retrieval {
    /// Top-k candidates by descending score (ties: earlier write first).
    pub entries: Vec<ScoredEntry>,
    pub context: String,
    /// How many of `entries` made it into `context`, in rank order.
    pub visible: usize,
}

impl Retrieval {
    pub fn visible_entries(&self) -> &[ScoredEntry] {
        &self.entries[..self.visible]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MemorySnapshot {
    pub entries: Vec<MemoryEntry>,
    pub next_seq: u64,
    pub distill_cycles: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MemoryStore {
    pub config: MemoryConfig,
    episodic: Vec<MemoryEntry>,
    semantic: Vec<MemoryEntry>,
    procedural: Vec<MemoryEntry>,
    next_seq: u64,
    distill_cycles: usize,
    read_only: bool,
}

impl Default for MemoryStore {
    fn default() -> Self {
        Self::new(MemoryConfig::default())
    }
}

fn clip01(x: f64) -> f64 {
    if x.is_finite() {
        x.clamp(0.0, 1.0)
    } else {
        0.0
    }
}

impl MemoryStore {
    pub fn new(config: MemoryConfig) -> Self {
        Self {
            config,
            episodic: Vec::new(),
            semantic: Vec::new(),
            procedural: Vec::new(),
            next_seq: 0,
            distill_cycles: 0,
            read_only: false,
        }
    }

    pub fn tier(&self, tier: Tier) -> &[MemoryEntry] {
        match tier {
            Tier::Episodic => &self.episodic,
            Tier::Semantic => &self.semantic,
            Tier::Procedural => &self.procedural,
        }
    }

    fn tier_mut(&mut self, tier: Tier) -> &mut Vec<MemoryEntry> {
        match tier {
            Tier::Episodic => &mut self.episodic,
            Tier::Semantic => &mut self.semantic,
            Tier::Procedural => &mut self.procedural,
        }
    }

    pub fn len(&self) -> usize {
        self.episodic.len() + self.semantic.len() + self.procedural.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn distill_cycles(&self) -> usize {
        self.distill_cycles
    }

    pub fn is_read_only(&self) -> bool {
        self.read_only
    }

    pub fn set_read_only(&mut self, read_only: bool) {
        self.read_only = read_only;
    }

    fn guard(&self) -> Result<(), MemoryError> {
        if self.read_only {
            Err(MemoryError::ReadOnly)
        } else {
            Ok(())
        }
    }

    /// Appends an entry, assigning id and sequence, then evicts the
    /// lowest-quality (oldest on ties) entry if the tier overflows.
    fn insert(&mut self, mut entry: MemoryEntry) -> String {
        let seq = self.next_seq;
        self.next_seq += 1;
        entry.seq = seq;
        entry.entry_id = entry_id(entry.tier, seq);
        let id = entry.entry_id.clone();
        let cap = self.config.capacity;
        let tier = self.tier_mut(entry.tier);
        tier.push(entry);
        evict_overflow(tier, cap);
        id
    }

    /// q = clip((s + 1) / 2); writes below the threshold are rejected (`None`).
    pub fn write_episodic(&mut self, record: &EpisodeRecord) -> Result<Option<String>, MemoryError> {
        self.guard()?;
        let quality = clip01((record.score + 1.0) / 2.0);
        if quality < self.config.write_threshold {
            return Ok(None);
        }
        let entry = MemoryEntry {
            entry_id: String::new(),
            seq: 0,
            tier: Tier::Episodic,
            ticker: record.ticker.clone(),
            sector: record.sector.clone(),
            tools_used: record.tools_used.clone(),
            content: record.content.clone(),
            quality,
            created_at: record.episode,
            regime: record.regime,
            evidence: record.evidence.clone(),
            cycle: self.distill_cycles,
            promoted_from: None,
        };
        Ok(Some(self.insert(entry)))
    }

    /// Records one distillation cycle and writes its patterns to the
    /// semantic tier with quality equal to the observed hit-rate.
    pub fn add_semantic(&mut self, patterns: &[DistilledPattern], episode: usize) -> Result<Vec<String>, MemoryError> {
        self.guard()?;
        self.distill_cycles += 1;
        let cycle = self.distill_cycles;
        let mut ids = Vec::with_capacity(patterns.len());
        for p in patterns {
            let h = clip01(p.hit_rate);
            let entry = MemoryEntry {
                entry_id: String::new(),
                seq: 0,
                tier: Tier::Semantic,
                ticker: p.ticker.clone(),
                sector: p.sector.clone(),
                tools_used: std::iter::once(p.tool.clone()).collect(),
                content: p.text.clone(),
                quality: h,
                created_at: episode,
                regime: p.regime,
                evidence: std::iter::once((p.tool.clone(), 2.0 * h - 1.0)).collect(),
                cycle,
                promoted_from: None,
            };
            ids.push(self.insert(entry));
        }
        Ok(ids)
    }

    /// Copies semantic entries with q ≥ threshold that have survived the
    /// required number of cycles into the procedural tier, once each.
    pub fn promote_procedural(&mut self, episode: usize) -> Result<Vec<String>, MemoryError> {
        self.guard()?;
        let done: BTreeSet<String> = self
            .procedural
            .iter()
            .filter_map(|e| e.promoted_from.clone())
            .collect();
        let cfg = &self.config;
        let ready: Vec<MemoryEntry> = self
            .semantic
            .iter()
            .filter(|e| {
                e.quality >= cfg.promotion_threshold
                    && self.distill_cycles.saturating_sub(e.cycle) >= cfg.promotion_cycles
                    && !done.contains(&e.entry_id)
            })
            .cloned()
            .collect();
        let mut ids = Vec::with_capacity(ready.len());
        for src in ready {
            let tool = src.tools_used.iter().next().cloned().unwrap_or_default();
            let entry = MemoryEntry {
                entry_id: String::new(),
                seq: 0,
                tier: Tier::Procedural,
                content: format!(
                    "RULE: weight {tool} on {} (hit-rate {:.2})",
                    src.ticker, src.quality
                ),
                created_at: episode.max(src.created_at),
                promoted_from: Some(src.entry_id.clone()),
                ..src
            };
            ids.push(self.insert(entry));
        }
        Ok(ids)
    }

    /// Procedural rule lines, highest quality first.
    pub fn procedural_rules(&self) -> Vec<String> {
        let mut rules: Vec<&MemoryEntry> = self.procedural.iter().collect();
        rules.sort_by(|a, b| b.quality.total_cmp(&a.quality).then(a.seq.cmp(&b.seq)));
        rules.iter().map(|e| e.content.clone()).collect()
    }

    pub fn snapshot(&self) -> MemorySnapshot {
        let mut entries: Vec<MemoryEntry> = Tier::ALL
            .iter()
            .flat_map(|t| self.tier(*t).iter().cloned())
            .collect();
        entries.sort_by(|a, b| a.entry_id.cmp(&b.entry_id));
        MemorySnapshot {
            entries,
            next_seq: self.next_seq,
            distill_cycles: self.distill_cycles,
        }
    }

    pub fn state_hash(&self) -> String {
        canonical::state_hash(&self.snapshot())
    }

    /// Rebuilds a store from a snapshot. Entries keep their ids and
    /// sequence numbers; tiers over capacity are trimmed as on insert.
    pub fn from_snapshot(config: MemoryConfig, snap: MemorySnapshot) -> Self {
        let mut store = Self::new(config);
        let mut entries = snap.entries;
        entries.sort_by_key(|e| e.seq);
        let cap = store.config.capacity;
        for e in entries {
            let tier = store.tier_mut(e.tier);
            tier.push(e);
            evict_overflow(tier, cap);
        }
        let max_seq = store.snapshot().entries.iter().map(|e| e.seq + 1).max().unwrap_or(0);
        store.next_seq = snap.next_seq.max(max_seq);
        store.distill_cycles = snap.distill_cycles;
        store
    }
}

/// Drops lowest-quality entries (oldest on ties) until within capacity.
fn evict_overflow(tier: &mut Vec<MemoryEntry>, cap: usize) {
    while tier.len() > cap {
        let victim = tier
            .iter()
            .enumerate()
            .min_by(|(_, a), (_, b)| {
                a.quality
                    .total_cmp(&b.quality)
                    .then(a.created_at.cmp(&b.created_at))
                    .then(a.seq.cmp(&b.seq))
            })
            .map(|(i, _)| i)
            .expect("tier is non-empty");
        tier.remove(victim);
    }
}

fn line(e: &MemoryEntry) -> String {
    format!("[{}] {}", e.tier.as_str(), e.content)
}

fn truncate_chars(s: &str, n: usize) -> &str {
    match s.char_indices().nth(n) {
        Some((i, _)) => &s[..i],
        None => s,
    }
}

/// Policy-guided recall. Never mutates the store.
pub fn retrieve(store: &MemoryStore, policy: &RetrievalPolicy, query: &MemoryQuery) -> Result<Retrieval, MemoryError> {
    if policy.format == RetrievalFormat::None || policy.top_k == 0 {
        return Ok(Retrieval::default());
    }
    let w = &store.config.weights;
    let mut cands = Vec::new();
    for tier in Tier::ALL {
        if !policy.tiers_enabled.contains(&tier) {
            continue;
        }
        for e in store.tier(tier) {
            if e.quality < policy.quality_threshold {
                continue;
            }
            let score = relevance_score(query, e, w)?;
            if score > 0.0 {
                cands.push((score, e));
            }
        }
    }
    cands.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.seq.cmp(&b.1.seq)));
    cands.truncate(policy.top_k);
    let entries: Vec<ScoredEntry> = cands
        .into_iter()
        .map(|(score, e)| ScoredEntry {
            entry: e.clone(),
            score,
        })
        .collect();

    let (context, visible) = match policy.format {
        RetrievalFormat::None => (String::new(), 0),
        RetrievalFormat::Full => {
            let lines: Vec<String> = entries.iter().map(|s| line(&s.entry)).collect();
            (lines.join("\n"), entries.len())
        }
        RetrievalFormat::SlidingWindow => {
            // earliest entry first, then the rest newest-last
            let mut order: Vec<&MemoryEntry> = entries.iter().map(|s| &s.entry).collect();
            order.sort_by(|a, b| a.created_at.cmp(&b.created_at).then(a.seq.cmp(&b.seq)));
            let lines: Vec<String> = order.iter().map(|e| line(e)).collect();
            (lines.join("\n"), entries.len())
        }
        RetrievalFormat::RankedTruncate => {
            let mut out = String::new();
            let mut used = 0usize;
            let mut shown = 0;
            for s in &entries {
                let l = line(&s.entry);
                let sep = usize::from(!out.is_empty());
                let len = l.chars().count();
                let room = policy.token_budget.saturating_sub(used + sep);
                if room == 0 {
                    break;
                }
                if sep == 1 {
                    out.push('\n');
                }
                if len <= room {
                    out.push_str(&l);
                    used += sep + len;
                    shown += 1;
                } else {
                    out.push_str(truncate_chars(&l, room));
                    shown += 1;
                    break;
                }
            }
            (out, shown)
        }
    };
    Ok(Retrieval {
        entries,
        context,
        visible,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn record(ep: usize, score: f64) -> EpisodeRecord {
        EpisodeRecord {
            episode: ep,
            ticker: "AAPL".into(),
            sector: "Technology".into(),
            tools_used: BTreeSet::new(),
            score,
            regime: None,
            evidence: BTreeMap::new(),
            content: format!("episode {ep}"),
        }
    }

    fn query(ep: usize) -> MemoryQuery {
        MemoryQuery {
            ticker: "AAPL".into(),
            sector: "Technology".into(),
            tools: BTreeSet::new(),
            current_episode: ep,
            regime: None,
        }
    }

    #[test]
    fn write_gate() {
        let mut s = MemoryStore::default();
        assert!(s.write_episodic(&record(0, 1.0)).unwrap().is_some());
        assert_eq!(s.tier(Tier::Episodic)[0].quality, 1.0);
        assert!(s.write_episodic(&record(1, -1.0)).unwrap().is_none());
        assert_eq!(s.len(), 1);
    }

    #[test]
    fn eviction_removes_lowest_then_oldest() {
        let mut s = MemoryStore::new(MemoryConfig {
            capacity: 3,
            ..Default::default()
        });
        s.write_episodic(&record(0, 0.0)).unwrap(); // q 0.5
        s.write_episodic(&record(1, 0.0)).unwrap(); // q 0.5
        s.write_episodic(&record(2, 1.0)).unwrap();
        s.write_episodic(&record(3, 1.0)).unwrap();
        let eps: Vec<usize> = s.tier(Tier::Episodic).iter().map(|e| e.created_at).collect();
        assert_eq!(eps, vec![1, 2, 3]);
    }

    #[test]
    fn read_only_blocks_writes_and_keeps_hash() {
        let mut s = MemoryStore::default();
        s.write_episodic(&record(0, 0.5)).unwrap();
        s.set_read_only(true);
        let h = s.state_hash();
        assert_eq!(s.write_episodic(&record(1, 1.0)), Err(MemoryError::ReadOnly));
        assert!(s.add_semantic(&[], 1).is_err());
        assert!(s.promote_procedural(1).is_err());
        let pol = &super::super::default_policies()[2];
        retrieve(&s, pol, &query(5)).unwrap();
        assert_eq!(h, s.state_hash());
    }

    #[test]
    fn threshold_gate_on_retrieval() {
        let mut s = MemoryStore::new(MemoryConfig {
            write_threshold: 0.0,
            ..Default::default()
        });
        for i in 0..4 {
            s.write_episodic(&record(i, -0.8)).unwrap(); // q 0.1
        }
        let pol = RetrievalPolicy::new("p", &[Tier::Episodic], 5, RetrievalFormat::Full, 0.3, 100);
        assert!(retrieve(&s, &pol, &query(10)).unwrap().entries.is_empty());
    }

    fn pattern(q: f64) -> DistilledPattern {
        DistilledPattern {
            tool: "compute_momentum".into(),
            ticker: "AAPL".into(),
            sector: "Technology".into(),
            hit_rate: q,
            observations: 10,
            regime: None,
            text: "momentum works on AAPL".into(),
        }
    }

    #[test]
    fn promotion_after_two_cycles() {
        let mut s = MemoryStore::default();
        s.add_semantic(&[pattern(0.9), pattern(0.5)], 10).unwrap();
        assert!(s.promote_procedural(10).unwrap().is_empty());
        s.add_semantic(&[], 20).unwrap();
        assert!(s.promote_procedural(20).unwrap().is_empty());
        s.add_semantic(&[], 30).unwrap();
        let p = s.promote_procedural(30).unwrap();
        assert_eq!(p.len(), 1);
        assert_eq!(s.tier(Tier::Semantic).len(), 2);
        assert!(s.promote_procedural(30).unwrap().is_empty());
        assert_eq!(s.procedural_rules().len(), 1);
    }

    #[test]
    fn ranked_truncate_respects_budget() {
        let mut s = MemoryStore::default();
        for i in 0..6 {
            s.write_episodic(&record(i, 1.0)).unwrap();
        }
        let pol = RetrievalPolicy::new("p", &[Tier::Episodic], 5, RetrievalFormat::RankedTruncate, 0.3, 40);
        let r = retrieve(&s, &pol, &query(6)).unwrap();
        assert_eq!(r.entries.len(), 5);
        assert!(r.context.chars().count() <= 40);
        assert!(r.visible >= 1 && r.visible < 5);
        // newest scores highest on otherwise identical entries
        assert_eq!(r.entries[0].entry.created_at, 5);
    }
}
