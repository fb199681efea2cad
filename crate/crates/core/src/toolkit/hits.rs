use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct HitCounts {
    pub correct: u64,
    pub incorrect: u64,
    pub total: u64,
}

impl HitCounts {
    /// correct / (correct + incorrect); `None` before any decisive call.
    pub fn hit_rate(&self) -> Option<f64> {
        let decided = self.correct + self.incorrect;
        (decided > 0).then(|| self.correct as f64 / decided as f64)
    }

    pub fn merge(&mut self, other: &HitCounts) {
        self.correct += other.correct;
        self.incorrect += other.incorrect;
        self.total += other.total;
    }
}

/// Directional hit/miss counts keyed by tool, then ticker.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct HitStats {
    pub counts: BTreeMap<String, BTreeMap<String, HitCounts>>,
}

impl HitStats {
    pub fn get(&self, tool: &str, ticker: &str) -> HitCounts {
        self.counts
            .get(tool)
            .and_then(|m| m.get(ticker))
            .copied()
            .unwrap_or_default()
    }

    /// Pooled over all tickers.
    pub fn tool_totals(&self, tool: &str) -> HitCounts {
        let mut acc = HitCounts::default();
        if let Some(m) = self.counts.get(tool) {
            for c in m.values() {
                acc.merge(c);
            }
        }
        acc
    }

    pub fn tools(&self) -> impl Iterator<Item = &str> {
        self.counts.keys().map(String::as_str)
    }

    pub fn is_empty(&self) -> bool {
        self.counts.is_empty()
    }

    pub fn clear(&mut self) {
        self.counts.clear();
    }
}

/// +1 for a correct directional call, -1 for a wrong one, 0 when the tool
/// abstained or the market did not move.
pub fn direction_outcome(signal: f64, realized_return: f64) -> i8 {
    if signal == 0.0 || realized_return == 0.0 {
        0
    } else if (signal > 0.0) == (realized_return > 0.0) {
        1
    } else {
        -1
    }
}

pub fn record_hit(stats: &mut HitStats, tool: &str, ticker: &str, signal: f64, realized_return: f64) {
    let c = stats
        .counts
        .entry(tool.to_string())
        .or_default()
        .entry(ticker.to_string())
        .or_default();
    c.total += 1;
    match direction_outcome(signal, realized_return) {
        1 => c.correct += 1,
        -1 => c.incorrect += 1,
        _ => {}
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sign_rules() {
        let mut s = HitStats::default();
        record_hit(&mut s, "t", "AAPL", 0.5, 0.01);
        record_hit(&mut s, "t", "AAPL", 0.5, -0.01);
        record_hit(&mut s, "t", "AAPL", 0.0, 0.01);
        record_hit(&mut s, "t", "AAPL", -0.3, 0.0);
        let c = s.get("t", "AAPL");
        assert_eq!((c.correct, c.incorrect, c.total), (1, 1, 4));
        assert_eq!(c.hit_rate(), Some(0.5));
        assert!(c.correct + c.incorrect <= c.total);
    }

    #[test]
    fn pooled_totals() {
        let mut s = HitStats::default();
        record_hit(&mut s, "m", "A", 1.0, 1.0);
        record_hit(&mut s, "m", "B", 1.0, 1.0);
        record_hit(&mut s, "m", "B", 1.0, -1.0);
        assert_eq!(s.tool_totals("m").correct, 2);
        assert_eq!(s.tool_totals("x"), HitCounts::default());
    }
}
