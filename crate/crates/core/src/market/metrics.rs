use serde::{Deserialize, Serialize};

use super::MarketError;

/// Bars per year: 252 trading days × 4 hourly bars.
pub const ANNUALIZATION_BARS: f64 = 1008.0;

/// The seven evaluation metrics. Ratios that are undefined for the given
/// series (zero volatility, no downside, no drawdown, no loss tail) are `None`
/// and named in `flags`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub sharpe: Option<f64>,
    pub sortino: Option<f64>,
    pub calmar: Option<f64>,
    pub return_pct: f64,
    pub max_dd_pct: f64,
    pub win_rate: f64,
    pub tail_ratio: Option<f64>,
    #[serde(default)]
    pub flags: Vec<String>,
}

impl MetricsReport {
    /// Named metric lookup used by aggregation and table emitters.
    pub fn get(&self, name: &str) -> Option<f64> {
        match name {
            "sharpe" => self.sharpe,
            "sortino" => self.sortino,
            "calmar" => self.calmar,
            "return_pct" => Some(self.return_pct),
            "max_dd_pct" => Some(self.max_dd_pct),
            "win_rate" => Some(self.win_rate),
            "tail_ratio" => self.tail_ratio,
            _ => None,
        }
    }

    pub const NAMES: [&'static str; 7] = [
        "sharpe",
        "sortino",
        "calmar",
        "return_pct",
        "max_dd_pct",
        "win_rate",
        "tail_ratio",
    ];
}

/// Percentile by linear interpolation between order statistics
/// (position `p · (n - 1)` in the sorted sample).
pub fn percentile_linear(sorted: &[f64], p: f64) -> f64 {
    debug_assert!(!sorted.is_empty());
    let pos = p.clamp(0.0, 1.0) * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = pos - lo as f64;
    sorted[lo] + (sorted[hi] - sorted[lo]) * frac
}

/// Largest peak-to-trough decline of the compounded equity curve starting
/// at 1.0, as a non-positive fraction.
pub fn max_drawdown(returns: &[f64]) -> f64 {
    let mut equity = 1.0_f64;
    let mut peak = 1.0_f64;
    let mut worst = 0.0_f64;
    for r in returns {
        equity *= 1.0 + r;
        peak = peak.max(equity);
        worst = worst.min((equity - peak) / peak);
    }
    worst
}

pub fn compute_metrics(returns: &[f64]) -> Result<MetricsReport, MarketError> {
    if returns.len() < 2 {
        return Err(MarketError::TooShort {
            needed: 2,
            got: returns.len(),
        });
    }
    if returns.iter().any(|r| !r.is_finite()) {
        return Err(MarketError::Invalid("non-finite return".into()));
    }
    let n = returns.len() as f64;
    let mut flags = Vec::new();

    // Welford running moments
    let (mut mean, mut m2) = (0.0_f64, 0.0_f64);
    let mut down_sq = 0.0_f64;
    let mut wins = 0usize;
    let mut growth = 1.0_f64;
    for (k, &r) in returns.iter().enumerate() {
        let delta = r - mean;
        mean += delta / (k + 1) as f64;
        m2 += delta * (r - mean);
        let d = r.min(0.0);
        down_sq += d * d;
        if r > 0.0 {
            wins += 1;
        }
        growth *= 1.0 + r;
    }
    let std = (m2 / (n - 1.0)).sqrt();
    let downside = (down_sq / n).sqrt();
    let ann = ANNUALIZATION_BARS.sqrt();

    let sharpe = if std > 0.0 {
        Some(ann * mean / std)
    } else {
        flags.push("sharpe_undefined_zero_volatility".to_string());
        None
    };
    let sortino = if downside > 0.0 {
        Some(ann * mean / downside)
    } else {
        flags.push("sortino_undefined_no_downside".to_string());
        None
    };
    let mdd = max_drawdown(returns);
    let calmar = if mdd < 0.0 {
        Some(mean * ANNUALIZATION_BARS / mdd.abs())
    } else {
        flags.push("calmar_undefined_no_drawdown".to_string());
        None
    };

    let mut sorted = returns.to_vec();
    sorted.sort_by(f64::total_cmp);
    let p95 = percentile_linear(&sorted, 0.95);
    let p05 = percentile_linear(&sorted, 0.05);
    let tail_ratio = if p05 < 0.0 {
        Some(p95.max(0.0) / p05.abs())
    } else {
        flags.push("tail_ratio_undefined_no_loss_tail".to_string());
        None
    };

    Ok(MetricsReport {
        sharpe,
        sortino,
        calmar,
        return_pct: (growth - 1.0) * 100.0,
        max_dd_pct: mdd * 100.0,
        win_rate: wins as f64 / n,
        tail_ratio,
        flags,
    })
}
