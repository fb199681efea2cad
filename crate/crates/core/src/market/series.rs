use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use super::MarketError;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bar {
    pub open: f64,
    pub high: f64,
    pub low: f64,
    pub close: f64,
    pub volume: f64,
}

/// Market regime label shared by the generator, reflection and memory.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Regime {
    Bull,
    Bear,
    Flat,
    Mixed,
}

impl Regime {
    pub fn as_str(&self) -> &'static str {
        match self {
            Regime::Bull => "bull",
            Regime::Bear => "bear",
            Regime::Flat => "flat",
            Regime::Mixed => "mixed",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "bull" => Some(Regime::Bull),
            "bear" => Some(Regime::Bear),
            "flat" => Some(Regime::Flat),
            "mixed" => Some(Regime::Mixed),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TickerInfo {
    pub symbol: String,
    pub sector: String,
    /// Market capitalisation in billions, used for the log-market-cap feature.
    pub market_cap_bn: f64,
}

impl TickerInfo {
    /// Metadata for the ten default tickers; unknown symbols get a neutral entry.
    pub fn lookup(symbol: &str) -> Self {
        let (sector, cap) = match symbol {
            "AAPL" => ("Technology", 3000.0),
            "NVDA" => ("Technology", 2500.0),
            "JNJ" => ("Healthcare", 380.0),
            "UNH" => ("Healthcare", 450.0),
            "JPM" => ("Finance", 600.0),
            "GS" => ("Finance", 170.0),
            "XOM" => ("Energy", 480.0),
            "PG" => ("Consumer", 390.0),
            "CAT" => ("Industrial", 170.0),
            "NEE" => ("Utilities", 140.0),
            _ => ("Unknown", 100.0),
        };
        Self {
            symbol: symbol.to_string(),
            sector: sector.to_string(),
            market_cap_bn: cap,
        }
    }
}

pub const DEFAULT_TICKERS: [&str; 10] = [
    "AAPL", "NVDA", "JNJ", "UNH", "JPM", "GS", "XOM", "PG", "CAT", "NEE",
];

/// Aligned multi-ticker OHLCV bars, indexed `[ticker][bar]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PriceSeries {
    pub tickers: Vec<TickerInfo>,
    pub timestamps: Vec<DateTime<Utc>>,
    pub bars: Vec<Vec<Bar>>,
    /// Ground-truth regime per bar for generated data; never shown to the agent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub regimes: Option<Vec<Regime>>,
}

impl PriceSeries {
    pub fn new(
        tickers: Vec<TickerInfo>,
        timestamps: Vec<DateTime<Utc>>,
        bars: Vec<Vec<Bar>>,
    ) -> Result<Self, MarketError> {
        let series = Self {
            tickers,
            timestamps,
            bars,
            regimes: None,
        };
        series.validate()?;
        Ok(series)
    }

    pub fn validate(&self) -> Result<(), MarketError> {
        if self.tickers.is_empty() {
            return Err(MarketError::Invalid("no tickers".into()));
        }
        if self.bars.len() != self.tickers.len() {
            return Err(MarketError::Alignment("bar table does not match ticker list".into()));
        }
        for (info, bars) in self.tickers.iter().zip(&self.bars) {
            if bars.len() != self.timestamps.len() {
                return Err(MarketError::Alignment(format!(
                    "{} has {} bars, expected {}",
                    info.symbol,
                    bars.len(),
                    self.timestamps.len()
                )));
            }
            for bar in bars {
                let prices = [bar.open, bar.high, bar.low, bar.close];
                if prices.iter().any(|p| !(p.is_finite() && *p > 0.0)) || !(bar.volume > 0.0) {
                    return Err(MarketError::Invalid(format!(
                        "{}: non-positive price or volume",
                        info.symbol
                    )));
                }
            }
        }
        if self.timestamps.windows(2).any(|w| w[0] >= w[1]) {
            return Err(MarketError::Invalid("timestamps not strictly increasing".into()));
        }
        if let Some(r) = &self.regimes {
            if r.len() != self.timestamps.len() {
                return Err(MarketError::Invalid("regime labels misaligned".into()));
            }
        }
        Ok(())
    }

    pub fn n_bars(&self) -> usize {
        self.timestamps.len()
    }

    pub fn n_tickers(&self) -> usize {
        self.tickers.len()
    }

    pub fn symbols(&self) -> Vec<String> {
        self.tickers.iter().map(|t| t.symbol.clone()).collect()
    }

    pub fn closes(&self, ticker: usize) -> Vec<f64> {
        self.bars[ticker].iter().map(|b| b.close).collect()
    }

    /// Simple return of bar `t`: close over previous close, or close over open
    /// for the first bar.
    pub fn bar_return(&self, ticker: usize, t: usize) -> f64 {
        let bars = &self.bars[ticker];
        let prev = if t == 0 { bars[0].open } else { bars[t - 1].close };
        bars[t].close / prev - 1.0
    }

    pub fn bar_returns(&self, t: usize) -> Vec<f64> {
        (0..self.n_tickers()).map(|i| self.bar_return(i, t)).collect()
    }

    /// Bars strictly before index `t` for one ticker.
    pub fn window_before(&self, ticker: usize, t: usize) -> &[Bar] {
        &self.bars[ticker][..t.min(self.n_bars())]
    }
}
