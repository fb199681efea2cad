use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::ToolError;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FundamentalsData {
    pub pe_ratio: Option<f64>,
    pub revenue_growth: Option<f64>,
    pub profit_margin: Option<f64>,
    pub debt_to_equity: Option<f64>,
    pub free_cash_flow_per_share: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AnalystData {
    pub buy: u32,
    pub hold: u32,
    pub sell: u32,
    pub target_price: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OptionsData {
    pub put_call_ratio: Option<f64>,
    pub implied_vol: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EarningsData {
    /// Last reported EPS surprise in percent.
    pub surprise_pct: Option<f64>,
    pub beat_streak: Option<u32>,
}

/// Contents of one `<SYMBOL>.json` file. Every section is optional.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TickerData {
    pub fundamentals: Option<FundamentalsData>,
    pub analyst: Option<AnalystData>,
    pub options: Option<OptionsData>,
    pub earnings: Option<EarningsData>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct StaticData {
    pub tickers: BTreeMap<String, TickerData>,
}

impl StaticData {
    /// Reads every `*.json` file in `dir`; the file stem is the ticker symbol.
    pub fn load_dir(dir: &Path) -> Result<Self, ToolError> {
        let err = |ticker: &str, message: String| ToolError::Data {
            ticker: ticker.to_string(),
            message,
        };
        let entries = fs::read_dir(dir).map_err(|e| err("*", format!("{}: {e}", dir.display())))?;
        let mut paths: Vec<_> = entries
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x == "json"))
            .collect();
        paths.sort();
        let mut tickers = BTreeMap::new();
        for path in paths {
            let symbol = path
                .file_stem()
                .and_then(|s| s.to_str())
                .unwrap_or_default()
                .to_string();
            let text = fs::read_to_string(&path).map_err(|e| err(&symbol, e.to_string()))?;
            let data: TickerData =
                serde_json::from_str(&text).map_err(|e| err(&symbol, e.to_string()))?;
            tickers.insert(symbol, data);
        }
        Ok(Self { tickers })
    }

    pub fn get(&self, symbol: &str) -> Option<&TickerData> {
        self.tickers.get(symbol)
    }

    pub fn insert(&mut self, symbol: impl Into<String>, data: TickerData) {
        self.tickers.insert(symbol.into(), data);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn loads_partial_files() {
        let dir = tempfile::tempdir().unwrap();
        fs::write(
            dir.path().join("AAPL.json"),
            r#"{"analyst": {"buy": 10, "hold": 5, "sell": 1}}"#,
        )
        .unwrap();
        fs::write(dir.path().join("notes.txt"), "ignored").unwrap();
        let d = StaticData::load_dir(dir.path()).unwrap();
        assert_eq!(d.tickers.len(), 1);
        let a = d.get("AAPL").unwrap();
        assert_eq!(a.analyst.as_ref().unwrap().buy, 10);
        assert!(a.fundamentals.is_none());
    }

    #[test]
    fn rejects_unknown_sections() {
        let dir = tempfile::tempdir().unwrap();
        fs::write(dir.path().join("GS.json"), r#"{"horoscope": {}}"#).unwrap();
        assert!(StaticData::load_dir(dir.path()).is_err());
    }
}
