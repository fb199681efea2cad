//! The twelve-tool finance registry. Price-based tools compute directly from
//! cached OHLCV bars; data-backed tools read optional per-ticker JSON files
//! and fall back to a neutral output when none is present.

mod data;
mod hits;
pub mod indicators;
mod tools;

pub use data::{AnalystData, EarningsData, FundamentalsData, OptionsData, StaticData, TickerData};
pub use hits::{direction_outcome, record_hit, HitCounts, HitStats};
pub use tools::score_composite_signal;

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::market::{Bar, PriceSeries};

pub const GET_PRICE_HISTORY: &str = "get_price_history";
pub const GET_FUNDAMENTALS: &str = "get_fundamentals";
pub const GET_ANALYST_DATA: &str = "get_analyst_data";
pub const GET_OPTIONS_DATA: &str = "get_options_data";
pub const GET_EARNINGS_DATA: &str = "get_earnings_data";
pub const COMPUTE_TECHNICALS: &str = "compute_technicals";
pub const COMPUTE_QUANT_RISK: &str = "compute_quant_risk";
pub const COMPUTE_MOMENTUM: &str = "compute_momentum";
pub const COMPUTE_CORRELATIONS: &str = "compute_correlations";
pub const RUN_DCF_MODEL: &str = "run_dcf_model";
pub const SCORE_RISK: &str = "score_risk";
pub const SCORE_COMPOSITE_SIGNAL: &str = "score_composite_signal";

/// Registration order; analysis tools come after everything they consume.
pub const TOOL_NAMES: [&str; 12] = [
    GET_PRICE_HISTORY,
    GET_FUNDAMENTALS,
    GET_ANALYST_DATA,
    GET_OPTIONS_DATA,
    GET_EARNINGS_DATA,
    COMPUTE_TECHNICALS,
    COMPUTE_QUANT_RISK,
    COMPUTE_MOMENTUM,
    COMPUTE_CORRELATIONS,
    RUN_DCF_MODEL,
    SCORE_RISK,
    SCORE_COMPOSITE_SIGNAL,
];

#[derive(Debug, Error)]
pub enum ToolError {
    #[error("unknown tool `{0}`")]
    UnknownTool(String),
    #[error("duplicate tool `{0}`")]
    DuplicateTool(String),
    #[error("unknown ticker index {0}")]
    UnknownTicker(usize),
    #[error("static data for {ticker}: {message}")]
    Data { ticker: String, message: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ToolKind {
    /// Raw state from cached prices or static files.
    Retrieval,
    Computation,
    Analysis,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum FieldValue {
    Num(f64),
    Text(String),
}

impl FieldValue {
    pub fn as_f64(&self) -> Option<f64> {
        match self {
            FieldValue::Num(x) => Some(*x),
            FieldValue::Text(_) => None,
        }
    }
}

/// Directional reading of one tool for one ticker. Positive signal is bullish.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToolOutput {
    pub tool_name: String,
    pub signal: f64,
    pub confidence: f64,
    pub fields: BTreeMap<String, FieldValue>,
}

impl ToolOutput {
    pub fn new(tool_name: &str, signal: f64, confidence: f64) -> Self {
        let clean = |x: f64, lo: f64| if x.is_finite() { x.clamp(lo, 1.0) } else { 0.0 };
        Self {
            tool_name: tool_name.to_string(),
            signal: clean(signal, -1.0),
            confidence: clean(confidence, 0.0),
            fields: BTreeMap::new(),
        }
    }

    /// Signal 0, confidence 0, with the reason recorded as a `warning` field.
    pub fn neutral(tool_name: &str, warning: &str) -> Self {
        let mut out = Self::new(tool_name, 0.0, 0.0);
        if !warning.is_empty() {
            out.fields
                .insert("warning".into(), FieldValue::Text(warning.to_string()));
        }
        out
    }

    pub fn with(mut self, key: &str, value: f64) -> Self {
        self.set(key, value);
        self
    }

    pub fn set(&mut self, key: &str, value: f64) {
        let v = if value.is_finite() { value } else { 0.0 };
        self.fields.insert(key.to_string(), FieldValue::Num(v));
    }

    pub fn set_text(&mut self, key: &str, value: impl Into<String>) {
        self.fields
            .insert(key.to_string(), FieldValue::Text(value.into()));
    }

    pub fn num(&self, key: &str) -> Option<f64> {
        self.fields.get(key).and_then(FieldValue::as_f64)
    }

    pub fn text(&self, key: &str) -> Option<&str> {
        match self.fields.get(key) {
            Some(FieldValue::Text(s)) => Some(s),
            _ => None,
        }
    }

    pub fn is_neutral(&self) -> bool {
        self.confidence == 0.0
    }
}

/// Point-in-time view of the market: only bars strictly before `as_of` are
/// visible to a tool.
#[derive(Debug, Clone, Copy)]
pub struct MarketView<'a> {
    series: &'a PriceSeries,
    as_of: usize,
}

impl<'a> MarketView<'a> {
    pub fn new(series: &'a PriceSeries, as_of: usize) -> Self {
        Self {
            series,
            as_of: as_of.min(series.n_bars()),
        }
    }

    pub fn as_of(&self) -> usize {
        self.as_of
    }

    pub fn n_tickers(&self) -> usize {
        self.series.n_tickers()
    }

    pub fn symbol(&self, ticker: usize) -> &str {
        &self.series.tickers[ticker].symbol
    }

    pub fn window(&self, ticker: usize) -> &'a [Bar] {
        self.series.window_before(ticker, self.as_of)
    }

    pub fn closes(&self, ticker: usize) -> Vec<f64> {
        self.window(ticker).iter().map(|b| b.close).collect()
    }

    pub fn last_close(&self, ticker: usize) -> Option<f64> {
        self.window(ticker).last().map(|b| b.close)
    }

    /// Per-bar simple returns inside the visible window.
    pub fn returns(&self, ticker: usize) -> Vec<f64> {
        indicators::simple_returns(&self.closes(ticker))
    }

    /// Equal-weight index returns over the visible window.
    pub fn index_returns(&self) -> Vec<f64> {
        let k = self.n_tickers();
        let per: Vec<Vec<f64>> = (0..k).map(|i| self.returns(i)).collect();
        let n = per.first().map_or(0, Vec::len);
        (0..n)
            .map(|t| per.iter().map(|r| r[t]).sum::<f64>() / k as f64)
            .collect()
    }
}

/// Tunable tool parameters with conventional defaults.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ToolParams {
    pub rsi_period: usize,
    pub macd_fast: usize,
    pub macd_slow: usize,
    pub macd_signal: usize,
    pub bollinger_period: usize,
    pub bollinger_width: f64,
    pub momentum_horizons: Vec<usize>,
    pub momentum_scale: f64,
    pub trend_lookback: usize,
    pub min_risk_bars: usize,
    pub min_correlation_bars: usize,
    pub dcf_growth_factor: f64,
    pub dcf_lookback: usize,
    pub composite_buy: f64,
    pub composite_sell: f64,
}

impl Default for ToolParams {
    fn default() -> Self {
        Self {
            rsi_period: 14,
            macd_fast: 12,
            macd_slow: 26,
            macd_signal: 9,
            bollinger_period: 20,
            bollinger_width: 2.0,
            momentum_horizons: vec![5, 10, 20],
            momentum_scale: 0.01,
            trend_lookback: 20,
            min_risk_bars: 20,
            min_correlation_bars: 10,
            dcf_growth_factor: 1.0,
            dcf_lookback: 20,
            composite_buy: 0.2,
            composite_sell: -0.2,
        }
    }
}

/// Everything a tool may read for one call.
pub struct ToolInput<'a> {
    pub ticker: usize,
    pub view: MarketView<'a>,
    pub params: &'a ToolParams,
    pub data: Option<&'a TickerData>,
    /// Outputs of tools already run for this ticker and bar.
    pub upstream: &'a BTreeMap<String, ToolOutput>,
}

impl ToolInput<'_> {
    pub fn symbol(&self) -> &str {
        self.view.symbol(self.ticker)
    }
}

/// A registered tool. Implementations are pure functions of their input.
pub trait Tool: Send + Sync {
    fn name(&self) -> &'static str;
    fn kind(&self) -> ToolKind;
    /// True for tools fed from static files rather than prices.
    fn data_backed(&self) -> bool {
        false
    }
    /// Tools whose outputs must be present in `upstream`.
    fn dependencies(&self) -> &'static [&'static str] {
        &[]
    }
    fn run(&self, input: &ToolInput<'_>) -> ToolOutput;
}

/// Fixed, name-indexed set of tools plus their shared parameters and data.
pub struct ToolRegistry {
    tools: Vec<Box<dyn Tool>>,
    pub params: ToolParams,
    pub data: StaticData,
}

impl std::fmt::Debug for ToolRegistry {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ToolRegistry")
            .field("tools", &self.names())
            .field("params", &self.params)
            .finish()
    }
}

impl ToolRegistry {
    pub fn empty(params: ToolParams, data: StaticData) -> Self {
        Self {
            tools: Vec::new(),
            params,
            data,
        }
    }

    /// All twelve finance tools with default parameters and no static data.
    pub fn finance() -> Self {
        Self::finance_with(ToolParams::default(), StaticData::default())
    }

    pub fn finance_with(params: ToolParams, data: StaticData) -> Self {
        let mut reg = Self::empty(params, data);
        for tool in tools::builtin() {
            reg.register(tool).expect("builtin names are unique");
        }
        reg
    }

    pub fn finance_from_dir(params: ToolParams, dir: Option<&Path>) -> Result<Self, ToolError> {
        let data = match dir {
            Some(d) => StaticData::load_dir(d)?,
            None => StaticData::default(),
        };
        Ok(Self::finance_with(params, data))
    }

    pub fn register(&mut self, tool: Box<dyn Tool>) -> Result<(), ToolError> {
        if self.get(tool.name()).is_some() {
            return Err(ToolError::DuplicateTool(tool.name().to_string()));
        }
        self.tools.push(tool);
        Ok(())
    }

    pub fn names(&self) -> Vec<&'static str> {
        self.tools.iter().map(|t| t.name()).collect()
    }

    pub fn len(&self) -> usize {
        self.tools.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tools.is_empty()
    }

    pub fn get(&self, name: &str) -> Option<&dyn Tool> {
        self.tools.iter().find(|t| t.name() == name).map(|b| b.as_ref())
    }

    pub fn is_data_backed(&self, name: &str) -> bool {
        self.get(name).is_some_and(|t| t.data_backed())
    }

    /// Runs one tool, computing any dependencies it needs first.
    pub fn run_tool(
        &self,
        name: &str,
        ticker: usize,
        view: MarketView<'_>,
    ) -> Result<ToolOutput, ToolError> {
        let mut done = BTreeMap::new();
        self.run_into(name, ticker, view, &mut done)?;
        Ok(done.remove(name).expect("just computed"))
    }

    /// Runs every registered tool for one ticker, in registration order.
    pub fn run_all(
        &self,
        ticker: usize,
        view: MarketView<'_>,
    ) -> Result<BTreeMap<String, ToolOutput>, ToolError> {
        let mut done = BTreeMap::new();
        for tool in &self.tools {
            self.run_into(tool.name(), ticker, view, &mut done)?;
        }
        Ok(done)
    }

    fn run_into(
        &self,
        name: &str,
        ticker: usize,
        view: MarketView<'_>,
        done: &mut BTreeMap<String, ToolOutput>,
    ) -> Result<(), ToolError> {
        if done.contains_key(name) {
            return Ok(());
        }
        if ticker >= view.n_tickers() {
            return Err(ToolError::UnknownTicker(ticker));
        }
        let tool = self
            .get(name)
            .ok_or_else(|| ToolError::UnknownTool(name.to_string()))?;
        for dep in tool.dependencies() {
            if self.get(dep).is_some() {
                self.run_into(dep, ticker, view, done)?;
            }
        }
        let data = self.data.get(view.symbol(ticker));
        let out = tool.run(&ToolInput {
            ticker,
            view,
            params: &self.params,
            data,
            upstream: done,
        });
        if let Some(w) = out.text("warning") {
            log::debug!("{name} on {}: {w}", view.symbol(ticker));
        }
        done.insert(name.to_string(), out);
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::market::{synth_generate, SynthConfig};

    #[test]
    fn registry_has_twelve_unique_tools() {
        let reg = ToolRegistry::finance();
        assert_eq!(reg.names(), TOOL_NAMES.to_vec());
        let mut sorted = reg.names();
        sorted.sort();
        sorted.dedup();
        assert_eq!(sorted.len(), 12);
    }

    #[test]
    fn unknown_tool_is_error() {
        let s = synth_generate(&SynthConfig::standard(), 1).unwrap();
        let reg = ToolRegistry::finance();
        assert!(matches!(
            reg.run_tool("get_horoscope", 0, MarketView::new(&s, 50)),
            Err(ToolError::UnknownTool(_))
        ));
    }

    #[test]
    fn outputs_are_deterministic() {
        let s = synth_generate(&SynthConfig::standard(), 3).unwrap();
        let reg = ToolRegistry::finance();
        let a = reg.run_all(2, MarketView::new(&s, 80)).unwrap();
        let b = reg.run_all(2, MarketView::new(&s, 80)).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.len(), 12);
        for out in a.values() {
            assert!((-1.0..=1.0).contains(&out.signal));
            assert!((0.0..=1.0).contains(&out.confidence));
        }
    }

    #[test]
    fn view_hides_future_bars() {
        let s = synth_generate(&SynthConfig::standard(), 3).unwrap();
        let v = MarketView::new(&s, 10);
        assert_eq!(v.window(0).len(), 10);
        assert_eq!(v.last_close(0), Some(s.bars[0][9].close));
    }
}
