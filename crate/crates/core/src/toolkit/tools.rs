use crate::market::max_drawdown;

use super::indicators::{
    bollinger, correlation_matrix, ema_series, linear_fit, macd, mean, pearson, rsi_wilder,
    sample_std, sma,
};
use super::*;

fn clip(x: f64) -> f64 {
    if x.is_finite() {
        x.clamp(-1.0, 1.0)
    } else {
        0.0
    }
}

fn clip01(x: f64) -> f64 {
    if x.is_finite() {
        x.clamp(0.0, 1.0)
    } else {
        0.0
    }
}

pub(super) fn builtin() -> Vec<Box<dyn Tool>> {
    vec![
        Box::new(PriceHistory),
        Box::new(Fundamentals),
        Box::new(Analyst),
        Box::new(Options),
        Box::new(Earnings),
        Box::new(Technicals),
        Box::new(QuantRisk),
        Box::new(Momentum),
        Box::new(Correlations),
        Box::new(Dcf),
        Box::new(RiskScore),
        Box::new(Composite),
    ]
}

struct PriceHistory;

impl Tool for PriceHistory {
    fn name(&self) -> &'static str {
        GET_PRICE_HISTORY
    }
    fn kind(&self) -> ToolKind {
        ToolKind::Retrieval
    }
    fn run(&self, input: &ToolInput<'_>) -> ToolOutput {
        let bars = input.view.window(input.ticker);
        let Some(last) = bars.last() else {
            return ToolOutput::neutral(self.name(), "no bars before decision time");
        };
        let prev = if bars.len() >= 2 {
            bars[bars.len() - 2].close
        } else {
            last.open
        };
        let r1 = last.close / prev - 1.0;
        ToolOutput::new(self.name(), clip(r1 / 0.01), 0.5)
            .with("close", last.close)
            .with("open", last.open)
            .with("high", last.high)
            .with("low", last.low)
            .with("volume", last.volume)
            .with("return_1", r1)
            .with("n_bars", bars.len() as f64)
    }
}

struct Fundamentals;

impl Tool for Fundamentals {
    fn name(&self) -> &'static str {
        GET_FUNDAMENTALS
    }
    fn kind(&self) -> ToolKind {
        ToolKind::Retrieval
    }
    fn data_backed(&self) -> bool {
        true
    }
    fn run(&self, input: &ToolInput<'_>) -> ToolOutput {
        let Some(f) = input.data.and_then(|d| d.fundamentals.as_ref()) else {
            return ToolOutput::neutral(self.name(), "");
        };
        let mut subs = Vec::new();
        if let Some(pe) = f.pe_ratio.filter(|p| *p > 0.0) {
            subs.push(clip((20.0 - pe) / 20.0));
        }
        if let Some(g) = f.revenue_growth {
            subs.push(clip(g / 0.2));
        }
        if let Some(m) = f.profit_margin {
            subs.push(clip(m / 0.25));
        }
        if let Some(de) = f.debt_to_equity {
            subs.push(clip((1.0 - de) / 2.0));
        }
        if subs.is_empty() {
            return ToolOutput::neutral(self.name(), "fundamentals section is empty");
        }
        let mut out = ToolOutput::new(self.name(), mean(&subs), 0.6);
        for (k, v) in [
            ("pe_ratio", f.pe_ratio),
            ("revenue_growth", f.revenue_growth),
            ("profit_margin", f.profit_margin),
            ("debt_to_equity", f.debt_to_equity),
            ("free_cash_flow_per_share", f.free_cash_flow_per_share),
        ] {
            if let Some(v) = v {
                out.set(k, v);
            }
        }
        out
    }
}

struct Analyst;

impl Tool for Analyst {
    fn name(&self) -> &'static str {
        GET_ANALYST_DATA
    }
    fn kind(&self) -> ToolKind {
        ToolKind::Retrieval
    }
    fn data_backed(&self) -> bool {
        true
    }
    fn run(&self, input: &ToolInput<'_>) -> ToolOutput {
        let Some(a) = input.data.and_then(|d| d.analyst.as_ref()) else {
            return ToolOutput::neutral(self.name(), "");
        };
        let n = (a.buy + a.hold + a.sell) as f64;
        let mut subs = Vec::new();
        if n > 0.0 {
            subs.push((a.buy as f64 - a.sell as f64) / n);
        }
        let price = input.view.last_close(input.ticker);
        if let (Some(t), Some(p)) = (a.target_price, price) {
            subs.push(clip((t / p - 1.0) / 0.2));
        }
        if subs.is_empty() {
            return ToolOutput::neutral(self.name(), "analyst section is empty");
        }
        let mut out = ToolOutput::new(self.name(), mean(&subs), (n / 20.0).clamp(0.2, 1.0))
            .with("buy", a.buy as f64)
            .with("hold", a.hold as f64)
            .with("sell", a.sell as f64);
        if let Some(t) = a.target_price {
            out.set("target_price", t);
        }
        out
    }
}

struct Options;

impl Tool for Options {
    fn name(&self) -> &'static str {
        GET_OPTIONS_DATA
    }
    fn kind(&self) -> ToolKind {
        ToolKind::Retrieval
    }
    fn data_backed(&self) -> bool {
        true
    }
    fn run(&self, input: &ToolInput<'_>) -> ToolOutput {
        let Some(pcr) = input
            .data
            .and_then(|d| d.options.as_ref())
            .and_then(|o| o.put_call_ratio)
        else {
            return ToolOutput::neutral(self.name(), "");
        };
        let mut out = ToolOutput::new(self.name(), clip((1.0 - pcr) / 0.5), 0.5)
            .with("put_call_ratio", pcr);
        if let Some(iv) = input.data.and_then(|d| d.options.as_ref()?.implied_vol) {
            out.set("implied_vol", iv);
        }
        out
    }
}

struct Earnings;

impl Tool for Earnings {
    fn name(&self) -> &'static str {
        GET_EARNINGS_DATA
    }
    fn kind(&self) -> ToolKind {
        ToolKind::Retrieval
    }
    fn data_backed(&self) -> bool {
        true
    }
    fn run(&self, input: &ToolInput<'_>) -> ToolOutput {
        let Some(e) = input.data.and_then(|d| d.earnings.as_ref()) else {
            return ToolOutput::neutral(self.name(), "");
        };
        let Some(s) = e.surprise_pct else {
            return ToolOutput::neutral(self.name(), "no earnings surprise on file");
        };
        let streak = e.beat_streak.unwrap_or(0) as f64;
        ToolOutput::new(self.name(), clip(s / 10.0), (0.4 + 0.1 * streak).min(0.8))
            .with("surprise_pct", s)
            .with("beat_streak", streak)
    }
}

struct Technicals;

impl Tool for Technicals {
    fn name(&self) -> &'static str {
        COMPUTE_TECHNICALS
    }
    fn kind(&self) -> ToolKind {
        ToolKind::Computation
    }
    fn run(&self, input: &ToolInput<'_>) -> ToolOutput {
        let p = input.params;
        let closes = input.view.closes(input.ticker);
        let need = p.macd_slow.max(p.bollinger_period).max(p.rsi_period + 1);
        if closes.len() < need {
            return ToolOutput::neutral(self.name(), &format!("need {need} bars, have {}", closes.len()));
        }
        let last = *closes.last().expect("non-empty");
        let rsi = rsi_wilder(&closes, p.rsi_period).expect("length checked");
        let m = macd(&closes, p.macd_fast, p.macd_slow, p.macd_signal).expect("length checked");
        let bb = bollinger(&closes, p.bollinger_period, p.bollinger_width).expect("length checked");
        let sma20 = sma(&closes, p.bollinger_period).expect("length checked");
        let width = bb.upper - bb.lower;
        let pct_b = if width > 0.0 { (last - bb.lower) / width } else { 0.5 };

        let subs = [
            (rsi - 50.0) / 50.0,
            clip(m.histogram / (0.005 * last)),
            clip((pct_b - 0.5) * 2.0),
            clip((last / sma20 - 1.0) / 0.02),
        ];
        let score = mean(&subs);
        let agree = mean(&subs.map(f64::signum)).abs();
        let mut out = ToolOutput::new(self.name(), score, 0.4 + 0.6 * agree)
            .with("rsi", rsi)
            .with("macd", m.line)
            .with("macd_signal", m.signal)
            .with("macd_hist", m.histogram)
            .with("bb_lower", bb.lower)
            .with("bb_middle", bb.middle)
            .with("bb_upper", bb.upper)
            .with("pct_b", pct_b)
            .with("sma_20", sma20)
            .with("ema_12", *ema_series(&closes, p.macd_fast).last().expect("non-empty"))
            .with("technical_score", score);
        if let Some(s50) = sma(&closes, 50) {
            out.set("sma_50", s50);
        }
        out
    }
}

/// Historical 95% VaR and CVaR as positive loss fractions: the
/// ceil(0.05·n)-th worst return and the mean of the worst ceil(0.05·n).
pub(super) fn var_cvar(returns: &[f64]) -> (f64, f64) {
    if returns.is_empty() {
        return (0.0, 0.0);
    }
    let mut sorted = returns.to_vec();
    sorted.sort_by(f64::total_cmp);
    let k = ((0.05 * sorted.len() as f64).ceil() as usize).max(1);
    let var = (-sorted[k - 1]).max(0.0);
    let cvar = (-mean(&sorted[..k])).max(0.0);
    (var, cvar)
}

struct QuantRisk;

impl Tool for QuantRisk {
    fn name(&self) -> &'static str {
        COMPUTE_QUANT_RISK
    }
    fn kind(&self) -> ToolKind {
        ToolKind::Computation
    }
    fn run(&self, input: &ToolInput<'_>) -> ToolOutput {
        let n_bars = input.view.window(input.ticker).len();
        if n_bars < input.params.min_risk_bars {
            return ToolOutput::neutral(
                self.name(),
                &format!("need {} bars, have {n_bars}", input.params.min_risk_bars),
            );
        }
        let r = input.view.returns(input.ticker);
        let idx = input.view.index_returns();
        let vol = sample_std(&r);
        let idx_vol = sample_std(&idx);
        let (var95, cvar95) = var_cvar(&r);
        let mdd = max_drawdown(&r);
        let mu = mean(&r);
        let downside = (r.iter().map(|x| x.min(0.0).powi(2)).sum::<f64>() / r.len() as f64).sqrt();
        let sharpe = if vol > 0.0 { mu / vol } else { 0.0 };
        let sortino = if downside > 0.0 { mu / downside } else { 0.0 };

        let mi = mean(&idx);
        let cov: f64 = r.iter().zip(&idx).map(|(a, b)| (a - mu) * (b - mi)).sum::<f64>();
        let var_idx: f64 = idx.iter().map(|b| (b - mi).powi(2)).sum::<f64>();
        let beta = if var_idx > 0.0 { cov / var_idx } else { 0.0 };
        let alpha = mu - beta * mi;

        // Risk relative to the index: 0 at index volatility, +1 at double.
        let rel = if idx_vol > 0.0 { clip(vol / idx_vol - 1.0) } else { 0.0 };
        let risk_score = 1.0 + 9.0 * (rel + 1.0) / 2.0;
        ToolOutput::new(self.name(), -rel, 0.5)
            .with("volatility", vol)
            .with("var_95", var95)
            .with("cvar_95", cvar95)
            .with("max_drawdown", mdd)
            .with("sharpe", sharpe)
            .with("sortino", sortino)
            .with("beta", beta)
            .with("alpha", alpha)
            .with("relative_risk", rel)
            .with("risk_score", risk_score)
    }
}

struct Momentum;

impl Tool for Momentum {
    fn name(&self) -> &'static str {
        COMPUTE_MOMENTUM
    }
    fn kind(&self) -> ToolKind {
        ToolKind::Computation
    }
    fn run(&self, input: &ToolInput<'_>) -> ToolOutput {
        let p = input.params;
        let bars = input.view.window(input.ticker);
        let longest = p.momentum_horizons.iter().copied().max().unwrap_or(0).max(p.trend_lookback);
        if bars.len() < longest.max(2) {
            return ToolOutput::neutral(self.name(), &format!("need {longest} bars, have {}", bars.len()));
        }
        let n = bars.len();
        let last = bars[n - 1].close;
        // price h bars back; the open of the first bar stands in when h == n
        let base = |h: usize| if h < n { bars[n - 1 - h].close } else { bars[0].open };
        let mut out = ToolOutput::new(self.name(), 0.0, 0.0);
        let mut parts = Vec::new();
        for &h in &p.momentum_horizons {
            let lr = (last / base(h)).ln();
            out.set(&format!("return_{h}"), last / base(h) - 1.0);
            parts.push(clip(lr / (p.momentum_scale * (h as f64).sqrt())));
        }
        let logs: Vec<f64> = bars[n - p.trend_lookback..].iter().map(|b| b.close.ln()).collect();
        let (slope, r2) = linear_fit(&logs).unwrap_or((0.0, 0.0));
        let vols: Vec<f64> = bars[n - p.trend_lookback..].iter().map(|b| b.volume).collect();
        let (vslope, _) = linear_fit(&vols).unwrap_or((0.0, 0.0));
        let vmean = mean(&vols);

        let signal = mean(&parts);
        out.signal = clip(signal);
        out.confidence = clip01(0.5 + 0.5 * r2);
        out.set("trend_slope", slope);
        out.set("trend_strength", r2);
        out.set("volume_trend", if vmean > 0.0 { vslope / vmean } else { 0.0 });
        out
    }
}

struct Correlations;

impl Tool for Correlations {
    fn name(&self) -> &'static str {
        COMPUTE_CORRELATIONS
    }
    fn kind(&self) -> ToolKind {
        ToolKind::Computation
    }
    fn run(&self, input: &ToolInput<'_>) -> ToolOutput {
        let n_bars = input.view.window(input.ticker).len();
        let need = input.params.min_correlation_bars;
        if n_bars < need {
            return ToolOutput::neutral(self.name(), &format!("need {need} bars, have {n_bars}"));
        }
        let k = input.view.n_tickers();
        let rets: Vec<Vec<f64>> = (0..k).map(|i| input.view.returns(i)).collect();
        let matrix = correlation_matrix(&rets);
        let me = input.ticker;
        let mut out = ToolOutput::new(self.name(), 0.0, 0.0);
        if pearson(&rets[me], &rets[me]).is_none() {
            out.set_text("warning", "zero-variance returns; correlations read 0");
        }
        // What correlated peers did over the last few bars.
        let h = 5.min(rets[me].len());
        let mut lead = 0.0;
        let mut abs_sum = 0.0;
        let mut peers = 0usize;
        for j in (0..k).filter(|&j| j != me) {
            let c = matrix[me][j];
            let tail = &rets[j][rets[j].len() - h..];
            let rj: f64 = tail.iter().map(|x| (1.0 + x).ln()).sum();
            lead += c * rj;
            abs_sum += c.abs();
            peers += 1;
        }
        if peers > 0 {
            let norm = 0.01 * (h.max(1) as f64).sqrt() * peers as f64;
            out.signal = clip(lead / norm);
            out.confidence = clip01(abs_sum / peers as f64);
            out.set("mean_abs_correlation", abs_sum / peers as f64);
        }
        for j in 0..k {
            out.set(&format!("corr_{}", input.view.symbol(j)), matrix[me][j]);
        }
        out
    }
}

struct Dcf;

/// Annual discount rate and the growth cap used for the cash-flow branch.
const DISCOUNT_RATE: f64 = 0.09;
const MAX_TERMINAL_GROWTH: f64 = 0.06;

impl Tool for Dcf {
    fn name(&self) -> &'static str {
        RUN_DCF_MODEL
    }
    fn kind(&self) -> ToolKind {
        ToolKind::Computation
    }
    fn dependencies(&self) -> &'static [&'static str] {
        &[GET_FUNDAMENTALS]
    }
    fn run(&self, input: &ToolInput<'_>) -> ToolOutput {
        let p = input.params;
        let closes = input.view.closes(input.ticker);
        let Some(&price) = closes.last() else {
            return ToolOutput::neutral(self.name(), "no bars before decision time");
        };
        let fundamentals = input.data.and_then(|d| d.fundamentals.as_ref());
        let cash_flow = fundamentals.and_then(|f| f.free_cash_flow_per_share.filter(|x| *x > 0.0));
        let (fair, method) = if let Some(fcf) = cash_flow {
            let g = fundamentals
                .and_then(|f| f.revenue_growth)
                .unwrap_or(0.0)
                .clamp(-0.05, MAX_TERMINAL_GROWTH);
            (fcf * (1.0 + g) / (DISCOUNT_RATE - g), "cash_flow")
        } else {
            match sma(&closes, p.dcf_lookback) {
                Some(m) => (m * p.dcf_growth_factor, "trailing_mean"),
                None => {
                    return ToolOutput::neutral(
                        self.name(),
                        &format!("need {} bars, have {}", p.dcf_lookback, closes.len()),
                    )
                }
            }
        };
        let upside = fair / price - 1.0;
        let conf = if method == "cash_flow" { 0.6 } else { 0.5 };
        let mut out = ToolOutput::new(self.name(), clip(upside / 0.2), conf)
            .with("fair_value", fair)
            .with("price", price)
            .with("implied_upside", upside);
        out.set_text("method", method);
        out
    }
}

struct RiskScore;

impl Tool for RiskScore {
    fn name(&self) -> &'static str {
        SCORE_RISK
    }
    fn kind(&self) -> ToolKind {
        ToolKind::Analysis
    }
    fn dependencies(&self) -> &'static [&'static str] {
        &[GET_FUNDAMENTALS, COMPUTE_QUANT_RISK, RUN_DCF_MODEL, COMPUTE_TECHNICALS]
    }
    fn run(&self, input: &ToolInput<'_>) -> ToolOutput {
        let up = input.upstream;
        let field = |tool: &str, key: &str| up.get(tool).and_then(|o| o.num(key));
        let live = |tool: &str| up.get(tool).filter(|o| !o.is_neutral());
        let to_score = |x: f64| 1.0 + 9.0 * clip01(x);

        let valuation = live(RUN_DCF_MODEL).map_or(5.5, |o| 5.5 - 4.5 * o.signal);
        let financial = field(GET_FUNDAMENTALS, "debt_to_equity").map_or(5.5, |de| to_score(de / 3.0));
        let growth = field(GET_FUNDAMENTALS, "revenue_growth").map_or(5.5, |g| 5.5 - 4.5 * clip(g / 0.2));
        let macro_ = live(COMPUTE_QUANT_RISK)
            .and_then(|o| o.num("beta"))
            .map_or(5.5, |b| to_score(b / 2.0));
        let technical = match (live(COMPUTE_QUANT_RISK), live(COMPUTE_TECHNICALS)) {
            (Some(q), Some(t)) => 5.5 + 4.5 * (0.5 * q.num("relative_risk").unwrap_or(0.0) - 0.5 * t.signal),
            (Some(q), None) => 5.5 + 4.5 * q.num("relative_risk").unwrap_or(0.0),
            (None, Some(t)) => 5.5 - 4.5 * t.signal,
            (None, None) => 5.5,
        };
        let subs = [valuation, financial, growth, macro_, technical].map(|s| s.clamp(1.0, 10.0));
        let overall = mean(&subs);
        let confs: Vec<f64> = [GET_FUNDAMENTALS, COMPUTE_QUANT_RISK, RUN_DCF_MODEL, COMPUTE_TECHNICALS]
            .iter()
            .filter_map(|t| up.get(*t).map(|o| o.confidence))
            .collect();
        let conf = if confs.is_empty() { 0.0 } else { mean(&confs) };
        ToolOutput::new(self.name(), (5.5 - overall) / 4.5, conf)
            .with("valuation_risk", subs[0])
            .with("financial_risk", subs[1])
            .with("growth_risk", subs[2])
            .with("macro_risk", subs[3])
            .with("technical_risk", subs[4])
            .with("overall_risk", overall)
    }
}

/// Confidence-weighted mean of constituent signals with a BUY/SELL/HOLD label.
pub fn score_composite_signal(outputs: &[ToolOutput], buy: f64, sell: f64) -> ToolOutput {
    let wsum: f64 = outputs.iter().map(|o| o.confidence).sum();
    let signal = if wsum > 0.0 {
        outputs.iter().map(|o| o.confidence * o.signal).sum::<f64>() / wsum
    } else {
        0.0
    };
    let conf = if outputs.is_empty() { 0.0 } else { wsum / outputs.len() as f64 };
    let label = if signal > buy {
        "BUY"
    } else if signal < sell {
        "SELL"
    } else {
        "HOLD"
    };
    let mut out = ToolOutput::new(SCORE_COMPOSITE_SIGNAL, signal, conf)
        .with("constituents", outputs.len() as f64);
    out.set_text("label", label);
    out
}

struct Composite;

impl Tool for Composite {
    fn name(&self) -> &'static str {
        SCORE_COMPOSITE_SIGNAL
    }
    fn kind(&self) -> ToolKind {
        ToolKind::Analysis
    }
    fn dependencies(&self) -> &'static [&'static str] {
        &TOOL_NAMES[..11]
    }
    fn run(&self, input: &ToolInput<'_>) -> ToolOutput {
        let parts: Vec<ToolOutput> = input
            .upstream
            .values()
            .filter(|o| o.tool_name != SCORE_COMPOSITE_SIGNAL)
            .cloned()
            .collect();
        score_composite_signal(&parts, input.params.composite_buy, input.params.composite_sell)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::market::{Bar, PriceSeries, TickerInfo};
    use chrono::{Duration, TimeZone, Utc};

    fn series_from(closes: &[Vec<f64>]) -> PriceSeries {
        let n = closes[0].len();
        let t0 = Utc.with_ymd_and_hms(2025, 1, 6, 14, 0, 0).unwrap();
        let ts = (0..n).map(|i| t0 + Duration::hours(i as i64)).collect();
        let bars = closes
            .iter()
            .map(|c| {
                c.iter()
                    .map(|&x| Bar {
                        open: x,
                        high: x * 1.001,
                        low: x * 0.999,
                        close: x,
                        volume: 1000.0,
                    })
                    .collect()
            })
            .collect();
        let tickers = (0..closes.len())
            .map(|i| TickerInfo::lookup(crate::market::DEFAULT_TICKERS[i]))
            .collect();
        PriceSeries::new(tickers, ts, bars).unwrap()
    }

    fn run(series: &PriceSeries, tool: &str, ticker: usize) -> ToolOutput {
        ToolRegistry::finance()
            .run_tool(tool, ticker, MarketView::new(series, series.n_bars()))
            .unwrap()
    }

    #[test]
    fn price_history_echoes_last_bar() {
        let closes: Vec<f64> = (0..50).map(|i| 100.0 + i as f64).collect();
        let s = series_from(&[closes]);
        let out = run(&s, GET_PRICE_HISTORY, 0);
        assert_eq!(out.num("close"), Some(149.0));
        assert_eq!(out.num("high"), Some(149.0 * 1.001));
        assert_eq!(out.num("volume"), Some(1000.0));
    }

    #[test]
    fn data_backed_without_files_is_neutral() {
        let s = series_from(&[vec![100.0; 30]]);
        for t in [GET_FUNDAMENTALS, GET_ANALYST_DATA, GET_OPTIONS_DATA, GET_EARNINGS_DATA] {
            let out = run(&s, t, 0);
            assert_eq!((out.signal, out.confidence), (0.0, 0.0), "{t}");
        }
    }

    #[test]
    fn technicals_on_rising_and_flat() {
        let up: Vec<f64> = (0..30).map(|i| 100.0 + i as f64).collect();
        let out = run(&series_from(&[up]), COMPUTE_TECHNICALS, 0);
        assert_eq!(out.num("rsi"), Some(100.0));
        assert!(out.signal > 0.0);
        let flat = run(&series_from(&[vec![50.0; 30]]), COMPUTE_TECHNICALS, 0);
        assert_eq!(flat.num("rsi"), Some(50.0));
        assert_eq!(flat.num("bb_upper"), flat.num("bb_lower"));
        assert_eq!(flat.signal, 0.0);
        let short = run(&series_from(&[vec![50.0; 20]]), COMPUTE_TECHNICALS, 0);
        assert!(short.is_neutral() && short.text("warning").is_some());
    }

    #[test]
    fn momentum_on_monotone_series() {
        let g = 0.002_f64;
        let exp: Vec<f64> = (0..40).map(|i| 100.0 * (g * i as f64).exp()).collect();
        let out = run(&series_from(&[exp]), COMPUTE_MOMENTUM, 0);
        assert!((out.num("trend_strength").unwrap() - 1.0).abs() < 1e-12);
        assert!((out.num("trend_slope").unwrap() - g).abs() < 1e-12);
        let down: Vec<f64> = (0..40).map(|i| 200.0 - i as f64).collect();
        let out = run(&series_from(&[down]), COMPUTE_MOMENTUM, 0);
        for h in [5, 10, 20] {
            assert!(out.num(&format!("return_{h}")).unwrap() < 0.0);
        }
        assert!(out.signal < 0.0);
    }

    #[test]
    fn var_order_statistic() {
        let mut r = vec![0.01; 19];
        r.push(-0.02);
        let (var, cvar) = var_cvar(&r);
        assert_eq!(var, 0.02);
        assert_eq!(cvar, 0.02);
        assert_eq!(var_cvar(&[0.0; 20]), (0.0, 0.0));
    }

    #[test]
    fn quant_risk_degenerate_and_self_beta() {
        let flat = run(&series_from(&[vec![10.0; 30]]), COMPUTE_QUANT_RISK, 0);
        assert_eq!(flat.num("volatility"), Some(0.0));
        assert_eq!(flat.num("max_drawdown"), Some(0.0));
        assert_eq!(flat.num("var_95"), Some(0.0));
        let wiggle: Vec<f64> = (0..30).map(|i| 100.0 + (i as f64 * 0.7).sin()).collect();
        let s = series_from(&[wiggle.clone(), wiggle]);
        let out = run(&s, COMPUTE_QUANT_RISK, 0);
        assert!((out.num("beta").unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn correlation_identities() {
        let a: Vec<f64> = (0..30).map(|i| 100.0 + (i as f64 * 0.9).sin()).collect();
        let ra = indicators::simple_returns(&a);
        let mut b = vec![100.0];
        for r in &ra {
            let last = *b.last().unwrap();
            b.push(last * (1.0 - r));
        }
        let s = series_from(&[a, b]);
        let out = run(&s, COMPUTE_CORRELATIONS, 0);
        assert!((out.num("corr_AAPL").unwrap() - 1.0).abs() < 1e-12);
        assert!((out.num("corr_NVDA").unwrap() + 1.0).abs() < 1e-12);
    }

    #[test]
    fn dcf_antitone_in_price() {
        let mut prev = f64::INFINITY;
        for last in [80.0, 90.0, 100.0, 110.0, 120.0] {
            let mut c = vec![100.0; 25];
            c.push(last);
            let out = run(&series_from(&[c]), RUN_DCF_MODEL, 0);
            assert!(out.signal <= prev);
            prev = out.signal;
        }
    }

    #[test]
    fn risk_scores_in_range() {
        let c: Vec<f64> = (0..60).map(|i| 100.0 + 3.0 * (i as f64 * 0.3).sin()).collect();
        let out = run(&series_from(&[c.clone(), c.iter().map(|x| x * 1.1).collect()]), SCORE_RISK, 0);
        for k in ["valuation_risk", "financial_risk", "growth_risk", "macro_risk", "technical_risk", "overall_risk"] {
            let v = out.num(k).unwrap();
            assert!((1.0..=10.0).contains(&v), "{k} = {v}");
        }
    }

    #[test]
    fn composite_rules() {
        let all_up: Vec<ToolOutput> = (0..3).map(|_| ToolOutput::new("x", 1.0, 1.0)).collect();
        let c = score_composite_signal(&all_up, 0.2, -0.2);
        assert_eq!(c.signal, 1.0);
        assert_eq!(c.text("label"), Some("BUY"));
        let pair = [ToolOutput::new("a", 1.0, 0.7), ToolOutput::new("b", -1.0, 0.7)];
        let c = score_composite_signal(&pair, 0.2, -0.2);
        assert_eq!(c.signal, 0.0);
        assert_eq!(c.text("label"), Some("HOLD"));
    }
}
