use chrono::{DateTime, Datelike, Duration, TimeZone, Utc, Weekday};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use super::series::DEFAULT_TICKERS;
use super::{Bar, MarketError, PriceSeries, Regime, TickerInfo};

/// One contiguous block of bars sharing drift, volatility and return dynamics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegimeSegment {
    pub regime: Regime,
    pub bars: usize,
    /// Common per-bar log drift.
    pub drift: f64,
    /// Per-bar volatility of the common market factor.
    pub market_vol: f64,
    /// Multiplier on every ticker's idiosyncratic volatility.
    #[serde(default = "one")]
    pub idio_vol_scale: f64,
    /// AR(1) coefficient of idiosyncratic returns; negative values make
    /// short-horizon trends reverse.
    #[serde(default)]
    pub autocorr: f64,
    /// Std-dev of the per-ticker drift drawn at the start of the segment.
    #[serde(default)]
    pub dispersion: f64,
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthTicker {
    pub symbol: String,
    #[serde(default = "one")]
    pub beta: f64,
    pub idio_vol: f64,
    #[serde(default = "default_price")]
    pub initial_price: f64,
}

fn default_price() -> f64 {
    100.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub tickers: Vec<SynthTicker>,
    pub segments: Vec<RegimeSegment>,
    /// First bar timestamp (RFC 3339, UTC).
    #[serde(default = "default_start")]
    pub start: String,
    #[serde(default = "default_bars_per_day")]
    pub bars_per_day: usize,
}

fn default_start() -> String {
    "2025-01-06T14:30:00Z".to_string()
}

fn default_bars_per_day() -> usize {
    4
}

fn seg(regime: Regime, bars: usize) -> RegimeSegment {
    let (drift, autocorr, dispersion) = match regime {
        Regime::Bull => (0.0008, 0.25, 0.0015),
        Regime::Bear => (-0.0008, 0.25, 0.0015),
        Regime::Flat | Regime::Mixed => (0.0, -0.45, 0.0),
    };
    RegimeSegment {
        regime,
        bars,
        drift,
        market_vol: 0.004,
        idio_vol_scale: 1.0,
        autocorr,
        dispersion,
    }
}

impl SynthConfig {
    fn default_tickers() -> Vec<SynthTicker> {
        DEFAULT_TICKERS
            .iter()
            .enumerate()
            .map(|(i, s)| SynthTicker {
                symbol: s.to_string(),
                beta: 0.8 + 0.05 * i as f64,
                idio_vol: 0.004 + 0.0004 * i as f64,
                initial_price: 50.0 + 25.0 * i as f64,
            })
            .collect()
    }

    /// 208 hourly bars over ten tickers: seven training weeks (3 bull, 2 bear,
    /// 2 flat), two validation weeks and a bear-to-bull test fortnight.
    pub fn standard() -> Self {
        use Regime::*;
        let plan = [
            (Bull, 20),
            (Bear, 20),
            (Flat, 20),
            (Bull, 20),
            (Bear, 20),
            (Flat, 20),
            (Bull, 20),
            (Flat, 20),
            (Bull, 20),
            (Bear, 12),
            (Bull, 16),
        ];
        Self {
            tickers: Self::default_tickers(),
            segments: plan.iter().map(|&(r, n)| seg(r, n)).collect(),
            start: default_start(),
            bars_per_day: 4,
        }
    }

    /// Market with planted structure: trending weeks where short-horizon
    /// signals persist and choppy weeks where they reverse. Tool reliability
    /// therefore flips with the regime, and the regime persists long enough
    /// for slow-window diagnosis to be informative.
    pub fn planted() -> Self {
        use Regime::*;
        let plan = [
            (Bull, 20),
            (Flat, 20),
            (Bear, 20),
            (Flat, 20),
            (Bull, 20),
            (Flat, 40),
            (Flat, 40),
            (Flat, 28),
        ];
        let mut segments: Vec<RegimeSegment> = plan.iter().map(|&(r, n)| seg(r, n)).collect();
        for s in &mut segments {
            if s.regime == Flat {
                s.autocorr = -0.6;
                s.idio_vol_scale = 1.5;
            } else {
                s.autocorr = 0.4;
            }
        }
        Self {
            tickers: Self::default_tickers(),
            segments,
            start: default_start(),
            bars_per_day: 4,
        }
    }

    pub fn total_bars(&self) -> usize {
        self.segments.iter().map(|s| s.bars).sum()
    }

    pub fn validate(&self) -> Result<(), MarketError> {
        if self.tickers.is_empty() {
            return Err(MarketError::Invalid("synthetic config has no tickers".into()));
        }
        if self.total_bars() == 0 {
            return Err(MarketError::Invalid("synthetic config has no bars".into()));
        }
        if self.bars_per_day == 0 || self.bars_per_day > 8 {
            return Err(MarketError::Invalid("bars_per_day must be in 1..=8".into()));
        }
        for s in &self.segments {
            let finite = [s.drift, s.market_vol, s.idio_vol_scale, s.autocorr, s.dispersion]
                .iter()
                .all(|v| v.is_finite());
            if !finite || s.market_vol < 0.0 || s.idio_vol_scale < 0.0 || s.dispersion < 0.0 {
                return Err(MarketError::Invalid("invalid regime segment".into()));
            }
            if s.autocorr.abs() >= 1.0 {
                return Err(MarketError::Invalid("autocorr must lie in (-1, 1)".into()));
            }
        }
        for t in &self.tickers {
            if !(t.idio_vol >= 0.0 && t.initial_price > 0.0 && t.beta.is_finite()) {
                return Err(MarketError::Invalid(format!("invalid ticker {}", t.symbol)));
            }
        }
        DateTime::parse_from_rfc3339(&self.start)
            .map_err(|e| MarketError::Invalid(format!("bad start timestamp: {e}")))?;
        Ok(())
    }
}

fn trading_timestamps(start: DateTime<Utc>, n: usize, per_day: usize) -> Vec<DateTime<Utc>> {
    let mut out = Vec::with_capacity(n);
    let mut day = start.date_naive();
    let first_time = start.time();
    while out.len() < n {
        if !matches!(day.weekday(), Weekday::Sat | Weekday::Sun) {
            for k in 0..per_day {
                if out.len() == n {
                    break;
                }
                let naive = day.and_time(first_time) + Duration::hours(k as i64);
                out.push(Utc.from_utc_datetime(&naive));
            }
        }
        day = day.succ_opt().expect("date in range");
    }
    out
}

/// Geometric random walk with a market factor and AR(1) idiosyncratic
/// returns, segment by segment. Deterministic per seed.
pub fn synth_generate(config: &SynthConfig, seed: u64) -> Result<PriceSeries, MarketError> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = config.total_bars();
    let start = DateTime::parse_from_rfc3339(&config.start)
        .expect("validated")
        .with_timezone(&Utc);
    let timestamps = trading_timestamps(start, n, config.bars_per_day);

    let k = config.tickers.len();
    let mut bars: Vec<Vec<Bar>> = vec![Vec::with_capacity(n); k];
    let mut regimes = Vec::with_capacity(n);
    let mut last_close: Vec<f64> = config.tickers.iter().map(|t| t.initial_price).collect();
    let mut idio_state = vec![0.0_f64; k];

    for segment in &config.segments {
        let ticker_drift: Vec<f64> = if segment.dispersion > 0.0 {
            let d = Normal::new(0.0, segment.dispersion).expect("dispersion >= 0");
            (0..k).map(|_| d.sample(&mut rng)).collect()
        } else {
            vec![0.0; k]
        };
        for _ in 0..segment.bars {
            let z_market: f64 = StandardNormal.sample(&mut rng);
            let market = segment.market_vol * z_market;
            for (i, tk) in config.tickers.iter().enumerate() {
                let eps: f64 = StandardNormal.sample(&mut rng);
                let idio_vol = tk.idio_vol * segment.idio_vol_scale;
                idio_state[i] = segment.autocorr * idio_state[i] + idio_vol * eps;
                let log_ret = segment.drift + ticker_drift[i] + tk.beta * market + idio_state[i];
                let open = last_close[i];
                let close = open * log_ret.exp();
                let wick: f64 = rng.random::<f64>() * idio_vol.max(1e-4) * 0.5;
                let high = open.max(close) * (1.0 + wick);
                let low = open.min(close) * (1.0 - wick).max(0.5);
                let vol_noise: f64 = StandardNormal.sample(&mut rng);
                let volume = (1.0e6 * (1.0 + 20.0 * log_ret.abs()) * (0.2 * vol_noise).exp()).round().max(1.0);
                bars[i].push(Bar {
                    open,
                    high,
                    low,
                    close,
                    volume,
                });
                last_close[i] = close;
            }
            regimes.push(segment.regime);
        }
    }

    let tickers = config
        .tickers
        .iter()
        .map(|t| TickerInfo::lookup(&t.symbol))
        .collect();
    let mut series = PriceSeries::new(tickers, timestamps, bars)?;
    series.regimes = Some(regimes);
    Ok(series)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn single(segment: RegimeSegment, idio_vol: f64) -> SynthConfig {
        SynthConfig {
            tickers: vec![SynthTicker {
                symbol: "AAPL".into(),
                beta: 1.0,
                idio_vol,
                initial_price: 100.0,
            }],
            segments: vec![segment],
            start: default_start(),
            bars_per_day: 4,
        }
    }

    #[test]
    fn zero_vol_positive_drift_is_increasing() {
        let cfg = single(
            RegimeSegment {
                regime: Regime::Bull,
                bars: 50,
                drift: 0.001,
                market_vol: 0.0,
                idio_vol_scale: 1.0,
                autocorr: 0.0,
                dispersion: 0.0,
            },
            0.0,
        );
        let s = synth_generate(&cfg, 1).unwrap();
        let closes = s.closes(0);
        assert!(closes.windows(2).all(|w| w[1] > w[0]));
    }

    #[test]
    fn same_seed_same_series() {
        let cfg = SynthConfig::standard();
        assert_eq!(synth_generate(&cfg, 42).unwrap(), synth_generate(&cfg, 42).unwrap());
        assert_ne!(synth_generate(&cfg, 42).unwrap(), synth_generate(&cfg, 43).unwrap());
    }

    #[test]
    fn mean_log_return_matches_drift() {
        let mu = 0.0005;
        let sigma = 0.01;
        let cfg = single(
            RegimeSegment {
                regime: Regime::Bull,
                bars: 10_000,
                drift: mu,
                market_vol: sigma,
                idio_vol_scale: 1.0,
                autocorr: 0.0,
                dispersion: 0.0,
            },
            0.0,
        );
        let s = synth_generate(&cfg, 5).unwrap();
        let closes = s.closes(0);
        let mut logs = vec![(closes[0] / 100.0).ln()];
        logs.extend(closes.windows(2).map(|w| (w[1] / w[0]).ln()));
        let mean = logs.iter().sum::<f64>() / logs.len() as f64;
        let se = sigma / (logs.len() as f64).sqrt();
        assert!((mean - mu).abs() < 3.0 * se, "mean {mean} vs {mu} (se {se})");
    }

    #[test]
    fn presets_have_208_bars() {
        assert_eq!(SynthConfig::standard().total_bars(), 208);
        assert_eq!(SynthConfig::planted().total_bars(), 208);
        let s = synth_generate(&SynthConfig::standard(), 0).unwrap();
        assert_eq!(s.n_tickers(), 10);
        assert!(s.validate().is_ok());
    }

    #[test]
    fn timestamps_skip_weekends() {
        let ts = trading_timestamps(
            DateTime::parse_from_rfc3339("2025-01-10T14:30:00Z").unwrap().with_timezone(&Utc),
            8,
            4,
        );
        assert_eq!(ts[3].weekday(), Weekday::Fri);
        assert_eq!(ts[4].weekday(), Weekday::Mon);
    }
}
