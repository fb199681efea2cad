use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::path::Path;

use chrono::{DateTime, Datelike, NaiveDate, SecondsFormat, Utc, Weekday};

use super::{Bar, MarketError, PriceSeries, TickerInfo};

pub const CSV_HEADER: &str = "timestamp,ticker,open,high,low,close,volume";

pub fn load_csv(path: impl AsRef<Path>) -> Result<PriceSeries, MarketError> {
    let file = std::fs::File::open(path.as_ref())?;
    read_csv(file)
}

/// Parses the long format (one row per bar and ticker) into an aligned series.
pub fn read_csv<R: Read>(reader: R) -> Result<PriceSeries, MarketError> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let mut records = rdr.records();

    let header = match records.next() {
        Some(r) => r?,
        None => {
            return Err(MarketError::Parse {
                line: 1,
                message: "empty file".into(),
            })
        }
    };
    let header_line = header.iter().collect::<Vec<_>>().join(",");
    if header_line != CSV_HEADER {
        return Err(MarketError::Parse {
            line: 1,
            message: format!("expected header `{CSV_HEADER}`, found `{header_line}`"),
        });
    }

    // ticker -> ordered (timestamp, bar); first-seen order of tickers preserved
    let mut order: Vec<String> = Vec::new();
    let mut per_ticker: BTreeMap<String, Vec<(DateTime<Utc>, Bar)>> = BTreeMap::new();

    for (idx, record) in records.enumerate() {
        let line = idx + 2;
        let record = record?;
        let parse_err = |message: String| MarketError::Parse { line, message };
        if record.len() != 7 {
            return Err(parse_err(format!("expected 7 fields, found {}", record.len())));
        }
        let ts = DateTime::parse_from_rfc3339(&record[0])
            .map_err(|e| parse_err(format!("bad timestamp `{}`: {e}", &record[0])))?
            .with_timezone(&Utc);
        let ticker = record[1].to_string();
        if ticker.is_empty() {
            return Err(parse_err("empty ticker".into()));
        }
        let mut nums = [0.0_f64; 5];
        for (k, slot) in nums.iter_mut().enumerate() {
            let raw = &record[k + 2];
            *slot = raw
                .parse::<f64>()
                .map_err(|_| parse_err(format!("bad number `{raw}`")))?;
        }
        let [open, high, low, close, volume] = nums;
        if [open, high, low, close].iter().any(|p| !(p.is_finite() && *p > 0.0)) {
            return Err(parse_err("prices must be positive".into()));
        }
        if !(volume.is_finite() && volume > 0.0) {
            return Err(parse_err("volume must be positive".into()));
        }
        if high < low {
            return Err(parse_err("high below low".into()));
        }
        let rows = per_ticker.entry(ticker.clone()).or_insert_with(|| {
            order.push(ticker.clone());
            Vec::new()
        });
        if let Some((last, _)) = rows.last() {
            if ts <= *last {
                return Err(parse_err(format!(
                    "timestamp {} for {ticker} is duplicate or out of order",
                    &record[0]
                )));
            }
        }
        rows.push((
            ts,
            Bar {
                open,
                high,
                low,
                close,
                volume,
            },
        ));
    }

    if order.is_empty() {
        return Err(MarketError::Parse {
            line: 2,
            message: "no data rows".into(),
        });
    }
    let timestamps: Vec<DateTime<Utc>> = per_ticker[&order[0]].iter().map(|(t, _)| *t).collect();
    for sym in &order[1..] {
        let ts: Vec<DateTime<Utc>> = per_ticker[sym].iter().map(|(t, _)| *t).collect();
        if ts != timestamps {
            return Err(MarketError::Alignment(format!(
                "{sym} timestamps differ from {}",
                order[0]
            )));
        }
    }
    for w in timestamps.windows(2) {
        if missing_weekdays(w[0].date_naive(), w[1].date_naive()) > 1 {
            return Err(MarketError::Gap {
                before: w[0].to_rfc3339(),
                after: w[1].to_rfc3339(),
            });
        }
    }
    let tickers = order.iter().map(|s| TickerInfo::lookup(s)).collect();
    let bars = order
        .iter()
        .map(|s| per_ticker[s].iter().map(|(_, b)| *b).collect())
        .collect();
    PriceSeries::new(tickers, timestamps, bars)
}

/// Weekdays strictly between two dates.
fn missing_weekdays(a: NaiveDate, b: NaiveDate) -> i64 {
    let mut count = 0;
    let mut d = a.succ_opt();
    while let Some(day) = d {
        if day >= b {
            break;
        }
        if !matches!(day.weekday(), Weekday::Sat | Weekday::Sun) {
            count += 1;
        }
        d = day.succ_opt();
    }
    count
}

pub fn write_csv<W: Write>(series: &PriceSeries, mut out: W) -> Result<(), MarketError> {
    writeln!(out, "{CSV_HEADER}")?;
    for (t, ts) in series.timestamps.iter().enumerate() {
        let stamp = ts.to_rfc3339_opts(SecondsFormat::Secs, true);
        for (i, info) in series.tickers.iter().enumerate() {
            let b = &series.bars[i][t];
            writeln!(
                out,
                "{stamp},{},{},{},{},{},{}",
                info.symbol, b.open, b.high, b.low, b.close, b.volume
            )?;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    const GOOD: &str = "timestamp,ticker,open,high,low,close,volume
2025-01-06T14:30:00Z,AAPL,100,101,99,100.5,1000
2025-01-06T14:30:00Z,JPM,50,51,49,50.2,2000
2025-01-06T15:30:00Z,AAPL,100.5,102,100,101,1100
2025-01-06T15:30:00Z,JPM,50.2,50.5,49.5,50,1900
";

    #[test]
    fn parses_two_tickers() {
        let s = read_csv(GOOD.as_bytes()).unwrap();
        assert_eq!(s.n_tickers(), 2);
        assert_eq!(s.n_bars(), 2);
        assert_eq!(s.tickers[1].symbol, "JPM");
        assert_eq!(s.tickers[1].sector, "Finance");
        assert_eq!(s.bars[0][1].close, 101.0);
    }

    #[test]
    fn negative_close_rejected_with_line() {
        let bad = GOOD.replace("100.5,1000", "-100.5,1000");
        match read_csv(bad.as_bytes()) {
            Err(MarketError::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn duplicate_timestamp_rejected() {
        let bad = GOOD.replace("2025-01-06T15:30:00Z,AAPL", "2025-01-06T14:30:00Z,AAPL");
        assert!(matches!(read_csv(bad.as_bytes()), Err(MarketError::Parse { line: 4, .. })));
    }

    #[test]
    fn misaligned_rejected() {
        let bad = GOOD.replace("2025-01-06T15:30:00Z,JPM", "2025-01-06T16:30:00Z,JPM");
        assert!(matches!(read_csv(bad.as_bytes()), Err(MarketError::Alignment(_))));
    }

    #[test]
    fn wrong_header_rejected() {
        let bad = GOOD.replacen("timestamp,ticker", "time,ticker", 1);
        assert!(matches!(read_csv(bad.as_bytes()), Err(MarketError::Parse { line: 1, .. })));
    }

    #[test]
    fn weekend_is_not_a_gap_but_a_missing_week_is() {
        let fri_mon = "timestamp,ticker,open,high,low,close,volume
2025-01-10T17:30:00Z,AAPL,1,1,1,1,1
2025-01-13T14:30:00Z,AAPL,1,1,1,1,1
";
        assert!(read_csv(fri_mon.as_bytes()).is_ok());
        let gap = "timestamp,ticker,open,high,low,close,volume
2025-01-06T17:30:00Z,AAPL,1,1,1,1,1
2025-01-09T14:30:00Z,AAPL,1,1,1,1,1
";
        assert!(matches!(read_csv(gap.as_bytes()), Err(MarketError::Gap { .. })));
    }

    #[test]
    fn write_then_read_preserves_series() {
        let s = read_csv(GOOD.as_bytes()).unwrap();
        let mut buf = Vec::new();
        write_csv(&s, &mut buf).unwrap();
        assert_eq!(read_csv(buf.as_slice()).unwrap(), s);
    }
}
