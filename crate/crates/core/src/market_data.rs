//! Daily OHLCV price history in the Yahoo Finance CSV export layout.

use std::fmt::Write as _;

use chrono::NaiveDate;
use thiserror::Error;

/// Exact header line of a Yahoo Finance daily export.
pub const PRICE_CSV_HEADER: &str = "Date,Open,High,Low,Close,Adj Close,Volume";

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MarketDataError {
    #[error("malformed header: expected `{PRICE_CSV_HEADER}`, found `{0}`")]
    MalformedHeader(String),
    #[error("line {line}: {reason}")]
    MalformedRow { line: usize, reason: String },
    #[error("{0}: open/close outside the [low, high] range")]
    OhlcViolation(NaiveDate),
    #[error("duplicate date {0}")]
    DuplicateDate(NaiveDate),
    #[error("no bar between {start} and {end}")]
    EmptyRange { start: NaiveDate, end: NaiveDate },
}

/// One trading day.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PriceBar {
    pub date: NaiveDate,
    pub open: f64,
    pub high: f64,
    pub low: f64,
    pub close: f64,
    pub adj_close: f64,
    pub volume: u64,
}

impl PriceBar {
    /// Checks the OHLC ordering and positivity invariants.
    pub fn validate(&self) -> Result<(), MarketDataError> {
        let prices = [self.open, self.high, self.low, self.close, self.adj_close];
        let ordered = self.low <= self.open.min(self.close)
            && self.high >= self.open.max(self.close)
            && self.low <= self.high;
        if prices.iter().all(|p| p.is_finite() && *p > 0.0) && ordered {
            Ok(())
        } else {
            Err(MarketDataError::OhlcViolation(self.date))
        }
    }
}

/// Bars ordered by strictly increasing date.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct PriceSeries {
    bars: Vec<PriceBar>,
}

impl PriceSeries {
    /// Builds a series from bars in any order, validating every bar.
    pub fn new(mut bars: Vec<PriceBar>) -> Result<Self, MarketDataError> {
        for bar in &bars {
            bar.validate()?;
        }
        bars.sort_by_key(|b| b.date);
        if let Some(w) = bars.windows(2).find(|w| w[0].date == w[1].date) {
            return Err(MarketDataError::DuplicateDate(w[0].date));
        }
        Ok(Self { bars })
    }

    pub fn bars(&self) -> &[PriceBar] {
        &self.bars
    }

    pub fn len(&self) -> usize {
        self.bars.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bars.is_empty()
    }

    pub fn dates(&self) -> Vec<NaiveDate> {
        self.bars.iter().map(|b| b.date).collect()
    }

    pub fn closes(&self) -> Vec<f64> {
        self.bars.iter().map(|b| b.close).collect()
    }

    /// Bars with `start <= date <= end`.
    pub fn slice_by_date(&self, start: NaiveDate, end: NaiveDate) -> Result<Self, MarketDataError> {
        let bars: Vec<_> = self
            .bars
            .iter()
            .filter(|b| b.date >= start && b.date <= end)
            .copied()
            .collect();
        if bars.is_empty() {
            return Err(MarketDataError::EmptyRange { start, end });
        }
        Ok(Self { bars })
    }

    /// Renders the series back into the export layout (LF line endings).
    pub fn to_csv(&self) -> String {
        let mut out = String::with_capacity(64 * (self.bars.len() + 1));
        out.push_str(PRICE_CSV_HEADER);
        out.push('\n');
        for b in &self.bars {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{}",
                b.date.format("%Y-%m-%d"),
                b.open,
                b.high,
                b.low,
                b.close,
                b.adj_close,
                b.volume
            );
        }
        out
    }
}

/// Parses a Yahoo Finance daily CSV export. Rows may appear in any order;
/// the result is sorted by date.
pub fn parse_price_csv(text: &str) -> Result<PriceSeries, MarketDataError> {
    let mut lines = text.lines().enumerate();
    let header = lines
        .next()
        .map(|(_, l)| l.trim_end_matches('\r'))
        .unwrap_or_default();
    let header = header.strip_prefix('\u{feff}').unwrap_or(header);
    if header != PRICE_CSV_HEADER {
        return Err(MarketDataError::MalformedHeader(header.to_string()));
    }

    let mut bars = Vec::new();
    for (idx, raw) in lines {
        let line = raw.trim_end_matches('\r');
        if line.is_empty() {
            continue;
        }
        bars.push(parse_row(line, idx + 1)?);
    }
    PriceSeries::new(bars)
}

fn parse_row(line: &str, line_no: usize) -> Result<PriceBar, MarketDataError> {
    let malformed = |reason: String| MarketDataError::MalformedRow {
        line: line_no,
        reason,
    };
    let fields: Vec<&str> = line.split(',').collect();
    if fields.len() != 7 {
        return Err(malformed(format!("expected 7 fields, found {}", fields.len())));
    }
    let date = NaiveDate::parse_from_str(fields[0], "%Y-%m-%d")
        .map_err(|e| malformed(format!("bad date `{}`: {e}", fields[0])))?;
    if fields[0].len() != 10 {
        return Err(malformed(format!("bad date `{}`", fields[0])));
    }

    let price = |i: usize, name: &str| -> Result<f64, MarketDataError> {
        let s = fields[i];
        if !s.bytes().all(|c| c.is_ascii_digit() || matches!(c, b'.' | b'e' | b'E' | b'-' | b'+')) {
            return Err(malformed(format!("{name}: invalid number `{s}`")));
        }
        let v: f64 = s
            .parse()
            .map_err(|_| malformed(format!("{name}: invalid number `{s}`")))?;
        if !v.is_finite() || v <= 0.0 {
            return Err(malformed(format!("{name}: price must be positive, got `{s}`")));
        }
        Ok(v)
    };

    let volume: u64 = fields[6]
        .parse()
        .map_err(|_| malformed(format!("Volume: invalid count `{}`", fields[6])))?;

    let bar = PriceBar {
        date,
        open: price(1, "Open")?,
        high: price(2, "High")?,
        low: price(3, "Low")?,
        close: price(4, "Close")?,
        adj_close: price(5, "Adj Close")?,
        volume,
    };
    bar.validate()?;
    Ok(bar)
}
