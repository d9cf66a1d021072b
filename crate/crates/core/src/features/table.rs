use std::fmt::Write as _;

use chrono::NaiveDate;

use super::FeatureError;
use crate::indicators::{self, IndicatorColumn, IndicatorError};
use crate::market_data::PriceSeries;
use crate::tweet_store::DailyAggregate;

pub const SENTIMENT_COLUMN: &str = "mean_compound";
pub const ATTRIBUTE_COLUMNS: [&str; 5] = [
    "tweet_count",
    "sum_favorites",
    "sum_followers",
    "sum_retweets",
    "verified_ratio",
];
pub const TARGET_COLUMN: &str = "target";

/// Which network input a column feeds.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Branch {
    Price,
    Tweet,
}

impl Branch {
    fn of(name: &str) -> Self {
        if name == SENTIMENT_COLUMN || ATTRIBUTE_COLUMNS.contains(&name) {
            Branch::Tweet
        } else {
            Branch::Price
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureColumn {
    pub name: String,
    pub branch: Branch,
    pub values: Vec<f64>,
}

/// Aligned per-trading-day features. `target[t]` is the close of the
/// trading day after `dates[t]`.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureTable {
    pub dates: Vec<NaiveDate>,
    pub columns: Vec<FeatureColumn>,
    pub target: Vec<f64>,
}

/// Tweet-derived columns to include.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TweetColumns {
    None,
    SentimentOnly,
    All,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IndicatorConfig {
    pub sma_window: usize,
    pub bollinger_window: usize,
    pub bollinger_width: f64,
}

impl Default for IndicatorConfig {
    fn default() -> Self {
        Self {
            sma_window: 5,
            bollinger_window: indicators::DEFAULT_BOLLINGER_WINDOW,
            bollinger_width: indicators::DEFAULT_BOLLINGER_WIDTH,
        }
    }
}

/// SMA plus the three Bollinger columns.
pub fn indicator_columns(
    prices: &PriceSeries,
    config: &IndicatorConfig,
) -> Result<Vec<IndicatorColumn>, IndicatorError> {
    let sma = indicators::sma(prices, config.sma_window)?;
    let bands = indicators::bollinger(prices, config.bollinger_window, config.bollinger_width)?;
    Ok(vec![sma, bands.mid, bands.upper, bands.lower])
}

impl FeatureTable {
    pub fn rows(&self) -> usize {
        self.dates.len()
    }

    pub fn column(&self, name: &str) -> Option<&FeatureColumn> {
        self.columns.iter().find(|c| c.name == name)
    }

    pub fn column_names(&self) -> Vec<&str> {
        self.columns.iter().map(|c| c.name.as_str()).collect()
    }

    pub fn branch_indices(&self, branch: Branch) -> Vec<usize> {
        self.columns
            .iter()
            .enumerate()
            .filter(|(_, c)| c.branch == branch)
            .map(|(i, _)| i)
            .collect()
    }

    /// CSV with a `date` column, the feature columns and `target`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("date");
        for c in &self.columns {
            out.push(',');
            out.push_str(&c.name);
        }
        let _ = writeln!(out, ",{TARGET_COLUMN}");
        for r in 0..self.rows() {
            let _ = write!(out, "{}", self.dates[r].format("%Y-%m-%d"));
            for c in &self.columns {
                let _ = write!(out, ",{}", c.values[r]);
            }
            let _ = writeln!(out, ",{}", self.target[r]);
        }
        out
    }

    pub fn from_csv(text: &str) -> Result<Self, FeatureError> {
        let malformed = |line: usize, reason: String| FeatureError::Malformed { line, reason };
        let mut lines = text.lines();
        let header: Vec<&str> = lines
            .next()
            .ok_or_else(|| malformed(1, "missing header".into()))?
            .trim_end_matches('\r')
            .split(',')
            .collect();
        if header.len() < 2 || header[0] != "date" || header[header.len() - 1] != TARGET_COLUMN {
            return Err(malformed(1, "header must be `date,...,target`".into()));
        }
        let names = &header[1..header.len() - 1];
        let mut table = FeatureTable {
            dates: Vec::new(),
            columns: names
                .iter()
                .map(|n| FeatureColumn {
                    name: n.to_string(),
                    branch: Branch::of(n),
                    values: Vec::new(),
                })
                .collect(),
            target: Vec::new(),
        };
        for (i, line) in lines.enumerate() {
            let line_no = i + 2;
            let line = line.trim_end_matches('\r');
            if line.is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() != header.len() {
                return Err(malformed(line_no, format!("expected {} fields", header.len())));
            }
            let date = NaiveDate::parse_from_str(fields[0], "%Y-%m-%d")
                .map_err(|e| malformed(line_no, format!("bad date: {e}")))?;
            let num = |s: &str| {
                s.parse::<f64>()
                    .ok()
                    .filter(|v| v.is_finite())
                    .ok_or_else(|| malformed(line_no, format!("bad number `{s}`")))
            };
            table.dates.push(date);
            for (c, f) in table.columns.iter_mut().zip(&fields[1..]) {
                c.values.push(num(f)?);
            }
            // Unknown targets (the latest rows) are written as NaN.
            let t = fields[fields.len() - 1];
            table.target.push(if t == "NaN" { f64::NAN } else { num(t)? });
        }
        Ok(table)
    }
}

struct Rows {
    dates: Vec<NaiveDate>,
    columns: Vec<FeatureColumn>,
    closes: Vec<f64>,
    first: usize,
}

fn build_rows(
    prices: &PriceSeries,
    indicators: &[IndicatorColumn],
    tweets: Option<&[DailyAggregate]>,
    tweet_columns: TweetColumns,
) -> Result<Rows, FeatureError> {
    let n = prices.len();
    let dates = prices.dates();
    for ind in indicators {
        if ind.len() != n {
            return Err(FeatureError::CalendarMismatch(format!(
                "indicator `{}` has {} values for {n} trading days",
                ind.name,
                ind.len()
            )));
        }
    }
    let tweets = match (tweet_columns, tweets) {
        (TweetColumns::None, _) => None,
        (_, None) => {
            return Err(FeatureError::CalendarMismatch(
                "tweet columns requested without aggregates".into(),
            ))
        }
        (_, Some(aggs)) => {
            if aggs.len() != n || aggs.iter().zip(&dates).any(|(a, d)| a.date != *d) {
                return Err(FeatureError::CalendarMismatch(
                    "aggregates are not aligned to the price dates".into(),
                ));
            }
            Some(aggs)
        }
    };

    // Tweets lag by one trading day, so row 0 never has tweet features.
    let warmup = indicators.iter().map(|c| c.warmup).max().unwrap_or(0).max(1);
    let bars = prices.bars();
    let mut columns = Vec::new();
    let mut push = |name: &str, values: Vec<f64>| {
        columns.push(FeatureColumn {
            name: name.to_string(),
            branch: Branch::of(name),
            values,
        })
    };
    push("open", bars.iter().map(|b| b.open).collect());
    push("high", bars.iter().map(|b| b.high).collect());
    push("low", bars.iter().map(|b| b.low).collect());
    push("close", bars.iter().map(|b| b.close).collect());
    push("volume", bars.iter().map(|b| b.volume as f64).collect());
    for ind in indicators {
        push(
            &ind.name,
            ind.values.iter().map(|v| v.unwrap_or(f64::NAN)).collect(),
        );
    }
    if let Some(aggs) = tweets {
        let lagged = |f: fn(&DailyAggregate) -> f64| -> Vec<f64> {
            (0..n).map(|t| if t == 0 { f64::NAN } else { f(&aggs[t - 1]) }).collect()
        };
        push(SENTIMENT_COLUMN, lagged(|a| a.mean_compound));
        if tweet_columns == TweetColumns::All {
            push(ATTRIBUTE_COLUMNS[0], lagged(|a| a.tweet_count as f64));
            push(ATTRIBUTE_COLUMNS[1], lagged(|a| a.sum_favorites as f64));
            push(ATTRIBUTE_COLUMNS[2], lagged(|a| a.sum_followers as f64));
            push(ATTRIBUTE_COLUMNS[3], lagged(|a| a.sum_retweets as f64));
            push(ATTRIBUTE_COLUMNS[4], lagged(|a| a.verified_ratio));
        }
    }
    Ok(Rows {
        dates,
        columns,
        closes: prices.closes(),
        first: warmup.min(n),
    })
}

/// Builds the feature table. Leading rows with an undefined indicator are
/// dropped, and so is the last day, which has no next close.
pub fn assemble(
    prices: &PriceSeries,
    indicators: &[IndicatorColumn],
    tweets: Option<&[DailyAggregate]>,
    tweet_columns: TweetColumns,
) -> Result<FeatureTable, FeatureError> {
    let rows = build_rows(prices, indicators, tweets, tweet_columns)?;
    let n = rows.dates.len();
    let end = n.saturating_sub(1);
    if end <= rows.first {
        return Err(FeatureError::TooFewRows {
            rows: 0,
            needed: 1,
        });
    }
    let range = rows.first..end;
    Ok(FeatureTable {
        dates: rows.dates[range.clone()].to_vec(),
        columns: rows
            .columns
            .into_iter()
            .map(|c| FeatureColumn {
                values: c.values[range.clone()].to_vec(),
                ..c
            })
            .collect(),
        target: rows.closes[range.start + 1..=range.end].to_vec(),
    })
}

/// The last `window` feature rows, including the final day that
/// [`assemble`] drops. `target` holds NaN; used for out-of-sample prediction.
pub fn latest_rows(
    prices: &PriceSeries,
    indicators: &[IndicatorColumn],
    tweets: Option<&[DailyAggregate]>,
    tweet_columns: TweetColumns,
    window: usize,
) -> Result<FeatureTable, FeatureError> {
    let rows = build_rows(prices, indicators, tweets, tweet_columns)?;
    let n = rows.dates.len();
    if n < rows.first + window || window == 0 {
        return Err(FeatureError::TooFewRows {
            rows: n.saturating_sub(rows.first),
            needed: window.max(1),
        });
    }
    let range = n - window..n;
    Ok(FeatureTable {
        dates: rows.dates[range.clone()].to_vec(),
        columns: rows
            .columns
            .into_iter()
            .map(|c| FeatureColumn {
                values: c.values[range.clone()].to_vec(),
                ..c
            })
            .collect(),
        target: vec![f64::NAN; window],
    })
}
