//! Post records: JSON-lines ingest, per-day aggregation and alignment to
//! the trading calendar.

use std::collections::{BTreeMap, HashSet};

use chrono::{DateTime, NaiveDate, NaiveDateTime, Utc};
use serde::Serialize;
use serde_json::{Map, Value};
use thiserror::Error;

pub const MAX_TEXT_CHARS: usize = 10_000;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TweetStoreError {
    #[error("line {line}: {reason}")]
    MalformedLine { line: usize, reason: String },
    #[error("line {line}: missing field `{field}`")]
    MissingField { line: usize, field: &'static str },
    #[error("line {line}: `{field}` must be non-negative")]
    NegativeCount { line: usize, field: &'static str },
    #[error("{records} records but {scores} scores")]
    LengthMismatch { records: usize, scores: usize },
}

/// One post with the attributes used as features.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize)]
pub struct TweetRecord {
    #[serde(serialize_with = "serialize_timestamp")]
    pub created_at: DateTime<Utc>,
    pub text: String,
    pub favorite_count: u64,
    pub follower_count: u64,
    pub retweet_count: u64,
    pub verified: bool,
}

fn serialize_timestamp<S: serde::Serializer>(t: &DateTime<Utc>, s: S) -> Result<S::Ok, S::Error> {
    s.serialize_str(&t.to_rfc3339_opts(chrono::SecondsFormat::Secs, true))
}

impl TweetRecord {
    pub fn date(&self) -> NaiveDate {
        self.created_at.date_naive()
    }

    /// One JSON object, no trailing newline.
    pub fn to_json_line(&self) -> String {
        serde_json::to_string(self).expect("record serializes")
    }
}

fn parse_timestamp(s: &str) -> Option<DateTime<Utc>> {
    if let Ok(t) = DateTime::parse_from_rfc3339(s) {
        return Some(t.with_timezone(&Utc));
    }
    NaiveDateTime::parse_from_str(s, "%Y-%m-%dT%H:%M:%S")
        .ok()
        .map(|t| t.and_utc())
}

fn parse_record(obj: &Map<String, Value>, line: usize) -> Result<TweetRecord, TweetStoreError> {
    let field = |name: &'static str| {
        obj.get(name)
            .filter(|v| !v.is_null())
            .ok_or(TweetStoreError::MissingField { line, field: name })
    };
    let malformed = |reason: String| TweetStoreError::MalformedLine { line, reason };
    let count = |name: &'static str| -> Result<u64, TweetStoreError> {
        let v = field(name)?;
        if let Some(n) = v.as_u64() {
            Ok(n)
        } else if v.as_i64().is_some_and(|n| n < 0) || v.as_f64().is_some_and(|n| n < 0.0) {
            Err(TweetStoreError::NegativeCount { line, field: name })
        } else {
            Err(malformed(format!("`{name}` is not a non-negative integer")))
        }
    };

    let created = field("created_at")?;
    let created_at = created
        .as_str()
        .and_then(parse_timestamp)
        .ok_or_else(|| malformed(format!("`created_at` is not an ISO-8601 timestamp: {created}")))?;
    let text = field("text")?
        .as_str()
        .ok_or_else(|| malformed("`text` is not a string".into()))?;
    if text.trim().is_empty() {
        return Err(malformed("`text` is empty".into()));
    }
    if text.chars().count() > MAX_TEXT_CHARS {
        return Err(malformed(format!("`text` exceeds {MAX_TEXT_CHARS} characters")));
    }
    let verified = field("verified")?
        .as_bool()
        .ok_or_else(|| malformed("`verified` is not a boolean".into()))?;

    Ok(TweetRecord {
        created_at,
        text: text.to_string(),
        favorite_count: count("favorite_count")?,
        follower_count: count("follower_count")?,
        retweet_count: count("retweet_count")?,
        verified,
    })
}

/// Parses one JSON object per line. Blank lines are skipped and unknown
/// fields ignored.
pub fn parse_tweet_jsonl(text: &str) -> Result<Vec<TweetRecord>, TweetStoreError> {
    let mut out = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let raw = raw.trim();
        if raw.is_empty() {
            continue;
        }
        let value: Value = serde_json::from_str(raw).map_err(|e| TweetStoreError::MalformedLine {
            line,
            reason: e.to_string(),
        })?;
        let obj = value.as_object().ok_or(TweetStoreError::MalformedLine {
            line,
            reason: "not a JSON object".into(),
        })?;
        out.push(parse_record(obj, line)?);
    }
    Ok(out)
}

/// Drops records identical in every field to an earlier one.
pub fn dedup_exact(records: Vec<TweetRecord>) -> Vec<TweetRecord> {
    let mut seen = HashSet::with_capacity(records.len());
    records
        .into_iter()
        .filter(|r| seen.insert(r.clone()))
        .collect()
}

/// Reduction of one day's posts.
#[derive(Debug, Clone, PartialEq)]
pub struct DailyAggregate {
    pub date: NaiveDate,
    pub tweet_count: u64,
    pub mean_compound: f64,
    pub sum_favorites: u64,
    pub sum_followers: u64,
    pub sum_retweets: u64,
    pub verified_ratio: f64,
}

impl DailyAggregate {
    pub fn empty(date: NaiveDate) -> Self {
        Self {
            date,
            tweet_count: 0,
            mean_compound: 0.0,
            sum_favorites: 0,
            sum_followers: 0,
            sum_retweets: 0,
            verified_ratio: 0.0,
        }
    }
}

/// Groups records by UTC calendar date. `compounds[i]` is the sentiment of
/// `records[i]`; the daily sentiment is their unweighted mean.
pub fn aggregate_daily(
    records: &[TweetRecord],
    compounds: &[f64],
) -> Result<Vec<DailyAggregate>, TweetStoreError> {
    if records.len() != compounds.len() {
        return Err(TweetStoreError::LengthMismatch {
            records: records.len(),
            scores: compounds.len(),
        });
    }
    #[derive(Default)]
    struct Acc {
        count: u64,
        compound: f64,
        fav: u64,
        fol: u64,
        rt: u64,
        verified: u64,
    }
    let mut days: BTreeMap<NaiveDate, Acc> = BTreeMap::new();
    for (r, &c) in records.iter().zip(compounds) {
        let a = days.entry(r.date()).or_default();
        a.count += 1;
        a.compound += c;
        a.fav += r.favorite_count;
        a.fol += r.follower_count;
        a.rt += r.retweet_count;
        a.verified += u64::from(r.verified);
    }
    Ok(days
        .into_iter()
        .map(|(date, a)| DailyAggregate {
            date,
            tweet_count: a.count,
            mean_compound: (a.compound / a.count as f64).clamp(-1.0, 1.0),
            sum_favorites: a.fav,
            sum_followers: a.fol,
            sum_retweets: a.rt,
            verified_ratio: a.verified as f64 / a.count as f64,
        })
        .collect())
}

/// A trading day's aggregate; `missing` marks days where no post was found.
#[derive(Debug, Clone, PartialEq)]
pub struct AlignedAggregate {
    pub aggregate: DailyAggregate,
    pub missing: bool,
}

/// Output of [`align_to_trading_days`].
#[derive(Debug, Clone, PartialEq)]
pub struct Alignment {
    pub days: Vec<AlignedAggregate>,
    /// Posts dated after the last trading date, kept so no record is lost.
    pub overflow: Option<DailyAggregate>,
}

impl Alignment {
    pub fn aggregates(&self) -> Vec<DailyAggregate> {
        self.days.iter().map(|d| d.aggregate.clone()).collect()
    }
}

fn merge(date: NaiveDate, parts: &[&DailyAggregate]) -> DailyAggregate {
    match parts {
        [] => DailyAggregate::empty(date),
        [one] => DailyAggregate {
            date,
            ..(*one).clone()
        },
        _ => {
            let count: u64 = parts.iter().map(|a| a.tweet_count).sum();
            let weighted = |f: fn(&DailyAggregate) -> f64| {
                if count == 0 {
                    0.0
                } else {
                    parts.iter().map(|a| f(a) * a.tweet_count as f64).sum::<f64>() / count as f64
                }
            };
            DailyAggregate {
                date,
                tweet_count: count,
                mean_compound: weighted(|a| a.mean_compound).clamp(-1.0, 1.0),
                sum_favorites: parts.iter().map(|a| a.sum_favorites).sum(),
                sum_followers: parts.iter().map(|a| a.sum_followers).sum(),
                sum_retweets: parts.iter().map(|a| a.sum_retweets).sum(),
                verified_ratio: weighted(|a| a.verified_ratio).clamp(0.0, 1.0),
            }
        }
    }
}

/// Folds every aggregate into the first trading date on or after it, so
/// weekend and holiday posts count towards the next session.
///
/// `trading_dates` must be strictly increasing.
pub fn align_to_trading_days(aggs: &[DailyAggregate], trading_dates: &[NaiveDate]) -> Alignment {
    debug_assert!(trading_dates.windows(2).all(|w| w[0] < w[1]));
    let mut buckets: Vec<Vec<&DailyAggregate>> = vec![Vec::new(); trading_dates.len()];
    let mut overflow = Vec::new();
    for a in aggs {
        match trading_dates.partition_point(|d| *d < a.date) {
            i if i < trading_dates.len() => buckets[i].push(a),
            _ => overflow.push(a),
        }
    }
    let days = trading_dates
        .iter()
        .zip(&buckets)
        .map(|(&date, parts)| {
            let aggregate = merge(date, parts);
            AlignedAggregate {
                missing: aggregate.tweet_count == 0,
                aggregate,
            }
        })
        .collect();
    let overflow = overflow
        .last()
        .map(|last| merge(last.date, &overflow));
    Alignment { days, overflow }
}
