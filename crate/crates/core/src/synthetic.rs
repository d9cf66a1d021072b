//! Seeded demo market where the next close follows smoothed, lagged post
//! sentiment. Used by tests, benchmarks and the README walkthrough.
//!
//! With `e[d] = ALPHA * s[d] + (1 - ALPHA) * e[d - 1]` over the realised
//! daily mean compound `s`, the close on trading day `d` is
//! `100 + 20 * e[d - 2] + noise`.

use chrono::{Datelike, Days, NaiveDate, TimeZone, Utc, Weekday};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::market_data::PRICE_CSV_HEADER;
use crate::sentiment::Lexicon;
use crate::tweet_store::TweetRecord;

pub const ALPHA: f64 = 0.5;
pub const SENTIMENT_GAIN: f64 = 20.0;
pub const BASE_PRICE: f64 = 100.0;

const PHRASES: [&str; 16] = [
    "terrible crash, awful losses and a horrible outlook",
    "this stock is a disaster, sell now",
    "bad quarter, weak demand",
    "worried about the weak guidance",
    "disappointing delivery numbers",
    "not impressed by the call",
    "some concern about margins",
    "shares moved today",
    "the stock traded sideways",
    "decent numbers this quarter",
    "nice bounce today",
    "good delivery numbers",
    "strong demand and solid growth",
    "great earnings, very bullish",
    "amazing quarter, love this company",
    "incredible results, excellent growth and a wonderful outlook",
];

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticMarket {
    pub dates: Vec<NaiveDate>,
    /// Realised mean compound of each trading day's posts.
    pub daily_sentiment: Vec<f64>,
    pub prices_csv: String,
    pub tweets: Vec<TweetRecord>,
}

impl SyntheticMarket {
    pub fn tweets_jsonl(&self) -> String {
        let mut out = String::new();
        for r in &self.tweets {
            out.push_str(&r.to_json_line());
            out.push('\n');
        }
        out
    }
}

/// Weekdays starting on the first Monday of 2020.
pub fn weekdays(n: usize) -> Vec<NaiveDate> {
    let mut d = NaiveDate::from_ymd_opt(2020, 1, 6).expect("valid date");
    let mut out = Vec::with_capacity(n);
    while out.len() < n {
        if !matches!(d.weekday(), Weekday::Sat | Weekday::Sun) {
            out.push(d);
        }
        d = d + Days::new(1);
    }
    out
}

/// `days` trading days with 3 to 8 posts each, price noise standard
/// deviation `noise`.
pub fn synthetic_market(days: usize, noise: f64, seed: u64) -> SyntheticMarket {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let lexicon = Lexicon::bundled();
    let scores: Vec<f64> = PHRASES
        .iter()
        .map(|p| lexicon.score(p).expect("bundled lexicon").compound)
        .collect();
    let dates = weekdays(days);

    let mut tweets = Vec::new();
    let mut daily = Vec::with_capacity(days);
    for &date in &dates {
        let mood: f64 = rng.random_range(0.0..1.0);
        let posts = rng.random_range(3..=8);
        let mut sum = 0.0;
        for k in 0..posts {
            let jitter: f64 = rng.random_range(-0.2..0.2);
            let idx = ((mood + jitter).clamp(0.0, 0.999) * PHRASES.len() as f64) as usize;
            sum += scores[idx];
            let created = Utc
                .from_utc_datetime(&date.and_hms_opt(9 + k as u32, rng.random_range(0..60), 0).expect("valid time"));
            tweets.push(TweetRecord {
                created_at: created,
                text: PHRASES[idx].to_string(),
                favorite_count: rng.random_range(0..50),
                follower_count: rng.random_range(10..100_000),
                retweet_count: rng.random_range(0..20),
                verified: rng.random_bool(0.1),
            });
        }
        daily.push(sum / posts as f64);
    }

    let mut smoothed = vec![0.0; days];
    for d in 0..days {
        let prev = if d == 0 { 0.0 } else { smoothed[d - 1] };
        smoothed[d] = ALPHA * daily[d] + (1.0 - ALPHA) * prev;
    }

    let mut csv = format!("{PRICE_CSV_HEADER}\n");
    let mut prev_close = BASE_PRICE;
    for d in 0..days {
        let signal = if d >= 2 { smoothed[d - 2] } else { 0.0 };
        let eps: f64 = rng.random_range(-1.0..1.0) * noise * 3f64.sqrt();
        let close = BASE_PRICE + SENTIMENT_GAIN * signal + eps;
        let open = prev_close;
        let high = open.max(close) + rng.random_range(0.0..1.0);
        let low = open.min(close) - rng.random_range(0.0..1.0);
        let volume: u64 = rng.random_range(1_000_000..5_000_000);
        csv.push_str(&format!(
            "{},{open:.4},{high:.4},{low:.4},{close:.4},{close:.4},{volume}\n",
            dates[d]
        ));
        prev_close = close;
    }

    SyntheticMarket {
        dates,
        daily_sentiment: daily,
        prices_csv: csv,
        tweets,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::market_data::parse_price_csv;
    use crate::tweet_store::{aggregate_daily, parse_tweet_jsonl};

    #[test]
    fn parses_and_is_deterministic() {
        let m = synthetic_market(60, 1.0, 3);
        assert_eq!(m, synthetic_market(60, 1.0, 3));
        let prices = parse_price_csv(&m.prices_csv).unwrap();
        assert_eq!(prices.len(), 60);
        assert_eq!(prices.dates(), m.dates);
        let tweets = parse_tweet_jsonl(&m.tweets_jsonl()).unwrap();
        assert_eq!(tweets, m.tweets);
    }

    #[test]
    fn daily_sentiment_matches_aggregation() {
        let m = synthetic_market(30, 1.0, 5);
        let lex = Lexicon::bundled();
        let c: Vec<f64> = m.tweets.iter().map(|t| lex.score(&t.text).unwrap().compound).collect();
        let aggs = aggregate_daily(&m.tweets, &c).unwrap();
        assert_eq!(aggs.len(), 30);
        for (a, s) in aggs.iter().zip(&m.daily_sentiment) {
            assert!((a.mean_compound - s).abs() < 1e-12);
        }
    }

    #[test]
    fn phrases_span_the_compound_range() {
        let lex = Lexicon::bundled();
        let first = lex.score(PHRASES[0]).unwrap().compound;
        let last = lex.score(PHRASES[PHRASES.len() - 1]).unwrap().compound;
        assert!(first < -0.5 && last > 0.5);
    }
}
