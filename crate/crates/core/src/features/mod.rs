//! Per-trading-day feature table, sliding-window examples and the
//! chronological train/validation/test split.

mod scaler;
mod table;

pub use scaler::{ColumnScaler, ScaleKind, Scaler, ScalingPlan};
pub use table::{
    assemble, indicator_columns, latest_rows, Branch, FeatureColumn, FeatureTable, IndicatorConfig,
    TweetColumns, ATTRIBUTE_COLUMNS, SENTIMENT_COLUMN, TARGET_COLUMN,
};

use chrono::NaiveDate;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

/// Default window length in trading days.
pub const DEFAULT_WINDOW: usize = 7;
/// Default train/validation/test fractions.
pub const DEFAULT_SPLIT: SplitFractions = SplitFractions {
    train: 0.63,
    val: 0.07,
    test: 0.30,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FeatureError {
    #[error("calendar mismatch: {0}")]
    CalendarMismatch(String),
    #[error("{rows} usable rows, need at least {needed}")]
    TooFewRows { rows: usize, needed: usize },
    #[error("window length and stride must be at least 1 (got {window}, {stride})")]
    InvalidWindow { window: usize, stride: usize },
    #[error("scaler has no parameters for column `{0}`")]
    UnfittedScaler(String),
    #[error("training row range is empty")]
    EmptyTrainRows,
    #[error("split fractions must be positive and sum to 1, got {0:?}")]
    InvalidFractions(SplitFractions),
    #[error("split of {examples} examples leaves the {block} block empty")]
    EmptySplit { examples: usize, block: &'static str },
    #[error("line {line}: {reason}")]
    Malformed { line: usize, reason: String },
}

/// One training example: `window` consecutive rows split by network branch,
/// and the scaled next-day close of the window's last row.
#[derive(Debug, Clone, PartialEq)]
pub struct Example {
    /// Date of the window's last row.
    pub date: NaiveDate,
    /// Index of the window's last row in the feature table.
    pub end_row: usize,
    pub x_price: Vec<Vec<f64>>,
    pub x_tweet: Vec<Vec<f64>>,
    pub y: f64,
}

impl Example {
    pub fn window(&self) -> usize {
        self.x_price.len()
    }
}

/// Number of windows of length `window` taken every `stride` rows.
pub fn window_count(rows: usize, window: usize, stride: usize) -> usize {
    if window == 0 || stride == 0 || rows < window {
        0
    } else {
        (rows - window) / stride + 1
    }
}

/// Example `i` covers rows `i*stride ..= i*stride + window - 1`.
pub fn make_windows(
    table: &FeatureTable,
    window: usize,
    stride: usize,
) -> Result<Vec<Example>, FeatureError> {
    if window == 0 || stride == 0 {
        return Err(FeatureError::InvalidWindow { window, stride });
    }
    if table.rows() < window {
        return Err(FeatureError::TooFewRows {
            rows: table.rows(),
            needed: window,
        });
    }
    let price = table.branch_indices(Branch::Price);
    let tweet = table.branch_indices(Branch::Tweet);
    let gather = |cols: &[usize], r: usize| -> Vec<f64> {
        cols.iter().map(|&c| table.columns[c].values[r]).collect()
    };
    Ok((0..window_count(table.rows(), window, stride))
        .map(|i| {
            let start = i * stride;
            let end = start + window - 1;
            Example {
                date: table.dates[end],
                end_row: end,
                x_price: (start..=end).map(|r| gather(&price, r)).collect(),
                x_tweet: (start..=end).map(|r| gather(&tweet, r)).collect(),
                y: table.target[end],
            }
        })
        .collect())
}

/// Table rows touched by the first `train_examples` windows (inputs only).
pub fn training_rows(train_examples: usize, window: usize, stride: usize) -> std::ops::Range<usize> {
    if train_examples == 0 {
        0..0
    } else {
        0..(train_examples - 1) * stride + window
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitFractions {
    pub train: f64,
    pub val: f64,
    pub test: f64,
}

impl SplitFractions {
    fn validate(&self) -> Result<(), FeatureError> {
        let all = [self.train, self.val, self.test];
        if all.iter().all(|f| f.is_finite() && *f > 0.0)
            && (all.iter().sum::<f64>() - 1.0).abs() <= 1e-9
        {
            Ok(())
        } else {
            Err(FeatureError::InvalidFractions(*self))
        }
    }
}

/// Block sizes for `n` examples. Validation and test sizes are rounded to
/// the nearest integer; the training block takes the remainder.
pub fn split_sizes(n: usize, fractions: SplitFractions) -> Result<(usize, usize, usize), FeatureError> {
    fractions.validate()?;
    let val = (n as f64 * fractions.val).round() as usize;
    let test = (n as f64 * fractions.test).round() as usize;
    let empty = |block| FeatureError::EmptySplit { examples: n, block };
    if val == 0 {
        return Err(empty("validation"));
    }
    if test == 0 {
        return Err(empty("test"));
    }
    let train = n
        .checked_sub(val + test)
        .filter(|t| *t > 0)
        .ok_or(empty("train"))?;
    Ok((train, val, test))
}

#[derive(Debug, Clone, PartialEq)]
pub struct Split {
    pub train: Vec<Example>,
    pub val: Vec<Example>,
    pub test: Vec<Example>,
}

/// Contiguous chronological split; the test block is the most recent. With
/// a seed, the train and validation blocks are shuffled; test order is kept.
pub fn split(
    examples: Vec<Example>,
    fractions: SplitFractions,
    shuffle_seed: Option<u64>,
) -> Result<Split, FeatureError> {
    let (n_train, n_val, _) = split_sizes(examples.len(), fractions)?;
    let mut train = examples;
    let mut val = train.split_off(n_train);
    let test = val.split_off(n_val);
    if let Some(seed) = shuffle_seed {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        train.shuffle(&mut rng);
        val.shuffle(&mut rng);
    }
    Ok(Split { train, val, test })
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::Days;
    use proptest::prelude::*;

    fn table(rows: usize) -> FeatureTable {
        let start = NaiveDate::from_ymd_opt(2021, 1, 1).unwrap();
        let col = |name: &str, branch, k: f64| FeatureColumn {
            name: name.into(),
            branch,
            values: (0..rows).map(|r| r as f64 * k).collect(),
        };
        FeatureTable {
            dates: (0..rows).map(|r| start + Days::new(r as u64)).collect(),
            columns: vec![
                col("close", Branch::Price, 1.0),
                col("volume", Branch::Price, 10.0),
                col(SENTIMENT_COLUMN, Branch::Tweet, -0.01),
            ],
            target: (0..rows).map(|r| r as f64 + 1.0).collect(),
        }
    }

    #[test]
    fn ten_rows_window_four() {
        let ex = make_windows(&table(10), 4, 1).unwrap();
        assert_eq!(ex.len(), 7);
        assert_eq!(ex[0].x_price.len(), 4);
        assert_eq!(ex[0].y, 4.0);
        assert_eq!(make_windows(&table(4), 4, 1).unwrap().len(), 1);
        assert!(matches!(
            make_windows(&table(3), 4, 1),
            Err(FeatureError::TooFewRows { .. })
        ));
        assert!(matches!(
            make_windows(&table(3), 0, 1),
            Err(FeatureError::InvalidWindow { .. })
        ));
    }

    #[test]
    fn windows_match_nested_loops() {
        let t = table(23);
        for (w, s) in [(1, 1), (3, 2), (5, 3), (7, 1), (23, 4)] {
            let ex = make_windows(&t, w, s).unwrap();
            let mut i = 0;
            let mut start = 0;
            while start + w <= t.rows() {
                let e = &ex[i];
                for k in 0..w {
                    let r = start + k;
                    assert_eq!(e.x_price[k], vec![t.columns[0].values[r], t.columns[1].values[r]]);
                    assert_eq!(e.x_tweet[k], vec![t.columns[2].values[r]]);
                }
                assert_eq!(e.y, t.target[start + w - 1]);
                assert_eq!(e.date, t.dates[start + w - 1]);
                i += 1;
                start += s;
            }
            assert_eq!(i, ex.len());
        }
    }

    #[test]
    fn split_sizes_documented() {
        assert_eq!(split_sizes(100, DEFAULT_SPLIT).unwrap(), (63, 7, 30));
        assert_eq!(split_sizes(10, DEFAULT_SPLIT).unwrap(), (6, 1, 3));
        assert!(matches!(
            split_sizes(2, DEFAULT_SPLIT),
            Err(FeatureError::EmptySplit { .. })
        ));
        let bad = SplitFractions {
            train: 0.5,
            val: 0.2,
            test: 0.2,
        };
        assert!(matches!(split_sizes(100, bad), Err(FeatureError::InvalidFractions(_))));
    }

    #[test]
    fn seeded_shuffle_is_reproducible_and_keeps_test_order() {
        let ex = make_windows(&table(60), 5, 1).unwrap();
        let a = split(ex.clone(), DEFAULT_SPLIT, Some(9)).unwrap();
        let b = split(ex.clone(), DEFAULT_SPLIT, Some(9)).unwrap();
        assert_eq!(a, b);
        let plain = split(ex, DEFAULT_SPLIT, None).unwrap();
        assert_eq!(a.test, plain.test);
        let max_train = a.train.iter().map(|e| e.date).max().unwrap();
        let min_test = a.test.iter().map(|e| e.date).min().unwrap();
        assert!(max_train < min_test);
    }

    proptest! {
        #[test]
        fn window_count_formula(rows in 1usize..400, w in 1usize..40, stride in 1usize..20) {
            prop_assume!(rows >= w);
            let mut naive = 0;
            let mut s = 0;
            while s + w <= rows {
                naive += 1;
                s += stride;
            }
            prop_assert_eq!(window_count(rows, w, stride), naive);
            prop_assert_eq!(window_count(rows, w, stride), (rows - w) / stride + 1);
        }
    }
}
