//! Technical indicators over a [`PriceSeries`]: simple moving average,
//! typical price and Bollinger Bands.
//!
//! Every column is aligned with the series dates. The first `warmup`
//! entries have no value because their window reaches before the first bar.

use thiserror::Error;

use crate::market_data::{PriceBar, PriceSeries};

/// Common Bollinger window length.
pub const DEFAULT_BOLLINGER_WINDOW: usize = 20;
/// Common Bollinger band width in standard deviations.
pub const DEFAULT_BOLLINGER_WIDTH: f64 = 2.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum IndicatorError {
    #[error("series has {len} bars, window needs at least {window}")]
    SeriesTooShort { len: usize, window: usize },
    #[error("invalid window length {0}")]
    InvalidWindow(usize),
    #[error("band width must be positive, got {0}")]
    InvalidWidth(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct IndicatorColumn {
    pub name: String,
    /// `None` for the leading warmup entries.
    pub values: Vec<Option<f64>>,
    pub warmup: usize,
}

impl IndicatorColumn {
    fn from_windows(name: String, len: usize, window: usize, f: impl Fn(usize) -> f64) -> Self {
        let warmup = window - 1;
        let values = (0..len)
            .map(|t| (t >= warmup).then(|| f(t)))
            .collect();
        Self {
            name,
            values,
            warmup,
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn get(&self, t: usize) -> Option<f64> {
        self.values.get(t).copied().flatten()
    }
}

/// The three Bollinger columns.
#[derive(Debug, Clone, PartialEq)]
pub struct BollingerBands {
    pub mid: IndicatorColumn,
    pub upper: IndicatorColumn,
    pub lower: IndicatorColumn,
}

/// `(high + low + close) / 3`.
///
/// Evaluated relative to `low` so a flat bar returns its price exactly.
pub fn typical_price(bar: &PriceBar) -> f64 {
    bar.low + ((bar.high - bar.low) + (bar.close - bar.low)) / 3.0
}

fn check_window(len: usize, window: usize, min_window: usize) -> Result<(), IndicatorError> {
    if window < min_window {
        return Err(IndicatorError::InvalidWindow(window));
    }
    if len < window {
        return Err(IndicatorError::SeriesTooShort { len, window });
    }
    Ok(())
}

// Mean anchored at the first element: exact for constant windows and
// unaffected by the magnitude of a common offset.
fn window_mean(xs: &[f64]) -> f64 {
    let anchor = xs[0];
    anchor + xs.iter().map(|x| x - anchor).sum::<f64>() / xs.len() as f64
}

fn window_std(xs: &[f64], mean: f64) -> f64 {
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / xs.len() as f64;
    var.sqrt()
}

/// Rolling mean of closing prices over `window` days, named `sma{window}`.
pub fn sma(series: &PriceSeries, window: usize) -> Result<IndicatorColumn, IndicatorError> {
    check_window(series.len(), window, 1)?;
    let closes = series.closes();
    Ok(IndicatorColumn::from_windows(
        format!("sma{window}"),
        closes.len(),
        window,
        |t| window_mean(&closes[t + 1 - window..=t]),
    ))
}

/// Bollinger Bands: the middle band is the SMA of closes while the outer
/// bands are the SMA of the typical price plus or minus `width` population
/// standard deviations of the typical price over the same window.
pub fn bollinger(
    series: &PriceSeries,
    window: usize,
    width: f64,
) -> Result<BollingerBands, IndicatorError> {
    check_window(series.len(), window, 2)?;
    if !(width > 0.0 && width.is_finite()) {
        return Err(IndicatorError::InvalidWidth(width));
    }
    let closes = series.closes();
    let tp: Vec<f64> = series.bars().iter().map(typical_price).collect();
    let len = closes.len();

    let band = |t: usize| {
        let w = &tp[t + 1 - window..=t];
        let mean = window_mean(w);
        (mean, width * window_std(w, mean))
    };

    let mid = IndicatorColumn::from_windows("boll_mid".into(), len, window, |t| {
        window_mean(&closes[t + 1 - window..=t])
    });
    let upper = IndicatorColumn::from_windows("boll_up".into(), len, window, |t| {
        let (m, off) = band(t);
        m + off
    });
    let lower = IndicatorColumn::from_windows("boll_low".into(), len, window, |t| {
        let (m, off) = band(t);
        m - off
    });
    Ok(BollingerBands { mid, upper, lower })
}
