//! Next-trading-day close price forecasting from daily OHLCV history,
//! technical indicators and per-day aggregated post sentiment.
//!
//! The pipeline is:
//!
//! 1. [`market_data`] parses the price history,
//! 2. [`indicators`] derives SMA and Bollinger columns,
//! 3. [`tweet_store`] + [`sentiment`] turn posts into per-trading-day aggregates,
//! 4. [`features`] assembles, scales and windows the feature table,
//! 5. [`neural`] + [`trainer`] fit the dual-branch LSTM network,
//! 6. [`pipeline`] wires it all together behind file-based commands.
//!
//! [`collector`] acquires posts from a paginated search API under a rate budget.

pub mod collector;
pub mod features;
pub mod indicators;
pub mod market_data;
pub mod neural;
pub mod pipeline;
pub mod sentiment;
pub mod synthetic;
pub mod trainer;
pub mod tweet_store;

pub use indicators::{bollinger, sma, typical_price, BollingerBands, IndicatorColumn, IndicatorError};
pub use market_data::{parse_price_csv, MarketDataError, PriceBar, PriceSeries};
pub use sentiment::{Lexicon, SentimentError, SentimentScore};
pub use tweet_store::{
    aggregate_daily, align_to_trading_days, parse_tweet_jsonl, DailyAggregate, TweetRecord,
    TweetStoreError,
};
pub use collector::{CollectorError, CollectorState, RateBudget, SearchPage, Transport, TransportError};
pub use features::{Example, FeatureError, FeatureTable, Scaler, Split};
pub use neural::{Mode, NetworkConfig, NetworkParams, NeuralError};
pub use pipeline::{PipelineError, RunConfig, RunDir};
pub use trainer::{EpochRecord, TrainConfig, TrainError};
