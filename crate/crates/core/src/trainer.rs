//! Training loop, MSE evaluation and CSV export of curves and predictions.

use std::fmt::Write as _;

use chrono::NaiveDate;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::features::{Example, Scaler};
use crate::neural::{Mode, NetworkConfig, NetworkParams, NeuralError};

pub const DEFAULT_EPOCHS: usize = 100;
pub const DEFAULT_LEARNING_RATE: f64 = 0.008;
pub const DEFAULT_DECAY: f64 = 0.97;
pub const DEFAULT_CLIP_NORM: f64 = 5.0;

pub const CURVE_HEADER: &str = "epoch,train_mse,val_mse,lr";
pub const PREDICTIONS_HEADER: &str = "date,truth,prediction,truth_currency,prediction_currency";

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("invalid training config: {0}")]
    InvalidConfig(String),
    #[error("no examples to work on")]
    EmptyInput,
    #[error("{predictions} predictions against {truths} truths")]
    LengthMismatch { predictions: usize, truths: usize },
    #[error("training diverged in epoch {epoch}")]
    Diverged {
        epoch: usize,
        /// Parameters at the end of the last epoch that finished cleanly.
        last_finite: Box<NetworkParams>,
    },
    #[error(transparent)]
    Neural(#[from] NeuralError),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    /// Per-epoch learning-rate multiplier.
    pub decay: f64,
    pub batch_size: usize,
    pub seed: u64,
    pub dropout_p: f64,
    pub window: usize,
    /// Global gradient-norm clip; 0 disables clipping.
    pub clip_norm: f64,
    pub hidden: usize,
    pub dense: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: DEFAULT_EPOCHS,
            learning_rate: DEFAULT_LEARNING_RATE,
            decay: DEFAULT_DECAY,
            batch_size: 1,
            seed: 0,
            dropout_p: NetworkConfig::DEFAULT_DROPOUT,
            window: crate::features::DEFAULT_WINDOW,
            clip_norm: DEFAULT_CLIP_NORM,
            hidden: NetworkConfig::DEFAULT_HIDDEN,
            dense: NetworkConfig::DEFAULT_DENSE,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        let bad = |m: &str| Err(TrainError::InvalidConfig(m.to_string()));
        if self.epochs == 0 {
            return bad("epochs must be at least 1");
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad("learning_rate must be positive");
        }
        if !(self.decay > 0.0 && self.decay <= 1.0) {
            return bad("decay must lie in (0, 1]");
        }
        if self.batch_size == 0 {
            return bad("batch_size must be at least 1");
        }
        if !(0.0..1.0).contains(&self.dropout_p) {
            return bad("dropout must lie in [0, 1)");
        }
        if self.window == 0 {
            return bad("window must be at least 1");
        }
        if self.clip_norm.is_nan() || self.clip_norm < 0.0 {
            return bad("clip_norm must be non-negative");
        }
        if self.hidden == 0 || self.dense == 0 {
            return bad("layer widths must be positive");
        }
        Ok(())
    }

    /// Learning rate used during 1-based `epoch`.
    pub fn learning_rate_at(&self, epoch: usize) -> f64 {
        self.learning_rate * self.decay.powi(epoch as i32 - 1)
    }

    pub fn network_config(&self, price_features: usize, tweet_features: usize) -> NetworkConfig {
        NetworkConfig {
            price_features,
            tweet_features,
            hidden: self.hidden,
            dense: self.dense,
            dropout_p: self.dropout_p,
        }
    }

    /// Freshly initialised network sized for `example`.
    pub fn init_network(&self, example: &Example) -> Result<NetworkParams, TrainError> {
        let fp = example.x_price.first().map_or(0, Vec::len);
        let ft = example.x_tweet.first().map_or(0, Vec::len);
        Ok(NetworkParams::init(self.network_config(fp, ft), self.seed)?)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_mse: f64,
    pub val_mse: f64,
    pub learning_rate: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// Parameters of the epoch with the lowest validation MSE.
    pub params: NetworkParams,
    pub best_epoch: usize,
    pub records: Vec<EpochRecord>,
}

pub fn mse(predictions: &[f64], truths: &[f64]) -> Result<f64, TrainError> {
    if predictions.len() != truths.len() {
        return Err(TrainError::LengthMismatch {
            predictions: predictions.len(),
            truths: truths.len(),
        });
    }
    if predictions.is_empty() {
        return Err(TrainError::EmptyInput);
    }
    let sum: f64 = predictions
        .iter()
        .zip(truths)
        .map(|(p, t)| (p - t) * (p - t))
        .sum();
    Ok(sum / predictions.len() as f64)
}

/// Eval-mode predictions in input order.
pub fn predict(params: &NetworkParams, examples: &[Example]) -> Result<Vec<f64>, TrainError> {
    examples
        .iter()
        .map(|e| Ok(params.forward(&e.x_price, &e.x_tweet, Mode::Eval, 0)?.0))
        .collect()
}

fn eval_mse(params: &NetworkParams, examples: &[Example]) -> Result<f64, TrainError> {
    let preds = predict(params, examples)?;
    let truths: Vec<f64> = examples.iter().map(|e| e.y).collect();
    mse(&preds, &truths)
}

/// Trains `params`. Each epoch shuffles the training set
/// with a seeded generator, takes one SGD step per batch of `batch_size`
/// examples, then records eval-mode MSE on both sets. An empty validation
/// set falls back to selecting on training MSE.
pub fn train(
    config: &TrainConfig,
    params: NetworkParams,
    train_set: &[Example],
    val_set: &[Example],
) -> Result<TrainOutcome, TrainError> {
    config.validate()?;
    if train_set.is_empty() {
        return Err(TrainError::EmptyInput);
    }
    let mut params = params;
    let mut best = (f64::INFINITY, 0usize, params.clone());
    let mut records = Vec::with_capacity(config.epochs);
    let mut order: Vec<usize> = (0..train_set.len()).collect();

    for epoch in 1..=config.epochs {
        let lr = config.learning_rate_at(epoch);
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed.wrapping_add(epoch as u64));
        order.shuffle(&mut rng);
        let epoch_start = params.clone();
        let diverged = |p: NetworkParams| TrainError::Diverged {
            epoch,
            last_finite: Box::new(p),
        };

        for batch in order.chunks(config.batch_size) {
            let mut grad = params.zeros_like();
            for &i in batch {
                let e = &train_set[i];
                let (pred, tape) = params.forward(&e.x_price, &e.x_tweet, Mode::Train, rng.random())?;
                if !pred.is_finite() {
                    return Err(diverged(epoch_start));
                }
                let g = params.backward(&tape, 2.0 * (pred - e.y) / batch.len() as f64)?;
                grad.add_assign(&g);
            }
            match params.sgd_update(&grad, lr, config.clip_norm) {
                Ok(_) => {}
                Err(NeuralError::NonFiniteGradient) => return Err(diverged(epoch_start)),
                Err(e) => return Err(e.into()),
            }
        }

        let train_mse = eval_mse(&params, train_set)?;
        let val_mse = if val_set.is_empty() {
            train_mse
        } else {
            eval_mse(&params, val_set)?
        };
        if !(train_mse.is_finite() && val_mse.is_finite()) {
            return Err(diverged(epoch_start));
        }
        records.push(EpochRecord {
            epoch,
            train_mse,
            val_mse,
            learning_rate: lr,
        });
        if val_mse < best.0 {
            best = (val_mse, epoch, params.clone());
        }
    }
    Ok(TrainOutcome {
        params: best.2,
        best_epoch: best.1,
        records,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SeriesPoint {
    pub date: NaiveDate,
    pub truth: f64,
    pub prediction: f64,
    pub truth_currency: f64,
    pub prediction_currency: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    /// MSE in scaled space.
    pub mse: f64,
    pub series: Vec<SeriesPoint>,
}

/// Eval-mode forward over `test_set` sorted by date. Currency columns use
/// `scaler`'s target inverse, or repeat the scaled values without one.
pub fn evaluate(
    params: &NetworkParams,
    test_set: &[Example],
    scaler: Option<&Scaler>,
) -> Result<Evaluation, TrainError> {
    if test_set.is_empty() {
        return Err(TrainError::EmptyInput);
    }
    let mut ordered: Vec<&Example> = test_set.iter().collect();
    ordered.sort_by_key(|e| (e.date, e.end_row));
    let inverse = |v: f64| scaler.map_or(v, |s| s.inverse_target(v));
    let mut series = Vec::with_capacity(ordered.len());
    for e in ordered {
        let (prediction, _) = params.forward(&e.x_price, &e.x_tweet, Mode::Eval, 0)?;
        series.push(SeriesPoint {
            date: e.date,
            truth: e.y,
            prediction,
            truth_currency: inverse(e.y),
            prediction_currency: inverse(prediction),
        });
    }
    let preds: Vec<f64> = series.iter().map(|p| p.prediction).collect();
    let truths: Vec<f64> = series.iter().map(|p| p.truth).collect();
    Ok(Evaluation {
        mse: mse(&preds, &truths)?,
        series,
    })
}

pub fn curve_csv(records: &[EpochRecord]) -> String {
    let mut out = format!("{CURVE_HEADER}\n");
    for r in records {
        let _ = writeln!(out, "{},{:?},{:?},{:?}", r.epoch, r.train_mse, r.val_mse, r.learning_rate);
    }
    out
}

pub fn predictions_csv(series: &[SeriesPoint]) -> String {
    let mut out = format!("{PREDICTIONS_HEADER}\n");
    for p in series {
        let _ = writeln!(
            out,
            "{},{:?},{:?},{:?},{:?}",
            p.date, p.truth, p.prediction, p.truth_currency, p.prediction_currency
        );
    }
    out
}

/// Parses the output of [`predictions_csv`].
pub fn parse_predictions_csv(text: &str) -> Result<Vec<SeriesPoint>, String> {
    let mut lines = text.lines();
    if lines.next() != Some(PREDICTIONS_HEADER) {
        return Err("unexpected predictions header".into());
    }
    lines
        .enumerate()
        .filter(|(_, l)| !l.is_empty())
        .map(|(i, l)| {
            let f: Vec<&str> = l.split(',').collect();
            let ctx = |m: &str| format!("line {}: {m}", i + 2);
            if f.len() != 5 {
                return Err(ctx("expected 5 fields"));
            }
            let num = |s: &str| s.parse::<f64>().map_err(|e| ctx(&e.to_string()));
            Ok(SeriesPoint {
                date: f[0].parse().map_err(|e: chrono::ParseError| ctx(&e.to_string()))?,
                truth: num(f[1])?,
                prediction: num(f[2])?,
                truth_currency: num(f[3])?,
                prediction_currency: num(f[4])?,
            })
        })
        .collect()
}
