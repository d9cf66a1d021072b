//! File-level workflow over run directories: featurize, train, evaluate,
//! predict and compare.
//!
//! A run directory holds every artifact of one experiment. Files are never
//! replaced with different content; rerunning a step with the same inputs
//! rewrites identical bytes and succeeds.

mod config;

pub use config::RunConfig;

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use chrono::{NaiveDate, Utc};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::features::{
    assemble, indicator_columns, latest_rows, make_windows, split, split_sizes, training_rows,
    window_count, FeatureError, FeatureTable, Scaler, Split,
};
use crate::market_data::{parse_price_csv, PriceSeries};
use crate::neural::{read_checkpoint, write_checkpoint, Mode, NetworkParams, NeuralError};
use crate::sentiment::{Lexicon, BUNDLED_LEXICON};
use crate::trainer::{self, curve_csv, predictions_csv, EpochRecord, TrainError};
use crate::tweet_store::{aggregate_daily, align_to_trading_days, dedup_exact, parse_tweet_jsonl, DailyAggregate};

pub const FEATURES_FILE: &str = "features.csv";
pub const LATEST_FILE: &str = "latest.csv";
pub const SCALER_FILE: &str = "scaler.params";
pub const CONFIG_FILE: &str = "config.toml";
pub const TRAIN_CONFIG_FILE: &str = "train.toml";
pub const MANIFEST_FILE: &str = "manifest.txt";
pub const CHECKPOINT_FILE: &str = "checkpoint.bin";
pub const CURVE_FILE: &str = "curve.csv";
pub const PREDICTIONS_FILE: &str = "predictions.csv";
pub const METRICS_FILE: &str = "metrics.txt";
pub const PREDICTION_FILE: &str = "prediction.txt";

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("config: {0}")]
    Config(String),
    #[error("{}: {reason}", path.display())]
    MissingInput { path: PathBuf, reason: String },
    #[error("run {}: {reason}", path.display())]
    MissingRun { path: PathBuf, reason: String },
    #[error("{} already exists with different content", path.display())]
    RunExists { path: PathBuf },
    #[error("{}: {message}", path.display())]
    Input { path: PathBuf, message: String },
    #[error("{}: {message}", path.display())]
    Io { path: PathBuf, message: String },
    #[error(transparent)]
    Features(#[from] FeatureError),
    #[error(transparent)]
    Train(#[from] TrainError),
    #[error(transparent)]
    Neural(#[from] NeuralError),
}

impl PipelineError {
    /// Errors caused by the invocation rather than by processing.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            PipelineError::Config(_)
                | PipelineError::MissingInput { .. }
                | PipelineError::MissingRun { .. }
                | PipelineError::RunExists { .. }
                | PipelineError::Train(TrainError::InvalidConfig(_))
        )
    }
}

/// Hex SHA-256 of `blob <len>\0<bytes>`, the object id git would assign
/// under SHA-256.
pub fn content_hash(bytes: &[u8]) -> String {
    let mut h = Sha256::new();
    h.update(format!("blob {}\0", bytes.len()).as_bytes());
    h.update(bytes);
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

fn read_bytes(path: &Path) -> Result<Vec<u8>, PipelineError> {
    fs::read(path).map_err(|e| PipelineError::MissingInput {
        path: path.to_path_buf(),
        reason: e.to_string(),
    })
}

fn read_text(path: &Path) -> Result<String, PipelineError> {
    String::from_utf8(read_bytes(path)?).map_err(|e| PipelineError::Input {
        path: path.to_path_buf(),
        message: e.to_string(),
    })
}

/// Ordered `key = value` record of inputs, settings and outputs.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Manifest {
    pub entries: Vec<(String, String)>,
}

impl Manifest {
    pub fn set(&mut self, key: &str, value: impl ToString) {
        let value = value.to_string();
        match self.entries.iter_mut().find(|(k, _)| k == key) {
            Some(e) => e.1 = value,
            None => self.entries.push((key.to_string(), value)),
        }
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries
            .iter()
            .find(|(k, _)| k == key)
            .map(|(_, v)| v.as_str())
    }

    pub fn render(&self) -> String {
        let mut out = String::from("# stockcast run manifest\n");
        for (k, v) in &self.entries {
            let _ = writeln!(out, "{k} = {v}");
        }
        out
    }

    pub fn parse(text: &str) -> Self {
        let entries = text
            .lines()
            .filter(|l| !l.starts_with('#'))
            .filter_map(|l| l.split_once(" = "))
            .map(|(k, v)| (k.to_string(), v.to_string()))
            .collect();
        Self { entries }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RunDir {
    path: PathBuf,
}

impl RunDir {
    /// Uses `explicit` if given, otherwise a fresh timestamped directory
    /// under `output_dir`.
    pub fn create(output_dir: &Path, explicit: Option<&Path>) -> Result<Self, PipelineError> {
        let path = match explicit {
            Some(p) => p.to_path_buf(),
            None => {
                let stamp = Utc::now().format("run-%Y%m%d-%H%M%S").to_string();
                let mut candidate = output_dir.join(&stamp);
                let mut n = 2;
                while candidate.exists() {
                    candidate = output_dir.join(format!("{stamp}-{n}"));
                    n += 1;
                }
                candidate
            }
        };
        fs::create_dir_all(&path).map_err(|e| PipelineError::Io {
            path: path.clone(),
            message: e.to_string(),
        })?;
        Ok(Self { path })
    }

    /// An existing run directory that has been featurized.
    pub fn open(path: &Path) -> Result<Self, PipelineError> {
        if !path.join(FEATURES_FILE).is_file() {
            return Err(PipelineError::MissingRun {
                path: path.to_path_buf(),
                reason: format!("no {FEATURES_FILE}; run featurize first"),
            });
        }
        Ok(Self {
            path: path.to_path_buf(),
        })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn file(&self, name: &str) -> PathBuf {
        self.path.join(name)
    }

    /// Writes `name` unless it exists with different content.
    pub fn write_new(&self, name: &str, bytes: &[u8]) -> Result<String, PipelineError> {
        let path = self.file(name);
        if let Ok(existing) = fs::read(&path) {
            if existing != bytes {
                return Err(PipelineError::RunExists { path });
            }
        }
        fs::write(&path, bytes).map_err(|e| PipelineError::Io {
            path: path.clone(),
            message: e.to_string(),
        })?;
        Ok(content_hash(bytes))
    }

    fn require(&self, name: &str, step: &str) -> Result<PathBuf, PipelineError> {
        let p = self.file(name);
        if p.is_file() {
            Ok(p)
        } else {
            Err(PipelineError::MissingRun {
                path: self.path.clone(),
                reason: format!("no {name}; run {step} first"),
            })
        }
    }

    pub fn manifest(&self) -> Manifest {
        fs::read_to_string(self.file(MANIFEST_FILE))
            .map(|t| Manifest::parse(&t))
            .unwrap_or_default()
    }

    fn save_manifest(&self, m: &Manifest) -> Result<(), PipelineError> {
        let path = self.file(MANIFEST_FILE);
        fs::write(&path, m.render()).map_err(|e| PipelineError::Io {
            path,
            message: e.to_string(),
        })
    }
}

/// In-memory result of feature assembly.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureSet {
    pub table: FeatureTable,
    /// Final `window` rows for out-of-sample prediction.
    pub latest: FeatureTable,
    pub scaler: Scaler,
    pub split_sizes: (usize, usize, usize),
    /// `(name, content hash)` of every input file read.
    pub inputs: Vec<(String, String)>,
}

fn input_error(path: &Path, e: impl std::fmt::Display) -> PipelineError {
    PipelineError::Input {
        path: path.to_path_buf(),
        message: e.to_string(),
    }
}

pub fn load_lexicon(config: &RunConfig) -> Result<(Lexicon, String), PipelineError> {
    match &config.lexicon {
        Some(path) => {
            let text = read_text(path)?;
            let lex = Lexicon::parse(&text).map_err(|e| input_error(path, e))?;
            Ok((lex, content_hash(text.as_bytes())))
        }
        None => Ok((
            Lexicon::bundled(),
            format!("bundled:{}", content_hash(BUNDLED_LEXICON.as_bytes())),
        )),
    }
}

/// Scores, aggregates and aligns posts to the trading calendar.
pub fn daily_tweet_features(
    jsonl: &str,
    lexicon: &Lexicon,
    prices: &PriceSeries,
) -> Result<Vec<DailyAggregate>, String> {
    let records = dedup_exact(parse_tweet_jsonl(jsonl).map_err(|e| e.to_string())?);
    let compounds = records
        .iter()
        .map(|r| lexicon.score(&r.text).map(|s| s.compound))
        .collect::<Result<Vec<f64>, _>>()
        .map_err(|e| e.to_string())?;
    let aggs = aggregate_daily(&records, &compounds).map_err(|e| e.to_string())?;
    Ok(align_to_trading_days(&aggs, &prices.dates()).aggregates())
}

/// Reads the inputs named by `config` and builds the feature table and the
/// scaler fitted on the rows the training windows cover.
pub fn build_features(config: &RunConfig) -> Result<FeatureSet, PipelineError> {
    config.validate()?;
    config.check_inputs()?;
    let mut inputs = Vec::new();
    let price_path = config.price_csv.as_ref().expect("checked");
    let price_text = read_text(price_path)?;
    inputs.push(("price_csv".to_string(), content_hash(price_text.as_bytes())));
    let prices = parse_price_csv(&price_text).map_err(|e| input_error(price_path, e))?;
    let indicators = indicator_columns(&prices, &config.indicator_config())
        .map_err(|e| input_error(price_path, e))?;

    let tweet_columns = config.tweet_columns();
    let tweets = if config.include_tweet_features {
        let path = config.tweets_jsonl.as_ref().expect("checked");
        let text = read_text(path)?;
        inputs.push(("tweets_jsonl".to_string(), content_hash(text.as_bytes())));
        let (lexicon, lex_hash) = load_lexicon(config)?;
        inputs.push(("lexicon".to_string(), lex_hash));
        Some(daily_tweet_features(&text, &lexicon, &prices).map_err(|e| input_error(path, e))?)
    } else {
        None
    };

    let table = assemble(&prices, &indicators, tweets.as_deref(), tweet_columns)?;
    let latest = latest_rows(&prices, &indicators, tweets.as_deref(), tweet_columns, config.window)?;
    let n_examples = window_count(table.rows(), config.window, config.stride);
    if n_examples == 0 {
        return Err(FeatureError::TooFewRows {
            rows: table.rows(),
            needed: config.window,
        }
        .into());
    }
    let sizes = split_sizes(n_examples, config.split_fractions())?;
    let rows = training_rows(sizes.0, config.window, config.stride);
    let scaler = Scaler::fit(&table, rows, &config.scaling_plan()?)?;
    Ok(FeatureSet {
        table,
        latest,
        scaler,
        split_sizes: sizes,
        inputs,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeaturizeReport {
    pub rows: usize,
    pub columns: Vec<String>,
    pub examples: usize,
    pub split_sizes: (usize, usize, usize),
}

pub fn featurize(config: &RunConfig, run: &RunDir) -> Result<FeaturizeReport, PipelineError> {
    let set = build_features(config)?;
    let config_text = config.to_toml();
    let mut m = run.manifest();
    m.set("config.hash", content_hash(config_text.as_bytes()));
    for (name, hash) in &set.inputs {
        m.set(&format!("input.{name}"), hash);
    }
    m.set("seed", config.seed);
    m.set("rows", set.table.rows());
    m.set("columns", set.table.columns.len());
    let (tr, va, te) = set.split_sizes;
    m.set("examples", tr + va + te);
    m.set("split.train", tr);
    m.set("split.val", va);
    m.set("split.test", te);
    m.set(&format!("output.{CONFIG_FILE}"), run.write_new(CONFIG_FILE, config_text.as_bytes())?);
    m.set(&format!("output.{FEATURES_FILE}"), run.write_new(FEATURES_FILE, set.table.to_csv().as_bytes())?);
    m.set(&format!("output.{LATEST_FILE}"), run.write_new(LATEST_FILE, set.latest.to_csv().as_bytes())?);
    m.set(
        &format!("output.{SCALER_FILE}"),
        run.write_new(SCALER_FILE, set.scaler.to_params_string().as_bytes())?,
    );
    run.save_manifest(&m)?;
    Ok(FeaturizeReport {
        rows: set.table.rows(),
        columns: set.table.column_names().iter().map(|s| s.to_string()).collect(),
        examples: tr + va + te,
        split_sizes: set.split_sizes,
    })
}

fn load_config(path: &Path) -> Result<RunConfig, PipelineError> {
    RunConfig::parse(&read_text(path)?, &[])
}

/// Scaled examples of a featurized run, split as training would see them.
pub fn load_split(run: &RunDir, config: &RunConfig) -> Result<(Scaler, Split), PipelineError> {
    let table_path = run.file(FEATURES_FILE);
    let table = FeatureTable::from_csv(&read_text(&table_path)?)?;
    let scaler_path = run.require(SCALER_FILE, "featurize")?;
    let scaler = Scaler::from_params_str(&read_text(&scaler_path)?)?;
    let scaled = scaler.transform(&table)?;
    let examples = make_windows(&scaled, config.window, config.stride)?;
    let seed = config.shuffle.then_some(config.seed);
    let split = split(examples, config.split_fractions(), seed)?;
    Ok((scaler, split))
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainReport {
    pub records: Vec<EpochRecord>,
    pub best_epoch: usize,
    pub seed: u64,
}

/// Trains on a featurized run. `overrides` (`key=value`) are applied on top
/// of the run's featurize config; windowing and split keys must not change.
pub fn train(run: &RunDir, overrides: &[String]) -> Result<TrainReport, PipelineError> {
    let base_text = read_text(&run.require(CONFIG_FILE, "featurize")?)?;
    let base = RunConfig::parse(&base_text, &[])?;
    let config = RunConfig::parse(&base_text, overrides)?;
    if (config.window, config.stride, config.split_fractions())
        != (base.window, base.stride, base.split_fractions())
    {
        return Err(PipelineError::Config(
            "window, stride and split fractions are fixed at featurize time".into(),
        ));
    }
    let (_, split) = load_split(run, &config)?;
    let tc = config.train_config();
    let first = split.train.first().ok_or(TrainError::EmptyInput)?;
    let params = tc.init_network(first)?;
    let outcome = trainer::train(&tc, params, &split.train, &split.val)?;

    let config_text = config.to_toml();
    let mut m = run.manifest();
    m.set("train.config.hash", run.write_new(TRAIN_CONFIG_FILE, config_text.as_bytes())?);
    m.set("train.seed", config.seed);
    m.set("train.epochs", config.epochs);
    m.set("train.best_epoch", outcome.best_epoch);
    m.set(
        &format!("output.{CHECKPOINT_FILE}"),
        run.write_new(CHECKPOINT_FILE, &write_checkpoint(&outcome.params))?,
    );
    m.set(
        &format!("output.{CURVE_FILE}"),
        run.write_new(CURVE_FILE, curve_csv(&outcome.records).as_bytes())?,
    );
    run.save_manifest(&m)?;
    Ok(TrainReport {
        records: outcome.records,
        best_epoch: outcome.best_epoch,
        seed: config.seed,
    })
}

fn load_trained(run: &RunDir) -> Result<(RunConfig, NetworkParams), PipelineError> {
    let config = load_config(&run.require(TRAIN_CONFIG_FILE, "train")?)?;
    let bytes = read_bytes(&run.require(CHECKPOINT_FILE, "train")?)?;
    Ok((config, read_checkpoint(&bytes)?))
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvaluateReport {
    pub test_mse: f64,
    pub examples: usize,
}

pub fn evaluate(run: &RunDir) -> Result<EvaluateReport, PipelineError> {
    let (config, params) = load_trained(run)?;
    let (scaler, split) = load_split(run, &config)?;
    let ev = trainer::evaluate(&params, &split.test, Some(&scaler))?;
    let metrics = format!("test_mse = {:?}\nexamples = {}\n", ev.mse, ev.series.len());
    let mut m = run.manifest();
    m.set(
        &format!("output.{PREDICTIONS_FILE}"),
        run.write_new(PREDICTIONS_FILE, predictions_csv(&ev.series).as_bytes())?,
    );
    m.set(&format!("output.{METRICS_FILE}"), run.write_new(METRICS_FILE, metrics.as_bytes())?);
    m.set("test_mse", format!("{:?}", ev.mse));
    run.save_manifest(&m)?;
    Ok(EvaluateReport {
        test_mse: ev.mse,
        examples: ev.series.len(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Forecast {
    /// Last observed trading day; the forecast is for the session after it.
    pub as_of: NaiveDate,
    pub scaled: f64,
    pub close: f64,
}

pub fn predict(run: &RunDir) -> Result<Forecast, PipelineError> {
    let (config, params) = load_trained(run)?;
    let latest = FeatureTable::from_csv(&read_text(&run.require(LATEST_FILE, "featurize")?)?)?;
    let scaler = Scaler::from_params_str(&read_text(&run.require(SCALER_FILE, "featurize")?)?)?;
    let scaled = scaler.transform(&latest)?;
    let ex = make_windows(&scaled, config.window, config.window)?;
    let ex = ex.last().ok_or(TrainError::EmptyInput)?;
    let (y, _) = params.forward(&ex.x_price, &ex.x_tweet, Mode::Eval, 0)?;
    let forecast = Forecast {
        as_of: ex.date,
        scaled: y,
        close: scaler.inverse_target(y),
    };
    let text = format!(
        "as_of = {}\nprediction = {:?}\nprediction_currency = {:?}\n",
        forecast.as_of, forecast.scaled, forecast.close
    );
    let mut m = run.manifest();
    m.set(&format!("output.{PREDICTION_FILE}"), run.write_new(PREDICTION_FILE, text.as_bytes())?);
    run.save_manifest(&m)?;
    Ok(forecast)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Comparison {
    pub mse_a: f64,
    pub mse_b: f64,
    /// `mse_b - mse_a`
    pub delta: f64,
    /// `delta / mse_a * 100`
    pub delta_pct: f64,
}

impl Comparison {
    pub fn new(mse_a: f64, mse_b: f64) -> Self {
        let delta = mse_b - mse_a;
        Self {
            mse_a,
            mse_b,
            delta,
            delta_pct: if delta == 0.0 { 0.0 } else { delta / mse_a * 100.0 },
        }
    }

    pub fn render(&self, a: &Path, b: &Path) -> String {
        format!(
            "run_a = {}\nrun_b = {}\ntest_mse_a = {:?}\ntest_mse_b = {:?}\ndelta = {:?}\ndelta_pct = {:.1}\n",
            a.display(),
            b.display(),
            self.mse_a,
            self.mse_b,
            self.delta,
            self.delta_pct
        )
    }
}

fn read_test_mse(run: &Path) -> Result<f64, PipelineError> {
    let missing = |reason: String| PipelineError::MissingRun {
        path: run.to_path_buf(),
        reason,
    };
    let text = fs::read_to_string(run.join(METRICS_FILE))
        .map_err(|_| missing(format!("no {METRICS_FILE}; run evaluate first")))?;
    text.lines()
        .find_map(|l| l.strip_prefix("test_mse = "))
        .and_then(|v| v.parse().ok())
        .ok_or_else(|| missing(format!("{METRICS_FILE} has no test_mse")))
}

pub fn compare(run_a: &Path, run_b: &Path) -> Result<Comparison, PipelineError> {
    Ok(Comparison::new(read_test_mse(run_a)?, read_test_mse(run_b)?))
}

/// `date,compound` for each post, in input order.
pub fn score_file(jsonl: &str, lexicon: &Lexicon) -> Result<String, String> {
    let records = parse_tweet_jsonl(jsonl).map_err(|e| e.to_string())?;
    let mut out = String::from("date,compound\n");
    for r in &records {
        let s = lexicon.score(&r.text).map_err(|e| e.to_string())?;
        let _ = writeln!(out, "{},{:.4}", r.date(), s.compound);
    }
    Ok(out)
}
