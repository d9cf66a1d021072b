use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::PipelineError;
use crate::features::{
    IndicatorConfig, ScaleKind, ScalingPlan, SplitFractions, TweetColumns, DEFAULT_WINDOW,
};
use crate::trainer::{TrainConfig, DEFAULT_CLIP_NORM, DEFAULT_DECAY, DEFAULT_EPOCHS, DEFAULT_LEARNING_RATE};

/// Flat `key = value` run configuration. Every key is optional.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub price_csv: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tweets_jsonl: Option<PathBuf>,
    /// Tab-separated `token<TAB>valence` file; the bundled lexicon if unset.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lexicon: Option<PathBuf>,
    pub output_dir: PathBuf,

    pub sma_window: usize,
    pub bollinger_window: usize,
    pub bollinger_width: f64,
    pub window: usize,
    pub stride: usize,
    pub train_fraction: f64,
    pub val_fraction: f64,
    pub test_fraction: f64,
    pub scaling: String,
    pub follower_scaling: String,
    pub include_tweet_features: bool,
    pub include_attribute_features: bool,
    pub shuffle: bool,

    pub epochs: usize,
    pub learning_rate: f64,
    pub decay: f64,
    pub batch_size: usize,
    pub dropout: f64,
    pub hidden: usize,
    pub dense: usize,
    pub clip_norm: f64,
    pub seed: u64,
}

impl Default for RunConfig {
    fn default() -> Self {
        let ind = IndicatorConfig::default();
        let split = crate::features::DEFAULT_SPLIT;
        let train = TrainConfig::default();
        Self {
            price_csv: None,
            tweets_jsonl: None,
            lexicon: None,
            output_dir: PathBuf::from("runs"),
            sma_window: ind.sma_window,
            bollinger_window: ind.bollinger_window,
            bollinger_width: ind.bollinger_width,
            window: DEFAULT_WINDOW,
            stride: 1,
            train_fraction: split.train,
            val_fraction: split.val,
            test_fraction: split.test,
            scaling: ScaleKind::MinMax.as_str().into(),
            follower_scaling: ScaleKind::SigmoidLog.as_str().into(),
            include_tweet_features: true,
            include_attribute_features: true,
            shuffle: true,
            epochs: DEFAULT_EPOCHS,
            learning_rate: DEFAULT_LEARNING_RATE,
            decay: DEFAULT_DECAY,
            batch_size: 1,
            dropout: train.dropout_p,
            hidden: train.hidden,
            dense: train.dense,
            clip_norm: DEFAULT_CLIP_NORM,
            seed: 0,
        }
    }
}

fn invalid(msg: impl Into<String>) -> PipelineError {
    PipelineError::Config(msg.into())
}

impl RunConfig {
    /// Parses TOML text, then applies `key=value` overrides. Override values
    /// are TOML literals; anything that does not parse as one is taken as a
    /// string.
    pub fn parse(text: &str, overrides: &[String]) -> Result<Self, PipelineError> {
        let mut table: toml::Table = text.parse().map_err(|e: toml::de::Error| invalid(e.to_string()))?;
        for ov in overrides {
            let (key, raw) = ov
                .split_once('=')
                .ok_or_else(|| invalid(format!("override `{ov}` is not key=value")))?;
            let key = key.trim();
            let raw = raw.trim();
            let value = format!("v = {raw}")
                .parse::<toml::Table>()
                .ok()
                .and_then(|mut t| t.remove("v"))
                .unwrap_or_else(|| toml::Value::String(raw.to_string()));
            table.insert(key.to_string(), value);
        }
        let config: RunConfig = toml::Value::Table(table)
            .try_into()
            .map_err(|e: toml::de::Error| invalid(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    /// Reads `path` and resolves relative input paths against its directory.
    pub fn load(path: &Path, overrides: &[String]) -> Result<Self, PipelineError> {
        let text = std::fs::read_to_string(path).map_err(|e| PipelineError::MissingInput {
            path: path.to_path_buf(),
            reason: e.to_string(),
        })?;
        let mut config = Self::parse(&text, overrides)?;
        let base = path.parent().unwrap_or(Path::new(""));
        for p in [&mut config.price_csv, &mut config.tweets_jsonl, &mut config.lexicon]
            .into_iter()
            .flatten()
        {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        if config.output_dir.is_relative() {
            config.output_dir = base.join(&config.output_dir);
        }
        Ok(config)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<(), PipelineError> {
        self.scale_kind(&self.scaling)?;
        self.scale_kind(&self.follower_scaling)?;
        if self.sma_window == 0 || self.bollinger_window < 2 {
            return Err(invalid("sma_window must be >= 1 and bollinger_window >= 2"));
        }
        if !(self.bollinger_width > 0.0 && self.bollinger_width.is_finite()) {
            return Err(invalid("bollinger_width must be positive"));
        }
        if self.window == 0 || self.stride == 0 {
            return Err(invalid("window and stride must be >= 1"));
        }
        let f = self.split_fractions();
        let sum = f.train + f.val + f.test;
        if [f.train, f.val, f.test].iter().any(|&x| x.is_nan() || x <= 0.0) || (sum - 1.0).abs() > 1e-9 {
            return Err(invalid("split fractions must be positive and sum to 1"));
        }
        self.train_config()
            .validate()
            .map_err(|e| invalid(e.to_string()))
    }

    fn scale_kind(&self, s: &str) -> Result<ScaleKind, PipelineError> {
        s.parse().map_err(invalid)
    }

    /// Checks that every configured input file exists.
    pub fn check_inputs(&self) -> Result<(), PipelineError> {
        let price = self
            .price_csv
            .as_ref()
            .ok_or_else(|| invalid("price_csv is required"))?;
        let mut paths = vec![price];
        if self.include_tweet_features {
            paths.push(
                self.tweets_jsonl
                    .as_ref()
                    .ok_or_else(|| invalid("tweets_jsonl is required when tweet features are enabled"))?,
            );
        }
        paths.extend(self.lexicon.iter());
        for p in paths {
            if !p.is_file() {
                return Err(PipelineError::MissingInput {
                    path: p.clone(),
                    reason: "no such file".into(),
                });
            }
        }
        Ok(())
    }

    pub fn indicator_config(&self) -> IndicatorConfig {
        IndicatorConfig {
            sma_window: self.sma_window,
            bollinger_window: self.bollinger_window,
            bollinger_width: self.bollinger_width,
        }
    }

    pub fn split_fractions(&self) -> SplitFractions {
        SplitFractions {
            train: self.train_fraction,
            val: self.val_fraction,
            test: self.test_fraction,
        }
    }

    pub fn tweet_columns(&self) -> TweetColumns {
        match (self.include_tweet_features, self.include_attribute_features) {
            (false, _) => TweetColumns::None,
            (true, false) => TweetColumns::SentimentOnly,
            (true, true) => TweetColumns::All,
        }
    }

    pub fn scaling_plan(&self) -> Result<ScalingPlan, PipelineError> {
        let plan = ScalingPlan {
            default: self.scale_kind(&self.scaling)?,
            ..ScalingPlan::default()
        };
        Ok(plan.with("sum_followers", self.scale_kind(&self.follower_scaling)?))
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            epochs: self.epochs,
            learning_rate: self.learning_rate,
            decay: self.decay,
            batch_size: self.batch_size,
            seed: self.seed,
            dropout_p: self.dropout,
            window: self.window,
            clip_norm: self.clip_norm,
            hidden: self.hidden,
            dense: self.dense,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_text_is_default() {
        assert_eq!(RunConfig::parse("", &[]).unwrap(), RunConfig::default());
    }

    #[test]
    fn defaults_match_training_defaults() {
        let c = RunConfig::default();
        assert_eq!(c.epochs, 100);
        assert_eq!(c.learning_rate, 0.008);
        assert_eq!(c.decay, 0.97);
        assert_eq!(c.window, 7);
        assert_eq!((c.train_fraction, c.val_fraction, c.test_fraction), (0.63, 0.07, 0.30));
        assert_eq!((c.hidden, c.dense, c.dropout), (200, 200, 0.2));
    }

    #[test]
    fn overrides_win() {
        let c = RunConfig::parse(
            "epochs = 5\nscaling = \"standard\"\n",
            &["epochs=9".into(), "output_dir=out/x".into(), "shuffle = false".into()],
        )
        .unwrap();
        assert_eq!(c.epochs, 9);
        assert_eq!(c.scaling, "standard");
        assert_eq!(c.output_dir, PathBuf::from("out/x"));
        assert!(!c.shuffle);
    }

    #[test]
    fn rejects_bad_values() {
        for bad in [
            "epochs = 0",
            "bogus_key = 1",
            "scaling = \"cubic\"",
            "train_fraction = 0.5",
            "window = 0",
            "epochs = \"many\"",
            "decay = 1.5",
        ] {
            assert!(
                matches!(RunConfig::parse(bad, &[]), Err(PipelineError::Config(_))),
                "{bad}"
            );
        }
        assert!(RunConfig::parse("", &["novalue".into()]).is_err());
    }

    #[test]
    fn toml_round_trip() {
        let c = RunConfig {
            price_csv: Some("data/p.csv".into()),
            seed: 42,
            include_attribute_features: false,
            ..RunConfig::default()
        };
        assert_eq!(RunConfig::parse(&c.to_toml(), &[]).unwrap(), c);
    }

    #[test]
    fn tweet_column_flags() {
        let mut c = RunConfig::default();
        assert_eq!(c.tweet_columns(), TweetColumns::All);
        c.include_attribute_features = false;
        assert_eq!(c.tweet_columns(), TweetColumns::SentimentOnly);
        c.include_tweet_features = false;
        assert_eq!(c.tweet_columns(), TweetColumns::None);
    }

    #[test]
    fn missing_inputs_reported() {
        let c = RunConfig {
            price_csv: Some("/nonexistent/prices.csv".into()),
            include_tweet_features: false,
            ..RunConfig::default()
        };
        assert!(matches!(c.check_inputs(), Err(PipelineError::MissingInput { .. })));
        assert!(matches!(
            RunConfig::default().check_inputs(),
            Err(PipelineError::Config(_))
        ));
    }
}
