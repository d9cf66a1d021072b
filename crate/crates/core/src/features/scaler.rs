use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::ops::Range;
use std::str::FromStr;

use super::table::{FeatureTable, SENTIMENT_COLUMN};
use super::FeatureError;

const PARAMS_HEADER: &str = "# stockcast scaler v1";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScaleKind {
    MinMax,
    Standard,
    /// Sigmoid of the standardized `ln(1 + x)`; meant for heavy-tailed counts.
    SigmoidLog,
    Identity,
}

impl ScaleKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            ScaleKind::MinMax => "minmax",
            ScaleKind::Standard => "standard",
            ScaleKind::SigmoidLog => "sigmoid-log",
            ScaleKind::Identity => "identity",
        }
    }
}

impl FromStr for ScaleKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "minmax" => Ok(ScaleKind::MinMax),
            "standard" => Ok(ScaleKind::Standard),
            "sigmoid-log" => Ok(ScaleKind::SigmoidLog),
            "identity" => Ok(ScaleKind::Identity),
            other => Err(format!("unknown scaling kind `{other}`")),
        }
    }
}

/// Default kind plus per-column overrides. The sentiment column is always
/// passed through unscaled.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalingPlan {
    pub default: ScaleKind,
    pub overrides: BTreeMap<String, ScaleKind>,
}

impl Default for ScalingPlan {
    fn default() -> Self {
        Self {
            default: ScaleKind::MinMax,
            overrides: BTreeMap::new(),
        }
    }
}

impl ScalingPlan {
    pub fn with(mut self, column: &str, kind: ScaleKind) -> Self {
        self.overrides.insert(column.to_string(), kind);
        self
    }

    pub fn kind_for(&self, column: &str) -> ScaleKind {
        if column == SENTIMENT_COLUMN {
            ScaleKind::Identity
        } else {
            self.overrides.get(column).copied().unwrap_or(self.default)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ColumnScaler {
    MinMax { min: f64, max: f64 },
    Standard { mean: f64, std: f64 },
    SigmoidLog { mean: f64, std: f64 },
    Identity,
}

fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

// Zero spread standardizes by 1 so transform stays invertible.
fn spread(std: f64) -> f64 {
    if std > 0.0 {
        std
    } else {
        1.0
    }
}

impl ColumnScaler {
    pub fn fit(kind: ScaleKind, xs: &[f64]) -> Self {
        match kind {
            ScaleKind::MinMax => ColumnScaler::MinMax {
                min: xs.iter().copied().fold(f64::INFINITY, f64::min),
                max: xs.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            },
            ScaleKind::Standard => {
                let (mean, std) = mean_std(xs);
                ColumnScaler::Standard { mean, std }
            }
            ScaleKind::SigmoidLog => {
                let logs: Vec<f64> = xs.iter().map(|x| x.max(0.0).ln_1p()).collect();
                let (mean, std) = mean_std(&logs);
                ColumnScaler::SigmoidLog { mean, std }
            }
            ScaleKind::Identity => ColumnScaler::Identity,
        }
    }

    pub fn kind(&self) -> ScaleKind {
        match self {
            ColumnScaler::MinMax { .. } => ScaleKind::MinMax,
            ColumnScaler::Standard { .. } => ScaleKind::Standard,
            ColumnScaler::SigmoidLog { .. } => ScaleKind::SigmoidLog,
            ColumnScaler::Identity => ScaleKind::Identity,
        }
    }

    /// A constant column under min-max maps to 0.5.
    pub fn transform(&self, x: f64) -> f64 {
        match *self {
            ColumnScaler::MinMax { min, max } => {
                if max > min {
                    (x - min) / (max - min)
                } else {
                    0.5
                }
            }
            ColumnScaler::Standard { mean, std } => (x - mean) / spread(std),
            ColumnScaler::SigmoidLog { mean, std } => {
                let z = (x.max(0.0).ln_1p() - mean) / spread(std);
                1.0 / (1.0 + (-z).exp())
            }
            ColumnScaler::Identity => x,
        }
    }

    pub fn inverse(&self, y: f64) -> f64 {
        match *self {
            ColumnScaler::MinMax { min, max } => {
                if max > min {
                    min + y * (max - min)
                } else {
                    min
                }
            }
            ColumnScaler::Standard { mean, std } => mean + y * spread(std),
            ColumnScaler::SigmoidLog { mean, std } => {
                let z = (y / (1.0 - y)).ln();
                (z * spread(std) + mean).exp_m1()
            }
            ColumnScaler::Identity => y,
        }
    }

    fn params(&self) -> Vec<(&'static str, f64)> {
        match *self {
            ColumnScaler::MinMax { min, max } => vec![("min", min), ("max", max)],
            ColumnScaler::Standard { mean, std } | ColumnScaler::SigmoidLog { mean, std } => {
                vec![("mean", mean), ("std", std)]
            }
            ColumnScaler::Identity => Vec::new(),
        }
    }
}

/// Per-column scalers fitted on training rows. The target shares the
/// `close` column's parameters so predictions map back to prices.
#[derive(Debug, Clone, PartialEq)]
pub struct Scaler {
    pub columns: Vec<(String, ColumnScaler)>,
    pub target: ColumnScaler,
}

// First line, kind and parameters of one column in a params file.
type Entry = (usize, Option<ScaleKind>, BTreeMap<String, f64>);

impl Scaler {
    /// Fits every column on `train_rows` only.
    pub fn fit(
        table: &FeatureTable,
        train_rows: Range<usize>,
        plan: &ScalingPlan,
    ) -> Result<Self, FeatureError> {
        if train_rows.is_empty() || train_rows.end > table.rows() {
            return Err(FeatureError::EmptyTrainRows);
        }
        let columns: Vec<(String, ColumnScaler)> = table
            .columns
            .iter()
            .map(|c| {
                let kind = plan.kind_for(&c.name);
                (c.name.clone(), ColumnScaler::fit(kind, &c.values[train_rows.clone()]))
            })
            .collect();
        let target = columns
            .iter()
            .find(|(n, _)| n == "close")
            .map(|(_, s)| *s)
            .unwrap_or_else(|| ColumnScaler::fit(plan.default, &table.target[train_rows]));
        Ok(Self { columns, target })
    }

    fn scaler_for(&self, name: &str) -> Result<&ColumnScaler, FeatureError> {
        self.columns
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, s)| s)
            .ok_or_else(|| FeatureError::UnfittedScaler(name.to_string()))
    }

    fn map(
        &self,
        table: &FeatureTable,
        f: impl Fn(&ColumnScaler, f64) -> f64,
    ) -> Result<FeatureTable, FeatureError> {
        let mut out = table.clone();
        for c in &mut out.columns {
            let s = self.scaler_for(&c.name)?;
            c.values.iter_mut().for_each(|v| *v = f(s, *v));
        }
        out.target.iter_mut().for_each(|v| *v = f(&self.target, *v));
        Ok(out)
    }

    pub fn transform(&self, table: &FeatureTable) -> Result<FeatureTable, FeatureError> {
        self.map(table, ColumnScaler::transform)
    }

    pub fn inverse_transform(&self, table: &FeatureTable) -> Result<FeatureTable, FeatureError> {
        self.map(table, ColumnScaler::inverse)
    }

    pub fn inverse_target(&self, y: f64) -> f64 {
        self.target.inverse(y)
    }

    /// Key-value text; floats use the shortest exact representation.
    pub fn to_params_string(&self) -> String {
        let mut out = format!("{PARAMS_HEADER}\n");
        let mut entry = |prefix: &str, s: &ColumnScaler| {
            let _ = writeln!(out, "{prefix}.kind = {}", s.kind().as_str());
            for (k, v) in s.params() {
                let _ = writeln!(out, "{prefix}.{k} = {v:?}");
            }
        };
        for (name, s) in &self.columns {
            entry(&format!("column.{name}"), s);
        }
        entry("target", &self.target);
        out
    }

    pub fn from_params_str(text: &str) -> Result<Self, FeatureError> {
        let bad = |line: usize, reason: &str| FeatureError::Malformed {
            line,
            reason: reason.to_string(),
        };
        // prefix -> (first line, kind, params) in file order
        let mut order: Vec<String> = Vec::new();
        let mut entries: BTreeMap<String, Entry> = BTreeMap::new();
        for (i, line) in text.lines().enumerate() {
            let line_no = i + 1;
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| bad(line_no, "expected `key = value`"))?;
            let (prefix, field) = key
                .trim()
                .rsplit_once('.')
                .ok_or_else(|| bad(line_no, "key needs a `.field` suffix"))?;
            let value = value.trim();
            if !entries.contains_key(prefix) {
                order.push(prefix.to_string());
            }
            let e = entries
                .entry(prefix.to_string())
                .or_insert((line_no, None, BTreeMap::new()));
            if field == "kind" {
                e.1 = Some(value.parse().map_err(|m: String| bad(line_no, &m))?);
            } else {
                let v: f64 = value.parse().map_err(|_| bad(line_no, "bad number"))?;
                e.2.insert(field.to_string(), v);
            }
        }

        let build = |prefix: &str| -> Result<ColumnScaler, FeatureError> {
            let (line, kind, params) = &entries[prefix];
            let get = |k: &str| {
                params
                    .get(k)
                    .copied()
                    .ok_or_else(|| bad(*line, &format!("`{prefix}` is missing `{k}`")))
            };
            Ok(match kind.ok_or_else(|| bad(*line, "missing kind"))? {
                ScaleKind::MinMax => ColumnScaler::MinMax {
                    min: get("min")?,
                    max: get("max")?,
                },
                ScaleKind::Standard => ColumnScaler::Standard {
                    mean: get("mean")?,
                    std: get("std")?,
                },
                ScaleKind::SigmoidLog => ColumnScaler::SigmoidLog {
                    mean: get("mean")?,
                    std: get("std")?,
                },
                ScaleKind::Identity => ColumnScaler::Identity,
            })
        };

        let mut columns = Vec::new();
        let mut target = None;
        for prefix in &order {
            if let Some(name) = prefix.strip_prefix("column.") {
                columns.push((name.to_string(), build(prefix)?));
            } else if prefix == "target" {
                target = Some(build(prefix)?);
            } else {
                return Err(bad(entries[prefix].0, "unknown key prefix"));
            }
        }
        Ok(Self {
            columns,
            target: target.ok_or_else(|| bad(0, "missing target entry"))?,
        })
    }
}
