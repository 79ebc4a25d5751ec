//! Run configuration (JSON).

use std::collections::BTreeMap;
use std::path::PathBuf;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use super::AppError;
use crate::dataset::{Segment, SegmentSplit};
use crate::indicators::IndicatorConfig;
use crate::ingest::{FetchConfig, DAILY};
use crate::models::{validate_params, ModelKind, Params};
use crate::synthetic::SyntheticConfig;
use crate::trading::CostModel;
use crate::walkforward::{WalkForwardConfig, WalkForwardMode, DEFAULT_WINDOWS};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "lowercase")]
pub enum DataSource {
    Csv {
        path: PathBuf,
    },
    Fetch {
        symbol: String,
        start: NaiveDate,
        end: NaiveDate,
        #[serde(default)]
        client: FetchConfig,
    },
    Synthetic(SyntheticConfig),
}

/// Segment boundaries as UTC dates; each segment ends where the next begins.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitDates {
    pub train_start: NaiveDate,
    pub backtest_start: NaiveDate,
    pub forward_start: NaiveDate,
    pub end: NaiveDate,
}

impl Default for SplitDates {
    fn default() -> Self {
        let d = |y, m, day| NaiveDate::from_ymd_opt(y, m, day).expect("valid date");
        Self {
            train_start: d(2013, 1, 1),
            backtest_start: d(2023, 2, 1),
            forward_start: d(2023, 8, 1),
            end: d(2023, 11, 1),
        }
    }
}

fn midnight(d: NaiveDate) -> i64 {
    d.and_hms_opt(0, 0, 0).expect("midnight").and_utc().timestamp()
}

impl SplitDates {
    pub fn to_split(&self) -> Result<SegmentSplit, AppError> {
        SegmentSplit::at(
            midnight(self.train_start),
            midnight(self.backtest_start),
            midnight(self.forward_start),
            midnight(self.end),
        )
        .map_err(|e| AppError::Config(e.to_string()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TuningConfig {
    #[serde(default = "default_trials")]
    pub n_trials: usize,
    #[serde(default = "default_objective")]
    pub objective_segment: Segment,
}

fn default_trials() -> usize {
    100
}

fn default_objective() -> Segment {
    Segment::Backtest
}

impl Default for TuningConfig {
    fn default() -> Self {
        Self { n_trials: default_trials(), objective_segment: default_objective() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub data: DataSource,
    /// Candle interval in seconds.
    #[serde(default = "default_interval")]
    pub interval: i64,
    #[serde(default)]
    pub indicators: IndicatorConfig,
    #[serde(default)]
    pub split: SplitDates,
    /// Model names (`sgd_c`, `random_forest_r`, ...) or `["all"]`.
    #[serde(default = "all_models")]
    pub models: Vec<String>,
    #[serde(default = "default_windows")]
    pub windows: Vec<usize>,
    #[serde(default)]
    pub mode: WalkForwardMode,
    #[serde(default = "one")]
    pub retrain_stride: usize,
    #[serde(default)]
    pub fee_bps: f64,
    #[serde(default)]
    pub dead_band: f64,
    #[serde(default)]
    pub risk_free_rate: f64,
    #[serde(default)]
    pub tuner: Option<TuningConfig>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_out")]
    pub out_dir: PathBuf,
    /// Run (model, window) jobs and tuner trials on the thread pool.
    #[serde(default = "yes")]
    pub parallel: bool,
    /// Fixed parameters per model name; tuned parameters override them.
    #[serde(default)]
    pub params: BTreeMap<String, Params>,
}

fn default_interval() -> i64 {
    DAILY
}

fn all_models() -> Vec<String> {
    vec!["all".into()]
}

fn default_windows() -> Vec<usize> {
    DEFAULT_WINDOWS.to_vec()
}

fn one() -> usize {
    1
}

fn default_out() -> PathBuf {
    PathBuf::from("runs")
}

fn yes() -> bool {
    true
}

impl RunConfig {
    pub fn new(data: DataSource) -> Self {
        Self {
            data,
            interval: default_interval(),
            indicators: IndicatorConfig::default(),
            split: SplitDates::default(),
            models: all_models(),
            windows: default_windows(),
            mode: WalkForwardMode::default(),
            retrain_stride: 1,
            fee_bps: 0.0,
            dead_band: 0.0,
            risk_free_rate: 0.0,
            tuner: None,
            seed: 0,
            out_dir: default_out(),
            parallel: true,
            params: BTreeMap::new(),
        }
    }

    pub fn from_json(text: &str) -> Result<Self, AppError> {
        let cfg: RunConfig = serde_json::from_str(text).map_err(|e| AppError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    /// Expands `all` and parses names, keeping first occurrences in order.
    pub fn model_kinds(&self) -> Result<Vec<ModelKind>, AppError> {
        let mut kinds = Vec::new();
        for name in &self.models {
            let batch: Vec<ModelKind> = if name == "all" {
                ModelKind::ALL.to_vec()
            } else {
                vec![name.parse().map_err(|e: crate::models::ModelError| AppError::Config(e.to_string()))?]
            };
            for k in batch {
                if !kinds.contains(&k) {
                    kinds.push(k);
                }
            }
        }
        Ok(kinds)
    }

    pub fn params_for(&self, kind: ModelKind) -> Params {
        self.params.get(kind.name()).cloned().unwrap_or_default()
    }

    pub fn cost(&self) -> CostModel {
        CostModel { fee_bps: self.fee_bps }
    }

    pub fn walkforward(&self, window: usize) -> WalkForwardConfig {
        WalkForwardConfig { window, mode: self.mode, retrain_stride: self.retrain_stride }
    }

    pub fn validate(&self) -> Result<(), AppError> {
        let bad = |m: String| Err(AppError::Config(m));
        let kinds = self.model_kinds()?;
        if kinds.is_empty() {
            return bad("at least one model is required".into());
        }
        if self.windows.is_empty() {
            return bad("at least one window is required".into());
        }
        for &w in &self.windows {
            self.walkforward(w).validate().map_err(|e| AppError::Config(e.to_string()))?;
        }
        if self.interval <= 0 {
            return bad(format!("interval must be positive, got {}", self.interval));
        }
        self.indicators.validate().map_err(|e| AppError::Config(e.to_string()))?;
        self.split.to_split()?;
        self.cost().validate().map_err(|e| AppError::Config(e.to_string()))?;
        if !(self.dead_band.is_finite() && self.dead_band >= 0.0) {
            return bad(format!("dead_band must be finite and >= 0, got {}", self.dead_band));
        }
        if !self.risk_free_rate.is_finite() {
            return bad("risk_free_rate must be finite".into());
        }
        if let Some(t) = &self.tuner {
            if t.n_trials == 0 {
                return bad("tuner.n_trials must be >= 1".into());
            }
        }
        for (name, params) in &self.params {
            let kind: ModelKind = name.parse().map_err(|e: crate::models::ModelError| AppError::Config(e.to_string()))?;
            validate_params(kind, params).map_err(|e| AppError::Config(e.to_string()))?;
        }
        if let DataSource::Fetch { start, end, client, .. } = &self.data {
            if start >= end {
                return bad("fetch start must precede end".into());
            }
            client.validate().map_err(|e| AppError::Config(e.to_string()))?;
        }
        Ok(())
    }
}
