//! Rolling-window training and one-step-ahead prediction.
//!
//! In trailing mode the model used at row `t` is fitted on rows
//! `[t - window, t)`, whose targets end with the return realized at `t`, so
//! nothing after `t` is read. The window is a row count (days at a daily
//! interval) and may reach back across segment boundaries.

use std::fmt::Write as _;
use std::ops::Range;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::{DatasetView, Direction};
use crate::models::{self, ModelError, ModelSpec, Prediction, Targets, Task, TrainedModel};
use crate::trading::{Position, PositionSeries};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum WalkForwardError {
    #[error("no evaluable row in segment `{segment}`: window {window} needs history from row {first_usable}")]
    InsufficientHistory { segment: &'static str, window: usize, first_usable: usize },
    #[error("invalid walk-forward config: {0}")]
    InvalidConfig(String),
    #[error("fit at row {index} failed: {source}")]
    Fit { index: usize, source: ModelError },
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WalkForwardMode {
    /// Refit on the trailing window before each prediction.
    #[default]
    Trailing,
    /// Fit once on every usable row before the segment starts.
    Global,
}

impl std::str::FromStr for WalkForwardMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "trailing" => Ok(WalkForwardMode::Trailing),
            "global" => Ok(WalkForwardMode::Global),
            other => Err(format!("unknown walk-forward mode `{other}`")),
        }
    }
}

pub const DEFAULT_WINDOWS: [usize; 5] = [1, 7, 14, 21, 28];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct WalkForwardConfig {
    pub window: usize,
    #[serde(default)]
    pub mode: WalkForwardMode,
    #[serde(default = "one")]
    pub retrain_stride: usize,
}

fn one() -> usize {
    1
}

impl WalkForwardConfig {
    pub fn trailing(window: usize) -> Self {
        Self { window, mode: WalkForwardMode::Trailing, retrain_stride: 1 }
    }

    pub fn validate(&self) -> Result<(), WalkForwardError> {
        if self.window == 0 {
            return Err(WalkForwardError::InvalidConfig("window must be >= 1".into()));
        }
        if self.retrain_stride == 0 {
            return Err(WalkForwardError::InvalidConfig("retrain_stride must be >= 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionRecord {
    pub index: usize,
    pub timestamp: i64,
    pub direction: Direction,
    pub score: f64,
    /// Predicted log return (regressors only).
    pub value: Option<f64>,
    pub realized_class: Direction,
    pub realized_return: f64,
    /// Rows the model was fitted on.
    pub train_range: Range<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionSeries {
    pub task: Task,
    pub records: Vec<PredictionRecord>,
}

impl PredictionSeries {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn timestamps(&self) -> Vec<i64> {
        self.records.iter().map(|r| r.timestamp).collect()
    }

    /// `timestamp,direction,score,value,realized_class,realized_return`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("timestamp,direction,score,value,realized_class,realized_return\n");
        for r in &self.records {
            let value = r.value.map(|v| v.to_string()).unwrap_or_default();
            let _ = writeln!(
                out,
                "{},{},{},{},{},{}",
                r.timestamp,
                r.direction.as_str(),
                r.score,
                value,
                r.realized_class.as_str(),
                r.realized_return
            );
        }
        out
    }
}

fn fit_range(spec: &ModelSpec, view: &DatasetView<'_>, rows: Range<usize>) -> Result<TrainedModel, WalkForwardError> {
    let ds = view.parent;
    let x = &ds.frame.rows[rows.clone()];
    let err = |source| WalkForwardError::Fit { index: rows.end, source };
    match spec.kind.task() {
        Task::Classifier => {
            let y: Vec<Direction> = ds.class_target[rows.clone()].iter().map(|c| c.expect("usable row")).collect();
            models::fit(spec, x, Targets::Class(&y)).map_err(err)
        }
        Task::Regressor => {
            let y: Vec<f64> = ds.reg_target[rows.clone()].iter().map(|c| c.expect("usable row")).collect();
            models::fit(spec, x, Targets::Value(&y)).map_err(err)
        }
    }
}

/// Runs the rolling-window procedure over every row of `view`.
///
/// Trailing mode evaluates rows from `max(view.start, valid_from + window)`;
/// with `retrain_stride = k` the model is refitted on every k-th evaluated row
/// and reused in between. Global mode fits once on all usable rows that
/// precede the view.
pub fn run_walkforward(
    view: &DatasetView<'_>,
    spec: &ModelSpec,
    config: &WalkForwardConfig,
) -> Result<PredictionSeries, WalkForwardError> {
    config.validate()?;
    spec.validate().map_err(|source| WalkForwardError::Fit { index: view.range.start, source })?;
    let ds = view.parent;
    let first_usable = ds.usable.start;

    let (first, global_rows) = match config.mode {
        WalkForwardMode::Trailing => (view.range.start.max(first_usable + config.window), None),
        WalkForwardMode::Global => {
            let rows = first_usable..view.range.start.max(first_usable);
            (view.range.start.max(first_usable + 1), Some(rows))
        }
    };
    if first >= view.range.end {
        return Err(WalkForwardError::InsufficientHistory {
            segment: view.segment,
            window: config.window,
            first_usable,
        });
    }

    let mut model: Option<(TrainedModel, Range<usize>)> = match global_rows {
        Some(rows) => Some((fit_range(spec, view, rows.clone())?, rows)),
        None => None,
    };

    let mut records = Vec::with_capacity(view.range.end - first);
    for (step, t) in (first..view.range.end).enumerate() {
        if config.mode == WalkForwardMode::Trailing && step % config.retrain_stride == 0 {
            let rows = t - config.window..t;
            model = Some((fit_range(spec, view, rows.clone())?, rows));
        }
        let (m, train_range) = model.as_ref().expect("model fitted before first prediction");
        let prediction = m
            .predict(&ds.frame.rows[t])
            .map_err(|source| WalkForwardError::Fit { index: t, source })?;
        let (direction, score, value) = match prediction {
            Prediction::Class { direction, score } => (direction, score, None),
            Prediction::Value(v) => (Direction::from_sign(v), v, Some(v)),
        };
        records.push(PredictionRecord {
            index: t,
            timestamp: ds.frame.timestamps[t],
            direction,
            score,
            value,
            realized_class: ds.class_target[t].expect("usable row"),
            realized_return: ds.reg_target[t].expect("usable row"),
            train_range: train_range.clone(),
        });
    }
    Ok(PredictionSeries { task: spec.kind.task(), records })
}

/// Classifiers are always in the market (up → long, down → short).
/// Regressors go long above `threshold`, short below `-threshold`, and
/// otherwise hold the previous position (initially flat).
pub fn signal_from_predictions(preds: &PredictionSeries, task: Task, threshold: f64) -> PositionSeries {
    let mut prev = Position::Flat;
    let positions = preds
        .records
        .iter()
        .map(|r| {
            let pos = match task {
                Task::Classifier => match r.direction {
                    Direction::Up => Position::Long,
                    Direction::Down => Position::Short,
                },
                Task::Regressor => {
                    let v = r.value.unwrap_or(r.score);
                    if v > threshold {
                        Position::Long
                    } else if v < -threshold {
                        Position::Short
                    } else {
                        prev
                    }
                }
            };
            prev = pos;
            pos
        })
        .collect();
    PositionSeries::new(preds.timestamps(), positions)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{label, FeatureFrame, LabeledDataset, ReturnSeries};
    use crate::models::{ModelKind, ParamValue};
    use crate::trading::Position::{Flat, Long, Short};

    /// `n` rows, feature = row index, returns from `ret(t)` for t >= 1.
    fn dataset(n: usize, ret: impl Fn(usize) -> f64) -> LabeledDataset {
        let frame = FeatureFrame {
            timestamps: (0..n as i64).collect(),
            feature_names: vec!["x".into()],
            rows: (0..n).map(|i| vec![i as f64]).collect(),
            valid_from: 0,
        };
        let values = (0..n).map(|t| (t > 0).then(|| ret(t))).collect();
        label(frame, &ReturnSeries { values }).unwrap()
    }

    fn view(ds: &LabeledDataset, range: Range<usize>) -> DatasetView<'_> {
        DatasetView { parent: ds, range, segment: "test" }
    }

    #[test]
    fn counts_with_ample_history() {
        let ds = dataset(60, |t| if t % 3 == 0 { 0.01 } else { -0.01 });
        let v = view(&ds, 30..50);
        let p = run_walkforward(&v, &ModelSpec::new(ModelKind::KnnC), &WalkForwardConfig::trailing(7)).unwrap();
        assert_eq!(p.len(), 20);
        for r in &p.records {
            assert_eq!(r.train_range, r.index - 7..r.index);
        }
    }

    #[test]
    fn seven_day_window_without_history() {
        // Rows 0..=9 are evaluable (row 10 exists only to give row 9 a target).
        let ds = dataset(11, |t| 0.01 * t as f64);
        let v = view(&ds, 0..10);
        let p = run_walkforward(&v, &ModelSpec::new(ModelKind::OlsR), &WalkForwardConfig::trailing(7)).unwrap();
        assert_eq!(p.records.iter().map(|r| r.index).collect::<Vec<_>>(), vec![7, 8, 9]);
        assert_eq!(p.records[0].train_range, 0..7);

        let short = view(&ds, 0..5);
        assert!(matches!(
            run_walkforward(&short, &ModelSpec::new(ModelKind::OlsR), &WalkForwardConfig::trailing(7)),
            Err(WalkForwardError::InsufficientHistory { .. })
        ));
    }

    #[test]
    fn window_one_constant_model_tracks_persistent_labels() {
        // Direction at each row equals the previous row's, in runs of 4.
        let ds = dataset(80, |t| if (t / 4) % 2 == 0 { 0.02 } else { -0.02 });
        // Keep only rows whose label matches the previous row's label.
        let p = run_walkforward(&view(&ds, 1..79), &ModelSpec::new(ModelKind::DecisionTreeC), &WalkForwardConfig::trailing(1))
            .unwrap();
        for r in &p.records {
            let prev = ds.class_target[r.index - 1].unwrap();
            assert_eq!(r.direction, prev);
            if prev == r.realized_class {
                assert_eq!(r.direction, r.realized_class);
            }
        }
    }

    #[test]
    fn stride_reuses_models() {
        let ds = dataset(60, |t| ((t as f64) * 0.7).sin() * 0.01);
        let v = view(&ds, 20..50);
        let spec = ModelSpec::new(ModelKind::RidgeR).with_param("alpha", ParamValue::Float(0.1));
        let every = run_walkforward(&v, &spec, &WalkForwardConfig::trailing(10)).unwrap();
        let cfg = WalkForwardConfig { retrain_stride: 5, ..WalkForwardConfig::trailing(10) };
        let strided = run_walkforward(&v, &spec, &cfg).unwrap();
        assert_eq!(every.len(), strided.len());
        for (i, (a, b)) in every.records.iter().zip(&strided.records).enumerate() {
            if i % 5 == 0 {
                assert_eq!(a, b);
            } else {
                assert_eq!(b.train_range, strided.records[i - i % 5].train_range);
            }
        }
    }

    #[test]
    fn global_mode_fits_once_on_prior_rows() {
        let ds = dataset(60, |t| if t % 2 == 0 { 0.01 } else { -0.02 });
        let cfg = WalkForwardConfig { mode: WalkForwardMode::Global, ..WalkForwardConfig::trailing(7) };
        let p = run_walkforward(&view(&ds, 40..59), &ModelSpec::new(ModelKind::OlsR), &cfg).unwrap();
        assert_eq!(p.len(), 19);
        assert!(p.records.iter().all(|r| r.train_range == (0..40)));
    }

    fn series(task: Task, vals: &[f64]) -> PredictionSeries {
        let records = vals
            .iter()
            .enumerate()
            .map(|(i, &v)| PredictionRecord {
                index: i,
                timestamp: i as i64,
                direction: Direction::from_sign(v),
                score: v,
                value: (task == Task::Regressor).then_some(v),
                realized_class: Direction::Up,
                realized_return: 0.0,
                train_range: 0..0,
            })
            .collect();
        PredictionSeries { task, records }
    }

    #[test]
    fn signal_rules() {
        let p = signal_from_predictions(&series(Task::Classifier, &[0.2, 0.1, -0.3]), Task::Classifier, 0.0);
        assert_eq!(p.positions, vec![Long, Long, Short]);
        let p = signal_from_predictions(&series(Task::Regressor, &[0.02, -0.01]), Task::Regressor, 0.0);
        assert_eq!(p.positions, vec![Long, Short]);
        let p = signal_from_predictions(&series(Task::Regressor, &[0.001, -0.002]), Task::Regressor, 0.005);
        assert_eq!(p.positions, vec![Flat, Flat]);
        let p = signal_from_predictions(&series(Task::Regressor, &[0.01, 0.001, -0.01, 0.0]), Task::Regressor, 0.005);
        assert_eq!(p.positions, vec![Long, Long, Short, Short]);
    }
}
