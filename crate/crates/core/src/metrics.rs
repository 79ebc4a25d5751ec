//! Statistical metrics and per-(model, window, segment) evaluation reports.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::{Direction, Segment};
use crate::models::{ModelKind, Params, Task};
use crate::trading::EquityCurve;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricError {
    #[error("need at least {needed} observations, got {got}")]
    TooFewObservations { needed: usize, got: usize },
    #[error("zero volatility: Sharpe ratio undefined")]
    ZeroVolatility,
    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("truth is constant: R² undefined")]
    ConstantTruth,
    #[error("equity curve is constant: trend R² undefined")]
    ConstantCurve,
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// Annualized Sharpe ratio with sample (n − 1) standard deviation.
pub fn sharpe(step_returns: &[f64], risk_free_rate: f64, periods_per_year: f64) -> Result<f64, MetricError> {
    let n = step_returns.len();
    if n < 2 {
        return Err(MetricError::TooFewObservations { needed: 2, got: n });
    }
    let m = mean(step_returns);
    let var = step_returns.iter().map(|r| (r - m).powi(2)).sum::<f64>() / (n - 1) as f64;
    let sd = var.sqrt();
    if sd == 0.0 || step_returns.iter().all(|r| *r == step_returns[0]) {
        return Err(MetricError::ZeroVolatility);
    }
    Ok((m - risk_free_rate / periods_per_year) / sd * periods_per_year.sqrt())
}

/// Periods per year for a candle interval in seconds (365-day year).
pub fn periods_per_year(interval_secs: i64) -> f64 {
    365.0 * 86_400.0 / interval_secs as f64
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassificationScores {
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

/// Confusion-matrix scores with `up` as the positive class. Zero
/// denominators give 0.
pub fn classification_metrics(y_true: &[Direction], y_pred: &[Direction]) -> Result<ClassificationScores, MetricError> {
    if y_true.len() != y_pred.len() {
        return Err(MetricError::LengthMismatch(y_true.len(), y_pred.len()));
    }
    if y_true.is_empty() {
        return Err(MetricError::TooFewObservations { needed: 1, got: 0 });
    }
    let (mut tp, mut fp, mut fn_, mut tn) = (0usize, 0usize, 0usize, 0usize);
    for (t, p) in y_true.iter().zip(y_pred) {
        match (t, p) {
            (Direction::Up, Direction::Up) => tp += 1,
            (Direction::Down, Direction::Up) => fp += 1,
            (Direction::Up, Direction::Down) => fn_ += 1,
            (Direction::Down, Direction::Down) => tn += 1,
        }
    }
    let ratio = |a: usize, b: usize| if b == 0 { 0.0 } else { a as f64 / b as f64 };
    let precision = ratio(tp, tp + fp);
    let recall = ratio(tp, tp + fn_);
    let f1 = if precision + recall == 0.0 { 0.0 } else { 2.0 * precision * recall / (precision + recall) };
    Ok(ClassificationScores { accuracy: ratio(tp + tn, y_true.len()), precision, recall, f1 })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegressionErrors {
    pub mae: f64,
    pub mse: f64,
    pub rmse: f64,
}

pub fn regression_errors(y_true: &[f64], y_pred: &[f64]) -> Result<RegressionErrors, MetricError> {
    if y_true.len() != y_pred.len() {
        return Err(MetricError::LengthMismatch(y_true.len(), y_pred.len()));
    }
    if y_true.is_empty() {
        return Err(MetricError::TooFewObservations { needed: 1, got: 0 });
    }
    let n = y_true.len() as f64;
    let (abs, sq) = y_true
        .iter()
        .zip(y_pred)
        .fold((0.0, 0.0), |(a, s), (t, p)| (a + (t - p).abs(), s + (t - p).powi(2)));
    let mse = sq / n;
    Ok(RegressionErrors { mae: abs / n, mse, rmse: mse.sqrt() })
}

/// Coefficient of determination `1 − SS_res / SS_tot`.
pub fn r_squared(y_true: &[f64], y_pred: &[f64]) -> Result<f64, MetricError> {
    if y_true.len() != y_pred.len() {
        return Err(MetricError::LengthMismatch(y_true.len(), y_pred.len()));
    }
    if y_true.len() < 2 {
        return Err(MetricError::TooFewObservations { needed: 2, got: y_true.len() });
    }
    if y_true.iter().all(|v| *v == y_true[0]) {
        return Err(MetricError::ConstantTruth);
    }
    let m = mean(y_true);
    let ss_tot: f64 = y_true.iter().map(|t| (t - m).powi(2)).sum();
    let ss_res: f64 = y_true.iter().zip(y_pred).map(|(t, p)| (t - p).powi(2)).sum();
    Ok(1.0 - ss_res / ss_tot)
}

/// R² of the least-squares line through equity versus step index; a measure
/// of how steadily the curve grows (or shrinks).
pub fn equity_trend_r2(curve: &EquityCurve) -> Result<f64, MetricError> {
    let y = &curve.equity;
    if y.len() < 3 {
        return Err(MetricError::TooFewObservations { needed: 3, got: y.len() });
    }
    if y.iter().all(|v| *v == y[0]) {
        return Err(MetricError::ConstantCurve);
    }
    let n = y.len() as f64;
    let x_mean = (n - 1.0) / 2.0;
    let y_mean = mean(y);
    let (mut sxy, mut sxx) = (0.0, 0.0);
    for (i, v) in y.iter().enumerate() {
        let dx = i as f64 - x_mean;
        sxy += dx * (v - y_mean);
        sxx += dx * dx;
    }
    let slope = sxy / sxx;
    let fitted: Vec<f64> = (0..y.len()).map(|i| y_mean + slope * (i as f64 - x_mean)).collect();
    r_squared(y, &fitted).map_err(|_| MetricError::ConstantCurve)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "task", rename_all = "lowercase")]
pub enum TaskMetrics {
    Classifier(ClassificationScores),
    Regressor(RegressionErrors),
}

/// One table row: every metric for a (model, window, segment) evaluation.
///
/// `r2` is the equity-trend R² for classifiers and the prediction R² for
/// regressors. `sharpe` and `r2` are `None` where undefined.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub kind: ModelKind,
    pub window: usize,
    pub segment: Segment,
    pub params: Params,
    pub pnl_percent: f64,
    pub sharpe: Option<f64>,
    pub r2: Option<f64>,
    pub n_trades: usize,
    pub n_predictions: usize,
    pub metrics: TaskMetrics,
}

impl EvalReport {
    pub fn task(&self) -> Task {
        self.kind.task()
    }
}
