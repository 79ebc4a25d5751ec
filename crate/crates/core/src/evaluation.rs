//! One (model, window, segment) evaluation: walk-forward predictions, signals,
//! simulation and metrics.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::{DatasetView, Direction, Segment};
use crate::metrics::{
    classification_metrics, equity_trend_r2, r_squared, regression_errors, sharpe, EvalReport, MetricError,
    TaskMetrics,
};
use crate::models::{ModelSpec, Task};
use crate::trading::{
    count_trades, pnl_percent, simple_from_log, simulate, CostModel, EquityCurve, Position, PositionSeries,
    TradeLedger, TradingError,
};
use crate::walkforward::{run_walkforward, signal_from_predictions, PredictionSeries, WalkForwardConfig, WalkForwardError};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EvalError {
    #[error(transparent)]
    WalkForward(#[from] WalkForwardError),
    #[error(transparent)]
    Trading(#[from] TradingError),
    #[error(transparent)]
    Metric(#[from] MetricError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalSettings {
    pub walkforward: WalkForwardConfig,
    pub cost: CostModel,
    /// Regressor dead band on the predicted log return.
    pub dead_band: f64,
    /// Annual risk-free rate for the Sharpe ratio.
    pub risk_free_rate: f64,
    pub periods_per_year: f64,
}

impl EvalSettings {
    pub fn daily(window: usize) -> Self {
        Self {
            walkforward: WalkForwardConfig::trailing(window),
            cost: CostModel::default(),
            dead_band: 0.0,
            risk_free_rate: 0.0,
            periods_per_year: 365.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub report: EvalReport,
    pub predictions: PredictionSeries,
    pub positions: PositionSeries,
    pub curve: EquityCurve,
    pub ledger: TradeLedger,
}

impl Evaluation {
    /// Simple returns realized over the evaluated rows.
    pub fn simple_returns(&self) -> Vec<f64> {
        realized_simple_returns(&self.predictions)
    }
}

pub fn realized_simple_returns(preds: &PredictionSeries) -> Vec<f64> {
    preds.records.iter().map(|r| simple_from_log(r.realized_return)).collect()
}

pub fn evaluate(
    view: &DatasetView<'_>,
    segment: Segment,
    spec: &ModelSpec,
    settings: &EvalSettings,
) -> Result<Evaluation, EvalError> {
    let task = spec.kind.task();
    let predictions = run_walkforward(view, spec, &settings.walkforward)?;
    let positions = signal_from_predictions(&predictions, task, settings.dead_band);
    let simple = realized_simple_returns(&predictions);
    let (curve, ledger) = simulate(&positions, &simple, &settings.cost)?;

    let metrics = match task {
        Task::Classifier => {
            let truth: Vec<Direction> = predictions.records.iter().map(|r| r.realized_class).collect();
            let pred: Vec<Direction> = predictions.records.iter().map(|r| r.direction).collect();
            TaskMetrics::Classifier(classification_metrics(&truth, &pred)?)
        }
        Task::Regressor => {
            let (truth, pred) = regression_pairs(&predictions);
            TaskMetrics::Regressor(regression_errors(&truth, &pred)?)
        }
    };
    let r2 = match task {
        Task::Classifier => equity_trend_r2(&curve).ok(),
        Task::Regressor => {
            let (truth, pred) = regression_pairs(&predictions);
            r_squared(&truth, &pred).ok()
        }
    };

    let report = EvalReport {
        kind: spec.kind,
        window: settings.walkforward.window,
        segment,
        params: spec.params.clone(),
        pnl_percent: pnl_percent(&curve),
        sharpe: sharpe(&curve.step_returns, settings.risk_free_rate, settings.periods_per_year).ok(),
        r2,
        n_trades: count_trades(&ledger),
        n_predictions: predictions.len(),
        metrics,
    };
    Ok(Evaluation { report, predictions, positions, curve, ledger })
}

fn regression_pairs(preds: &PredictionSeries) -> (Vec<f64>, Vec<f64>) {
    preds.records.iter().map(|r| (r.realized_return, r.value.unwrap_or(r.score))).unzip()
}

/// PNL (%) of holding one position over the same rows and fees.
pub fn constant_position_pnl(preds: &PredictionSeries, position: Position, cost: &CostModel) -> Result<f64, EvalError> {
    let positions = PositionSeries::new(preds.timestamps(), vec![position; preds.len()]);
    let (curve, _) = simulate(&positions, &realized_simple_returns(preds), cost)?;
    Ok(pnl_percent(&curve))
}

/// Upper bound on PNL (%) for any position sequence: `100 * Σ|r|`.
pub fn perfect_foresight_pnl(simple_returns: &[f64]) -> f64 {
    100.0 * simple_returns.iter().map(|r| r.abs()).sum::<f64>()
}
