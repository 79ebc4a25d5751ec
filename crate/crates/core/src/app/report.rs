//! Text tables in the layout of the classifier/regressor result tables, and
//! equity-curve export.

use super::run::{CurveKey, RunArtifact};
use super::AppError;
use crate::dataset::Segment;
use crate::metrics::{EvalReport, TaskMetrics};
use crate::models::{ModelKind, Task};

const CLASSIFIER_METRICS: [&str; 8] =
    ["PNL (%)", "Sharpe", "R2", "Accuracy", "F1 score", "Precision", "Recall", "No. of Trades"];
const REGRESSOR_METRICS: [&str; 7] = ["PNL (%)", "Sharpe", "R2", "MAE", "MSE", "RMSE", "No. of Trades"];

pub const BEST_BACKTEST_MARK: &str = "*";
pub const BEST_FORWARD_MARK: &str = "+";

pub fn metric_columns(task: Task) -> &'static [&'static str] {
    match task {
        Task::Classifier => &CLASSIFIER_METRICS,
        Task::Regressor => &REGRESSOR_METRICS,
    }
}

/// Column names of the table: model, rolling window, then the metric block
/// for the backtest and again for the forward test.
pub fn table_header(task: Task) -> Vec<String> {
    let first = match task {
        Task::Classifier => "Classifier",
        Task::Regressor => "Regressor",
    };
    let mut cols = vec![first.to_string(), "Rolling window".to_string()];
    for _ in 0..2 {
        cols.extend(metric_columns(task).iter().map(|c| c.to_string()));
    }
    cols
}

fn fmt4(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.4}")).unwrap_or_else(|| "n/a".into())
}

fn metric_cells(r: Option<&EvalReport>, task: Task) -> Vec<String> {
    let Some(r) = r else {
        return vec!["n/a".into(); metric_columns(task).len()];
    };
    let mut cells = vec![fmt4(Some(r.pnl_percent)), fmt4(r.sharpe), fmt4(r.r2)];
    match &r.metrics {
        TaskMetrics::Classifier(m) => {
            cells.extend([m.accuracy, m.f1, m.precision, m.recall].map(|v| fmt4(Some(v))));
        }
        TaskMetrics::Regressor(m) => {
            cells.extend([m.mae, m.mse, m.rmse].map(|v| fmt4(Some(v))));
        }
    }
    cells.push(r.n_trades.to_string());
    cells
}

struct Row<'a> {
    kind: ModelKind,
    backtest: &'a EvalReport,
    forward: Option<&'a EvalReport>,
}

/// Per model, the window with the highest backtest PNL (ties → smaller
/// window) and the forward report for that window.
fn select_rows(reports: &[EvalReport]) -> Vec<Row<'_>> {
    let mut kinds: Vec<ModelKind> = reports.iter().map(|r| r.kind).collect();
    kinds.sort();
    kinds.dedup();
    kinds
        .into_iter()
        .filter_map(|kind| {
            let backtest = reports
                .iter()
                .filter(|r| r.kind == kind && r.segment == Segment::Backtest)
                .reduce(|best, r| {
                    if r.pnl_percent > best.pnl_percent || (r.pnl_percent == best.pnl_percent && r.window < best.window) {
                        r
                    } else {
                        best
                    }
                })?;
            let forward =
                reports.iter().find(|r| r.kind == kind && r.segment == Segment::Forward && r.window == backtest.window);
            Some(Row { kind, backtest, forward })
        })
        .collect()
}

fn argmax(values: impl Iterator<Item = Option<f64>>) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (i, v) in values.enumerate() {
        if let Some(v) = v {
            if best.is_none_or(|(_, b)| v > b) {
                best = Some((i, v));
            }
        }
    }
    best.map(|(i, _)| i)
}

/// Renders one row per model at its best backtest window. The model with the
/// best backtest PNL is marked `*`, the best forward PNL `+`.
pub fn emit_table(reports: &[EvalReport], task: Task) -> Result<String, AppError> {
    if let Some(r) = reports.iter().find(|r| r.task() != task) {
        return Err(AppError::MixedTasks(format!("{} in a {task:?} table", r.kind)));
    }
    let rows = select_rows(reports);
    let best_bt = argmax(rows.iter().map(|r| Some(r.backtest.pnl_percent)));
    let best_fwd = argmax(rows.iter().map(|r| r.forward.map(|f| f.pnl_percent)));

    let header = table_header(task);
    let mut body: Vec<Vec<String>> = Vec::with_capacity(rows.len());
    for (i, row) in rows.iter().enumerate() {
        let mut name = row.kind.label().to_string();
        if best_bt == Some(i) {
            name.push(' ');
            name.push_str(BEST_BACKTEST_MARK);
        }
        if best_fwd == Some(i) {
            name.push(' ');
            name.push_str(BEST_FORWARD_MARK);
        }
        let mut cells = vec![name, row.backtest.window.to_string()];
        cells.extend(metric_cells(Some(row.backtest), task));
        cells.extend(metric_cells(row.forward, task));
        body.push(cells);
    }

    let mut widths: Vec<usize> = header.iter().map(|h| h.len()).collect();
    for cells in &body {
        for (w, c) in widths.iter_mut().zip(cells) {
            *w = (*w).max(c.len());
        }
    }
    let line = |cells: &[String]| -> String {
        let padded: Vec<String> = cells.iter().zip(&widths).map(|(c, w)| format!("{c:<w$}")).collect();
        format!("| {} |\n", padded.join(" | "))
    };
    let n_metrics = metric_columns(task).len();
    let block = |label: &str, cols: &[usize]| -> usize {
        let span: usize = cols.iter().map(|&i| widths[i]).sum::<usize>() + 3 * (cols.len() - 1);
        span.max(label.len())
    };
    let lead = widths[0] + widths[1] + 3;
    let bt_cols: Vec<usize> = (2..2 + n_metrics).collect();
    let fwd_cols: Vec<usize> = (2 + n_metrics..2 + 2 * n_metrics).collect();
    let mut out = format!(
        "| {:lead$} | {:<bt$} | {:<fwd$} |\n",
        "",
        "Backtest",
        "Forwardtest",
        bt = block("Backtest", &bt_cols),
        fwd = block("Forwardtest", &fwd_cols),
    );
    out.push_str(&line(&header));
    let rule: Vec<String> = widths.iter().map(|w| "-".repeat(*w)).collect();
    out.push_str(&format!("|-{}-|\n", rule.join("-|-")));
    for cells in &body {
        out.push_str(&line(cells));
    }
    Ok(out)
}

/// Equity curve of one evaluated triple as `timestamp,equity_fraction`.
pub fn export_equity(artifact: &RunArtifact, kind: ModelKind, window: usize, segment: Segment) -> Result<String, AppError> {
    artifact
        .curves
        .get(&CurveKey { kind, window, segment })
        .map(|c| c.to_csv())
        .ok_or_else(|| AppError::UnknownSelector(format!("{kind} window {window} {}", segment.as_str())))
}
