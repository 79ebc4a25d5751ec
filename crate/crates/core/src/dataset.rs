//! Feature construction, labelling and segment splitting.

use std::fmt::Write as _;
use std::ops::Range;

use chrono::{NaiveDate, TimeZone, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::indicators::{self, IndicatorConfig, IndicatorError};
use crate::ingest::CandleSeries;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DatasetError {
    #[error("series too short: need {needed} candles, got {got}")]
    SeriesTooShort { needed: usize, got: usize },
    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },
    #[error("segment `{0}` is empty after intersecting with the dataset")]
    EmptySegment(&'static str),
    #[error("invalid segment split: {0}")]
    InvalidSplit(String),
    #[error(transparent)]
    Indicator(#[from] IndicatorError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Up,
    Down,
}

impl Direction {
    /// Strictly positive is up; zero and negative are down.
    pub fn from_sign(x: f64) -> Self {
        if x > 0.0 {
            Direction::Up
        } else {
            Direction::Down
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Direction::Up => "up",
            Direction::Down => "down",
        }
    }
}

/// Log returns aligned to the candles; index 0 is undefined.
#[derive(Debug, Clone, PartialEq)]
pub struct ReturnSeries {
    pub values: Vec<Option<f64>>,
}

impl ReturnSeries {
    pub const WARMUP: usize = 1;

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

pub fn log_diff(series: &CandleSeries) -> Result<ReturnSeries, DatasetError> {
    if series.len() < 2 {
        return Err(DatasetError::SeriesTooShort { needed: 2, got: series.len() });
    }
    let closes = series.closes();
    let mut values = vec![None; closes.len()];
    for t in 1..closes.len() {
        values[t] = Some(closes[t].ln() - closes[t - 1].ln());
    }
    Ok(ReturnSeries { values })
}

pub const FEATURE_NAMES: [&str; 7] = [
    "logret",
    "ad_diff",
    "mfi",
    "bb_percent_b",
    "bb_bandwidth",
    "kc_width",
    "sar_side",
];

/// Per-timestamp feature rows. Rows before `valid_from` may contain NaN for
/// features still warming up; rows from `valid_from` on are all finite.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureFrame {
    pub timestamps: Vec<i64>,
    pub feature_names: Vec<String>,
    pub rows: Vec<Vec<f64>>,
    pub valid_from: usize,
}

impl FeatureFrame {
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn width(&self) -> usize {
        self.feature_names.len()
    }
}

/// Index from which every feature of [`build_features`] is defined.
pub fn feature_warmup(config: &IndicatorConfig) -> usize {
    [
        ReturnSeries::WARMUP,
        config.bb_period.saturating_sub(1).max(1),
        config.mfi_period,
        config.bb_period - 1,
        config.kc_ema_period.max(config.kc_atr_period),
        1,
    ]
    .into_iter()
    .max()
    .unwrap_or(1)
}

/// Builds the stationary feature set:
/// `[logret, ad_diff, mfi, bb_percent_b, bb_bandwidth, kc_width, sar_side]`.
///
/// `ad_diff` is the A/D increment divided by the mean volume of the trailing
/// `bb_period` bars (0 if that mean is 0); `mfi` is rescaled to [0, 1];
/// `bb_percent_b` falls back to 0.5 on a zero-width band; `sar_side` is +1
/// when close is above the SAR, −1 otherwise.
pub fn build_features(series: &CandleSeries, config: &IndicatorConfig) -> Result<FeatureFrame, DatasetError> {
    config.validate()?;
    let valid_from = feature_warmup(config);
    if series.len() <= valid_from {
        return Err(DatasetError::SeriesTooShort { needed: valid_from + 1, got: series.len() });
    }
    let candles = series.candles();
    let n = candles.len();

    let rets = log_diff(series)?;
    let ad = indicators::acc_dist(series);
    let mfi = indicators::mfi(series, config.mfi_period)?;
    let bb = indicators::bollinger(series, config.bb_period, config.bb_k)?;
    let kc = indicators::keltner_width(series, config.kc_ema_period, config.kc_atr_period, config.kc_mult)?;
    let sar = indicators::parabolic_sar(series, config.sar_af_start, config.sar_af_step, config.sar_af_max)?;

    let vol_window = config.bb_period;
    let ad_diff_warmup = vol_window.saturating_sub(1).max(1);
    let rows = (0..n)
        .map(|t| {
            let c = &candles[t];
            let ad_diff = (t >= ad_diff_warmup).then(|| {
                let vols = &candles[t + 1 - vol_window..=t];
                let mean_vol = vols.iter().map(|c| c.volume).sum::<f64>() / vol_window as f64;
                let delta = ad.values[t].unwrap() - ad.values[t - 1].unwrap();
                if mean_vol > 0.0 {
                    delta / mean_vol
                } else {
                    0.0
                }
            });
            let percent_b = match (bb.upper.get(t), bb.lower.get(t)) {
                (Some(u), Some(l)) if u > l => Some((c.close - l) / (u - l)),
                (Some(_), Some(_)) => Some(0.5),
                _ => None,
            };
            let sar_side = sar.sar.get(t).map(|s| if c.close > s { 1.0 } else { -1.0 });
            [
                rets.values[t],
                ad_diff,
                mfi.get(t).map(|m| m / 100.0),
                percent_b,
                bb.bandwidth.get(t),
                kc.get(t),
                sar_side,
            ]
            .iter()
            .map(|v| v.unwrap_or(f64::NAN))
            .collect()
        })
        .collect();

    Ok(FeatureFrame {
        timestamps: series.timestamps(),
        feature_names: FEATURE_NAMES.iter().map(|s| s.to_string()).collect(),
        rows,
        valid_from,
    })
}

/// Feature frame with next-interval targets. Row `t`'s targets come from the
/// return at `t + 1`; the last row has none.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledDataset {
    pub frame: FeatureFrame,
    pub class_target: Vec<Option<Direction>>,
    pub reg_target: Vec<Option<f64>>,
    /// Rows with defined features and targets: `valid_from..N-1`.
    pub usable: Range<usize>,
}

impl LabeledDataset {
    pub fn len(&self) -> usize {
        self.frame.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frame.is_empty()
    }

    pub fn timestamps(&self) -> &[i64] {
        &self.frame.timestamps
    }

    /// View over the whole usable range.
    pub fn full_view(&self) -> DatasetView<'_> {
        DatasetView { parent: self, range: self.usable.clone(), segment: "all" }
    }

    /// `timestamp,<features...>,class_target,reg_target`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("timestamp,");
        out.push_str(&self.frame.feature_names.join(","));
        out.push_str(",class_target,reg_target\n");
        for t in 0..self.len() {
            let _ = write!(out, "{}", self.frame.timestamps[t]);
            for v in &self.frame.rows[t] {
                if v.is_finite() {
                    let _ = write!(out, ",{v}");
                } else {
                    out.push(',');
                }
            }
            match (self.class_target[t], self.reg_target[t]) {
                (Some(c), Some(r)) => {
                    let _ = writeln!(out, ",{},{r}", c.as_str());
                }
                _ => out.push_str(",,\n"),
            }
        }
        out
    }
}

pub fn label(frame: FeatureFrame, returns: &ReturnSeries) -> Result<LabeledDataset, DatasetError> {
    let n = frame.len();
    if returns.len() != n {
        return Err(DatasetError::LengthMismatch { left: n, right: returns.len() });
    }
    let mut class_target = vec![None; n];
    let mut reg_target = vec![None; n];
    for t in 0..n.saturating_sub(1) {
        if let Some(r) = returns.values[t + 1] {
            reg_target[t] = Some(r);
            class_target[t] = Some(Direction::from_sign(r));
        }
    }
    let end = n.saturating_sub(1);
    let usable = frame.valid_from.min(end)..end;
    Ok(LabeledDataset { frame, class_target, reg_target, usable })
}

/// Candles → features → labels in one step.
pub fn prepare(series: &CandleSeries, config: &IndicatorConfig) -> Result<LabeledDataset, DatasetError> {
    let frame = build_features(series, config)?;
    let returns = log_diff(series)?;
    label(frame, &returns)
}

/// Half-open timestamp ranges for the three evaluation segments.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SegmentSplit {
    pub train: Range<i64>,
    pub backtest: Range<i64>,
    pub forward: Range<i64>,
}

fn utc_midnight(y: i32, m: u32, d: u32) -> i64 {
    Utc.from_utc_datetime(&NaiveDate::from_ymd_opt(y, m, d).unwrap().and_hms_opt(0, 0, 0).unwrap())
        .timestamp()
}

impl Default for SegmentSplit {
    /// Training through January 2023, backtest February–July 2023, forward
    /// test August–October 2023.
    fn default() -> Self {
        Self {
            train: utc_midnight(2013, 1, 1)..utc_midnight(2023, 2, 1),
            backtest: utc_midnight(2023, 2, 1)..utc_midnight(2023, 8, 1),
            forward: utc_midnight(2023, 8, 1)..utc_midnight(2023, 11, 1),
        }
    }
}

impl SegmentSplit {
    pub fn new(train: Range<i64>, backtest: Range<i64>, forward: Range<i64>) -> Result<Self, DatasetError> {
        let s = Self { train, backtest, forward };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<(), DatasetError> {
        for (name, r) in [("train", &self.train), ("backtest", &self.backtest), ("forward", &self.forward)] {
            if r.start >= r.end {
                return Err(DatasetError::InvalidSplit(format!("{name} range is empty")));
            }
        }
        if self.train.end > self.backtest.start || self.backtest.end > self.forward.start {
            return Err(DatasetError::InvalidSplit("ranges overlap or are out of order".into()));
        }
        Ok(())
    }

    /// Contiguous split at two boundary timestamps.
    pub fn at(start: i64, backtest_start: i64, forward_start: i64, end: i64) -> Result<Self, DatasetError> {
        Self::new(start..backtest_start, backtest_start..forward_start, forward_start..end)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Segment {
    Train,
    Backtest,
    Forward,
}

impl Segment {
    pub fn as_str(self) -> &'static str {
        match self {
            Segment::Train => "train",
            Segment::Backtest => "backtest",
            Segment::Forward => "forward",
        }
    }
}

impl std::str::FromStr for Segment {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "train" => Ok(Segment::Train),
            "backtest" => Ok(Segment::Backtest),
            "forward" | "forwardtest" => Ok(Segment::Forward),
            other => Err(format!("unknown segment `{other}`")),
        }
    }
}

/// A contiguous evaluation range over a parent dataset. Earlier parent rows
/// stay reachable as training history.
#[derive(Debug, Clone)]
pub struct DatasetView<'a> {
    pub parent: &'a LabeledDataset,
    pub range: Range<usize>,
    pub segment: &'static str,
}

impl<'a> DatasetView<'a> {
    pub fn len(&self) -> usize {
        self.range.len()
    }

    pub fn is_empty(&self) -> bool {
        self.range.is_empty()
    }

    pub fn indices(&self) -> Range<usize> {
        self.range.clone()
    }

    /// Up to `count` parent rows immediately preceding row `index`.
    pub fn history(&self, index: usize, count: usize) -> Range<usize> {
        index.saturating_sub(count)..index
    }
}

#[derive(Debug, Clone)]
pub struct SplitViews<'a> {
    pub train: DatasetView<'a>,
    pub backtest: DatasetView<'a>,
    pub forward: DatasetView<'a>,
}

impl<'a> SplitViews<'a> {
    pub fn get(&self, segment: Segment) -> &DatasetView<'a> {
        match segment {
            Segment::Train => &self.train,
            Segment::Backtest => &self.backtest,
            Segment::Forward => &self.forward,
        }
    }
}

pub fn split<'a>(dataset: &'a LabeledDataset, split: &SegmentSplit) -> Result<SplitViews<'a>, DatasetError> {
    split.validate()?;
    let ts = dataset.timestamps();
    let view = |name: &'static str, r: &Range<i64>| -> Result<DatasetView<'a>, DatasetError> {
        let lo = ts.partition_point(|&t| t < r.start).max(dataset.usable.start);
        let hi = ts.partition_point(|&t| t < r.end).min(dataset.usable.end);
        if lo >= hi {
            return Err(DatasetError::EmptySegment(name));
        }
        Ok(DatasetView { parent: dataset, range: lo..hi, segment: name })
    };
    Ok(SplitViews {
        train: view("train", &split.train)?,
        backtest: view("backtest", &split.backtest)?,
        forward: view("forward", &split.forward)?,
    })
}
