//! Technical indicators over a [`CandleSeries`]: accumulation/distribution,
//! money flow index, Bollinger bands, Keltner channel width and parabolic SAR.
//!
//! Every output has the same length as its input. Indices before
//! `warmup_len` hold `None`; every index from `warmup_len` on holds a finite
//! value.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ingest::{Candle, CandleSeries};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum IndicatorError {
    #[error("{indicator} needs at least {needed} candles, got {got}")]
    SeriesTooShort { indicator: &'static str, needed: usize, got: usize },
    #[error("invalid indicator configuration: {0}")]
    InvalidConfig(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct IndicatorConfig {
    pub mfi_period: usize,
    pub bb_period: usize,
    pub bb_k: f64,
    pub kc_ema_period: usize,
    pub kc_atr_period: usize,
    pub kc_mult: f64,
    pub sar_af_start: f64,
    pub sar_af_step: f64,
    pub sar_af_max: f64,
}

impl Default for IndicatorConfig {
    fn default() -> Self {
        Self {
            mfi_period: 14,
            bb_period: 20,
            bb_k: 2.0,
            kc_ema_period: 20,
            kc_atr_period: 10,
            kc_mult: 2.0,
            sar_af_start: 0.02,
            sar_af_step: 0.02,
            sar_af_max: 0.2,
        }
    }
}

impl IndicatorConfig {
    pub fn validate(&self) -> Result<(), IndicatorError> {
        let periods = [
            ("mfi_period", self.mfi_period),
            ("bb_period", self.bb_period),
            ("kc_ema_period", self.kc_ema_period),
            ("kc_atr_period", self.kc_atr_period),
        ];
        for (name, p) in periods {
            if p == 0 {
                return Err(IndicatorError::InvalidConfig(format!("{name} must be >= 1")));
            }
        }
        let positives = [
            ("bb_k", self.bb_k),
            ("kc_mult", self.kc_mult),
            ("sar_af_start", self.sar_af_start),
            ("sar_af_step", self.sar_af_step),
            ("sar_af_max", self.sar_af_max),
        ];
        for (name, v) in positives {
            if !(v.is_finite() && v > 0.0) {
                return Err(IndicatorError::InvalidConfig(format!("{name} must be positive")));
            }
        }
        if self.sar_af_start > self.sar_af_max {
            return Err(IndicatorError::InvalidConfig("sar_af_start exceeds sar_af_max".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndicatorSeries {
    pub name: String,
    pub values: Vec<Option<f64>>,
    pub warmup_len: usize,
}

impl IndicatorSeries {
    fn from_fn(name: &str, len: usize, warmup_len: usize, mut f: impl FnMut(usize) -> f64) -> Self {
        let values = (0..len).map(|i| (i >= warmup_len).then(|| f(i))).collect();
        Self { name: name.to_string(), values, warmup_len }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn get(&self, i: usize) -> Option<f64> {
        self.values.get(i).copied().flatten()
    }

    /// `timestamp,value` rows; undefined values are left empty.
    pub fn to_csv(&self, timestamps: &[i64]) -> String {
        let mut out = String::from("timestamp,value\n");
        for (ts, v) in timestamps.iter().zip(&self.values) {
            match v {
                Some(v) => out.push_str(&format!("{ts},{v}\n")),
                None => out.push_str(&format!("{ts},\n")),
            }
        }
        out
    }
}

fn require(indicator: &'static str, series: &CandleSeries, needed: usize) -> Result<(), IndicatorError> {
    if series.len() < needed {
        return Err(IndicatorError::SeriesTooShort { indicator, needed, got: series.len() });
    }
    Ok(())
}

/// Close location value; zero on a bar with no range.
fn clv(c: &Candle) -> f64 {
    let range = c.high - c.low;
    if range == 0.0 {
        0.0
    } else {
        ((c.close - c.low) - (c.high - c.close)) / range
    }
}

/// Accumulation/distribution line.
pub fn acc_dist(series: &CandleSeries) -> IndicatorSeries {
    let mut ad = 0.0;
    let values = series
        .candles()
        .iter()
        .map(|c| {
            ad += clv(c) * c.volume;
            Some(ad)
        })
        .collect();
    IndicatorSeries { name: "acc_dist".into(), values, warmup_len: 0 }
}

/// Money flow index over the trailing `period` typical-price moves.
pub fn mfi(series: &CandleSeries, period: usize) -> Result<IndicatorSeries, IndicatorError> {
    if period == 0 {
        return Err(IndicatorError::InvalidConfig("mfi period must be >= 1".into()));
    }
    require("mfi", series, period + 1)?;
    let candles = series.candles();
    let tp: Vec<f64> = candles.iter().map(Candle::typical_price).collect();
    // flow[t] for t >= 1: (positive, negative) raw money flow.
    let mut flows = vec![(0.0, 0.0); candles.len()];
    for t in 1..candles.len() {
        let raw = tp[t] * candles[t].volume;
        flows[t] = if tp[t] > tp[t - 1] {
            (raw, 0.0)
        } else if tp[t] < tp[t - 1] {
            (0.0, raw)
        } else {
            (0.0, 0.0)
        };
    }
    Ok(IndicatorSeries::from_fn("mfi", candles.len(), period, |t| {
        let (pos, neg) = flows[t + 1 - period..=t]
            .iter()
            .fold((0.0, 0.0), |(p, n), &(fp, fn_)| (p + fp, n + fn_));
        let total = pos + neg;
        if total == 0.0 {
            50.0
        } else {
            100.0 * (pos / total)
        }
    }))
}

#[derive(Debug, Clone, PartialEq)]
pub struct BollingerBands {
    pub middle: IndicatorSeries,
    pub upper: IndicatorSeries,
    pub lower: IndicatorSeries,
    pub bandwidth: IndicatorSeries,
}

/// Bollinger bands on close with population standard deviation.
pub fn bollinger(series: &CandleSeries, period: usize, k: f64) -> Result<BollingerBands, IndicatorError> {
    if period == 0 {
        return Err(IndicatorError::InvalidConfig("bollinger period must be >= 1".into()));
    }
    require("bollinger", series, period)?;
    let closes = series.closes();
    let n = closes.len();
    let warmup = period - 1;
    let stats: Vec<(f64, f64)> = (0..n)
        .map(|t| {
            if t < warmup {
                return (f64::NAN, f64::NAN);
            }
            let window = &closes[t + 1 - period..=t];
            let mean = window.iter().sum::<f64>() / period as f64;
            let var = window.iter().map(|c| (c - mean).powi(2)).sum::<f64>() / period as f64;
            (mean, var.sqrt())
        })
        .collect();
    let middle = IndicatorSeries::from_fn("bb_middle", n, warmup, |t| stats[t].0);
    let upper = IndicatorSeries::from_fn("bb_upper", n, warmup, |t| stats[t].0 + k * stats[t].1);
    let lower = IndicatorSeries::from_fn("bb_lower", n, warmup, |t| stats[t].0 - k * stats[t].1);
    let bandwidth = IndicatorSeries::from_fn("bb_bandwidth", n, warmup, |t| {
        let (m, sd) = stats[t];
        ((m + k * sd) - (m - k * sd)) / m
    });
    Ok(BollingerBands { middle, upper, lower, bandwidth })
}

/// EMA seeded with the SMA of the first `period` inputs; `None` before that.
pub(crate) fn ema(values: &[f64], period: usize) -> Vec<Option<f64>> {
    let mut out = vec![None; values.len()];
    if values.len() < period || period == 0 {
        return out;
    }
    let alpha = 2.0 / (period as f64 + 1.0);
    let mut prev = values[..period].iter().sum::<f64>() / period as f64;
    out[period - 1] = Some(prev);
    for t in period..values.len() {
        prev = alpha * values[t] + (1.0 - alpha) * prev;
        out[t] = Some(prev);
    }
    out
}

/// True range for bars 1.. (bar 0 has no previous close and is `None`).
pub(crate) fn true_range(candles: &[Candle]) -> Vec<Option<f64>> {
    let mut out = vec![None; candles.len()];
    for t in 1..candles.len() {
        let c = &candles[t];
        let pc = candles[t - 1].close;
        out[t] = Some((c.high - c.low).max((c.high - pc).abs()).max((c.low - pc).abs()));
    }
    out
}

/// Wilder ATR, seeded with the mean of the first `period` true ranges
/// (bars 1..=period), so the first defined index is `period`.
pub(crate) fn wilder_atr(candles: &[Candle], period: usize) -> Vec<Option<f64>> {
    let tr = true_range(candles);
    let mut out = vec![None; candles.len()];
    if candles.len() <= period || period == 0 {
        return out;
    }
    let n = period as f64;
    let mut atr = tr[1..=period].iter().map(|v| v.unwrap_or(0.0)).sum::<f64>() / n;
    out[period] = Some(atr);
    for t in period + 1..candles.len() {
        atr = (atr * (n - 1.0) + tr[t].unwrap_or(0.0)) / n;
        out[t] = Some(atr);
    }
    out
}

/// Keltner channel width `(upper - lower) / middle` with an EMA middle line
/// on typical price and a Wilder ATR envelope.
pub fn keltner_width(
    series: &CandleSeries,
    ema_period: usize,
    atr_period: usize,
    mult: f64,
) -> Result<IndicatorSeries, IndicatorError> {
    if ema_period == 0 || atr_period == 0 {
        return Err(IndicatorError::InvalidConfig("keltner periods must be >= 1".into()));
    }
    let warmup = ema_period.max(atr_period);
    require("keltner_width", series, warmup + 1)?;
    let candles = series.candles();
    let tp: Vec<f64> = candles.iter().map(Candle::typical_price).collect();
    let middle = ema(&tp, ema_period);
    let atr = wilder_atr(candles, atr_period);
    Ok(IndicatorSeries::from_fn("kc_width", candles.len(), warmup, |t| {
        let m = middle[t].expect("ema defined past warm-up");
        let a = atr[t].expect("atr defined past warm-up");
        (2.0 * mult * a) / m
    }))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Trend {
    Up,
    Down,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParabolicSar {
    pub sar: IndicatorSeries,
    /// Trend in force at each index; `None` at index 0.
    pub trend: Vec<Option<Trend>>,
}

/// Wilder's parabolic stop-and-reverse.
///
/// Bar 1 opens the trend given by `close[1] - close[0]` (ties go up) with the
/// SAR at the opposite extreme of bar 0. From bar 2 on the SAR steps toward
/// the extreme point, is clamped outside the two prior bars' range, and a bar
/// whose low (up-trend) or high (down-trend) crosses it reverses the trend.
pub fn parabolic_sar(
    series: &CandleSeries,
    af_start: f64,
    af_step: f64,
    af_max: f64,
) -> Result<ParabolicSar, IndicatorError> {
    if !(af_start > 0.0 && af_step > 0.0 && af_max > 0.0 && af_start <= af_max) {
        return Err(IndicatorError::InvalidConfig("invalid SAR acceleration factors".into()));
    }
    require("parabolic_sar", series, 2)?;
    let c = series.candles();
    let n = c.len();
    let mut sar_out = vec![None; n];
    let mut trend_out = vec![None; n];

    let mut trend = if c[1].close >= c[0].close { Trend::Up } else { Trend::Down };
    let (mut sar, mut ep) = match trend {
        Trend::Up => (c[0].low, c[0].high.max(c[1].high)),
        Trend::Down => (c[0].high, c[0].low.min(c[1].low)),
    };
    let mut af = af_start;
    sar_out[1] = Some(sar);
    trend_out[1] = Some(trend);

    for t in 2..n {
        let mut next = sar + af * (ep - sar);
        match trend {
            Trend::Up => {
                next = next.min(c[t - 1].low).min(c[t - 2].low);
                if c[t].low < next {
                    trend = Trend::Down;
                    next = ep;
                    ep = c[t].low;
                    af = af_start;
                } else if c[t].high > ep {
                    ep = c[t].high;
                    af = (af + af_step).min(af_max);
                }
            }
            Trend::Down => {
                next = next.max(c[t - 1].high).max(c[t - 2].high);
                if c[t].high > next {
                    trend = Trend::Up;
                    next = ep;
                    ep = c[t].high;
                    af = af_start;
                } else if c[t].low < ep {
                    ep = c[t].low;
                    af = (af + af_step).min(af_max);
                }
            }
        }
        sar = next;
        sar_out[t] = Some(sar);
        trend_out[t] = Some(trend);
    }

    Ok(ParabolicSar {
        sar: IndicatorSeries { name: "sar".into(), values: sar_out, warmup_len: 1 },
        trend: trend_out,
    })
}
