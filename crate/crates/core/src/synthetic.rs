//! Deterministic drift-plus-sinusoid daily market, used for end-to-end checks
//! and demos when no real data is at hand.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::ingest::{Candle, CandleSeries, IngestError, DAILY};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SyntheticConfig {
    pub days: usize,
    /// Timestamp of the first candle.
    pub start: i64,
    /// Log-price drift per day.
    pub drift: f64,
    /// Amplitude of the log-price cycle.
    pub amplitude: f64,
    pub period_days: f64,
    /// Half-width of the uniform log-price noise added per day.
    pub noise: f64,
    pub seed: u64,
}

/// 2022-09-27T00:00:00Z: 400 days later is 2023-11-01, so the default
/// segment dates cut the series into 127 / 181 / 92 days.
pub const DEFAULT_START: i64 = 1_664_236_800;

impl Default for SyntheticConfig {
    fn default() -> Self {
        Self {
            days: 400,
            start: DEFAULT_START,
            drift: 0.001,
            amplitude: 0.08,
            period_days: 24.0,
            noise: 0.015,
            seed: 7,
        }
    }
}

#[allow(clippy::neg_cmp_op_on_partial_ord)]
pub fn synthetic_series(cfg: &SyntheticConfig) -> Result<CandleSeries, IngestError> {
    if cfg.days < 2 || !(cfg.period_days > 0.0) {
        return Err(IngestError::InvalidConfig("synthetic series needs >= 2 days and a positive period".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let omega = std::f64::consts::TAU / cfg.period_days;
    let log_price: Vec<f64> = (0..cfg.days)
        .map(|t| {
            let t = t as f64;
            let eps = cfg.noise * (2.0 * rng.random::<f64>() - 1.0);
            100f64.ln() + cfg.drift * t + cfg.amplitude * (omega * t).sin() + eps
        })
        .collect();
    let candles = (0..cfg.days)
        .map(|t| {
            let close = log_price[t].exp();
            let open = if t == 0 { close } else { log_price[t - 1].exp() };
            let wick = 0.004 + 0.004 * rng.random::<f64>();
            let high = open.max(close) * (1.0 + wick);
            let low = open.min(close) * (1.0 - wick);
            let volume = 1_000.0 * (1.0 + 0.3 * (omega * t as f64 * 0.5).cos()) + 100.0 * rng.random::<f64>();
            Candle::new(cfg.start + t as i64 * DAILY, open, high, low, close, volume)
        })
        .collect();
    CandleSeries::new(candles, DAILY)
}
