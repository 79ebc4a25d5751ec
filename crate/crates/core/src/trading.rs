//! Position simulation: per-step strategy returns, fees, equity and trades.
//!
//! PNL is additive on unit notional: each step contributes
//! `position * simple_return` minus a fee whenever the position changes.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TradingError {
    #[error("length mismatch: {positions} positions vs {returns} returns")]
    LengthMismatch { positions: usize, returns: usize },
    #[error("non-finite return at step {0}")]
    NonFiniteReturn(usize),
    #[error("fee_bps must be finite and >= 0, got {0}")]
    InvalidFee(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(into = "i8", try_from = "i8")]
pub enum Position {
    Short,
    Flat,
    Long,
}

impl Position {
    pub fn value(self) -> f64 {
        f64::from(i8::from(self))
    }
}

impl From<Position> for i8 {
    fn from(p: Position) -> i8 {
        match p {
            Position::Short => -1,
            Position::Flat => 0,
            Position::Long => 1,
        }
    }
}

impl TryFrom<i8> for Position {
    type Error = String;

    fn try_from(v: i8) -> Result<Self, Self::Error> {
        match v {
            -1 => Ok(Position::Short),
            0 => Ok(Position::Flat),
            1 => Ok(Position::Long),
            other => Err(format!("position must be -1, 0 or 1, got {other}")),
        }
    }
}

impl std::ops::Neg for Position {
    type Output = Position;

    fn neg(self) -> Position {
        match self {
            Position::Short => Position::Long,
            Position::Flat => Position::Flat,
            Position::Long => Position::Short,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PositionSeries {
    pub timestamps: Vec<i64>,
    pub positions: Vec<Position>,
}

impl PositionSeries {
    pub fn new(timestamps: Vec<i64>, positions: Vec<Position>) -> Self {
        debug_assert_eq!(timestamps.len(), positions.len());
        Self { timestamps, positions }
    }

    /// Positions with synthetic timestamps `0..n`.
    pub fn from_positions(positions: Vec<Position>) -> Self {
        Self { timestamps: (0..positions.len() as i64).collect(), positions }
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct CostModel {
    pub fee_bps: f64,
}

impl CostModel {
    pub fn validate(&self) -> Result<(), TradingError> {
        if !(self.fee_bps.is_finite() && self.fee_bps >= 0.0) {
            return Err(TradingError::InvalidFee(self.fee_bps));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EquityCurve {
    pub timestamps: Vec<i64>,
    /// Cumulative PNL as a fraction of notional after each step.
    pub equity: Vec<f64>,
    pub step_returns: Vec<f64>,
}

impl EquityCurve {
    pub fn len(&self) -> usize {
        self.equity.len()
    }

    pub fn is_empty(&self) -> bool {
        self.equity.is_empty()
    }

    pub fn final_value(&self) -> f64 {
        self.equity.last().copied().unwrap_or(0.0)
    }

    /// `timestamp,equity_fraction`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("timestamp,equity_fraction\n");
        for (t, e) in self.timestamps.iter().zip(&self.equity) {
            let _ = writeln!(out, "{t},{e}");
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TradeEntry {
    pub timestamp: i64,
    pub from: Position,
    pub to: Position,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TradeLedger {
    pub entries: Vec<TradeEntry>,
}

impl TradeLedger {
    pub fn count(&self) -> usize {
        self.entries.len()
    }
}

/// `exp(r) - 1`.
pub fn simple_from_log(r: f64) -> f64 {
    r.exp_m1()
}

pub fn simulate(
    positions: &PositionSeries,
    simple_returns: &[f64],
    cost: &CostModel,
) -> Result<(EquityCurve, TradeLedger), TradingError> {
    cost.validate()?;
    if positions.len() != simple_returns.len() {
        return Err(TradingError::LengthMismatch { positions: positions.len(), returns: simple_returns.len() });
    }
    if let Some(i) = simple_returns.iter().position(|r| !r.is_finite()) {
        return Err(TradingError::NonFiniteReturn(i));
    }
    let fee = cost.fee_bps / 10_000.0;
    let mut prev = Position::Flat;
    let mut equity = 0.0;
    let mut curve = EquityCurve {
        timestamps: positions.timestamps.clone(),
        equity: Vec::with_capacity(positions.len()),
        step_returns: Vec::with_capacity(positions.len()),
    };
    let mut ledger = TradeLedger::default();
    for ((&ts, &pos), &ret) in positions.timestamps.iter().zip(&positions.positions).zip(simple_returns) {
        let mut step = pos.value() * ret;
        if pos != prev {
            step -= fee;
            ledger.entries.push(TradeEntry { timestamp: ts, from: prev, to: pos });
        }
        equity += step;
        curve.step_returns.push(step);
        curve.equity.push(equity);
        prev = pos;
    }
    Ok((curve, ledger))
}

/// Final cumulative PNL in percent of notional.
pub fn pnl_percent(curve: &EquityCurve) -> f64 {
    100.0 * curve.final_value()
}

pub fn count_trades(ledger: &TradeLedger) -> usize {
    ledger.count()
}
