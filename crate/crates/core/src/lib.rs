//! Walk-forward backtesting of machine-learning trading signals on daily
//! candles: ingestion, indicators, features, models, simulation, metrics and
//! hyper-parameter search.

pub mod dataset;
pub mod indicators;
pub mod ingest;
pub mod metrics;
pub mod models;
pub mod trading;
pub mod walkforward;
pub mod evaluation;
pub mod synthetic;
pub mod tuner;
pub mod app;
