//! Seeded random search over a model's hyper-parameter space, maximizing PNL
//! on one evaluation segment.

use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::{Segment, SplitViews};
use crate::evaluation::{evaluate, EvalSettings};
use crate::metrics::EvalReport;
use crate::models::{Distribution, HyperParamSpace, ModelSpec, ParamValue, Params};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TunerError {
    #[error("invalid tuner config: {0}")]
    InvalidConfig(String),
    #[error("all {n_trials} trials failed; first error: {first_error}")]
    AllTrialsFailed { n_trials: usize, first_error: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TunerConfig {
    #[serde(default = "default_trials")]
    pub n_trials: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_segment")]
    pub objective_segment: Segment,
    #[serde(default = "yes")]
    pub parallel: bool,
}

fn default_trials() -> usize {
    100
}

fn default_segment() -> Segment {
    Segment::Backtest
}

fn yes() -> bool {
    true
}

impl Default for TunerConfig {
    fn default() -> Self {
        Self { n_trials: default_trials(), seed: 0, objective_segment: default_segment(), parallel: true }
    }
}

impl TunerConfig {
    pub fn validate(&self) -> Result<(), TunerError> {
        if self.n_trials == 0 {
            return Err(TunerError::InvalidConfig("n_trials must be >= 1".into()));
        }
        Ok(())
    }
}

/// SplitMix64 finalizer.
fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn trial_seed(study_seed: u64, index: usize) -> u64 {
    mix(study_seed ^ mix(index as u64))
}

/// Draws one value per dimension. Dimension `i` reads ChaCha stream `i` of
/// the trial seed, so adding a dimension leaves the others unchanged.
pub fn sample_params(space: &HyperParamSpace, trial_seed: u64) -> Params {
    space
        .dims
        .iter()
        .enumerate()
        .map(|(i, (name, dist))| {
            let mut rng = ChaCha8Rng::seed_from_u64(trial_seed);
            rng.set_stream(i as u64);
            let value = match dist {
                Distribution::Uniform { lo, hi } => ParamValue::Float(lo + (hi - lo) * rng.random::<f64>()),
                Distribution::LogUniform { lo, hi } => {
                    let (a, b) = (lo.ln(), hi.ln());
                    ParamValue::Float((a + (b - a) * rng.random::<f64>()).exp().clamp(*lo, *hi))
                }
                Distribution::Int { lo, hi } => ParamValue::Int(rng.random_range(*lo..=*hi)),
                Distribution::Categorical { choices } => {
                    ParamValue::Text(choices[rng.random_range(0..choices.len())].clone())
                }
            };
            (name.clone(), value)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trial {
    pub index: usize,
    pub params: Params,
    /// PNL (%) on the objective segment; `-inf` when the trial failed.
    #[serde(with = "objective_serde")]
    pub objective: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub report: Option<EvalReport>,
}

mod objective_serde {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_finite() {
            s.serialize_f64(*v)
        } else {
            s.serialize_none()
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::NEG_INFINITY))
    }
}

impl Trial {
    pub fn failed(&self) -> bool {
        self.error.is_some()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TunerResult {
    pub best: usize,
    pub trials: Vec<Trial>,
}

impl TunerResult {
    pub fn best_trial(&self) -> &Trial {
        &self.trials[self.best]
    }

    /// One JSON object per trial: `index`, `params`, `objective`, `error`.
    pub fn to_jsonl(&self) -> String {
        #[derive(Serialize)]
        struct Line<'a> {
            index: usize,
            params: &'a Params,
            #[serde(with = "objective_serde")]
            objective: f64,
            error: &'a Option<String>,
        }
        let mut out = String::new();
        for t in &self.trials {
            let line = Line { index: t.index, params: &t.params, objective: t.objective, error: &t.error };
            let _ = writeln!(out, "{}", serde_json::to_string(&line).expect("trial serializes"));
        }
        out
    }
}

/// Index of the highest objective; ties go to the lowest index.
pub fn select_best(trials: &[Trial]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, t) in trials.iter().enumerate() {
        if t.failed() {
            continue;
        }
        if best.is_none_or(|b| t.objective > trials[b].objective) {
            best = Some(i);
        }
    }
    best
}

fn run_trial(
    index: usize,
    views: &SplitViews<'_>,
    base: &ModelSpec,
    space: &HyperParamSpace,
    settings: &EvalSettings,
    config: &TunerConfig,
) -> Trial {
    let sampled = sample_params(space, trial_seed(config.seed, index));
    let mut spec = base.clone();
    spec.params.extend(sampled.clone());
    let segment = config.objective_segment;
    match evaluate(views.get(segment), segment, &spec, settings) {
        Ok(e) => Trial { index, params: sampled, objective: e.report.pnl_percent, error: None, report: Some(e.report) },
        Err(err) => Trial { index, params: sampled, objective: f64::NEG_INFINITY, error: Some(err.to_string()), report: None },
    }
}

/// Runs `n_trials` independent evaluations. Parameters in `space` override
/// those in `base`. Trials are merged in index order whether or not they ran
/// in parallel.
pub fn run_study(
    views: &SplitViews<'_>,
    base: &ModelSpec,
    space: &HyperParamSpace,
    settings: &EvalSettings,
    config: &TunerConfig,
) -> Result<TunerResult, TunerError> {
    config.validate()?;
    space.validate().map_err(TunerError::InvalidConfig)?;
    let trials: Vec<Trial> = if config.parallel {
        (0..config.n_trials).into_par_iter().map(|i| run_trial(i, views, base, space, settings, config)).collect()
    } else {
        (0..config.n_trials).map(|i| run_trial(i, views, base, space, settings, config)).collect()
    };
    match select_best(&trials) {
        Some(best) => Ok(TunerResult { best, trials }),
        None => Err(TunerError::AllTrialsFailed {
            n_trials: trials.len(),
            first_error: trials[0].error.clone().unwrap_or_default(),
        }),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn space() -> HyperParamSpace {
        HyperParamSpace {
            dims: vec![
                ("a".into(), Distribution::LogUniform { lo: 1e-4, hi: 1.0 }),
                ("b".into(), Distribution::Int { lo: 3, hi: 3 }),
                ("c".into(), Distribution::Categorical { choices: vec!["x".into(), "y".into()] }),
                ("d".into(), Distribution::Uniform { lo: -1.0, hi: 1.0 }),
            ],
        }
    }

    #[test]
    fn sampling_is_deterministic_and_in_range() {
        let s = space();
        for seed in 0..200 {
            let p = sample_params(&s, seed);
            assert_eq!(p, sample_params(&s, seed));
            assert_eq!(p["b"], ParamValue::Int(3));
            for (name, dist) in &s.dims {
                assert!(dist.contains(&p[name]), "{name}: {:?}", p[name]);
            }
        }
    }

    #[test]
    fn loguniform_median() {
        let s = HyperParamSpace { dims: vec![("a".into(), Distribution::LogUniform { lo: 1e-4, hi: 1.0 })] };
        let mut draws: Vec<f64> = (0..10_000).map(|i| sample_params(&s, trial_seed(7, i))["a"].as_f64().unwrap()).collect();
        draws.sort_by(f64::total_cmp);
        let median = draws[draws.len() / 2];
        assert!(median > 1e-2 / 3.0 && median < 1e-2 * 3.0, "{median}");
    }

    #[test]
    fn dimensions_draw_from_independent_streams() {
        let mut s = space();
        let before = sample_params(&s, 11);
        s.dims.push(("e".into(), Distribution::Uniform { lo: 0.0, hi: 1.0 }));
        let after = sample_params(&s, 11);
        for k in ["a", "b", "c", "d"] {
            assert_eq!(before[k], after[k]);
        }
    }

    fn trial(index: usize, objective: f64) -> Trial {
        let error = (!objective.is_finite()).then(|| "boom".to_string());
        Trial { index, params: Params::new(), objective, error, report: None }
    }

    #[test]
    fn best_selection() {
        let ts = vec![trial(0, 1.0), trial(1, 3.0), trial(2, f64::NEG_INFINITY), trial(3, 3.0)];
        assert_eq!(select_best(&ts), Some(1));
        assert_eq!(select_best(&[trial(0, f64::NEG_INFINITY)]), None);
        // Removing a non-best trial does not change the winner.
        let pruned: Vec<Trial> = ts.iter().filter(|t| t.index != 0).cloned().collect();
        assert_eq!(pruned[select_best(&pruned).unwrap()].index, 1);
    }

    #[test]
    fn failed_trial_serializes_as_null() {
        let r = TunerResult { best: 0, trials: vec![trial(0, 2.5), trial(1, f64::NEG_INFINITY)] };
        let text = r.to_jsonl();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], r#"{"index":0,"params":{},"objective":2.5,"error":null}"#);
        assert_eq!(lines[1], r#"{"index":1,"params":{},"objective":null,"error":"boom"}"#);
        let back: Trial = serde_json::from_str(lines[1]).unwrap();
        assert_eq!(back.objective, f64::NEG_INFINITY);
    }

    #[test]
    fn trial_seeds_differ() {
        let seeds: std::collections::BTreeSet<u64> = (0..1000).map(|i| trial_seed(42, i)).collect();
        assert_eq!(seeds.len(), 1000);
        assert_ne!(trial_seed(1, 0), trial_seed(2, 0));
    }
}
