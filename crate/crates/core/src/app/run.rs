//! Experiment orchestration and the on-disk run layout:
//! `<out>/<run-id>/{config.json, report.json, trials.jsonl, equity/*.csv}`.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use chrono::Utc;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::config::{DataSource, RunConfig};
use super::AppError;
use crate::dataset::{prepare, split, Segment, SplitViews};
use crate::evaluation::{evaluate, EvalSettings};
use crate::ingest::{fetch_candles, parse_candles_csv, CandleSeries};
use crate::metrics::{periods_per_year, EvalReport};
use crate::models::{default_space, ModelKind, ModelSpec, Params};
use crate::synthetic::synthetic_series;
use crate::trading::EquityCurve;
use crate::tuner::{run_study, Trial, TunerConfig};

pub const ENGINE_VERSION: &str = concat!(env!("CARGO_PKG_NAME"), " ", env!("CARGO_PKG_VERSION"));

/// Identifies one evaluated (model, window, segment) triple.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct CurveKey {
    pub kind: ModelKind,
    pub window: usize,
    pub segment: Segment,
}

impl CurveKey {
    pub fn file_name(&self) -> String {
        format!("{}_{}_{}.csv", self.kind.name(), self.window, self.segment.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyLog {
    pub kind: ModelKind,
    pub window: usize,
    pub best: usize,
    pub trials: Vec<Trial>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunArtifact {
    pub config: RunConfig,
    pub engine_version: String,
    /// Ordered by model (config order), window, then segment.
    pub reports: Vec<EvalReport>,
    pub curves: BTreeMap<CurveKey, EquityCurve>,
    pub studies: Vec<StudyLog>,
}

/// Contents of `report.json`. Holds nothing time-dependent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportFile {
    pub engine_version: String,
    pub reports: Vec<EvalReport>,
}

impl RunArtifact {
    pub fn report_file(&self) -> ReportFile {
        ReportFile { engine_version: self.engine_version.clone(), reports: self.reports.clone() }
    }

    pub fn report_json(&self) -> String {
        serde_json::to_string_pretty(&self.report_file()).expect("report serializes") + "\n"
    }

    /// One line per trial across all studies, tagged with model and window.
    pub fn trials_jsonl(&self) -> String {
        #[derive(Serialize)]
        struct Line<'a> {
            model: &'a str,
            window: usize,
            index: usize,
            params: &'a Params,
            objective: Option<f64>,
            error: &'a Option<String>,
        }
        let mut out = String::new();
        for s in &self.studies {
            for t in &s.trials {
                let line = Line {
                    model: s.kind.name(),
                    window: s.window,
                    index: t.index,
                    params: &t.params,
                    objective: t.objective.is_finite().then_some(t.objective),
                    error: &t.error,
                };
                let _ = writeln!(out, "{}", serde_json::to_string(&line).expect("trial serializes"));
            }
        }
        out
    }
}

pub fn load_series(config: &RunConfig) -> Result<CandleSeries, AppError> {
    match &config.data {
        DataSource::Csv { path } => {
            let text = fs::read_to_string(path).map_err(|e| AppError::Data(format!("reading {}: {e}", path.display())))?;
            parse_candles_csv(&text, config.interval).map_err(|e| AppError::Data(format!("{}: {e}", path.display())))
        }
        DataSource::Fetch { symbol, start, end, client } => {
            let ts = |d: &chrono::NaiveDate| d.and_hms_opt(0, 0, 0).expect("midnight").and_utc().timestamp();
            fetch_candles(client, symbol, config.interval, ts(start), ts(end)).map_err(|e| AppError::Data(e.to_string()))
        }
        DataSource::Synthetic(cfg) => synthetic_series(cfg).map_err(|e| AppError::Data(e.to_string())),
    }
}

/// Per-study tuner seed, stable under reordering of models and windows.
fn study_seed(master: u64, kind: ModelKind, window: usize) -> u64 {
    let mut h = Sha256::new();
    h.update(master.to_le_bytes());
    h.update(kind.name().as_bytes());
    h.update((window as u64).to_le_bytes());
    let digest = h.finalize();
    u64::from_le_bytes(digest[..8].try_into().expect("8 bytes"))
}

struct JobOutput {
    evaluations: Vec<(EvalReport, EquityCurve)>,
    study: Option<StudyLog>,
}

fn run_job(
    config: &RunConfig,
    views: &SplitViews<'_>,
    kind: ModelKind,
    window: usize,
    ppy: f64,
) -> Result<JobOutput, AppError> {
    let engine = |e: &dyn std::fmt::Display| AppError::Engine(format!("{kind} window {window}: {e}"));
    let settings = EvalSettings {
        walkforward: config.walkforward(window),
        cost: config.cost(),
        dead_band: config.dead_band,
        risk_free_rate: config.risk_free_rate,
        periods_per_year: ppy,
    };
    let mut spec = ModelSpec { kind, params: config.params_for(kind), seed: config.seed };

    let study = match &config.tuner {
        Some(t) if !default_space(kind).is_empty() => {
            let tc = TunerConfig {
                n_trials: t.n_trials,
                seed: study_seed(config.seed, kind, window),
                objective_segment: t.objective_segment,
                parallel: config.parallel,
            };
            let result = run_study(views, &spec, &default_space(kind), &settings, &tc).map_err(|e| engine(&e))?;
            spec.params.extend(result.best_trial().params.clone());
            Some(StudyLog { kind, window, best: result.best, trials: result.trials })
        }
        _ => None,
    };

    let mut evaluations = Vec::with_capacity(2);
    for segment in [Segment::Backtest, Segment::Forward] {
        let e = evaluate(views.get(segment), segment, &spec, &settings).map_err(|e| engine(&e))?;
        evaluations.push((e.report, e.curve));
    }
    Ok(JobOutput { evaluations, study })
}

/// ingest → features → labels → split, then per (model, window): optional
/// tuning, and evaluation on the backtest and forward segments.
pub fn run_experiment(config: &RunConfig) -> Result<RunArtifact, AppError> {
    config.validate()?;
    let series = load_series(config)?;
    let dataset = prepare(&series, &config.indicators).map_err(|e| AppError::Data(format!("features: {e}")))?;
    let views = split(&dataset, &config.split.to_split()?).map_err(|e| AppError::Data(format!("split: {e}")))?;
    let ppy = periods_per_year(config.interval);

    let jobs: Vec<(ModelKind, usize)> = config
        .model_kinds()?
        .into_iter()
        .flat_map(|k| config.windows.iter().map(move |&w| (k, w)))
        .collect();
    let outputs: Vec<Result<JobOutput, AppError>> = if config.parallel {
        jobs.par_iter().map(|&(k, w)| run_job(config, &views, k, w, ppy)).collect()
    } else {
        jobs.iter().map(|&(k, w)| run_job(config, &views, k, w, ppy)).collect()
    };

    let mut artifact = RunArtifact {
        config: config.clone(),
        engine_version: ENGINE_VERSION.to_string(),
        reports: Vec::new(),
        curves: BTreeMap::new(),
        studies: Vec::new(),
    };
    for out in outputs {
        let out = out?;
        for (report, curve) in out.evaluations {
            let key = CurveKey { kind: report.kind, window: report.window, segment: report.segment };
            artifact.curves.insert(key, curve);
            artifact.reports.push(report);
        }
        artifact.studies.extend(out.study);
    }
    Ok(artifact)
}

/// `<UTC timestamp>-<first 8 hex digits of the config's SHA-256>`.
pub fn run_id(config: &RunConfig) -> String {
    let digest = Sha256::digest(config.to_json().as_bytes());
    format!("{}-{}", Utc::now().format("%Y%m%dT%H%M%SZ"), &hex::encode(digest)[..8])
}

/// Writes the run directory and returns its path. A numeric suffix keeps two
/// runs started in the same second apart.
pub fn persist(artifact: &RunArtifact, out_dir: &Path) -> Result<PathBuf, AppError> {
    let io = |p: &Path, e: std::io::Error| AppError::Io(format!("{}: {e}", p.display()));
    let base = run_id(&artifact.config);
    let mut dir = out_dir.join(&base);
    let mut n = 1;
    while dir.exists() {
        n += 1;
        dir = out_dir.join(format!("{base}-{n}"));
    }
    let equity = dir.join("equity");
    fs::create_dir_all(&equity).map_err(|e| io(&equity, e))?;
    let write = |p: PathBuf, text: &str| fs::write(&p, text).map_err(|e| io(&p, e));
    write(dir.join("config.json"), &(artifact.config.to_json() + "\n"))?;
    write(dir.join("report.json"), &artifact.report_json())?;
    write(dir.join("trials.jsonl"), &artifact.trials_jsonl())?;
    for (key, curve) in &artifact.curves {
        write(equity.join(key.file_name()), &curve.to_csv())?;
    }
    Ok(dir)
}

pub fn read_report(run_dir: &Path) -> Result<ReportFile, AppError> {
    let p = run_dir.join("report.json");
    let text = fs::read_to_string(&p).map_err(|e| AppError::Io(format!("{}: {e}", p.display())))?;
    serde_json::from_str(&text).map_err(|e| AppError::Data(format!("{}: {e}", p.display())))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synthetic::SyntheticConfig;

    fn small_config() -> RunConfig {
        let mut c = RunConfig::new(DataSource::Synthetic(SyntheticConfig::default()));
        c.models = vec!["ols_r".into(), "knn_c".into()];
        c.windows = vec![7, 14];
        c
    }

    #[test]
    fn two_by_two_gives_eight_reports() {
        let a = run_experiment(&small_config()).unwrap();
        assert_eq!(a.reports.len(), 8);
        assert_eq!(a.curves.len(), 8);
        assert!(a.studies.is_empty());
        assert_eq!(a.trials_jsonl(), "");
        for r in &a.reports {
            assert!(a.curves.contains_key(&CurveKey { kind: r.kind, window: r.window, segment: r.segment }));
        }
    }

    #[test]
    fn persist_layout() {
        let a = run_experiment(&small_config()).unwrap();
        let tmp = tempfile::tempdir().unwrap();
        let d1 = persist(&a, tmp.path()).unwrap();
        let d2 = persist(&a, tmp.path()).unwrap();
        assert_ne!(d1, d2);
        for f in ["config.json", "report.json", "trials.jsonl", "equity/knn_c_7_backtest.csv"] {
            assert!(d1.join(f).exists(), "{f}");
        }
        assert_eq!(fs::read(d1.join("report.json")).unwrap(), fs::read(d2.join("report.json")).unwrap());
        assert_eq!(read_report(&d1).unwrap(), a.report_file());
        let snap = RunConfig::from_json(&fs::read_to_string(d1.join("config.json")).unwrap()).unwrap();
        assert_eq!(snap, a.config);
    }

    #[test]
    fn missing_csv_is_a_data_error() {
        let c = RunConfig::new(DataSource::Csv { path: "/nonexistent/x.csv".into() });
        assert!(matches!(run_experiment(&c), Err(AppError::Data(_))));
    }
}
