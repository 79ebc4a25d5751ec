use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use wfbt_core::app::{
    emit_table, persist, read_report, run::load_series, run_experiment, AppError, DataSource, RunConfig, TuningConfig,
};
use wfbt_core::dataset::{prepare, split, Segment};
use wfbt_core::evaluation::EvalSettings;
use wfbt_core::ingest::{date_to_timestamp, fetch_candles, parse_candles_csv, validate_series, write_candles_csv, FetchConfig, DAILY};
use wfbt_core::metrics::periods_per_year;
use wfbt_core::models::{default_space, ModelKind, ModelSpec, Task};
use wfbt_core::synthetic::SyntheticConfig;
use wfbt_core::tuner::{run_study, TunerConfig};
use wfbt_core::walkforward::WalkForwardMode;

#[derive(Parser)]
#[command(name = "wfbt", version, about = "Walk-forward ML backtesting on candle data")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Validate a candle CSV (or fetch one) and write it in canonical form.
    Ingest(IngestArgs),
    /// Dump the labeled feature table as CSV.
    Features(ConfigArgs),
    /// Run the full experiment and persist it under the output directory.
    Run(ConfigArgs),
    /// Tune one model at one window and print the trial log.
    Tune(TuneArgs),
    /// Re-render the result tables of a persisted run.
    Report {
        /// Run directory containing report.json.
        run: PathBuf,
    },
    /// Print one persisted equity curve.
    ExportEquity {
        run: PathBuf,
        #[arg(long)]
        model: String,
        #[arg(long)]
        window: usize,
        #[arg(long, default_value = "backtest")]
        segment: String,
    },
}

#[derive(Args)]
struct IngestArgs {
    /// Candle CSV to validate.
    #[arg(long, conflicts_with = "symbol")]
    input: Option<PathBuf>,
    /// Fetch this symbol over HTTP instead of reading a file.
    #[arg(long, requires_all = ["start", "end"])]
    symbol: Option<String>,
    /// Inclusive start date (YYYY-MM-DD) for fetching.
    #[arg(long)]
    start: Option<String>,
    /// Exclusive end date (YYYY-MM-DD) for fetching.
    #[arg(long)]
    end: Option<String>,
    /// JSON file with fetch settings (base_url, path_template, ...).
    #[arg(long)]
    fetch_config: Option<PathBuf>,
    #[arg(long, default_value_t = DAILY)]
    interval: i64,
    /// Output CSV; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Clone)]
struct ConfigArgs {
    /// JSON run configuration.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Candle CSV; shorthand for a config with a csv data source.
    #[arg(long, conflicts_with_all = ["config", "synthetic"])]
    data: Option<PathBuf>,
    /// Use the built-in synthetic market.
    #[arg(long)]
    synthetic: bool,
    #[arg(long)]
    seed: Option<u64>,
    /// Comma-separated model names or `all`.
    #[arg(long, value_delimiter = ',')]
    models: Option<Vec<String>>,
    /// Comma-separated window sizes.
    #[arg(long, value_delimiter = ',')]
    windows: Option<Vec<usize>>,
    #[arg(long)]
    fee_bps: Option<f64>,
    #[arg(long)]
    mode: Option<WalkForwardMode>,
    /// Output directory (run) or file (features).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Tune each model with this many trials before evaluating.
    #[arg(long)]
    trials: Option<usize>,
    /// Run sequentially.
    #[arg(long)]
    sequential: bool,
}

#[derive(Args)]
struct TuneArgs {
    #[command(flatten)]
    common: ConfigArgs,
    #[arg(long)]
    model: String,
    #[arg(long)]
    window: usize,
}

fn read_config(args: &ConfigArgs) -> Result<RunConfig, AppError> {
    let mut cfg = match (&args.config, &args.data, args.synthetic) {
        (Some(path), _, _) => {
            let text =
                fs::read_to_string(path).map_err(|e| AppError::Config(format!("reading {}: {e}", path.display())))?;
            let mut cfg = RunConfig::from_json(&text)?;
            if args.synthetic {
                cfg.data = DataSource::Synthetic(SyntheticConfig::default());
            }
            cfg
        }
        (None, Some(path), _) => RunConfig::new(DataSource::Csv { path: path.clone() }),
        (None, None, true) => RunConfig::new(DataSource::Synthetic(SyntheticConfig::default())),
        (None, None, false) => return Err(AppError::Config("one of --config, --data or --synthetic is required".into())),
    };
    if let Some(s) = args.seed {
        cfg.seed = s;
    }
    if let Some(m) = &args.models {
        cfg.models = m.clone();
    }
    if let Some(w) = &args.windows {
        cfg.windows = w.clone();
    }
    if let Some(f) = args.fee_bps {
        cfg.fee_bps = f;
    }
    if let Some(m) = args.mode {
        cfg.mode = m;
    }
    if let Some(n) = args.trials {
        cfg.tuner = Some(TuningConfig { n_trials: n, ..cfg.tuner.unwrap_or_default() });
    }
    if args.sequential {
        cfg.parallel = false;
    }
    cfg.validate()?;
    Ok(cfg)
}

/// Writes to stdout; a closed pipe (`wfbt report x | head`) is not an error.
fn emit(text: &str) -> Result<(), AppError> {
    match io::stdout().lock().write_all(text.as_bytes()) {
        Err(e) if e.kind() != io::ErrorKind::BrokenPipe => Err(AppError::Io(e.to_string())),
        _ => Ok(()),
    }
}

fn write_or_print(out: Option<&Path>, text: &str) -> Result<(), AppError> {
    match out {
        Some(p) => fs::write(p, text).map_err(|e| AppError::Io(format!("{}: {e}", p.display()))),
        None => emit(text),
    }
}

fn parse_date(s: &str) -> Result<i64, AppError> {
    date_to_timestamp(s).map_err(|e| AppError::Config(e.to_string()))
}

fn ingest(args: &IngestArgs) -> Result<(), AppError> {
    let series = if let Some(symbol) = &args.symbol {
        let client = match &args.fetch_config {
            Some(p) => {
                let text = fs::read_to_string(p).map_err(|e| AppError::Config(format!("{}: {e}", p.display())))?;
                serde_json::from_str::<FetchConfig>(&text).map_err(|e| AppError::Config(e.to_string()))?
            }
            None => FetchConfig::default(),
        };
        let start = parse_date(args.start.as_deref().unwrap_or_default())?;
        let end = parse_date(args.end.as_deref().unwrap_or_default())?;
        fetch_candles(&client, symbol, args.interval, start, end).map_err(|e| AppError::Data(e.to_string()))?
    } else {
        let path = args.input.as_ref().ok_or_else(|| AppError::Config("--input or --symbol is required".into()))?;
        let text = fs::read_to_string(path).map_err(|e| AppError::Data(format!("{}: {e}", path.display())))?;
        parse_candles_csv(&text, args.interval).map_err(|e| AppError::Data(e.to_string()))?
    };
    let report = validate_series(&series);
    eprintln!("{} candles, {} gap(s)", series.len(), report.gaps.len());
    for g in &report.gaps {
        eprintln!("  gap before row {}: {} -> {}", g.index, g.before, g.after);
    }
    write_or_print(args.out.as_deref(), &write_candles_csv(&series))
}

fn features(args: &ConfigArgs) -> Result<(), AppError> {
    let cfg = read_config(args)?;
    let series = load_series(&cfg)?;
    let ds = prepare(&series, &cfg.indicators).map_err(|e| AppError::Data(e.to_string()))?;
    write_or_print(args.out.as_deref(), &ds.to_csv())
}

fn print_tables(reports: &[wfbt_core::metrics::EvalReport]) -> Result<(), AppError> {
    for task in [Task::Classifier, Task::Regressor] {
        let subset: Vec<_> = reports.iter().filter(|r| r.task() == task).cloned().collect();
        if !subset.is_empty() {
            emit(&format!("{}\n", emit_table(&subset, task)?))?;
        }
    }
    emit("* best backtest PNL, + best forward-test PNL\n")
}

fn run(args: &ConfigArgs) -> Result<(), AppError> {
    let mut cfg = read_config(args)?;
    if let Some(out) = &args.out {
        cfg.out_dir = out.clone();
    }
    let artifact = run_experiment(&cfg)?;
    let dir = persist(&artifact, &cfg.out_dir)?;
    print_tables(&artifact.reports)?;
    emit(&format!("run written to {}\n", dir.display()))
}

fn tune(args: &TuneArgs) -> Result<(), AppError> {
    let cfg = read_config(&args.common)?;
    let kind: ModelKind = args.model.parse().map_err(|e: wfbt_core::models::ModelError| AppError::Config(e.to_string()))?;
    let series = load_series(&cfg)?;
    let ds = prepare(&series, &cfg.indicators).map_err(|e| AppError::Data(e.to_string()))?;
    let views = split(&ds, &cfg.split.to_split()?).map_err(|e| AppError::Data(e.to_string()))?;
    let tuning = cfg.tuner.unwrap_or_default();
    let settings = EvalSettings {
        walkforward: cfg.walkforward(args.window),
        cost: cfg.cost(),
        dead_band: cfg.dead_band,
        risk_free_rate: cfg.risk_free_rate,
        periods_per_year: periods_per_year(cfg.interval),
    };
    let tc = TunerConfig {
        n_trials: tuning.n_trials,
        seed: cfg.seed,
        objective_segment: tuning.objective_segment,
        parallel: cfg.parallel,
    };
    let base = ModelSpec { kind, params: cfg.params_for(kind), seed: cfg.seed };
    let result =
        run_study(&views, &base, &default_space(kind), &settings, &tc).map_err(|e| AppError::Engine(e.to_string()))?;
    write_or_print(args.common.out.as_deref(), &result.to_jsonl())?;
    let best = result.best_trial();
    let params: Vec<String> = best.params.iter().map(|(k, v)| format!("{k}={v}")).collect();
    eprintln!("best trial {}: objective {:.4} with {}", best.index, best.objective, params.join(","));
    Ok(())
}

fn export(run: &Path, model: &str, window: usize, segment: &str) -> Result<(), AppError> {
    let kind: ModelKind = model.parse().map_err(|e: wfbt_core::models::ModelError| AppError::UnknownSelector(e.to_string()))?;
    let segment: Segment = segment.parse().map_err(AppError::UnknownSelector)?;
    let key = wfbt_core::app::CurveKey { kind, window, segment };
    let path = run.join("equity").join(key.file_name());
    let text = fs::read_to_string(&path)
        .map_err(|_| AppError::UnknownSelector(format!("no equity curve {}", path.display())))?;
    emit(&text)
}

fn dispatch(cli: Cli) -> Result<(), AppError> {
    match cli.command {
        Command::Ingest(a) => ingest(&a),
        Command::Features(a) => features(&a),
        Command::Run(a) => run(&a),
        Command::Tune(a) => tune(&a),
        Command::Report { run } => print_tables(&read_report(&run)?.reports),
        Command::ExportEquity { run, model, window, segment } => export(&run, &model, window, &segment),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) if !e.use_stderr() => e.exit(),
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(1);
        }
    };
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
