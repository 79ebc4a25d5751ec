use proptest::prelude::*;

use wfbt_core::dataset::{build_features, label, split, DatasetView, Direction, FeatureFrame, ReturnSeries, Segment, SegmentSplit};
use wfbt_core::evaluation::{perfect_foresight_pnl, EvalSettings};
use wfbt_core::indicators::{bollinger, keltner_width, mfi, IndicatorConfig};
use wfbt_core::ingest::{parse_candles_csv, write_candles_csv, Candle, CandleSeries, DAILY};
use wfbt_core::metrics::{classification_metrics, r_squared, regression_errors};
use wfbt_core::models::{default_space, Distribution, HyperParamSpace, ModelKind, ModelSpec, ParamValue};
use wfbt_core::trading::{count_trades, pnl_percent, simulate, CostModel, Position, PositionSeries};
use wfbt_core::tuner::{run_study, sample_params, select_best, trial_seed, Trial, TunerConfig};
use wfbt_core::walkforward::{run_walkforward, WalkForwardConfig};

/// Valid candles from per-bar (log move, upper wick, lower wick, volume).
fn candles(len: std::ops::Range<usize>) -> impl Strategy<Value = CandleSeries> {
    (1.0f64..1000.0, prop::collection::vec((-0.08f64..0.08, 0.0f64..0.03, 0.0f64..0.03, 0.0f64..1e6), len)).prop_map(
        |(start, bars)| {
            let mut price = start;
            let rows = bars
                .into_iter()
                .enumerate()
                .map(|(i, (m, up, down, v))| {
                    let open = price;
                    price *= m.exp();
                    Candle::new(
                        1_600_000_000 + i as i64 * DAILY,
                        open,
                        open.max(price) * (1.0 + up),
                        open.min(price) * (1.0 - down),
                        price,
                        v,
                    )
                })
                .collect();
            CandleSeries::new(rows, DAILY).unwrap()
        },
    )
}

fn scaled(s: &CandleSeries, factor: f64) -> CandleSeries {
    let rows = s
        .candles()
        .iter()
        .map(|c| Candle { open: c.open * factor, high: c.high * factor, low: c.low * factor, close: c.close * factor, ..*c })
        .collect();
    CandleSeries::new(rows, s.interval()).unwrap()
}

fn positions() -> impl Strategy<Value = Vec<(Position, f64)>> {
    prop::collection::vec((prop_oneof![Just(Position::Short), Just(Position::Flat), Just(Position::Long)], -0.2f64..0.2), 1..80)
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 64, failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn csv_round_trip(s in candles(1..60)) {
        let back = parse_candles_csv(&write_candles_csv(&s), DAILY).unwrap();
        prop_assert_eq!(back, s);
    }

    #[test]
    fn indicator_ranges(s in candles(25..80)) {
        for v in mfi(&s, 14).unwrap().values.iter().flatten() {
            prop_assert!((0.0..=100.0).contains(v));
        }
        let bb = bollinger(&s, 20, 2.0).unwrap();
        for i in bb.middle.warmup_len..s.len() {
            let (lo, mid, up) = (bb.lower.get(i).unwrap(), bb.middle.get(i).unwrap(), bb.upper.get(i).unwrap());
            prop_assert!(lo <= mid && mid <= up);
        }
        for v in keltner_width(&s, 20, 10, 2.0).unwrap().values.iter().flatten() {
            prop_assert!(*v >= 0.0);
        }
    }

    /// Scaling every price by a power of two is exact in floating point, and
    /// all features are scale-free, so the feature rows must not move.
    #[test]
    fn features_are_scale_invariant(s in candles(25..60), exp in -4i32..5) {
        let cfg = IndicatorConfig::default();
        let a = build_features(&s, &cfg).unwrap();
        let b = build_features(&scaled(&s, 2f64.powi(exp)), &cfg).unwrap();
        for (ra, rb) in a.rows.iter().zip(&b.rows).skip(a.valid_from) {
            for (x, y) in ra.iter().zip(rb) {
                prop_assert!((x - y).abs() <= 1e-12 * x.abs().max(1.0), "{} vs {}", x, y);
            }
        }
    }

    #[test]
    fn features_ignore_the_future(s in candles(25..70), cut in 21usize..70) {
        let cut = cut.min(s.len());
        let cfg = IndicatorConfig::default();
        let full = build_features(&s, &cfg).unwrap();
        let head = build_features(&s.truncated(cut).unwrap(), &cfg).unwrap();
        let bits = |rows: &[Vec<f64>]| rows.iter().map(|r| r.iter().map(|v| v.to_bits()).collect::<Vec<_>>()).collect::<Vec<_>>();
        prop_assert_eq!(bits(&full.rows[..cut]), bits(&head.rows));
    }

    #[test]
    fn pnl_bounded_and_trades_counted(steps in positions(), fee in 0.0f64..100.0) {
        let (pos, rets): (Vec<Position>, Vec<f64>) = steps.into_iter().unzip();
        let series = PositionSeries::from_positions(pos.clone());
        let (curve, ledger) = simulate(&series, &rets, &CostModel { fee_bps: fee }).unwrap();
        prop_assert!(pnl_percent(&curve) <= perfect_foresight_pnl(&rets) + 1e-9);
        let changes = std::iter::once(Position::Flat).chain(pos.iter().copied()).collect::<Vec<_>>().windows(2).filter(|w| w[0] != w[1]).count();
        prop_assert_eq!(count_trades(&ledger), changes);
        prop_assert_eq!(curve.equity.len(), rets.len());
    }

    #[test]
    fn regression_error_identities(pairs in prop::collection::vec((-10.0f64..10.0, -10.0f64..10.0), 2..50)) {
        let (y, p): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
        let e = regression_errors(&y, &p).unwrap();
        prop_assert!((e.rmse * e.rmse - e.mse).abs() <= 1e-9 * e.mse.max(1.0));
        prop_assert!(e.mae <= e.rmse + 1e-12);
        if y.iter().any(|v| *v != y[0]) {
            prop_assert_eq!(r_squared(&y, &y).unwrap(), 1.0);
            prop_assert!(r_squared(&y, &p).unwrap() <= 1.0);
        }
    }

    #[test]
    fn f1_is_harmonic_mean(pairs in prop::collection::vec((any::<bool>(), any::<bool>()), 1..60)) {
        let dir = |b: bool| if b { Direction::Up } else { Direction::Down };
        let truth: Vec<Direction> = pairs.iter().map(|p| dir(p.0)).collect();
        let pred: Vec<Direction> = pairs.iter().map(|p| dir(p.1)).collect();
        let m = classification_metrics(&truth, &pred).unwrap();
        let h = if m.precision + m.recall == 0.0 { 0.0 } else { 2.0 * m.precision * m.recall / (m.precision + m.recall) };
        prop_assert!((m.f1 - h).abs() < 1e-12);
        prop_assert!(m.f1 <= m.precision.max(m.recall) + 1e-12 && m.f1 >= m.precision.min(m.recall) - 1e-12);
    }

    #[test]
    fn walkforward_is_chronological(n in 12usize..60, window in 1usize..10, start in 0usize..20) {
        let frame = FeatureFrame {
            timestamps: (0..n as i64).map(|i| i * DAILY).collect(),
            feature_names: vec!["x".into()],
            rows: (0..n).map(|i| vec![(i as f64 * 0.7).sin()]).collect(),
            valid_from: 0,
        };
        let values = (0..n).map(|t| (t > 0).then(|| (t as f64 * 1.3).cos() * 0.01)).collect();
        let ds = label(frame, &ReturnSeries { values }).unwrap();
        let start = start.min(ds.usable.end - 1);
        let view = DatasetView { parent: &ds, range: start..ds.usable.end, segment: "test" };
        let p = run_walkforward(&view, &ModelSpec::new(ModelKind::RidgeR), &WalkForwardConfig::trailing(window)).unwrap();
        let first = start.max(window);
        prop_assert_eq!(p.len(), ds.usable.end.saturating_sub(first));
        for (i, r) in p.records.iter().enumerate() {
            prop_assert_eq!(r.index, first + i);
            prop_assert_eq!(r.train_range.clone(), r.index - window..r.index);
        }
    }

    #[test]
    fn sampled_params_stay_in_bounds(seed in any::<u64>(), index in 0usize..1000) {
        let space = HyperParamSpace { dims: vec![
            ("a".into(), Distribution::Uniform { lo: -1.0, hi: 2.0 }),
            ("b".into(), Distribution::LogUniform { lo: 1e-5, hi: 10.0 }),
            ("c".into(), Distribution::Int { lo: 3, hi: 9 }),
            ("d".into(), Distribution::Categorical { choices: vec!["x".into(), "y".into()] }),
        ]};
        let ts = trial_seed(seed, index);
        let p = sample_params(&space, ts);
        prop_assert_eq!(&p, &sample_params(&space, ts));
        match (&p["a"], &p["b"], &p["c"], &p["d"]) {
            (ParamValue::Float(a), ParamValue::Float(b), ParamValue::Int(c), ParamValue::Text(d)) => {
                prop_assert!((-1.0..=2.0).contains(a));
                prop_assert!((1e-5..=10.0).contains(b));
                prop_assert!((3..=9).contains(c));
                prop_assert!(d == "x" || d == "y");
            }
            other => prop_assert!(false, "unexpected types {:?}", other),
        }
    }

    #[test]
    fn best_trial_is_first_maximum(objs in prop::collection::vec(prop_oneof![Just(f64::NEG_INFINITY), (-3i32..3).prop_map(f64::from)], 1..30)) {
        let trials: Vec<Trial> = objs.iter().enumerate().map(|(index, &objective)| Trial {
            index,
            params: Default::default(),
            objective,
            error: (objective == f64::NEG_INFINITY).then(|| "failed".to_string()),
            report: None,
        }).collect();
        match select_best(&trials) {
            None => prop_assert!(objs.iter().all(|o| *o == f64::NEG_INFINITY)),
            Some(b) => {
                prop_assert!(objs.iter().all(|o| *o <= objs[b]));
                prop_assert!(objs[..b].iter().all(|o| *o < objs[b]));
                prop_assert!(objs[b] > f64::NEG_INFINITY);
            }
        }
    }
}

#[test]
fn tuner_parallel_matches_sequential() {
    let series = wfbt_core::synthetic::synthetic_series(&Default::default()).unwrap();
    let ds = wfbt_core::dataset::prepare(&series, &IndicatorConfig::default()).unwrap();
    let views = split(&ds, &SegmentSplit::default()).unwrap();
    for kind in [ModelKind::KnnC, ModelKind::RandomForestR, ModelKind::SgdC] {
        let run = |parallel| {
            let cfg = TunerConfig { n_trials: 6, seed: 42, objective_segment: Segment::Backtest, parallel };
            run_study(&views, &ModelSpec::new(kind).with_seed(1), &default_space(kind), &EvalSettings::daily(14), &cfg).unwrap()
        };
        let (a, b, c) = (run(true), run(true), run(false));
        assert_eq!(a.to_jsonl(), b.to_jsonl(), "{kind}");
        assert_eq!(a.to_jsonl(), c.to_jsonl(), "{kind}");
        assert_eq!(a.best, c.best);
    }
}
