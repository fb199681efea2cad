use ael_core::harness::{
    run, run_baseline, run_baselines, run_seeds, run_with_backend, train, validate, AgentState, Aggregate,
    DataSource, Environment, HarnessError, Phase, Preset, RunConfig, Runner, Split,
};
use ael_core::market::{compute_metrics, Bar, PriceSeries, SynthConfig, TickerInfo};
use ael_core::planners::{BaselineKind, PlannerRegistry};
use ael_core::reflection::{ReflectionBackend, StubBackend};
use ael_core::credit::credit_strategy;
use ael_core::toolkit::{ToolParams, ToolRegistry};

fn short_config(train: usize, val: usize, test: usize) -> RunConfig {
    let mut synth = SynthConfig::standard();
    let total = train + val + test;
    let mut left = total;
    for s in &mut synth.segments {
        s.bars = s.bars.min(left);
        left -= s.bars;
    }
    synth.segments.retain(|s| s.bars > 0);
    if left > 0 {
        synth.segments.last_mut().unwrap().bars += left;
    }
    RunConfig {
        split: Split { train, val, test },
        data: DataSource::Synth {
            preset: "standard".into(),
            config: Some(synth),
        },
        ..RunConfig::default()
    }
}

#[test]
fn warm_up_episodes_do_not_update() {
    let cfg = short_config(30, 10, 10);
    let r = run(&cfg).unwrap();
    let train: Vec<_> = r.episodes.iter().filter(|e| matches!(e.phase, Phase::WarmUp | Phase::Train)).collect();
    assert_eq!(train.len(), 30);
    let updating = train.iter().filter(|e| e.reward.is_some()).count();
    assert_eq!(updating, 15);
    assert!(train[..15].iter().all(|e| e.phase == Phase::WarmUp && e.policy.as_deref() == Some("compressed")));
}

#[test]
fn no_reflection_makes_no_backend_calls() {
    let mut cfg = short_config(40, 10, 10);
    cfg.flags.no_reflection = true;
    let r = run(&cfg).unwrap();
    assert_eq!(r.backend_calls, 0);
    assert!(r.windows.iter().all(|w| w.insight.is_none() && w.semantic_written == 0));

    let with = run(&short_config(40, 10, 10)).unwrap();
    assert!(with.backend_calls > 0);
}

#[test]
fn same_seed_same_hash() {
    let cfg = short_config(40, 10, 10);
    assert_eq!(run(&cfg).unwrap().hash(), run(&cfg).unwrap().hash());
    let other = RunConfig { seed: 7, ..cfg.clone() };
    assert_ne!(run(&cfg).unwrap().hash(), run(&other).unwrap().hash());
}

#[test]
fn split_mismatch_is_config_error() {
    let mut cfg = RunConfig::default();
    cfg.split.test = 60;
    let e = run(&cfg).unwrap_err();
    assert!(matches!(e, HarnessError::Config(_)));
    assert_eq!(e.exit_code(), 2);
}

#[test]
fn checkpoint_selection_and_test_freeze() {
    let cfg = short_config(40, 12, 10);
    let env = Environment::from_config(&cfg).unwrap();
    let planners = PlannerRegistry::builtin();
    let backend = StubBackend::default();
    let credit = credit_strategy("uniform").unwrap();
    let runner = Runner::new(&cfg, &env, &planners, &backend, credit.as_ref());
    let mut st = AgentState::new(&cfg, &env, &planners, &backend).unwrap();
    let trained = train(&runner, &mut st).unwrap();
    assert_eq!(trained.checkpoints.len(), 4);
    let (best, means) = validate(&runner, &trained).unwrap();
    let top = means.iter().cloned().fold(f64::MIN, f64::max);
    assert_eq!(best, means.iter().position(|m| *m == top).unwrap());

    // a frozen state refuses to train
    let mut frozen = trained.checkpoints[0].1.clone();
    frozen.freeze(1, "x");
    let mut p = ael_core::market::PortfolioState::new(env.n_tickers());
    assert!(matches!(
        runner.episode(&mut frozen, &mut p, 0, 0, Phase::Train),
        Err(HarnessError::Frozen(_))
    ));
}

#[test]
fn frozen_test_hashes_match() {
    let r = run(&short_config(40, 10, 10)).unwrap();
    assert!(r.frozen.intact());
    assert_eq!(r.lookahead.violations, 0);
    assert!(r.episodes.iter().filter(|e| e.phase == Phase::Test).all(|e| e.reward.is_none()));
}

#[test]
fn stub_run_via_trait_object() {
    let cfg = short_config(20, 10, 10);
    let env = Environment::from_config(&cfg).unwrap();
    let backend: Box<dyn ReflectionBackend> = Box::new(StubBackend::default());
    let a = run_with_backend(&cfg, &env, backend.as_ref()).unwrap();
    assert_eq!(a.canonical_json(), run(&cfg).unwrap().canonical_json());
}

#[test]
fn aggregate_single_and_multi_seed() {
    let cfg = short_config(20, 10, 10);
    let (_, one) = run_seeds(&cfg, &[5]).unwrap();
    assert!(one.single_seed);
    assert_eq!(one.metrics["sharpe"].std, Some(0.0));

    let (res, agg) = run_seeds(&cfg, &[1, 2, 3, 4, 5]).unwrap();
    assert!(!agg.single_seed);
    let s: Vec<f64> = res.iter().filter_map(|r| r.test.metrics.sharpe).collect();
    let mean = s.iter().sum::<f64>() / s.len() as f64;
    assert!((agg.metrics["sharpe"].mean.unwrap() - mean).abs() < 1e-12);
    assert!(run_seeds(&cfg, &[]).is_err());
}

#[test]
fn constant_metrics_have_zero_std() {
    let m = compute_metrics(&[0.01, -0.005, 0.002]).unwrap();
    let agg = Aggregate::from_metrics(&[1, 2, 3], &[m.clone(), m.clone(), m], vec![]);
    for s in agg.metrics.values().filter(|s| s.n > 0) {
        assert_eq!(s.std, Some(0.0));
    }
}

#[test]
fn presets_differ_as_documented() {
    let base = RunConfig::default();
    let tools = Preset::Tools.apply(&base);
    assert!(tools.flags.per_tool_selection && !tools.memory && tools.flags.no_reflection);
    let r = run(&short_config(20, 10, 10)).unwrap();
    assert!(r.final_policies.len() >= 5);
}

#[test]
fn four_baselines_deterministic() {
    let cfg = RunConfig::default();
    let a = run_baselines(&cfg).unwrap();
    assert_eq!(a.len(), 4);
    assert_eq!(a, run_baselines(&cfg).unwrap());
    assert_eq!(a[0].name, "EqW");
}

fn trend_series() -> PriceSeries {
    // ticker 0 climbs steadily, the rest wander around flat
    let n = 60;
    let mut bars = Vec::new();
    for i in 0..5 {
        let closes: Vec<f64> = (0..n)
            .map(|t| {
                if i == 0 {
                    100.0 * 1.01f64.powi(t as i32)
                } else {
                    100.0 + if (t + i) % 2 == 0 { 0.5 } else { -0.5 }
                }
            })
            .collect();
        bars.push(
            closes
                .iter()
                .map(|c| Bar {
                    open: *c,
                    high: *c,
                    low: *c,
                    close: *c,
                    volume: 1000.0,
                })
                .collect(),
        );
    }
    let tickers = (0..5).map(|i| TickerInfo::lookup(&format!("T{i}"))).collect();
    let start = chrono::DateTime::parse_from_rfc3339("2025-01-06T14:30:00Z").unwrap().to_utc();
    let ts = (0..n).map(|t| start + chrono::Duration::hours(t as i64)).collect();
    PriceSeries::new(tickers, ts, bars).unwrap()
}

#[test]
fn momentum_beats_equal_weight_with_a_dominant_trend() {
    let s = trend_series();
    let eqw = run_baseline(BaselineKind::EqW, &s, 30..60, 0.0).unwrap();
    let mom = run_baseline(BaselineKind::Mom, &s, 30..60, 0.0).unwrap();
    assert!(mom.metrics.return_pct >= eqw.metrics.return_pct);
}

#[test]
fn environment_builds_from_registry() {
    let cfg = RunConfig::default();
    let series = ael_core::harness::load_series(&cfg).unwrap();
    let reg = ToolRegistry::finance_from_dir(ToolParams::default(), None).unwrap();
    let env = Environment::new(series, reg).unwrap();
    assert_eq!(env.n_bars(), 208);
    assert_eq!(env.guard.stats().violations, 0);
}
