use ael_core::bandits::BetaArm;
use ael_core::canonical::{state_hash, to_canonical_string};
use ael_core::credit::{fcc_combine, module_reward, CreditVector};
use ael_core::market::{apply_costs, compute_metrics, turnover};
use ael_core::planners::{baseline_allocate, score_to_weights, BASELINE_KINDS};
use proptest::prelude::*;

fn simplex_ok(w: &[f64], cash: f64) -> bool {
    w.iter().all(|x| *x >= 0.0) && cash >= -1e-12 && (w.iter().sum::<f64>() + cash - 1.0).abs() < 1e-9
}

proptest! {
    #[test]
    fn score_weights_on_simplex(
        scores in prop::collection::vec(-5.0f64..5.0, 1..20),
        temp in 0.05f64..3.0,
        budget in 0.1f64..1.0,
    ) {
        let d = score_to_weights(&scores, temp, budget).unwrap();
        prop_assert!(simplex_ok(&d.weights, d.cash));
        prop_assert!(d.invested() <= budget + 1e-12);
    }

    #[test]
    fn baselines_fully_invested(
        closes in prop::collection::vec(prop::collection::vec(1.0f64..200.0, 25), 2..8),
    ) {
        for k in BASELINE_KINDS {
            let d = baseline_allocate(k, &closes, 20);
            prop_assert!(simplex_ok(&d.weights, d.cash), "{:?}", k);
        }
    }

    #[test]
    fn beta_update_adds_reward(a in 0.5f64..10.0, b in 0.5f64..10.0, r in 0.0f64..=1.0) {
        let arm = BetaArm::with_prior("x", a, b).unwrap();
        let next = arm.updated(r).unwrap();
        prop_assert!((next.alpha - a - r).abs() < 1e-12);
        prop_assert!((next.beta - b - (1.0 - r)).abs() < 1e-12);
    }

    #[test]
    fn module_reward_between_inputs(r in 0.0f64..=1.0, g in 0.0f64..=1.0, lambda in 0.0f64..=1.0) {
        let m = module_reward(r, g, lambda);
        prop_assert!(m >= r.min(g) - 1e-12 && m <= r.max(g) + 1e-12);
    }

    #[test]
    fn fcc_stays_in_range(x in prop::array::uniform9(0.0f64..=1.0)) {
        let v = |i: usize| CreditVector::new(x[i], x[i + 1], x[i + 2]);
        let c = fcc_combine(&v(0), &v(3), &v(6));
        for g in c.as_array() {
            prop_assert!((0.0..=1.0).contains(&g));
        }
    }

    #[test]
    fn costs_never_raise_returns(
        rets in prop::collection::vec(-0.05f64..0.05, 3..60),
        seed_w in prop::collection::vec(0.0f64..1.0, 3..60),
        bp in 0.0f64..50.0,
    ) {
        let n = rets.len().min(seed_w.len());
        let rets = &rets[..n];
        let w: Vec<Vec<f64>> = seed_w[..n].iter().map(|x| vec![*x * 0.5, (1.0 - x) * 0.5]).collect();
        let adj = apply_costs(rets, &w, None, bp);
        let t = turnover(&w, None);
        for i in 0..n {
            prop_assert!(adj[i] <= rets[i]);
            prop_assert!((rets[i] - adj[i] - bp / 10_000.0 * t[i]).abs() < 1e-15);
        }
        let m = compute_metrics(&adj).unwrap();
        prop_assert!(m.return_pct <= compute_metrics(rets).unwrap().return_pct + 1e-12);
    }

    #[test]
    fn canonical_hash_ignores_key_order(a in -1e6f64..1e6, b in -1e6f64..1e6) {
        let x = serde_json::json!({"a": a, "b": {"c": b, "d": [a, b]}});
        let y = serde_json::json!({"b": {"d": [a, b], "c": b}, "a": a});
        prop_assert_eq!(to_canonical_string(&x), to_canonical_string(&y));
        prop_assert_eq!(state_hash(&x), state_hash(&y));
    }
}
