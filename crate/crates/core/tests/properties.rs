use proptest::prelude::*;
use semeq::gridworld::{Action, Cell, GridConfig, Observation};
use semeq::harness::ExtReal;
use semeq::language::{default_jitter, max_jitter};
use semeq::mismatch::report;
use semeq::transport::{exact_emd, sinkhorn, PointCloud};
use semeq::{Language, SemanticSymbol};

fn cloud(n: usize) -> impl Strategy<Value = PointCloud> {
    (
        prop::collection::vec((-1.0f64..1.0, -1.0f64..1.0), n),
        prop::collection::vec(0.1f64..1.0, n),
    )
        .prop_map(|(pts, masses)| {
            PointCloud::from_masses(pts.into_iter().map(|(a, b)| [a, b]).collect(), &masses)
                .unwrap()
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn metrics_are_probabilities(a in 0u64..10_000, b in 0u64..10_000, frac in 0.0f64..0.99) {
        let g = GridConfig::default();
        let jitter = frac * max_jitter();
        let s = Language::synthesize(g, a, jitter).unwrap();
        let t = Language::synthesize(g, b, default_jitter()).unwrap();
        let r = report(&s, &t, false).unwrap();
        prop_assert!((0.0..=1.0).contains(&r.sm));
        prop_assert!((0.0..=1.0).contains(&r.em));
        prop_assert!(r.em == 0.0 || r.sm > 0.0);
        let own = report(&s, &s, false).unwrap();
        prop_assert_eq!((own.sm, own.em), (0.0, 0.0));
    }

    #[test]
    fn language_json_is_lossless(seed in any::<u64>()) {
        let l = Language::synthesize(GridConfig::new(3, 4, 40).unwrap(), seed, default_jitter()).unwrap();
        let back = Language::from_json(&l.to_json().unwrap()).unwrap();
        prop_assert_eq!(back, l);
    }

    #[test]
    fn decoding_is_a_distribution(seed in 0u64..1000, x1 in -1.0f64..1.0, x2 in -1.0f64..1.0, beta in 0.0f64..50.0) {
        let l = Language::synthesize(GridConfig::default(), seed, 0.0).unwrap();
        let x = SemanticSymbol::new(x1, x2);
        let p = l.decode_distribution(&x, beta);
        prop_assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        prop_assert!(p.iter().all(|v| *v >= 0.0));
        let hard = l.decode_distribution(&x, f64::INFINITY);
        prop_assert_eq!(hard[l.atom_of(&x)], 1.0);
    }

    #[test]
    fn moves_stay_on_the_grid(w in 2u32..9, h in 2u32..9, ac in 0i32..8, ar in 0i32..8, tc in 0i32..8, tr in 0i32..8, a in 0usize..4) {
        let g = GridConfig::new(w, h, 150).unwrap();
        let clamp = |c: i32, n: u32| c.rem_euclid(n as i32);
        let obs = Observation::new(Cell::new(clamp(ac, w), clamp(ar, h)), Cell::new(clamp(tc, w), clamp(tr, h)));
        prop_assume!(!obs.is_terminal());
        let next = g.step(&obs, Action::from_index(a)).unwrap();
        prop_assert!(g.contains(next.agent));
        prop_assert!(next.agent.manhattan(obs.agent) <= 1);
        let q = g.q_star_table(&obs).unwrap();
        prop_assert_eq!(q[g.best_action(&obs).unwrap().index()], -(obs.distance() as f64));
    }

    #[test]
    fn entropic_plans_are_feasible_and_dominated(s in cloud(6), t in cloud(5), eps in 0.01f64..1.0) {
        let p = sinkhorn(&s, &t, eps, 20_000).unwrap();
        let (r, c) = p.marginal_residuals(&s, &t);
        prop_assert!(r < 1e-6 && c < 1e-6);
        let exact = exact_emd(&s, &t).unwrap().transport_cost(&s, &t);
        prop_assert!(exact <= p.transport_cost(&s, &t) + 1e-12);
    }

    #[test]
    fn extended_reals_round_trip(v in prop_oneof![Just(f64::INFINITY), -50.0f64..50.0]) {
        let x = ExtReal(v);
        prop_assert_eq!(x.to_string().parse::<ExtReal>().unwrap(), x);
        let json = serde_json::to_string(&x).unwrap();
        prop_assert_eq!(serde_json::from_str::<ExtReal>(&json).unwrap(), x);
    }
}
