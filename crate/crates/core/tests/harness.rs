use proptest::prelude::*;
use qcc::harness::{derive_seed, monte_carlo, registry, run_trial, wilson, Scenario, ScenarioConfig};

#[test]
fn registry_ids_parse_back() {
    let reg = registry();
    assert_eq!(reg.len(), Scenario::ALL.len());
    for info in reg {
        let s: Scenario = info.id.parse().unwrap();
        assert_eq!(s.id(), info.id);
        assert_eq!(s.strategies().0, info.p1);
    }
}

#[test]
fn corrupt_delta_in_full_protocol_caught_three_quarters() {
    let st = monte_carlo(&ScenarioConfig::new(Scenario::TwoPcCorruptDelta, 4), 400, 21, 1).unwrap();
    let (lo, hi) = wilson(st.events, st.trials, 3.0);
    assert!(lo <= 0.75 && 0.75 <= hi, "{st:?}");
    assert_eq!(st.aborts_p1, 0);
    assert_eq!(st.completed + st.aborts_p2, st.trials);
}

#[test]
fn honest_scenario_never_fires() {
    let st = monte_carlo(&ScenarioConfig::new(Scenario::Honest, 2), 100, 5, 1).unwrap();
    assert_eq!((st.events, st.completed, st.output_corruptions), (0, 100, 0));
}

#[test]
fn two_corrupt_tables_always_caught() {
    for s in [2, 4, 8] {
        let st = monte_carlo(&ScenarioConfig::new(Scenario::P1TwoCorrupt, s), 200, 8, 1).unwrap();
        assert_eq!(st.undetected_cheats, 0, "s = {s}");
        assert_eq!(st.aborts_p2, 200);
    }
}

#[test]
fn stats_serialise_as_one_json_line() {
    let st = monte_carlo(&ScenarioConfig::new(Scenario::QspOneState, 2), 20, 1, 1).unwrap();
    let line = serde_json::to_string(&st).unwrap();
    assert!(!line.contains('\n'));
    assert!(line.contains("\"scenario\":\"qsp-one-state\""));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]
    #[test]
    fn derived_seeds_differ_per_trial(seed in any::<u64>(), a in 0u64..10_000, b in 0u64..10_000) {
        prop_assume!(a != b);
        prop_assert_ne!(derive_seed(seed, a), derive_seed(seed, b));
    }

    #[test]
    fn trials_are_pure_functions_of_seed(si in 0usize..7, seed in any::<u64>()) {
        let cfg = ScenarioConfig::new(Scenario::ALL[si], 2);
        let c = cfg.f.circuit(cfg.n).unwrap();
        prop_assert_eq!(run_trial(&cfg, &c, seed).unwrap(), run_trial(&cfg, &c, seed).unwrap());
    }

    #[test]
    fn wilson_interval_contains_rate(k in 0usize..200, extra in 1usize..200) {
        let n = k + extra;
        let (lo, hi) = wilson(k, n, 1.96);
        let p = k as f64 / n as f64;
        prop_assert!(0.0 <= lo && lo <= p + 1e-12 && p <= hi + 1e-12 && hi <= 1.0);
    }
}
