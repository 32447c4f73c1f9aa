use proptest::prelude::*;
use qcc::bounds::{classical_cc_gap_report, haar_state, one_orthogonal_instance, qspcc_check, qspcc_maps, ProjectorFamily};
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

#[test]
fn orthogonal_family_distance_is_one_over_s() {
    let mut rng = ChaCha20Rng::seed_from_u64(4);
    for s in 1..=6 {
        let (psi, targets) = one_orthogonal_instance(s, &mut rng);
        let m = qspcc_maps(&psi, &targets).unwrap();
        assert!(m.p2.abs() < 1e-12);
        assert!((m.p1 - 1.0 / s as f64).abs() < 1e-9);
        assert!((m.distance().unwrap() - 1.0 / s as f64).abs() < 1e-9);
    }
}

#[test]
fn larger_s_tightens_corpus_distance() {
    let a = qspcc_check(2, 100, 1).unwrap();
    let b = qspcc_check(5, 100, 1).unwrap();
    assert!(a.pass() && b.pass());
    assert!(b.max_distance < a.max_distance);
}

#[test]
fn gap_rows_track_one_over_s() {
    let rows = classical_cc_gap_report(&[2, 4], 800, 20, 3, 1).unwrap();
    for r in &rows {
        let sd = (r.classical * (1.0 - r.classical) / 800.0).sqrt();
        assert!((r.measured - r.classical).abs() <= 3.0 * sd, "{r:?}");
        assert!(r.numerical_max.unwrap() <= r.quantum_bound + 1e-6);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]
    #[test]
    fn families_satisfy_invariants(s in 2usize..5, extra in 0usize..8, seed in any::<u64>()) {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let dim = s + 1 + extra;
        let fam = ProjectorFamily::random(s, dim, 1, (dim - 1) / s, &mut rng).unwrap();
        prop_assert!(fam.validate().is_ok());
        let psi = haar_state(dim, &mut rng);
        prop_assert!(fam.rewind_distance(&psi).unwrap() <= (1.0 / s as f64).sqrt() + 1e-6);
    }
}
