//! Attack scenarios, Monte Carlo detection rates, and the two simulators.

pub mod simulators;
pub mod strategies;

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dtg::{dotted_triple, sample_trap_colouring, trap_fraction, Circuit};
use crate::protocols::functions::FunctionId;
use crate::protocols::{
    check_s, run_2pqc, run_ci_cc, run_qsp_cc, CcOutcome, HonestP1, HonestP2, Kind, Outcome, Party, ProtocolError,
};

pub use simulators::{simulate_covert_p1, simulate_malicious_p2, CovertP1Simulation, MaliciousP2Simulation};
pub use strategies::{ChosenShare, CorruptDeltas, FlipOne, LeakyTrap, OrthogonalState, ScriptedInput, SubstituteP2};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("unknown scenario '{0}'")]
    UnknownScenario(String),
    #[error("trials must be at least 1")]
    NoTrials,
    #[error(transparent)]
    Protocol(#[from] ProtocolError),
}

/// SplitMix64 finaliser; mixes `seed` and `trial` into a per-trial seed.
pub fn derive_seed(seed: u64, trial: u64) -> u64 {
    let mut z = seed ^ trial.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(0x6A09_E667_F3BC_C909);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Wilson score interval for `k` successes in `n` trials.
pub fn wilson(k: usize, n: usize, z: f64) -> (f64, f64) {
    if n == 0 {
        return (0.0, 1.0);
    }
    let (k, n) = (k as f64, n as f64);
    let p = k / n;
    let den = 1.0 + z * z / n;
    let centre = (p + z * z / (2.0 * n)) / den;
    let half = z * (p * (1.0 - p) / n + z * z / (4.0 * n * n)).sqrt() / den;
    ((centre - half).max(0.0), (centre + half).min(1.0))
}

/// `|k/n - p| <= sigmas * sqrt(p(1-p)/n)`; exact match when `p` is 0 or 1.
pub fn within_sigma(k: usize, n: usize, p: f64, sigmas: f64) -> bool {
    let rate = k as f64 / n as f64;
    let sd = (p * (1.0 - p) / n as f64).sqrt();
    (rate - p).abs() <= sigmas * sd + 1e-12
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scenario {
    /// Both parties honest; any abort or wrong output is an event.
    Honest,
    /// Instruction cut-and-choose, one corrupted delta table; event: undetected cheat.
    P1OneCorrupt,
    /// As above with two corrupted tables.
    P1TwoCorrupt,
    /// State cut-and-choose, one orthogonal qubit; event: abort.
    QspOneState,
    /// Full protocol, one corrupted delta table; event: P2 aborts.
    TwoPcCorruptDelta,
    /// Full protocol, P2 flips one uniformly chosen reported outcome; event: P1 aborts.
    P2FlipOne,
    /// Full protocol, one graph leaks P2's input through a trap; event: P1 learns it.
    LeakyTrap,
}

impl Scenario {
    pub const ALL: [Scenario; 7] = [
        Scenario::Honest,
        Scenario::P1OneCorrupt,
        Scenario::P1TwoCorrupt,
        Scenario::QspOneState,
        Scenario::TwoPcCorruptDelta,
        Scenario::P2FlipOne,
        Scenario::LeakyTrap,
    ];

    pub fn id(self) -> &'static str {
        match self {
            Scenario::Honest => "honest",
            Scenario::P1OneCorrupt => "p1-one-corrupt",
            Scenario::P1TwoCorrupt => "p1-two-corrupt",
            Scenario::QspOneState => "qsp-one-state",
            Scenario::TwoPcCorruptDelta => "2pqc-corrupt-delta",
            Scenario::P2FlipOne => "p2-flip-one",
            Scenario::LeakyTrap => "leaky-trap",
        }
    }

    /// Strategy ids of the two parties.
    pub fn strategies(self) -> (&'static str, &'static str) {
        match self {
            Scenario::Honest => ("honest", "honest"),
            Scenario::P1OneCorrupt | Scenario::P1TwoCorrupt | Scenario::TwoPcCorruptDelta => ("corrupt-deltas", "honest"),
            Scenario::QspOneState => ("orthogonal-state", "honest"),
            Scenario::P2FlipOne => ("honest", "flip-one"),
            Scenario::LeakyTrap => ("leaky-trap", "honest"),
        }
    }

    pub fn event(self) -> &'static str {
        match self {
            Scenario::Honest => "abort-or-wrong-output",
            Scenario::P1OneCorrupt | Scenario::P1TwoCorrupt => "undetected-cheat",
            Scenario::QspOneState => "abort",
            Scenario::TwoPcCorruptDelta => "abort-p2",
            Scenario::P2FlipOne => "abort-p1",
            Scenario::LeakyTrap => "input-leaked",
        }
    }

    /// Exact event probability for this configuration.
    pub fn expected(self, c: &Circuit, s: usize) -> f64 {
        let s = s as f64;
        match self {
            Scenario::Honest | Scenario::P1TwoCorrupt => 0.0,
            Scenario::P1OneCorrupt | Scenario::LeakyTrap => 1.0 / s,
            Scenario::QspOneState | Scenario::TwoPcCorruptDelta => (s - 1.0) / s,
            Scenario::P2FlipOne => {
                let dt = dotted_triple(&c.base);
                let col = sample_trap_colouring(&dt, &mut ChaCha20Rng::seed_from_u64(0));
                trap_fraction(&dt, &col)
            }
        }
    }
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.id())
    }
}

impl FromStr for Scenario {
    type Err = HarnessError;
    fn from_str(s: &str) -> Result<Self, HarnessError> {
        Scenario::ALL.into_iter().find(|x| x.id() == s).ok_or_else(|| HarnessError::UnknownScenario(s.into()))
    }
}

/// Registry entry, as written to the scenario file.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ScenarioInfo {
    pub id: String,
    pub p1: String,
    pub p2: String,
    pub event: String,
}

pub fn registry() -> Vec<ScenarioInfo> {
    Scenario::ALL
        .iter()
        .map(|s| {
            let (p1, p2) = s.strategies();
            ScenarioInfo { id: s.id().into(), p1: p1.into(), p2: p2.into(), event: s.event().into() }
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScenarioConfig {
    pub scenario: Scenario,
    pub f: FunctionId,
    pub n: usize,
    pub s: usize,
}

impl ScenarioConfig {
    pub fn new(scenario: Scenario, s: usize) -> Self {
        ScenarioConfig { scenario, f: FunctionId::Xor, n: 1, s }
    }
}

/// What one session produced.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrialResult {
    pub abort: Option<(Party, String)>,
    pub undetected_cheat: bool,
    pub output_corrupted: bool,
    pub event: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DetectionStats {
    pub scenario: String,
    pub f: String,
    pub s: usize,
    pub trials: usize,
    pub completed: usize,
    pub aborts_p1: usize,
    pub aborts_p2: usize,
    pub aborts_by_kind: BTreeMap<String, usize>,
    pub undetected_cheats: usize,
    pub output_corruptions: usize,
    pub event: String,
    pub events: usize,
    pub rate: f64,
    pub wilson95: (f64, f64),
    pub expected: f64,
}

impl DetectionStats {
    pub fn from_results(cfg: &ScenarioConfig, expected: f64, results: &[TrialResult]) -> Self {
        let mut st = DetectionStats {
            scenario: cfg.scenario.id().into(),
            f: format!("{}{}", cfg.f, cfg.n),
            s: cfg.s,
            trials: results.len(),
            completed: 0,
            aborts_p1: 0,
            aborts_p2: 0,
            aborts_by_kind: BTreeMap::new(),
            undetected_cheats: 0,
            output_corruptions: 0,
            event: cfg.scenario.event().into(),
            events: 0,
            rate: 0.0,
            wilson95: (0.0, 0.0),
            expected,
        };
        for r in results {
            match &r.abort {
                Some((p, code)) => {
                    *st.aborts_by_kind.entry(code.clone()).or_default() += 1;
                    match p {
                        Party::P1 => st.aborts_p1 += 1,
                        Party::P2 => st.aborts_p2 += 1,
                    }
                }
                None => st.completed += 1,
            }
            st.undetected_cheats += r.undetected_cheat as usize;
            st.output_corruptions += r.output_corrupted as usize;
            st.events += r.event as usize;
        }
        st.rate = st.events as f64 / st.trials as f64;
        st.wilson95 = wilson(st.events, st.trials, 1.96);
        st
    }

    pub fn within_sigma(&self, sigmas: f64) -> bool {
        within_sigma(self.events, self.trials, self.expected, sigmas)
    }
}

fn random_bits(rng: &mut ChaCha20Rng, n: usize) -> Vec<u8> {
    (0..n).map(|_| rng.gen_range(0..2)).collect()
}

fn from_cc(out: CcOutcome, event: bool) -> TrialResult {
    TrialResult {
        abort: out.abort.as_ref().map(|r| (Party::P2, r.code().to_string())),
        undetected_cheat: out.undetected_cheat(),
        output_corrupted: false,
        event,
    }
}

/// One seeded session of a scenario.
pub fn run_trial(cfg: &ScenarioConfig, circuit: &Arc<Circuit>, seed: u64) -> Result<TrialResult, HarnessError> {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let (s, n) = (cfg.s, cfg.n);
    let x = random_bits(&mut rng, n);
    let y = random_bits(&mut rng, n);
    let graph = rng.gen_range(0..s);
    let session_seed: u64 = rng.gen();
    let expected = cfg.f.outputs(&x, &y);
    let two_pc = |outcome: &Outcome| TrialResult {
        abort: match outcome {
            Outcome::Abort { party, reason } => Some((*party, reason.code().to_string())),
            _ => None,
        },
        undetected_cheat: false,
        output_corrupted: matches!(outcome, Outcome::Outputs { out1, out2 } if (out1.clone(), out2.clone()) != expected),
        event: false,
    };
    let r = match cfg.scenario {
        Scenario::Honest => {
            let run = run_2pqc(circuit, &mut HonestP1, &mut HonestP2::new(rng.gen()), &x, &y, s, session_seed)?;
            let mut t = two_pc(&run.outcome.outcome);
            t.event = t.abort.is_some() || t.output_corrupted;
            t
        }
        Scenario::P1OneCorrupt => {
            let out = run_ci_cc(circuit, &mut CorruptDeltas { graphs: vec![graph] }, s, session_seed)?;
            let ev = out.undetected_cheat();
            from_cc(out, ev)
        }
        Scenario::P1TwoCorrupt => {
            let other = (graph + 1 + rng.gen_range(0..s - 1)) % s;
            let out = run_ci_cc(circuit, &mut CorruptDeltas { graphs: vec![graph, other] }, s, session_seed)?;
            let ev = out.undetected_cheat();
            from_cc(out, ev)
        }
        Scenario::QspOneState => {
            let vertex = rng.gen_range(0..dotted_triple(&circuit.base).len());
            let out = run_qsp_cc(circuit, &mut OrthogonalState { graph, vertex }, s, session_seed)?;
            let ev = out.aborted();
            from_cc(out, ev)
        }
        Scenario::TwoPcCorruptDelta => {
            let mut p1 = CorruptDeltas { graphs: vec![graph] };
            let run = run_2pqc(circuit, &mut p1, &mut HonestP2::new(rng.gen()), &x, &y, s, session_seed)?;
            let mut t = two_pc(&run.outcome.outcome);
            t.event = run.outcome.outcome.aborted_by() == Some(Party::P2);
            t.undetected_cheat = run.outcome.alpha == Some(graph) && t.abort.is_none();
            t
        }
        Scenario::P2FlipOne => {
            let len = dotted_triple(&circuit.base).len();
            let mut p2 = FlipOne::new(len, rng.gen());
            let run = run_2pqc(circuit, &mut HonestP1, &mut p2, &x, &y, s, session_seed)?;
            let mut t = two_pc(&run.outcome.outcome);
            t.event = run.outcome.outcome.aborted_by() == Some(Party::P1);
            t
        }
        Scenario::LeakyTrap => {
            let mut p1 = LeakyTrap::new(graph);
            let run = run_2pqc(circuit, &mut p1, &mut HonestP2::new(rng.gen()), &x, &y, s, session_seed)?;
            let mut t = two_pc(&run.outcome.outcome);
            t.event = leaked_bit(&p1, &run.transcript).is_some_and(|(bit, guess)| run.outcome.alpha == Some(graph) && guess == y[bit]);
            t
        }
    };
    Ok(r)
}

/// P1's reading of the leaky trap: `(bit index, guessed value)`, if the
/// trap's outcome report appears in the transcript.
pub fn leaked_bit(p1: &LeakyTrap, t: &crate::protocols::Transcript) -> Option<(usize, u8)> {
    let (v, bit, r) = p1.target?;
    let reported = t
        .messages
        .iter()
        .filter(|m| m.kind == Kind::OutcomeReport)
        .find(|m| m.payload["vertex"].as_u64() == Some(v as u64))?
        .payload["outcome"]
        .as_u64()? as u8;
    Some((bit, reported ^ r))
}

/// Runs `trials` independent sessions with per-trial derived seeds on up to
/// `jobs` threads. The result does not depend on `jobs`.
pub fn monte_carlo(cfg: &ScenarioConfig, trials: usize, seed: u64, jobs: usize) -> Result<DetectionStats, HarnessError> {
    if trials == 0 {
        return Err(HarnessError::NoTrials);
    }
    check_s(cfg.s)?;
    let circuit = cfg.f.circuit(cfg.n)?;
    let expected = cfg.scenario.expected(&circuit, cfg.s);
    let pool = rayon::ThreadPoolBuilder::new().num_threads(jobs.max(1)).build().expect("thread pool");
    let results: Result<Vec<TrialResult>, HarnessError> =
        pool.install(|| (0..trials as u64).into_par_iter().map(|t| run_trial(cfg, &circuit, derive_seed(seed, t))).collect());
    Ok(DetectionStats::from_results(cfg, expected, &results?))
}

/// The leaky-trap attack; with `leak = false` the adversary keeps its graphs honest.
pub fn attack_leaky_trap(s: usize, trials: usize, seed: u64, jobs: usize, leak: bool) -> Result<DetectionStats, HarnessError> {
    let scenario = if leak { Scenario::LeakyTrap } else { Scenario::Honest };
    let mut st = monte_carlo(&ScenarioConfig::new(scenario, s), trials, seed, jobs)?;
    if !leak {
        st.event = Scenario::LeakyTrap.event().into();
        st.events = 0;
        st.rate = 0.0;
        st.wilson95 = wilson(0, trials, 1.96);
        st.expected = 0.0;
    }
    Ok(st)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn wilson_examples() {
        let (lo, hi) = wilson(0, 10, 1.96);
        assert_eq!(lo, 0.0);
        assert!((hi - 0.27753).abs() < 1e-4);
        let (lo, hi) = wilson(50, 100, 1.96);
        assert!((lo - 0.40383).abs() < 1e-4 && (hi - 0.59617).abs() < 1e-4);
    }

    #[test]
    fn seeds_are_mixed() {
        assert_ne!(derive_seed(1, 0), derive_seed(1, 1));
        assert_ne!(derive_seed(1, 0), derive_seed(2, 0));
        assert_eq!(derive_seed(7, 3), derive_seed(7, 3));
    }

    #[test]
    fn honest_scenario_has_no_events() {
        let st = monte_carlo(&ScenarioConfig::new(Scenario::Honest, 2), 20, 1, 2).unwrap();
        assert_eq!((st.events, st.aborts_p1, st.aborts_p2, st.output_corruptions), (0, 0, 0, 0));
        assert_eq!(st.completed, 20);
    }

    #[test]
    fn jobs_do_not_change_results() {
        let cfg = ScenarioConfig::new(Scenario::P2FlipOne, 2);
        assert_eq!(monte_carlo(&cfg, 30, 5, 1).unwrap(), monte_carlo(&cfg, 30, 5, 4).unwrap());
    }

    #[test]
    fn unknown_scenario_is_an_error() {
        assert!(matches!("nope".parse::<Scenario>(), Err(HarnessError::UnknownScenario(_))));
        for s in Scenario::ALL {
            assert_eq!(s.id().parse::<Scenario>().unwrap(), s);
        }
    }

    #[test]
    fn counts_sum_to_trials() {
        let st = monte_carlo(&ScenarioConfig::new(Scenario::TwoPcCorruptDelta, 4), 40, 9, 2).unwrap();
        assert_eq!(st.completed + st.aborts_p1 + st.aborts_p2, st.trials);
    }
}
