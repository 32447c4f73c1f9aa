//! Protocol state machines: verifiable blind computation on one graph, the
//! three cut-and-choose protocols, and the two-party computation protocol.

mod commitments;
mod engine;
pub mod functions;
mod cc;
mod twopc;
mod vbqc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::crypto::Commitment;

pub use cc::{run_ci_cc, run_qc_cc, run_qsp_cc, CcOutcome, CheckKind};
pub use commitments::{BundleCommitments, BundleOpenings, CommittedRow, VertexSecret};
pub use engine::{check_shipped_qubit, expected_shipment, Evaluator, ShippedQubit};
pub use twopc::{open_bundle_public, run_2pqc, Session, TwoPartyRun};
pub use vbqc::run_vbqc;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ProtocolError {
    #[error("s = {0} must be a power of two and at least 2")]
    BadSecurityParameter(usize),
    #[error("input length mismatch: expected {expected}, got {got}")]
    InputLength { expected: usize, got: usize },
    #[error("engine failure: {0}")]
    Engine(String),
    #[error("circuit: {0}")]
    Circuit(String),
    #[error("phase out of order: {0}")]
    OutOfOrder(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Party {
    P1,
    P2,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Kind {
    QubitShipment,
    CommitmentBatch,
    CoinTossCommit,
    CoinTossShare,
    CoinTossReveal,
    OpenCheckGraphs,
    InputDeltaOpen,
    DeltaRequest,
    DeltaOpen,
    OutcomeReport,
    OutputOutcomes,
    OutputCommit,
    TrapPositionsOpen,
    OutputTrapOpen,
    KeyRelease,
    Abort,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Message {
    pub session: String,
    pub seq: u64,
    pub kind: Kind,
    pub payload: serde_json::Value,
    pub party: Party,
}

/// Why a party aborted. Each reason names the failed check.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum AbortReason {
    /// A decommitment did not open its commitment.
    BadDecommitment { graph: usize, field: String },
    /// An opened graph's fields are inconsistent.
    InconsistentGraph { graph: usize, detail: String },
    /// A shipped qubit failed its check measurement.
    StateCheck { graph: usize, vertex: usize },
    /// Values received through OT do not match the opened graph.
    OtMismatch { graph: usize, location: usize },
    /// The coin toss failed.
    CoinToss(String),
    /// A trap reported during evaluation was wrong.
    TrapDuringEvaluation,
    /// A trap in P1's output layer was wrong.
    OutputTrap,
    /// A trap in P2's output layer was wrong.
    KeyReleaseTrap,
    /// A corrupted P1 chose to abort after seeing its output.
    AfterOutput,
    /// The simulated server returned garbage.
    Malformed(String),
}

impl AbortReason {
    /// Stable identifier of the failed check.
    pub fn code(&self) -> &'static str {
        match self {
            AbortReason::BadDecommitment { .. } => "bad-decommitment",
            AbortReason::InconsistentGraph { .. } => "inconsistent-graph",
            AbortReason::StateCheck { .. } => "state-check",
            AbortReason::OtMismatch { .. } => "ot-mismatch",
            AbortReason::CoinToss(_) => "coin-toss",
            AbortReason::TrapDuringEvaluation => "trap-during-evaluation",
            AbortReason::OutputTrap => "output-trap",
            AbortReason::KeyReleaseTrap => "key-release-trap",
            AbortReason::AfterOutput => "after-output",
            AbortReason::Malformed(_) => "malformed",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Outcome {
    Outputs { out1: Vec<u8>, out2: Vec<u8> },
    Abort { party: Party, reason: AbortReason },
}

impl Outcome {
    pub fn is_abort(&self) -> bool {
        matches!(self, Outcome::Abort { .. })
    }

    pub fn aborted_by(&self) -> Option<Party> {
        match self {
            Outcome::Abort { party, .. } => Some(*party),
            _ => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SessionOutcome {
    pub outcome: Outcome,
    /// Raised privately by P1 when a trap fails during evaluation.
    pub corrupted: bool,
    /// Index of the evaluated graph, when the protocol got that far.
    pub alpha: Option<usize>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Transcript {
    pub messages: Vec<Message>,
}

impl Transcript {
    pub fn push(&mut self, session: &str, party: Party, kind: Kind, payload: serde_json::Value) {
        let seq = self.messages.len() as u64;
        self.messages.push(Message { session: session.to_string(), seq, kind, payload, party });
    }

    pub fn kinds(&self) -> Vec<Kind> {
        self.messages.iter().map(|m| m.kind).collect()
    }

    /// One JSON object per line.
    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for m in &self.messages {
            out.push_str(&serde_json::to_string(m).expect("message serialises"));
            out.push('\n');
        }
        out
    }

    pub fn from_jsonl(s: &str) -> Result<Self, String> {
        let mut messages = Vec::new();
        for (i, line) in s.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
            messages.push(serde_json::from_str(line).map_err(|e| format!("line {}: {e}", i + 1))?);
        }
        Ok(Transcript { messages })
    }

    /// Checks sequence numbering and the message grammar.
    pub fn check_grammar(&self) -> Result<(), String> {
        for (i, m) in self.messages.iter().enumerate() {
            if m.seq != i as u64 {
                return Err(format!("message {i} has seq {}", m.seq));
            }
        }
        grammar::check(&self.kinds())
    }
}

/// The protocol grammar as a sequence of phases.
mod grammar {
    use super::Kind::{self, *};

    pub fn check(k: &[Kind]) -> Result<(), String> {
        let mut i = 0;
        let take = |i: &mut usize, want: Kind| -> bool {
            if k.get(*i) == Some(&want) {
                *i += 1;
                true
            } else {
                false
            }
        };
        let fail = |i: usize, what: &str| Err(format!("position {i}: expected {what}, found {:?}", k.get(i)));
        let ended = |i: usize| k.get(i) == Some(&Abort) && i + 1 == k.len();
        while take(&mut i, QubitShipment) {}
        while take(&mut i, CommitmentBatch) {}
        for want in [CoinTossCommit, CoinTossShare, CoinTossReveal] {
            if ended(i) {
                return Ok(());
            }
            if !take(&mut i, want) {
                return fail(i, &format!("{want:?}"));
            }
        }
        while take(&mut i, OpenCheckGraphs) {}
        loop {
            if ended(i) || i == k.len() {
                return Ok(());
            }
            if !take(&mut i, DeltaRequest) {
                break;
            }
            if !(take(&mut i, DeltaOpen) || take(&mut i, InputDeltaOpen)) {
                return if ended(i) { Ok(()) } else { fail(i, "DeltaOpen or InputDeltaOpen") };
            }
            take(&mut i, OutcomeReport);
        }
        for want in [OutputOutcomes, OutputCommit, TrapPositionsOpen, OutputTrapOpen, KeyRelease] {
            if ended(i) {
                return Ok(());
            }
            if !take(&mut i, want) {
                return fail(i, &format!("{want:?}"));
            }
        }
        if i == k.len() {
            Ok(())
        } else {
            fail(i, "end of transcript")
        }
    }
}

/// Strategy of the party that builds and ships the graphs.
pub trait P1Strategy {
    fn name(&self) -> String {
        "honest".into()
    }
    /// Input actually used.
    fn input(&mut self, x: &[u8]) -> Vec<u8> {
        x.to_vec()
    }
    /// May alter the honestly built bundles before anything is committed.
    fn tamper_bundles(&mut self, _bundles: &mut [crate::dtg::GraphBundle]) {}
    /// May alter the qubits of one graph before shipment.
    fn tamper_shipment(&mut self, _graph: usize, _qubits: &mut [ShippedQubit]) {}
    /// Called with P1's decrypted output; `true` aborts.
    fn abort_after_output(&mut self, _out: &[u8]) -> bool {
        false
    }
    fn snapshot(&self) -> Box<dyn P1Strategy>;
}

/// Strategy of the party that measures the graphs.
pub trait P2Strategy {
    fn name(&self) -> String {
        "honest".into()
    }
    fn input(&mut self, y: &[u8]) -> Vec<u8> {
        y.to_vec()
    }
    /// Answer to P1's coin-toss commitment.
    fn coin_share(&mut self, c: &Commitment, s: u64) -> u64;
    /// Outcome disclosed for the `index`-th measured qubit (DT vertex `vertex`).
    fn report(&mut self, _index: usize, _vertex: usize, b: u8) -> u8 {
        b
    }
    fn snapshot(&self) -> Box<dyn P2Strategy>;
}

/// Honest P1.
#[derive(Clone, Debug, Default)]
pub struct HonestP1;

impl P1Strategy for HonestP1 {
    fn snapshot(&self) -> Box<dyn P1Strategy> {
        Box::new(self.clone())
    }
}

/// Honest P2 with its own coin.
#[derive(Clone, Debug)]
pub struct HonestP2 {
    pub rng: rand_chacha::ChaCha20Rng,
}

impl HonestP2 {
    pub fn new(seed: u64) -> Self {
        use rand::SeedableRng;
        HonestP2 { rng: rand_chacha::ChaCha20Rng::seed_from_u64(seed) }
    }
}

impl P2Strategy for HonestP2 {
    fn coin_share(&mut self, _c: &Commitment, s: u64) -> u64 {
        use rand::Rng;
        self.rng.gen_range(0..s)
    }
    fn snapshot(&self) -> Box<dyn P2Strategy> {
        Box::new(self.clone())
    }
}

/// Trusted-party behaviour for `f = (f1, f2)`.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Corruption {
    /// Input substituted by a corrupted P1.
    pub x_prime: Option<Vec<u8>>,
    /// Input substituted by a corrupted P2.
    pub y_prime: Option<Vec<u8>>,
    /// Corrupted P1 aborts after receiving `f1`.
    pub p1_aborts_after_output: bool,
    /// A party sends abort instead of an input.
    pub abort_input: Option<Party>,
}

pub fn ideal_functionality(
    f: &dyn Fn(&[u8], &[u8]) -> (Vec<u8>, Vec<u8>),
    n: usize,
    x: &[u8],
    y: &[u8],
    corruption: &Corruption,
) -> Outcome {
    if let Some(party) = corruption.abort_input {
        return Outcome::Abort { party, reason: AbortReason::Malformed("abort sent as input".into()) };
    }
    let x = corruption.x_prime.as_deref().unwrap_or(x);
    let y = corruption.y_prime.as_deref().unwrap_or(y);
    if x.len() != n || y.len() != n || x.iter().chain(y).any(|&b| b > 1) {
        let party = if x.len() != n || x.iter().any(|&b| b > 1) { Party::P1 } else { Party::P2 };
        return Outcome::Abort { party, reason: AbortReason::Malformed("inconsistent input".into()) };
    }
    let (out1, out2) = f(x, y);
    if corruption.p1_aborts_after_output {
        return Outcome::Abort { party: Party::P1, reason: AbortReason::AfterOutput };
    }
    Outcome::Outputs { out1, out2 }
}

/// Rejects `s` that is not a power of two or is below 2.
pub fn check_s(s: usize) -> Result<(), ProtocolError> {
    if s < 2 || !s.is_power_of_two() {
        return Err(ProtocolError::BadSecurityParameter(s));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn and(x: &[u8], y: &[u8]) -> (Vec<u8>, Vec<u8>) {
        (vec![x[0] & y[0]], vec![x[0] & y[0]])
    }

    #[test]
    fn ideal_functionality_examples() {
        let none = Corruption::default();
        assert_eq!(ideal_functionality(&and, 1, &[1], &[1], &none), Outcome::Outputs { out1: vec![1], out2: vec![1] });
        let abort = Corruption { p1_aborts_after_output: true, ..Default::default() };
        assert_eq!(ideal_functionality(&and, 1, &[1], &[1], &abort).aborted_by(), Some(Party::P1));
        let sub = Corruption { x_prime: Some(vec![0]), ..Default::default() };
        assert_eq!(ideal_functionality(&and, 1, &[1], &[1], &sub), Outcome::Outputs { out1: vec![0], out2: vec![0] });
        assert!(ideal_functionality(&and, 1, &[1, 0], &[1], &none).is_abort());
    }

    #[test]
    fn s_must_be_power_of_two() {
        assert!(check_s(4).is_ok());
        assert!(check_s(3).is_err());
        assert!(check_s(1).is_err());
    }

    #[test]
    fn grammar_rejects_out_of_order_kinds() {
        use Kind::*;
        assert!(grammar::check(&[QubitShipment, CommitmentBatch, CoinTossCommit, CoinTossShare, CoinTossReveal]).is_ok());
        assert!(grammar::check(&[QubitShipment, CoinTossShare]).is_err());
        assert!(grammar::check(&[QubitShipment, CommitmentBatch, Abort]).is_ok());
        assert!(grammar::check(&[QubitShipment, CommitmentBatch, CoinTossCommit, CoinTossShare, CoinTossReveal, KeyRelease]).is_err());
    }
}
