//! Cut-and-choose over `s` graphs: quantum state preparation (states are
//! checked), classical instructions (delta tables are checked), and both
//! followed by evaluation of the kept graph.

use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use crate::crypto::{coin_toss, HonestCommitter, HonestResponder};
use crate::dtg::{build_bundle_on, dotted_triple, Circuit, GraphBundle};

use super::commitments::{commit_bundle, open_bundle};
use super::engine::{check_shipped_qubit, expected_shipment};
use super::vbqc::run_vbqc_on;
use super::{check_s, AbortReason, Outcome, P1Strategy, ProtocolError, HonestP2};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum CheckKind {
    States,
    Instructions,
    Both,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CcOutcome {
    pub alpha: usize,
    pub abort: Option<AbortReason>,
    /// The kept graph differs from what an honest sender would have kept.
    pub kept_corrupted: bool,
    /// Output of evaluating the kept graph (only with [`CheckKind::Both`]).
    pub output: Option<Outcome>,
}

impl CcOutcome {
    pub fn aborted(&self) -> bool {
        self.abort.is_some()
    }

    /// The sender cheated on the kept graph and nobody aborted.
    pub fn undetected_cheat(&self) -> bool {
        self.abort.is_none() && self.kept_corrupted
    }
}

fn run_cc(
    kind: CheckKind,
    circuit: &Arc<Circuit>,
    sender: &mut dyn P1Strategy,
    bits: &[u8],
    s: usize,
    seed: u64,
) -> Result<CcOutcome, ProtocolError> {
    check_s(s)?;
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let dt = Arc::new(dotted_triple(&circuit.base));
    let honest: Vec<GraphBundle> = (0..s).map(|_| build_bundle_on(circuit, &dt, &mut rng)).collect();
    let mut bundles = honest.clone();
    sender.tamper_bundles(&mut bundles);
    let committed: Vec<_> = bundles.iter().map(|b| commit_bundle(b, &mut rng)).collect();
    let mut shipments = Vec::with_capacity(s);
    for (i, b) in bundles.iter().enumerate() {
        let mut q = expected_shipment(b);
        sender.tamper_shipment(i, &mut q);
        shipments.push(q);
    }

    let mut p1 = HonestCommitter::new(ChaCha20Rng::from_rng(&mut rng).expect("chacha"));
    let mut p2 = HonestResponder { rng: ChaCha20Rng::from_rng(&mut rng).expect("chacha") };
    let alpha = coin_toss(&mut p1, &mut p2, s as u64).map_err(|e| ProtocolError::Engine(e.to_string()))?.alpha as usize;

    let kept_corrupted = bundles[alpha] != honest[alpha] || shipments[alpha] != expected_shipment(&honest[alpha]);
    let mut check_rng = ChaCha20Rng::from_rng(&mut rng).expect("chacha");
    let result = |abort| Ok(CcOutcome { alpha, abort: Some(abort), kept_corrupted, output: None });
    for i in (0..s).filter(|&i| i != alpha) {
        let (c, o) = &committed[i];
        let opened = match open_bundle(circuit, &dt, &bundles[i].order, c, o) {
            Ok(b) => b,
            Err(field) => return result(AbortReason::BadDecommitment { graph: i, field }),
        };
        if kind != CheckKind::States {
            if let Err(detail) = opened.recheck() {
                return result(AbortReason::InconsistentGraph { graph: i, detail });
            }
        }
        if kind != CheckKind::Instructions {
            let expected = expected_shipment(&opened);
            for (v, want) in expected.iter().enumerate() {
                if !check_shipped_qubit(&shipments[i][v], want, &mut check_rng) {
                    return result(AbortReason::StateCheck { graph: i, vertex: v });
                }
            }
        }
    }
    let output = if kind == CheckKind::Both {
        let mut server = HonestP2::new(seed ^ 0x5eed);
        let run = run_vbqc_on(&bundles[alpha], &shipments[alpha], bits, &mut server, seed.wrapping_add(1))?;
        if let Outcome::Abort { reason, .. } = run.outcome {
            return Ok(CcOutcome { alpha, abort: Some(reason), kept_corrupted, output: None });
        }
        Some(run.outcome)
    } else {
        None
    };
    Ok(CcOutcome { alpha, abort: None, kept_corrupted, output })
}

/// Sender commits to preparation data and ships `s` graphs of qubits; the
/// receiver checks all but one against the opened data.
pub fn run_qsp_cc(circuit: &Arc<Circuit>, sender: &mut dyn P1Strategy, s: usize, seed: u64) -> Result<CcOutcome, ProtocolError> {
    let bits = vec![0; circuit.pattern.num_bits];
    run_cc(CheckKind::States, circuit, sender, &bits, s, seed)
}

/// Sender commits to `s` delta tables; the receiver rechecks all but one.
pub fn run_ci_cc(circuit: &Arc<Circuit>, sender: &mut dyn P1Strategy, s: usize, seed: u64) -> Result<CcOutcome, ProtocolError> {
    let bits = vec![0; circuit.pattern.num_bits];
    run_cc(CheckKind::Instructions, circuit, sender, &bits, s, seed)
}

/// Both checks on the same graphs, then the kept graph is evaluated on `bits`.
pub fn run_qc_cc(
    circuit: &Arc<Circuit>,
    sender: &mut dyn P1Strategy,
    bits: &[u8],
    s: usize,
    seed: u64,
) -> Result<CcOutcome, ProtocolError> {
    run_cc(CheckKind::Both, circuit, sender, bits, s, seed)
}
