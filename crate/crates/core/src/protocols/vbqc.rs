//! Verifiable blind computation on a single graph: the client holds every
//! secret, the server measures and reports.

use std::collections::BTreeMap;

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

use crate::dtg::{GraphBundle, Role};
use crate::mbqc::{signal_index, DependencySets};

use super::engine::{expected_shipment, Evaluator, ShippedQubit};
use super::{AbortReason, Outcome, P2Strategy, Party, ProtocolError, SessionOutcome};

/// Runs `bundle` on `bits` with an honest shipment.
pub fn run_vbqc(bundle: &GraphBundle, bits: &[u8], server: &mut dyn P2Strategy, seed: u64) -> Result<SessionOutcome, ProtocolError> {
    let shipment = expected_shipment(bundle);
    run_vbqc_on(bundle, &shipment, bits, server, seed)
}

/// As [`run_vbqc`] with the qubits actually shipped.
pub fn run_vbqc_on(
    bundle: &GraphBundle,
    shipment: &[ShippedQubit],
    bits: &[u8],
    server: &mut dyn P2Strategy,
    seed: u64,
) -> Result<SessionOutcome, ProtocolError> {
    let c = &bundle.circuit;
    if bits.len() != c.pattern.num_bits {
        return Err(ProtocolError::InputLength { expected: c.pattern.num_bits, got: bits.len() });
    }
    let deps = DependencySets::new(&c.pattern.graph, &c.pattern.flow);
    let mut ev = Evaluator::new(&bundle.dt, shipment, ChaCha20Rng::seed_from_u64(seed));
    let mut s = BTreeMap::new();
    let mut reported = BTreeMap::new();
    let mut trap_failed = false;
    for (index, &v) in bundle.order.iter().enumerate() {
        let (sx, sz) = bundle.signals(&deps, v, &s);
        let delta = bundle.row(v, bits)[signal_index(sx, sz)];
        let b = ev.measure(v, delta).map_err(|e| ProtocolError::Engine(e.to_string()))?;
        let b = server.report(index, v, b) & 1;
        let q = bundle.qubits[v];
        match q.role {
            Role::Computation => {
                s.insert(v, b ^ q.r());
            }
            Role::Trap => trap_failed |= b != q.r(),
            Role::Dummy => {}
        }
        reported.insert(v, b);
    }
    if trap_failed {
        return Ok(SessionOutcome {
            outcome: Outcome::Abort { party: Party::P1, reason: AbortReason::TrapDuringEvaluation },
            corrupted: true,
            alpha: None,
        });
    }
    let decode = |locs: &[usize]| locs.iter().map(|&l| s[&bundle.green_at(l)]).collect::<Vec<u8>>();
    Ok(SessionOutcome {
        outcome: Outcome::Outputs { out1: decode(&c.p1_outputs), out2: decode(&c.p2_outputs) },
        corrupted: false,
        alpha: None,
    })
}
