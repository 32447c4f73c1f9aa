//! Two-party computation: cut-and-choose over `s` dotted-triple graphs,
//! interactive evaluation of one of them, then key release.

use std::collections::BTreeMap;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde_json::json;

use crate::crypto::{commit_fresh, decode_share, encode_share, Commitment, IdealOt, ObliviousTransfer, Opening, OtQuery};
use crate::dtg::{build_bundle_on, dotted_triple, Circuit, DTGraph, GraphBundle, Role};
use crate::mbqc::{signal_index, DependencySets, Vertex};

use super::commitments::{commit_bundle, decode_delta, open_bundle, slot_bit, BundleCommitments, BundleOpenings};
use super::engine::{check_shipped_qubit, expected_shipment, Evaluator, ShippedQubit};
use super::{check_s, AbortReason, Kind, Outcome, P1Strategy, P2Strategy, Party, ProtocolError, SessionOutcome, Transcript};

type Step<T = ()> = Result<T, (Party, AbortReason)>;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
enum Stage {
    Fresh,
    Built,
    Committed,
    Transferred,
    Shipped,
    Announced,
    Tossed,
    Opened,
    Checked,
    Evaluated,
    Done,
}

#[derive(Clone, Debug)]
pub struct TwoPartyRun {
    pub outcome: SessionOutcome,
    pub transcript: Transcript,
    /// P2's OT choice bits, as the ideal OT saw them.
    pub ot_choices: Vec<u8>,
}

/// Per-DT-vertex OT payload entry: `(graph, vertex, openings)`.
type OtEntry = (usize, usize, [Opening; 4]);

/// State of one run, both parties included. Cloning it snapshots the run.
#[derive(Clone)]
pub struct Session {
    pub circuit: Arc<Circuit>,
    pub dt: Arc<DTGraph>,
    pub s: usize,
    pub id: String,
    pub transcript: Transcript,
    stage: Stage,
    p1_rng: ChaCha20Rng,
    p2_rng: ChaCha20Rng,
    q_rng: ChaCha20Rng,
    // P1 side
    pub x: Vec<u8>,
    pub bundles: Vec<GraphBundle>,
    openings: Vec<BundleOpenings>,
    coin: Option<Opening>,
    corrupted: bool,
    s_values: BTreeMap<usize, u8>,
    // shared
    pub commitments: Vec<BundleCommitments>,
    pub shipments: Vec<Vec<ShippedQubit>>,
    pub alpha: Option<usize>,
    // P2 side
    pub y: Vec<u8>,
    ot_rows: BTreeMap<(usize, usize), [Opening; 4]>,
    outcomes: BTreeMap<usize, u8>,
    out_commit: BTreeMap<usize, Opening>,
}

fn stream(seed: u64, k: u64) -> ChaCha20Rng {
    let mut r = ChaCha20Rng::seed_from_u64(seed);
    r.set_stream(k);
    r
}

impl Session {
    pub fn new(circuit: Arc<Circuit>, s: usize, seed: u64) -> Result<Self, ProtocolError> {
        check_s(s)?;
        circuit.validate().map_err(|e| ProtocolError::Circuit(e.to_string()))?;
        let dt = Arc::new(dotted_triple(&circuit.base));
        Ok(Session {
            id: format!("{}-s{}-seed{}", circuit.name, s, seed),
            circuit,
            dt,
            s,
            transcript: Transcript::default(),
            stage: Stage::Fresh,
            p1_rng: stream(seed, 1),
            p2_rng: stream(seed, 2),
            q_rng: stream(seed, 3),
            x: Vec::new(),
            bundles: Vec::new(),
            openings: Vec::new(),
            coin: None,
            corrupted: false,
            s_values: BTreeMap::new(),
            commitments: Vec::new(),
            shipments: Vec::new(),
            alpha: None,
            y: Vec::new(),
            ot_rows: BTreeMap::new(),
            outcomes: BTreeMap::new(),
            out_commit: BTreeMap::new(),
        })
    }

    fn advance(&mut self, from: Stage, to: Stage) -> Result<(), ProtocolError> {
        if self.stage != from {
            return Err(ProtocolError::OutOfOrder(format!("{to:?} requires {from:?}, session is at {:?}", self.stage)));
        }
        self.stage = to;
        Ok(())
    }

    fn send(&mut self, party: Party, kind: Kind, payload: serde_json::Value) {
        let id = self.id.clone();
        self.transcript.push(&id, party, kind, payload);
    }

    fn check_len(&self, v: &[u8]) -> Result<(), ProtocolError> {
        if v.len() != self.circuit.n || v.iter().any(|&b| b > 1) {
            return Err(ProtocolError::InputLength { expected: self.circuit.n, got: v.len() });
        }
        Ok(())
    }

    /// Step 1: P1 builds `s` graphs for its input.
    pub fn build(&mut self, p1: &mut dyn P1Strategy, x: &[u8]) -> Result<(), ProtocolError> {
        self.check_len(x)?;
        let x_hat = p1.input(x);
        self.check_len(&x_hat)?;
        let mut bundles: Vec<GraphBundle> =
            (0..self.s).map(|_| build_bundle_on(&self.circuit, &self.dt, &mut self.p1_rng)).collect();
        p1.tamper_bundles(&mut bundles);
        self.install(x_hat, bundles)
    }

    /// Step 1 with bundles prepared elsewhere (used by simulators).
    pub fn install(&mut self, x: Vec<u8>, bundles: Vec<GraphBundle>) -> Result<(), ProtocolError> {
        self.check_len(&x)?;
        if bundles.len() != self.s {
            return Err(ProtocolError::Circuit(format!("{} bundles for s = {}", bundles.len(), self.s)));
        }
        self.advance(Stage::Fresh, Stage::Built)?;
        self.x = x;
        self.bundles = bundles;
        Ok(())
    }

    /// Step 2: commitments to every graph, held back until step 4.
    pub fn commit(&mut self) -> Result<(), ProtocolError> {
        self.advance(Stage::Built, Stage::Committed)?;
        for b in &self.bundles {
            let (c, o) = commit_bundle(b, &mut self.p1_rng);
            self.commitments.push(c);
            self.openings.push(o);
        }
        Ok(())
    }

    /// Step 3: one OT per bit of P2's input, covering all graphs.
    pub fn oblivious_transfer(
        &mut self,
        p2: &mut dyn P2Strategy,
        y: &[u8],
        ot: &mut dyn ObliviousTransfer,
    ) -> Result<(), ProtocolError> {
        self.check_len(y)?;
        let y_hat = p2.input(y);
        self.check_len(&y_hat)?;
        self.advance(Stage::Committed, Stage::Transferred)?;
        let n = self.circuit.n;
        for j in 0..n {
            let locs: Vec<Vertex> =
                self.circuit.pattern.bindings.iter().filter(|b| b.bit == n + j).map(|b| b.vertex).collect();
            let mut payload: [Vec<OtEntry>; 2] = [Vec::new(), Vec::new()];
            for (i, o) in self.openings.iter().enumerate() {
                for &loc in &locs {
                    for &v in self.dt.members(loc) {
                        for (slot, list) in payload.iter_mut().enumerate() {
                            list.push((i, v, o.input_deltas[&v][slot].clone()));
                        }
                    }
                }
            }
            let [p0, p1] = payload;
            let q = OtQuery {
                x0: serde_json::to_vec(&p0).expect("serialisable"),
                x1: serde_json::to_vec(&p1).expect("serialisable"),
                b: y_hat[j],
            };
            let got: Vec<OtEntry> = serde_json::from_slice(&ot.transfer(&q)).unwrap_or_default();
            for (i, v, row) in got {
                self.ot_rows.insert((i, v), row);
            }
        }
        self.y = y_hat;
        Ok(())
    }

    /// Step 4(a): qubits go to P2.
    pub fn ship(&mut self, p1: &mut dyn P1Strategy) -> Result<(), ProtocolError> {
        self.advance(Stage::Transferred, Stage::Shipped)?;
        for i in 0..self.s {
            let mut q = expected_shipment(&self.bundles[i]);
            p1.tamper_shipment(i, &mut q);
            self.send(Party::P1, Kind::QubitShipment, json!({ "graph": i, "qubits": q.len() }));
            self.shipments.push(q);
        }
        Ok(())
    }

    /// Step 4(b): the commitments are sent.
    pub fn announce(&mut self) -> Result<(), ProtocolError> {
        self.advance(Stage::Shipped, Stage::Announced)?;
        for i in 0..self.s {
            let payload = json!({ "graph": i, "order": self.bundles[i].order, "commitments": self.commitments[i] });
            self.send(Party::P1, Kind::CommitmentBatch, payload);
        }
        Ok(())
    }

    /// Step 4(c) with P1's share drawn from the session.
    pub fn coin_toss(&mut self, p2: &mut dyn P2Strategy) -> Result<Step<usize>, ProtocolError> {
        let alpha1 = self.p1_rng.gen_range(0..self.s as u64);
        self.coin_toss_with(p2, alpha1)
    }

    /// Step 4(c) with a given P1 share. P1 commits, P2 answers, P1 opens.
    pub fn coin_toss_with(&mut self, p2: &mut dyn P2Strategy, alpha1: u64) -> Result<Step<usize>, ProtocolError> {
        self.advance(Stage::Announced, Stage::Tossed)?;
        let s = self.s as u64;
        let (c, o) = commit_fresh(&mut self.p1_rng, encode_share(alpha1 % s));
        self.send(Party::P1, Kind::CoinTossCommit, json!({ "commitment": c }));
        let alpha2 = p2.coin_share(&c, s);
        self.send(Party::P2, Kind::CoinTossShare, json!({ "alpha2": alpha2 }));
        if alpha2 >= s {
            return Ok(Err((Party::P1, AbortReason::CoinToss(format!("share {alpha2} out of range")))));
        }
        self.send(Party::P1, Kind::CoinTossReveal, json!({ "opening": o }));
        if !o.opens(&c) || decode_share(&o.y).is_none_or(|a| a >= s) {
            return Ok(Err((Party::P2, AbortReason::CoinToss("invalid opening".into()))));
        }
        let alpha = (decode_share(&o.y).expect("checked") ^ alpha2) as usize;
        self.coin = Some(o);
        self.alpha = Some(alpha);
        Ok(Ok(alpha))
    }

    /// Step 4(d): P1 opens every graph except `alpha`.
    pub fn open_checks(&mut self) -> Result<(), ProtocolError> {
        self.advance(Stage::Tossed, Stage::Opened)?;
        let alpha = self.alpha.expect("tossed");
        for i in (0..self.s).filter(|&i| i != alpha) {
            let payload = json!({ "graph": i, "openings": self.openings[i] });
            self.send(Party::P1, Kind::OpenCheckGraphs, payload);
        }
        Ok(())
    }

    /// Openings of graph `i` as P1 holds them.
    pub fn openings_of(&self, i: usize) -> &BundleOpenings {
        &self.openings[i]
    }

    /// Step 4(e): P2 checks every opened graph: decommitments, consistency,
    /// the shipped states, and the values it received by OT.
    pub fn check(&mut self) -> Result<Step, ProtocolError> {
        self.advance(Stage::Opened, Stage::Checked)?;
        let alpha = self.alpha.expect("tossed");
        for i in (0..self.s).filter(|&i| i != alpha) {
            let opened = match open_bundle(&self.circuit, &self.dt, &self.bundles[i].order, &self.commitments[i], &self.openings[i]) {
                Ok(b) => b,
                Err(field) => return Ok(Err((Party::P2, AbortReason::BadDecommitment { graph: i, field }))),
            };
            if let Err(detail) = opened.recheck() {
                return Ok(Err((Party::P2, AbortReason::InconsistentGraph { graph: i, detail })));
            }
            let expected = expected_shipment(&opened);
            for v in 0..self.dt.len() {
                if !check_shipped_qubit(&self.shipments[i][v], &expected[v], &mut self.q_rng) {
                    return Ok(Err((Party::P2, AbortReason::StateCheck { graph: i, vertex: v })));
                }
            }
            for b in self.circuit.pattern.bindings.iter().filter(|b| b.bit >= self.circuit.n) {
                let bit = self.y[b.bit - self.circuit.n] as usize;
                for &v in self.dt.members(b.vertex) {
                    let ok = self.ot_rows.get(&(i, v)).is_some_and(|row| {
                        row.iter().zip(&self.commitments[i].input_deltas[&v][bit].0).all(|(o, c)| o.opens(c))
                    });
                    if !ok {
                        return Ok(Err((Party::P2, AbortReason::OtMismatch { graph: i, location: b.vertex })));
                    }
                }
            }
        }
        Ok(Ok(()))
    }

    /// Step 4(f): interactive evaluation of graph `alpha`. P2 measures its
    /// output layer but keeps those outcomes for step 5.
    pub fn evaluate(&mut self, p2: &mut dyn P2Strategy) -> Result<Step, ProtocolError> {
        self.advance(Stage::Checked, Stage::Evaluated)?;
        let a = self.alpha.expect("tossed");
        let deps = DependencySets::new(&self.circuit.pattern.graph, &self.circuit.pattern.flow);
        let shipment = self.shipments[a].clone();
        let dt = self.dt.clone();
        let order = self.bundles[a].order.clone();
        let mut ev = Evaluator::new(&dt, &shipment, self.q_rng.clone());
        let n = self.circuit.n;
        for (index, &v) in order.iter().enumerate() {
            let loc = dt.vertex(v).loc;
            self.send(Party::P2, Kind::DeltaRequest, json!({ "vertex": v }));
            let (sx, sz) = self.bundles[a].signals(&deps, v, &self.s_values);
            let k = signal_index(sx, sz);
            let owner = self.circuit.input_owner(loc);
            let (opening, slot) = match owner {
                None => (Some(self.openings[a].deltas[&v][k].clone()), 0u8),
                Some(1) => {
                    let bit = self.bit_of(loc, &self.x.clone(), 0);
                    let slot = slot_bit(&self.bundles[a], loc, bit);
                    (Some(self.openings[a].input_deltas[&v][slot as usize][k].clone()), slot)
                }
                Some(_) => (None, self.bit_of(loc, &self.y.clone(), n)),
            };
            let payload = json!({ "vertex": v, "sx": sx, "sz": sz, "slot": slot, "opening": opening });
            let kind = if owner == Some(1) { Kind::InputDeltaOpen } else { Kind::DeltaOpen };
            self.send(Party::P1, kind, payload);

            let (commitment, received) = match owner {
                None => (&self.commitments[a].deltas[&v].0[k], opening),
                Some(_) => (
                    &self.commitments[a].input_deltas[&v][slot as usize].0[k],
                    opening.or_else(|| self.ot_rows.get(&(a, v)).map(|r| r[k].clone())),
                ),
            };
            let delta = received
                .filter(|o| o.opens(commitment))
                .and_then(|o| decode_delta(v, slot, k, &o.y));
            let Some(delta) = delta else {
                return Ok(Err((Party::P2, AbortReason::BadDecommitment { graph: a, field: format!("delta {v}") })));
            };
            let b = ev.measure(v, delta).map_err(|e| ProtocolError::Engine(e.to_string()))?;
            if self.circuit.base.is_output(loc) {
                self.outcomes.insert(v, p2.report(index, v, b));
                continue;
            }
            let reported = p2.report(index, v, b) & 1;
            self.send(Party::P2, Kind::OutcomeReport, json!({ "vertex": v, "outcome": reported }));
            self.p1_receive(a, v, reported);
        }
        self.q_rng = ChaCha20Rng::from_rng(&mut self.q_rng).expect("chacha");
        Ok(Ok(()))
    }

    /// Replaces P2's stored outcome of an output-layer qubit before step 5.
    pub fn set_outcome(&mut self, v: usize, b: u8) {
        self.outcomes.insert(v, b & 1);
    }

    fn bit_of(&self, loc: Vertex, bits: &[u8], offset: usize) -> u8 {
        let b = self.circuit.pattern.bindings.iter().find(|b| b.vertex == loc).expect("bound");
        bits[b.bit - offset]
    }

    fn p1_receive(&mut self, a: usize, v: usize, b: u8) {
        let q = self.bundles[a].qubits[v];
        match q.role {
            Role::Trap if b != q.r() => self.corrupted = true,
            Role::Computation => {
                self.s_values.insert(v, b ^ q.r());
            }
            _ => {}
        }
    }

    /// Step 5: output layers and key release.
    pub fn key_release(&mut self, p1: &mut dyn P1Strategy) -> Result<Step<(Vec<u8>, Vec<u8>)>, ProtocolError> {
        self.advance(Stage::Evaluated, Stage::Done)?;
        let a = self.alpha.expect("tossed");
        let dt = self.dt.clone();
        let c = self.circuit.clone();

        let p1_view: BTreeMap<usize, u8> =
            c.p1_outputs.iter().flat_map(|&l| dt.members(l).iter().map(|&v| (v, self.outcomes[&v]))).collect();
        self.send(Party::P2, Kind::OutputOutcomes, json!({ "outcomes": p1_view }));
        let mut commits: BTreeMap<usize, Commitment> = BTreeMap::new();
        for &l in &c.p2_outputs {
            for &v in dt.members(l) {
                let (cm, o) = commit_fresh(&mut self.p2_rng, vec![self.outcomes[&v]]);
                commits.insert(v, cm);
                self.out_commit.insert(v, o);
            }
        }
        self.send(Party::P2, Kind::OutputCommit, json!({ "commitments": commits }));

        let bundle = self.bundles[a].clone();
        if self.corrupted {
            return Ok(Err((Party::P1, AbortReason::TrapDuringEvaluation)));
        }
        let mut out1 = Vec::new();
        for &l in &c.p1_outputs {
            for &v in dt.members(l) {
                let q = bundle.qubits[v];
                if q.role == Role::Trap && p1_view[&v] & 1 != q.r() {
                    return Ok(Err((Party::P1, AbortReason::OutputTrap)));
                }
            }
            let g = bundle.green_at(l);
            out1.push((p1_view[&g] ^ bundle.qubits[g].r()) & 1);
        }
        if p1.abort_after_output(&out1) {
            return Ok(Err((Party::P1, AbortReason::AfterOutput)));
        }

        let positions: BTreeMap<Vertex, Opening> = self.openings[a].positions.clone();
        self.send(Party::P1, Kind::TrapPositionsOpen, json!({ "openings": positions }));
        let mut roles = BTreeMap::new();
        for &l in &c.p2_outputs {
            let r = positions
                .get(&l)
                .filter(|o| o.opens(&self.commitments[a].positions[&l]))
                .and_then(|o| super::commitments::decode_positions(l, &o.y));
            match r {
                Some(r) => roles.insert(l, r),
                None => return Ok(Err((Party::P2, AbortReason::BadDecommitment { graph: a, field: format!("positions {l}") }))),
            };
        }

        let mut reveal: BTreeMap<usize, Opening> = BTreeMap::new();
        for &l in &c.p2_outputs {
            for (slot, &v) in dt.members(l).iter().enumerate() {
                if roles[&l][slot] != Role::Computation {
                    reveal.insert(v, self.out_commit[&v].clone());
                }
            }
        }
        self.send(Party::P2, Kind::OutputTrapOpen, json!({ "openings": reveal }));
        for &l in &c.p2_outputs {
            for &v in dt.members(l) {
                let q = bundle.qubits[v];
                if q.role == Role::Computation {
                    continue;
                }
                let Some(o) = reveal.get(&v).filter(|o| o.opens(&commits[&v]) && o.y.len() == 1) else {
                    return Ok(Err((Party::P1, AbortReason::Malformed(format!("output opening {v}")))));
                };
                if q.role == Role::Trap && o.y[0] & 1 != q.r() {
                    return Ok(Err((Party::P1, AbortReason::KeyReleaseTrap)));
                }
            }
        }

        let keys = self.openings[a].keys.clone();
        self.send(Party::P1, Kind::KeyRelease, json!({ "openings": keys }));
        let mut out2 = Vec::new();
        for &l in &c.p2_outputs {
            let key = keys
                .get(&l)
                .filter(|o| o.opens(&self.commitments[a].keys[&l]))
                .and_then(|o| super::commitments::decode_key(l, &o.y));
            let Some(key) = key else {
                return Ok(Err((Party::P2, AbortReason::BadDecommitment { graph: a, field: format!("key {l}") })));
            };
            let slot = roles[&l].iter().position(|&r| r == Role::Computation).expect("one computation vertex");
            let g = dt.members(l)[slot];
            out2.push((self.outcomes[&g] ^ key) & 1);
        }
        Ok(Ok((out1, out2)))
    }

    /// Records an abort and closes the transcript.
    pub fn abort(&mut self, party: Party, reason: AbortReason) -> SessionOutcome {
        self.send(party, Kind::Abort, json!({ "reason": reason }));
        self.stage = Stage::Done;
        SessionOutcome { outcome: Outcome::Abort { party, reason }, corrupted: self.corrupted, alpha: self.alpha }
    }

    pub fn finish(&self, out1: Vec<u8>, out2: Vec<u8>) -> SessionOutcome {
        SessionOutcome { outcome: Outcome::Outputs { out1, out2 }, corrupted: self.corrupted, alpha: self.alpha }
    }

    /// Runs steps 4(d) to 5 after a successful coin toss.
    pub fn complete(&mut self, p1: &mut dyn P1Strategy, p2: &mut dyn P2Strategy) -> Result<SessionOutcome, ProtocolError> {
        self.open_checks()?;
        if let Err((p, r)) = self.check()? {
            return Ok(self.abort(p, r));
        }
        if let Err((p, r)) = self.evaluate(p2)? {
            return Ok(self.abort(p, r));
        }
        match self.key_release(p1)? {
            Ok((o1, o2)) => Ok(self.finish(o1, o2)),
            Err((p, r)) => Ok(self.abort(p, r)),
        }
    }
}

/// Rebuilds graph `i` of a session from openings received for it.
pub fn open_bundle_public(session: &Session, i: usize, openings: Option<&BundleOpenings>) -> Result<GraphBundle, String> {
    let o = openings.ok_or("no openings for this graph")?;
    let order = &session.bundles[i].order;
    open_bundle(&session.circuit, &session.dt, order, &session.commitments[i], o)
}

/// Full protocol run with an ideal OT.
pub fn run_2pqc(
    circuit: &Arc<Circuit>,
    p1: &mut dyn P1Strategy,
    p2: &mut dyn P2Strategy,
    x: &[u8],
    y: &[u8],
    s: usize,
    seed: u64,
) -> Result<TwoPartyRun, ProtocolError> {
    let mut ot = IdealOt::default();
    let mut session = Session::new(circuit.clone(), s, seed)?;
    session.build(p1, x)?;
    session.commit()?;
    session.oblivious_transfer(p2, y, &mut ot)?;
    session.ship(p1)?;
    session.announce()?;
    let outcome = match session.coin_toss(p2)? {
        Err((p, r)) => session.abort(p, r),
        Ok(_) => session.complete(p1, p2)?,
    };
    Ok(TwoPartyRun { outcome, transcript: session.transcript, ot_choices: ot.choices })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::protocols::functions::{all_inputs, FunctionId};
    use crate::protocols::{HonestP1, HonestP2};

    #[test]
    fn honest_runs_are_correct() {
        for f in [FunctionId::Xor, FunctionId::And, FunctionId::Nand, FunctionId::One] {
            let c = f.circuit(1).unwrap();
            for (x, y) in all_inputs(1) {
                for seed in 0..3 {
                    let run = run_2pqc(&c, &mut HonestP1, &mut HonestP2::new(seed), &x, &y, 2, seed).unwrap();
                    let (o1, o2) = f.outputs(&x, &y);
                    assert_eq!(run.outcome.outcome, Outcome::Outputs { out1: o1, out2: o2 }, "{f} {x:?} {y:?} {seed}");
                    run.transcript.check_grammar().unwrap();
                }
            }
        }
    }

    #[test]
    fn phases_enforce_order() {
        let c = FunctionId::Xor.circuit(1).unwrap();
        let mut s = Session::new(c, 2, 0).unwrap();
        s.build(&mut HonestP1, &[0]).unwrap();
        s.commit().unwrap();
        assert!(matches!(s.ship(&mut HonestP1), Err(ProtocolError::OutOfOrder(_))));
    }

    #[test]
    fn ot_sees_p2_input() {
        let c = FunctionId::Xor.circuit(2).unwrap();
        let run = run_2pqc(&c, &mut HonestP1, &mut HonestP2::new(1), &[0, 1], &[1, 0], 2, 5).unwrap();
        assert_eq!(run.ot_choices, vec![1, 0]);
    }
}
