//! Rewinding simulators run against snapshot-able adversaries.

use std::collections::BTreeMap;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

use crate::crypto::{decode_share, IdealOt, Opening};
use crate::dtg::{build_bundle_on, build_fake_bundle, Circuit};
use crate::protocols::{
    open_bundle_public, BundleOpenings, HonestP1, Kind, P1Strategy, P2Strategy, ProtocolError, Session, SessionOutcome,
    Transcript,
};

use super::strategies::ChosenShare;

/// Result of the extraction simulator for a corrupted P1.
#[derive(Clone, Debug)]
pub struct CovertP1Simulation {
    /// Extracted input, or `None` if the adversary aborted first.
    pub x_hat: Option<Vec<u8>>,
    /// Challenges of the first and the rewound coin toss.
    pub alphas: (usize, Option<usize>),
    /// Number of graphs whose openings the simulator holds.
    pub graphs_opened: usize,
    pub outcome: SessionOutcome,
    pub transcript: Transcript,
}

fn openings_in(t: &Transcript) -> BTreeMap<usize, BundleOpenings> {
    t.messages
        .iter()
        .filter(|m| m.kind == Kind::OpenCheckGraphs)
        .filter_map(|m| {
            let g = m.payload["graph"].as_u64()? as usize;
            Some((g, serde_json::from_value(m.payload["openings"].clone()).ok()?))
        })
        .collect()
}

fn revealed_alpha1(t: &Transcript) -> Option<u64> {
    let m = t.messages.iter().rev().find(|m| m.kind == Kind::CoinTossReveal)?;
    let o: Opening = serde_json::from_value(m.payload["opening"].clone()).ok()?;
    decode_share(&o.y)
}

fn random_bits(rng: &mut ChaCha20Rng, n: usize) -> Vec<u8> {
    (0..n).map(|_| rng.gen_range(0..2)).collect()
}

/// Plays P2 against `adversary`: challenge, collect openings, rewind once,
/// challenge another graph, collect the rest. With every graph opened, the
/// slots P1 opens for its own input reveal `x_hat`; the ideal output for
/// `x_hat` is then fed back to P1 under the known one-time pads.
pub fn simulate_covert_p1(
    circuit: &Arc<Circuit>,
    mut adversary: Box<dyn P1Strategy>,
    x: &[u8],
    ideal: &dyn Fn(&[u8]) -> Vec<u8>,
    s: usize,
    seed: u64,
) -> Result<CovertP1Simulation, ProtocolError> {
    let mut sim_rng = ChaCha20Rng::seed_from_u64(seed);
    sim_rng.set_stream(7);
    let y_dummy = random_bits(&mut sim_rng, circuit.n);
    let mut p2 = ChosenShare { share: sim_rng.gen_range(0..s as u64) };

    let mut session = Session::new(circuit.clone(), s, seed)?;
    session.build(adversary.as_mut(), x)?;
    session.commit()?;
    session.oblivious_transfer(&mut p2, &y_dummy, &mut IdealOt::default())?;
    session.ship(adversary.as_mut())?;
    session.announce()?;
    let saved = (session.clone(), adversary.snapshot());

    let done = |session: Session, outcome, alphas, graphs_opened| CovertP1Simulation {
        x_hat: None,
        alphas,
        graphs_opened,
        outcome,
        transcript: session.transcript,
    };
    let alpha = match session.coin_toss(&mut p2)? {
        Ok(a) => a,
        Err((p, r)) => {
            let o = session.abort(p, r);
            return Ok(done(session, o, (usize::MAX, None), 0));
        }
    };
    session.open_checks()?;
    if let Err((p, r)) = session.check()? {
        let o = session.abort(p, r);
        return Ok(done(session, o, (alpha, None), s - 1));
    }
    let mut opened = openings_in(&session.transcript);
    let alpha1 = revealed_alpha1(&session.transcript).expect("coin toss completed");

    // The single rewind.
    let (mut session, snap) = saved;
    adversary = snap;
    let others: Vec<usize> = (0..s).filter(|&i| i != alpha).collect();
    let alpha_prime = others[sim_rng.gen_range(0..others.len())];
    p2.share = alpha1 ^ alpha_prime as u64;
    let a2 = match session.coin_toss(&mut p2)? {
        Ok(a) => a,
        Err((p, r)) => {
            let o = session.abort(p, r);
            return Ok(done(session, o, (alpha, None), opened.len()));
        }
    };
    session.open_checks()?;
    for (g, o) in openings_in(&session.transcript) {
        opened.entry(g).or_insert(o);
    }
    if let Err((p, r)) = session.check()? {
        let o = session.abort(p, r);
        return Ok(done(session, o, (alpha, Some(a2)), opened.len()));
    }
    let graphs_opened = opened.len();
    let eval = open_bundle_public(&session, a2, opened.get(&a2))
        .map_err(|e| ProtocolError::Circuit(format!("evaluation graph not recoverable: {e}")))?;

    if let Err((p, r)) = session.evaluate(&mut p2)? {
        let o = session.abort(p, r);
        return Ok(done(session, o, (alpha, Some(a2)), graphs_opened));
    }
    let mut x_hat: Vec<Option<u8>> = vec![None; circuit.n];
    for m in session.transcript.messages.iter().filter(|m| m.kind == Kind::InputDeltaOpen) {
        let v = m.payload["vertex"].as_u64().expect("vertex") as usize;
        let slot = m.payload["slot"].as_u64().expect("slot") as u8;
        let loc = session.dt.vertex(v).loc;
        let bit = circuit.pattern.bindings.iter().find(|b| b.vertex == loc).expect("bound").bit;
        x_hat[bit] = Some(slot ^ eval.p1_swap[&loc] as u8);
    }
    let x_hat: Option<Vec<u8>> = x_hat.into_iter().collect();
    if let Some(xh) = &x_hat {
        let f1 = ideal(xh);
        for (q, &l) in circuit.p1_outputs.iter().enumerate() {
            let g = eval.green_at(l);
            session.set_outcome(g, f1[q] ^ eval.qubits[g].r());
        }
    }
    let outcome = match session.key_release(adversary.as_mut())? {
        Ok((o1, o2)) => session.finish(o1, o2),
        Err((p, r)) => session.abort(p, r),
    };
    Ok(CovertP1Simulation { x_hat, alphas: (alpha, Some(a2)), graphs_opened, outcome, transcript: session.transcript })
}

/// Result of the fake-graph simulator for a corrupted P2.
#[derive(Clone, Debug)]
pub struct MaliciousP2Simulation {
    pub y_hat: Vec<u8>,
    pub target: usize,
    /// Coin tosses until the challenge hit `target`, the successful one included.
    pub restarts: usize,
    /// What the trusted party returned for P2.
    pub f2: Vec<u8>,
    pub outcome: SessionOutcome,
    pub transcript: Transcript,
}

/// Upper bound on coin-toss attempts before giving up.
pub const MAX_RESTARTS: usize = 100_000;

/// Plays P1 against `adversary` without knowing P1's input: reads `y_hat`
/// off the OT choices, asks the trusted party for `f2(x, y_hat)`, hides a
/// fake graph that decrypts to it at a random index, and rewinds the coin
/// toss until that index is chosen.
pub fn simulate_malicious_p2(
    circuit: &Arc<Circuit>,
    mut adversary: Box<dyn P2Strategy>,
    y: &[u8],
    ideal: &dyn Fn(&[u8]) -> Vec<u8>,
    s: usize,
    seed: u64,
) -> Result<MaliciousP2Simulation, ProtocolError> {
    let mut sim_rng = ChaCha20Rng::seed_from_u64(seed);
    sim_rng.set_stream(9);
    let zeros = vec![0u8; circuit.n];

    // Run the adversary up to its OT queries, then rewind it to the start.
    let mut probe = Session::new(circuit.clone(), s, seed)?;
    probe.build(&mut HonestP1, &zeros)?;
    probe.commit()?;
    let mut ot = IdealOt::default();
    probe.oblivious_transfer(adversary.snapshot().as_mut(), y, &mut ot)?;
    let y_hat = ot.choices;
    let f2 = ideal(&y_hat);

    let target = sim_rng.gen_range(0..s);
    let mut session = Session::new(circuit.clone(), s, seed)?;
    let dt = session.dt.clone();
    let mut bundles = Vec::with_capacity(s);
    for i in 0..s {
        if i == target {
            bundles.push(build_fake_bundle(&f2, circuit, &mut sim_rng).map_err(|e| ProtocolError::Circuit(e.to_string()))?);
        } else {
            bundles.push(build_bundle_on(circuit, &dt, &mut sim_rng));
        }
    }
    session.install(zeros, bundles)?;
    session.commit()?;
    session.oblivious_transfer(adversary.as_mut(), y, &mut IdealOt::default())?;
    session.ship(&mut HonestP1)?;
    session.announce()?;

    let mut restarts = 0;
    loop {
        let saved = (session.clone(), adversary.snapshot());
        restarts += 1;
        let alpha1 = sim_rng.gen_range(0..s as u64);
        match session.coin_toss_with(adversary.as_mut(), alpha1)? {
            Err((p, r)) => {
                let outcome = session.abort(p, r);
                return Ok(MaliciousP2Simulation { y_hat, target, restarts, f2, outcome, transcript: session.transcript });
            }
            Ok(a) if a == target => break,
            Ok(_) if restarts >= MAX_RESTARTS => {
                return Err(ProtocolError::Engine("coin-toss restarts exhausted".into()));
            }
            Ok(_) => (session, adversary) = saved,
        }
    }
    let outcome = session.complete(&mut HonestP1, adversary.as_mut())?;
    Ok(MaliciousP2Simulation { y_hat, target, restarts, f2, outcome, transcript: session.transcript })
}
