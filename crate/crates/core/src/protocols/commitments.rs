//! Commitment layout of one graph: preparation secrets, delta entries (one
//! commitment per entry), both versions of input-bound rows, P2's output keys
//! and the roles at P2's output locations.

use std::collections::BTreeMap;
use std::sync::Arc;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::crypto::{canonical, commit_fresh, Commitment, Opening};
use crate::dtg::{validate_colouring, Circuit, Colour, DTGraph, GraphBundle, QubitSpec, Role, TrapColouring, VertexKind};
use crate::mbqc::{DeltaRow, Vertex};
use crate::qsim::Angle8;

/// What an opened per-vertex commitment reveals.
pub type VertexSecret = QubitSpec;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CommittedRow(pub [Commitment; 4]);

/// Public side: what P1 sends in a `CommitmentBatch`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BundleCommitments {
    pub secrets: Vec<Commitment>,
    pub deltas: BTreeMap<usize, CommittedRow>,
    /// Two rows per vertex at an input-bound location, in slot order.
    pub input_deltas: BTreeMap<usize, [CommittedRow; 2]>,
    pub keys: BTreeMap<Vertex, Commitment>,
    pub positions: BTreeMap<Vertex, Commitment>,
}

/// Private side: every decommitment, same shape as [`BundleCommitments`].
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BundleOpenings {
    pub secrets: Vec<Opening>,
    pub deltas: BTreeMap<usize, [Opening; 4]>,
    pub input_deltas: BTreeMap<usize, [[Opening; 4]; 2]>,
    pub keys: BTreeMap<Vertex, Opening>,
    pub positions: BTreeMap<Vertex, Opening>,
    /// Slot order at P1-bound locations, revealed when the graph is opened.
    pub p1_swap: BTreeMap<Vertex, bool>,
}

fn le(v: usize) -> [u8; 8] {
    (v as u64).to_le_bytes()
}

const NONE: u8 = 0xFF;

fn role_byte(r: Role) -> u8 {
    match r {
        Role::Computation => 0,
        Role::Trap => 1,
        Role::Dummy => 2,
    }
}

fn role_from(b: u8) -> Option<Role> {
    match b {
        0 => Some(Role::Computation),
        1 => Some(Role::Trap),
        2 => Some(Role::Dummy),
        _ => None,
    }
}

pub fn encode_secret(v: usize, q: &QubitSpec) -> Vec<u8> {
    let fields = [
        role_byte(q.role),
        q.theta.map_or(NONE, |t| t.value()),
        q.r.unwrap_or(NONE),
        q.d.unwrap_or(NONE),
    ];
    canonical(&[b"secret", &le(v), &fields])
}

pub fn encode_delta(v: usize, slot: u8, k: usize, delta: Angle8) -> Vec<u8> {
    canonical(&[b"delta", &le(v), &[slot, k as u8, delta.value()]])
}

pub fn encode_key(loc: Vertex, key: u8) -> Vec<u8> {
    canonical(&[b"key", &le(loc), &[key]])
}

pub fn encode_positions(loc: Vertex, roles: &[Role; 3]) -> Vec<u8> {
    canonical(&[b"positions", &le(loc), &roles.map(role_byte)])
}

/// Splits a canonical encoding back into its fields.
fn fields(y: &[u8]) -> Option<Vec<&[u8]>> {
    let mut out = Vec::new();
    let mut rest = y;
    while !rest.is_empty() {
        if rest.len() < 8 {
            return None;
        }
        let len = u64::from_le_bytes(rest[..8].try_into().ok()?) as usize;
        rest = &rest[8..];
        if rest.len() < len {
            return None;
        }
        out.push(&rest[..len]);
        rest = &rest[len..];
    }
    Some(out)
}

fn tagged<'a>(y: &'a [u8], tag: &[u8], v: usize, n: usize) -> Option<&'a [u8]> {
    let f = fields(y)?;
    (f.len() == 3 && f[0] == tag && f[1] == le(v) && f[2].len() == n).then_some(f[2])
}

fn opt(b: u8, limit: u8) -> Option<Option<u8>> {
    match b {
        NONE => Some(None),
        x if x < limit => Some(Some(x)),
        _ => None,
    }
}

pub fn decode_secret(v: usize, y: &[u8]) -> Option<QubitSpec> {
    let f = tagged(y, b"secret", v, 4)?;
    Some(QubitSpec {
        role: role_from(f[0])?,
        theta: opt(f[1], 8)?.map(|t| Angle8::new(t as i64)),
        r: opt(f[2], 2)?,
        d: opt(f[3], 2)?,
    })
}

/// Returns the angle if `y` is entry `k` of slot `slot` at `v`.
pub fn decode_delta(v: usize, slot: u8, k: usize, y: &[u8]) -> Option<Angle8> {
    let f = tagged(y, b"delta", v, 3)?;
    (f[0] == slot && f[1] as usize == k && f[2] < 8).then(|| Angle8::new(f[2] as i64))
}

pub fn decode_key(loc: Vertex, y: &[u8]) -> Option<u8> {
    let f = tagged(y, b"key", loc, 1)?;
    (f[0] < 2).then_some(f[0])
}

pub fn decode_positions(loc: Vertex, y: &[u8]) -> Option<[Role; 3]> {
    let f = tagged(y, b"positions", loc, 3)?;
    Some([role_from(f[0])?, role_from(f[1])?, role_from(f[2])?])
}

/// Bit stored in `slot` at a bound location.
pub fn slot_bit(b: &GraphBundle, loc: Vertex, slot: u8) -> u8 {
    slot ^ b.p1_swap.get(&loc).copied().unwrap_or(false) as u8
}

fn commit_row<R: Rng + ?Sized>(rng: &mut R, v: usize, slot: u8, row: &DeltaRow) -> (CommittedRow, [Opening; 4]) {
    let mut cs = Vec::with_capacity(4);
    let mut os = Vec::with_capacity(4);
    for (k, &d) in row.iter().enumerate() {
        let (c, o) = commit_fresh(rng, encode_delta(v, slot, k, d));
        cs.push(c);
        os.push(o);
    }
    (CommittedRow(cs.try_into().expect("four")), os.try_into().expect("four"))
}

/// Commits to every field of a bundle with fresh nonces.
pub fn commit_bundle<R: Rng + ?Sized>(b: &GraphBundle, rng: &mut R) -> (BundleCommitments, BundleOpenings) {
    let mut pubc = BundleCommitments {
        secrets: Vec::new(),
        deltas: BTreeMap::new(),
        input_deltas: BTreeMap::new(),
        keys: BTreeMap::new(),
        positions: BTreeMap::new(),
    };
    let mut open = BundleOpenings {
        secrets: Vec::new(),
        deltas: BTreeMap::new(),
        input_deltas: BTreeMap::new(),
        keys: BTreeMap::new(),
        positions: BTreeMap::new(),
        p1_swap: b.p1_swap.clone(),
    };
    for (v, q) in b.qubits.iter().enumerate() {
        let (c, o) = commit_fresh(rng, encode_secret(v, q));
        pubc.secrets.push(c);
        open.secrets.push(o);
    }
    for (&v, row) in &b.deltas {
        let (c, o) = commit_row(rng, v, 0, row);
        pubc.deltas.insert(v, c);
        open.deltas.insert(v, o);
    }
    for (&v, pair) in &b.input_deltas {
        let loc = b.dt.vertex(v).loc;
        let s0 = slot_bit(b, loc, 0) as usize;
        let (c0, o0) = commit_row(rng, v, 0, &pair[s0]);
        let (c1, o1) = commit_row(rng, v, 1, &pair[1 - s0]);
        pubc.input_deltas.insert(v, [c0, c1]);
        open.input_deltas.insert(v, [o0, o1]);
    }
    for (&loc, &k) in &b.keys {
        let (c, o) = commit_fresh(rng, encode_key(loc, k));
        pubc.keys.insert(loc, c);
        open.keys.insert(loc, o);
    }
    for (&loc, roles) in &b.output_roles {
        let (c, o) = commit_fresh(rng, encode_positions(loc, roles));
        pubc.positions.insert(loc, c);
        open.positions.insert(loc, o);
    }
    (pubc, open)
}

/// Colours implied by per-vertex roles.
pub fn colouring_from_roles(dt: &DTGraph, roles: &[Role]) -> TrapColouring {
    let mut colours = vec![Colour::Red; dt.len()];
    for (v, info) in dt.vertices().iter().enumerate() {
        if info.kind == VertexKind::Primary {
            colours[v] = match roles[v] {
                Role::Computation => Colour::Green,
                Role::Trap => Colour::White,
                Role::Dummy => Colour::Black,
            };
        }
    }
    for (v, info) in dt.vertices().iter().enumerate() {
        if info.kind == VertexKind::Added {
            let nb = dt.neighbours(v);
            let same = nb.len() == 2 && colours[nb[0]] == colours[nb[1]];
            colours[v] = match roles[v] {
                Role::Computation => Colour::Green,
                Role::Trap => Colour::Black,
                Role::Dummy if same => colours[nb[0]],
                Role::Dummy => Colour::Red,
            };
        }
    }
    TrapColouring { colours }
}

/// Verifies every decommitment of an opened graph against its commitments and
/// rebuilds the bundle from the opened values. The error names the field.
pub fn open_bundle(
    circuit: &Arc<Circuit>,
    dt: &Arc<DTGraph>,
    order: &[usize],
    c: &BundleCommitments,
    o: &BundleOpenings,
) -> Result<GraphBundle, String> {
    let need = |ok: bool, what: String| if ok { Ok(()) } else { Err(what) };
    need(c.secrets.len() == dt.len() && o.secrets.len() == dt.len(), "secrets: wrong count".into())?;
    let mut qubits = Vec::with_capacity(dt.len());
    for v in 0..dt.len() {
        need(o.secrets[v].opens(&c.secrets[v]), format!("secret {v}"))?;
        qubits.push(decode_secret(v, &o.secrets[v].y).ok_or(format!("secret {v}: malformed"))?);
    }
    let roles: Vec<Role> = qubits.iter().map(|q| q.role).collect();
    let colouring = colouring_from_roles(dt, &roles);
    validate_colouring(dt, &colouring).map_err(|e| format!("colouring: {e}"))?;

    let open_row = |v: usize, slot: u8, cr: &CommittedRow, os: &[Opening; 4]| -> Result<DeltaRow, String> {
        let mut row = [Angle8::ZERO; 4];
        for k in 0..4 {
            need(os[k].opens(&cr.0[k]), format!("delta {v}/{slot}/{k}"))?;
            row[k] = decode_delta(v, slot, k, &os[k].y).ok_or(format!("delta {v}/{slot}/{k}: malformed"))?;
        }
        Ok(row)
    };
    need(c.deltas.keys().eq(o.deltas.keys()), "deltas: vertex sets differ".into())?;
    let mut deltas = BTreeMap::new();
    for (&v, cr) in &c.deltas {
        deltas.insert(v, open_row(v, 0, cr, &o.deltas[&v])?);
    }
    need(c.input_deltas.keys().eq(o.input_deltas.keys()), "input deltas: vertex sets differ".into())?;
    let mut input_deltas = BTreeMap::new();
    for (&v, pair) in &c.input_deltas {
        let os = &o.input_deltas[&v];
        let r0 = open_row(v, 0, &pair[0], &os[0])?;
        let r1 = open_row(v, 1, &pair[1], &os[1])?;
        let swapped = o.p1_swap.get(&dt.vertex(v).loc).copied().unwrap_or(false);
        input_deltas.insert(v, if swapped { [r1, r0] } else { [r0, r1] });
    }
    let mut keys = BTreeMap::new();
    for (&loc, ck) in &c.keys {
        let ok = o.keys.get(&loc).ok_or(format!("key {loc}: missing"))?;
        need(ok.opens(ck), format!("key {loc}"))?;
        keys.insert(loc, decode_key(loc, &ok.y).ok_or(format!("key {loc}: malformed"))?);
    }
    let mut output_roles = BTreeMap::new();
    for (&loc, cp) in &c.positions {
        let op = o.positions.get(&loc).ok_or(format!("positions {loc}: missing"))?;
        need(op.opens(cp), format!("positions {loc}"))?;
        output_roles.insert(loc, decode_positions(loc, &op.y).ok_or(format!("positions {loc}: malformed"))?);
    }
    let want_p1: Vec<Vertex> = circuit.pattern.bindings.iter().filter(|b| b.bit < circuit.n).map(|b| b.vertex).collect();
    need(o.p1_swap.keys().copied().eq(want_p1.iter().copied().collect::<std::collections::BTreeSet<_>>()), "swap flags: wrong locations".into())?;
    need(keys.keys().copied().eq(circuit.p2_outputs.iter().copied().collect::<std::collections::BTreeSet<_>>()), "keys: wrong locations".into())?;
    need(output_roles.len() == keys.len(), "positions: wrong locations".into())?;
    Ok(GraphBundle {
        circuit: circuit.clone(),
        dt: dt.clone(),
        colouring,
        qubits,
        order: order.to_vec(),
        deltas,
        input_deltas,
        p1_swap: o.p1_swap.clone(),
        keys,
        output_roles,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dtg::build_bundle;
    use crate::protocols::functions::FunctionId;
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;

    #[test]
    fn honest_bundle_opens_to_itself() {
        let c = FunctionId::And.circuit(1).unwrap();
        let mut rng = ChaCha20Rng::seed_from_u64(8);
        for _ in 0..5 {
            let b = build_bundle(&c, &mut rng);
            let (pc, po) = commit_bundle(&b, &mut rng);
            let back = open_bundle(&c, &b.dt, &b.order, &pc, &po).unwrap();
            assert_eq!(back, b);
            back.recheck().unwrap();
        }
    }

    #[test]
    fn roles_determine_colours() {
        let c = FunctionId::Xor.circuit(1).unwrap();
        let mut rng = ChaCha20Rng::seed_from_u64(9);
        let b = build_bundle(&c, &mut rng);
        let roles: Vec<Role> = b.qubits.iter().map(|q| q.role).collect();
        assert_eq!(colouring_from_roles(&b.dt, &roles), b.colouring);
    }

    #[test]
    fn tampered_opening_is_named() {
        let c = FunctionId::Xor.circuit(1).unwrap();
        let mut rng = ChaCha20Rng::seed_from_u64(10);
        let b = build_bundle(&c, &mut rng);
        let (pc, mut po) = commit_bundle(&b, &mut rng);
        let v = *po.deltas.keys().next().unwrap();
        let moved = b.deltas[&v][2] + Angle8::new(1);
        po.deltas.get_mut(&v).unwrap()[2].y = encode_delta(v, 0, 2, moved);
        assert_eq!(open_bundle(&c, &b.dt, &b.order, &pc, &po).unwrap_err(), format!("delta {v}/0/2"));
    }

    #[test]
    fn decoders_reject_foreign_encodings() {
        let q = QubitSpec { role: Role::Trap, theta: Some(Angle8::new(3)), r: Some(1), d: None };
        assert_eq!(decode_secret(4, &encode_secret(4, &q)), Some(q));
        assert_eq!(decode_secret(5, &encode_secret(4, &q)), None);
        assert_eq!(decode_delta(1, 0, 2, &encode_delta(1, 0, 3, Angle8::new(2))), None);
        assert_eq!(decode_key(0, &encode_delta(0, 0, 0, Angle8::ZERO)), None);
    }
}
