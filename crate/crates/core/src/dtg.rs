//! Dotted-triple-graph construction, trap-colouring, dummy placement, break
//! semantics, and bundle construction (honest and fake).

use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::mbqc::{delta_row, trap_row, BaseGraph, DeltaRow, DependencySets, MeasurementPattern, Vertex};
use crate::qsim::Angle8;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum DtgError {
    #[error("colouring violates condition {condition} at vertex {vertex}")]
    Colouring { vertex: usize, condition: u8 },
    #[error("expected {expected} output bits, got {got}")]
    Length { expected: usize, got: usize },
    #[error("invalid circuit: {0}")]
    Circuit(String),
}

/// `D(G)`: every edge `k = (u, w)` of `G` becomes vertex `N + k` adjacent to
/// `u` and `w`. Inputs and outputs are kept.
pub fn dot_graph(g: &BaseGraph) -> BaseGraph {
    let n = g.num_vertices();
    let mut edges = Vec::with_capacity(2 * g.edges().len());
    for (k, &(u, w)) in g.edges().iter().enumerate() {
        edges.push((u, n + k));
        edges.push((n + k, w));
    }
    BaseGraph::new(n + g.edges().len(), edges, g.inputs().to_vec(), g.outputs().to_vec())
        .expect("subdivision of a simple graph is simple")
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum VertexKind {
    Primary,
    Added,
}

/// One vertex of `DT(G)`. `loc` is the vertex of `D(G)` it stands for:
/// a base vertex for primaries, `N + k` for the added vertices of edge `k`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DtVertex {
    pub kind: VertexKind,
    pub loc: Vertex,
    /// 0..3 for primaries; `3a + b` for added vertices joining slot `a` of the
    /// lower endpoint to slot `b` of the upper one.
    pub slot: u8,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DTGraph {
    base: BaseGraph,
    dotted: BaseGraph,
    vertices: Vec<DtVertex>,
    edges: Vec<(usize, usize)>,
    adj: Vec<Vec<usize>>,
    members: Vec<Vec<usize>>,
}

impl DTGraph {
    pub fn base(&self) -> &BaseGraph {
        &self.base
    }

    pub fn dotted(&self) -> &BaseGraph {
        &self.dotted
    }

    pub fn len(&self) -> usize {
        self.vertices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vertices.is_empty()
    }

    pub fn vertex(&self, v: usize) -> DtVertex {
        self.vertices[v]
    }

    pub fn vertices(&self) -> &[DtVertex] {
        &self.vertices
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn neighbours(&self, v: usize) -> &[usize] {
        &self.adj[v]
    }

    /// DT vertices standing for a location of `D(G)`.
    pub fn members(&self, loc: Vertex) -> &[usize] {
        &self.members[loc]
    }

    pub fn primary(&self, base_vertex: Vertex, slot: u8) -> usize {
        3 * base_vertex + slot as usize
    }

    /// The `3N(3c+1)` size bound.
    pub fn size_bound(&self) -> usize {
        let n = self.base.num_vertices();
        3 * n * (3 * self.base.max_degree() + 1)
    }
}

/// Triplicates every base vertex and joins each pair of primaries across a
/// base edge through its own added vertex (nine per edge).
pub fn dotted_triple(g: &BaseGraph) -> DTGraph {
    let n = g.num_vertices();
    let dotted = dot_graph(g);
    let mut vertices = Vec::with_capacity(3 * n + 9 * g.edges().len());
    let mut members = vec![Vec::new(); dotted.num_vertices()];
    for v in 0..n {
        for slot in 0..3 {
            members[v].push(vertices.len());
            vertices.push(DtVertex { kind: VertexKind::Primary, loc: v, slot });
        }
    }
    let mut edges = Vec::with_capacity(18 * g.edges().len());
    for (k, &(u, w)) in g.edges().iter().enumerate() {
        for a in 0..3u8 {
            for b in 0..3u8 {
                let id = vertices.len();
                members[n + k].push(id);
                vertices.push(DtVertex { kind: VertexKind::Added, loc: n + k, slot: 3 * a + b });
                edges.push((3 * u + a as usize, id));
                edges.push((3 * w + b as usize, id));
            }
        }
    }
    let mut adj = vec![Vec::new(); vertices.len()];
    for &(a, b) in &edges {
        adj[a].push(b);
        adj[b].push(a);
    }
    DTGraph { base: g.clone(), dotted, vertices, edges, adj, members }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Colour {
    White,
    Black,
    Green,
    Red,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Role {
    Computation,
    Trap,
    Dummy,
}

/// Colour of every DT vertex.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrapColouring {
    pub colours: Vec<Colour>,
}

impl TrapColouring {
    /// Colours of the three primaries of a base vertex, by slot.
    pub fn arrangement(&self, dt: &DTGraph, base_vertex: Vertex) -> [Colour; 3] {
        std::array::from_fn(|s| self.colours[dt.primary(base_vertex, s as u8)])
    }

    pub fn role(&self, dt: &DTGraph, v: usize) -> Role {
        match (self.colours[v], dt.vertex(v).kind) {
            (Colour::Green, _) => Role::Computation,
            (Colour::White, VertexKind::Primary) | (Colour::Black, VertexKind::Added) => Role::Trap,
            _ => Role::Dummy,
        }
    }

    /// The computation vertex standing for a location.
    pub fn green_at(&self, dt: &DTGraph, loc: Vertex) -> usize {
        *dt.members(loc).iter().find(|&&v| self.colours[v] == Colour::Green).expect("valid colouring has a green vertex per location")
    }
}

/// Colours each `P_v` with a uniformly random arrangement of
/// {green, white, black}; added vertices follow their endpoints.
pub fn sample_trap_colouring<R: Rng + ?Sized>(dt: &DTGraph, rng: &mut R) -> TrapColouring {
    let mut colours = vec![Colour::Red; dt.len()];
    for v in dt.base().vertices() {
        let mut perm = [Colour::Green, Colour::White, Colour::Black];
        perm.shuffle(rng);
        for (s, c) in perm.into_iter().enumerate() {
            colours[dt.primary(v, s as u8)] = c;
        }
    }
    colour_added(dt, &mut colours);
    TrapColouring { colours }
}

fn colour_added(dt: &DTGraph, colours: &mut [Colour]) {
    for v in 0..dt.len() {
        if dt.vertex(v).kind == VertexKind::Added {
            let ends = dt.neighbours(v);
            let (a, b) = (colours[ends[0]], colours[ends[1]]);
            colours[v] = if a == b { a } else { Colour::Red };
        }
    }
}

/// Checks the four trap-colouring conditions, numbered as follows:
/// 1 primaries are never red; 2 each `P_v` has one white, one black and one green;
/// 3 an added vertex between equal colours has that colour;
/// 4 an added vertex between different colours is red.
pub fn validate_colouring(dt: &DTGraph, c: &TrapColouring) -> Result<(), DtgError> {
    if c.colours.len() != dt.len() {
        return Err(DtgError::Colouring { vertex: c.colours.len().min(dt.len()), condition: 0 });
    }
    for v in dt.base().vertices() {
        let arr = c.arrangement(dt, v);
        for s in 0..3u8 {
            if arr[s as usize] == Colour::Red {
                return Err(DtgError::Colouring { vertex: dt.primary(v, s), condition: 1 });
            }
        }
        let set: BTreeSet<Colour> = arr.iter().copied().collect();
        if set.len() != 3 {
            return Err(DtgError::Colouring { vertex: dt.primary(v, 0), condition: 2 });
        }
    }
    for v in 0..dt.len() {
        if dt.vertex(v).kind == VertexKind::Added {
            let ends = dt.neighbours(v);
            let (a, b) = (c.colours[ends[0]], c.colours[ends[1]]);
            if a == b && c.colours[v] != a {
                return Err(DtgError::Colouring { vertex: v, condition: 3 });
            }
            if a != b && c.colours[v] != Colour::Red {
                return Err(DtgError::Colouring { vertex: v, condition: 4 });
            }
        }
    }
    Ok(())
}

/// Red vertices, white added vertices and black primaries.
pub fn dummy_set(dt: &DTGraph, c: &TrapColouring) -> BTreeSet<usize> {
    (0..dt.len())
        .filter(|&v| match (c.colours[v], dt.vertex(v).kind) {
            (Colour::Red, _) => true,
            (Colour::White, VertexKind::Added) => true,
            (Colour::Black, VertexKind::Primary) => true,
            _ => false,
        })
        .collect()
}

/// Census of `DT(G)` after removing the dummies.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BrokenGraph {
    pub green: Vec<usize>,
    /// The green vertices map one-to-one onto `D(G)` with edges preserved.
    pub green_is_dotted: bool,
    pub white_isolated: usize,
    pub black_isolated: usize,
    /// Vertices left over in any other shape (empty for valid colourings).
    pub other: Vec<usize>,
}

impl BrokenGraph {
    pub fn traps(&self) -> usize {
        self.white_isolated + self.black_isolated
    }
}

pub fn break_graph(dt: &DTGraph, c: &TrapColouring, dummies: &BTreeSet<usize>) -> Result<BrokenGraph, DtgError> {
    validate_colouring(dt, c)?;
    let keep = |v: usize| !dummies.contains(&v);
    let live_deg = |v: usize| dt.neighbours(v).iter().filter(|&&u| keep(u)).count();
    let mut out = BrokenGraph { green: Vec::new(), green_is_dotted: false, white_isolated: 0, black_isolated: 0, other: Vec::new() };
    for v in (0..dt.len()).filter(|&v| keep(v)) {
        match c.colours[v] {
            Colour::Green => out.green.push(v),
            Colour::White if live_deg(v) == 0 => out.white_isolated += 1,
            Colour::Black if live_deg(v) == 0 => out.black_isolated += 1,
            _ => out.other.push(v),
        }
    }
    let locs: BTreeSet<Vertex> = out.green.iter().map(|&v| dt.vertex(v).loc).collect();
    let mut green_edges = BTreeSet::new();
    let mut closed = true;
    for &v in &out.green {
        for &u in dt.neighbours(v) {
            if keep(u) {
                if c.colours[u] != Colour::Green {
                    closed = false;
                }
                let (a, b) = (dt.vertex(v).loc, dt.vertex(u).loc);
                green_edges.insert((a.min(b), a.max(b)));
            }
        }
    }
    let want: BTreeSet<(Vertex, Vertex)> = dt.dotted().edges().iter().copied().collect();
    out.green_is_dotted = closed
        && out.green.len() == dt.dotted().num_vertices()
        && locs.len() == out.green.len()
        && green_edges == want;
    Ok(out)
}

/// Fraction of trap qubits in `DT(G)`, from the break census.
pub fn trap_fraction(dt: &DTGraph, c: &TrapColouring) -> f64 {
    let broken = break_graph(dt, c, &dummy_set(dt, c)).expect("valid colouring");
    broken.traps() as f64 / dt.len() as f64
}

/// A two-party function as a pattern on `D(G)`. Bits `0..n` of the pattern
/// input are P1's `x`, bits `n..2n` are P2's `y`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Circuit {
    pub name: String,
    pub base: BaseGraph,
    pub pattern: MeasurementPattern,
    pub n: usize,
    pub p1_outputs: Vec<Vertex>,
    pub p2_outputs: Vec<Vertex>,
}

impl Circuit {
    pub fn validate(&self) -> Result<(), DtgError> {
        let err = |m: String| Err(DtgError::Circuit(m));
        if self.pattern.graph != dot_graph(&self.base) {
            return err("pattern graph is not D(G)".into());
        }
        self.pattern.validate().map_err(|e| DtgError::Circuit(e.to_string()))?;
        if self.pattern.num_bits != 2 * self.n {
            return err(format!("pattern takes {} bits, expected {}", self.pattern.num_bits, 2 * self.n));
        }
        let outs: BTreeSet<Vertex> = self.p1_outputs.iter().chain(&self.p2_outputs).copied().collect();
        let g_outs: BTreeSet<Vertex> = self.base.outputs().iter().copied().collect();
        if outs != g_outs || outs.len() != self.p1_outputs.len() + self.p2_outputs.len() {
            return err("P1 and P2 outputs must partition the outputs of G".into());
        }
        let mut bound = BTreeSet::new();
        for b in &self.pattern.bindings {
            if !bound.insert(b.vertex) {
                return err(format!("location {} is bound twice", b.vertex));
            }
        }
        Ok(())
    }

    /// Owner of the input bit bound at a location: `Some(1)` or `Some(2)`.
    pub fn input_owner(&self, loc: Vertex) -> Option<u8> {
        self.pattern.bindings.iter().find(|b| b.vertex == loc).map(|b| if b.bit < self.n { 1 } else { 2 })
    }

    pub fn evaluate(&self, x: &[u8], y: &[u8], seed: u64) -> Result<(Vec<u8>, Vec<u8>), DtgError> {
        let bits: Vec<u8> = x.iter().chain(y).copied().collect();
        let run = crate::mbqc::run_pattern_honest(&self.pattern, &bits, seed).map_err(|e| DtgError::Circuit(e.to_string()))?;
        let pick = |locs: &[Vertex]| {
            locs.iter()
                .map(|l| run.outputs[self.base.outputs().iter().position(|o| o == l).expect("output")])
                .collect()
        };
        Ok((pick(&self.p1_outputs), pick(&self.p2_outputs)))
    }
}

/// Secret preparation data of one DT vertex.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct QubitSpec {
    pub role: Role,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub theta: Option<Angle8>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub r: Option<u8>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub d: Option<u8>,
}

impl QubitSpec {
    fn plus<R: Rng + ?Sized>(role: Role, rng: &mut R) -> Self {
        QubitSpec { role, theta: Some(Angle8::random(rng)), r: Some(rng.gen_range(0..2)), d: None }
    }

    fn dummy<R: Rng + ?Sized>(rng: &mut R) -> Self {
        QubitSpec { role: Role::Dummy, theta: None, r: None, d: Some(rng.gen_range(0..2)) }
    }

    pub fn theta(&self) -> Angle8 {
        self.theta.unwrap_or_default()
    }

    pub fn r(&self) -> u8 {
        self.r.unwrap_or(0)
    }
}

/// One cut-and-choose copy: a fully specified `DT(G)` instance.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GraphBundle {
    pub circuit: Arc<Circuit>,
    pub dt: Arc<DTGraph>,
    pub colouring: TrapColouring,
    pub qubits: Vec<QubitSpec>,
    /// Measurement order of all DT vertices.
    pub order: Vec<usize>,
    /// Rows indexed by `(sX, sZ)` for vertices at unbound locations.
    pub deltas: BTreeMap<usize, DeltaRow>,
    /// Both versions of the row, by input bit, for vertices at bound locations.
    pub input_deltas: BTreeMap<usize, [DeltaRow; 2]>,
    /// Per P1-bound location: whether the committed pair is stored as (1, 0).
    pub p1_swap: BTreeMap<Vertex, bool>,
    /// One-time-pad key per P2 output location.
    pub keys: BTreeMap<Vertex, u8>,
    /// Roles of the primaries at each P2 output location, by slot.
    pub output_roles: BTreeMap<Vertex, [Role; 3]>,
}

/// Public part of a bundle: what both parties see in the clear.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PublicBundle {
    pub circuit: String,
    pub base: BaseGraph,
    pub dt_vertices: Vec<DtVertex>,
    pub order: Vec<usize>,
}

/// Secret part of a bundle.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SecretBundle {
    pub colouring: TrapColouring,
    pub qubits: Vec<QubitSpec>,
    pub deltas: BTreeMap<usize, DeltaRow>,
    pub input_deltas: BTreeMap<usize, [DeltaRow; 2]>,
    pub p1_swap: BTreeMap<Vertex, bool>,
    pub keys: BTreeMap<Vertex, u8>,
    pub output_roles: BTreeMap<Vertex, [Role; 3]>,
}

impl GraphBundle {
    pub fn public(&self) -> PublicBundle {
        PublicBundle {
            circuit: self.circuit.name.clone(),
            base: self.circuit.base.clone(),
            dt_vertices: self.dt.vertices().to_vec(),
            order: self.order.clone(),
        }
    }

    pub fn secret(&self) -> SecretBundle {
        SecretBundle {
            colouring: self.colouring.clone(),
            qubits: self.qubits.clone(),
            deltas: self.deltas.clone(),
            input_deltas: self.input_deltas.clone(),
            p1_swap: self.p1_swap.clone(),
            keys: self.keys.clone(),
            output_roles: self.output_roles.clone(),
        }
    }

    pub fn public_json(&self) -> String {
        serde_json::to_string(&self.public()).expect("serialisable")
    }

    pub fn secret_json(&self) -> String {
        serde_json::to_string(&self.secret()).expect("serialisable")
    }

    /// Computation vertex at a location.
    pub fn green_at(&self, loc: Vertex) -> usize {
        self.colouring.green_at(&self.dt, loc)
    }

    /// Z flip applied at preparation: parity of the dummy neighbours' values.
    pub fn z_flip(&self, v: usize) -> u8 {
        self.dt
            .neighbours(v)
            .iter()
            .filter(|&&u| self.qubits[u].role == Role::Dummy)
            .fold(0, |acc, &u| acc ^ self.qubits[u].d.unwrap_or(0))
    }

    /// Row actually used at `v` for the given input bits.
    pub fn row(&self, v: usize, bits: &[u8]) -> DeltaRow {
        match self.input_deltas.get(&v) {
            Some(pair) => {
                let loc = self.dt.vertex(v).loc;
                let b = self.circuit.pattern.bindings.iter().find(|b| b.vertex == loc).expect("bound location");
                pair[(bits[b.bit] & 1) as usize]
            }
            None => self.deltas[&v],
        }
    }

    /// `(sX, sZ)` of a DT vertex given corrected outcomes of computation vertices.
    pub fn signals(&self, deps: &DependencySets, v: usize, s: &BTreeMap<usize, u8>) -> (u8, u8) {
        if self.qubits[v].role != Role::Computation {
            return (0, 0);
        }
        let loc = self.dt.vertex(v).loc;
        let par = |locs: &[Vertex]| locs.iter().fold(0, |acc, &l| acc ^ s.get(&self.green_at(l)).copied().unwrap_or(0));
        (par(&deps.x[loc]), par(&deps.z[loc]))
    }

    /// Recomputes every committed field from the secrets; returns the first
    /// inconsistency found. This is the opened-graph check list.
    pub fn recheck(&self) -> Result<(), String> {
        validate_colouring(&self.dt, &self.colouring).map_err(|e| e.to_string())?;
        let fresh = rows_for(&self.circuit, &self.dt, &self.colouring, &self.qubits, |v| self.deltas.get(&v).map(|r| r[0]).or_else(|| self.input_deltas.get(&v).map(|p| p[0][0])));
        for (v, spec) in self.qubits.iter().enumerate() {
            let role = self.colouring.role(&self.dt, v);
            if spec.role != role {
                return Err(format!("vertex {v}: role {:?} does not match colouring ({role:?})", spec.role));
            }
            let ok_fields = match role {
                Role::Dummy => spec.d.is_some_and(|d| d < 2) && spec.theta.is_none() && spec.r.is_none(),
                _ => spec.theta.is_some() && spec.r.is_some_and(|r| r < 2) && spec.d.is_none(),
            };
            if !ok_fields {
                return Err(format!("vertex {v}: malformed secret fields"));
            }
        }
        for (v, want) in &fresh.deltas {
            if self.deltas.get(v) != Some(want) {
                return Err(format!("vertex {v}: delta row mismatch"));
            }
        }
        for (v, want) in &fresh.input_deltas {
            if self.input_deltas.get(v) != Some(want) {
                return Err(format!("vertex {v}: input delta mismatch"));
            }
        }
        if self.deltas.len() != fresh.deltas.len() || self.input_deltas.len() != fresh.input_deltas.len() {
            return Err("delta table has extra rows".into());
        }
        for (&loc, &key) in &self.keys {
            let g = self.green_at(loc);
            if key != self.qubits[g].r() {
                return Err(format!("location {loc}: key mismatch"));
            }
        }
        for (&loc, roles) in &self.output_roles {
            for (s, &m) in self.dt.members(loc).iter().enumerate() {
                if roles[s] != self.qubits[m].role {
                    return Err(format!("location {loc}: output position record mismatch"));
                }
            }
        }
        Ok(())
    }
}

struct Rows {
    deltas: BTreeMap<usize, DeltaRow>,
    input_deltas: BTreeMap<usize, [DeltaRow; 2]>,
}

/// Honest rows for given secrets. Dummy rows are constant; `decoy` supplies
/// their constant (the existing value when rechecking).
fn rows_for(
    c: &Circuit,
    dt: &DTGraph,
    colouring: &TrapColouring,
    qubits: &[QubitSpec],
    decoy: impl Fn(usize) -> Option<Angle8>,
) -> Rows {
    let mut rows = Rows { deltas: BTreeMap::new(), input_deltas: BTreeMap::new() };
    let phi_of = |loc: Vertex, bit: u8| -> Angle8 {
        if let Some(b) = c.pattern.bindings.iter().find(|b| b.vertex == loc) {
            return b.phi[bit as usize];
        }
        c.pattern.phi.get(&loc).copied().unwrap_or(Angle8::ZERO)
    };
    for (v, spec) in qubits.iter().enumerate() {
        let loc = dt.vertex(v).loc;
        let row = |bit: u8| match colouring.role(dt, v) {
            Role::Computation => delta_row(phi_of(loc, bit), spec.theta(), spec.r()),
            Role::Trap => trap_row(spec.theta(), spec.r()),
            Role::Dummy => [decoy(v).unwrap_or_default(); 4],
        };
        if c.input_owner(loc).is_some() {
            rows.input_deltas.insert(v, [row(0), row(1)]);
        } else {
            rows.deltas.insert(v, row(0));
        }
    }
    rows
}

/// Base-location order (flow order, then outputs) with each location's
/// members shuffled.
fn dt_order<R: Rng + ?Sized>(c: &Circuit, dt: &DTGraph, rng: &mut R) -> Vec<usize> {
    let mut order = Vec::with_capacity(dt.len());
    for &loc in c.pattern.flow.order.iter().chain(c.pattern.graph.outputs()) {
        let mut m = dt.members(loc).to_vec();
        m.shuffle(rng);
        order.extend(m);
    }
    order
}

/// An honest bundle with fresh randomness.
pub fn build_bundle<R: Rng + ?Sized>(c: &Arc<Circuit>, rng: &mut R) -> GraphBundle {
    let dt = Arc::new(dotted_triple(&c.base));
    build_bundle_on(c, &dt, rng)
}

/// As [`build_bundle`], reusing an existing `DT(G)`.
pub fn build_bundle_on<R: Rng + ?Sized>(c: &Arc<Circuit>, dt: &Arc<DTGraph>, rng: &mut R) -> GraphBundle {
    let colouring = sample_trap_colouring(dt, rng);
    let qubits: Vec<QubitSpec> = (0..dt.len())
        .map(|v| match colouring.role(dt, v) {
            Role::Dummy => QubitSpec::dummy(rng),
            role => QubitSpec::plus(role, rng),
        })
        .collect();
    let decoys: Vec<Angle8> = (0..dt.len()).map(|_| Angle8::random(rng)).collect();
    let rows = rows_for(c, dt, &colouring, &qubits, |v| Some(decoys[v]));
    let order = dt_order(c, dt, rng);
    let mut p1_swap = BTreeMap::new();
    for b in &c.pattern.bindings {
        if b.bit < c.n {
            p1_swap.insert(b.vertex, rng.gen_bool(0.5));
        }
    }
    let mut keys = BTreeMap::new();
    let mut output_roles = BTreeMap::new();
    for &loc in &c.p2_outputs {
        let g = colouring.green_at(dt, loc);
        keys.insert(loc, qubits[g].r());
        let m = dt.members(loc);
        output_roles.insert(loc, [qubits[m[0]].role, qubits[m[1]].role, qubits[m[2]].role]);
    }
    GraphBundle {
        circuit: c.clone(),
        dt: dt.clone(),
        colouring,
        qubits,
        order,
        deltas: rows.deltas,
        input_deltas: rows.input_deltas,
        p1_swap,
        keys,
        output_roles,
    }
}

/// A bundle that decrypts to `f2_value` at P2's outputs whatever the inputs.
/// P2's output qubits are cut off by turning their green neighbours into
/// dummies and measured as traps with a chosen outcome `b_q`.
pub fn build_fake_bundle<R: Rng + ?Sized>(f2_value: &[u8], c: &Arc<Circuit>, rng: &mut R) -> Result<GraphBundle, DtgError> {
    if f2_value.len() != c.p2_outputs.len() {
        return Err(DtgError::Length { expected: c.p2_outputs.len(), got: f2_value.len() });
    }
    let mut b = build_bundle(c, rng);
    for (q, &loc) in c.p2_outputs.iter().enumerate() {
        let g = b.green_at(loc);
        let theta = Angle8::random(rng);
        let bq: u8 = rng.gen_range(0..2);
        b.qubits[g].theta = Some(theta);
        b.qubits[g].r = Some(bq);
        let row = [theta.plus_pi(bq); 4];
        if let Some(e) = b.input_deltas.get_mut(&g) {
            *e = [row, row];
        } else {
            b.deltas.insert(g, row);
        }
        b.keys.insert(loc, (f2_value[q] & 1) ^ bq);
        for &u in b.dt.neighbours(g).to_vec().iter() {
            if b.colouring.colours[u] == Colour::Green {
                b.qubits[u] = QubitSpec::dummy(rng);
                let decoy = [Angle8::random(rng); 4];
                if let Some(e) = b.input_deltas.get_mut(&u) {
                    *e = [decoy, decoy];
                } else {
                    b.deltas.insert(u, decoy);
                }
            }
        }
    }
    Ok(b)
}
