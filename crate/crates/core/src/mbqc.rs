//! Graphs, flows, byproduct bookkeeping, measurement angles and honest
//! pattern execution.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::qsim::{Angle8, QsimError, QuantumRegister, C64};

pub type Vertex = usize;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum MbqcError {
    #[error("invalid graph: {0}")]
    InvalidGraph(String),
    #[error("flow violation at vertex {vertex}: {condition:?}")]
    Flow { vertex: Vertex, condition: FlowCondition },
    #[error("no measurement angle for vertex {0}")]
    MissingAngle(Vertex),
    #[error("expected {expected} input bits, got {got}")]
    InputLength { expected: usize, got: usize },
    #[error("unsupported gate {0}")]
    UnsupportedGate(String),
    #[error(transparent)]
    Engine(#[from] QsimError),
}

/// Simple undirected graph on vertices `0..n` with input and output sets.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "RawGraph", into = "RawGraph")]
pub struct BaseGraph {
    n: usize,
    edges: Vec<(Vertex, Vertex)>,
    inputs: Vec<Vertex>,
    outputs: Vec<Vertex>,
    adj: Vec<Vec<Vertex>>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
struct RawGraph {
    vertices: usize,
    edges: Vec<(Vertex, Vertex)>,
    inputs: Vec<Vertex>,
    outputs: Vec<Vertex>,
}

impl TryFrom<RawGraph> for BaseGraph {
    type Error = MbqcError;
    fn try_from(r: RawGraph) -> Result<Self, MbqcError> {
        BaseGraph::new(r.vertices, r.edges, r.inputs, r.outputs)
    }
}

impl From<BaseGraph> for RawGraph {
    fn from(g: BaseGraph) -> RawGraph {
        RawGraph { vertices: g.n, edges: g.edges, inputs: g.inputs, outputs: g.outputs }
    }
}

impl BaseGraph {
    pub fn new(
        n: usize,
        edges: Vec<(Vertex, Vertex)>,
        inputs: Vec<Vertex>,
        outputs: Vec<Vertex>,
    ) -> Result<Self, MbqcError> {
        let mut adj = vec![Vec::new(); n];
        let mut seen = BTreeSet::new();
        let mut norm = Vec::with_capacity(edges.len());
        for (a, b) in edges {
            if a >= n || b >= n {
                return Err(MbqcError::InvalidGraph(format!("edge ({a},{b}) out of range")));
            }
            if a == b {
                return Err(MbqcError::InvalidGraph(format!("self-loop at {a}")));
            }
            let e = (a.min(b), a.max(b));
            if !seen.insert(e) {
                return Err(MbqcError::InvalidGraph(format!("duplicate edge ({a},{b})")));
            }
            adj[a].push(b);
            adj[b].push(a);
            norm.push(e);
        }
        for v in inputs.iter().chain(&outputs) {
            if *v >= n {
                return Err(MbqcError::InvalidGraph(format!("I/O vertex {v} out of range")));
            }
        }
        for list in adj.iter_mut() {
            list.sort_unstable();
        }
        Ok(BaseGraph { n, edges: norm, inputs, outputs, adj })
    }

    /// Path `0 - 1 - ... - (n-1)` with input 0 and output n-1.
    pub fn path(n: usize) -> Self {
        let edges = (1..n).map(|i| (i - 1, i)).collect();
        BaseGraph::new(n, edges, vec![0], vec![n - 1]).expect("path is simple")
    }

    pub fn num_vertices(&self) -> usize {
        self.n
    }

    pub fn vertices(&self) -> std::ops::Range<Vertex> {
        0..self.n
    }

    pub fn edges(&self) -> &[(Vertex, Vertex)] {
        &self.edges
    }

    pub fn inputs(&self) -> &[Vertex] {
        &self.inputs
    }

    pub fn outputs(&self) -> &[Vertex] {
        &self.outputs
    }

    pub fn neighbours(&self, v: Vertex) -> &[Vertex] {
        &self.adj[v]
    }

    pub fn has_edge(&self, a: Vertex, b: Vertex) -> bool {
        self.adj.get(a).is_some_and(|l| l.binary_search(&b).is_ok())
    }

    pub fn is_output(&self, v: Vertex) -> bool {
        self.outputs.contains(&v)
    }

    pub fn is_input(&self, v: Vertex) -> bool {
        self.inputs.contains(&v)
    }

    /// Maximum degree `c`.
    pub fn max_degree(&self) -> usize {
        self.adj.iter().map(Vec::len).max().unwrap_or(0)
    }

    pub fn with_io(&self, inputs: Vec<Vertex>, outputs: Vec<Vertex>) -> Result<Self, MbqcError> {
        BaseGraph::new(self.n, self.edges.clone(), inputs, outputs)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum FlowCondition {
    /// `f` is undefined on a measured vertex, or the order is not a permutation of them.
    Incomplete,
    /// `f(i)` is not a neighbour of `i`, or is an input.
    NotNeighbour,
    /// `i` does not strictly precede `f(i)`.
    SuccessorNotLater,
    /// Some `k` in `N(f(i))`, `k != i`, does not come strictly after `i`.
    NeighbourNotLater,
}

/// Flow function with a total order on the measured (non-output) vertices.
/// Outputs come after every measured vertex.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Flow {
    pub f: BTreeMap<Vertex, Vertex>,
    pub order: Vec<Vertex>,
}

impl Flow {
    /// `f(i) = i + 1` along a path measured left to right.
    pub fn path(n: usize) -> Self {
        Flow { f: (0..n - 1).map(|i| (i, i + 1)).collect(), order: (0..n - 1).collect() }
    }

    fn positions(&self, g: &BaseGraph) -> Vec<usize> {
        let mut pos = vec![usize::MAX; g.num_vertices()];
        for (k, &v) in self.order.iter().enumerate() {
            if v < pos.len() {
                pos[v] = k;
            }
        }
        pos
    }
}

/// Checks the flow conditions; reports the first violation in measurement order.
pub fn validate_flow(g: &BaseGraph, fl: &Flow) -> Result<(), MbqcError> {
    let measured: BTreeSet<Vertex> = g.vertices().filter(|v| !g.is_output(*v)).collect();
    let ordered: BTreeSet<Vertex> = fl.order.iter().copied().collect();
    if ordered != measured || fl.order.len() != measured.len() {
        let vertex = measured.symmetric_difference(&ordered).next().copied().unwrap_or(0);
        return Err(MbqcError::Flow { vertex, condition: FlowCondition::Incomplete });
    }
    let pos = fl.positions(g);
    for &i in &fl.order {
        let fail = |condition| Err(MbqcError::Flow { vertex: i, condition });
        let Some(&fi) = fl.f.get(&i) else {
            return fail(FlowCondition::Incomplete);
        };
        if fi >= g.num_vertices() || !g.has_edge(i, fi) || g.is_input(fi) {
            return fail(FlowCondition::NotNeighbour);
        }
        if pos[fi] <= pos[i] {
            return fail(FlowCondition::SuccessorNotLater);
        }
        if g.neighbours(fi).iter().any(|&k| k != i && pos[k] <= pos[i]) {
            return fail(FlowCondition::NeighbourNotLater);
        }
    }
    Ok(())
}

/// X and Z dependency sets of every vertex.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DependencySets {
    pub x: Vec<Vec<Vertex>>,
    pub z: Vec<Vec<Vertex>>,
}

impl DependencySets {
    pub fn new(g: &BaseGraph, fl: &Flow) -> Self {
        let mut x = vec![Vec::new(); g.num_vertices()];
        let mut z = vec![Vec::new(); g.num_vertices()];
        for (&j, &fj) in &fl.f {
            x[fj].push(j);
            for &i in g.neighbours(fj) {
                if i != j {
                    z[i].push(j);
                }
            }
        }
        DependencySets { x, z }
    }

    /// `(sX, sZ)` of `v` given the corrected outcomes `s` of measured vertices.
    pub fn signals(&self, v: Vertex, s: &BTreeMap<Vertex, u8>) -> (u8, u8) {
        let par = |deps: &[Vertex]| deps.iter().fold(0, |acc, j| acc ^ s.get(j).copied().unwrap_or(0));
        (par(&self.x[v]), par(&self.z[v]))
    }
}

/// `(-1)^sX * phi + sZ * pi`.
pub fn corrected_angle(phi: Angle8, sx: u8, sz: u8) -> Angle8 {
    let a = if sx & 1 == 1 { -phi } else { phi };
    a.plus_pi(sz)
}

/// `phi' + theta + r * pi`.
pub fn delta_angle(phi_c: Angle8, theta: Angle8, r: u8) -> Angle8 {
    (phi_c + theta).plus_pi(r)
}

/// Index of `(sX, sZ)` in a four-entry table.
pub fn signal_index(sx: u8, sz: u8) -> usize {
    (sx & 1) as usize + 2 * (sz & 1) as usize
}

/// Four angles indexed by `signal_index(sX, sZ)`.
pub type DeltaRow = [Angle8; 4];

pub fn delta_row(phi: Angle8, theta: Angle8, r: u8) -> DeltaRow {
    let mut row = [Angle8::ZERO; 4];
    for sz in 0..2 {
        for sx in 0..2 {
            row[signal_index(sx, sz)] = delta_angle(corrected_angle(phi, sx, sz), theta, r);
        }
    }
    row
}

/// Row of a trap or dummy, whose corrected angle is fixed to 0.
pub fn trap_row(theta: Angle8, r: u8) -> DeltaRow {
    [theta.plus_pi(r); 4]
}

/// Ties a classical input bit to the angle of one vertex.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct InputBinding {
    pub vertex: Vertex,
    pub bit: usize,
    /// Angle used when the bit is 0 and when it is 1.
    pub phi: [Angle8; 2],
}

/// Graph, flow and angles. Vertices listed in `bindings` take their angle
/// from the classical input; output vertices are read in the X basis.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct MeasurementPattern {
    pub graph: BaseGraph,
    pub flow: Flow,
    pub phi: BTreeMap<Vertex, Angle8>,
    #[serde(default)]
    pub bindings: Vec<InputBinding>,
    #[serde(default)]
    pub num_bits: usize,
}

impl MeasurementPattern {
    pub fn new(graph: BaseGraph, flow: Flow, phi: BTreeMap<Vertex, Angle8>) -> Result<Self, MbqcError> {
        let p = MeasurementPattern { graph, flow, phi, bindings: Vec::new(), num_bits: 0 };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<(), MbqcError> {
        validate_flow(&self.graph, &self.flow)?;
        for &v in &self.flow.order {
            if !self.phi.contains_key(&v) && !self.bindings.iter().any(|b| b.vertex == v) {
                return Err(MbqcError::MissingAngle(v));
            }
        }
        Ok(())
    }

    /// Measurement angles with the bindings resolved against `bits`.
    /// Output vertices get angle 0.
    pub fn angles(&self, bits: &[u8]) -> Result<BTreeMap<Vertex, Angle8>, MbqcError> {
        if bits.len() != self.num_bits {
            return Err(MbqcError::InputLength { expected: self.num_bits, got: bits.len() });
        }
        let mut out = self.phi.clone();
        for b in &self.bindings {
            out.insert(b.vertex, b.phi[(bits[b.bit] & 1) as usize]);
        }
        for &o in self.graph.outputs() {
            out.insert(o, Angle8::ZERO);
        }
        for v in self.graph.vertices() {
            if !out.contains_key(&v) {
                return Err(MbqcError::MissingAngle(v));
            }
        }
        Ok(out)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("pattern serialises")
    }

    pub fn from_json(s: &str) -> Result<Self, String> {
        let p: MeasurementPattern = serde_json::from_str(s).map_err(|e| e.to_string())?;
        p.validate().map_err(|e| e.to_string())?;
        Ok(p)
    }
}

/// Secret `(theta, r)` per vertex; vertices absent from the map use `(0, 0)`.
pub type Secrets = BTreeMap<Vertex, (Angle8, u8)>;

/// Delta rows for every vertex, outputs included (read out with `phi = 0`).
pub fn build_delta_table(
    angles: &BTreeMap<Vertex, Angle8>,
    secrets: &Secrets,
) -> BTreeMap<Vertex, DeltaRow> {
    angles
        .iter()
        .map(|(&v, &phi)| {
            let (theta, r) = secrets.get(&v).copied().unwrap_or((Angle8::ZERO, 0));
            (v, delta_row(phi, theta, r))
        })
        .collect()
}

/// Recomputes a table from `(phi, theta, r)` and returns the first mismatching vertex.
pub fn recheck_delta_table(
    table: &BTreeMap<Vertex, DeltaRow>,
    angles: &BTreeMap<Vertex, Angle8>,
    secrets: &Secrets,
) -> Option<Vertex> {
    let fresh = build_delta_table(angles, secrets);
    for (v, row) in table {
        if fresh.get(v) != Some(row) {
            return Some(*v);
        }
    }
    fresh.keys().find(|v| !table.contains_key(v)).copied()
}

/// Result of an honest run.
#[derive(Clone, Debug)]
pub struct PatternRun {
    /// Decoded output bits in the order of `graph.outputs()`.
    pub outputs: Vec<u8>,
    /// Corrected output state before read-out, qubit `k` = output `k`.
    pub output_state: Vec<C64>,
}

/// Allocates qubits on demand, entangling each with its live neighbours.
struct JitGraph<'a> {
    g: &'a BaseGraph,
    reg: QuantumRegister,
    allocated: Vec<bool>,
}

impl<'a> JitGraph<'a> {
    fn ensure(&mut self, v: Vertex) -> Result<(), MbqcError> {
        if self.allocated[v] {
            return Ok(());
        }
        self.reg.add_plus_theta(v, Angle8::ZERO, 0)?;
        self.allocated[v] = true;
        for &u in self.g.neighbours(v) {
            if self.allocated[u] {
                self.reg.apply_cz(u, v)?;
            }
        }
        Ok(())
    }
}

/// Runs a pattern with classical inputs; inputs start in `|+>`.
pub fn run_pattern_honest(p: &MeasurementPattern, bits: &[u8], seed: u64) -> Result<PatternRun, MbqcError> {
    run_pattern_with_state(p, bits, None, seed)
}

/// Runs a pattern; `input_state`, if given, is a joint state over
/// `graph.inputs()` followed by any extra reference labels (`>= n`), which are
/// carried along untouched and appended after the outputs in `output_state`.
pub fn run_pattern_with_state(
    p: &MeasurementPattern,
    bits: &[u8],
    input_state: Option<(&[C64], &[Vertex])>,
    seed: u64,
) -> Result<PatternRun, MbqcError> {
    p.validate()?;
    let angles = p.angles(bits)?;
    let g = &p.graph;
    let deps = DependencySets::new(g, &p.flow);
    let mut jit = JitGraph { g, reg: QuantumRegister::new(seed), allocated: vec![false; g.num_vertices()] };
    let mut refs: Vec<Vertex> = Vec::new();
    if let Some((state, extra)) = input_state {
        let mut labels = g.inputs().to_vec();
        labels.extend_from_slice(extra);
        jit.reg.add_joint(&labels, state)?;
        for &v in g.inputs() {
            jit.allocated[v] = true;
        }
        for &(a, b) in g.edges() {
            if g.is_input(a) && g.is_input(b) {
                jit.reg.apply_cz(a, b)?;
            }
        }
        refs = extra.to_vec();
    }
    let mut s: BTreeMap<Vertex, u8> = BTreeMap::new();
    for &v in &p.flow.order {
        jit.ensure(v)?;
        for &u in g.neighbours(v) {
            jit.ensure(u)?;
        }
        let (sx, sz) = deps.signals(v, &s);
        let b = jit.reg.measure_rotated(v, corrected_angle(angles[&v], sx, sz))?;
        s.insert(v, b);
    }
    for &o in g.outputs() {
        jit.ensure(o)?;
        let (sx, sz) = deps.signals(o, &s);
        if sx == 1 {
            jit.reg.apply_single(o, PAULI_X)?;
        }
        if sz == 1 {
            jit.reg.apply_z(o)?;
        }
    }
    let mut order = g.outputs().to_vec();
    order.extend_from_slice(&refs);
    let output_state = jit.reg.state_in_order(&order)?;
    let mut outputs = Vec::with_capacity(g.outputs().len());
    for &o in g.outputs() {
        outputs.push(jit.reg.measure_rotated(o, Angle8::ZERO)?);
    }
    Ok(PatternRun { outputs, output_state })
}

const PAULI_X: [[C64; 2]; 2] = [[C64::new(0.0, 0.0), C64::new(1.0, 0.0)], [C64::new(1.0, 0.0), C64::new(0.0, 0.0)]];

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Gate {
    I,
    H,
    T,
    Cnot,
}

impl std::str::FromStr for Gate {
    type Err = MbqcError;
    fn from_str(s: &str) -> Result<Self, MbqcError> {
        match s.to_ascii_lowercase().as_str() {
            "i" | "id" | "identity" => Ok(Gate::I),
            "h" => Ok(Gate::H),
            "t" => Ok(Gate::T),
            "cnot" | "cx" => Ok(Gate::Cnot),
            other => Err(MbqcError::UnsupportedGate(other.to_string())),
        }
    }
}

impl Gate {
    pub fn arity(self) -> usize {
        match self {
            Gate::Cnot => 2,
            _ => 1,
        }
    }
}

/// Pattern for one gate. A hop along a wire with angle `phi` applies
/// `H Rz(-phi)`, so single-qubit gates are short chains. CNOT couples the
/// control (input and output at once) to the middle of the target wire.
pub fn gate_pattern(gate: Gate) -> MeasurementPattern {
    let chain = |n: usize, phis: &[i64]| {
        let phi = phis.iter().enumerate().map(|(i, &a)| (i, Angle8::new(a))).collect();
        MeasurementPattern::new(BaseGraph::path(n), Flow::path(n), phi).expect("chain pattern is valid")
    };
    match gate {
        Gate::I => chain(3, &[0, 0]),
        Gate::H => chain(2, &[0]),
        Gate::T => chain(3, &[-1, 0]),
        Gate::Cnot => {
            // Vertex 0: control. Target wire 1 - 2 - 3, with 0 attached to 2.
            let g = BaseGraph::new(4, vec![(0, 2), (1, 2), (2, 3)], vec![0, 1], vec![0, 3]).expect("valid");
            let flow = Flow { f: [(1, 2), (2, 3)].into_iter().collect(), order: vec![1, 2] };
            let phi = [(1, Angle8::ZERO), (2, Angle8::ZERO)].into_iter().collect();
            MeasurementPattern::new(g, flow, phi).expect("cnot pattern is valid")
        }
    }
}

fn relabel(p: &MeasurementPattern, map: &[Vertex]) -> (Vec<(Vertex, Vertex)>, BTreeMap<Vertex, Vertex>, Vec<Vertex>, BTreeMap<Vertex, Angle8>) {
    let edges = p.graph.edges().iter().map(|&(a, b)| (map[a], map[b])).collect();
    let f = p.flow.f.iter().map(|(&a, &b)| (map[a], map[b])).collect();
    let order = p.flow.order.iter().map(|&v| map[v]).collect();
    let phi = p.phi.iter().map(|(&v, &a)| (map[v], a)).collect();
    (edges, f, order, phi)
}

/// Side-by-side union; inputs and outputs are concatenated.
pub fn tensor(a: &MeasurementPattern, b: &MeasurementPattern) -> MeasurementPattern {
    let na = a.graph.num_vertices();
    let ida: Vec<Vertex> = (0..na).collect();
    let idb: Vec<Vertex> = (0..b.graph.num_vertices()).map(|v| v + na).collect();
    let (mut edges, mut f, mut order, mut phi) = relabel(a, &ida);
    let (e2, f2, o2, p2) = relabel(b, &idb);
    edges.extend(e2);
    f.extend(f2);
    order.extend(o2);
    phi.extend(p2);
    let inputs = a.graph.inputs().iter().copied().chain(b.graph.inputs().iter().map(|&v| idb[v])).collect();
    let outputs = a.graph.outputs().iter().copied().chain(b.graph.outputs().iter().map(|&v| idb[v])).collect();
    let g = BaseGraph::new(na + b.graph.num_vertices(), edges, inputs, outputs).expect("disjoint union");
    MeasurementPattern::new(g, Flow { f, order }, phi).expect("union of flows")
}

/// Runs `first` then `second`, identifying the k-th output of `first`
/// with the k-th input of `second`.
pub fn compose(first: &MeasurementPattern, second: &MeasurementPattern) -> Result<MeasurementPattern, MbqcError> {
    let outs = first.graph.outputs();
    let ins = second.graph.inputs();
    if outs.len() != ins.len() {
        return Err(MbqcError::InvalidGraph(format!("{} outputs feed {} inputs", outs.len(), ins.len())));
    }
    let n1 = first.graph.num_vertices();
    let mut map = vec![usize::MAX; second.graph.num_vertices()];
    for (k, &i) in ins.iter().enumerate() {
        map[i] = outs[k];
    }
    let mut next = n1;
    for slot in map.iter_mut().filter(|m| **m == usize::MAX) {
        *slot = next;
        next += 1;
    }
    let id: Vec<Vertex> = (0..n1).collect();
    let (mut edges, mut f, mut order, mut phi) = relabel(first, &id);
    let (e2, f2, o2, p2) = relabel(second, &map);
    edges.extend(e2);
    f.extend(f2);
    // The shared vertices are measured by `second`, after all of `first`.
    order.extend(o2);
    phi.extend(p2);
    let outputs = second.graph.outputs().iter().map(|&v| map[v]).collect();
    let g = BaseGraph::new(next, edges, first.graph.inputs().to_vec(), outputs)?;
    MeasurementPattern::new(g, Flow { f, order }, phi)
}

/// Two rows of `cols` vertices, row-wise wires, vertical links at columns
/// congruent to 2 and 4 mod 8, measured column by column.
pub fn brickwork_fragment(cols: usize) -> (BaseGraph, Flow) {
    let id = |r: usize, c: usize| r * cols + c;
    let mut edges = Vec::new();
    for r in 0..2 {
        for c in 1..cols {
            edges.push((id(r, c - 1), id(r, c)));
        }
    }
    for c in 0..cols {
        if c % 8 == 2 || c % 8 == 4 {
            edges.push((id(0, c), id(1, c)));
        }
    }
    let g = BaseGraph::new(2 * cols, edges, vec![id(0, 0), id(1, 0)], vec![id(0, cols - 1), id(1, cols - 1)])
        .expect("brickwork is simple");
    let mut f = BTreeMap::new();
    let mut order = Vec::new();
    for c in 0..cols - 1 {
        for r in 0..2 {
            f.insert(id(r, c), id(r, c + 1));
            order.push(id(r, c));
        }
    }
    (g, Flow { f, order })
}
