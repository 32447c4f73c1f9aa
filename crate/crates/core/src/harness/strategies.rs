//! Deviating party behaviours. Every strategy keeps its state in plain
//! fields (including its RNG), so `snapshot` is a clone and restoring means
//! swapping the box back in.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

use crate::crypto::Commitment;
use crate::dtg::{GraphBundle, Role};
use crate::mbqc::trap_row;
use crate::protocols::{P1Strategy, P2Strategy, ShippedQubit};
use crate::qsim::Angle8;

/// First computation vertex, in measurement order, whose row is not input-bound.
fn first_free_computation(b: &GraphBundle) -> Option<usize> {
    b.order.iter().copied().find(|v| b.qubits[*v].role == Role::Computation && b.deltas.contains_key(v))
}

/// Shifts one delta entry of a computation vertex in each listed graph.
#[derive(Clone, Debug)]
pub struct CorruptDeltas {
    pub graphs: Vec<usize>,
}

impl P1Strategy for CorruptDeltas {
    fn name(&self) -> String {
        format!("corrupt-deltas{:?}", self.graphs)
    }
    fn tamper_bundles(&mut self, bundles: &mut [GraphBundle]) {
        for &g in &self.graphs {
            let b = &mut bundles[g];
            let v = first_free_computation(b).expect("a free computation vertex");
            let row = b.deltas.get_mut(&v).expect("row");
            row[0] = row[0] + Angle8::new(1);
        }
    }
    fn snapshot(&self) -> Box<dyn P1Strategy> {
        Box::new(self.clone())
    }
}

/// Ships one qubit of one graph in the state orthogonal to the honest one.
#[derive(Clone, Debug)]
pub struct OrthogonalState {
    pub graph: usize,
    pub vertex: usize,
}

impl P1Strategy for OrthogonalState {
    fn name(&self) -> String {
        format!("orthogonal-state[{}:{}]", self.graph, self.vertex)
    }
    fn tamper_shipment(&mut self, graph: usize, q: &mut [ShippedQubit]) {
        if graph != self.graph {
            return;
        }
        let v = self.vertex;
        q[v] = match q[v] {
            ShippedQubit::Plus(a) => ShippedQubit::Plus(a.plus_pi(1)),
            ShippedQubit::Basis(d) => ShippedQubit::Basis(d ^ 1),
            ShippedQubit::Custom([a, b]) => ShippedQubit::Custom([b.conj(), -a.conj()]),
        };
    }
    fn snapshot(&self) -> Box<dyn P1Strategy> {
        Box::new(self.clone())
    }
}

/// Uses a fixed input in place of the real one.
#[derive(Clone, Debug)]
pub struct ScriptedInput {
    pub x_hat: Vec<u8>,
}

impl P1Strategy for ScriptedInput {
    fn name(&self) -> String {
        format!("scripted-input{:?}", self.x_hat)
    }
    fn input(&mut self, _x: &[u8]) -> Vec<u8> {
        self.x_hat.clone()
    }
    fn snapshot(&self) -> Box<dyn P1Strategy> {
        Box::new(self.clone())
    }
}

/// Makes one trap at a P2-bound location depend on P2's bit: the bit-1 row
/// is shifted by pi, so the reported outcome is `r XOR y`.
#[derive(Clone, Debug)]
pub struct LeakyTrap {
    pub graph: usize,
    /// `(vertex, P2 bit index, r)` of the trap chosen at tamper time.
    pub target: Option<(usize, usize, u8)>,
}

impl LeakyTrap {
    pub fn new(graph: usize) -> Self {
        LeakyTrap { graph, target: None }
    }
}

impl P1Strategy for LeakyTrap {
    fn name(&self) -> String {
        format!("leaky-trap[{}]", self.graph)
    }
    fn tamper_bundles(&mut self, bundles: &mut [GraphBundle]) {
        let b = &mut bundles[self.graph];
        let c = b.circuit.clone();
        for bind in c.pattern.bindings.iter().filter(|x| x.bit >= c.n) {
            let trap = b.dt.members(bind.vertex).iter().copied().find(|&v| b.qubits[v].role == Role::Trap);
            if let Some(v) = trap {
                let q = b.qubits[v];
                b.input_deltas.insert(v, [trap_row(q.theta(), q.r()), trap_row(q.theta(), q.r() ^ 1)]);
                self.target = Some((v, bind.bit - c.n, q.r()));
                return;
            }
        }
    }
    fn snapshot(&self) -> Box<dyn P1Strategy> {
        Box::new(self.clone())
    }
}

/// Flips the reported outcome of one qubit, chosen uniformly at construction.
#[derive(Clone, Debug)]
pub struct FlipOne {
    pub index: usize,
    rng: ChaCha20Rng,
}

impl FlipOne {
    pub fn new(num_qubits: usize, seed: u64) -> Self {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        FlipOne { index: rng.gen_range(0..num_qubits), rng }
    }
}

impl P2Strategy for FlipOne {
    fn name(&self) -> String {
        format!("flip-one[{}]", self.index)
    }
    fn coin_share(&mut self, _c: &Commitment, s: u64) -> u64 {
        self.rng.gen_range(0..s)
    }
    fn report(&mut self, index: usize, _vertex: usize, b: u8) -> u8 {
        b ^ (index == self.index) as u8
    }
    fn snapshot(&self) -> Box<dyn P2Strategy> {
        Box::new(self.clone())
    }
}

/// P2 that substitutes its input and may pin its coin-toss share.
#[derive(Clone, Debug)]
pub struct SubstituteP2 {
    pub y_hat: Option<Vec<u8>>,
    pub fixed_share: Option<u64>,
    rng: ChaCha20Rng,
}

impl SubstituteP2 {
    pub fn new(y_hat: Option<Vec<u8>>, fixed_share: Option<u64>, seed: u64) -> Self {
        SubstituteP2 { y_hat, fixed_share, rng: ChaCha20Rng::seed_from_u64(seed) }
    }
}

impl P2Strategy for SubstituteP2 {
    fn name(&self) -> String {
        format!("substitute-p2[{:?},{:?}]", self.y_hat, self.fixed_share)
    }
    fn input(&mut self, y: &[u8]) -> Vec<u8> {
        self.y_hat.clone().unwrap_or_else(|| y.to_vec())
    }
    fn coin_share(&mut self, _c: &Commitment, s: u64) -> u64 {
        match self.fixed_share {
            Some(a) => a % s,
            None => self.rng.gen_range(0..s),
        }
    }
    fn snapshot(&self) -> Box<dyn P2Strategy> {
        Box::new(self.clone())
    }
}

/// Answers the coin toss with a share the caller sets before each toss.
#[derive(Clone, Debug, Default)]
pub struct ChosenShare {
    pub share: u64,
}

impl P2Strategy for ChosenShare {
    fn name(&self) -> String {
        "chosen-share".into()
    }
    fn coin_share(&mut self, _c: &Commitment, s: u64) -> u64 {
        self.share % s
    }
    fn snapshot(&self) -> Box<dyn P2Strategy> {
        Box::new(self.clone())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    proptest! {
        #[test]
        fn restored_strategy_replays_exactly(seed in any::<u64>(), calls in 1usize..20) {
            let mut a = FlipOne::new(50, seed);
            let snap = a.snapshot();
            let c = Commitment([0; 32]);
            let first: Vec<u64> = (0..calls).map(|_| a.coin_share(&c, 8)).collect();
            let mut b = snap;
            let second: Vec<u64> = (0..calls).map(|_| b.coin_share(&c, 8)).collect();
            prop_assert_eq!(first, second);
            let reports: Vec<u8> = (0..50).map(|i| b.report(i, i, 0)).collect();
            prop_assert_eq!(reports.iter().filter(|&&r| r == 1).count(), 1);
        }
    }
}
