//! Shipped qubits and the receiver-side simulation of `DT(G)`.

use rand::Rng;
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use crate::dtg::{DTGraph, GraphBundle, Role};
use crate::qsim::{overlap_sq, plus_state, Angle8, QsimError, QuantumRegister, C64};

/// Description of one qubit handed from P1 to P2.
///
/// Basis states never enter the register: entangling `|d>` with a neighbour
/// is the same as applying `Z^d` to that neighbour.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum ShippedQubit {
    /// `|+_a>`.
    Plus(Angle8),
    /// `|d>`.
    Basis(u8),
    /// Arbitrary normalised amplitudes.
    Custom([C64; 2]),
}

impl ShippedQubit {
    pub fn amplitudes(&self) -> [C64; 2] {
        match *self {
            ShippedQubit::Plus(a) => plus_state(a, 0),
            ShippedQubit::Basis(d) => basis(d),
            ShippedQubit::Custom(s) => s,
        }
    }
}

fn basis(d: u8) -> [C64; 2] {
    let (one, zero) = (C64::new(1.0, 0.0), C64::new(0.0, 0.0));
    if d & 1 == 0 {
        [one, zero]
    } else {
        [zero, one]
    }
}

/// The qubits an honest P1 ships for a bundle.
pub fn expected_shipment(b: &GraphBundle) -> Vec<ShippedQubit> {
    (0..b.dt.len())
        .map(|v| {
            let q = &b.qubits[v];
            match q.role {
                Role::Dummy => ShippedQubit::Basis(q.d.unwrap_or(0)),
                _ => ShippedQubit::Plus(q.theta().plus_pi(b.z_flip(v))),
            }
        })
        .collect()
}

/// Projective check of one received qubit against the state it should be in.
pub fn check_shipped_qubit(received: &ShippedQubit, expected: &ShippedQubit, rng: &mut ChaCha20Rng) -> bool {
    let p = overlap_sq(&expected.amplitudes(), &received.amplitudes());
    rng.gen::<f64>() < p
}

/// Receiver's view of a shipped graph: entangles with CZ on the `DT(G)` edges
/// and measures, allocating each qubit only when it or a neighbour is
/// about to be measured.
pub struct Evaluator<'a> {
    dt: &'a DTGraph,
    shipped: &'a [ShippedQubit],
    reg: QuantumRegister,
    allocated: Vec<bool>,
    measured: Vec<bool>,
}

impl<'a> Evaluator<'a> {
    pub fn new(dt: &'a DTGraph, shipped: &'a [ShippedQubit], rng: ChaCha20Rng) -> Self {
        Evaluator {
            dt,
            shipped,
            reg: QuantumRegister::with_rng(rng),
            allocated: vec![false; dt.len()],
            measured: vec![false; dt.len()],
        }
    }

    fn is_basis(&self, v: usize) -> Option<u8> {
        match self.shipped[v] {
            ShippedQubit::Basis(d) => Some(d & 1),
            _ => None,
        }
    }

    fn ensure(&mut self, v: usize) -> Result<(), QsimError> {
        if self.allocated[v] || self.measured[v] || self.is_basis(v).is_some() {
            return Ok(());
        }
        self.reg.add_qubit(v, self.shipped[v].amplitudes())?;
        self.allocated[v] = true;
        for &u in self.dt.neighbours(v) {
            match self.is_basis(u) {
                Some(1) => self.reg.apply_z(v)?,
                Some(_) => {}
                None if self.allocated[u] && !self.measured[u] => self.reg.apply_cz(u, v)?,
                None => {}
            }
        }
        Ok(())
    }

    /// Measures `v` in `{|+_delta>, |-_delta>}`.
    pub fn measure(&mut self, v: usize, delta: Angle8) -> Result<u8, QsimError> {
        if self.measured[v] {
            return Err(QsimError::MissingLabel(v));
        }
        let b = if let Some(d) = self.is_basis(v) {
            self.reg.add_qubit(v, basis(d))?;
            self.reg.measure_rotated(v, delta)?
        } else {
            self.ensure(v)?;
            for &u in self.dt.neighbours(v) {
                self.ensure(u)?;
            }
            self.reg.measure_rotated(v, delta)?
        };
        self.measured[v] = true;
        Ok(b)
    }

    pub fn live_qubits(&self) -> usize {
        self.reg.num_live()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dtg::build_bundle;
    use crate::protocols::functions::FunctionId;
    use rand::SeedableRng;

    #[test]
    fn honest_shipment_passes_checks() {
        let c = FunctionId::And.circuit(1).unwrap();
        let mut rng = ChaCha20Rng::seed_from_u64(3);
        let b = build_bundle(&c, &mut rng);
        let ship = expected_shipment(&b);
        assert!(ship.iter().all(|q| check_shipped_qubit(q, q, &mut rng)));
    }

    #[test]
    fn orthogonal_state_always_fails() {
        let mut rng = ChaCha20Rng::seed_from_u64(4);
        let a = ShippedQubit::Plus(Angle8::new(3));
        let b = ShippedQubit::Plus(Angle8::new(7));
        assert!((0..100).all(|_| !check_shipped_qubit(&b, &a, &mut rng)));
        assert!((0..100).all(|_| !check_shipped_qubit(&ShippedQubit::Basis(1), &ShippedQubit::Basis(0), &mut rng)));
    }

    #[test]
    fn isolated_trap_returns_r() {
        let c = FunctionId::Xor.circuit(1).unwrap();
        for seed in 0..20 {
            let mut rng = ChaCha20Rng::seed_from_u64(seed);
            let b = build_bundle(&c, &mut rng);
            let ship = expected_shipment(&b);
            let mut ev = Evaluator::new(&b.dt, &ship, ChaCha20Rng::seed_from_u64(seed + 100));
            for v in 0..b.dt.len() {
                if b.qubits[v].role == Role::Trap {
                    let q = b.qubits[v];
                    assert_eq!(ev.measure(v, q.theta().plus_pi(q.r())).unwrap(), q.r());
                }
            }
        }
    }
}
