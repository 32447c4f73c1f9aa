//! Two-party Boolean functions as patterns on dotted graphs.
//!
//! Every function here is a rotation chain followed by a fork that copies the
//! computational-basis result to two outputs, one per party. A chain with
//! rotations `a_1..a_L` (units of pi/4) uses angles `phi_k = -a_{k+1}` on the
//! first `L` chain vertices; the fork adds eight more.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::dtg::{dot_graph, Circuit};
use crate::mbqc::{BaseGraph, Flow, InputBinding, MeasurementPattern};
use crate::qsim::Angle8;

use super::ProtocolError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FunctionId {
    /// Parity of all bits of `x` and `y`.
    Xor,
    /// `x AND y` on one bit each.
    And,
    /// `NOT (x AND y)` on one bit each.
    Nand,
    /// Constant 0.
    Zero,
    /// Constant 1.
    One,
}

impl FunctionId {
    pub const ALL: [FunctionId; 5] = [FunctionId::Xor, FunctionId::And, FunctionId::Nand, FunctionId::Zero, FunctionId::One];

    /// Reference value of the (shared) output.
    pub fn classical(self, x: &[u8], y: &[u8]) -> u8 {
        let par = |v: &[u8]| v.iter().fold(0, |a, b| a ^ (b & 1));
        match self {
            FunctionId::Xor => par(x) ^ par(y),
            FunctionId::And => x[0] & y[0] & 1,
            FunctionId::Nand => 1 ^ (x[0] & y[0] & 1),
            FunctionId::Zero => 0,
            FunctionId::One => 1,
        }
    }

    /// `(f1, f2)`; both parties receive the same bit.
    pub fn outputs(self, x: &[u8], y: &[u8]) -> (Vec<u8>, Vec<u8>) {
        let v = self.classical(x, y);
        (vec![v], vec![v])
    }

    pub fn supports(self, n: usize) -> bool {
        match self {
            FunctionId::And | FunctionId::Nand => n == 1,
            _ => (1..=2).contains(&n),
        }
    }

    pub fn circuit(self, n: usize) -> Result<Arc<Circuit>, ProtocolError> {
        if !self.supports(n) {
            return Err(ProtocolError::Circuit(format!("{self} is not available for n = {n}")));
        }
        let x = |i: usize| Term::Bit { bit: i, base: 0, step: 1 };
        let y = |i: usize| Term::Bit { bit: n + i, base: 0, step: 1 };
        let rotations: Vec<Term> = match self {
            FunctionId::And | FunctionId::Nand => {
                let last = if self == FunctionId::And { 1 } else { 5 };
                vec![
                    Term::Const(2),
                    y(0).scaled(2, 0),
                    Term::Const(0),
                    x(0).scaled(2, 1),
                    y(0).scaled(4, 0),
                    Term::Const(0),
                    x(0).scaled(4, 0),
                    Term::Const(last),
                ]
            }
            FunctionId::Xor => {
                let mut a = vec![Term::Const(2), Term::Const(2)];
                for i in 0..2 * n {
                    a.push(Term::Const(0));
                    a.push(Term::Bit { bit: i, base: 0, step: 4 });
                }
                a
            }
            FunctionId::Zero | FunctionId::One => {
                let mut a = vec![Term::Const(2), Term::Const(2)];
                for _ in 0..2 * n {
                    a.extend([Term::Const(0), Term::Const(0)]);
                }
                if self == FunctionId::One {
                    *a.last_mut().expect("non-empty") = Term::Const(4);
                }
                a
            }
        };
        fork_chain(&self.to_string(), n, &rotations).map(Arc::new)
    }
}

impl fmt::Display for FunctionId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            FunctionId::Xor => "xor",
            FunctionId::And => "and",
            FunctionId::Nand => "nand",
            FunctionId::Zero => "zero",
            FunctionId::One => "one",
        };
        f.write_str(s)
    }
}

impl FromStr for FunctionId {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s.to_ascii_lowercase().as_str() {
            "xor" => Ok(FunctionId::Xor),
            "and" => Ok(FunctionId::And),
            "nand" | "not-and" => Ok(FunctionId::Nand),
            "zero" | "const0" => Ok(FunctionId::Zero),
            "one" | "const1" | "const" => Ok(FunctionId::One),
            other => Err(format!("unknown function '{other}'")),
        }
    }
}

/// A rotation, constant or affine in one input bit.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Term {
    Const(i64),
    Bit { bit: usize, base: i64, step: i64 },
}

impl Term {
    fn scaled(self, step: i64, base: i64) -> Term {
        match self {
            Term::Bit { bit, .. } => Term::Bit { bit, base, step },
            c => c,
        }
    }
}

/// Builds the chain-and-fork circuit. Chain index `t` runs over the dotted
/// graph; even indices are base vertices.
fn fork_chain(name: &str, n: usize, rotations: &[Term]) -> Result<Circuit, ProtocolError> {
    let l = rotations.len();
    assert!(l.is_multiple_of(2), "chain length must be even");
    let main = l + 4;
    let n_base = main / 2 + 3;
    let (b1, b2) = (n_base - 2, n_base - 1);
    let mut base_of = BTreeMap::new();
    for t in (0..=main).step_by(2) {
        base_of.insert(t, t / 2);
    }
    base_of.insert(l + 6, b1);
    base_of.insert(l + 8, b2);

    let mut edges = Vec::new();
    let mut edge_of = BTreeMap::new();
    for t in (1..main).step_by(2) {
        edge_of.insert(t, edges.len());
        edges.push((base_of[&(t - 1)], base_of[&(t + 1)]));
    }
    edge_of.insert(l + 5, edges.len());
    edges.push((base_of[&l], b1));
    edge_of.insert(l + 7, edges.len());
    edges.push((b1, b2));

    let err = |e: crate::mbqc::MbqcError| ProtocolError::Circuit(e.to_string());
    let base = BaseGraph::new(n_base, edges, vec![0], vec![main / 2, b2]).map_err(err)?;
    let id = |t: usize| base_of.get(&t).copied().unwrap_or_else(|| n_base + edge_of[&t]);

    let mut f = BTreeMap::new();
    for t in 0..main {
        f.insert(id(t), id(t + 1));
    }
    for t in l + 5..l + 8 {
        f.insert(id(t), id(t + 1));
    }
    f.insert(id(l), id(l + 1));
    let order: Vec<usize> = (0..main).chain(l + 5..l + 8).map(id).collect();

    let mut phi = BTreeMap::new();
    let mut bindings = Vec::new();
    for (k, term) in rotations.iter().enumerate() {
        match *term {
            Term::Const(a) => {
                phi.insert(id(k), Angle8::new(-a));
            }
            Term::Bit { bit, base, step } => bindings.push(InputBinding {
                vertex: id(k),
                bit,
                phi: [Angle8::new(-base), Angle8::new(-(base + step))],
            }),
        }
    }
    for (t, a) in [(l, 0), (l + 1, 2), (l + 2, 2), (l + 3, 0), (l + 5, 2), (l + 6, 2), (l + 7, 0)] {
        phi.insert(id(t), Angle8::new(a));
    }

    let pattern = MeasurementPattern {
        graph: dot_graph(&base),
        flow: Flow { f, order },
        phi,
        bindings,
        num_bits: 2 * n,
    };
    let c = Circuit {
        name: format!("{name}{n}"),
        base,
        pattern,
        n,
        p1_outputs: vec![main / 2],
        p2_outputs: vec![b2],
    };
    c.validate().map_err(|e| ProtocolError::Circuit(e.to_string()))?;
    Ok(c)
}

/// All assignments of `2n` bits, split as `(x, y)`.
pub fn all_inputs(n: usize) -> Vec<(Vec<u8>, Vec<u8>)> {
    (0..1u32 << (2 * n))
        .map(|m| {
            let bits: Vec<u8> = (0..2 * n).map(|i| ((m >> i) & 1) as u8).collect();
            (bits[..n].to_vec(), bits[n..].to_vec())
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_function_is_deterministic_and_correct() {
        for f in FunctionId::ALL {
            for n in 1..=2 {
                if !f.supports(n) {
                    continue;
                }
                let c = f.circuit(n).unwrap();
                for (x, y) in all_inputs(n) {
                    for seed in 0..6 {
                        let (o1, o2) = c.evaluate(&x, &y, seed).unwrap();
                        assert_eq!((o1, o2), f.outputs(&x, &y), "{f} n={n} x={x:?} y={y:?} seed={seed}");
                    }
                }
            }
        }
    }

    #[test]
    fn sizes() {
        let and = FunctionId::And.circuit(1).unwrap();
        assert_eq!((and.base.num_vertices(), and.base.edges().len()), (9, 8));
        assert_eq!(and.base.max_degree(), 3);
        assert_eq!(FunctionId::Xor.circuit(1).unwrap().base.num_vertices(), 8);
        assert_eq!(FunctionId::Xor.circuit(2).unwrap().base.num_vertices(), 10);
        assert!(FunctionId::And.circuit(2).is_err());
    }

    #[test]
    fn owners_follow_bit_index() {
        let c = FunctionId::And.circuit(1).unwrap();
        let owners: Vec<u8> = c.pattern.bindings.iter().map(|b| c.input_owner(b.vertex).unwrap()).collect();
        assert_eq!(owners.iter().filter(|&&o| o == 1).count(), 2);
        assert_eq!(owners.iter().filter(|&&o| o == 2).count(), 2);
    }

    #[test]
    fn parse_round_trip() {
        for f in FunctionId::ALL {
            assert_eq!(f.to_string().parse::<FunctionId>().unwrap(), f);
        }
        assert!("mux".parse::<FunctionId>().is_err());
    }
}
