//! Dense pure-state engine with just-in-time qubit allocation, plus the
//! density-matrix numerics used by the bound checks.

use std::f64::consts::{FRAC_1_SQRT_2, FRAC_PI_4};
use std::fmt;
use std::ops::{Add, Neg, Sub};

use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub type C64 = Complex64;

/// Norm tolerance for statevectors.
pub const NORM_TOL: f64 = 1e-9;
/// Hermiticity tolerance for density matrices.
pub const HERMITIAN_TOL: f64 = 1e-10;
/// Smallest eigenvalue accepted as positive semidefinite.
pub const PSD_FLOOR: f64 = -1e-8;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum QsimError {
    #[error("qubit label {0} is already live")]
    DuplicateLabel(usize),
    #[error("qubit label {0} is not live")]
    MissingLabel(usize),
    #[error("two-qubit gate needs distinct qubits, got {0} twice")]
    SameQubit(usize),
    #[error("dimension mismatch: {0} vs {1}")]
    DimensionMismatch(usize, usize),
    #[error("invalid density matrix: {0}")]
    InvalidDensity(String),
}

/// An angle `value * pi/4` with arithmetic modulo 8.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub struct Angle8(u8);

impl Angle8 {
    pub const ZERO: Angle8 = Angle8(0);
    pub const PI: Angle8 = Angle8(4);

    pub fn new(v: i64) -> Self {
        Angle8(v.rem_euclid(8) as u8)
    }

    pub fn value(self) -> u8 {
        self.0
    }

    pub fn radians(self) -> f64 {
        self.0 as f64 * FRAC_PI_4
    }

    /// Adds `bit * pi`.
    pub fn plus_pi(self, bit: u8) -> Self {
        Angle8::new(self.0 as i64 + 4 * (bit & 1) as i64)
    }

    pub fn all() -> impl Iterator<Item = Angle8> {
        (0..8).map(Angle8)
    }

    pub fn random<R: Rng + ?Sized>(rng: &mut R) -> Self {
        Angle8(rng.gen_range(0..8))
    }

    /// `e^{i value pi/4}`.
    pub fn phase(self) -> C64 {
        C64::from_polar(1.0, self.radians())
    }
}

impl TryFrom<u8> for Angle8 {
    type Error = String;
    fn try_from(v: u8) -> Result<Self, String> {
        if v < 8 {
            Ok(Angle8(v))
        } else {
            Err(format!("angle {v} out of range 0..8"))
        }
    }
}

impl From<Angle8> for u8 {
    fn from(a: Angle8) -> u8 {
        a.0
    }
}

impl fmt::Display for Angle8 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl Add for Angle8 {
    type Output = Angle8;
    fn add(self, o: Angle8) -> Angle8 {
        Angle8((self.0 + o.0) % 8)
    }
}

impl Sub for Angle8 {
    type Output = Angle8;
    fn sub(self, o: Angle8) -> Angle8 {
        Angle8((self.0 + 8 - o.0) % 8)
    }
}

impl Neg for Angle8 {
    type Output = Angle8;
    fn neg(self) -> Angle8 {
        Angle8((8 - self.0) % 8)
    }
}

/// Amplitudes of `|+_theta>`, or of `Z|+_theta>` when `z_flip` is set.
pub fn plus_state(theta: Angle8, z_flip: u8) -> [C64; 2] {
    let t = theta.plus_pi(z_flip);
    [C64::new(FRAC_1_SQRT_2, 0.0), t.phase() * FRAC_1_SQRT_2]
}

/// Probability that a single-qubit state is found in `|+_delta>`.
pub fn prob_plus(state: &[C64; 2], delta: Angle8) -> f64 {
    let amp = (state[0] + delta.phase().conj() * state[1]) * FRAC_1_SQRT_2;
    amp.norm_sqr()
}

/// Statevector over the currently live qubits.
///
/// Live qubit `k` (in label order) is bit `k` of the amplitude index.
#[derive(Clone, Debug)]
pub struct QuantumRegister {
    labels: Vec<usize>,
    amps: Vec<C64>,
    rng: ChaCha20Rng,
}

impl QuantumRegister {
    pub fn new(seed: u64) -> Self {
        Self::with_rng(ChaCha20Rng::seed_from_u64(seed))
    }

    pub fn with_rng(rng: ChaCha20Rng) -> Self {
        QuantumRegister { labels: Vec::new(), amps: vec![C64::new(1.0, 0.0)], rng }
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn amplitudes(&self) -> &[C64] {
        &self.amps
    }

    pub fn num_live(&self) -> usize {
        self.labels.len()
    }

    pub fn is_live(&self, label: usize) -> bool {
        self.labels.contains(&label)
    }

    pub fn norm(&self) -> f64 {
        self.amps.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt()
    }

    fn pos(&self, label: usize) -> Result<usize, QsimError> {
        self.labels.iter().position(|&l| l == label).ok_or(QsimError::MissingLabel(label))
    }

    /// Tensors in an arbitrary normalised single-qubit state.
    pub fn add_qubit(&mut self, label: usize, state: [C64; 2]) -> Result<(), QsimError> {
        if self.is_live(label) {
            return Err(QsimError::DuplicateLabel(label));
        }
        let n = self.amps.len();
        let mut next = Vec::with_capacity(2 * n);
        next.extend(self.amps.iter().map(|a| a * state[0]));
        next.extend(self.amps.iter().map(|a| a * state[1]));
        self.amps = next;
        self.labels.push(label);
        Ok(())
    }

    /// Tensors in a joint state; bit `k` of the index of `state` is `labels[k]`.
    pub fn add_joint(&mut self, labels: &[usize], state: &[C64]) -> Result<(), QsimError> {
        if state.len() != 1usize << labels.len() {
            return Err(QsimError::DimensionMismatch(state.len(), 1usize << labels.len()));
        }
        for (i, &l) in labels.iter().enumerate() {
            if self.is_live(l) || labels[..i].contains(&l) {
                return Err(QsimError::DuplicateLabel(l));
            }
        }
        let mut next = Vec::with_capacity(self.amps.len() * state.len());
        for s in state {
            next.extend(self.amps.iter().map(|a| a * s));
        }
        self.amps = next;
        self.labels.extend_from_slice(labels);
        Ok(())
    }

    pub fn add_plus_theta(&mut self, label: usize, theta: Angle8, z_flip: u8) -> Result<(), QsimError> {
        self.add_qubit(label, plus_state(theta, z_flip))
    }

    pub fn apply_cz(&mut self, a: usize, b: usize) -> Result<(), QsimError> {
        if a == b {
            return Err(QsimError::SameQubit(a));
        }
        let mask = (1usize << self.pos(a)?) | (1usize << self.pos(b)?);
        for (i, amp) in self.amps.iter_mut().enumerate() {
            if i & mask == mask {
                *amp = -*amp;
            }
        }
        Ok(())
    }

    pub fn apply_z(&mut self, label: usize) -> Result<(), QsimError> {
        let bit = 1usize << self.pos(label)?;
        for (i, amp) in self.amps.iter_mut().enumerate() {
            if i & bit != 0 {
                *amp = -*amp;
            }
        }
        Ok(())
    }

    /// Applies a 2x2 matrix `[[m00, m01], [m10, m11]]` to one qubit.
    pub fn apply_single(&mut self, label: usize, m: [[C64; 2]; 2]) -> Result<(), QsimError> {
        let bit = 1usize << self.pos(label)?;
        for i in 0..self.amps.len() {
            if i & bit == 0 {
                let (a0, a1) = (self.amps[i], self.amps[i | bit]);
                self.amps[i] = m[0][0] * a0 + m[0][1] * a1;
                self.amps[i | bit] = m[1][0] * a0 + m[1][1] * a1;
            }
        }
        Ok(())
    }

    /// Probability of outcome 0 (`|+_delta>`) when measuring `label`.
    pub fn prob_zero(&self, label: usize, delta: Angle8) -> Result<f64, QsimError> {
        let bit = 1usize << self.pos(label)?;
        let ph = delta.phase().conj();
        let mut p = 0.0;
        for i in 0..self.amps.len() {
            if i & bit == 0 {
                p += ((self.amps[i] + ph * self.amps[i | bit]) * FRAC_1_SQRT_2).norm_sqr();
            }
        }
        Ok(p)
    }

    /// Measures in `{|+_delta>, |-_delta>}`, removes the qubit and renormalises.
    pub fn measure_rotated(&mut self, label: usize, delta: Angle8) -> Result<u8, QsimError> {
        let p0 = self.prob_zero(label, delta)?;
        let u: f64 = self.rng.gen();
        let outcome = if u < p0 { 0 } else { 1 };
        self.project(label, delta, outcome)?;
        Ok(outcome)
    }

    /// Projects `label` onto the given outcome and removes it.
    pub fn project(&mut self, label: usize, delta: Angle8, outcome: u8) -> Result<(), QsimError> {
        let k = self.pos(label)?;
        let bit = 1usize << k;
        let low = bit - 1;
        let sign = if outcome == 0 { 1.0 } else { -1.0 };
        let ph = delta.phase().conj() * sign;
        let half = self.amps.len() / 2;
        let mut next = Vec::with_capacity(half);
        for j in 0..half {
            let i0 = (j & low) | ((j & !low) << 1);
            next.push((self.amps[i0] + ph * self.amps[i0 | bit]) * FRAC_1_SQRT_2);
        }
        let norm = next.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt();
        if norm > 0.0 {
            for a in next.iter_mut() {
                *a /= norm;
            }
        }
        self.amps = next;
        self.labels.remove(k);
        Ok(())
    }

    /// Reduced state vector in the order of `order` (all live labels).
    pub fn state_in_order(&self, order: &[usize]) -> Result<Vec<C64>, QsimError> {
        if order.len() != self.labels.len() {
            return Err(QsimError::DimensionMismatch(order.len(), self.labels.len()));
        }
        let pos: Vec<usize> = order.iter().map(|&l| self.pos(l)).collect::<Result<_, _>>()?;
        let mut out = vec![C64::new(0.0, 0.0); self.amps.len()];
        for (i, a) in self.amps.iter().enumerate() {
            let mut j = 0;
            for (q, &p) in pos.iter().enumerate() {
                if i >> p & 1 == 1 {
                    j |= 1 << q;
                }
            }
            out[j] = *a;
        }
        Ok(out)
    }
}

/// `|<a|b>|^2` for equal-length statevectors.
pub fn overlap_sq(a: &[C64], b: &[C64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum::<C64>().norm_sqr()
}

/// Encodes amplitudes as `[re, im]` pairs.
pub fn amplitudes_to_json(amps: &[C64]) -> serde_json::Value {
    serde_json::Value::Array(amps.iter().map(|a| serde_json::json!([a.re, a.im])).collect())
}

pub fn amplitudes_from_json(v: &serde_json::Value) -> Option<Vec<C64>> {
    v.as_array()?
        .iter()
        .map(|p| {
            let p = p.as_array()?;
            Some(C64::new(p.first()?.as_f64()?, p.get(1)?.as_f64()?))
        })
        .collect()
}

/// Possibly sub-normalised density operator.
#[derive(Clone, Debug, PartialEq)]
pub struct DensityMatrix {
    m: DMatrix<C64>,
}

impl DensityMatrix {
    pub fn new(m: DMatrix<C64>) -> Result<Self, QsimError> {
        let d = DensityMatrix { m };
        d.validate()?;
        Ok(d)
    }

    /// Wraps without validation; callers that build intermediate operators use this.
    pub fn from_matrix_unchecked(m: DMatrix<C64>) -> Self {
        DensityMatrix { m }
    }

    /// `|psi><psi|` without renormalising, so a sub-normalised vector gives a sub-normalised state.
    pub fn from_pure(psi: &[C64]) -> Self {
        let n = psi.len();
        DensityMatrix { m: DMatrix::from_fn(n, n, |i, j| psi[i] * psi[j].conj()) }
    }

    pub fn zeros(dim: usize) -> Self {
        DensityMatrix { m: DMatrix::zeros(dim, dim) }
    }

    pub fn dim(&self) -> usize {
        self.m.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<C64> {
        &self.m
    }

    pub fn trace(&self) -> f64 {
        self.m.trace().re
    }

    pub fn scaled(&self, k: f64) -> Self {
        DensityMatrix { m: self.m.scale(k) }
    }

    pub fn add(&self, o: &DensityMatrix) -> Result<Self, QsimError> {
        check_dims(self, o)?;
        Ok(DensityMatrix { m: &self.m + &o.m })
    }

    pub fn validate(&self) -> Result<(), QsimError> {
        if self.m.nrows() != self.m.ncols() {
            return Err(QsimError::DimensionMismatch(self.m.nrows(), self.m.ncols()));
        }
        let herm = (&self.m - self.m.adjoint()).iter().fold(0.0f64, |acc, z| acc.max(z.norm()));
        if herm > HERMITIAN_TOL {
            return Err(QsimError::InvalidDensity(format!("not Hermitian ({herm:e})")));
        }
        let min = hermitian_eigenvalues(&self.m).into_iter().fold(f64::INFINITY, f64::min);
        if self.dim() > 0 && min < PSD_FLOOR {
            return Err(QsimError::InvalidDensity(format!("negative eigenvalue {min:e}")));
        }
        if self.trace() > 1.0 + HERMITIAN_TOL {
            return Err(QsimError::InvalidDensity(format!("trace {} exceeds 1", self.trace())));
        }
        Ok(())
    }
}

fn check_dims(a: &DensityMatrix, b: &DensityMatrix) -> Result<(), QsimError> {
    if a.dim() != b.dim() {
        return Err(QsimError::DimensionMismatch(a.dim(), b.dim()));
    }
    Ok(())
}

fn hermitize(m: &DMatrix<C64>) -> DMatrix<C64> {
    (m + m.adjoint()).scale(0.5)
}

pub fn hermitian_eigenvalues(m: &DMatrix<C64>) -> Vec<f64> {
    SymmetricEigen::new(hermitize(m)).eigenvalues.iter().copied().collect()
}

/// Eigenvalues below this are round-off; their square roots would otherwise
/// contribute errors near 1e-8.
const EIG_ZERO: f64 = 1e-14;

fn clamped_sqrt(l: f64) -> f64 {
    if l > EIG_ZERO {
        l.sqrt()
    } else {
        0.0
    }
}

/// Square root of a positive semidefinite operator; round-off eigenvalues are clamped.
pub fn psd_sqrt(m: &DMatrix<C64>) -> DMatrix<C64> {
    let eig = SymmetricEigen::new(hermitize(m));
    let roots = eig.eigenvalues.map(|l| C64::new(clamped_sqrt(l), 0.0));
    let v = &eig.eigenvectors;
    v * DMatrix::from_diagonal(&roots) * v.adjoint()
}

/// Half the trace norm of `rho - sigma`.
pub fn trace_distance(rho: &DensityMatrix, sigma: &DensityMatrix) -> Result<f64, QsimError> {
    check_dims(rho, sigma)?;
    // Fixed operand order keeps the result bit-for-bit symmetric.
    let first_diff = rho.m.iter().zip(sigma.m.iter()).find(|(a, b)| a != b);
    let swap = matches!(first_diff, Some((a, b)) if (a.re, a.im) < (b.re, b.im));
    let diff = if swap { &sigma.m - &rho.m } else { &rho.m - &sigma.m };
    Ok(0.5 * hermitian_eigenvalues(&diff).iter().map(|l| l.abs()).sum::<f64>())
}

/// Generalised trace distance for sub-normalised states:
/// `trace_distance + |Tr rho - Tr sigma| / 2`.
pub fn generalized_trace_distance(rho: &DensityMatrix, sigma: &DensityMatrix) -> Result<f64, QsimError> {
    Ok(trace_distance(rho, sigma)? + 0.5 * (rho.trace() - sigma.trace()).abs())
}

/// Fidelity `Tr sqrt(sqrt(rho) sigma sqrt(rho))` of the unnormalised operators.
pub fn fidelity(rho: &DensityMatrix, sigma: &DensityMatrix) -> Result<f64, QsimError> {
    check_dims(rho, sigma)?;
    let s = psd_sqrt(&rho.m);
    let inner = &s * &sigma.m * &s;
    Ok(hermitian_eigenvalues(&inner).into_iter().map(clamped_sqrt).sum())
}

/// `F(rho, sigma) + sqrt((1 - Tr rho)(1 - Tr sigma))`.
pub fn sub_fidelity(rho: &DensityMatrix, sigma: &DensityMatrix) -> Result<f64, QsimError> {
    let f = fidelity(rho, sigma)?;
    let slack = ((1.0 - rho.trace()).max(0.0) * (1.0 - sigma.trace()).max(0.0)).sqrt();
    Ok(f + slack)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    #[test]
    fn angle_arithmetic_wraps() {
        assert_eq!(Angle8::new(-1).value(), 7);
        assert_eq!((Angle8::new(5) + Angle8::new(6)).value(), 3);
        assert_eq!((-Angle8::new(3)).value(), 5);
        assert_eq!(Angle8::new(6).plus_pi(1).value(), 2);
        assert!(serde_json::from_str::<Angle8>("8").is_err());
        assert_eq!(serde_json::to_string(&Angle8::new(3)).unwrap(), "3");
    }

    #[test]
    fn plus_state_examples() {
        let mut reg = QuantumRegister::new(0);
        reg.add_plus_theta(0, Angle8::ZERO, 0).unwrap();
        assert_abs_diff_eq!(reg.amplitudes()[0].re, FRAC_1_SQRT_2, epsilon = 1e-12);
        assert_abs_diff_eq!(reg.amplitudes()[1].re, FRAC_1_SQRT_2, epsilon = 1e-12);

        let flipped = plus_state(Angle8::new(2), 1);
        let target = plus_state(Angle8::new(6), 0);
        assert_abs_diff_eq!(overlap_sq(&flipped, &target), 1.0, epsilon = 1e-12);

        let s = plus_state(Angle8::new(1), 0);
        assert_abs_diff_eq!(s[1].re, 0.5, epsilon = 1e-12);
        assert_abs_diff_eq!(s[1].im, 0.5, epsilon = 1e-12);
    }

    #[test]
    fn duplicate_and_missing_labels() {
        let mut reg = QuantumRegister::new(0);
        reg.add_plus_theta(3, Angle8::ZERO, 0).unwrap();
        assert_eq!(reg.add_plus_theta(3, Angle8::ZERO, 0), Err(QsimError::DuplicateLabel(3)));
        assert_eq!(reg.apply_cz(3, 4), Err(QsimError::MissingLabel(4)));
        assert_eq!(reg.apply_cz(3, 3), Err(QsimError::SameQubit(3)));
        assert_eq!(reg.measure_rotated(9, Angle8::ZERO), Err(QsimError::MissingLabel(9)));
    }

    #[test]
    fn cz_on_plus_plus() {
        let mut reg = QuantumRegister::new(0);
        reg.add_plus_theta(0, Angle8::ZERO, 0).unwrap();
        reg.add_plus_theta(1, Angle8::ZERO, 0).unwrap();
        reg.apply_cz(0, 1).unwrap();
        let want = [c(0.5, 0.0), c(0.5, 0.0), c(0.5, 0.0), c(-0.5, 0.0)];
        for (a, b) in reg.amplitudes().iter().zip(want) {
            assert_abs_diff_eq!((a - b).norm(), 0.0, epsilon = 1e-12);
        }
        reg.apply_cz(1, 0).unwrap();
        for a in reg.amplitudes() {
            assert_abs_diff_eq!((a - c(0.5, 0.0)).norm(), 0.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn eigenstate_measurements_are_deterministic() {
        for seed in 0..20 {
            for theta in Angle8::all() {
                let mut reg = QuantumRegister::new(seed);
                reg.add_plus_theta(0, theta, 0).unwrap();
                assert_eq!(reg.measure_rotated(0, theta).unwrap(), 0);
                reg.add_plus_theta(1, theta, 0).unwrap();
                assert_eq!(reg.measure_rotated(1, theta.plus_pi(1)).unwrap(), 1);
                assert_eq!(reg.num_live(), 0);
            }
        }
    }

    #[test]
    fn trap_next_to_dummy_one_flips() {
        // Brute force: CZ between |+_theta> and |1>, then measure the trap.
        for theta in Angle8::all() {
            for r in 0..2u8 {
                let mut reg = QuantumRegister::new(5);
                reg.add_plus_theta(0, theta, 0).unwrap();
                reg.add_qubit(1, [c(0.0, 0.0), c(1.0, 0.0)]).unwrap();
                reg.apply_cz(0, 1).unwrap();
                assert_eq!(reg.measure_rotated(0, theta.plus_pi(r)).unwrap(), r ^ 1);
                let mut folded = QuantumRegister::new(5);
                folded.add_plus_theta(0, theta, 1).unwrap();
                assert_eq!(folded.measure_rotated(0, theta.plus_pi(r)).unwrap(), r ^ 1);
            }
        }
    }

    #[test]
    fn measurement_statistics_match_born_rule() {
        let trials = 10_000;
        for (theta, delta) in [(0i64, 2i64), (1, 4), (3, 0), (5, 6)] {
            let (theta, delta) = (Angle8::new(theta), Angle8::new(delta));
            let analytic = prob_plus(&plus_state(theta, 0), delta);
            let mut zeros = 0;
            let mut reg = QuantumRegister::new(42);
            for _ in 0..trials {
                reg.add_plus_theta(0, theta, 0).unwrap();
                if reg.measure_rotated(0, delta).unwrap() == 0 {
                    zeros += 1;
                }
            }
            let freq = zeros as f64 / trials as f64;
            let sigma = (analytic * (1.0 - analytic) / trials as f64).sqrt().max(1e-12);
            assert!((freq - analytic).abs() <= 4.0 * sigma, "theta {theta} delta {delta}: {freq} vs {analytic}");
        }
    }

    #[test]
    fn same_seed_same_outcomes() {
        let run = |seed| {
            let mut reg = QuantumRegister::new(seed);
            (0..64)
                .map(|i| {
                    reg.add_plus_theta(i, Angle8::new(i as i64), 0).unwrap();
                    reg.measure_rotated(i, Angle8::ZERO).unwrap()
                })
                .collect::<Vec<_>>()
        };
        assert_eq!(run(11), run(11));
        assert_ne!(run(11), run(12));
    }

    fn basis(dim: usize, k: usize) -> Vec<C64> {
        let mut v = vec![c(0.0, 0.0); dim];
        v[k] = c(1.0, 0.0);
        v
    }

    #[test]
    fn trace_distance_examples() {
        let zero = DensityMatrix::from_pure(&basis(2, 0));
        let one = DensityMatrix::from_pure(&basis(2, 1));
        let plus = DensityMatrix::from_pure(&plus_state(Angle8::ZERO, 0));
        assert_abs_diff_eq!(trace_distance(&zero, &zero).unwrap(), 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(trace_distance(&zero, &one).unwrap(), 1.0, epsilon = 1e-12);
        // Eigenvalues of |0><0| - |+><+| are +-1/(2 sqrt 2)... times 2: +-sqrt(2)/2.
        assert_abs_diff_eq!(trace_distance(&zero, &plus).unwrap(), FRAC_1_SQRT_2, epsilon = 1e-12);
        assert!(matches!(
            trace_distance(&zero, &DensityMatrix::zeros(3)),
            Err(QsimError::DimensionMismatch(2, 3))
        ));
    }

    #[test]
    fn sub_fidelity_examples() {
        let zero = DensityMatrix::from_pure(&basis(2, 0));
        assert_abs_diff_eq!(sub_fidelity(&zero, &zero).unwrap(), 1.0, epsilon = 1e-9);
        let half = zero.scaled(0.5);
        assert_abs_diff_eq!(sub_fidelity(&half, &half).unwrap(), 1.0, epsilon = 1e-9);
        // F^2(|phi>, sigma) = <phi|sigma|phi>.
        let phi = plus_state(Angle8::new(1), 0);
        let sigma = DensityMatrix::new(DMatrix::from_row_slice(
            2,
            2,
            &[c(0.7, 0.0), c(0.1, -0.2), c(0.1, 0.2), c(0.3, 0.0)],
        ))
        .unwrap();
        let expect: C64 = (0..2)
            .flat_map(|i| (0..2).map(move |j| (i, j)))
            .map(|(i, j)| phi[i].conj() * sigma.matrix()[(i, j)] * phi[j])
            .sum();
        let f = fidelity(&DensityMatrix::from_pure(&phi), &sigma).unwrap();
        assert_abs_diff_eq!(f * f, expect.re, epsilon = 1e-9);
    }

    #[test]
    fn validate_rejects_bad_matrices() {
        let m = DMatrix::from_row_slice(2, 2, &[c(1.0, 0.0), c(0.5, 0.0), c(0.0, 0.0), c(0.0, 0.0)]);
        assert!(DensityMatrix::new(m).is_err());
        let m = DMatrix::from_row_slice(2, 2, &[c(1.5, 0.0), c(0.0, 0.0), c(0.0, 0.0), c(-0.5, 0.0)]);
        assert!(DensityMatrix::new(m).is_err());
        let m = DMatrix::from_row_slice(2, 2, &[c(0.8, 0.0), c(0.0, 0.0), c(0.0, 0.0), c(0.4, 0.0)]);
        assert!(DensityMatrix::new(m).is_err());
    }

    #[test]
    fn amplitude_json_roundtrip() {
        let v = vec![c(0.25, -1.0), c(0.0, 0.5)];
        assert_eq!(amplitudes_from_json(&amplitudes_to_json(&v)).unwrap(), v);
    }

    fn random_density(seed: u64, dim: usize, trace: f64) -> DensityMatrix {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let g = DMatrix::from_fn(dim, dim, |_, _| c(rand::Rng::gen::<f64>(&mut rng) - 0.5, rand::Rng::gen::<f64>(&mut rng) - 0.5));
        let m = &g * g.adjoint();
        let t = m.trace().re;
        DensityMatrix::new(m.scale(trace / t)).unwrap()
    }

    proptest! {
        #[test]
        fn norm_preserved_under_random_sequences(
            seed in any::<u64>(),
            ops in proptest::collection::vec((0u8..3, 0usize..5, 0usize..5, 0u8..8), 1..40),
        ) {
            let mut reg = QuantumRegister::new(seed);
            for (kind, a, b, ang) in ops {
                match kind {
                    0 => { let _ = reg.add_plus_theta(a, Angle8::new(ang as i64), b as u8 & 1); }
                    1 => { let _ = reg.apply_cz(a, b); }
                    _ => { let _ = reg.measure_rotated(a, Angle8::new(ang as i64)); }
                }
                prop_assert!((reg.norm() - 1.0).abs() < NORM_TOL);
                prop_assert_eq!(reg.amplitudes().len(), 1usize << reg.num_live());
            }
        }

        #[test]
        fn trace_distance_is_a_metric(s1 in any::<u64>(), s2 in any::<u64>(), s3 in any::<u64>(), dim in 2usize..5) {
            let (a, b, c) = (random_density(s1, dim, 1.0), random_density(s2, dim, 1.0), random_density(s3, dim, 1.0));
            let ab = trace_distance(&a, &b).unwrap();
            prop_assert_eq!(ab, trace_distance(&b, &a).unwrap());
            prop_assert!(ab <= trace_distance(&a, &c).unwrap() + trace_distance(&c, &b).unwrap() + 1e-9);
            prop_assert!(ab <= 1.0 + 1e-9);
        }

        #[test]
        fn generalized_distance_bounded_by_sub_fidelity(s1 in any::<u64>(), s2 in any::<u64>(), t1 in 0.05f64..1.0, t2 in 0.05f64..1.0, dim in 2usize..5) {
            let a = random_density(s1, dim, t1);
            let b = random_density(s2, dim, t2);
            let f = sub_fidelity(&a, &b).unwrap();
            let d = generalized_trace_distance(&a, &b).unwrap();
            prop_assert!(d <= (1.0 - f * f).max(0.0).sqrt() + 1e-6);
        }
    }
}
