//! Numerical checks of the quantitative lemmas: the fault-tolerance exponent,
//! the distance between the real and ideal state-check maps, and the
//! rewinding distance for projector families.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::qsim::{fidelity, generalized_trace_distance, sub_fidelity, trace_distance, DensityMatrix, QsimError, C64};

/// Largest Hilbert-space dimension handled here.
pub const MAX_DIM: usize = 64;

#[derive(Debug, Error)]
pub enum BoundsError {
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("projector family: {0}")]
    Family(String),
    #[error(transparent)]
    Qsim(#[from] QsimError),
}

/// `d = ceil(delta_ft / (2(2c + 1)))`.
pub fn epsilon2_exponent(delta_ft: u32, c: u32) -> u32 {
    assert!(delta_ft >= 1 && c >= 1, "delta_ft and c must be positive");
    delta_ft.div_ceil(2 * (2 * c + 1))
}

/// `(8/9)^d`.
pub fn epsilon2(delta_ft: u32, c: u32) -> f64 {
    (8.0f64 / 9.0).powi(epsilon2_exponent(delta_ft, c) as i32)
}

fn projector(v: &[C64]) -> DMatrix<C64> {
    let col = DMatrix::from_column_slice(v.len(), 1, v);
    &col * col.adjoint()
}

fn kron_all(parts: &[DMatrix<C64>]) -> DMatrix<C64> {
    parts.iter().skip(1).fold(parts[0].clone(), |acc, p| acc.kronecker(p))
}

/// Haar-random unit vector.
pub fn haar_state<R: Rng + ?Sized>(dim: usize, rng: &mut R) -> Vec<C64> {
    let v: Vec<C64> = (0..dim).map(|_| C64::new(rng.sample(StandardNormal), rng.sample(StandardNormal))).collect();
    let n = v.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt();
    v.into_iter().map(|a| a / n).collect()
}

/// Appends the abort flag as one extra basis state with weight `w`.
fn with_abort(sigma: &DMatrix<C64>, w: f64) -> DensityMatrix {
    let d = sigma.nrows();
    let mut m = DMatrix::zeros(d + 1, d + 1);
    m.view_mut((0, 0), (d, d)).copy_from(sigma);
    m[(d, d)] = C64::new(w, 0.0);
    DensityMatrix::from_matrix_unchecked(m)
}

/// Real and ideal state-check maps applied to one pure state.
#[derive(Clone, Debug)]
pub struct QspccMaps {
    pub s: usize,
    /// `(1/s) sum_i P_i rho P_i`.
    pub sigma1: DensityMatrix,
    /// `P_0 rho P_0`.
    pub sigma2: DensityMatrix,
    pub p1: f64,
    pub p2: f64,
    pub phi1: DensityMatrix,
    pub phi2: DensityMatrix,
}

impl QspccMaps {
    pub fn distance(&self) -> Result<f64, BoundsError> {
        Ok(trace_distance(&self.phi1, &self.phi2)?)
    }
}

/// `psi` lives on `s` qubits, qubit `i` being factor `i` of the Kronecker product.
pub fn qspcc_maps(psi: &[C64], targets: &[[C64; 2]]) -> Result<QspccMaps, BoundsError> {
    let s = targets.len();
    let dim = 1usize.checked_shl(s as u32).filter(|&d| d <= MAX_DIM).ok_or_else(|| BoundsError::Dimension(format!("{s} subsystems exceed dimension {MAX_DIM}")))?;
    if psi.len() != dim || s == 0 {
        return Err(BoundsError::Dimension(format!("state of length {} for {s} subsystems", psi.len())));
    }
    let t: Vec<DMatrix<C64>> = targets.iter().map(|v| projector(v)).collect();
    let id = DMatrix::<C64>::identity(2, 2);
    let p0 = kron_all(&t);
    let rho = projector(psi);
    let mut sigma1 = DMatrix::zeros(dim, dim);
    for j in 0..s {
        let mut parts = t.clone();
        parts[j] = id.clone();
        let pj = kron_all(&parts);
        sigma1 += &pj * &rho * &pj;
    }
    sigma1 /= C64::new(s as f64, 0.0);
    let sigma2 = &p0 * &rho * &p0;
    let p1 = sigma1.trace().re;
    let p2 = sigma2.trace().re;
    Ok(QspccMaps {
        s,
        phi1: with_abort(&sigma1, 1.0 - p1),
        phi2: with_abort(&sigma2, 1.0 - p2),
        sigma1: DensityMatrix::from_matrix_unchecked(sigma1),
        sigma2: DensityMatrix::from_matrix_unchecked(sigma2),
        p1,
        p2,
    })
}

/// `p1 <= p2 + (1 - p2)/s` within 1e-9.
pub fn check_p1_bound(m: &QspccMaps) -> bool {
    m.p1 <= m.p2 + (1.0 - m.p2) / m.s as f64 + 1e-9
}

/// Targets and a state with qubit 0 orthogonal to its target.
pub fn one_orthogonal_instance<R: Rng + ?Sized>(s: usize, rng: &mut R) -> (Vec<C64>, Vec<[C64; 2]>) {
    let targets: Vec<[C64; 2]> = (0..s).map(|_| haar_state(2, rng).try_into().expect("two")).collect();
    let perp = [-targets[0][1].conj(), targets[0][0].conj()];
    let mut psi = vec![C64::new(1.0, 0.0)];
    for (i, t) in targets.iter().enumerate() {
        let factor = if i == 0 { perp } else { *t };
        psi = psi.iter().flat_map(|a| [a * factor[0], a * factor[1]]).collect();
    }
    (psi, targets)
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct QspccReport {
    pub s: usize,
    pub states: usize,
    pub max_distance: f64,
    pub bound: f64,
    pub p1_violations: usize,
    /// Largest `trace error` of the two maps over the corpus.
    pub max_trace_error: f64,
    /// Largest `Dtilde - sqrt(1 - Ftilde^2)` (should be <= 0).
    pub max_dtilde_excess: f64,
    pub min_ftilde: f64,
    /// `1 - 1/(2s)`.
    pub ftilde_floor: f64,
    /// Largest gap between `sqrt((1-p2)(1-p2-(1-p2)/s))` and `(1-p2)(1-1/(2s))`.
    pub approx_residual_fidelity: f64,
    /// `sqrt(1 - (1 - 1/(2s))^2) - sqrt(1/s)`.
    pub approx_residual_distance: f64,
    /// Distance of the one-orthogonal-subsystem instance.
    pub orthogonal_family_distance: f64,
}

impl QspccReport {
    pub fn pass(&self) -> bool {
        self.max_distance <= self.bound + 1e-6 && self.p1_violations == 0
    }

    /// The fidelity floor holds on the corpus; asserted for `s >= 4` only.
    pub fn ftilde_chain_holds(&self) -> bool {
        self.min_ftilde >= self.ftilde_floor - 1e-9
    }
}

/// Haar-random states on `s` qubits against Haar-random qubit targets.
pub fn qspcc_check(s: usize, states: usize, seed: u64) -> Result<QspccReport, BoundsError> {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let sf = s as f64;
    let mut r = QspccReport {
        s,
        states,
        max_distance: 0.0,
        bound: (1.0 / sf).sqrt(),
        p1_violations: 0,
        max_trace_error: 0.0,
        max_dtilde_excess: f64::NEG_INFINITY,
        min_ftilde: f64::INFINITY,
        ftilde_floor: 1.0 - 1.0 / (2.0 * sf),
        approx_residual_fidelity: 0.0,
        approx_residual_distance: (1.0 - (1.0 - 1.0 / (2.0 * sf)).powi(2)).sqrt() - (1.0 / sf).sqrt(),
        orthogonal_family_distance: 0.0,
    };
    for _ in 0..states {
        let targets: Vec<[C64; 2]> = (0..s).map(|_| haar_state(2, &mut rng).try_into().expect("two")).collect();
        let psi = haar_state(1 << s, &mut rng);
        let m = qspcc_maps(&psi, &targets)?;
        r.max_distance = r.max_distance.max(m.distance()?);
        r.p1_violations += !check_p1_bound(&m) as usize;
        r.max_trace_error = r.max_trace_error.max((m.phi1.trace() - 1.0).abs()).max((m.phi2.trace() - 1.0).abs());
        let ft = sub_fidelity(&m.sigma1, &m.sigma2)?;
        let dt = generalized_trace_distance(&m.sigma1, &m.sigma2)?;
        r.max_dtilde_excess = r.max_dtilde_excess.max(dt - (1.0 - ft * ft).max(0.0).sqrt());
        r.min_ftilde = r.min_ftilde.min(ft);
        let q = 1.0 - m.p2;
        let exact = (q * (q - q / sf)).sqrt();
        r.approx_residual_fidelity = r.approx_residual_fidelity.max((exact - q * (1.0 - 1.0 / (2.0 * sf))).abs());
    }
    let (psi, targets) = one_orthogonal_instance(s, &mut rng);
    r.orthogonal_family_distance = qspcc_maps(&psi, &targets)?.distance()?;
    Ok(r)
}

/// Residuals of the two approximate steps, worst case over `p2`: the fidelity
/// step `sqrt(1 - 1/s)` vs `1 - 1/(2s)` and the distance step
/// `sqrt(1 - (1 - 1/(2s))^2)` vs `sqrt(1/s)`.
pub fn approximation_residuals(s: usize) -> (f64, f64) {
    let sf = s as f64;
    let floor = 1.0 - 1.0 / (2.0 * sf);
    ((1.0 - 1.0 / sf).sqrt() - floor, (1.0 - floor * floor).sqrt() - (1.0 / sf).sqrt())
}

/// `P` and mutually orthogonal complements `P_i^c`, all orthogonal to `P`.
#[derive(Clone, Debug)]
pub struct ProjectorFamily {
    pub dim: usize,
    pub p: DMatrix<C64>,
    pub pc: Vec<DMatrix<C64>>,
}

impl ProjectorFamily {
    /// Random family from one Haar-random orthonormal basis.
    pub fn random<R: Rng + ?Sized>(s: usize, dim: usize, rank_p: usize, rank_c: usize, rng: &mut R) -> Result<Self, BoundsError> {
        if dim > MAX_DIM || rank_p + s * rank_c > dim {
            return Err(BoundsError::Family(format!("ranks {rank_p} + {s}x{rank_c} do not fit in dimension {dim}")));
        }
        let g = DMatrix::from_fn(dim, dim, |_, _| C64::new(rng.sample(StandardNormal), rng.sample(StandardNormal)));
        let q = g.qr().q();
        let span = |from: usize, k: usize| {
            let cols = q.columns(from, k);
            &cols * cols.adjoint()
        };
        let p = span(0, rank_p);
        let pc = (0..s).map(|i| span(rank_p + i * rank_c, rank_c)).collect();
        let fam = ProjectorFamily { dim, p, pc };
        fam.validate()?;
        Ok(fam)
    }

    pub fn projector(&self, i: usize) -> DMatrix<C64> {
        &self.p + &self.pc[i]
    }

    pub fn validate(&self) -> Result<(), BoundsError> {
        let tol = 1e-9;
        let bad = |m: &DMatrix<C64>| m.iter().map(|x| x.norm()).fold(0.0, f64::max) > tol;
        let idem = |m: &DMatrix<C64>| bad(&(m * m - m)) || bad(&(m - m.adjoint()));
        if idem(&self.p) {
            return Err(BoundsError::Family("P is not a Hermitian projector".into()));
        }
        for (i, c) in self.pc.iter().enumerate() {
            if idem(c) || bad(&(c * &self.p)) {
                return Err(BoundsError::Family(format!("P_{i}^c is not a projector orthogonal to P")));
            }
            for (j, d) in self.pc.iter().enumerate().skip(i + 1) {
                if bad(&(c * d)) {
                    return Err(BoundsError::Family(format!("P_{i}^c and P_{j}^c overlap")));
                }
                if bad(&(self.projector(i) * self.projector(j) - &self.p)) {
                    return Err(BoundsError::Family(format!("P_{i} P_{j} != P")));
                }
            }
        }
        Ok(())
    }

    /// Generalised trace distance between `P psi` and `(1/s) sum_i P_i psi psi* P_i`.
    pub fn rewind_distance(&self, psi: &[C64]) -> Result<f64, BoundsError> {
        if psi.len() != self.dim {
            return Err(BoundsError::Dimension(format!("state of length {} in dimension {}", psi.len(), self.dim)));
        }
        let rho = projector(psi);
        let a = &self.p * &rho * &self.p;
        let mut b = DMatrix::zeros(self.dim, self.dim);
        for i in 0..self.pc.len() {
            let pi = self.projector(i);
            b += &pi * &rho * &pi;
        }
        b /= C64::new(self.pc.len() as f64, 0.0);
        let (a, b) = (DensityMatrix::from_matrix_unchecked(a), DensityMatrix::from_matrix_unchecked(b));
        Ok(generalized_trace_distance(&a, &b)?)
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RewindReport {
    pub s: usize,
    pub max_dim: usize,
    pub seeds: usize,
    pub max_distance: f64,
    pub bound: f64,
}

impl RewindReport {
    pub fn pass(&self) -> bool {
        self.max_distance <= self.bound + 1e-6
    }
}

/// Random families with random ranks in dimensions up to `max_dim`, and
/// Haar-random states, one per seed.
pub fn rewind_distance_check(s: usize, max_dim: usize, seeds: usize, seed: u64) -> Result<RewindReport, BoundsError> {
    if max_dim > MAX_DIM || max_dim < s + 1 {
        return Err(BoundsError::Family(format!("dimension {max_dim} out of range for s = {s}")));
    }
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let mut max_distance: f64 = 0.0;
    for _ in 0..seeds {
        let dim = rng.gen_range(s + 1..=max_dim);
        let rank_c = rng.gen_range(1..=(dim - 1) / s);
        let rank_p = rng.gen_range(1..=dim - s * rank_c);
        let fam = ProjectorFamily::random(s, dim, rank_p, rank_c, &mut rng)?;
        let psi = haar_state(dim, &mut rng);
        max_distance = max_distance.max(fam.rewind_distance(&psi)?);
    }
    Ok(RewindReport { s, max_dim, seeds, max_distance, bound: (1.0 / s as f64).sqrt() })
}

/// One row of the classical-versus-quantum cut-and-choose comparison.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct GapRow {
    pub s: usize,
    /// Undetected-cheat rate of the one-corrupted-table attack.
    pub measured: f64,
    pub classical: f64,
    pub quantum_bound: f64,
    /// Largest state-check distance on random states, where the dimension allows it.
    pub numerical_max: Option<f64>,
}

pub fn classical_cc_gap_report(s_values: &[usize], trials: usize, states: usize, seed: u64, jobs: usize) -> Result<Vec<GapRow>, crate::harness::HarnessError> {
    use crate::harness::{monte_carlo, Scenario, ScenarioConfig};
    let mut rows = Vec::new();
    for &s in s_values {
        let st = monte_carlo(&ScenarioConfig::new(Scenario::P1OneCorrupt, s), trials, seed, jobs)?;
        let numerical_max = if s <= MAX_DIM.ilog2() as usize { qspcc_check(s, states, seed).ok().map(|r| r.max_distance) } else { None };
        rows.push(GapRow { s, measured: st.rate, classical: 1.0 / s as f64, quantum_bound: (1.0 / s as f64).sqrt(), numerical_max });
    }
    Ok(rows)
}

/// Fidelity of the two sub-normalised map outputs; equals `p2`.
pub fn qspcc_fidelity(m: &QspccMaps) -> Result<f64, BoundsError> {
    Ok(fidelity(&m.sigma1, &m.sigma2)?)
}
