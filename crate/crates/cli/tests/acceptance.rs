//! Acceptance criteria, one PASS/FAIL line each. Exits non-zero if any fails.

use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use qcc::bounds::{epsilon2, epsilon2_exponent, qspcc_check, rewind_distance_check};
use qcc::harness::simulators::{simulate_covert_p1, simulate_malicious_p2};
use qcc::harness::strategies::{ScriptedInput, SubstituteP2};
use qcc::harness::{attack_leaky_trap, monte_carlo, wilson, DetectionStats, Scenario, ScenarioConfig};
use qcc::mbqc::{delta_row, gate_pattern, run_pattern_with_state, Gate, MeasurementPattern};
use qcc::protocols::functions::FunctionId;
use qcc::protocols::{run_2pqc, HonestP1, HonestP2, Outcome};
use qcc::qsim::{overlap_sq, Angle8, C64};

const JOBS: usize = 1;

struct Report {
    failures: usize,
}

impl Report {
    fn line(&mut self, id: usize, name: &str, ok: bool, detail: String) {
        self.failures += !ok as usize;
        println!("{} {id:>2} {name}: {detail}", if ok { "PASS" } else { "FAIL" });
    }
}

/// Expected value inside the z = 3 Wilson interval.
fn within3(st: &DetectionStats, p: f64) -> (bool, String) {
    let (lo, hi) = wilson(st.events, st.trials, 3.0);
    (lo <= p && p <= hi, format!("{}/{} = {:.4}, 3σ Wilson [{lo:.4}, {hi:.4}] vs {p:.4}", st.events, st.trials, st.rate))
}

fn c(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

fn unitary(g: Gate) -> Vec<Vec<C64>> {
    let s = std::f64::consts::FRAC_1_SQRT_2;
    let (o, z) = (c(1.0, 0.0), c(0.0, 0.0));
    match g {
        Gate::I => vec![vec![o, z], vec![z, o]],
        Gate::H => vec![vec![c(s, 0.0), c(s, 0.0)], vec![c(s, 0.0), c(-s, 0.0)]],
        Gate::T => vec![vec![o, z], vec![z, c(s, s)]],
        Gate::Cnot => {
            // Index = control + 2 * target.
            let mut m = vec![vec![z; 4]; 4];
            for k in 0..4usize {
                let (ctl, tgt) = (k & 1, k >> 1);
                m[ctl + 2 * (tgt ^ ctl)][k] = o;
            }
            m
        }
    }
}

/// Worst overlap of the pattern's output with `U|k>` over basis inputs `k`,
/// global phase included through the Choi state.
fn gate_fidelity(p: &MeasurementPattern, u: &[Vec<C64>], seed: u64) -> f64 {
    let m = p.graph.inputs().len();
    let d = 1usize << m;
    let mut worst: f64 = 1.0;
    for k in 0..d {
        let mut psi = vec![c(0.0, 0.0); d];
        psi[k] = c(1.0, 0.0);
        let out = run_pattern_with_state(p, &[], Some((&psi, &[])), seed).unwrap().output_state;
        let col: Vec<C64> = u.iter().map(|row| row[k]).collect();
        worst = worst.min(overlap_sq(&col, &out));
    }
    let mut phi = vec![c(0.0, 0.0); d * d];
    let mut want = vec![c(0.0, 0.0); d * d];
    for k in 0..d {
        phi[k + (k << m)] = c(1.0 / (d as f64).sqrt(), 0.0);
        for j in 0..d {
            want[j + (k << m)] = u[j][k] / (d as f64).sqrt();
        }
    }
    let refs: Vec<usize> = (0..m).map(|k| 1000 + k).collect();
    let run = run_pattern_with_state(p, &[], Some((&phi, &refs)), seed).unwrap();
    worst.min(overlap_sq(&want, &run.output_state))
}

fn crit1(r: &mut Report) {
    let t = Instant::now();
    let mut worst: f64 = 1.0;
    for g in [Gate::I, Gate::H, Gate::T, Gate::Cnot] {
        let (p, u) = (gate_pattern(g), unitary(g));
        for seed in 0..16 {
            worst = worst.min(gate_fidelity(&p, &u, seed));
        }
    }
    let el = t.elapsed();
    r.line(1, "gate semantics", worst >= 1.0 - 1e-9 && el < Duration::from_secs(5), format!("min fidelity {worst:.12}, {:.2}s", el.as_secs_f64()));
}

fn crit2(r: &mut Report) {
    let mut ok = true;
    for phi in Angle8::all() {
        for idx in 0..4 {
            let mut counts = [0usize; 8];
            for theta in Angle8::all() {
                for rb in 0..2 {
                    counts[delta_row(phi, theta, rb)[idx].value() as usize] += 1;
                }
            }
            ok &= counts.iter().all(|&n| n == 2);
        }
    }
    r.line(2, "blindness", ok, "8 angles x 4 signal pairs, every δ exactly 2 of 16".into());
}

fn crit3(r: &mut Report) {
    let t = Instant::now();
    let (mut runs, mut bad) = (0, 0);
    for f in [FunctionId::Xor, FunctionId::And] {
        let circuit = f.circuit(1).unwrap();
        for s in [2, 4] {
            for (x, y) in [(0u8, 0u8), (0, 1), (1, 0), (1, 1)] {
                for seed in 0..100u64 {
                    let run = run_2pqc(&circuit, &mut HonestP1, &mut HonestP2::new(seed ^ 0xa5a5), &[x], &[y], s, seed).unwrap();
                    let (o1, o2) = f.outputs(&[x], &[y]);
                    runs += 1;
                    bad += !matches!(run.outcome.outcome, Outcome::Outputs { ref out1, ref out2 } if *out1 == o1 && *out2 == o2) as usize;
                }
            }
        }
    }
    let el = t.elapsed();
    r.line(3, "honest 2PQC", bad == 0 && el < Duration::from_secs(120), format!("{runs} runs, {bad} wrong or aborted, {:.1}s", el.as_secs_f64()));
}

fn crit4(r: &mut Report) {
    let st = monte_carlo(&ScenarioConfig::new(Scenario::QspOneState, 4), 2000, 4004, JOBS).unwrap();
    let (ok, d) = within3(&st, 0.75);
    r.line(4, "state cut-and-choose catch rate", ok, d);
}

fn crit5(r: &mut Report) {
    let mut ok = true;
    let mut parts = Vec::new();
    for s in [4, 8, 16] {
        let st = monte_carlo(&ScenarioConfig::new(Scenario::P1OneCorrupt, s), 2000, 5000 + s as u64, JOBS).unwrap();
        let (o, _) = within3(&st, 1.0 / s as f64);
        ok &= o;
        parts.push(format!("s={s} {:.4} vs {:.4}", st.rate, 1.0 / s as f64));
    }
    let two = monte_carlo(&ScenarioConfig::new(Scenario::P1TwoCorrupt, 4), 1000, 5002, JOBS).unwrap();
    ok &= two.undetected_cheats == 0;
    parts.push(format!("two tables undetected {}/{}", two.undetected_cheats, two.trials));
    r.line(5, "instruction cut-and-choose", ok, parts.join("; "));
}

fn crit6(r: &mut Report) {
    let cfg = ScenarioConfig::new(Scenario::P2FlipOne, 4);
    let base = &cfg.f.circuit(cfg.n).unwrap().base;
    let (n, e) = (base.num_vertices() as f64, base.edges().len() as f64);
    // White primaries and black added vertices are the traps.
    let census = (n + e) / (3.0 * n + 9.0 * e);
    let st = monte_carlo(&cfg, 2000, 6006, JOBS).unwrap();
    let (ok, d) = within3(&st, census);
    r.line(6, "trap detection", ok && (st.expected - census).abs() < 1e-12, d);
}

fn crit7(r: &mut Report) {
    let q = qspcc_check(4, 200, 7007).unwrap();
    let ok = q.max_distance <= 0.5 + 1e-6 && q.orthogonal_family_distance >= 0.25 - 1e-9 && q.p1_violations == 0;
    r.line(
        7,
        "state-check map bound",
        ok,
        format!("max Δ {:.6} ≤ 0.5, orthogonal family {:.12} ≥ 0.25, p1 violations {}", q.max_distance, q.orthogonal_family_distance, q.p1_violations),
    );
}

fn crit8(r: &mut Report) {
    let mut ok = true;
    let mut parts = Vec::new();
    for s in [2, 4, 8] {
        let rep = rewind_distance_check(s, 32, 200, 8000 + s as u64).unwrap();
        ok &= rep.pass();
        parts.push(format!("s={s} {:.6} ≤ {:.6}", rep.max_distance, rep.bound));
    }
    r.line(8, "rewinding lemma", ok, parts.join("; "));
}

fn crit9(r: &mut Report) {
    let mut ok = epsilon2(8, 1) == (8.0f64 / 9.0).powi(2) && epsilon2_exponent(8, 1) == 2;
    for c in 1..=5 {
        for d in 1..20 {
            ok &= epsilon2(d + 1, c) <= epsilon2(d, c) && epsilon2(d, c + 1) >= epsilon2(d, c);
        }
    }
    r.line(9, "epsilon2 formula", ok, format!("epsilon2(8,1) = {:.12}, 20x5 grid monotone", epsilon2(8, 1)));
}

/// One-sample KS test against Geometric(p) on {1, 2, ...}; asymptotic p-value.
fn ks_geometric(samples: &[usize], p: f64) -> (f64, f64) {
    let mut v = samples.to_vec();
    v.sort_unstable();
    let n = v.len() as f64;
    let cdf = |k: usize| 1.0 - (1.0 - p).powi(k as i32);
    let mut d: f64 = 0.0;
    let max = *v.last().unwrap();
    for k in 1..=max {
        let below = v.partition_point(|&x| x < k) as f64 / n;
        let upto = v.partition_point(|&x| x <= k) as f64 / n;
        d = d.max((upto - cdf(k)).abs()).max((below - cdf(k - 1)).abs());
    }
    let lambda = (n.sqrt() + 0.12 + 0.11 / n.sqrt()) * d;
    let q: f64 = (1..=100).map(|j| 2.0 * (-1f64).powi(j - 1) * (-2.0 * (j as f64).powi(2) * lambda * lambda).exp()).sum();
    (d, q.clamp(0.0, 1.0))
}

fn crit10(r: &mut Report) {
    // Scripted P1 adversaries: each substitutes a fixed input for the real one.
    let mut scripts: Vec<(FunctionId, usize, Vec<u8>, Vec<u8>)> = Vec::new();
    for xh in [[0u8, 0], [0, 1], [1, 0], [1, 1]] {
        scripts.push((FunctionId::Xor, 2, xh.to_vec(), vec![xh[0] ^ 1, xh[1]]));
    }
    for f in [FunctionId::Xor, FunctionId::And, FunctionId::Nand] {
        for xh in [0u8, 1] {
            scripts.push((f, 1, vec![xh], vec![xh ^ 1]));
        }
    }
    let mut recovered = 0;
    for (i, (f, n, xh, x)) in scripts.iter().enumerate() {
        let circuit = f.circuit(*n).unwrap();
        let y = vec![1u8; *n];
        let ideal = |a: &[u8]| f.outputs(a, &y).0;
        let sim = simulate_covert_p1(&circuit, Box::new(ScriptedInput { x_hat: xh.clone() }), x, &ideal, 4, 100 + i as u64).unwrap();
        recovered += (sim.x_hat.as_ref() == Some(xh)) as usize;
    }

    let s = 8;
    let xor = FunctionId::Xor.circuit(1).unwrap();
    let mut restarts = Vec::new();
    for seed in 0..1000u64 {
        let y = [(seed & 1) as u8];
        let ideal = |yh: &[u8]| FunctionId::Xor.outputs(&[0], yh).1;
        let sim = simulate_malicious_p2(&xor, Box::new(SubstituteP2::new(None, None, seed)), &y, &ideal, s, seed).unwrap();
        restarts.push(sim.restarts);
    }
    let mean = restarts.iter().sum::<usize>() as f64 / restarts.len() as f64;
    let sd = ((1.0 - 1.0 / s as f64) * (s * s) as f64 / restarts.len() as f64).sqrt();
    let (ks_d, ks_p) = ks_geometric(&restarts, 1.0 / s as f64);

    let and = FunctionId::And.circuit(1).unwrap();
    let mut decrypted = 0;
    let mut total = 0;
    for (x, y) in [(0u8, 0u8), (0, 1), (1, 0), (1, 1)] {
        for seed in 0..100u64 {
            let ideal = |yh: &[u8]| FunctionId::And.outputs(&[x], yh).1;
            let sim = simulate_malicious_p2(&and, Box::new(SubstituteP2::new(None, None, seed)), &[y], &ideal, 4, seed).unwrap();
            let want = FunctionId::And.outputs(&[x], &sim.y_hat).1;
            total += 1;
            decrypted += (sim.y_hat == [y] && matches!(sim.outcome.outcome, Outcome::Outputs { ref out2, .. } if *out2 == want)) as usize;
        }
    }
    let ok = recovered == scripts.len() && (mean - s as f64).abs() <= 3.0 * sd && ks_p > 0.001 && decrypted == total;
    r.line(
        10,
        "simulators",
        ok,
        format!(
            "extractor {recovered}/{}; restarts mean {mean:.3} vs {s} ± {:.3} (3σ), KS D = {ks_d:.4} p = {ks_p:.3}; fake graph {decrypted}/{total}",
            scripts.len(),
            3.0 * sd
        ),
    );
}

fn crit11(r: &mut Report) {
    let mut ok = true;
    let mut parts = Vec::new();
    for s in [4, 16] {
        let st = attack_leaky_trap(s, 2000, 11_000 + s as u64, JOBS, true).unwrap();
        let (o, _) = within3(&st, 1.0 / s as f64);
        ok &= o;
        parts.push(format!("s={s} {:.4} vs {:.4}", st.rate, 1.0 / s as f64));
    }
    r.line(11, "leaky-trap attack", ok, parts.join("; "));
}

fn qcc(args: &[&str], out_dir: &Path) -> Vec<u8> {
    let o = Command::new(env!("CARGO_BIN_EXE_qcc")).args(args).env("QCC_OUT_DIR", out_dir).output().expect("binary runs");
    assert!(o.status.success(), "{args:?}: {}", String::from_utf8_lossy(&o.stderr));
    o.stdout
}

/// All files under `dir`, sorted by name.
fn snapshot(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut v: Vec<_> = std::fs::read_dir(dir).unwrap().map(|e| e.unwrap()).map(|e| (e.file_name().to_string_lossy().into_owned(), std::fs::read(e.path()).unwrap())).collect();
    v.sort();
    v
}

fn crit12(r: &mut Report) {
    let commands: Vec<Vec<&str>> = vec![
        vec!["run-protocol", "--f", "and", "--x", "1", "--y", "1", "--s", "4", "--seed", "12"],
        vec!["attack-sim", "--scenario", "p2-flip-one", "--s", "4", "--trials", "50", "--seed", "12"],
        vec!["attack-sim", "--scenario", "leaky-trap", "--s", "4", "--trials", "50", "--seed", "12", "--jobs", "2"],
        vec!["check-bounds", "--lemma", "qspcc", "--s", "4", "--seeds", "50", "--seed", "12"],
        vec!["check-bounds", "--lemma", "rewind", "--s", "4", "--seeds", "50", "--seed", "12"],
        vec!["check-bounds", "--lemma", "epsilon2", "--delta-ft", "8", "--c", "1"],
        vec!["gap-report", "--s-values", "2,4", "--trials", "100", "--seeds", "20", "--seed", "12"],
        vec!["scenarios"],
    ];
    let run_all = |dir: &Path| -> Vec<Vec<u8>> {
        let mut outs: Vec<Vec<u8>> = commands.iter().map(|a| qcc(a, dir)).collect();
        let t = dir.join("and1-s4-seed12.transcript.jsonl");
        let s = dir.join("and1-s4-seed12.summary.json");
        outs.push(qcc(&["replay-transcript", "--transcript", t.to_str().unwrap(), "--summary", s.to_str().unwrap()], dir));
        for o in &mut outs {
            *o = String::from_utf8_lossy(o).replace(&dir.display().to_string(), "<out>").into_bytes();
        }
        outs
    };
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let (oa, ob) = (run_all(a.path()), run_all(b.path()));
    let (fa, fb) = (snapshot(a.path()), snapshot(b.path()));
    let replayed = String::from_utf8_lossy(oa.last().unwrap()).contains("byte for byte");
    r.line(12, "determinism", oa == ob && fa == fb && replayed, format!("{} commands, {} output files identical across two runs", oa.len(), fa.len()));
}

fn main() {
    let mut r = Report { failures: 0 };
    let criteria: [fn(&mut Report); 12] = [crit1, crit2, crit3, crit4, crit5, crit6, crit7, crit8, crit9, crit10, crit11, crit12];
    for c in criteria {
        c(&mut r);
    }
    println!("{} of 12 criteria passed", 12 - r.failures);
    if r.failures > 0 {
        std::process::exit(1);
    }
}
