use std::io::Write;
use std::path::Path;

use anyhow::{bail, Context, Result};
use qcc::bounds::{self, approximation_residuals, epsilon2, epsilon2_exponent};
use qcc::harness::{monte_carlo, registry, ScenarioConfig};
use qcc::protocols::{run_2pqc, HonestP1, HonestP2, Outcome, SessionOutcome, Transcript};
use serde::{Deserialize, Serialize};

use crate::config::{parse_bits, ExperimentConfig};
use crate::output::{csv_text, fmt12, json_line, json_pretty, write_file};

/// What `run-protocol` records next to the transcript; enough to replay it.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub session: String,
    pub f: String,
    pub n: usize,
    pub x: Vec<u8>,
    pub y: Vec<u8>,
    pub s: usize,
    pub seed: u64,
    pub messages: usize,
    pub outcome: SessionOutcome,
    pub transcript: String,
}

/// P2's honest-strategy seed, derived from the session seed.
fn p2_seed(seed: u64) -> u64 {
    qcc::harness::derive_seed(seed, u64::MAX)
}

fn session_run(f: &str, n: usize, x: &[u8], y: &[u8], s: usize, seed: u64) -> Result<(SessionOutcome, Transcript)> {
    let f: qcc::protocols::functions::FunctionId = f.parse().map_err(|e| anyhow::anyhow!("{e}"))?;
    let circuit = f.circuit(n)?;
    let run = run_2pqc(&circuit, &mut HonestP1, &mut HonestP2::new(p2_seed(seed)), x, y, s, seed)?;
    Ok((run.outcome, run.transcript))
}

fn describe(o: &Outcome) -> String {
    let bits = |v: &[u8]| v.iter().map(|b| b.to_string()).collect::<String>();
    match o {
        Outcome::Outputs { out1, out2 } => format!("outputs ({}, {})", bits(out1), bits(out2)),
        Outcome::Abort { party, reason } => format!("abort by {party:?}: {}", reason.code()),
    }
}

pub fn run_protocol(c: &ExperimentConfig, out: &mut dyn Write) -> Result<()> {
    let (f, n) = c.function()?;
    let (s, seed) = (c.s()?, c.seed()?);
    let x = parse_bits("x", c.x.as_deref(), n)?;
    let y = parse_bits("y", c.y.as_deref(), n)?;
    let (outcome, transcript) = session_run(&f.to_string(), n, &x, &y, s, seed)?;
    let session = transcript.messages.first().map(|m| m.session.clone()).unwrap_or_default();
    let name = format!("{session}.transcript.jsonl");
    write_file(c.out_dir(), &name, &transcript.to_jsonl())?;
    let summary = RunSummary { session: session.clone(), f: f.to_string(), n, x, y, s, seed, messages: transcript.messages.len(), outcome, transcript: name.clone() };
    write_file(c.out_dir(), &format!("{session}.summary.json"), &json_pretty(&summary))?;
    writeln!(out, "session {session}: {} after {} messages", describe(&summary.outcome.outcome), summary.messages)?;
    writeln!(out, "transcript {}", c.out_dir().join(&name).display())?;
    Ok(())
}

pub fn attack_sim(c: &ExperimentConfig, out: &mut dyn Write) -> Result<()> {
    let scenario = c.scenario()?;
    let (f, n) = c.function()?;
    let (s, seed, trials) = (c.s()?, c.seed()?, c.trials(2000)?);
    let cfg = ScenarioConfig { scenario, f, n, s };
    let st = monte_carlo(&cfg, trials, seed, c.jobs())?;
    let name = format!("attack-{scenario}-{}-s{s}-t{trials}-seed{seed}.jsonl", st.f);
    write_file(c.out_dir(), &name, &json_line(&st))?;
    let verdict = if st.within_sigma(3.0) { "PASS" } else { "FAIL" };
    writeln!(
        out,
        "{scenario} s={s} trials={trials}: {} rate = {} (95% [{}, {}]) expected {}: {verdict}",
        st.event,
        fmt12(st.rate),
        fmt12(st.wilson95.0),
        fmt12(st.wilson95.1),
        fmt12(st.expected)
    )?;
    Ok(())
}

fn pass(b: bool) -> &'static str {
    if b { "PASS" } else { "FAIL" }
}

pub fn check_bounds(c: &ExperimentConfig, out: &mut dyn Write) -> Result<()> {
    let lemma = c.lemma.as_deref().unwrap_or("qspcc");
    let dir = c.out_dir();
    match lemma {
        "epsilon2" => {
            let (d, k) = (c.delta_ft.unwrap_or(8), c.c.unwrap_or(1));
            if d == 0 || k == 0 {
                bail!("delta-ft and c must be positive");
            }
            let v = epsilon2(d, k);
            let rows = vec![vec![d.to_string(), k.to_string(), epsilon2_exponent(d, k).to_string(), fmt12(v)]];
            write_file(dir, &format!("bounds-epsilon2-d{d}-c{k}.csv"), &csv_text(&["delta_ft", "c", "d", "epsilon2"], &rows))?;
            writeln!(out, "epsilon2(delta_ft={d}, c={k}) = (8/9)^{} = {}", epsilon2_exponent(d, k), fmt12(v))?;
        }
        "qspcc" => {
            let (s, seed, states) = (c.s()?, c.seed()?, c.seeds.unwrap_or(200));
            let r = bounds::qspcc_check(s, states, seed)?;
            let stem = format!("bounds-qspcc-s{s}-n{states}-seed{seed}");
            write_file(dir, &format!("{stem}.json"), &json_pretty(&r))?;
            let rows: Vec<Vec<String>> = [2usize, 4, 8, 16]
                .iter()
                .map(|&t| {
                    let (rf, rd) = approximation_residuals(t);
                    vec![t.to_string(), fmt12(rf), fmt12(rd)]
                })
                .collect();
            write_file(dir, &format!("{stem}-residuals.csv"), &csv_text(&["s", "fidelity_step", "distance_step"], &rows))?;
            writeln!(out, "max Δ = {} ≤ {}: {}", fmt12(r.max_distance), fmt12(r.bound), pass(r.max_distance <= r.bound + 1e-6))?;
            writeln!(out, "p1 bound violations = {}: {}", r.p1_violations, pass(r.p1_violations == 0))?;
            writeln!(out, "max Δ̃ - sqrt(1 - F̃²) = {}: {}", fmt12(r.max_dtilde_excess), pass(r.max_dtilde_excess <= 1e-6))?;
            let floor = if s >= 4 { pass(r.ftilde_chain_holds()) } else { "LOGGED" };
            writeln!(out, "min F̃ = {} vs 1 - 1/(2s) = {}: {floor}", fmt12(r.min_ftilde), fmt12(r.ftilde_floor))?;
            writeln!(out, "one orthogonal subsystem Δ = {}", fmt12(r.orthogonal_family_distance))?;
        }
        "rewind" => {
            let (s, seed, seeds, dim) = (c.s()?, c.seed()?, c.seeds.unwrap_or(200), c.dim.unwrap_or(32));
            let r = bounds::rewind_distance_check(s, dim, seeds, seed)?;
            write_file(dir, &format!("bounds-rewind-s{s}-d{dim}-n{seeds}-seed{seed}.json"), &json_pretty(&r))?;
            writeln!(out, "max Δ̃ = {} ≤ √(1/{s}) = {}: {}", fmt12(r.max_distance), fmt12(r.bound), pass(r.pass()))?;
        }
        other => bail!("unknown lemma '{other}' (expected epsilon2, qspcc or rewind)"),
    }
    Ok(())
}

pub fn gap_report(c: &ExperimentConfig, out: &mut dyn Write) -> Result<()> {
    let s_values = c.s_values(&[4, 16, 64])?;
    let (seed, trials, states) = (c.seed()?, c.trials(2000)?, c.seeds.unwrap_or(200));
    let rows = bounds::classical_cc_gap_report(&s_values, trials, states, seed, c.jobs())?;
    let cells: Vec<Vec<String>> = rows
        .iter()
        .map(|r| vec![r.s.to_string(), fmt12(r.measured), fmt12(r.classical), fmt12(r.quantum_bound), r.numerical_max.map(fmt12).unwrap_or_else(|| "-".into())])
        .collect();
    let header = ["s", "measured", "1/s", "1/sqrt(s)", "numerical_max"];
    let widths: Vec<usize> = (0..header.len()).map(|i| cells.iter().map(|r| r[i].len()).chain([header[i].len()]).max().unwrap_or(0)).collect();
    let line = |r: &[String]| r.iter().zip(&widths).map(|(c, w)| format!("{c:>w$}")).collect::<Vec<_>>().join("  ");
    let mut table = line(&header.map(String::from));
    table.push('\n');
    for r in &cells {
        table.push_str(&line(r));
        table.push('\n');
    }
    let stem = format!("gap-t{trials}-seed{seed}");
    write_file(c.out_dir(), &format!("{stem}.txt"), &table)?;
    write_file(c.out_dir(), &format!("{stem}.csv"), &csv_text(&header, &cells))?;
    write_file(c.out_dir(), &format!("{stem}.json"), &json_pretty(&rows))?;
    write!(out, "{table}")?;
    Ok(())
}

pub fn replay(transcript: &Path, summary: Option<&Path>, out: &mut dyn Write) -> Result<()> {
    let text = std::fs::read_to_string(transcript).with_context(|| format!("reading {}", transcript.display()))?;
    let t = Transcript::from_jsonl(&text).map_err(|e| anyhow::anyhow!("{}: {e}", transcript.display()))?;
    let grammar = t.check_grammar();
    writeln!(out, "{} messages, grammar {}", t.messages.len(), match &grammar {
        Ok(()) => "ok".to_string(),
        Err(e) => format!("violated: {e}"),
    })?;
    if let Some(path) = summary {
        let s: RunSummary = serde_json::from_str(&std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?)
            .with_context(|| format!("parsing {}", path.display()))?;
        let (outcome, again) = session_run(&s.f, s.n, &s.x, &s.y, s.s, s.seed)?;
        let fresh = again.to_jsonl();
        if fresh == text && outcome == s.outcome {
            writeln!(out, "replay reproduced {} byte for byte: {}", s.session, describe(&outcome.outcome))?;
        } else {
            let at = fresh.lines().zip(text.lines()).position(|(a, b)| a != b).unwrap_or_else(|| fresh.lines().count().min(text.lines().count()));
            writeln!(out, "replay diverged at message {at}")?;
        }
    }
    Ok(())
}

pub fn scenarios(out: &mut dyn Write) -> Result<()> {
    for info in registry() {
        write!(out, "{}", json_line(&info))?;
    }
    Ok(())
}
