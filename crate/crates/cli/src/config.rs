use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::Args;
use qcc::harness::Scenario;
use qcc::protocols::{check_s, functions::FunctionId};
use serde::{Deserialize, Serialize};

/// Environment variable that overrides the output directory.
pub const OUT_DIR_ENV: &str = "QCC_OUT_DIR";

/// Experiment parameters. Every field may come from a flag or from the JSON
/// file named by `--config`; flags win.
#[derive(Args, Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields, rename_all = "kebab-case")]
pub struct ExperimentConfig {
    /// JSON file with any of these fields.
    #[arg(long, value_name = "FILE")]
    #[serde(skip)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub scenario: Option<String>,
    #[arg(long)]
    pub f: Option<String>,
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub s: Option<usize>,
    /// Comma-separated list of s values.
    #[arg(long = "s-values", value_delimiter = ',')]
    pub s_values: Option<Vec<usize>>,
    #[arg(long)]
    pub x: Option<String>,
    #[arg(long)]
    pub y: Option<String>,
    #[arg(long)]
    pub trials: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub seeds: Option<usize>,
    #[arg(long)]
    pub lemma: Option<String>,
    #[arg(long)]
    pub dim: Option<usize>,
    #[arg(long = "delta-ft")]
    pub delta_ft: Option<u32>,
    #[arg(long)]
    pub c: Option<u32>,
    #[arg(long)]
    pub jobs: Option<usize>,
    #[arg(long = "out-dir", value_name = "DIR")]
    pub out_dir: Option<PathBuf>,
}

macro_rules! merge {
    ($a:ident, $b:ident, $($f:ident),*) => { $( if $a.$f.is_none() { $a.$f = $b.$f; } )* };
}

impl ExperimentConfig {
    /// Folds in the config file, then the output-directory override.
    pub fn resolve(mut self, env_out_dir: Option<PathBuf>) -> Result<Self> {
        if let Some(path) = self.config.clone() {
            let text = std::fs::read_to_string(&path).with_context(|| format!("reading config {}", path.display()))?;
            let file: ExperimentConfig = serde_json::from_str(&text).with_context(|| format!("parsing config {}", path.display()))?;
            merge!(self, file, scenario, f, n, s, s_values, x, y, trials, seed, seeds, lemma, dim, delta_ft, c, jobs);
            if self.out_dir.is_none() {
                self.out_dir = env_out_dir.or(file.out_dir);
            }
        } else if self.out_dir.is_none() {
            self.out_dir = env_out_dir;
        }
        Ok(self)
    }

    pub fn seed(&self) -> Result<u64> {
        self.seed.context("--seed is required")
    }

    pub fn s(&self) -> Result<usize> {
        let s = self.s.context("--s is required")?;
        check_s(s).map_err(|_| anyhow::anyhow!("s = {s} is not a power of 2 that is at least 2"))?;
        Ok(s)
    }

    pub fn s_values(&self, default: &[usize]) -> Result<Vec<usize>> {
        let v = self.s_values.clone().unwrap_or_else(|| default.to_vec());
        for &s in &v {
            check_s(s).map_err(|_| anyhow::anyhow!("s = {s} is not a power of 2 that is at least 2"))?;
        }
        Ok(v)
    }

    pub fn trials(&self, default: usize) -> Result<usize> {
        let t = self.trials.unwrap_or(default);
        if t == 0 {
            bail!("trials must be at least 1");
        }
        Ok(t)
    }

    pub fn jobs(&self) -> usize {
        self.jobs.unwrap_or(1).max(1)
    }

    pub fn function(&self) -> Result<(FunctionId, usize)> {
        let f: FunctionId = self.f.as_deref().unwrap_or("xor").parse().map_err(|e| anyhow::anyhow!("{e}"))?;
        let n = self.n.unwrap_or(1);
        if !f.supports(n) {
            bail!("function {f} does not support n = {n}");
        }
        Ok((f, n))
    }

    pub fn scenario(&self) -> Result<Scenario> {
        let id = self.scenario.as_deref().context("--scenario is required")?;
        id.parse().map_err(|e| anyhow::anyhow!("{e}"))
    }

    pub fn out_dir(&self) -> &Path {
        self.out_dir.as_deref().unwrap_or(Path::new("."))
    }
}

/// Parses `"10"` or `"1,0"` into bits of length `n`.
pub fn parse_bits(name: &str, text: Option<&str>, n: usize) -> Result<Vec<u8>> {
    let text = text.with_context(|| format!("--{name} is required"))?;
    let bits: Vec<u8> = text
        .chars()
        .filter(|c| *c != ',')
        .map(|c| match c {
            '0' => Ok(0),
            '1' => Ok(1),
            _ => bail!("--{name}: '{c}' is not a bit"),
        })
        .collect::<Result<_>>()?;
    if bits.len() != n {
        bail!("--{name} has {} bits, expected {n}", bits.len());
    }
    Ok(bits)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flags_override_file_and_env_overrides_file_dir() {
        let dir = std::env::temp_dir().join(format!("qcc-cfg-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("c.json");
        std::fs::write(&path, r#"{"s": 8, "seed": 3, "trials": 10, "out-dir": "from-file"}"#).unwrap();
        let flags = ExperimentConfig { config: Some(path.clone()), s: Some(4), ..Default::default() };
        let c = flags.clone().resolve(Some("from-env".into())).unwrap();
        assert_eq!((c.s, c.seed, c.trials), (Some(4), Some(3), Some(10)));
        assert_eq!(c.out_dir(), Path::new("from-env"));
        assert_eq!(flags.resolve(None).unwrap().out_dir(), Path::new("from-file"));
    }

    #[test]
    fn unknown_file_keys_rejected() {
        assert!(serde_json::from_str::<ExperimentConfig>(r#"{"sigma": 2}"#).is_err());
    }

    #[test]
    fn s_must_be_power_of_two() {
        for (s, ok) in [(3, false), (1, false), (0, false), (2, true), (16, true)] {
            let c = ExperimentConfig { s: Some(s), ..Default::default() };
            assert_eq!(c.s().is_ok(), ok, "s = {s}");
        }
    }

    #[test]
    fn seed_is_mandatory() {
        assert!(ExperimentConfig::default().seed().is_err());
    }

    #[test]
    fn bits_parse() {
        assert_eq!(parse_bits("x", Some("1,0"), 2).unwrap(), vec![1, 0]);
        assert_eq!(parse_bits("x", Some("01"), 2).unwrap(), vec![0, 1]);
        assert!(parse_bits("x", Some("2"), 1).is_err());
        assert!(parse_bits("x", Some("1"), 2).is_err());
    }
}
