//! Run configuration: defaults, config-file parsing, and flag overrides.
//!
//! Config files are line-based `key = value` text with `#` comments and no
//! nesting. Precedence is defaults < config file < explicit flags.

use anyhow::{anyhow, bail, Result};
use std::path::PathBuf;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FamilyChoice {
    Rotation,
    Fingerprint,
}

impl FamilyChoice {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "rotation" => Ok(FamilyChoice::Rotation),
            "fingerprint" => Ok(FamilyChoice::Fingerprint),
            other => bail!("unknown family `{other}` (rotation|fingerprint)"),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            FamilyChoice::Rotation => "rotation",
            FamilyChoice::Fingerprint => "fingerprint",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MethodChoice {
    TrustedCenter,
    Swap,
    Symmetry,
}

impl MethodChoice {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "trusted-center" => Ok(MethodChoice::TrustedCenter),
            "swap" => Ok(MethodChoice::Swap),
            "symmetry" => Ok(MethodChoice::Symmetry),
            other => bail!("unknown method `{other}` (trusted-center|swap|symmetry)"),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            MethodChoice::TrustedCenter => "trusted-center",
            MethodChoice::Swap => "swap",
            MethodChoice::Symmetry => "symmetry",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModeChoice {
    Exact,
    MonteCarlo,
}

impl ModeChoice {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "exact" => Ok(ModeChoice::Exact),
            "mc" => Ok(ModeChoice::MonteCarlo),
            other => bail!("unknown mode `{other}` (exact|mc)"),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            ModeChoice::Exact => "exact",
            ModeChoice::MonteCarlo => "mc",
        }
    }
}

/// Unresolved settings gathered from one source.
#[derive(Debug, Clone, Default)]
pub struct PartialConfig {
    pub family: Option<FamilyChoice>,
    pub key_bits: Option<u32>,
    pub m: Option<usize>,
    pub copies: Option<usize>,
    pub t: Option<usize>,
    pub c1: Option<f64>,
    pub c2: Option<f64>,
    pub ladder: Option<Vec<f64>>,
    pub code: Option<PathBuf>,
    pub code_length: Option<usize>,
    pub code_dimension: Option<usize>,
    pub strategy: Option<String>,
    pub mode: Option<ModeChoice>,
    pub trials: Option<u64>,
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub holevo_override: Option<bool>,
    pub method: Option<MethodChoice>,
    pub bit: Option<u8>,
    pub affected: Option<usize>,
    pub delta: Option<f64>,
    pub samples: Option<usize>,
    pub trials_per_state: Option<usize>,
    pub keys_file: Option<PathBuf>,
    pub signature_file: Option<PathBuf>,
}

impl PartialConfig {
    /// Parses the `key = value` config format; unknown keys are rejected
    /// with their line number.
    pub fn from_file_text(text: &str) -> Result<Self> {
        let mut cfg = PartialConfig::default();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| anyhow!("line {}: expected `key = value`", lineno + 1))?;
            let key = key.trim();
            let value = value.trim();
            let ctx = |what: &str| anyhow!("line {}: bad {what} `{value}`", lineno + 1);
            match key {
                "family" => cfg.family = Some(FamilyChoice::parse(value)?),
                "L" => cfg.key_bits = Some(value.parse().map_err(|_| ctx("L"))?),
                "M" => cfg.m = Some(value.parse().map_err(|_| ctx("M"))?),
                "T" => cfg.copies = Some(value.parse().map_err(|_| ctx("T"))?),
                "t" => cfg.t = Some(value.parse().map_err(|_| ctx("t"))?),
                "c1" => cfg.c1 = Some(value.parse().map_err(|_| ctx("c1"))?),
                "c2" => cfg.c2 = Some(value.parse().map_err(|_| ctx("c2"))?),
                "ladder" => cfg.ladder = Some(parse_ladder(value).map_err(|_| ctx("ladder"))?),
                "code" => cfg.code = Some(PathBuf::from(value)),
                "code_length" => {
                    cfg.code_length = Some(value.parse().map_err(|_| ctx("code_length"))?)
                }
                "code_dimension" => {
                    cfg.code_dimension = Some(value.parse().map_err(|_| ctx("code_dimension"))?)
                }
                "strategy" => cfg.strategy = Some(value.to_string()),
                "mode" => cfg.mode = Some(ModeChoice::parse(value)?),
                "trials" => cfg.trials = Some(value.parse().map_err(|_| ctx("trials"))?),
                "seed" => cfg.seed = Some(value.parse().map_err(|_| ctx("seed"))?),
                "out" => cfg.out = Some(PathBuf::from(value)),
                "holevo_override" => {
                    cfg.holevo_override = Some(value.parse().map_err(|_| ctx("holevo_override"))?)
                }
                "method" => cfg.method = Some(MethodChoice::parse(value)?),
                "bit" => cfg.bit = Some(parse_bit(value).map_err(|_| ctx("bit"))?),
                "r" => cfg.affected = Some(value.parse().map_err(|_| ctx("r"))?),
                "delta" => cfg.delta = Some(value.parse().map_err(|_| ctx("delta"))?),
                "samples" => cfg.samples = Some(value.parse().map_err(|_| ctx("samples"))?),
                "trials_per_state" => {
                    cfg.trials_per_state = Some(value.parse().map_err(|_| ctx("trials_per_state"))?)
                }
                "keys_file" => cfg.keys_file = Some(PathBuf::from(value)),
                "signature_file" => cfg.signature_file = Some(PathBuf::from(value)),
                other => bail!("line {}: unknown key `{other}`", lineno + 1),
            }
        }
        Ok(cfg)
    }

    /// Later sources win.
    pub fn overlay(mut self, over: PartialConfig) -> PartialConfig {
        macro_rules! take {
            ($($field:ident),*) => {
                $(if over.$field.is_some() { self.$field = over.$field; })*
            };
        }
        take!(
            family,
            key_bits,
            m,
            copies,
            t,
            c1,
            c2,
            ladder,
            code,
            code_length,
            code_dimension,
            strategy,
            mode,
            trials,
            seed,
            out,
            holevo_override,
            method,
            bit,
            affected,
            delta,
            samples,
            trials_per_state,
            keys_file,
            signature_file
        );
        self
    }
}

pub fn parse_ladder(s: &str) -> Result<Vec<f64>> {
    s.split(',')
        .map(|p| {
            p.trim()
                .parse::<f64>()
                .map_err(|_| anyhow!("bad ladder entry `{p}`"))
        })
        .collect()
}

pub fn parse_bit(s: &str) -> Result<u8> {
    match s {
        "0" => Ok(0),
        "1" => Ok(1),
        _ => bail!("bit must be 0 or 1"),
    }
}

/// Fully resolved run settings.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub command: &'static str,
    pub family: FamilyChoice,
    pub key_bits: u32,
    pub m: usize,
    /// Explicit `T` if given; commands derive the effective value otherwise.
    pub copies: Option<usize>,
    pub t: usize,
    pub c1: f64,
    pub c2: Option<f64>,
    pub ladder: Option<Vec<f64>>,
    pub code: Option<PathBuf>,
    pub code_length: usize,
    pub code_dimension: usize,
    pub strategy: String,
    pub mode: ModeChoice,
    pub trials: u64,
    pub seed: u64,
    pub out: PathBuf,
    pub holevo_override: bool,
    pub method: MethodChoice,
    pub bit: u8,
    pub affected: usize,
    pub delta: f64,
    pub samples: usize,
    pub trials_per_state: usize,
    pub keys_file: Option<PathBuf>,
    pub signature_file: Option<PathBuf>,
}

impl RunConfig {
    pub fn resolve(command: &'static str, merged: PartialConfig) -> Result<Self> {
        let family = merged.family.unwrap_or(FamilyChoice::Rotation);
        // The two-group topology circulates 11 copies per key; the default
        // rotation key length rises to keep the information budget intact.
        let default_bits = match (family, command) {
            (FamilyChoice::Rotation, "attack-two-group") => 16,
            (FamilyChoice::Rotation, _) => 8,
            (FamilyChoice::Fingerprint, _) => 10,
        };
        let key_bits = merged.key_bits.unwrap_or(default_bits);
        if key_bits == 0 || key_bits > 64 {
            bail!("L must be in 1..=64");
        }
        let m = merged.m.unwrap_or(16);
        if m == 0 {
            bail!("M must be >= 1");
        }
        // Fingerprint keys are wide (n = 6 for the default [32,10] code), so
        // more than one circulating copy already leaks the whole key; the
        // family defaults to a single-recipient trusted-center session.
        let t = merged.t.unwrap_or(match family {
            FamilyChoice::Rotation => 2,
            FamilyChoice::Fingerprint => 1,
        });
        if t == 0 {
            bail!("t must be >= 1");
        }
        let trials = merged.trials.unwrap_or(10_000);
        if trials == 0 {
            bail!("trials must be >= 1");
        }
        if let Some(ladder) = &merged.ladder {
            if merged.c1.is_some() || merged.c2.is_some() {
                bail!("give either --ladder or --c1/--c2, not both");
            }
            if ladder.is_empty() {
                bail!("ladder must not be empty");
            }
        }
        Ok(RunConfig {
            command,
            family,
            key_bits,
            m,
            copies: merged.copies,
            t,
            c1: merged.c1.unwrap_or(0.0),
            c2: merged.c2,
            ladder: merged.ladder,
            code: merged.code,
            code_length: merged.code_length.unwrap_or(32),
            code_dimension: merged.code_dimension.unwrap_or(10),
            strategy: merged.strategy.unwrap_or_else(|| "random-guess".into()),
            mode: merged.mode.unwrap_or(ModeChoice::Exact),
            trials,
            seed: merged.seed.unwrap_or(0),
            out: merged.out.unwrap_or_else(|| PathBuf::from("out")),
            holevo_override: merged.holevo_override.unwrap_or(false),
            method: merged.method.unwrap_or(match family {
                FamilyChoice::Rotation => MethodChoice::Swap,
                FamilyChoice::Fingerprint => MethodChoice::TrustedCenter,
            }),
            bit: merged.bit.unwrap_or(0),
            affected: merged.affected.unwrap_or(1),
            delta: merged.delta.unwrap_or(0.25),
            samples: merged.samples.unwrap_or(200),
            trials_per_state: merged.trials_per_state.unwrap_or(0),
            keys_file: merged.keys_file,
            signature_file: merged.signature_file,
        })
    }

    pub fn keys_path(&self) -> PathBuf {
        self.keys_file
            .clone()
            .unwrap_or_else(|| self.out.join("keys.txt"))
    }

    pub fn signature_path(&self) -> PathBuf {
        self.signature_file
            .clone()
            .unwrap_or_else(|| self.out.join("signature.txt"))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_file_round_trip() {
        let text = "\
# comment
M = 8
family = fingerprint
ladder = 0,0.25
seed = 42
";
        let cfg = PartialConfig::from_file_text(text).unwrap();
        assert_eq!(cfg.m, Some(8));
        assert_eq!(cfg.family, Some(FamilyChoice::Fingerprint));
        assert_eq!(cfg.ladder, Some(vec![0.0, 0.25]));
        assert_eq!(cfg.seed, Some(42));
    }

    #[test]
    fn unknown_keys_rejected_with_line() {
        let err = PartialConfig::from_file_text("M = 8\nbogus = 1\n").unwrap_err();
        assert!(err.to_string().contains("line 2"));
    }

    #[test]
    fn empty_file_gives_defaults() {
        let merged = PartialConfig::from_file_text("").unwrap();
        let cfg = RunConfig::resolve("run-honest", merged).unwrap();
        assert_eq!(cfg.m, 16);
        assert_eq!(cfg.key_bits, 8);
        assert_eq!(cfg.seed, 0);
        assert_eq!(cfg.method, MethodChoice::Swap);
    }

    #[test]
    fn flags_override_file() {
        let file = PartialConfig::from_file_text("M = 8\n").unwrap();
        let flags = PartialConfig {
            m: Some(4),
            ..Default::default()
        };
        let cfg = RunConfig::resolve("run-honest", file.overlay(flags)).unwrap();
        assert_eq!(cfg.m, 4);
    }
}
