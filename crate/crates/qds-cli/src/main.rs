//! `qds` — reproducible experiments on a one-time quantum digital signature
//! protocol: honest runs, key distribution, forging and repudiation attacks,
//! and the tail-bound check behind the transferability argument.
//!
//! Every run prints machine-parseable `record=...` lines (also written to
//! `<out>/report.txt`) and is byte-identical for a fixed seed and
//! configuration. Exit status: 0 on success, 1 on protocol abort, 2 on
//! configuration errors.

mod commands;
mod config;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use config::{FamilyChoice, MethodChoice, ModeChoice, PartialConfig, RunConfig};
use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(
    name = "qds",
    version,
    about = "Simulator for a one-time quantum digital signature protocol"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Default)]
struct CommonArgs {
    /// Config file in `key = value` format; flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Master seed; per-trial streams derive from it by trial index.
    #[arg(long)]
    seed: Option<u64>,
    /// Monte Carlo trials.
    #[arg(long)]
    trials: Option<u64>,
    /// Output directory for keys, signatures, states, and report.txt.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Allow configurations where T*n >= L.
    #[arg(long)]
    holevo_override: bool,
    /// Key family: rotation | fingerprint.
    #[arg(long)]
    family: Option<String>,
    /// Private-key bit length.
    #[arg(long = "L")]
    key_bits: Option<u32>,
    /// Key pairs per message bit (the security parameter).
    #[arg(long = "M")]
    m: Option<usize>,
    /// Copies of each public key in circulation.
    #[arg(long = "T")]
    copies: Option<usize>,
    /// Recipient count.
    #[arg(long)]
    t: Option<usize>,
    /// Acceptance threshold c1 (default 0).
    #[arg(long)]
    c1: Option<f64>,
    /// Rejection threshold c2 (default: 0.8x the forgery margin bound).
    #[arg(long)]
    c2: Option<f64>,
    /// Full threshold ladder `c1,c2,...` (overrides --c1/--c2).
    #[arg(long)]
    ladder: Option<String>,
    /// Code file for the fingerprint family (random [32,10] otherwise).
    #[arg(long)]
    code: Option<PathBuf>,
    /// Attack strategy name.
    #[arg(long)]
    strategy: Option<String>,
    /// Attack evaluation mode: exact | mc.
    #[arg(long)]
    mode: Option<String>,
    /// Distribution method: trusted-center | swap | symmetry.
    #[arg(long)]
    method: Option<String>,
    /// Message bit to sign.
    #[arg(long)]
    bit: Option<String>,
    /// Affected key columns (type2-minus strategy) or lemma weight cap r.
    #[arg(long)]
    r: Option<usize>,
    /// Lemma deviation parameter Delta.
    #[arg(long)]
    delta: Option<f64>,
    /// Lemma sample count.
    #[arg(long)]
    samples: Option<usize>,
    /// Optional empirical shots per sampled lemma state.
    #[arg(long)]
    trials_per_state: Option<usize>,
    /// Private-key file (default <out>/keys.txt).
    #[arg(long)]
    keys_file: Option<PathBuf>,
    /// Signature file (default <out>/signature.txt).
    #[arg(long)]
    signature_file: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Generate private keys and write them to the output directory.
    Keygen(CommonArgs),
    /// Print the key family's parameters and security margins.
    FamilyInfo(CommonArgs),
    /// Build honest public keys and run the chosen distribution method.
    Distribute(CommonArgs),
    /// Sign a bit with stored private keys.
    Sign(CommonArgs),
    /// Re-run the honest pipeline and verify a stored signature.
    Verify(CommonArgs),
    /// Full honest session: keygen, distribute, sign, verify.
    RunHonest(CommonArgs),
    /// Forging experiment against an information-bounded Eve.
    AttackForge(CommonArgs),
    /// Repudiation experiment with the distributed swap test.
    AttackRepudiate(CommonArgs),
    /// Two-group symmetry-test experiment (Bob bridging Charlie and Diane).
    AttackTwoGroup(CommonArgs),
    /// Tail-bound experiment for low-minus-weight superpositions.
    LemmaCheck(CommonArgs),
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Keygen(_) => "keygen",
            Command::FamilyInfo(_) => "family-info",
            Command::Distribute(_) => "distribute",
            Command::Sign(_) => "sign",
            Command::Verify(_) => "verify",
            Command::RunHonest(_) => "run-honest",
            Command::AttackForge(_) => "attack-forge",
            Command::AttackRepudiate(_) => "attack-repudiate",
            Command::AttackTwoGroup(_) => "attack-two-group",
            Command::LemmaCheck(_) => "lemma-check",
        }
    }

    fn args(&self) -> &CommonArgs {
        match self {
            Command::Keygen(a)
            | Command::FamilyInfo(a)
            | Command::Distribute(a)
            | Command::Sign(a)
            | Command::Verify(a)
            | Command::RunHonest(a)
            | Command::AttackForge(a)
            | Command::AttackRepudiate(a)
            | Command::AttackTwoGroup(a)
            | Command::LemmaCheck(a) => a,
        }
    }
}

fn args_to_partial(args: &CommonArgs) -> Result<PartialConfig> {
    Ok(PartialConfig {
        family: args
            .family
            .as_deref()
            .map(FamilyChoice::parse)
            .transpose()?,
        key_bits: args.key_bits,
        m: args.m,
        copies: args.copies,
        t: args.t,
        c1: args.c1,
        c2: args.c2,
        ladder: args
            .ladder
            .as_deref()
            .map(config::parse_ladder)
            .transpose()?,
        code: args.code.clone(),
        code_length: None,
        code_dimension: None,
        strategy: args.strategy.clone(),
        mode: args.mode.as_deref().map(ModeChoice::parse).transpose()?,
        trials: args.trials,
        seed: args.seed,
        out: args.out.clone(),
        holevo_override: if args.holevo_override {
            Some(true)
        } else {
            None
        },
        method: args
            .method
            .as_deref()
            .map(MethodChoice::parse)
            .transpose()?,
        bit: args.bit.as_deref().map(config::parse_bit).transpose()?,
        affected: args.r,
        delta: args.delta,
        samples: args.samples,
        trials_per_state: args.trials_per_state,
        keys_file: args.keys_file.clone(),
        signature_file: args.signature_file.clone(),
    })
}

fn run(command: &Command) -> Result<commands::Outcome> {
    let args = command.args();
    let mut merged = PartialConfig::default();
    if let Some(path) = &args.config {
        let text = fs::read_to_string(path)
            .with_context(|| format!("reading config file {}", path.display()))?;
        merged = merged.overlay(PartialConfig::from_file_text(&text)?);
    }
    merged = merged.overlay(args_to_partial(args)?);
    let cfg = RunConfig::resolve(command.name(), merged)?;
    let outcome = match command {
        Command::Keygen(_) => commands::cmd_keygen(&cfg)?,
        Command::FamilyInfo(_) => commands::cmd_family_info(&cfg)?,
        Command::Distribute(_) => commands::cmd_distribute(&cfg)?,
        Command::Sign(_) => commands::cmd_sign(&cfg)?,
        Command::Verify(_) => commands::cmd_verify(&cfg)?,
        Command::RunHonest(_) => commands::cmd_run_honest(&cfg)?,
        Command::AttackForge(_) => commands::cmd_attack_forge(&cfg)?,
        Command::AttackRepudiate(_) => commands::cmd_attack_repudiate(&cfg)?,
        Command::AttackTwoGroup(_) => commands::cmd_attack_two_group(&cfg)?,
        Command::LemmaCheck(_) => commands::cmd_lemma_check(&cfg)?,
    };
    let report = outcome.lines.join("\n") + "\n";
    fs::create_dir_all(&cfg.out)
        .with_context(|| format!("creating output directory {}", cfg.out.display()))?;
    fs::write(cfg.out.join("report.txt"), &report).context("writing report.txt")?;
    print!("{report}");
    Ok(outcome)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli.command) {
        Ok(outcome) => {
            if outcome.aborted {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            }
        }
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(2)
        }
    }
}
