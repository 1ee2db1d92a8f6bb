//! Command implementations. Every command first emits a `record=config`
//! echo of the fully resolved settings, so a run can be reproduced from its
//! report alone.

use crate::config::{FamilyChoice, MethodChoice, ModeChoice, RunConfig};
use anyhow::{anyhow, bail, Context, Result};
use qds::adversary::{
    forge_experiment, repudiate_experiment, two_group_experiment, AliceStrategy, ForgerStrategy,
    RepudiationMode,
};
use qds::analysis::{self, lemma_experiment};
use qds::owf::{CertifyMode, CodeSpec, DeltaCertainty, FamilyParams};
use qds::protocol::{
    self, default_c2, distributed_swap_distribute, distributed_symmetry_distribute, keygen, sign,
    trusted_center_distribute, verify, DistributionOutcome, GlobalKeyState, PrivateKeySet,
    ProtocolConfig, SignedMessage, ThresholdLadder,
};
use qds::report::{fmt_sig12, ReportRecord};
use qds::rng::{stream_rng, SimRng};
use std::fs;

pub struct Outcome {
    pub lines: Vec<String>,
    pub aborted: bool,
}

impl Outcome {
    fn ok(lines: Vec<String>) -> Self {
        Self {
            lines,
            aborted: false,
        }
    }
}

/// Builds the one-way function family (and code) for this run. Random
/// fingerprint codes are drawn from the setup stream, so the same seed
/// always yields the same code.
fn setup_family(
    cfg: &RunConfig,
    setup: &mut SimRng,
) -> Result<(FamilyParams, Option<CodeSpec>, Vec<String>)> {
    match cfg.family {
        FamilyChoice::Rotation => {
            let family = FamilyParams::single_qubit_rotation(cfg.key_bits)?;
            Ok((family, None, Vec::new()))
        }
        FamilyChoice::Fingerprint => {
            let mut warnings = Vec::new();
            let code = match &cfg.code {
                Some(path) => {
                    let text = fs::read_to_string(path)
                        .with_context(|| format!("reading code file {}", path.display()))?;
                    let code = CodeSpec::parse(&text)?;
                    if code.dimension() as u32 != cfg.key_bits {
                        bail!(
                            "code dimension {} does not match L = {}",
                            code.dimension(),
                            cfg.key_bits
                        );
                    }
                    code
                }
                None => {
                    if cfg.code_dimension as u32 != cfg.key_bits {
                        bail!(
                            "code_dimension {} must equal L = {} (or pass --code)",
                            cfg.code_dimension,
                            cfg.key_bits
                        );
                    }
                    CodeSpec::random(cfg.code_length, cfg.code_dimension, setup)?
                }
            };
            let mode = if code.dimension() <= qds::owf::MAX_EXHAUSTIVE_DIMENSION {
                CertifyMode::Exhaustive
            } else {
                CertifyMode::Sampled { pairs: 10_000 }
            };
            let family = FamilyParams::code_fingerprint_certified(&code, mode, setup)?;
            if family.delta_certainty == DeltaCertainty::Sampled {
                warnings.push(
                    ReportRecord::new("warning")
                        .push("msg", "delta-certified-by-sampling-only")
                        .to_line(),
                );
            }
            Ok((family, Some(code), warnings))
        }
    }
}

/// Resolves the threshold ladder, deriving `c2` from the forgery margin
/// when not given explicitly.
fn resolve_ladder(
    cfg: &RunConfig,
    family: &FamilyParams,
    copies: usize,
) -> Result<(ThresholdLadder, Vec<String>)> {
    if let Some(levels) = &cfg.ladder {
        return Ok((ThresholdLadder::new(levels.clone())?, Vec::new()));
    }
    let mut warnings = Vec::new();
    let c2 = match cfg.c2 {
        Some(c2) => c2,
        None => {
            let derived = default_c2(family, copies, cfg.m);
            if derived <= cfg.c1 {
                bail!(
                    "derived c2 = {derived} is not above c1 = {}; the forgery margin \
                     is vacuous for this configuration, pass --c2 explicitly",
                    cfg.c1
                );
            }
            if family.delta_certainty == DeltaCertainty::Sampled {
                warnings.push(
                    ReportRecord::new("warning")
                        .push("msg", "c2-derived-from-sampled-delta")
                        .to_line(),
                );
            }
            derived
        }
    };
    Ok((ThresholdLadder::two(cfg.c1, c2)?, warnings))
}

/// Copies in circulation for the protocol commands, fixed by the
/// distribution method unless explicitly overridden.
fn method_copies(cfg: &RunConfig) -> Result<usize> {
    let derived = match cfg.method {
        MethodChoice::TrustedCenter => cfg.t,
        MethodChoice::Swap => 4,
        MethodChoice::Symmetry => cfg.t * (cfg.t + 1),
    };
    match cfg.copies {
        None => Ok(derived),
        Some(t) if cfg.method == MethodChoice::TrustedCenter => Ok(t),
        Some(t) if t == derived => Ok(t),
        Some(t) => bail!(
            "method {} fixes T = {derived}, got T = {t}",
            cfg.method.name()
        ),
    }
}

fn recipients(cfg: &RunConfig) -> usize {
    match cfg.method {
        MethodChoice::Swap => 2,
        _ => cfg.t,
    }
}

fn config_echo(
    cfg: &RunConfig,
    family: &FamilyParams,
    copies: usize,
    ladder: &ThresholdLadder,
) -> String {
    let ladder_text = ladder
        .levels()
        .iter()
        .map(|c| fmt_sig12(*c))
        .collect::<Vec<_>>()
        .join(",");
    ReportRecord::new("config")
        .push("command", cfg.command)
        .push("family", cfg.family.name())
        .push("L", family.key_bits.to_string())
        .push("n", family.qubits.to_string())
        .push_usize("M", cfg.m)
        .push_usize("T", copies)
        .push_usize("t", cfg.t)
        .push("method", cfg.method.name())
        .push("ladder", ladder_text)
        .push("strategy", cfg.strategy.as_str())
        .push("mode", cfg.mode.name())
        .push_u64("trials", cfg.trials)
        .push_u64("seed", cfg.seed)
        .push("bit", cfg.bit.to_string())
        .push_bool("holevo_override", cfg.holevo_override)
        .push_f64("delta", family.delta)
        .push("delta_certainty", family.delta_certainty.to_string())
        .push(
            "code",
            cfg.code
                .as_ref()
                .map_or("auto".to_string(), |p| p.display().to_string()),
        )
        .push("out", cfg.out.display().to_string())
        .to_line()
}

fn protocol_config(
    cfg: &RunConfig,
    family: FamilyParams,
    code: Option<CodeSpec>,
    copies: usize,
    ladder: ThresholdLadder,
) -> Result<ProtocolConfig> {
    let config = ProtocolConfig {
        family,
        code,
        m: cfg.m,
        copies,
        ladder,
        holevo_override: cfg.holevo_override,
    };
    config.validate()?;
    Ok(config)
}

fn write_out(cfg: &RunConfig, name: &str, text: &str) -> Result<()> {
    fs::create_dir_all(&cfg.out)
        .with_context(|| format!("creating output directory {}", cfg.out.display()))?;
    let path = cfg.out.join(name);
    fs::write(&path, text).with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

fn load_keys(cfg: &RunConfig) -> Result<(PrivateKeySet, FamilyParams)> {
    let path = cfg.keys_path();
    let text = fs::read_to_string(&path).with_context(|| {
        format!(
            "reading keys file {} (run `qds keygen` first or set keys_file)",
            path.display()
        )
    })?;
    Ok(PrivateKeySet::parse(&text)?)
}

fn distribute_with_method(
    cfg: &RunConfig,
    global: &mut GlobalKeyState,
    rng: &mut SimRng,
) -> Result<DistributionOutcome> {
    Ok(match cfg.method {
        MethodChoice::TrustedCenter => trusted_center_distribute(global, cfg.t, rng)?,
        MethodChoice::Swap => distributed_swap_distribute(global, rng)?,
        MethodChoice::Symmetry => distributed_symmetry_distribute(global, cfg.t, rng)?,
    })
}

fn distribution_record(outcome: &DistributionOutcome, method: &str) -> String {
    match outcome {
        DistributionOutcome::Completed => ReportRecord::new("distribution")
            .push("method", method)
            .push("outcome", "completed")
            .to_line(),
        DistributionOutcome::Aborted { column, bit, stage } => ReportRecord::new("distribution")
            .push("method", method)
            .push("outcome", "aborted")
            .push_usize("column", *column)
            .push("bit", bit.to_string())
            .push("stage", *stage)
            .to_line(),
    }
}

pub fn cmd_keygen(cfg: &RunConfig) -> Result<Outcome> {
    let mut setup = stream_rng(cfg.seed, 0);
    let (family, code, warnings) = setup_family(cfg, &mut setup)?;
    let copies = method_copies(cfg)?;
    let (ladder, more) = resolve_ladder(cfg, &family, copies)?;
    let keys = keygen(cfg.m, cfg.key_bits, &mut setup);
    write_out(cfg, "keys.txt", &keys.to_file_string(&family))?;
    if let Some(code) = &code {
        write_out(cfg, "code.txt", &code.to_file_string())?;
    }
    let mut lines = vec![config_echo(cfg, &family, copies, &ladder)];
    lines.extend(warnings);
    lines.extend(more);
    lines.push(
        ReportRecord::new("keys")
            .push("file", cfg.keys_path().display().to_string())
            .push_usize("M", keys.m())
            .push("L", keys.key_bits().to_string())
            .to_line(),
    );
    Ok(Outcome::ok(lines))
}

pub fn cmd_family_info(cfg: &RunConfig) -> Result<Outcome> {
    let mut setup = stream_rng(cfg.seed, 0);
    let (family, code, warnings) = setup_family(cfg, &mut setup)?;
    let copies = method_copies(cfg)?;
    let (ladder, more) = resolve_ladder(cfg, &family, copies)?;
    let guessable =
        analysis::expected_guessed_keys(family.key_bits, family.qubits, copies, 2 * cfg.m);
    let mut lines = vec![config_echo(cfg, &family, copies, &ladder)];
    lines.extend(warnings);
    lines.extend(more);
    let mut rec = ReportRecord::new("family")
        .push("kind", family.kind.to_string())
        .push("L", family.key_bits.to_string())
        .push("n", family.qubits.to_string())
        .push_f64("delta", family.delta)
        .push("delta_certainty", family.delta_certainty.to_string())
        .push_usize("holevo_budget_bits", copies * family.qubits)
        .push_bool("within_holevo_budget", family.within_holevo_budget(copies))
        .push_f64("expected_guessed_keys", guessable)
        .push_f64(
            "c2_bound",
            protocol::choose_c2_bound(family.delta, guessable.min(cfg.m as f64), cfg.m),
        );
    if let Some(code) = &code {
        rec = rec
            .push_usize("code_length", code.length())
            .push_usize("code_dimension", code.dimension());
        if let Some(d) = code.min_distance() {
            rec = rec.push_usize("min_distance", d);
        }
    }
    lines.push(rec.to_line());
    Ok(Outcome::ok(lines))
}

pub fn cmd_distribute(cfg: &RunConfig) -> Result<Outcome> {
    let mut setup = stream_rng(cfg.seed, 0);
    let (family, code, warnings) = setup_family(cfg, &mut setup)?;
    let copies = method_copies(cfg)?;
    let (ladder, more) = resolve_ladder(cfg, &family, copies)?;
    let keys = keygen(cfg.m, cfg.key_bits, &mut setup);
    let config = protocol_config(cfg, family.clone(), code, copies, ladder.clone())?;
    let mut global = protocol::make_public_keys(&keys, &config)?;
    let mut rng = stream_rng(cfg.seed, 1);
    let outcome = distribute_with_method(cfg, &mut global, &mut rng)?;

    write_out(cfg, "keys.txt", &keys.to_file_string(&family))?;
    let mut states = String::new();
    for (state, slots) in global.iter_blocks() {
        let labels: Vec<String> = slots.iter().map(|s| s.label()).collect();
        states.push_str(&format!("block {}\n", labels.join(",")));
        states.push_str(&state.dump());
    }
    write_out(cfg, "states.txt", &states)?;

    let mut lines = vec![config_echo(cfg, &family, copies, &ladder)];
    lines.extend(warnings);
    lines.extend(more);
    lines.push(distribution_record(&outcome, cfg.method.name()));
    Ok(Outcome {
        lines,
        aborted: !outcome.completed(),
    })
}

pub fn cmd_sign(cfg: &RunConfig) -> Result<Outcome> {
    let (keys, family) = load_keys(cfg)?;
    let copies = method_copies(cfg)?;
    let (ladder, warnings) = resolve_ladder(cfg, &family, copies)?;
    let msg = sign(cfg.bit == 1, &keys);
    write_out(cfg, "signature.txt", &msg.to_file_string())?;
    let mut lines = vec![config_echo(cfg, &family, copies, &ladder)];
    lines.extend(warnings);
    lines.push(
        ReportRecord::new("signature")
            .push("file", cfg.signature_path().display().to_string())
            .push("bit", cfg.bit.to_string())
            .push_usize("columns", msg.columns())
            .to_line(),
    );
    Ok(Outcome::ok(lines))
}

/// Rebuilds the honest pipeline (same seed, same code) and verifies a stored
/// signature for every recipient.
pub fn cmd_verify(cfg: &RunConfig) -> Result<Outcome> {
    let (keys, family) = load_keys(cfg)?;
    let sig_path = cfg.signature_path();
    let text = fs::read_to_string(&sig_path)
        .with_context(|| format!("reading signature file {}", sig_path.display()))?;
    let msg = SignedMessage::parse(&text)?;
    if msg.columns() != keys.m() {
        bail!(
            "signature covers {} columns but the key set has {}",
            msg.columns(),
            keys.m()
        );
    }
    let mut setup = stream_rng(cfg.seed, 0);
    let code = match cfg.family {
        FamilyChoice::Fingerprint => setup_family(cfg, &mut setup)?.1,
        FamilyChoice::Rotation => None,
    };
    let copies = method_copies(cfg)?;
    let (ladder, warnings) = resolve_ladder(cfg, &family, copies)?;
    let config = protocol_config(cfg, family.clone(), code, copies, ladder.clone())?;
    let mut global = protocol::make_public_keys(&keys, &config)?;
    let mut rng = stream_rng(cfg.seed, 1);
    let outcome = distribute_with_method(cfg, &mut global, &mut rng)?;
    let mut lines = vec![config_echo(cfg, &family, copies, &ladder)];
    lines.extend(warnings);
    lines.push(distribution_record(&outcome, cfg.method.name()));
    if !outcome.completed() {
        return Ok(Outcome {
            lines,
            aborted: true,
        });
    }
    for recipient in 0..recipients(cfg) {
        let (tally, verdict) = verify(&mut global, recipient, &msg, &config, &mut rng)?;
        lines.push(format!("record=verdict {}", tally.report_line(verdict)));
    }
    Ok(Outcome::ok(lines))
}

pub fn cmd_run_honest(cfg: &RunConfig) -> Result<Outcome> {
    let mut setup = stream_rng(cfg.seed, 0);
    let (family, code, warnings) = setup_family(cfg, &mut setup)?;
    let copies = method_copies(cfg)?;
    let (ladder, more) = resolve_ladder(cfg, &family, copies)?;
    let keys = keygen(cfg.m, cfg.key_bits, &mut setup);
    let config = protocol_config(cfg, family.clone(), code, copies, ladder.clone())?;
    let mut global = protocol::make_public_keys(&keys, &config)?;
    let mut rng = stream_rng(cfg.seed, 1);
    let outcome = distribute_with_method(cfg, &mut global, &mut rng)?;

    write_out(cfg, "keys.txt", &keys.to_file_string(&family))?;
    let mut lines = vec![config_echo(cfg, &family, copies, &ladder)];
    lines.extend(warnings);
    lines.extend(more);
    lines.push(distribution_record(&outcome, cfg.method.name()));
    if !outcome.completed() {
        return Ok(Outcome {
            lines,
            aborted: true,
        });
    }
    let msg = sign(cfg.bit == 1, &keys);
    write_out(cfg, "signature.txt", &msg.to_file_string())?;
    for recipient in 0..recipients(cfg) {
        let (tally, verdict) = verify(&mut global, recipient, &msg, &config, &mut rng)?;
        lines.push(format!("record=verdict {}", tally.report_line(verdict)));
    }
    Ok(Outcome::ok(lines))
}

fn forger_strategy(cfg: &RunConfig, copies: usize) -> Result<ForgerStrategy> {
    match cfg.strategy.as_str() {
        "random-guess" => Ok(ForgerStrategy::RandomGuess),
        "measure-then-guess" => Ok(ForgerStrategy::measure_all_computational(copies)),
        other => bail!("unknown forger strategy `{other}` (random-guess|measure-then-guess)"),
    }
}

fn alice_strategy(cfg: &RunConfig) -> Result<AliceStrategy> {
    match cfg.strategy.as_str() {
        "honest" => Ok(AliceStrategy::honest(cfg.m)),
        "symmetric-pair" => Ok(AliceStrategy::symmetric_pair(cfg.m)),
        "type2-minus" => Ok(AliceStrategy::type2_minus(cfg.affected, cfg.m)),
        "type1-crossed" => Ok(AliceStrategy::type1_crossed(cfg.m)),
        other => bail!(
            "unknown sender strategy `{other}` \
             (honest|symmetric-pair|type2-minus|type1-crossed)"
        ),
    }
}

fn repudiation_mode(cfg: &RunConfig) -> RepudiationMode {
    match cfg.mode {
        ModeChoice::Exact => RepudiationMode::ExactConvolution,
        ModeChoice::MonteCarlo => RepudiationMode::MonteCarlo { trials: cfg.trials },
    }
}

pub fn cmd_attack_forge(cfg: &RunConfig) -> Result<Outcome> {
    let mut setup = stream_rng(cfg.seed, 0);
    let (family, code, warnings) = setup_family(cfg, &mut setup)?;
    let copies = cfg.copies.unwrap_or(match cfg.family {
        FamilyChoice::Rotation => 4,
        FamilyChoice::Fingerprint => 1,
    });
    let (ladder, more) = resolve_ladder(cfg, &family, copies)?;
    let config = protocol_config(cfg, family.clone(), code, copies, ladder.clone())?;
    let strategy = forger_strategy(cfg, copies)?;
    let report = forge_experiment(&config, &strategy, cfg.trials, cfg.seed)?;
    let mut lines = vec![config_echo(cfg, &family, copies, &ladder)];
    lines.extend(warnings);
    lines.extend(more);
    lines.push(format!("record=attack {}", report.report_line()));
    Ok(Outcome::ok(lines))
}

pub fn cmd_attack_repudiate(cfg: &RunConfig) -> Result<Outcome> {
    let mut setup = stream_rng(cfg.seed, 0);
    let (family, code, warnings) = setup_family(cfg, &mut setup)?;
    let copies = 4;
    let (ladder, more) = resolve_ladder(cfg, &family, copies)?;
    let config = protocol_config(cfg, family.clone(), code, copies, ladder.clone())?;
    let strategy = if cfg.strategy == "random-guess" {
        // The shared default names a forger strategy; pick the canonical
        // repudiation example instead.
        AliceStrategy::symmetric_pair(cfg.m)
    } else {
        alice_strategy(cfg)?
    };
    let report = repudiate_experiment(&config, &strategy, repudiation_mode(cfg), cfg.seed)?;
    let mut lines = vec![config_echo(cfg, &family, copies, &ladder)];
    lines.extend(warnings);
    lines.extend(more);
    lines.push(format!("record=attack {}", report.report_line()));
    Ok(Outcome::ok(lines))
}

pub fn cmd_attack_two_group(cfg: &RunConfig) -> Result<Outcome> {
    let mut setup = stream_rng(cfg.seed, 0);
    let (family, code, warnings) = setup_family(cfg, &mut setup)?;
    let copies = 11;
    let (ladder, more) = resolve_ladder(cfg, &family, copies)?;
    let config = protocol_config(cfg, family.clone(), code, copies, ladder.clone())?;
    let strategy = if cfg.strategy == "random-guess" {
        AliceStrategy::symmetric_pair(cfg.m)
    } else {
        alice_strategy(cfg)?
    };
    let report = two_group_experiment(&config, &strategy, repudiation_mode(cfg), cfg.seed)?;
    let mut lines = vec![config_echo(cfg, &family, copies, &ladder)];
    lines.extend(warnings);
    lines.extend(more);
    lines.push(format!("record=attack {}", report.report_line()));
    Ok(Outcome::ok(lines))
}

pub fn cmd_lemma_check(cfg: &RunConfig) -> Result<Outcome> {
    let mut rng = stream_rng(cfg.seed, 0);
    let report = lemma_experiment(
        cfg.m,
        cfg.affected,
        cfg.delta,
        cfg.samples,
        cfg.trials_per_state,
        &mut rng,
    )
    .map_err(|e| anyhow!("lemma experiment: {e}"))?;
    let mut rec = ReportRecord::new("lemma")
        .push_usize("M", report.m)
        .push_usize("r", report.r)
        .push_f64("Delta", report.delta)
        .push_usize("samples", report.samples)
        .push_f64("max_tail", report.max_tail)
        .push_f64("mean_tail", report.mean_tail)
        .push_f64("bound", report.bound)
        .push_bool("satisfied", report.satisfied)
        .push_bool("vacuous", report.vacuous)
        .push_usize("terms_exact", report.term_count)
        .push_f64("terms_assumed", report.term_count_approx);
    if let Some(dev) = report.empirical_max_deviation {
        rec = rec.push_f64("empirical_max_deviation", dev);
    }
    let config_line = ReportRecord::new("config")
        .push("command", cfg.command)
        .push_usize("M", cfg.m)
        .push_usize("r", cfg.affected)
        .push_f64("Delta", cfg.delta)
        .push_usize("samples", cfg.samples)
        .push_usize("trials_per_state", cfg.trials_per_state)
        .push_u64("seed", cfg.seed)
        .push("out", cfg.out.display().to_string())
        .to_line();
    Ok(Outcome::ok(vec![config_line, rec.to_line()]))
}
