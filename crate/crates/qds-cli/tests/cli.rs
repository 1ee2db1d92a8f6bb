//! End-to-end checks of the `qds` binary: exit codes, record output,
//! reproducibility, and the file formats it writes.

use std::path::Path;
use std::process::{Command, Output};

fn qds(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_qds"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

#[test]
fn run_honest_defaults_accepts_for_both_recipients() {
    let dir = tempdir("honest");
    let out = qds(&dir, &["run-honest"]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let text = stdout(&out);
    assert!(text.starts_with("record=config command=run-honest"));
    let verdicts: Vec<&str> = text
        .lines()
        .filter(|l| l.starts_with("record=verdict"))
        .collect();
    assert_eq!(verdicts.len(), 2);
    for line in verdicts {
        assert!(line.contains("s=0"), "{line}");
        assert!(line.ends_with("verdict=1-ACC"), "{line}");
    }
    assert!(dir.join("out/report.txt").exists());
    assert!(dir.join("out/keys.txt").exists());
    assert!(dir.join("out/signature.txt").exists());
}

#[test]
fn output_is_byte_identical_for_fixed_seed() {
    let dir = tempdir("determinism");
    let first = qds(&dir, &["run-honest", "--seed", "7", "--out", "a"]);
    let second = qds(&dir, &["run-honest", "--seed", "7", "--out", "b"]);
    assert_eq!(
        stdout(&first).replace("out=a", ""),
        stdout(&second).replace("out=b", "")
    );
    let _third = qds(&dir, &["run-honest", "--seed", "8", "--out", "c"]);
    assert_ne!(
        std::fs::read_to_string(dir.join("a/keys.txt")).unwrap(),
        std::fs::read_to_string(dir.join("c/keys.txt")).unwrap()
    );
}

#[test]
fn bad_ladder_is_a_config_error() {
    let dir = tempdir("ladder");
    let out = qds(&dir, &["run-honest", "--c1", "0.3", "--c2", "0.2"]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("thresholds"), "{err}");
}

#[test]
fn holevo_violation_requires_override() {
    let dir = tempdir("holevo");
    let out = qds(&dir, &["run-honest", "--L", "4", "--c2", "0.5"]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("holevo_override"), "{err}");
    let out = qds(
        &dir,
        &["run-honest", "--L", "4", "--c2", "0.5", "--holevo-override"],
    );
    assert!(out.status.success());
}

#[test]
fn config_file_applies_and_rejects_unknown_keys() {
    let dir = tempdir("cfgfile");
    std::fs::write(dir.join("run.cfg"), "M = 4\nseed = 3\nc2 = 0.5\n").unwrap();
    let out = qds(&dir, &["run-honest", "--config", "run.cfg"]);
    assert!(out.status.success());
    assert!(stdout(&out).contains(" M=4 "));
    assert!(stdout(&out).contains("seed=3"));

    std::fs::write(dir.join("bad.cfg"), "M = 4\nwhatever = 1\n").unwrap();
    let out = qds(&dir, &["run-honest", "--config", "bad.cfg"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("line 2"));
}

#[test]
fn keygen_sign_verify_pipeline() {
    let dir = tempdir("pipeline");
    let out = qds(&dir, &["keygen", "--M", "4", "--seed", "11"]);
    assert!(out.status.success());
    let out = qds(&dir, &["sign", "--bit", "1", "--seed", "11"]);
    assert!(out.status.success());
    let sig = std::fs::read_to_string(dir.join("out/signature.txt")).unwrap();
    assert!(sig.starts_with("signature 1 4"));
    let out = qds(&dir, &["verify", "--M", "4", "--seed", "11"]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let text = stdout(&out);
    assert_eq!(
        text.lines().filter(|l| l.contains("verdict=1-ACC")).count(),
        2
    );
}

#[test]
fn exact_repudiation_record_matches_closed_form() {
    let dir = tempdir("repudiate");
    let out = qds(
        &dir,
        &[
            "attack-repudiate",
            "--strategy",
            "symmetric-pair",
            "--M",
            "8",
            "--c2",
            "0.25",
            "--mode",
            "exact",
        ],
    );
    assert!(out.status.success());
    let text = stdout(&out);
    assert!(
        text.contains("estimate=3.05175781250e-5"),
        "missing closed-form estimate: {text}"
    );
    assert!(text.contains("trials=exact"));
}

#[test]
fn lemma_check_reports_bound_and_tail() {
    let dir = tempdir("lemma");
    let out = qds(
        &dir,
        &[
            "lemma-check",
            "--M",
            "12",
            "--r",
            "2",
            "--delta",
            "0.25",
            "--samples",
            "20",
        ],
    );
    assert!(out.status.success());
    let text = stdout(&out);
    assert!(text.contains("record=lemma M=12 r=2"));
    assert!(text.contains("satisfied=true"));
}

#[test]
fn fingerprint_runs_and_distribute_writes_states() {
    let dir = tempdir("fingerprint");
    // Family defaults: trusted center, one recipient, one copy in
    // circulation.
    let out = qds(&dir, &["run-honest", "--family", "fingerprint", "--M", "4"]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let text = stdout(&out);
    assert!(text.contains("method=trusted-center"));
    assert!(text.contains("verdict=1-ACC"));

    let out = qds(&dir, &["distribute", "--M", "2", "--out", "dist"]);
    assert!(out.status.success());
    let states = std::fs::read_to_string(dir.join("dist/states.txt")).unwrap();
    assert!(states.contains("block c0b0s0"));
    assert!(states.contains("layout "));
}

fn tempdir(tag: &str) -> std::path::PathBuf {
    let dir = std::env::temp_dir().join(format!("qds-cli-test-{tag}-{}", std::process::id()));
    let _ = std::fs::remove_dir_all(&dir);
    std::fs::create_dir_all(&dir).unwrap();
    dir
}
