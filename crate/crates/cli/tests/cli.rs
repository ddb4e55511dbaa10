// SPDX-License-Identifier: Apache-2.0

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_fsm-harden"))
}

fn fsm(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../core/fsms")
        .join(name)
}

fn run(cmd: &mut Command) -> Output {
    cmd.output().expect("spawn fsm-harden")
}

fn harden(src: &str, level: u32, out: &Path) -> Output {
    run(bin()
        .args([
            "harden",
            "--seed",
            "1",
            "--level",
            &level.to_string(),
            "--fsm",
        ])
        .arg(fsm(src))
        .arg("--out")
        .arg(out))
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn harden_writes_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let o = harden("fig2.json", 2, dir.path());
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(String::from_utf8_lossy(&o.stdout).contains("self-check"));
    for f in [
        "netlist.json",
        "netlist.v",
        "codebook.json",
        "hardening_report.json",
        "fsm.json",
    ] {
        assert!(dir.path().join(f).exists(), "{f}");
    }
    let r = json(&dir.path().join("hardening_report.json"));
    assert_eq!(r["protection_level"], 2);
    assert!(r["blocks"].as_u64().unwrap() >= 1);
    // four declared edges plus implicit holds on S0, S1 and S3
    assert_eq!(r["edges"].as_array().unwrap().len(), 7);
    assert!(r["edges"][0]["modifier"].is_string());
}

#[test]
fn level_one_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let o = harden("fig2.json", 1, dir.path());
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("N >= 2"));
}

#[test]
fn missing_file_is_io_error() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(bin()
        .args(["harden", "--fsm", "/nonexistent/machine.json", "--out"])
        .arg(dir.path()));
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn inject_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    assert!(harden("reference14.json", 2, dir.path()).status.success());
    let net = dir.path().join("netlist.json");

    let o = run(bin()
        .args([
            "inject",
            "--scope",
            "inputs",
            "--max-faults",
            "1",
            "--exhaustive",
            "--netlist",
        ])
        .arg(&net));
    assert_eq!(
        o.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&o.stdout)
    );
    let r = json(&dir.path().join("report.json"));
    assert_eq!(r["hijack"], 0);

    let report = dir.path().join("double.json");
    let o = run(bin()
        .args([
            "inject",
            "--scope",
            "inputs",
            "--max-faults",
            "2",
            "--cycles",
            "0:4",
            "--netlist",
        ])
        .arg(&net)
        .arg("--out")
        .arg(&report));
    assert_eq!(o.status.code(), Some(1));
    assert!(json(&report)["hijack"].as_u64().unwrap() > 0);
}

#[test]
fn inject_diffusion_partition() {
    let dir = tempfile::tempdir().unwrap();
    assert!(harden("reference14.json", 2, dir.path()).status.success());
    let o = run(bin()
        .args([
            "inject",
            "--scope",
            "diffusion",
            "--effects",
            "flip",
            "--exhaustive",
            "--netlist",
        ])
        .arg(dir.path().join("netlist.json")));
    assert!(o.status.code().is_some());
    let r = json(&dir.path().join("report.json"));
    let total = r["total"].as_u64().unwrap();
    assert!(total > 0);
    assert_eq!(
        r["masked"].as_u64().unwrap()
            + r["detected"].as_u64().unwrap()
            + r["hijack"].as_u64().unwrap(),
        total
    );
}

#[test]
fn sampled_inject_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    assert!(harden("reference14.json", 2, dir.path()).status.success());
    let net = dir.path().join("netlist.json");
    let mut reports = Vec::new();
    for (i, extra) in [&[][..], &["--sequential"][..]].iter().enumerate() {
        let out = dir.path().join(format!("s{i}.json"));
        let o = run(bin()
            .args([
                "inject",
                "--scope",
                "all",
                "--effects",
                "flip,stuck1",
                "--max-faults",
                "2",
            ])
            .args(["--sample", "2000", "--seed", "5"])
            .args(*extra)
            .arg("--netlist")
            .arg(&net)
            .arg("--out")
            .arg(&out));
        assert!(o.status.code().is_some());
        reports.push(std::fs::read(&out).unwrap());
    }
    assert_eq!(reports[0], reports[1]);
}

#[test]
fn simulate_matches_plain_machine() {
    let dir = tempfile::tempdir().unwrap();
    assert!(harden("reference14.json", 3, dir.path()).status.success());
    let trace = dir.path().join("trace.json");
    let a = |s: u8, v: u8, d: u8| format!(r#"{{"start":{s},"valid":{v},"done":{d},"abort":0}}"#);
    std::fs::write(
        &trace,
        format!(
            "[{},{},{},{},{}]",
            a(1, 1, 0),
            a(0, 1, 0),
            a(0, 1, 0),
            a(0, 0, 1),
            a(0, 0, 1)
        ),
    )
    .unwrap();
    let sim = |target: PathBuf| -> Value {
        let o = run(bin()
            .arg("simulate")
            .arg("--target")
            .arg(target)
            .arg("--trace")
            .arg(&trace));
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        serde_json::from_slice(&o.stdout).unwrap()
    };
    let hard = sim(dir.path().join("netlist.json"));
    let spec = sim(fsm("reference14.json"));
    assert_eq!(hard["states"], spec["states"]);
    assert_eq!(hard["outputs"], spec["outputs"]);
    assert!(hard["alert"].as_array().unwrap().iter().all(|v| v == 0));
}

#[test]
fn simulate_empty_and_unknown_signal() {
    let dir = tempfile::tempdir().unwrap();
    let empty = dir.path().join("empty.json");
    std::fs::write(&empty, "[]").unwrap();
    let o = run(bin()
        .arg("simulate")
        .arg("--target")
        .arg(fsm("reference14.kiss2"))
        .arg("--trace")
        .arg(&empty));
    assert!(o.status.success());
    let v: Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["states"].as_array().unwrap().len(), 1);

    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, r#"[{"bogus":1}]"#).unwrap();
    let o = run(bin()
        .arg("simulate")
        .arg("--target")
        .arg(fsm("reference14.json"))
        .arg("--trace")
        .arg(&bad));
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("bogus"));
}

#[test]
fn harden_is_deterministic() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    assert!(harden("reference14.json", 2, a.path()).status.success());
    assert!(harden("reference14.json", 2, b.path()).status.success());
    for f in [
        "netlist.json",
        "netlist.v",
        "codebook.json",
        "hardening_report.json",
    ] {
        assert_eq!(
            std::fs::read(a.path().join(f)).unwrap(),
            std::fs::read(b.path().join(f)).unwrap(),
            "{f}"
        );
    }
}
