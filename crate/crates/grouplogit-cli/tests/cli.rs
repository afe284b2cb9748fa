//! End-to-end tests of the command-line surface: exit codes, config
//! validation, file round trips.

use std::path::Path;
use std::process::Command;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_grouplogit"))
}

fn run_ok(args: &[&str]) -> std::process::Output {
    let out = bin().args(args).output().expect("binary runs");
    assert!(
        out.status.success(),
        "command {:?} failed:\nstdout: {}\nstderr: {}",
        args,
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

#[test]
fn simulate_then_fit_roundtrip() {
    let dir = tempfile::tempdir().unwrap();
    let sim = dir.path().join("sim");
    run_ok(&[
        "--out",
        sim.to_str().unwrap(),
        "--seed",
        "9",
        "simulate",
        "--n",
        "30",
        "--p",
        "4",
        "--group-size",
        "1",
        "--s0",
        "1",
        "--m",
        "2",
    ]);
    for f in ["design.csv", "groups.csv", "response.csv", "truth.json", "config_echo.toml", "manifest.json"] {
        assert!(sim.join(f).exists(), "missing {f}");
    }
    let fit = dir.path().join("fit");
    run_ok(&[
        "--config",
        sim.join("config_echo.toml").to_str().unwrap(),
        "--out",
        fit.to_str().unwrap(),
        "fit",
        "--n-iter",
        "4000",
        "--burn-in",
        "1000",
        "--chains",
        "1",
        "--lambda-override",
        "4.0",
    ]);
    let summary: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(fit.join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["inclusion"].as_array().unwrap().len(), 4);
    assert!(fit.join("chain_1.csv").exists());
    // The simulated truth was carried through, so distances are present.
    assert!(summary["distances"].is_object());
}

#[test]
fn fit_without_response_file_is_io_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = bin()
        .args(["--out", dir.path().to_str().unwrap(), "fit"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(3), "stderr: {}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn m2_constraint_rejected_at_parse_time() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.toml");
    std::fs::write(&cfg, "[geometry]\nm2 = 3\n").unwrap();
    let out = bin()
        .args([
            "--config",
            cfg.to_str().unwrap(),
            "--out",
            dir.path().to_str().unwrap(),
            "verify",
            "--check",
            "selfconcordance",
        ])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("m2"), "stderr: {stderr}");
}

#[test]
fn unknown_config_key_rejected_with_name() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.toml");
    std::fs::write(&cfg, "[sampler]\nn_itter = 100\n").unwrap();
    let out = bin()
        .args([
            "--config",
            cfg.to_str().unwrap(),
            "--out",
            dir.path().to_str().unwrap(),
            "verify",
        ])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("n_itter"), "stderr: {stderr}");
}

#[test]
fn flag_overrides_file_value_in_echo() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cfg.toml");
    std::fs::write(&cfg, "[run]\nseed = 5\n\n[simulate]\nn = 12\np = 3\ngroup_size = 1\ns0 = 1\n")
        .unwrap();
    let out_dir = dir.path().join("out");
    run_ok(&[
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        out_dir.to_str().unwrap(),
        "--seed",
        "77",
        "simulate",
        "--n",
        "15",
    ]);
    let echo = std::fs::read_to_string(out_dir.join("config_echo.toml")).unwrap();
    assert!(echo.contains("seed = 77"), "echo: {echo}");
    assert!(echo.contains("n = 15"), "echo: {echo}");
}

#[test]
fn empty_config_gets_documented_defaults() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("empty.toml");
    std::fs::write(&cfg, "").unwrap();
    let out_dir = dir.path().join("out");
    run_ok(&[
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        out_dir.to_str().unwrap(),
        "simulate",
        "--n",
        "10",
        "--p",
        "3",
        "--group-size",
        "1",
        "--s0",
        "1",
    ]);
    let echo = std::fs::read_to_string(out_dir.join("config_echo.toml")).unwrap();
    // Untouched defaults echo through.
    assert!(echo.contains("a = 1.0"));
    assert!(echo.contains("rw_scale = 2.4"));
    assert!(echo.contains("cone_constant = 7.0"));
    assert!(echo.contains("m2 = 3.4"));
}

#[test]
fn diagnose_requires_truth() {
    let dir = tempfile::tempdir().unwrap();
    let sim = dir.path().join("sim");
    run_ok(&[
        "--out",
        sim.to_str().unwrap(),
        "simulate",
        "--n",
        "20",
        "--p",
        "4",
        "--group-size",
        "1",
        "--s0",
        "1",
        "--m",
        "2",
    ]);
    // Point at the simulated design but strip the truth path.
    let cfg = dir.path().join("cfg.toml");
    std::fs::write(
        &cfg,
        format!(
            "[paths]\ndesign = \"{}\"\ngroups = \"{}\"\n",
            sim.join("design.csv").display(),
            sim.join("groups.csv").display()
        ),
    )
    .unwrap();
    let out = bin()
        .args([
            "--config",
            cfg.to_str().unwrap(),
            "--out",
            dir.path().join("diag").to_str().unwrap(),
            "diagnose",
        ])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn diagnose_emits_certificates() {
    let dir = tempfile::tempdir().unwrap();
    let sim = dir.path().join("sim");
    run_ok(&[
        "--out",
        sim.to_str().unwrap(),
        "--seed",
        "3",
        "simulate",
        "--n",
        "25",
        "--p",
        "5",
        "--group-size",
        "1",
        "--s0",
        "2",
        "--m",
        "2",
    ]);
    // A light geometry budget keeps the test quick.
    let cfg = dir.path().join("cfg.toml");
    std::fs::write(
        &cfg,
        "[geometry]\nsamples = 800\npolish_steps = 60\ninner_samples = 100\ninner_polish_steps = 40\nrandom_supports = 50\n",
    )
    .unwrap();
    let diag = dir.path().join("diag");
    run_ok(&[
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        diag.to_str().unwrap(),
        "diagnose",
        "--design",
        sim.join("design.csv").to_str().unwrap(),
        "--groups",
        sim.join("groups.csv").to_str().unwrap(),
        "--truth",
        sim.join("truth.json").to_str().unwrap(),
    ]);
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(diag.join("compat_report.json")).unwrap())
            .unwrap();
    for key in ["phi", "phi_mod", "psi1", "psi2"] {
        assert!(report["certificates"][key]["beta"].is_array(), "missing certificate {key}");
    }
    assert!(report["rate_l2"].as_f64().unwrap() > 0.0);
}

#[test]
fn verify_single_check_exits_zero() {
    let dir = tempfile::tempdir().unwrap();
    // A fast check keeps the smoke test snappy; the full battery runs in
    // the acceptance suite.
    let cfg = dir.path().join("cfg.toml");
    std::fs::write(&cfg, "[verify]\nchecks = [\"selfconcordance\"]\n").unwrap();
    let out = run_ok(&[
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        dir.path().to_str().unwrap(),
        "verify",
    ]);
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("PASS selfconcordance"), "stdout: {stdout}");
    assert!(dir.path().join("check_selfconcordance.json").exists());
    let summary: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("verify_summary.json")).unwrap())
            .unwrap();
    assert_eq!(summary["all_pass"], serde_json::Value::Bool(true));
}

#[test]
fn unknown_check_name_is_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = bin()
        .args([
            "--out",
            dir.path().to_str().unwrap(),
            "verify",
            "--check",
            "nonsense",
        ])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
}

fn files_identical(a: &Path, b: &Path) -> bool {
    std::fs::read(a).unwrap() == std::fs::read(b).unwrap()
}

#[test]
fn rerun_from_echo_is_bit_identical() {
    let dir = tempfile::tempdir().unwrap();
    let run1 = dir.path().join("run1");
    run_ok(&[
        "--out",
        run1.to_str().unwrap(),
        "--seed",
        "21",
        "simulate",
        "--n",
        "25",
        "--p",
        "5",
        "--group-size",
        "1",
        "--s0",
        "1",
        "--m",
        "3",
    ]);
    let fit1 = dir.path().join("fit1");
    run_ok(&[
        "--config",
        run1.join("config_echo.toml").to_str().unwrap(),
        "--out",
        fit1.to_str().unwrap(),
        "fit",
        "--n-iter",
        "3000",
        "--burn-in",
        "500",
        "--chains",
        "2",
        "--lambda-override",
        "5.0",
    ]);
    // Replay the fit from its own echo into a fresh directory.
    let fit2 = dir.path().join("fit2");
    run_ok(&[
        "--config",
        fit1.join("config_echo.toml").to_str().unwrap(),
        "--out",
        fit2.to_str().unwrap(),
        "fit",
    ]);
    let manifest: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(fit1.join("manifest.json")).unwrap())
            .unwrap();
    for f in manifest["files"].as_array().unwrap() {
        let name = f.as_str().unwrap();
        assert!(
            files_identical(&fit1.join(name), &fit2.join(name)),
            "output {name} differs between replays"
        );
    }
    assert!(files_identical(&fit1.join("manifest.json"), &fit2.join("manifest.json")));
    assert!(files_identical(&fit1.join("config_echo.toml"), &fit2.join("config_echo.toml")));
}
