use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn dualirs(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dualirs"))
        .args(args)
        .env("DUALIRS_THREADS", "2")
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn configs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p
}

#[test]
fn overhead_prints_table_value() {
    let o = dualirs(&[
        "overhead", "--scheme", "proposed", "--n", "45", "--m1", "20", "--m2", "20", "--k", "1",
    ]);
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(stdout(&o), "62\n");
    let o = dualirs(&[
        "overhead",
        "--scheme",
        "decoupled",
        "--n",
        "10",
        "--m1",
        "20",
        "--m2",
        "20",
        "--k",
        "10",
    ]);
    assert_eq!(stdout(&o), "116\n");
    let o = dualirs(&[
        "overhead",
        "--scheme",
        "per_antenna",
        "--n",
        "10",
        "--m1",
        "20",
        "--m2",
        "20",
        "--k",
        "1",
    ]);
    assert_eq!(stdout(&o), "440\n");
}

#[test]
fn per_antenna_with_unequal_surfaces_is_rejected() {
    let o = dualirs(&[
        "overhead",
        "--scheme",
        "per-antenna",
        "--n",
        "10",
        "--m1",
        "20",
        "--m2",
        "10",
        "--k",
        "1",
    ]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn no_arguments_prints_usage_and_fails() {
    let o = dualirs(&[]);
    assert_eq!(o.status.code(), Some(1));
    let text = String::from_utf8_lossy(&o.stderr).to_string() + &stdout(&o);
    assert!(text.contains("Usage"), "{text}");
}

#[test]
fn unknown_flag_is_a_usage_error() {
    let o = dualirs(&["overhead", "--bogus"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("Usage"));
}

#[test]
fn help_everywhere_exits_zero() {
    for args in [
        vec!["--help"],
        vec!["run", "--help"],
        vec!["overhead", "--help"],
        vec!["design", "--help"],
        vec!["design", "verify", "--help"],
        vec!["version", "--help"],
    ] {
        let o = dualirs(&args);
        assert_eq!(o.status.code(), Some(0), "{args:?}");
        assert!(stdout(&o).contains("Usage"), "{args:?}");
    }
}

#[test]
fn version_subcommand_and_flag() {
    let want = format!("dualirs {}\n", env!("CARGO_PKG_VERSION"));
    assert_eq!(stdout(&dualirs(&["version"])), want);
    assert_eq!(stdout(&dualirs(&["--version"])), want);
}

#[test]
fn design_verify_passes_for_each_phase() {
    let desk = configs().join("desk.json");
    let multi = configs().join("mse_multi_user.json");
    for (phase, cfg) in [("1", &desk), ("2", &desk), ("3", &multi)] {
        let o = dualirs(&[
            "design",
            "verify",
            "--phase",
            phase,
            "--config",
            cfg.to_str().unwrap(),
        ]);
        assert_eq!(
            o.status.code(),
            Some(0),
            "phase {phase}: {}",
            String::from_utf8_lossy(&o.stderr)
        );
        assert!(stdout(&o).starts_with("PASS"), "{}", stdout(&o));
    }
    let o = dualirs(&["design", "verify", "--phase", "2"]);
    assert!(stdout(&o).starts_with("PASS phase 2 (case 1)"));
}

#[test]
fn design_verify_certifies_small_arrays() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "small.json",
        r#"{"n": 4, "m1": 8, "m2": 8, "k": 3}"#,
    );
    for phase in ["2", "3"] {
        let o = dualirs(&[
            "design",
            "verify",
            "--phase",
            phase,
            "--config",
            cfg.to_str().unwrap(),
        ]);
        assert_eq!(o.status.code(), Some(0));
        assert!(stdout(&o).contains("(case 2)"), "{}", stdout(&o));
    }
}

#[test]
fn design_verify_phase3_needs_several_users() {
    let o = dualirs(&["design", "verify", "--phase", "3"]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn run_writes_csv_and_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = configs().join("desk.json");
    let a = dir.path().join("a.csv");
    let b = dir.path().join("b.csv");
    for out in [&a, &b] {
        let o = dualirs(&[
            "run",
            "--config",
            cfg.to_str().unwrap(),
            "--trials",
            "8",
            "--seed",
            "3",
            "--out",
            out.to_str().unwrap(),
        ]);
        assert_eq!(
            o.status.code(),
            Some(0),
            "{}",
            String::from_utf8_lossy(&o.stderr)
        );
    }
    let text = std::fs::read(&a).unwrap();
    assert_eq!(text, std::fs::read(&b).unwrap());
    let text = String::from_utf8(text).unwrap();
    assert!(text.starts_with("sweep,metric,mean,stderr,trials,theory\n"));
    assert!(text
        .lines()
        .skip(1)
        .all(|l| l.split(',').nth(4) == Some("8")));

    let o = dualirs(&[
        "run",
        "--config",
        cfg.to_str().unwrap(),
        "--trials",
        "8",
        "--seed",
        "4",
    ]);
    assert_ne!(stdout(&o).as_bytes(), text.as_bytes());
}

#[test]
fn run_overhead_sweep_to_stdout() {
    let o = dualirs(&[
        "run",
        "--config",
        configs().join("overhead_vs_n.json").to_str().unwrap(),
        "--out",
        "/dev/stdout",
    ]);
    assert_eq!(o.status.code(), Some(0));
    let text = stdout(&o);
    assert!(text.contains("4.5e1,proposed,6.2e1,"), "{text}");
    assert!(text.contains("4.5e1,per_antenna,4.4e2,"), "{text}");
}

#[test]
fn config_errors_exit_one() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("missing.json");
    let broken = write(dir.path(), "broken.json", "{ not json");
    let zero = write(
        dir.path(),
        "zero.json",
        r#"{"experiment": "mse_single_user", "k": 1, "trials": 0}"#,
    );
    let wrong_k = write(
        dir.path(),
        "k.json",
        r#"{"experiment": "mse_single_user", "k": 3}"#,
    );
    for cfg in [&missing, &broken, &zero, &wrong_k] {
        let o = dualirs(&["run", "--config", cfg.to_str().unwrap()]);
        assert_eq!(o.status.code(), Some(1), "{}", cfg.display());
        assert!(String::from_utf8_lossy(&o.stderr).starts_with("error:"));
    }
}

#[test]
fn unwritable_output_is_a_runtime_error() {
    let o = dualirs(&[
        "run",
        "--config",
        configs().join("overhead_vs_k.json").to_str().unwrap(),
        "--out",
        "/nonexistent-dir/out.csv",
    ]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("/nonexistent-dir/out.csv"));
}
