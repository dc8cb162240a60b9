use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn deltalab(args: &[&str], out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_deltalab"))
        .args(args)
        .arg("--out")
        .arg(out)
        .output()
        .expect("binary runs")
}

#[test]
fn exponents_solve_prints_the_saving() {
    let dir = tempfile::tempdir().unwrap();
    let o = deltalab(&["exponents-solve", "--sigma", "1/20", "--j", "2"], dir.path());
    assert_eq!(o.status.code(), Some(0));
    let stdout = String::from_utf8(o.stdout).unwrap();
    assert!(stdout.starts_with("delta = 1/524\n"), "{stdout}");
    let json = fs::read_to_string(dir.path().join("exponents-solve.json")).unwrap();
    assert!(json.contains("\"schema_version\": \"1\""));
    assert!(json.contains("\"delta\": \"1/524\""));

    let o = deltalab(&["exponents-solve", "--sigma", "1/20", "--j", "1"], dir.path());
    assert!(String::from_utf8(o.stdout).unwrap().starts_with("delta = 1/302\n"));
}

#[test]
fn configuration_errors_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    for args in [
        vec!["no-such-suite"],
        vec!["exponents-solve", "--sigma", "1/5"],
        vec!["exponents-solve", "--sigma", "abc"],
        vec!["exponents-solve", "--j", "3"],
        vec!["delta-verify", "--tol-scale", "2"],
        vec!["delta-verify", "--format", "xml"],
    ] {
        let o = deltalab(&args, dir.path());
        assert_eq!(o.status.code(), Some(2), "{args:?}");
    }
}

#[test]
fn failed_assertions_exit_one_with_dump() {
    let dir = tempfile::tempdir().unwrap();
    let o = deltalab(&["delta-verify", "--tol-scale", "1e-300"], dir.path());
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8(o.stderr).unwrap().contains("failing check"));
    let dump = fs::read_to_string(dir.path().join("delta-verify_failures.json")).unwrap();
    assert!(dump.contains("\"pass\": false"));
}

#[test]
fn reports_are_deterministic() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let args = ["kfrac-experiment", "--small", "16", "--large", "48", "--trials", "20", "--format", "csv"];
    assert_eq!(deltalab(&args, a.path()).status.code(), Some(0));
    assert_eq!(deltalab(&args, b.path()).status.code(), Some(0));
    let mut names: Vec<_> = fs::read_dir(a.path()).unwrap().map(|e| e.unwrap().file_name()).collect();
    names.sort();
    assert!(names.iter().any(|n| n == "kfrac-experiment_trials.csv"));
    for n in names {
        assert_eq!(fs::read(a.path().join(&n)).unwrap(), fs::read(b.path().join(&n)).unwrap(), "{n:?}");
    }
    let trials = fs::read_to_string(a.path().join("kfrac-experiment_trials.csv")).unwrap();
    assert!(trials.starts_with("trial,m,n,k,a,model,abs_sum,rhs,trivial,ratio_rhs,ratio_trivial\n"));

    let json = ["delta-verify"];
    deltalab(&json, a.path());
    deltalab(&json, b.path());
    assert_eq!(
        fs::read(a.path().join("delta-verify.json")).unwrap(),
        fs::read(b.path().join("delta-verify.json")).unwrap()
    );
}

#[test]
fn seed_changes_randomized_reports() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let args = ["kfrac-experiment", "--small", "16", "--large", "32", "--trials", "10"];
    deltalab(&[&args[..], &["--seed", "1"]].concat(), a.path());
    deltalab(&[&args[..], &["--seed", "2"]].concat(), b.path());
    assert_ne!(
        fs::read(a.path().join("kfrac-experiment.json")).unwrap(),
        fs::read(b.path().join("kfrac-experiment.json")).unwrap()
    );
}

#[test]
fn output_directory_from_environment() {
    let dir = tempfile::tempdir().unwrap();
    let target = dir.path().join("from-env");
    let o = Command::new(env!("CARGO_BIN_EXE_deltalab"))
        .args(["exponents-solve"])
        .env("DELTALAB_OUT", &target)
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(0));
    assert!(target.join("exponents-solve.json").exists());
}

#[test]
fn quick_suites_pass() {
    let dir = tempfile::tempdir().unwrap();
    for suite in ["delta-verify", "hecke-verify", "amplifier-verify", "charsums-verify"] {
        let o = deltalab(&[suite, "--format", "csv"], dir.path());
        assert_eq!(o.status.code(), Some(0), "{suite}");
        assert!(dir.path().join(format!("{suite}_checks.csv")).exists());
    }
}
