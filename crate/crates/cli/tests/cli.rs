use std::fs;
use std::path::Path;
use std::process::Command;

fn kinchem(args: &[&str]) -> (i32, String, String) {
    let out = Command::new(env!("CARGO_BIN_EXE_kinchem")).args(args).env("RUST_LOG", "warn").output().expect("binary runs");
    (
        out.status.code().expect("exit code"),
        String::from_utf8_lossy(&out.stdout).into_owned(),
        String::from_utf8_lossy(&out.stderr).into_owned(),
    )
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p.to_string_lossy().into_owned()
}

const KINETIC: &str = r#"{
    "mode": "kinetic",
    "grid": {"dim": 2, "N": 16, "L": 4.0},
    "velocity": {"kind": "sphere", "n_v": 8},
    "kernel": {"kind": "constant", "c0": 0.0},
    "initial": {"preset": "gaussian-bump", "M": 1.0},
    "time": {"dt": 0.05, "t_end": 0.5}
}"#;

#[test]
fn simulate_then_report() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write(tmp.path(), "k.json", KINETIC);
    let out = tmp.path().join("run");
    let (code, stdout, stderr) = kinchem(&["simulate", "--config", &cfg, "--out", out.to_str().unwrap(), "--threads", "1"]);
    assert_eq!(code, 0, "{stdout}{stderr}");
    assert!(out.join("manifest.json").exists());
    let (code, stdout, _) = kinchem(&["report", out.to_str().unwrap()]);
    assert_eq!(code, 0, "{stdout}");
    assert!(stdout.contains("hashes: all"));

    fs::write(out.join("diagnostics.csv"), "tampered").unwrap();
    let (code, stdout, _) = kinchem(&["report", out.to_str().unwrap()]);
    assert_eq!(code, 4);
    assert!(stdout.contains("MISMATCH"));
}

#[test]
fn config_errors_exit_two_and_list_everything() {
    let tmp = tempfile::tempdir().unwrap();
    let bad = KINETIC.replace("\"N\": 16", "\"N\": 0").replace("\"M\": 1.0", "\"M\": -1.0");
    let cfg = write(tmp.path(), "bad.json", &bad);
    let (code, _, stderr) = kinchem(&["simulate", "--config", &cfg, "--out", tmp.path().join("x").to_str().unwrap()]);
    assert_eq!(code, 2);
    assert!(stderr.contains("grid") && stderr.contains("M"), "{stderr}");
    assert!(!tmp.path().join("x").exists());

    // Subcommand and mode must agree.
    let cfg = write(tmp.path(), "k.json", KINETIC);
    let (code, _, stderr) = kinchem(&["particles", "--config", &cfg]);
    assert_eq!(code, 2, "{stderr}");

    let (code, _, _) = kinchem(&["report", tmp.path().join("nowhere").to_str().unwrap()]);
    assert_eq!(code, 2);
}

#[test]
fn verify_exit_codes() {
    let tmp = tempfile::tempdir().unwrap();
    let good = write(tmp.path(), "good.json", r#"{"mode": "verify", "checks": [{"check": "strichartz"}, {"check": "gamma_stirling", "n_max": 100}]}"#);
    let (code, stdout, stderr) = kinchem(&["verify", "--config", &good, "--out", tmp.path().join("g").to_str().unwrap()]);
    assert_eq!(code, 0, "{stdout}{stderr}");
    let bad = write(
        tmp.path(),
        "bad.json",
        r#"{"mode": "verify", "checks": [{"check": "strichartz", "tuple": {"q": 2, "p": 2, "r": 2, "a": 2}}]}"#,
    );
    let dir = tmp.path().join("b");
    let (code, _, _) = kinchem(&["verify", "--config", &bad, "--out", dir.to_str().unwrap()]);
    assert_eq!(code, 4);
    let (code, stdout, _) = kinchem(&["report", dir.to_str().unwrap()]);
    assert_eq!(code, 4);
    assert!(stdout.contains("strichartz") && stdout.contains("FAIL"), "{stdout}");
}

#[test]
fn seed_override_changes_particle_output() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write(
        tmp.path(),
        "p.json",
        r#"{
            "mode": "particles",
            "grid": {"dim": 2, "N": 16, "L": 4.0},
            "internal": {"model": {"kind": "inert"}, "rate": {"lambda0": 1.0, "lambda1": 0.0}, "n_particles": 500},
            "initial": {"preset": "uniform", "M": 1.0},
            "time": {"dt": 0.05, "t_end": 0.5},
            "rho_p": [2]
        }"#,
    );
    let run = |seed: &str, dir: &str| {
        let d = tmp.path().join(dir);
        let (code, stdout, stderr) = kinchem(&["particles", "--config", &cfg, "--seed", seed, "--out", d.to_str().unwrap()]);
        assert_eq!(code, 0, "{stdout}{stderr}");
        fs::read(d.join("diagnostics.csv")).unwrap()
    };
    let a = run("1", "a");
    assert_eq!(a, run("1", "b"));
    assert_ne!(a, run("2", "c"));
}
