use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

const TOWN: &str = "[map]\nrows = [[0.5, 0.3, 0.2], [0.3, 0.3, 0.4], [0.2, 0.4, 0.4]]\n";

const DESK: &str = "[sir]\nalpha = 0.4\nbeta = 0.1\nn = 300\ns0 = 297\ni0 = 3\nhorizon = 100\n";

fn asir(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_asir"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn write_config(dir: &Path, name: &str, text: &str) -> PathBuf {
    let path = dir.join(name);
    fs::write(&path, text).unwrap();
    path
}

fn run(mode: &str, config: &Path, out: &Path, extra: &[&str]) -> Output {
    let mut args = vec![
        mode,
        "--config",
        config.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ];
    args.extend_from_slice(extra);
    asir(&args)
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn nonexistent_config_is_a_config_error() {
    let out = asir(&["verify", "--config", "/definitely/not/here.toml"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("cannot read config"));
}

#[test]
fn verify_without_ensemble_block_is_missing_block() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(dir.path(), "v.toml", &format!("{DESK}{TOWN}"));
    let out = run("verify", &cfg, &dir.path().join("o"), &[]);
    assert_eq!(out.status.code(), Some(2));
    assert!(
        stderr(&out).contains("requires a [ensemble] block"),
        "{}",
        stderr(&out)
    );
}

#[test]
fn row_sum_violation_reports_key_path() {
    let dir = TempDir::new().unwrap();
    let bad = TOWN.replace("[0.3, 0.3, 0.4]", "[0.3, 0.3, 0.3]");
    let cfg = write_config(dir.path(), "v.toml", &format!("{DESK}{bad}[ensemble]\n"));
    let out = run("verify", &cfg, &dir.path().join("o"), &[]);
    assert_eq!(out.status.code(), Some(2));
    let err = stderr(&out);
    assert!(
        err.contains("map.rows[1]") && err.contains("sums to"),
        "{err}"
    );
}

#[test]
fn malformed_toml_reports_location() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(dir.path(), "bad.toml", "[sir]\nalpha = 0.4\nbeta = \n");
    let out = run("sir", &cfg, &dir.path().join("o"), &[]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("line 3"), "{}", stderr(&out));
}

#[test]
fn non_ergodic_map_fails_stationary() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(dir.path(), "s.toml", "[map]\nrows = [[0, 1], [1, 0]]\n");
    let out = run("stationary", &cfg, &dir.path().join("o"), &[]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stdout).contains("period: 2"));
}

#[test]
fn doubled_recovery_override_exits_one() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(
        dir.path(),
        "neg.toml",
        &format!("{DESK}{TOWN}[asir]\nbeta_prime = 0.2\nseed = 3\n[ensemble]\n"),
    );
    let out_dir = dir.path().join("o");
    let out = run("verify", &cfg, &out_dir, &[]);
    assert_eq!(out.status.code(), Some(1), "{}", stderr(&out));
    let report = fs::read_to_string(out_dir.join("report.txt")).unwrap();
    assert!(report.contains("result: FAIL"));
}

const PURE_RECOVERY: &str =
    "[sir]\nalpha = 0.0\nbeta = 0.2\nn = 30\ns0 = 0\ni0 = 30\nhorizon = 30\n";

#[test]
fn verify_pass_exits_zero_and_writes_artifacts() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(
        dir.path(),
        "pure.toml",
        &format!("{PURE_RECOVERY}{TOWN}[asir]\nseed = 11\n[ensemble]\nreplicates = 400\n"),
    );
    let out_dir = dir.path().join("o");
    let out = run("verify", &cfg, &out_dir, &[]);
    assert_eq!(
        out.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&out.stdout)
    );
    let summary = fs::read_to_string(out_dir.join("summary.csv")).unwrap();
    assert!(summary
        .starts_with("t,mean_S,se_S,mean_I,se_I,mean_R,se_R,ref_S,ref_I,ref_R,z_S,z_I,z_R\n"));
    assert_eq!(summary.lines().count(), 32);
    let meta = fs::read_to_string(out_dir.join("metadata.txt")).unwrap();
    for key in [
        "config_sha256: ",
        "master_seed: 11",
        "tool_version: ",
        "random_stream: ChaCha8",
    ] {
        assert!(meta.contains(key), "{meta}");
    }
}

fn without_timestamp(meta: &str) -> String {
    meta.lines()
        .filter(|l| !l.starts_with("timestamp_unix"))
        .collect::<Vec<_>>()
        .join("\n")
}

#[test]
fn reruns_are_byte_identical() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(
        dir.path(),
        "a.toml",
        &format!(
            "{DESK}{TOWN}[asir]\nseed = 99\ninit_mode = \"uniform\"\n[ensemble]\nreplicates = 5\n\
             [output]\ntrace = true\n"
        ),
    );
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    assert_eq!(
        run("asir", &cfg, &a, &["--workers", "1"]).status.code(),
        Some(0)
    );
    assert_eq!(
        run("asir", &cfg, &b, &["--workers", "3"]).status.code(),
        Some(0)
    );
    for file in ["trajectory.csv", "agent_trace.csv"] {
        let x = fs::read(a.join(file)).unwrap();
        assert!(!x.is_empty());
        assert_eq!(x, fs::read(b.join(file)).unwrap(), "{file}");
    }
    let trace = fs::read_to_string(a.join("agent_trace.csv")).unwrap();
    assert_eq!(trace.lines().count(), 1 + 5 * 101 * 300);
    assert_eq!(
        without_timestamp(&fs::read_to_string(a.join("metadata.txt")).unwrap()),
        without_timestamp(&fs::read_to_string(b.join("metadata.txt")).unwrap())
    );

    let verify = write_config(
        dir.path(),
        "v.toml",
        &format!("{DESK}{TOWN}[asir]\nseed = 5\n[ensemble]\nreplicates = 50\n"),
    );
    let (c, d) = (dir.path().join("c"), dir.path().join("d"));
    run("verify", &verify, &c, &["--workers", "2"]);
    run("verify", &verify, &d, &[]);
    assert_eq!(
        fs::read(c.join("summary.csv")).unwrap(),
        fs::read(d.join("summary.csv")).unwrap()
    );
}

#[test]
fn sir_mode_writes_both_curves() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(dir.path(), "s.toml", DESK);
    let out_dir = dir.path().join("o");
    assert_eq!(run("sir", &cfg, &out_dir, &[]).status.code(), Some(0));
    for file in ["sir_euler.csv", "sir_rk4.csv"] {
        let text = fs::read_to_string(out_dir.join(file)).unwrap();
        assert!(text.starts_with("t,S,I,R\n"));
        assert_eq!(text.lines().count(), 102);
    }
    let euler = fs::read_to_string(out_dir.join("sir_euler.csv")).unwrap();
    let first_step: Vec<f64> = euler
        .lines()
        .nth(2)
        .unwrap()
        .split(',')
        .skip(1)
        .map(|x| x.parse().unwrap())
        .collect();
    // ΔS = -(0.4/300)·297·3, ΔR = 0.1·3
    assert!((first_step[0] - (297.0 - 1.188)).abs() < 1e-9);
    assert!((first_step[2] - 0.3).abs() < 1e-12);
}

#[test]
fn deduce_emits_runnable_asir_config() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(dir.path(), "d.toml", &format!("{DESK}{TOWN}"));
    let out_dir = dir.path().join("o");
    let out = run("deduce", &cfg, &out_dir, &[]);
    assert_eq!(out.status.code(), Some(0));
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(
        stdout.contains("alpha_prime: 4.0000000000000001e-3"),
        "{stdout}"
    );

    let generated = out_dir.join("asir.toml");
    let run_dir = dir.path().join("r");
    assert_eq!(
        run("asir", &generated, &run_dir, &[]).status.code(),
        Some(0)
    );
    assert!(run_dir.join("trajectory.csv").exists());
}

#[test]
fn alpha_prime_above_one_names_the_key() {
    let dir = TempDir::new().unwrap();
    let text = DESK.replace("alpha = 0.4", "alpha = 500.0");
    let cfg = write_config(dir.path(), "d.toml", &format!("{text}{TOWN}"));
    let out = run("deduce", &cfg, &dir.path().join("o"), &[]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("sir.alpha"), "{}", stderr(&out));
}
