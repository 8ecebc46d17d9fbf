use ccm_adapt_cli::ScenarioConfig;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_ccm-adapt"))
}

fn config(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../configs").join(name)
}

fn run(args: &[&str], out: &Path) -> Output {
    bin().args(args).arg("--out").arg(out).output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn value(out: &str, key: &str) -> f64 {
    out.lines()
        .find_map(|l| l.strip_prefix(key))
        .unwrap_or_else(|| panic!("no `{key}` line in {out}"))
        .trim()
        .parse()
        .unwrap()
}

#[test]
fn baseline_diverges_with_a_truncated_log() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config("lopez_baseline.cfg");
    let o = run(&["simulate", cfg.to_str().unwrap()], dir.path());
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
    let csv = std::fs::read_to_string(dir.path().join("lopez_baseline.csv")).unwrap();
    let last_t: f64 = csv.lines().last().unwrap().split(',').next().unwrap().parse().unwrap();
    assert!(last_t < 2.0, "log ends at {last_t}");
}

#[test]
fn adaptive_run_succeeds_and_writes_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config("lopez_adaptive.cfg");
    let o = run(&["--svg", "simulate", cfg.to_str().unwrap()], dir.path());
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let csv = std::fs::read_to_string(dir.path().join("lopez_adaptive.csv")).unwrap();
    let header: Vec<&str> = csv.lines().next().unwrap().split(',').collect();
    let last: Vec<f64> = csv.lines().last().unwrap().split(',').map(|s| s.parse().unwrap_or(f64::NAN)).collect();
    let col = |name: &str| header.iter().position(|h| *h == name).unwrap();
    let norm = (1..=3).map(|i| last[col(&format!("x{i}"))].powi(2)).sum::<f64>().sqrt();
    assert!(norm <= 0.05, "final |x| = {norm}");
    assert!(dir.path().join("lopez_adaptive.svg").exists());
}

#[test]
fn missing_config_is_an_error() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&["simulate", "does/not/exist.cfg"], dir.path());
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("exist.cfg"), "{}", stderr(&o));
    assert!(stderr(&o).to_lowercase().contains("no such file"), "{}", stderr(&o));
}

#[test]
fn verify_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let lopez = config("lopez_verify.cfg");
    let o = run(&["verify-metric", lopez.to_str().unwrap()], dir.path());
    assert_eq!(o.status.code(), Some(0), "{}", stdout(&o));
    assert!(dir.path().join("lopez_verify_verify.json").exists());

    let o = run(&["verify-metric", config("identity_verify.cfg").to_str().unwrap()], dir.path());
    assert_eq!(o.status.code(), Some(3), "{}", stdout(&o));

    let o = run(&["--set", "verify.lambda=1000", "verify-metric", lopez.to_str().unwrap()], dir.path());
    assert_eq!(o.status.code(), Some(3), "{}", stdout(&o));
}

#[test]
fn geodesic_subcommand() {
    let dir = tempfile::tempdir().unwrap();
    let identity = config("identity_verify.cfg");
    let o = run(&["geodesic", identity.to_str().unwrap(), "0,0,0", "1,0,0"], dir.path());
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!((value(&stdout(&o), "energy") - 1.0).abs() <= 1e-10);
    assert!(dir.path().join("geodesic.json").exists());

    let lopez = config("lopez_verify.cfg");
    let o = run(&["geodesic", lopez.to_str().unwrap(), "1,-2,3", "1,-2,3"], dir.path());
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(value(&stdout(&o), "energy"), 0.0);
    assert_eq!(value(&stdout(&o), "iterations"), 0.0);

    let o = run(&["geodesic", lopez.to_str().unwrap(), "[1, 1, 1]", "[0, 0, 0]", "--theta", "1"], dir.path());
    assert_eq!(o.status.code(), Some(0));
    let e = value(&stdout(&o), "energy");
    assert!(e > 0.0 && e < 3.0 / 0.298, "{e}");
}

#[test]
fn dumped_config_round_trips_with_overrides() {
    let cfg = config("lopez_adaptive.cfg");
    let o = bin()
        .args(["--dump-effective-config", "--set", "controller.gamma_em=[4.0]", "--set", "name=tweaked", "simulate"])
        .arg(&cfg)
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let dumped = stdout(&o);
    let parsed = ScenarioConfig::from_toml_str(&dumped).unwrap();
    assert_eq!(parsed.controller.gamma_em, vec![4.0]);
    assert_eq!(parsed.name, "tweaked");
    let original = ScenarioConfig::load(&cfg, &["controller.gamma_em=[4.0]".into(), "name=tweaked".into()]).unwrap();
    assert_eq!(parsed, original);
    assert_eq!(parsed.to_toml_string().unwrap(), dumped);
}

#[test]
fn unknown_keys_are_rejected_by_name() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config("lopez_adaptive.cfg");
    let o = run(&["--set", "controller.lambada=0.3", "simulate", cfg.to_str().unwrap()], dir.path());
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("lambada"), "{}", stderr(&o));
}

#[test]
fn batch_reports_the_worst_status() {
    let dir = tempfile::tempdir().unwrap();
    let o = bin()
        .arg("--out")
        .arg(dir.path())
        .args(["--set", "simulation.t_final=3.0", "batch"])
        .arg(config("lopez_adaptive.cfg"))
        .arg(config("lopez_baseline.cfg"))
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
    assert!(dir.path().join("lopez_adaptive.csv").exists());
    assert!(dir.path().join("lopez_baseline.csv").exists());
}
