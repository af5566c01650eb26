use std::path::Path;
use std::process::Command;

fn tomo(args: &[&str], dir: &Path) -> (i32, String) {
    let out = Command::new(env!("CARGO_BIN_EXE_tomo")).args(args).current_dir(dir).output().expect("spawn tomo");
    let text = String::from_utf8_lossy(&out.stdout).into_owned() + &String::from_utf8_lossy(&out.stderr);
    (out.status.code().unwrap_or(-1), text)
}

#[test]
fn sample_estimate_and_reconstruct() {
    let dir = tempfile::tempdir().unwrap();
    let (code, _) = tomo(&["sample", "--state", "cat:1.0", "--t", "6", "--m", "8", "--samples", "4000", "--seed", "5", "--out", "d.csv"], dir.path());
    assert_eq!(code, 0);
    let (code, text) = tomo(&["estimate-nbar", "--data", "d.csv"], dir.path());
    assert_eq!(code, 0);
    let nbar: f64 = text.trim().parse().unwrap();
    assert!((nbar - 0.855 * 1f64.tanh()).abs() < 0.1, "{nbar}");
    for (mode, strategy) in [("raw", "scott"), ("center", "fixed:0.3"), ("integral", "leonhardt:mean")] {
        let (code, text) = tomo(&["reconstruct", "--data", "d.csv", "--t", "6", "--mode", mode, "--strategy", strategy, "--out", mode], dir.path());
        assert_eq!(code, 0, "{text}");
        assert!(dir.path().join(mode).join("rho.csv").exists());
        assert!(text.contains("\"converged\": true"));
    }
}

#[test]
fn non_convergence_exits_with_two() {
    let dir = tempfile::tempdir().unwrap();
    tomo(&["sample", "--state", "cat:1.0", "--t", "6", "--m", "8", "--samples", "4000", "--out", "d.csv"], dir.path());
    let (code, _) = tomo(&["reconstruct", "--data", "d.csv", "--t", "6", "--mode", "center", "--strategy", "fixed:0.3", "--stop-gap", "1e-300"], dir.path());
    assert_eq!(code, 2);
}

#[test]
fn bad_input_exits_with_one() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(tomo(&["estimate-nbar", "--data", "missing.csv"], dir.path()).0, 1);
    assert_eq!(tomo(&["reconstruct", "--data", "x.csv", "--t", "4", "--strategy", "bogus"], dir.path()).0, 1);
    assert_eq!(tomo(&["sample", "--state", "cat:1.0", "--t", "10", "--m", "5", "--out", "d.csv"], dir.path()).0, 1);
    assert_eq!(tomo(&["--help"], dir.path()).0, 0);
}

#[test]
fn run_writes_report_and_honours_overrides() {
    let dir = tempfile::tempdir().unwrap();
    let config = r#"{
        "schema_version": 1,
        "state": {"kind": "cat", "alpha": 1.0, "truncation": 4},
        "m": 6, "samples": 1200, "repetitions": 5, "master_seed": 1,
        "sweep": [{"mode": "raw"}, {"mode": "integral", "strategy": {"kind": "scott"}}]
    }"#;
    std::fs::write(dir.path().join("c.json"), config).unwrap();
    let (code, text) = tomo(&["run", "--config", "c.json", "--reps", "2", "--seed", "9", "--out", "out"], dir.path());
    assert_eq!(code, 0, "{text}");
    let runs = std::fs::read_to_string(dir.path().join("out/runs.csv")).unwrap();
    assert_eq!(runs.lines().count(), 1 + 2 * 2);
    let summary = std::fs::read_to_string(dir.path().join("out/summary.csv")).unwrap();
    assert!(summary.starts_with("strategy,mode,width,mean_fidelity,std_fidelity,mean_time_s,mean_nbar"));
    assert!(dir.path().join("out/plot.svg").exists());
}
