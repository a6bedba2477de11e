use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn recsim(args: &[&str], out_dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_recsim"))
        .args(args)
        .env("RECSIM_OUT_DIR", out_dir)
        .env_remove("RUST_LOG")
        .output()
        .unwrap()
}

const SMALL: &[&str] = &["--users", "30", "--items", "20", "--updates-per-user", "30"];

fn with_small<'a>(args: &[&'a str]) -> Vec<&'a str> {
    let mut v = args.to_vec();
    v.extend_from_slice(SMALL);
    v
}

#[test]
fn simulate_prints_one_report_row() {
    let dir = tempfile::tempdir().unwrap();
    let out = recsim(&with_small(&["simulate", "--phi", "0.4", "--genres", "4", "-k", "3"]), dir.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = String::from_utf8(out.stdout).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert!(lines[0].starts_with("# config: {"));
    assert_eq!(lines[1], "phi,G,k,f1,b,similarity,instance,omega,omega1,auc_real,auc_est,fallbacks");
    assert!(lines[2].starts_with("0.4,4,3,,1,cn,0,"));
    assert_eq!(lines.len(), 3);
}

#[test]
fn simulate_writes_trace_snapshot_and_scores() {
    let dir = tempfile::tempdir().unwrap();
    let trace = dir.path().join("trace.csv");
    let snap = dir.path().join("edges.csv");
    let scores = dir.path().join("scores.csv");
    let args = with_small(&[
        "simulate",
        "--trace",
        trace.to_str().unwrap(),
        "--snapshot",
        snap.to_str().unwrap(),
        "--dump-scores",
        scores.to_str().unwrap(),
        "--user",
        "3",
        "--json",
    ]);
    let out = recsim(&args, dir.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let report: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(report["config"]["n_users"], 30);
    let trace = fs::read_to_string(trace).unwrap();
    assert_eq!(trace.lines().next(), Some("step,user,channel,item,genre,match"));
    assert_eq!(trace.lines().count(), 1 + 30 * 30);
    let snap = fs::read_to_string(snap).unwrap();
    assert_eq!(snap.lines().next(), Some("user_id,item_id,provenance"));
    assert_eq!(snap.lines().count(), 1 + 30 * 7);
    let scores = fs::read_to_string(scores).unwrap();
    assert_eq!(scores.lines().count(), 1 + 20 - 7);
}

#[test]
fn config_errors_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let out = recsim(&["simulate", "--phi", "1.5"], dir.path());
    assert_eq!(out.status.code(), Some(2));
    let bad = dir.path().join("bad.json");
    fs::write(&bad, r#"{"n_users": 10, "no_such_key": 1}"#).unwrap();
    let out = recsim(&["simulate", "--config", bad.to_str().unwrap()], dir.path());
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("no_such_key"));
    let out = recsim(&["plot", "x.csv", "--kind", "nope"], dir.path());
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn missing_ratings_file_is_a_run_failure() {
    let dir = tempfile::tempdir().unwrap();
    let out = recsim(&["movielens", "--ratings", "/nonexistent/u.data"], dir.path());
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn sweep_defaults_into_output_directory_and_plots() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("spec.json");
    fs::write(&cfg, r#"{"base": {"n_genres": 4, "k": 3}, "instances": 2}"#).unwrap();
    let args = with_small(&["sweep", "--config", cfg.to_str().unwrap(), "--phi", "0.2,0.9", "--jobs", "2"]);
    let out = recsim(&args, dir.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let csv_path = dir.path().join("sweep.csv");
    let csv = fs::read_to_string(&csv_path).unwrap();
    let data: Vec<&str> = csv.lines().filter(|l| !l.starts_with('#')).collect();
    assert_eq!(data.len(), 1 + 2 * (2 + 2));
    assert!(data[1].starts_with("0.2,4,3,,1,cn,0,"));

    let again = recsim(&args, dir.path());
    assert!(again.status.success());
    assert_eq!(fs::read_to_string(&csv_path).unwrap(), csv);

    let out = recsim(&["plot", csv_path.to_str().unwrap()], dir.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(dir.path().join("omega-phi.svg").exists());
    assert!(dir.path().join("auc-phi.svg").exists());
    assert!(!dir.path().join("omega1-f1.svg").exists());
}

#[test]
fn movielens_fixture_sweep() {
    let dir = tempfile::tempdir().unwrap();
    let fixture = concat!(env!("CARGO_MANIFEST_DIR"), "/../core/tests/fixtures/u.data");
    let out_csv = dir.path().join("ml.csv");
    let out = recsim(
        &[
            "movielens",
            "--ratings",
            fixture,
            "--phi",
            "0.2,1",
            "--instances",
            "2",
            "--updates-per-user",
            "50",
            "--output",
            out_csv.to_str().unwrap(),
        ],
        dir.path(),
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = fs::read_to_string(out_csv).unwrap();
    let data: Vec<&str> = csv.lines().filter(|l| !l.starts_with('#')).collect();
    assert_eq!(data.len(), 1 + 2 * 4);
    // replay rows leave the genre and k columns empty
    assert!(data[1].starts_with("0.2,,,,1,cn,0,"));
}

#[test]
fn verify_passes() {
    let dir = tempfile::tempdir().unwrap();
    let out = recsim(&["verify", "--seed", "9"], dir.path());
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.lines().count() >= 7);
    assert!(text.lines().all(|l| l.starts_with("PASS ")));
}
