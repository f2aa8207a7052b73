use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_sensact"))
}

fn config() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../configs/cw.json")
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("spawn sensact")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn stdout(out: &Output) -> String {
    String::from_utf8(out.stdout.clone()).unwrap()
}

fn build_model(dir: &Path) -> PathBuf {
    let path = dir.join("model.json");
    let out = run(&["model", "build", "--config", config().to_str().unwrap(), "--out", path.to_str().unwrap()]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    path
}

fn json(out: &Output) -> serde_json::Value {
    serde_json::from_slice(&out.stdout).expect("json on stdout")
}

#[test]
fn model_build_is_byte_reproducible() {
    let dir = TempDir::new().unwrap();
    let a = build_model(dir.path());
    let first = std::fs::read(&a).unwrap();
    let b = build_model(dir.path());
    assert_eq!(first, std::fs::read(b).unwrap());
}

#[test]
fn model_summary_lists_four_modes() {
    let dir = TempDir::new().unwrap();
    let path = dir.path().join("m.json");
    let out = run(&[
        "model", "build", "--config", config().to_str().unwrap(), "--out", path.to_str().unwrap(), "--json",
    ]);
    assert_eq!(code(&out), 0);
    let v = json(&out);
    let modes = v["modes"].as_array().unwrap();
    assert_eq!(modes.len(), 4);
    let rho = modes[1]["spectral_radius"].as_f64().unwrap();
    assert!((rho - 0.2016).abs() < 1e-3);
}

#[test]
fn search_finds_shortest_optimum() {
    let dir = TempDir::new().unwrap();
    let model = build_model(dir.path());
    let out = run(&["seq", "search", "--model", model.to_str().unwrap(), "--n-max", "8", "--json"]);
    assert_eq!(code(&out), 0);
    let v = json(&out);
    assert_eq!(v["best"]["word"], "0011");
    assert_eq!(v["lengths"], serde_json::json!([1, 2, 3, 4]));
    let ties: Vec<&str> = v["tie_class"].as_array().unwrap().iter().map(|t| t.as_str().unwrap()).collect();
    assert_eq!(ties, ["0011", "0110", "1001", "1100"]);
}

#[test]
fn infeasible_search_exits_zero() {
    let dir = TempDir::new().unwrap();
    let model = build_model(dir.path());
    let out = run(&["seq", "search", "--model", model.to_str().unwrap(), "--n-max", "3", "--json"]);
    assert_eq!(code(&out), 0);
    assert!(json(&out)["best"].is_null());
}

#[test]
fn check_reports_admissibility_and_core() {
    let dir = TempDir::new().unwrap();
    let model = build_model(dir.path());
    let out = run(&["seq", "check", "--model", model.to_str().unwrap(), "00110011", "--json"]);
    assert_eq!(code(&out), 0);
    let v = json(&out);
    assert_eq!(v["core"], "0011");
    assert_eq!(v["reducible"], true);
    assert_eq!(v["admissibility"]["admissible"], true);
}

#[test]
fn dwell_with_published_rates() {
    let dir = TempDir::new().unwrap();
    let model = build_model(dir.path());
    let out = run(&[
        "seq", "dwell", "--model", model.to_str().unwrap(), "01", "--rates", "1.0063,0.2016,0.0332,1.0063", "--c",
        "51.950", "--json",
    ]);
    assert_eq!(code(&out), 0);
    let v = json(&out);
    let lhs = v["dwell"]["lhs_control"].as_f64().unwrap();
    assert!((lhs - 6.3054).abs() < 0.01, "{lhs}");
}

#[test]
fn bad_rate_count_is_an_input_error() {
    let dir = TempDir::new().unwrap();
    let model = build_model(dir.path());
    let out = run(&["seq", "dwell", "--model", model.to_str().unwrap(), "01", "--rates", "1,2,3"]);
    assert_eq!(code(&out), 2);
}

#[test]
fn invalid_bitstring_exits_two() {
    let dir = TempDir::new().unwrap();
    let model = build_model(dir.path());
    let out = run(&["seq", "check", "--model", model.to_str().unwrap(), "01a1"]);
    assert_eq!(code(&out), 2);
}

#[test]
fn unknown_config_key_exits_two() {
    let dir = TempDir::new().unwrap();
    let text = std::fs::read_to_string(config()).unwrap().replace("\"gains\"", "\"gainz\"");
    let cfg = dir.path().join("bad.json");
    std::fs::write(&cfg, text).unwrap();
    let out = run(&["model", "build", "--config", cfg.to_str().unwrap(), "--out", dir.path().join("m.json").to_str().unwrap()]);
    assert_eq!(code(&out), 2);
    assert!(String::from_utf8_lossy(&out.stderr).contains("gainz"));
}

#[test]
fn missing_model_exits_two() {
    let out = run(&["seq", "check", "--model", "/nonexistent/model.json", "0011"]);
    assert_eq!(code(&out), 2);
}

#[test]
fn unstabilizable_plant_exits_three() {
    let dir = TempDir::new().unwrap();
    let cfg = dir.path().join("unstab.json");
    std::fs::write(
        &cfg,
        r#"{"plant":{"discrete":{"a":[[1.1]],"b":[[0.0]]}},"c":[[1.0]],
            "noise":{"process":[[0.1]],"measurement":[[0.1]]},
            "gains":{},"cost":{"r_e":[[1.0]],"r_x":[[0.0]],"r_eta":0.0}}"#,
    )
    .unwrap();
    let out = run(&["model", "build", "--config", cfg.to_str().unwrap(), "--out", dir.path().join("m.json").to_str().unwrap()]);
    assert_eq!(code(&out), 3);
}

#[test]
fn unwritable_output_exits_four() {
    let dir = TempDir::new().unwrap();
    let model = build_model(dir.path());
    let blocker = dir.path().join("file");
    std::fs::write(&blocker, "").unwrap();
    let out = run(&[
        "sim", "run", "--model", model.to_str().unwrap(), "0011", "--runs", "2", "--steps", "4", "--out",
        blocker.join("sub").to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 4);
}

fn sim(dir: &Path, model: &Path, name: &str) -> PathBuf {
    let out_dir = dir.join(name);
    let out = run(&[
        "sim", "run", "--model", model.to_str().unwrap(), "0011", "--config", config().to_str().unwrap(), "--runs", "8",
        "--steps", "40", "--out", out_dir.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    out_dir
}

#[test]
fn seeded_simulation_is_byte_reproducible() {
    let dir = TempDir::new().unwrap();
    let model = build_model(dir.path());
    let a = sim(dir.path(), &model, "a");
    let b = sim(dir.path(), &model, "b");
    for file in ["trajectories.csv", "ensemble.csv", "metadata.json"] {
        assert_eq!(std::fs::read(a.join(file)).unwrap(), std::fs::read(b.join(file)).unwrap(), "{file}");
    }
}

#[test]
fn thread_count_does_not_change_output() {
    let dir = TempDir::new().unwrap();
    let model = build_model(dir.path());
    let a = sim(dir.path(), &model, "a");
    let out_dir = dir.path().join("single");
    let out = run(&[
        "--threads", "1", "sim", "run", "--model", model.to_str().unwrap(), "0011", "--config",
        config().to_str().unwrap(), "--runs", "8", "--steps", "40", "--out", out_dir.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0);
    assert_eq!(
        std::fs::read(a.join("trajectories.csv")).unwrap(),
        std::fs::read(out_dir.join("trajectories.csv")).unwrap()
    );
}

#[test]
fn csv_rows_match_headers() {
    let dir = TempDir::new().unwrap();
    let model = build_model(dir.path());
    let out = sim(dir.path(), &model, "s");
    let traj = std::fs::read_to_string(out.join("trajectories.csv")).unwrap();
    let mut lines = traj.lines();
    let header = lines.next().unwrap().split(',').count();
    assert_eq!(header, 3 + 6 + 6 + 3);
    let rows: Vec<&str> = lines.collect();
    assert_eq!(rows.len(), 8 * 41);
    assert!(rows.iter().all(|r| r.split(',').count() == header));

    let ens = std::fs::read_to_string(out.join("ensemble.csv")).unwrap();
    let mut lines = ens.lines();
    let header = lines.next().unwrap().split(',').count();
    let rows: Vec<&str> = lines.collect();
    assert_eq!(rows.len(), 41);
    assert!(rows.iter().all(|r| r.split(',').count() == header));

    let meta: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(out.join("metadata.json")).unwrap()).unwrap();
    assert_eq!(meta["metadata"]["seed"], 20240601);
    assert_eq!(meta["metadata"]["runs"], 8);
}

#[test]
fn chance_verify_reports_four_phases() {
    let dir = TempDir::new().unwrap();
    let model = build_model(dir.path());
    let out = run(&[
        "chance", "verify", "--model", model.to_str().unwrap(), "0011", "--bound", "10", "--delta", "0.05", "--block",
        "error", "--json",
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let v = json(&out);
    let phases = v["phases"].as_array().unwrap();
    assert_eq!(phases.len(), 4);
    let max = phases.iter().map(|p| p["radius"].as_f64().unwrap()).fold(0.0, f64::max);
    assert!((max - 9.54).abs() < 0.1, "{max}");
}

#[test]
fn steady_covariance_has_one_matrix_per_phase() {
    let dir = TempDir::new().unwrap();
    let model = build_model(dir.path());
    let out = run(&["cov", "steady", "--model", model.to_str().unwrap(), "0011"]);
    assert_eq!(code(&out), 0);
    let v = json(&out);
    assert_eq!(v["phases"].as_array().unwrap().len(), 4);
}

#[test]
fn text_output_names_modes_and_growth_constant() {
    let dir = TempDir::new().unwrap();
    let path = dir.path().join("m.json");
    let out = run(&["model", "build", "--config", config().to_str().unwrap(), "--out", path.to_str().unwrap()]);
    let text = stdout(&out);
    assert!(text.contains("control/actuate (A+BK)"));
    assert!(text.contains("growth constant c = 52.019"));
}
