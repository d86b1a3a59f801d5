use std::process::{Command, Output};

use noisy_nonlocal::games::rotated_bob_strategy;
use noisy_nonlocal::io::{AnyStrategy, StrategyFile};
use serde_json::Value;

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_noisy-nonlocal"))
        .args(args)
        .env_remove("NOISY_NONLOCAL_SEED")
        .output()
        .expect("binary runs")
}

fn json(args: &[&str]) -> Value {
    let out = run(args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    serde_json::from_slice(&out.stdout).expect("stdout is one JSON document")
}

fn stdout(out: &Output) -> String {
    String::from_utf8(out.stdout.clone()).unwrap()
}

fn temp_path(name: &str) -> std::path::PathBuf {
    std::env::temp_dir().join(format!("noisy-nonlocal-{}-{name}", std::process::id()))
}

#[test]
fn eval_canonical_values() {
    let chsh = json(&["eval", "--game", "chsh", "--strategy", "canonical", "--rho", "0.9"]);
    assert_eq!(chsh["schemaVersion"], 1);
    let v = chsh["violation"].as_f64().unwrap();
    assert!((v - 2.0 * 2f64.sqrt() * 0.9).abs() < 1e-9);
    let ms = json(&["eval", "--game", "magic_square", "--strategy", "canonical", "--rho", "0.5"]);
    assert!((ms["overall"].as_f64().unwrap() - 0.75).abs() < 1e-9);
    assert!((ms["parityPass"].as_f64().unwrap() - 1.0).abs() < 1e-12);
}

#[test]
fn eval_csv_lists_questions() {
    let out = run(&["--csv", "eval", "--game", "chsh", "--rho", "0.5"]);
    assert!(out.status.success());
    let text = stdout(&out);
    assert_eq!(text.lines().next(), Some("question,value"));
    assert_eq!(text.lines().count(), 5);
}

#[test]
fn malformed_strategy_is_a_validation_error() {
    let path = temp_path("bad.json");
    std::fs::write(&path, "{\"schemaVersion\": 1, \"game\": \"chsh\", \"bogus\": true}").unwrap();
    let out = run(&["eval", "--strategy", path.to_str().unwrap(), "--rho", "0.5"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("bogus"));
    assert!(out.stdout.is_empty());
    let missing = run(&["eval", "--strategy", "/nonexistent/strategy.json", "--rho", "0.5"]);
    assert_eq!(missing.status.code(), Some(2));
    assert_eq!(run(&["eval", "--game", "chsh", "--rho", "0.5", "--no-such-flag"]).status.code(), Some(2));
}

#[test]
fn strategy_file_matches_symbolic_constructor() {
    let s = AnyStrategy::Chsh(rotated_bob_strategy(2, 2, 0.2).unwrap());
    let path = temp_path("rotated.json");
    std::fs::write(&path, serde_json::to_string(&StrategyFile::from_strategy(&s)).unwrap()).unwrap();
    let from_file = json(&["eval", "--strategy", path.to_str().unwrap(), "--rho", "0.7"]);
    let symbolic = json(&[
        "eval", "--game", "chsh", "--strategy", "canonical-perturbed", "--theta", "0.2", "--n", "2", "--register", "2",
        "--rho", "0.7",
    ]);
    let (a, b) = (from_file["violation"].as_f64().unwrap(), symbolic["violation"].as_f64().unwrap());
    assert!((a - b).abs() < 1e-12);
    let clash = run(&["eval", "--game", "magic_square", "--strategy", path.to_str().unwrap(), "--rho", "0.7"]);
    assert_eq!(clash.status.code(), Some(2));
}

#[test]
fn certify_canonical_and_perturbed() {
    let canonical = json(&["certify", "--game", "chsh", "--rho", "0.8"]);
    assert!(canonical["gapExpectation"].as_f64().unwrap().abs() < 1e-12);
    for term in canonical["terms"].as_array().unwrap() {
        assert!(term["expectation"].as_f64().unwrap().abs() < 1e-12);
    }
    let perturbed = json(&["certify", "--game", "chsh", "--strategy", "canonical-perturbed", "--theta", "0.2", "--rho", "0.8"]);
    let gap = perturbed["gapExpectation"].as_f64().unwrap();
    let bound = perturbed["bound"].as_f64().unwrap();
    let value = perturbed["value"].as_f64().unwrap();
    assert!(gap > 0.0);
    assert!((gap - (bound - value)).abs() < 1e-9);
    assert!((gap - perturbed["termSum"].as_f64().unwrap()).abs() < 1e-9);
    assert_eq!(perturbed["valid"], true);
    assert_eq!(run(&["certify", "--game", "chsh", "--rho", "0"]).status.code(), Some(2));
    assert_eq!(run(&["certify", "--game", "two_out_of_n", "--n", "2", "--rho", "0.5"]).status.code(), Some(2));
}

#[test]
fn selftest_two_out_of_three() {
    let report = json(&["selftest", "--game", "two_out_of_n", "--n", "3", "--rho", "0.7"]);
    assert_eq!(report["registerIndices"], serde_json::json!([1, 2, 3]));
    assert_eq!(report["registersDistinct"], true);
    assert!(report["maxDistance"].as_f64().unwrap() < 1e-9);
}

#[test]
fn selftest_threshold_sets_exit_code() {
    let args = ["selftest", "--game", "chsh", "--strategy", "canonical-perturbed", "--theta", "0.3", "--rho", "0.7"];
    let strict = run(&[&args[..], &["--threshold", "0.05"]].concat());
    assert_eq!(strict.status.code(), Some(1));
    let doc: Value = serde_json::from_slice(&strict.stdout).unwrap();
    assert_eq!(doc["threshold"]["passed"], false);
    assert_eq!(run(&[&args[..], &["--threshold", "5"]].concat()).status.code(), Some(0));
}

#[test]
fn selftest_sweep_emits_csv() {
    let out = run(&["selftest", "--game", "chsh", "--n", "3", "--register", "2", "--rho", "0.7", "--sweep", "0.3,0.1,0.03"]);
    assert!(out.status.success());
    let text = stdout(&out);
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("theta,epsV,maxDistance,registers"));
    let rows: Vec<Vec<String>> = lines.map(|l| l.split(',').map(String::from).collect()).collect();
    assert_eq!(rows.len(), 3);
    let dist: Vec<f64> = rows.iter().map(|r| r[2].parse().unwrap()).collect();
    assert!(dist[0] > dist[1] && dist[1] > dist[2]);
    assert!(rows.iter().all(|r| r[3] == "2"));
}

#[test]
fn simulate_is_reproducible() {
    let args = ["--seed", "11", "simulate", "--game", "chsh", "--rho", "0.8", "--t", "500"];
    let a = run(&args);
    let b = run(&args);
    assert!(a.status.success());
    assert_eq!(a.stdout, b.stdout);
    let doc: Value = serde_json::from_slice(&a.stdout).unwrap();
    assert_eq!(doc["transcript"]["verdict"]["accepted"], true);
    assert!(doc["transcript"]["trials"].as_array().unwrap().is_empty());
    let other = run(&["--seed", "12", "simulate", "--game", "chsh", "--rho", "0.8", "--t", "500"]);
    assert_ne!(a.stdout, other.stdout);
}

#[test]
fn simulate_seed_from_environment() {
    let with_env = Command::new(env!("CARGO_BIN_EXE_noisy-nonlocal"))
        .args(["simulate", "--game", "chsh", "--rho", "0.8", "--t", "200"])
        .env("NOISY_NONLOCAL_SEED", "11")
        .output()
        .unwrap();
    let with_flag = run(&["--seed", "11", "simulate", "--game", "chsh", "--rho", "0.8", "--t", "200"]);
    assert_eq!(with_env.stdout, with_flag.stdout);
}

#[test]
fn simulate_exports_rounds() {
    let path = temp_path("rounds.csv");
    let doc = json(&[
        "simulate", "--game", "two_out_of_n", "--n", "4", "--rho", "0.8", "--t", "100", "--export-csv",
        path.to_str().unwrap(),
    ]);
    let t_prime = doc["transcript"]["tPrime"].as_u64().unwrap() as usize;
    assert!(t_prime >= 100);
    let text = std::fs::read_to_string(&path).unwrap();
    assert_eq!(text.lines().next(), Some("round,questions,answers,win"));
    assert_eq!(text.lines().count(), t_prime + 1);
}

#[test]
fn estimate_rho_inverts_exact_value() {
    let omega = 0.5 + 2f64.sqrt() * 0.7 / 4.0;
    let doc = json(&["estimate-rho", "--game", "chsh", "--omega", &omega.to_string(), "--rounds", "100000"]);
    assert!((doc["rhoHat"].as_f64().unwrap() - 0.7).abs() < 1e-12);
    let low = json(&["estimate-rho", "--game", "chsh", "--successes", "40", "--rounds", "100"]);
    assert_eq!(low["rhoHat"].as_f64().unwrap(), 0.0);
    assert!(!low["warnings"].as_array().unwrap().is_empty());
    let none = run(&["estimate-rho", "--game", "chsh", "--rounds", "100"]);
    assert_eq!(none.status.code(), Some(2));
}

#[test]
fn lemma_check_passes_and_depends_on_seed() {
    let a = json(&["lemma-check", "--instances", "10"]);
    assert_eq!(a["passed"], true);
    assert_eq!(a["checks"].as_array().unwrap().len(), 4);
    let again = json(&["lemma-check", "--instances", "10"]);
    assert_eq!(a, again);
    let other = json(&["--seed", "5", "lemma-check", "--instances", "10"]);
    assert_eq!(other["seed"], 5);
    assert_eq!(other["passed"], true);
    assert_ne!(a["checks"], other["checks"]);
}
