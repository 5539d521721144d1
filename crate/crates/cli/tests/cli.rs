use std::path::Path;
use std::process::{Command, Output};

use mdi_core::quantum::{bsm, tetrahedral_povm, tomo4_inputs, werner, QuantumState};
use mdi_core::randomness;
use mdi_core::scenario::{simulate_bipartite, simulate_single_box, Behaviour};

fn mdi(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mdi")).args(args).output().expect("binary runs")
}

fn field(out: &Output, key: &str) -> String {
    let text = String::from_utf8_lossy(&out.stdout);
    text.lines().find_map(|l| l.strip_prefix(&format!("{key}: "))).unwrap_or_else(|| panic!("no {key} in {text}")).to_string()
}

fn write_uniform(dir: &Path) -> String {
    let u = Behaviour::uniform(vec![4, 4], vec![tomo4_inputs(), tomo4_inputs()]).unwrap();
    let path = dir.join("uniform.json");
    std::fs::write(&path, u.to_json()).unwrap();
    path.to_string_lossy().into_owned()
}

#[test]
fn uniform_behaviour_is_feasible() {
    let dir = tempfile::tempdir().unwrap();
    let path = write_uniform(dir.path());
    let out = mdi(&["certify", "bipartite", "--behavior", &path, "--relaxation", "ppt"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(field(&out, "verdict"), "feasible");
}

#[test]
fn werner_negativity_bound() {
    let out = mdi(&["negativity", "--state", "werner", "--w", "1", "--ensemble", "tomo4", "--measurement", "bsm"]);
    assert_eq!(out.status.code(), Some(0));
    let v: f64 = field(&out, "negativity").parse().unwrap();
    assert!(v <= 0.5 + 1e-6 && v > 0.4, "{v}");
}

#[test]
fn simulate_round_trips_into_randomness() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("box.json");
    let path = path.to_str().unwrap();
    let out = mdi(&["simulate", "--state", "none", "--measurement", "tetra-povm", "--ensemble", "tomo4", "--out", path]);
    assert_eq!(out.status.code(), Some(0));
    let from_file = Behaviour::from_json(&std::fs::read_to_string(path).unwrap()).unwrap();
    let direct = simulate_single_box(&tetrahedral_povm(), &QuantumState::maximally_mixed(vec![1]), &tomo4_inputs()).unwrap();
    assert_eq!(from_file.probs(), direct.probs());

    let out = mdi(&["randomness", "single", "--behavior", path, "--targets", "0"]);
    assert_eq!(out.status.code(), Some(0));
    let g: f64 = field(&out, "guessing_probability").parse().unwrap();
    let expected = randomness::single_box_guessing(&direct, 0).unwrap().guessing_probability;
    assert_eq!(g.to_bits(), expected.to_bits());
    assert!((g - 0.25).abs() < 1e-5);
}

#[test]
fn simulate_round_trips_into_certify() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("werner.json");
    let path = path.to_str().unwrap();
    assert_eq!(mdi(&["simulate", "--state", "werner", "--w", "0.8", "--out", path]).status.code(), Some(0));
    let out = mdi(&["certify", "bipartite", "--behavior", path]);
    assert_eq!(field(&out, "verdict"), "infeasible");
    let b = simulate_bipartite(&werner(0.8).unwrap(), &bsm(), &bsm(), &tomo4_inputs(), &tomo4_inputs()).unwrap();
    let res = mdi_core::certify::certify_bipartite(&b, Default::default()).unwrap();
    assert_eq!(field(&out, "margin").parse::<f64>().unwrap().to_bits(), res.margin.to_bits());
}

#[test]
fn witness_file_is_written_for_entangled_data() {
    let dir = tempfile::tempdir().unwrap();
    let wit = dir.path().join("w.json");
    let out = mdi(&["certify", "bipartite", "--state", "werner", "--w", "0.9", "--witness", wit.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0));
    let w = mdi_core::certify::WitnessCoefficients::from_json(&std::fs::read_to_string(&wit).unwrap()).unwrap();
    let b = simulate_bipartite(&werner(0.9).unwrap(), &bsm(), &bsm(), &tomo4_inputs(), &tomo4_inputs()).unwrap();
    assert!(w.detects(&b).unwrap());
}

#[test]
fn sweep_writes_csv() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("sweep.csv");
    let out = mdi(&["sweep-werner", "--ensemble", "tomo4", "--grid", "2", "--out", csv.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let text = std::fs::read_to_string(&csv).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "w,guessing_probability,min_entropy_bits,status,runtime_ms");
    assert_eq!(lines.len(), 3);
    let last: Vec<&str> = lines[2].split(',').collect();
    assert!((last[2].parse::<f64>().unwrap() - 4.0).abs() < 1e-3, "{}", lines[2]);
}

#[test]
fn negativity_sweep_writes_csv() {
    let out = mdi(&["sweep-werner", "--ensemble", "tomo4", "--grid", "3", "--quantity", "negativity"]);
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8_lossy(&out.stdout);
    assert_eq!(text.lines().next(), Some("w,value,status,runtime_ms"));
    assert_eq!(text.lines().count(), 4);
}

/// The tetrahedron endpoint of the sweep reads log2(12) rather than 4 bits: every
/// outcome pair at every target has probability 1/12, which bounds G from below.
#[test]
#[ignore = "w=1 row is log2(12) = 3.585 bits for tetrahedron inputs; see README"]
fn tetrahedron_sweep_endpoint_reads_four_bits() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("fig1.csv");
    let out = mdi(&["sweep-werner", "--ensemble", "tetra", "--grid", "21", "--out", csv.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0));
    let text = std::fs::read_to_string(&csv).unwrap();
    let last: Vec<&str> = text.lines().last().unwrap().split(',').collect();
    assert!((last[2].parse::<f64>().unwrap() - 4.0).abs() < 1e-3, "{last:?}");
}

#[test]
fn schema_errors_exit_with_one_and_name_the_path() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.json");
    std::fs::write(&path, r#"{"parties": 2, "outcome_counts": [4, "x"]}"#).unwrap();
    let out = mdi(&["certify", "bipartite", "--behavior", path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("outcome_counts[1]"));
}

#[test]
fn unknown_specs_and_bad_worker_counts_are_input_errors() {
    assert_eq!(mdi(&["negativity", "--state", "bogus"]).status.code(), Some(1));
    assert_eq!(mdi(&["negativity", "--state", "werner"]).status.code(), Some(1));
    assert_eq!(mdi(&["negativity", "--state", "werner", "--w", "1.5"]).status.code(), Some(1));
    let out = Command::new(env!("CARGO_BIN_EXE_mdi")).args(["negativity", "--state", "mixed"]).env("MDI_WORKERS", "zero").output().unwrap();
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn file_based_specs_are_accepted() {
    let dir = tempfile::tempdir().unwrap();
    let state = dir.path().join("state.json");
    let h = 0.5;
    let mut pairs = vec![[0.0, 0.0]; 16];
    for (i, j) in [(0, 0), (0, 3), (3, 0), (3, 3)] {
        pairs[i * 4 + j] = [h, 0.0];
    }
    std::fs::write(&state, serde_json::json!({"factors": [2, 2], "matrix": pairs}).to_string()).unwrap();
    let ens = dir.path().join("ens.json");
    let states: Vec<Vec<[f64; 2]>> = tomo4_inputs().states().iter().map(|s| mdi_core::scenario::matrix_to_pairs(s.matrix())).collect();
    std::fs::write(&ens, serde_json::json!({ "states": states }).to_string()).unwrap();
    let out = mdi(&["negativity", "--state", state.to_str().unwrap(), "--ensemble", ens.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let v: f64 = field(&out, "negativity").parse().unwrap();
    assert!(v > 0.4 && v <= 0.5 + 1e-6);
}
