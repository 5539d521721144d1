//! Named or file-based states, measurements and input ensembles.

use std::path::Path;

use mdi_core::linalg::HermitianOperator;
use mdi_core::quantum::{self, InputEnsemble, Povm, QuantumState};
use mdi_core::scenario::{pairs_to_matrix, Behaviour};
use mdi_core::{Error, Result};
use serde::de::DeserializeOwned;
use serde::Deserialize;

fn schema(path: &str, message: impl Into<String>) -> Error {
    Error::Schema { path: path.into(), message: message.into() }
}

fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path)?;
    let de = &mut serde_json::Deserializer::from_str(&text);
    serde_path_to_error::deserialize(de).map_err(|e| schema(&e.path().to_string(), e.inner().to_string()))
}

/// `{"factors": [2, 2], "matrix": [[re, im], ...]}`, row-major.
#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct StateFile {
    factors: Vec<usize>,
    matrix: Vec<[f64; 2]>,
}

/// `{"factors": [2, 2], "elements": [[[re, im], ...], ...]}`.
#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct PovmFile {
    factors: Vec<usize>,
    elements: Vec<Vec<[f64; 2]>>,
    #[serde(default)]
    label: Option<String>,
}

/// `{"states": [[[re, im], ...], ...]}`.
#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct EnsembleFile {
    states: Vec<Vec<[f64; 2]>>,
}

pub fn state(spec: &str, w: Option<f64>) -> Result<QuantumState> {
    let need_w = || w.ok_or_else(|| Error::InvalidState(format!("state {spec:?} needs --w")));
    match spec {
        "werner" => quantum::werner(need_w()?),
        "ghz" => Ok(quantum::ghz()),
        "phi-plus" => Ok(quantum::bell_states()[0].clone()),
        "mixed" => Ok(QuantumState::maximally_mixed(vec![2, 2])),
        "mixed3" => Ok(QuantumState::maximally_mixed(vec![2, 2, 2])),
        // One-dimensional hidden system: the box measures its input alone.
        "none" => Ok(QuantumState::maximally_mixed(vec![1])),
        path if Path::new(path).is_file() => {
            let f: StateFile = read_json(Path::new(path))?;
            let m = pairs_to_matrix(&f.matrix).map_err(|msg| schema("matrix", msg))?;
            QuantumState::from_matrix(m, f.factors)
        }
        _ => Err(Error::Unsupported(format!("state {spec:?}; expected werner, ghz, phi-plus, mixed, mixed3, none or a JSON file"))),
    }
}

pub fn measurement(spec: &str) -> Result<Povm> {
    match spec {
        "bsm" => Ok(quantum::bsm()),
        "tetra-povm" => Ok(quantum::tetrahedral_povm()),
        "computational" => Ok(quantum::computational_povm(2)),
        path if Path::new(path).is_file() => {
            let f: PovmFile = read_json(Path::new(path))?;
            let elements = f
                .elements
                .iter()
                .enumerate()
                .map(|(k, pairs)| {
                    let m = pairs_to_matrix(pairs).map_err(|msg| schema(&format!("elements[{k}]"), msg))?;
                    HermitianOperator::new(m, f.factors.clone())
                })
                .collect::<Result<Vec<_>>>()?;
            Povm::new(elements, f.label.unwrap_or_else(|| path.to_string()))
        }
        _ => Err(Error::Unsupported(format!("measurement {spec:?}; expected bsm, tetra-povm, computational or a JSON file"))),
    }
}

pub fn ensemble(spec: &str) -> Result<InputEnsemble> {
    match spec {
        "tomo4" => Ok(quantum::tomo4_inputs()),
        "tetra" => Ok(quantum::tetrahedron_inputs()),
        path if Path::new(path).is_file() => {
            let f: EnsembleFile = read_json(Path::new(path))?;
            let states = f
                .states
                .iter()
                .enumerate()
                .map(|(x, pairs)| {
                    let m = pairs_to_matrix(pairs).map_err(|msg| schema(&format!("states[{x}]"), msg))?;
                    let d = m.nrows();
                    QuantumState::from_matrix(m, vec![d])
                })
                .collect::<Result<Vec<_>>>()?;
            InputEnsemble::new(states)
        }
        _ => Err(Error::Unsupported(format!("ensemble {spec:?}; expected tomo4, tetra or a JSON file"))),
    }
}

pub fn behaviour_file(path: &Path) -> Result<Behaviour> {
    Behaviour::from_json(&std::fs::read_to_string(path)?)
}
