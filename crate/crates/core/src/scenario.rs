//! Behaviours, effective POVMs, forward simulation and tomographic reconstruction.
//!
//! Every party's measurement acts on `input ⊗ system`. For `n` parties the
//! global space is ordered `in_1, sys_1, .., in_n, sys_n`; the shared state
//! lives on `sys_1 ⊗ .. ⊗ sys_n` and effective POVMs on `in_1 ⊗ .. ⊗ in_n`.

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::error::{Error, Result};
use crate::exec::{self, Execution};
use crate::linalg::{self, CMatrix, HermitianOperator};
use crate::quantum::{InputEnsemble, Povm, QuantumState};
use crate::tolerances;

/// Row-major multi-index helpers.
pub fn tuple_index(digits: &[usize], radices: &[usize]) -> usize {
    digits.iter().zip(radices).fold(0, |acc, (&d, &r)| acc * r + d)
}

pub fn tuple_digits(mut index: usize, radices: &[usize]) -> Vec<usize> {
    let mut out = vec![0; radices.len()];
    for k in (0..radices.len()).rev() {
        out[k] = index % radices[k];
        index /= radices[k];
    }
    out
}

/// Probability table `p(outcomes | inputs)` for 1 to 3 parties.
///
/// Flat index: input tuple major, outcome tuple minor, each tuple row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct Behaviour {
    outcome_counts: Vec<usize>,
    ensembles: Vec<InputEnsemble>,
    probs: Vec<f64>,
    meta: Map<String, Value>,
}

impl Behaviour {
    pub fn new(outcome_counts: Vec<usize>, ensembles: Vec<InputEnsemble>, probs: Vec<f64>, meta: Map<String, Value>) -> Result<Self> {
        let parties = outcome_counts.len();
        if !(1..=3).contains(&parties) {
            return Err(Error::MalformedBehaviour(format!("{parties} parties; expected 1 to 3")));
        }
        if ensembles.len() != parties {
            return Err(Error::MalformedBehaviour(format!("{} ensembles for {parties} parties", ensembles.len())));
        }
        if outcome_counts.contains(&0) {
            return Err(Error::MalformedBehaviour("zero outcome count".into()));
        }
        let b = Self { outcome_counts, ensembles, probs, meta };
        let expected = b.input_tuples() * b.outcome_tuples();
        if b.probs.len() != expected {
            return Err(Error::MalformedBehaviour(format!("{} probabilities, expected {expected}", b.probs.len())));
        }
        let tol = tolerances::NORMALIZATION;
        if let Some((i, p)) = b.probs.iter().enumerate().find(|(_, p)| !p.is_finite() || **p < -tol || **p > 1.0 + tol) {
            return Err(Error::MalformedBehaviour(format!("probability {p} at index {i} outside [0, 1]")));
        }
        let no = b.outcome_tuples();
        for xi in 0..b.input_tuples() {
            let s: f64 = b.probs[xi * no..(xi + 1) * no].iter().sum();
            if (s - 1.0).abs() > tol {
                return Err(Error::MalformedBehaviour(format!("input tuple {xi} sums to {s}")));
            }
        }
        Ok(b)
    }

    pub fn parties(&self) -> usize {
        self.outcome_counts.len()
    }

    pub fn outcome_counts(&self) -> &[usize] {
        &self.outcome_counts
    }

    pub fn input_counts(&self) -> Vec<usize> {
        self.ensembles.iter().map(|e| e.len()).collect()
    }

    pub fn input_dims(&self) -> Vec<usize> {
        self.ensembles.iter().map(|e| e.dim()).collect()
    }

    pub fn ensembles(&self) -> &[InputEnsemble] {
        &self.ensembles
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn meta(&self) -> &Map<String, Value> {
        &self.meta
    }

    pub fn meta_mut(&mut self) -> &mut Map<String, Value> {
        &mut self.meta
    }

    pub fn input_tuples(&self) -> usize {
        self.ensembles.iter().map(|e| e.len()).product()
    }

    pub fn outcome_tuples(&self) -> usize {
        self.outcome_counts.iter().product()
    }

    pub fn index(&self, inputs: &[usize], outcomes: &[usize]) -> usize {
        tuple_index(inputs, &self.input_counts()) * self.outcome_tuples() + tuple_index(outcomes, &self.outcome_counts)
    }

    pub fn prob(&self, inputs: &[usize], outcomes: &[usize]) -> f64 {
        self.probs[self.index(inputs, outcomes)]
    }

    /// Product of the input states selected by an input tuple.
    pub fn input_product(&self, input_tuple: usize) -> CMatrix {
        let digits = tuple_digits(input_tuple, &self.input_counts());
        linalg::kron_all(digits.iter().zip(&self.ensembles).map(|(&x, e)| e.states()[x].matrix()))
    }

    /// Convex combination `w * self + (1 - w) * other`; shapes must agree.
    pub fn mix(&self, other: &Self, w: f64) -> Result<Self> {
        if self.outcome_counts != other.outcome_counts || self.input_counts() != other.input_counts() {
            return Err(Error::MalformedBehaviour("cannot mix behaviours of different shape".into()));
        }
        let probs = self.probs.iter().zip(&other.probs).map(|(a, b)| w * a + (1.0 - w) * b).collect();
        Self::new(self.outcome_counts.clone(), self.ensembles.clone(), probs, Map::new())
    }

    /// Uniform distribution over outcomes for every input.
    pub fn uniform(outcome_counts: Vec<usize>, ensembles: Vec<InputEnsemble>) -> Result<Self> {
        let no: usize = outcome_counts.iter().product();
        let ni: usize = ensembles.iter().map(|e| e.len()).product();
        Self::new(outcome_counts, ensembles, vec![1.0 / no as f64; no * ni], Map::new())
    }

    pub fn to_json(&self) -> String {
        let file = BehaviourFile {
            parties: self.parties(),
            outcome_counts: self.outcome_counts.clone(),
            ensembles: self.ensembles.iter().map(|e| e.states().iter().map(|s| matrix_to_pairs(s.matrix())).collect()).collect(),
            probs: self.probs.clone(),
            meta: self.meta.clone(),
        };
        serde_json::to_string_pretty(&file).expect("behaviour serializes")
    }

    /// Parse and validate a behaviour; schema problems report the JSON path.
    pub fn from_json(text: &str) -> Result<Self> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let file: BehaviourFile = serde_path_to_error::deserialize(de)
            .map_err(|e| Error::Schema { path: e.path().to_string(), message: e.inner().to_string() })?;
        if file.parties != file.outcome_counts.len() {
            return Err(schema("outcome_counts", format!("{} entries for {} parties", file.outcome_counts.len(), file.parties)));
        }
        if file.ensembles.len() != file.parties {
            return Err(schema("ensembles", format!("{} ensembles for {} parties", file.ensembles.len(), file.parties)));
        }
        let mut ensembles = Vec::with_capacity(file.parties);
        for (p, members) in file.ensembles.iter().enumerate() {
            let mut states = Vec::with_capacity(members.len());
            for (x, pairs) in members.iter().enumerate() {
                let path = format!("ensembles[{p}][{x}]");
                let m = pairs_to_matrix(pairs).map_err(|msg| schema(&path, msg))?;
                let d = m.nrows();
                states.push(QuantumState::from_matrix(m, vec![d]).map_err(|e| schema(&path, e.to_string()))?);
            }
            ensembles.push(InputEnsemble::new(states).map_err(|e| schema(&format!("ensembles[{p}]"), e.to_string()))?);
        }
        Self::new(file.outcome_counts, ensembles, file.probs, file.meta).map_err(|e| schema("probs", e.to_string()))
    }
}

fn schema(path: &str, message: impl Into<String>) -> Error {
    Error::Schema { path: path.to_string(), message: message.into() }
}

/// On-disk layout shared with the CLI.
#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct BehaviourFile {
    parties: usize,
    outcome_counts: Vec<usize>,
    ensembles: Vec<Vec<Vec<[f64; 2]>>>,
    probs: Vec<f64>,
    #[serde(default)]
    meta: Map<String, Value>,
}

/// Row-major `[re, im]` pairs.
pub fn matrix_to_pairs(m: &CMatrix) -> Vec<[f64; 2]> {
    let mut out = Vec::with_capacity(m.len());
    for r in 0..m.nrows() {
        for c in 0..m.ncols() {
            out.push([m[(r, c)].re, m[(r, c)].im]);
        }
    }
    out
}

pub fn pairs_to_matrix(pairs: &[[f64; 2]]) -> std::result::Result<CMatrix, String> {
    let d = (pairs.len() as f64).sqrt().round() as usize;
    if d == 0 || d * d != pairs.len() {
        return Err(format!("{} entries do not form a square matrix", pairs.len()));
    }
    Ok(CMatrix::from_fn(d, d, |r, c| {
        let [re, im] = pairs[r * d + c];
        Complex64::new(re, im)
    }))
}

/// Membership class of an effective-POVM family.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum FamilyStructure {
    /// No-signalling effective POVM of a physical realization.
    NoSignalling,
    /// Relaxed separable cone (PPT or symmetric extension).
    SeparableRelaxed,
    /// PT-positive no-signalling operators.
    PptPositive,
    /// Three-party fully separable relaxation.
    FullySeparableRelaxed,
    /// Three-party biseparable relaxation.
    BiseparableRelaxed,
}

/// Operators `M_o` on the joint input space indexed by outcome tuples (row-major).
#[derive(Clone, Debug)]
pub struct EffectivePovmFamily {
    pub outcome_counts: Vec<usize>,
    pub input_dims: Vec<usize>,
    pub operators: Vec<HermitianOperator>,
    pub structure: FamilyStructure,
    /// Total sum equals `normalization * I`.
    pub normalization: f64,
}

impl EffectivePovmFamily {
    pub fn operator(&self, outcomes: &[usize]) -> &HermitianOperator {
        &self.operators[tuple_index(outcomes, &self.outcome_counts)]
    }

    pub fn total(&self) -> HermitianOperator {
        let mut acc = HermitianOperator::zeros(self.input_dims.clone());
        for op in &self.operators {
            acc = acc.add(op).expect("family operators share factors");
        }
        acc
    }

    /// Largest deviation from the marginal structure: for every party, summing over its
    /// outcome must give an operator of the form `I ⊗ X` on that party's input.
    pub fn no_signalling_violation(&self) -> f64 {
        let n = self.outcome_counts.len();
        let mut worst: f64 = 0.0;
        for p in 0..n {
            let rest: Vec<usize> = (0..n).filter(|&q| q != p).collect();
            let rest_counts: Vec<usize> = rest.iter().map(|&q| self.outcome_counts[q]).collect();
            let combos: usize = rest_counts.iter().product();
            for ri in 0..combos {
                let rd = tuple_digits(ri, &rest_counts);
                let mut sum = HermitianOperator::zeros(self.input_dims.clone());
                for a in 0..self.outcome_counts[p] {
                    let mut digits = vec![0; n];
                    digits[p] = a;
                    for (k, &q) in rest.iter().enumerate() {
                        digits[q] = rd[k];
                    }
                    sum = sum.add(self.operator(&digits)).unwrap();
                }
                let keep: Vec<usize> = rest.clone();
                let reduced = sum.partial_trace(&keep).unwrap();
                let d = self.input_dims[p];
                let rebuilt = HermitianOperator::identity(vec![d]).scale(1.0 / d as f64).kron(&reduced);
                let order = insert_factor_permutation(n, p);
                let rebuilt = rebuilt.permute_factors(&order).unwrap();
                worst = worst.max(rebuilt.max_abs_diff(&sum));
            }
        }
        worst
    }

    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        self.operators.iter().zip(&other.operators).fold(0.0, |m, (a, b)| m.max(a.max_abs_diff(b)))
    }
}

/// Permutation moving factor 0 of `[p, rest..]` into position `p`.
pub(crate) fn insert_factor_permutation(n: usize, p: usize) -> Vec<usize> {
    // Result factor k comes from source factor perm[k]; source is [p, rest in order].
    (0..n)
        .map(|k| match k.cmp(&p) {
            std::cmp::Ordering::Equal => 0,
            std::cmp::Ordering::Less => k + 1,
            std::cmp::Ordering::Greater => k,
        })
        .collect()
}

/// Input dimension of each party from its POVM and the state's factor for that party.
fn input_dims(state: &QuantumState, povms: &[&Povm]) -> Result<Vec<usize>> {
    if state.factors().len() != povms.len() {
        return Err(Error::Dimension(format!("state has {} factors for {} parties", state.factors().len(), povms.len())));
    }
    povms
        .iter()
        .zip(state.factors())
        .enumerate()
        .map(|(p, (povm, &ds))| {
            if povm.dim() % ds != 0 {
                return Err(Error::Dimension(format!(
                    "party {p}: POVM dimension {} is not a multiple of system dimension {ds}",
                    povm.dim()
                )));
            }
            Ok(povm.dim() / ds)
        })
        .collect()
}

/// Effective POVM `M_o = Tr_sys[(⊗_p M_{o_p}) (I_in ⊗ rho)]` on the joint input space.
pub fn effective_povm_multi(state: &QuantumState, povms: &[&Povm]) -> Result<EffectivePovmFamily> {
    let din = input_dims(state, povms)?;
    let n = povms.len();
    let dsys = state.factors().to_vec();
    // Global factors in interleaved order.
    let mut global = Vec::with_capacity(2 * n);
    for p in 0..n {
        global.push(din[p]);
        global.push(dsys[p]);
    }
    // I_in ⊗ rho, with factors [in_1..in_n, sys_1..sys_n] then interleaved.
    let id_in = linalg::identity(din.iter().product());
    let stacked = linalg::kron(&id_in, state.matrix());
    let mut stacked_factors = din.clone();
    stacked_factors.extend_from_slice(&dsys);
    let perm: Vec<usize> = (0..2 * n).map(|k| if k % 2 == 0 { k / 2 } else { n + k / 2 }).collect();
    let embedded = linalg::permute_factors(&stacked, &stacked_factors, &perm)?;
    let keep: Vec<usize> = (0..n).map(|p| 2 * p).collect();

    let outcome_counts: Vec<usize> = povms.iter().map(|m| m.len()).collect();
    let total: usize = outcome_counts.iter().product();
    let operators = (0..total)
        .map(|oi| {
            let digits = tuple_digits(oi, &outcome_counts);
            let product = linalg::kron_all(digits.iter().zip(povms).map(|(&a, m)| m.elements()[a].matrix()));
            let reduced = linalg::partial_trace(&(product * &embedded), &global, &keep)?;
            // Exactly Hermitian up to rounding; symmetrize through the checked constructor.
            HermitianOperator::new(reduced, din.clone())
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(EffectivePovmFamily { outcome_counts, input_dims: din, operators, structure: FamilyStructure::NoSignalling, normalization: 1.0 })
}

/// Two-party effective POVM on `A0 ⊗ B0`.
pub fn effective_povm(state: &QuantumState, povm_a: &Povm, povm_b: &Povm) -> Result<EffectivePovmFamily> {
    effective_povm_multi(state, &[povm_a, povm_b])
}

/// Behaviour `p(o|x) = Tr[M_o (⊗ psi_x)]` of an effective POVM family.
pub fn behaviour_from_family(family: &EffectivePovmFamily, ensembles: Vec<InputEnsemble>, meta: Map<String, Value>) -> Result<Behaviour> {
    if ensembles.len() != family.input_dims.len() {
        return Err(Error::Dimension("one ensemble per party required".into()));
    }
    for (p, (e, &d)) in ensembles.iter().zip(&family.input_dims).enumerate() {
        if e.dim() != d {
            return Err(Error::Dimension(format!("party {p}: ensemble dimension {} but POVM input dimension {d}", e.dim())));
        }
    }
    let input_counts: Vec<usize> = ensembles.iter().map(|e| e.len()).collect();
    let ni: usize = input_counts.iter().product();
    let rows = exec::map_range(Execution::Parallel, ni, |xi| {
        let digits = tuple_digits(xi, &input_counts);
        let prod = linalg::kron_all(digits.iter().zip(&ensembles).map(|(&x, e)| e.states()[x].matrix()));
        family.operators.iter().map(|m| linalg::re_trace_product(m.matrix(), &prod)).collect::<Vec<f64>>()
    });
    Behaviour::new(family.outcome_counts.clone(), ensembles, rows.concat(), meta)
}

fn simulation_meta(povms: &[&Povm]) -> Map<String, Value> {
    let mut meta = Map::new();
    meta.insert("source".into(), Value::from("simulation"));
    meta.insert("measurements".into(), Value::from(povms.iter().map(|p| p.label().to_string()).collect::<Vec<_>>()));
    meta
}

pub fn simulate(state: &QuantumState, povms: &[&Povm], ensembles: &[InputEnsemble]) -> Result<Behaviour> {
    let family = effective_povm_multi(state, povms)?;
    behaviour_from_family(&family, ensembles.to_vec(), simulation_meta(povms))
}

pub fn simulate_bipartite(
    state: &QuantumState,
    povm_a: &Povm,
    povm_b: &Povm,
    ens_a: &InputEnsemble,
    ens_b: &InputEnsemble,
) -> Result<Behaviour> {
    simulate(state, &[povm_a, povm_b], &[ens_a.clone(), ens_b.clone()])
}

pub fn simulate_tripartite(state: &QuantumState, povms: [&Povm; 3], ensembles: [&InputEnsemble; 3]) -> Result<Behaviour> {
    let ens: Vec<InputEnsemble> = ensembles.iter().map(|&e| e.clone()).collect();
    simulate(state, &povms, &ens)
}

/// One box measuring `input ⊗ hidden`; pass a 1-dimensional hidden state when the box
/// measures the input alone.
pub fn simulate_single_box(povm: &Povm, hidden_state: &QuantumState, ens: &InputEnsemble) -> Result<Behaviour> {
    if hidden_state.factors().len() != 1 {
        let d = hidden_state.dim();
        let flat = QuantumState::from_matrix(hidden_state.matrix().clone(), vec![d])?;
        return simulate(&flat, &[povm], std::slice::from_ref(ens));
    }
    simulate(hidden_state, &[povm], std::slice::from_ref(ens))
}

/// Dual frame `D_x = Σ_x' G⁺_{x x'} psi_x'` of a complete ensemble.
pub fn dual_frame(ens: &InputEnsemble) -> Result<Vec<CMatrix>> {
    let needed = ens.dim() * ens.dim();
    if !ens.tomographically_complete() {
        return Err(Error::IncompleteEnsemble { rank: ens.gram_rank(), needed });
    }
    if ens.condition_number() > tolerances::MAX_GRAM_CONDITION {
        return Err(Error::IllConditioned(ens.condition_number()));
    }
    let g = ens.gram();
    let eig = g.clone().symmetric_eigen();
    let top = eig.eigenvalues.iter().fold(0.0f64, |m, &v| m.max(v));
    let n = g.nrows();
    let mut pinv = DMatrix::<f64>::zeros(n, n);
    for k in 0..n {
        let lam = eig.eigenvalues[k];
        if lam > tolerances::GRAM_RANK * top {
            let v = eig.eigenvectors.column(k);
            pinv += v * v.transpose() / lam;
        }
    }
    Ok((0..n)
        .map(|x| {
            let mut acc = CMatrix::zeros(ens.dim(), ens.dim());
            for y in 0..n {
                acc += ens.states()[y].matrix() * Complex64::new(pinv[(x, y)], 0.0);
            }
            acc
        })
        .collect())
}

/// Linear inversion `M_o = Σ_x p(o|x) ⊗_p D_{x_p}`.
pub fn tomographic_reconstruction(b: &Behaviour) -> Result<EffectivePovmFamily> {
    let frames = b.ensembles().iter().map(dual_frame).collect::<Result<Vec<_>>>()?;
    let input_counts = b.input_counts();
    let dims = b.input_dims();
    let d: usize = dims.iter().product();
    let duals: Vec<CMatrix> = (0..b.input_tuples())
        .map(|xi| {
            let digits = tuple_digits(xi, &input_counts);
            linalg::kron_all(digits.iter().zip(&frames).map(|(&x, f)| &f[x]))
        })
        .collect();
    let no = b.outcome_tuples();
    let operators = (0..no)
        .map(|oi| {
            let mut acc = CMatrix::zeros(d, d);
            for (xi, dual) in duals.iter().enumerate() {
                let p = b.probs()[xi * no + oi];
                if p != 0.0 {
                    acc += dual * Complex64::new(p, 0.0);
                }
            }
            HermitianOperator::new(acc, dims.clone())
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(EffectivePovmFamily {
        outcome_counts: b.outcome_counts().to_vec(),
        input_dims: dims,
        operators,
        structure: FamilyStructure::NoSignalling,
        normalization: 1.0,
    })
}
