//! Named states, measurements and input ensembles.

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::linalg::{self, CMatrix, HermitianOperator, ONE, ZERO};
use crate::tolerances;

/// A density matrix; each tensor factor is one party's system.
#[derive(Clone, Debug, PartialEq)]
pub struct QuantumState {
    op: HermitianOperator,
}

impl QuantumState {
    pub fn new(op: HermitianOperator) -> Result<Self> {
        let tr = op.trace();
        if (tr - 1.0).abs() > tolerances::STATE_VALIDATION {
            return Err(Error::InvalidState(format!("trace {tr} is not 1")));
        }
        let min = op.min_eigenvalue();
        if min < -tolerances::STATE_VALIDATION {
            return Err(Error::InvalidState(format!("negative eigenvalue {min:.3e}")));
        }
        Ok(Self { op })
    }

    pub fn from_matrix(mat: CMatrix, factors: Vec<usize>) -> Result<Self> {
        Self::new(HermitianOperator::new(mat, factors)?)
    }

    pub fn pure(amplitudes: &[Complex64], factors: Vec<usize>) -> Result<Self> {
        Self::new(HermitianOperator::projector(amplitudes).with_factors(factors)?)
    }

    pub fn maximally_mixed(factors: Vec<usize>) -> Self {
        let d: usize = factors.iter().product();
        Self { op: HermitianOperator::identity(factors).scale(1.0 / d as f64) }
    }

    /// Qubit state with the given Bloch vector (length at most one).
    pub fn bloch(v: [f64; 3]) -> Result<Self> {
        let [x, y, z] = v;
        let m = CMatrix::from_row_slice(
            2,
            2,
            &[
                Complex64::new((1.0 + z) / 2.0, 0.0),
                Complex64::new(x / 2.0, -y / 2.0),
                Complex64::new(x / 2.0, y / 2.0),
                Complex64::new((1.0 - z) / 2.0, 0.0),
            ],
        );
        Self::from_matrix(m, vec![2])
    }

    pub fn op(&self) -> &HermitianOperator {
        &self.op
    }

    pub fn matrix(&self) -> &CMatrix {
        self.op.matrix()
    }

    pub fn dim(&self) -> usize {
        self.op.dim()
    }

    pub fn factors(&self) -> &[usize] {
        self.op.factors()
    }

    pub fn purity(&self) -> f64 {
        self.op.inner(&self.op)
    }

    pub fn kron(&self, other: &Self) -> Self {
        Self { op: self.op.kron(&other.op) }
    }

    /// Convex combination `w * self + (1 - w) * other`.
    pub fn mix(&self, other: &Self, w: f64) -> Result<Self> {
        Self::new(self.op.scale(w).add(&other.op.scale(1.0 - w))?)
    }

    pub fn partial_trace(&self, keep: &[usize]) -> Result<Self> {
        Ok(Self { op: self.op.partial_trace(keep)? })
    }
}

/// Ordered POVM elements on a common space.
#[derive(Clone, Debug, PartialEq)]
pub struct Povm {
    elements: Vec<HermitianOperator>,
    label: String,
}

impl Povm {
    pub fn new(elements: Vec<HermitianOperator>, label: impl Into<String>) -> Result<Self> {
        let first = elements.first().ok_or_else(|| Error::InvalidPovm("no elements".into()))?;
        let factors = first.factors().to_vec();
        let mut sum = HermitianOperator::zeros(factors.clone());
        for (k, e) in elements.iter().enumerate() {
            if e.factors() != factors.as_slice() {
                return Err(Error::InvalidPovm(format!("element {k} has factors {:?}", e.factors())));
            }
            let min = e.min_eigenvalue();
            if min < -tolerances::STATE_VALIDATION {
                return Err(Error::InvalidPovm(format!("element {k} has eigenvalue {min:.3e}")));
            }
            sum = sum.add(e)?;
        }
        let dev = sum.max_abs_diff(&HermitianOperator::identity(factors));
        if dev > tolerances::STATE_VALIDATION {
            return Err(Error::InvalidPovm(format!("elements sum to identity only within {dev:.3e}")));
        }
        Ok(Self { elements, label: label.into() })
    }

    pub fn elements(&self) -> &[HermitianOperator] {
        &self.elements
    }

    pub fn len(&self) -> usize {
        self.elements.len()
    }

    pub fn is_empty(&self) -> bool {
        self.elements.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.elements[0].dim()
    }

    pub fn factors(&self) -> &[usize] {
        self.elements[0].factors()
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    /// Same elements with the factor list replaced, e.g. to split `[4]` into `[2, 2]`.
    pub fn with_factors(self, factors: Vec<usize>) -> Result<Self> {
        let elements = self.elements.into_iter().map(|e| e.with_factors(factors.clone())).collect::<Result<_>>()?;
        Ok(Self { elements, label: self.label })
    }
}

/// Input states for one party, with tomographic completeness computed from the Gram matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct InputEnsemble {
    states: Vec<QuantumState>,
    dim: usize,
    gram_rank: usize,
    condition: f64,
}

impl InputEnsemble {
    pub fn new(states: Vec<QuantumState>) -> Result<Self> {
        let dim = states.first().ok_or_else(|| Error::InvalidState("empty input ensemble".into()))?.dim();
        if let Some(bad) = states.iter().find(|s| s.dim() != dim) {
            return Err(Error::Dimension(format!("ensemble mixes dimensions {dim} and {}", bad.dim())));
        }
        let n = states.len();
        let gram = DMatrix::from_fn(n, n, |i, j| states[i].op().inner(states[j].op()));
        let mut ev: Vec<f64> = gram.symmetric_eigenvalues().iter().copied().collect();
        ev.sort_by(|a, b| b.total_cmp(a));
        let top = ev[0].max(f64::MIN_POSITIVE);
        let gram_rank = ev.iter().filter(|&&v| v > tolerances::GRAM_RANK * top).count();
        let needed = dim * dim;
        let condition = if gram_rank >= needed { top / ev[needed - 1] } else { f64::INFINITY };
        Ok(Self { states, dim, gram_rank, condition })
    }

    pub fn states(&self) -> &[QuantumState] {
        &self.states
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn gram_rank(&self) -> usize {
        self.gram_rank
    }

    /// Ratio of the largest to the d²-th largest Gram eigenvalue (infinite when incomplete).
    pub fn condition_number(&self) -> f64 {
        self.condition
    }

    pub fn tomographically_complete(&self) -> bool {
        self.gram_rank == self.dim * self.dim
    }

    /// Hilbert-Schmidt Gram matrix `Tr[psi_i psi_j]`.
    pub fn gram(&self) -> DMatrix<f64> {
        let n = self.len();
        DMatrix::from_fn(n, n, |i, j| self.states[i].op().inner(self.states[j].op()))
    }

    /// Same ensemble with members reordered: member `k` of the result is member `order[k]`.
    pub fn reordered(&self, order: &[usize]) -> Result<Self> {
        let states = order
            .iter()
            .map(|&k| self.states.get(k).cloned().ok_or_else(|| Error::Dimension(format!("index {k} out of range"))))
            .collect::<Result<_>>()?;
        Self::new(states)
    }
}

fn c(re: f64) -> Complex64 {
    Complex64::new(re, 0.0)
}

/// Bell states in the order `Phi+, Phi-, Psi+, Psi-`.
pub fn bell_states() -> Vec<QuantumState> {
    let s = std::f64::consts::FRAC_1_SQRT_2;
    [[c(s), ZERO, ZERO, c(s)], [c(s), ZERO, ZERO, c(-s)], [ZERO, c(s), c(s), ZERO], [ZERO, c(s), c(-s), ZERO]]
        .iter()
        .map(|v| QuantumState::pure(v, vec![2, 2]).expect("Bell state is valid"))
        .collect()
}

/// Bell-state measurement on two qubits, outcomes ordered as [`bell_states`].
pub fn bsm() -> Povm {
    let elements = bell_states().into_iter().map(|s| s.op().clone()).collect();
    Povm::new(elements, "bsm").expect("Bell projectors form a POVM")
}

/// `w |Phi+><Phi+| + (1 - w) I/4`.
pub fn werner(w: f64) -> Result<QuantumState> {
    if !(0.0..=1.0).contains(&w) {
        return Err(Error::InvalidState(format!("Werner weight {w} outside [0, 1]")));
    }
    let phi = &bell_states()[0];
    phi.mix(&QuantumState::maximally_mixed(vec![2, 2]), w)
}

/// `(|000> + |111>)/sqrt(2)`.
pub fn ghz() -> QuantumState {
    let s = std::f64::consts::FRAC_1_SQRT_2;
    let mut v = vec![ZERO; 8];
    v[0] = c(s);
    v[7] = c(s);
    QuantumState::pure(&v, vec![2, 2, 2]).expect("GHZ is valid")
}

pub const TETRAHEDRON: [[f64; 3]; 4] = {
    const S: f64 = 0.577_350_269_189_625_8;
    [[S, S, S], [S, -S, -S], [-S, S, -S], [-S, -S, S]]
};

/// Pure qubit states pointing at the vertices of a regular tetrahedron.
pub fn tetrahedron_inputs() -> InputEnsemble {
    let states = TETRAHEDRON.iter().map(|&v| QuantumState::bloch(v).expect("unit Bloch vector")).collect();
    InputEnsemble::new(states).expect("valid ensemble")
}

/// `{I/2, |0>, |+>, |+i>}`.
pub fn tomo4_inputs() -> InputEnsemble {
    let states = [[0.0, 0.0, 0.0], [0.0, 0.0, 1.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0]]
        .iter()
        .map(|&v| QuantumState::bloch(v).expect("valid Bloch vector"))
        .collect();
    InputEnsemble::new(states).expect("valid ensemble")
}

/// Four-outcome qubit POVM `(I + v_k . sigma)/4` along the tetrahedron vertices.
pub fn tetrahedral_povm() -> Povm {
    let elements = TETRAHEDRON.iter().map(|&v| QuantumState::bloch(v).expect("unit Bloch vector").op().scale(0.5)).collect();
    Povm::new(elements, "tetra-povm").expect("tetrahedral elements sum to identity")
}

/// Projective measurement in the computational basis of dimension `d`.
pub fn computational_povm(d: usize) -> Povm {
    let elements = (0..d)
        .map(|k| {
            let mut v = vec![ZERO; d];
            v[k] = ONE;
            HermitianOperator::projector(&v)
        })
        .collect();
    Povm::new(elements, "computational").expect("basis projectors form a POVM")
}

/// Two-outcome measurement `{P, I - P}` for a projector-like state `P`.
pub fn binary_povm(p: &QuantumState) -> Result<Povm> {
    let id = HermitianOperator::identity(p.factors().to_vec());
    Povm::new(vec![p.op().clone(), id.sub(p.op())?], "binary")
}

/// Haar-like random pure state of dimension `d` (normalized complex Gaussian vector).
pub fn random_pure_state<R: Rng + ?Sized>(rng: &mut R, factors: Vec<usize>) -> QuantumState {
    let d: usize = factors.iter().product();
    let v: Vec<Complex64> = (0..d).map(|_| Complex64::new(rng.sample(StandardNormal), rng.sample(StandardNormal))).collect();
    QuantumState::pure(&v, factors).expect("nonzero Gaussian vector")
}

/// Random mixed state `G G† / Tr` with a square complex Gaussian `G`.
pub fn random_state<R: Rng + ?Sized>(rng: &mut R, factors: Vec<usize>) -> QuantumState {
    let d: usize = factors.iter().product();
    let g = CMatrix::from_fn(d, d, |_, _| Complex64::new(rng.sample(StandardNormal), rng.sample(StandardNormal)));
    let m = &g * g.adjoint();
    let tr = linalg::trace(&m).re;
    QuantumState::from_matrix(m / c(tr), factors).expect("Wishart matrix is a state")
}

/// Mixture of `terms` random pure product states with random weights.
pub fn random_separable_state<R: Rng + ?Sized>(rng: &mut R, dims: &[usize], terms: usize) -> QuantumState {
    let weights: Vec<f64> = (0..terms.max(1)).map(|_| rng.random::<f64>() + 1e-3).collect();
    let total: f64 = weights.iter().sum();
    let d: usize = dims.iter().product();
    let mut acc = CMatrix::zeros(d, d);
    for w in weights {
        let mut prod = CMatrix::from_element(1, 1, ONE);
        for &dk in dims {
            prod = linalg::kron(&prod, random_pure_state(rng, vec![dk]).matrix());
        }
        acc += prod * c(w / total);
    }
    QuantumState::from_matrix(acc, dims.to_vec()).expect("mixture of product states is a state")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bell_states_are_orthonormal_and_complete() {
        let bs = bell_states();
        let mut sum = HermitianOperator::zeros(vec![2, 2]);
        for (i, a) in bs.iter().enumerate() {
            for (j, b) in bs.iter().enumerate() {
                let ip = a.op().inner(b.op());
                assert!((ip - if i == j { 1.0 } else { 0.0 }).abs() < 1e-14);
            }
            let ta = a.op().partial_trace(&[1]).unwrap();
            assert!(ta.max_abs_diff(&HermitianOperator::identity(vec![2]).scale(0.5)) < 1e-14);
            sum = sum.add(a.op()).unwrap();
        }
        assert!(sum.max_abs_diff(&HermitianOperator::identity(vec![2, 2])) < 1e-14);
    }

    #[test]
    fn werner_entangled_iff_above_one_third() {
        for k in 0..=10 {
            let w = k as f64 / 10.0;
            let min = werner(w).unwrap().op().partial_transpose(0).unwrap().min_eigenvalue();
            assert!((min - (1.0 - 3.0 * w) / 4.0).abs() < 1e-12);
            assert_eq!(min < -1e-12, w > 1.0 / 3.0);
        }
        let threshold = werner(1.0 / 3.0).unwrap().op().partial_transpose(0).unwrap().min_eigenvalue();
        assert!(threshold.abs() < 1e-12);
        assert!(werner(1.2).is_err());
    }

    #[test]
    fn tetrahedron_overlaps() {
        let t = tetrahedron_inputs();
        assert!(t.tomographically_complete());
        let g = t.gram();
        for i in 0..4 {
            assert!((g[(i, i)] - 1.0).abs() < 1e-14);
            for j in 0..4 {
                if i != j {
                    assert!((g[(i, j)] - 1.0 / 3.0).abs() < 1e-14);
                }
            }
        }
    }

    #[test]
    fn tomo4_is_complete_and_first_member_mixed() {
        let t = tomo4_inputs();
        assert_eq!(t.gram_rank(), 4);
        assert!(t.tomographically_complete());
        assert!(t.condition_number().is_finite());
        assert!((t.states()[0].purity() - 0.5).abs() < 1e-14);
        let plus = t.states()[2].matrix();
        assert!((plus[(0, 1)].re - 0.5).abs() < 1e-14);
    }

    #[test]
    fn incomplete_ensemble_is_flagged() {
        let e = InputEnsemble::new(vec![QuantumState::bloch([0.0, 0.0, 1.0]).unwrap(), QuantumState::bloch([0.0, 0.0, -1.0]).unwrap()])
            .unwrap();
        assert!(!e.tomographically_complete());
        assert!(e.condition_number().is_infinite());
    }

    #[test]
    fn tetrahedral_povm_on_maximally_mixed() {
        let p = tetrahedral_povm();
        let mm = QuantumState::maximally_mixed(vec![2]);
        for e in p.elements() {
            assert!((e.inner(mm.op()) - 0.25).abs() < 1e-15);
            let ev = e.eigenvalues();
            assert!((ev[0] - 0.5).abs() < 1e-14 && ev[1].abs() < 1e-14);
        }
    }

    #[test]
    fn invalid_povm_rejected() {
        let half = HermitianOperator::identity(vec![2]).scale(0.5);
        assert!(Povm::new(vec![half.clone()], "x").is_err());
        assert!(Povm::new(vec![half.clone(), half], "x").is_ok());
    }
}
