//! Brute-force reference computations for two-qubit states, used to ground
//! expected values and to cross-check the pipeline. Only linear-algebra
//! primitives are shared with the rest of the crate.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::Serialize;
use serde_json::Map;

use crate::error::{Error, Result};
use crate::linalg::{self, CMatrix};
use crate::quantify::NoiseSet;
use crate::quantum::{InputEnsemble, Povm, QuantumState};
use crate::scenario::Behaviour;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct OracleReport {
    pub quantity: String,
    pub value: f64,
    pub method: String,
}

fn require_two_qubits(rho: &QuantumState) -> Result<()> {
    if rho.factors() != [2, 2] {
        return Err(Error::Unsupported(format!("oracle is limited to 2x2 states, got factors {:?}", rho.factors())));
    }
    Ok(())
}

/// Sum of the absolute values of the negative eigenvalues of `rho^{T_cut}`.
pub fn state_negativity(rho: &QuantumState, cut: usize) -> Result<OracleReport> {
    let pt = linalg::partial_transpose(rho.matrix(), rho.factors(), cut)?;
    let value = linalg::eigenvalues_hermitian(&pt).iter().filter(|&&l| l < 0.0).map(|l| -l).sum();
    Ok(OracleReport { quantity: "negativity".into(), value, method: "full diagonalization of the partial transpose".into() })
}

/// Least `r` with `(rho + r sigma) / (1 + r)` PPT and `sigma` in the noise set.
///
/// With `X = rho + r sigma` the problem reads `min Tr X - 1` subject to `X - rho >= 0`,
/// `X^{T_A} >= 0` and, for separable noise, `(X - rho)^{T_A} >= 0`. White noise has
/// the closed form `max(0, -4 lambda_min(rho^{T_A}))`.
pub fn state_robustness(rho: &QuantumState, noise: NoiseSet) -> Result<OracleReport> {
    require_two_qubits(rho)?;
    let m = rho.matrix();
    let pt = |x: &CMatrix| linalg::partial_transpose(x, &[2, 2], 0).expect("2x2 factors");
    if noise == NoiseSet::Random {
        let lmin = linalg::eigenvalues_hermitian(&pt(m)).into_iter().fold(f64::INFINITY, f64::min);
        return Ok(OracleReport {
            quantity: "robustness (random)".into(),
            value: (-4.0 * lmin).max(0.0),
            method: "closed form from the smallest partial-transpose eigenvalue".into(),
        });
    }
    let mut cons: Vec<Constraint> = vec![
        Constraint { map: Box::new(|x: &CMatrix| x.clone()), offset: m.clone() },
        Constraint { map: Box::new(pt), offset: CMatrix::zeros(4, 4) },
    ];
    if noise == NoiseSet::Separable {
        cons.push(Constraint { map: Box::new(pt), offset: pt(m) });
    }
    let shift = 1.0 + (-linalg::eigenvalues_hermitian(&pt(m))[0]).max(0.0);
    let start = m + CMatrix::identity(4, 4) * Complex64::new(shift, 0.0);
    let x = barrier_minimize_trace(&cons, start);
    Ok(OracleReport {
        quantity: format!("robustness ({})", noise.label()),
        value: (linalg::trace(&x).re - 1.0).max(0.0),
        method: "log-barrier Newton method on the 4x4 state-level problem".into(),
    })
}

/// `map(X) - offset >= 0`.
struct Constraint {
    map: Box<dyn Fn(&CMatrix) -> CMatrix>,
    offset: CMatrix,
}

impl Constraint {
    fn eval(&self, x: &CMatrix) -> CMatrix {
        (self.map)(x) - &self.offset
    }
}

fn inverse_if_pd(m: &CMatrix) -> Option<CMatrix> {
    let h = (m + m.adjoint()) * Complex64::new(0.5, 0.0);
    h.cholesky().map(|c| c.inverse())
}

/// Path-following barrier method for `min Tr X` over Hermitian `X` (4 x 4), from a
/// strictly feasible `start`.
fn barrier_minimize_trace(cons: &[Constraint], start: CMatrix) -> CMatrix {
    let basis = linalg::hermitian_basis(4);
    let n = basis.len();
    let images: Vec<Vec<CMatrix>> = cons.iter().map(|c| basis.iter().map(|b| (c.map)(b)).collect()).collect();
    let c: DVector<f64> = DVector::from_iterator(n, basis.iter().map(|b| linalg::trace(b).re));
    let coords = |x: &CMatrix| DVector::from_iterator(n, basis.iter().map(|b| linalg::re_trace_product(b, x)));
    let assemble =
        |v: &DVector<f64>| basis.iter().zip(v.iter()).fold(CMatrix::zeros(4, 4), |acc, (b, &vi)| acc + b * Complex64::new(vi, 0.0));
    let barrier_dim = (4 * cons.len()) as f64;
    let phi = |v: &DVector<f64>, t: f64| -> Option<f64> {
        let x = assemble(v);
        let mut logdet = 0.0;
        for con in cons {
            let f = con.eval(&x);
            let h = (&f + f.adjoint()) * Complex64::new(0.5, 0.0);
            let chol = h.cholesky()?;
            logdet += chol.l().diagonal().iter().map(|d| 2.0 * d.re.ln()).sum::<f64>();
        }
        Some(t * c.dot(v) - logdet)
    };

    let mut v = coords(&start);
    let mut t = 1.0;
    while barrier_dim / t > 1e-12 {
        for _ in 0..100 {
            let x = assemble(&v);
            let mut grad = &c * t;
            let mut hess = DMatrix::<f64>::zeros(n, n);
            for (con, imgs) in cons.iter().zip(&images) {
                let finv = inverse_if_pd(&con.eval(&x)).expect("iterate stays interior");
                let w: Vec<CMatrix> = imgs.iter().map(|a| &finv * a).collect();
                for k in 0..n {
                    grad[k] -= linalg::trace(&w[k]).re;
                    for l in k..n {
                        let h = (&w[k] * &w[l]).trace().re;
                        hess[(k, l)] += h;
                        hess[(l, k)] = hess[(k, l)];
                    }
                }
            }
            let Some(chol) = hess.clone().cholesky() else { break };
            let step = -chol.solve(&grad);
            let decrement = -grad.dot(&step);
            if decrement < 1e-14 {
                break;
            }
            let f0 = phi(&v, t).expect("interior");
            let mut s = 1.0;
            loop {
                let trial = &v + &step * s;
                if let Some(f) = phi(&trial, t) {
                    if f <= f0 - 0.25 * s * decrement {
                        v = trial;
                        break;
                    }
                }
                s *= 0.5;
                if s < 1e-12 {
                    break;
                }
            }
            if s < 1e-12 {
                break;
            }
        }
        t *= 8.0;
    }
    assemble(&v)
}

/// Behaviour from one global trace per cell over `A0 ⊗ A ⊗ B ⊗ B0`, with Bob's
/// measurement reordered onto `B ⊗ B0`.
pub fn naive_trace_eval(
    state: &QuantumState,
    povm_a: &Povm,
    povm_b: &Povm,
    ens_a: &InputEnsemble,
    ens_b: &InputEnsemble,
) -> Result<Behaviour> {
    let [da, db] = match state.factors() {
        &[a, b] => [a, b],
        f => return Err(Error::Dimension(format!("bipartite state expected, got factors {f:?}"))),
    };
    if povm_a.dim() != ens_a.dim() * da || povm_b.dim() != ens_b.dim() * db {
        return Err(Error::Dimension("measurement dimension must equal input dimension times system dimension".into()));
    }
    let d0b = ens_b.dim();
    let bob: Vec<CMatrix> =
        povm_b.elements().iter().map(|e| linalg::permute_factors(e.matrix(), &[d0b, db], &[1, 0])).collect::<Result<_>>()?;
    let mut probs = Vec::with_capacity(ens_a.len() * ens_b.len() * povm_a.len() * povm_b.len());
    for psi_x in ens_a.states() {
        for psi_y in ens_b.states() {
            let global = linalg::kron_all([psi_x.matrix(), state.matrix(), psi_y.matrix()]);
            for ma in povm_a.elements() {
                for mb in &bob {
                    let op = linalg::kron(ma.matrix(), mb);
                    probs.push(linalg::trace(&(op * &global)).re);
                }
            }
        }
    }
    Behaviour::new(vec![povm_a.len(), povm_b.len()], vec![ens_a.clone(), ens_b.clone()], probs, Map::new())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quantum::{bsm, tetrahedron_inputs, tomo4_inputs, werner};
    use crate::scenario::simulate_bipartite;

    #[test]
    fn werner_negativity_matches_closed_form() {
        for i in 0..=10 {
            let w = i as f64 / 10.0;
            let n = state_negativity(&werner(w).unwrap(), 0).unwrap().value;
            assert!((n - ((3.0 * w - 1.0) / 4.0).max(0.0)).abs() < 1e-12, "w={w}: {n}");
        }
        let prod = QuantumState::maximally_mixed(vec![2, 2]);
        assert_eq!(state_negativity(&prod, 0).unwrap().value, 0.0);
    }

    #[test]
    fn robustness_of_werner_states() {
        let mut last = 0.0;
        for i in 0..=10 {
            let w = i as f64 / 10.0;
            let rho = werner(w).unwrap();
            let neg = state_negativity(&rho, 0).unwrap().value;
            let g = state_robustness(&rho, NoiseSet::Generalized).unwrap().value;
            let s = state_robustness(&rho, NoiseSet::Separable).unwrap().value;
            let r = state_robustness(&rho, NoiseSet::Random).unwrap().value;
            assert!(g >= 2.0 * neg - 1e-8, "w={w}: {g} vs 2N={}", 2.0 * neg);
            assert!(g <= s + 1e-8 && s <= r + 1e-8, "w={w}: {g} {s} {r}");
            assert!(g >= last - 1e-8);
            last = g;
            if w <= 1.0 / 3.0 {
                assert!(g < 1e-9 && s < 1e-9 && r < 1e-12);
            }
        }
    }

    #[test]
    fn werner_one_robustness_constants() {
        let rho = werner(1.0).unwrap();
        let g = state_robustness(&rho, NoiseSet::Generalized).unwrap().value;
        let s = state_robustness(&rho, NoiseSet::Separable).unwrap().value;
        let r = state_robustness(&rho, NoiseSet::Random).unwrap().value;
        assert!((g - 1.0).abs() < 1e-8, "{g}");
        assert!((s - 1.0).abs() < 1e-8, "{s}");
        assert!((r - 2.0).abs() < 1e-12, "{r}");
    }

    #[test]
    fn robustness_rejects_larger_systems() {
        let rho = QuantumState::maximally_mixed(vec![2, 3]);
        assert!(state_robustness(&rho, NoiseSet::Generalized).is_err());
    }

    #[test]
    fn naive_evaluation_agrees_with_simulation() {
        for ens in [tomo4_inputs(), tetrahedron_inputs()] {
            for i in 0..=10 {
                let rho = werner(i as f64 / 10.0).unwrap();
                let a = naive_trace_eval(&rho, &bsm(), &bsm(), &ens, &ens).unwrap();
                let b = simulate_bipartite(&rho, &bsm(), &bsm(), &ens, &ens).unwrap();
                let diff = a.probs().iter().zip(b.probs()).fold(0.0f64, |m, (x, y)| m.max((x - y).abs()));
                assert!(diff < 1e-12, "{diff}");
            }
        }
    }

    #[test]
    fn naive_evaluation_of_the_maximally_mixed_state_is_uniform() {
        let ens = tomo4_inputs();
        let b = naive_trace_eval(&QuantumState::maximally_mixed(vec![2, 2]), &bsm(), &bsm(), &ens, &ens).unwrap();
        assert!(b.probs().iter().all(|p| (p - 1.0 / 16.0).abs() < 1e-14));
    }

    proptest::proptest! {
        #![proptest_config(proptest::prelude::ProptestConfig::with_cases(48))]

        #[test]
        fn robustness_is_bounded_by_negativity(seed in proptest::prelude::any::<u64>()) {
            use rand::SeedableRng;
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let rho = crate::quantum::random_state(&mut rng, vec![2, 2]);
            let neg = state_negativity(&rho, 0).unwrap().value;
            let g = state_robustness(&rho, NoiseSet::Generalized).unwrap().value;
            let s = state_robustness(&rho, NoiseSet::Separable).unwrap().value;
            let r = state_robustness(&rho, NoiseSet::Random).unwrap().value;
            // |rho^T|_1 <= (1 + r) + r |sigma^T|_1, with |sigma^T|_1 <= 2 (1 for PPT sigma).
            proptest::prop_assert!(g >= 2.0 * neg / 3.0 - 1e-8, "{} vs {}", g, neg);
            proptest::prop_assert!(s >= neg - 1e-8, "{} vs {}", s, neg);
            proptest::prop_assert!(g <= s + 1e-8 && s <= r + 1e-8, "{} {} {}", g, s, r);
            proptest::prop_assert_eq!(neg == 0.0, g < 1e-9);
        }
    }
}
