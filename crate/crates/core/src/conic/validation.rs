//! Conic problems with analytically known answers, used to validate solvers.

use num_complex::Complex64;

use super::{ConeMap, ConicProblem, Field, LinExpr, ScalarKind, Sense};
use crate::linalg::{eigenvalues_hermitian, CMatrix};

fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

/// Functionals `K` such that `Re Tr[K X]` runs over the real coordinates of a Hermitian `X`.
pub fn coordinate_functionals(d: usize) -> Vec<(CMatrix, Box<dyn Fn(&CMatrix) -> f64>)> {
    let mut out: Vec<(CMatrix, Box<dyn Fn(&CMatrix) -> f64>)> = Vec::new();
    for r in 0..d {
        for col in r..d {
            let mut k = CMatrix::zeros(d, d);
            k[(col, r)] = c(1.0, 0.0);
            out.push((k, Box::new(move |m: &CMatrix| m[(r, col)].re)));
            if col != r {
                let mut k = CMatrix::zeros(d, d);
                k[(col, r)] = c(0.0, -1.0);
                out.push((k, Box::new(move |m: &CMatrix| m[(r, col)].im)));
            }
        }
    }
    out
}

pub fn pauli_x() -> CMatrix {
    CMatrix::from_row_slice(2, 2, &[c(0.0, 0.0), c(1.0, 0.0), c(1.0, 0.0), c(0.0, 0.0)])
}

pub fn test_hermitian() -> CMatrix {
    let a = CMatrix::from_fn(3, 3, |i, j| c(((i * 3 + j) as f64 * 0.7).sin(), ((i + 2 * j) as f64 * 1.3).cos()));
    (&a + a.adjoint()) * c(0.5, 0.0)
}

pub fn phi_plus() -> CMatrix {
    let mut m = CMatrix::zeros(4, 4);
    for &(i, j) in &[(0, 0), (0, 3), (3, 0), (3, 3)] {
        m[(i, j)] = c(0.5, 0.0);
    }
    m
}

pub fn forced_diagonal() -> (ConicProblem, f64) {
    let mut p = ConicProblem::new();
    let x = p.add_psd_var("X", 2, Field::Real).unwrap();
    p.add_equality(LinExpr::new().entry(x, 2, 0, 0, 1.0), 1.0).unwrap();
    p.set_objective(Sense::Minimize, LinExpr::new().trace(x, 2, 1.0)).unwrap();
    (p, 1.0)
}

/// `min lambda  s.t.  lambda I - H = Y >= 0`.
pub fn largest_eigenvalue_lifted(h: &CMatrix) -> ConicProblem {
    let d = h.nrows();
    let mut p = ConicProblem::new();
    let y = p.add_psd_var("Y", d, Field::Complex).unwrap();
    let l = p.add_free_scalar("lambda").unwrap();
    let id = CMatrix::identity(d, d);
    for (k, coord) in coordinate_functionals(d) {
        // Y - lambda I = -H, coordinatewise.
        let rhs = -coord(h);
        let lam_coef = -coord(&id);
        p.add_equality(LinExpr::new().trace_with(y, k).scalar(l, lam_coef), rhs).unwrap();
    }
    p.set_objective(Sense::Minimize, LinExpr::new().scalar(l, 1.0)).unwrap();
    p
}

pub fn density_extreme(h: &CMatrix, sense: Sense, trace: f64) -> ConicProblem {
    let d = h.nrows();
    let mut p = ConicProblem::new();
    let x = p.add_psd_var("X", d, Field::Complex).unwrap();
    p.add_equality(LinExpr::new().trace(x, d, 1.0), trace).unwrap();
    p.set_objective(sense, LinExpr::new().trace_with(x, h.clone())).unwrap();
    p
}

/// Sum of the two largest eigenvalues: `max Tr[HX]`, `Tr X = 2`, `0 <= X <= I`.
pub fn ky_fan(h: &CMatrix) -> ConicProblem {
    let d = h.nrows();
    let mut p = density_extreme(h, Sense::Maximize, 2.0);
    let x = p.var("X").unwrap();
    let y = p.add_psd_var("Y", d, Field::Complex).unwrap();
    let id = CMatrix::identity(d, d);
    for (k, coord) in coordinate_functionals(d) {
        p.add_equality(LinExpr::new().trace_with(x, k.clone()).trace_with(y, k), coord(&id)).unwrap();
    }
    p
}

/// Trace norm: `min Tr P + Tr N`, `P - N = H`.
pub fn trace_norm(h: &CMatrix) -> ConicProblem {
    let d = h.nrows();
    let mut p = ConicProblem::new();
    let pp = p.add_psd_var("P", d, Field::Complex).unwrap();
    let nn = p.add_psd_var("N", d, Field::Complex).unwrap();
    for (k, coord) in coordinate_functionals(d) {
        p.add_equality(LinExpr::new().trace_with(pp, k.clone()).trace_with(nn, -k), coord(h)).unwrap();
    }
    p.set_objective(Sense::Minimize, LinExpr::new().trace(pp, d, 1.0).trace(nn, d, 1.0)).unwrap();
    p
}

/// Largest overlap of a two-qubit PPT state with a maximally entangled state.
pub fn ppt_fidelity() -> ConicProblem {
    let mut p = ConicProblem::new();
    let s = p.add_psd_var_with_factors("sigma", vec![2, 2], Field::Complex).unwrap();
    p.require_psd(s, ConeMap::PartialTranspose(0)).unwrap();
    p.add_equality(LinExpr::new().trace(s, 4, 1.0), 1.0).unwrap();
    p.set_objective(Sense::Maximize, LinExpr::new().trace_with(s, phi_plus())).unwrap();
    p
}

/// PPT two-qubit state with prescribed overlap `f` with a maximally entangled state.
pub fn ppt_overlap(f: f64) -> ConicProblem {
    let mut p = ConicProblem::new();
    let s = p.add_psd_var_with_factors("sigma", vec![2, 2], Field::Complex).unwrap();
    p.require_psd(s, ConeMap::PartialTranspose(0)).unwrap();
    p.add_structural_equality(LinExpr::new().trace(s, 4, 1.0), 1.0).unwrap();
    p.add_equality(LinExpr::new().trace_with(s, phi_plus()), f).unwrap();
    p
}

pub fn scalar_lp() -> ConicProblem {
    let mut p = ConicProblem::new();
    let a = p.add_scalar("a", ScalarKind::Nonneg).unwrap();
    let b = p.add_scalar("b", ScalarKind::Nonneg).unwrap();
    p.add_equality(LinExpr::new().scalar(a, 1.0).scalar(b, 1.0), 1.0).unwrap();
    p.set_objective(Sense::Minimize, LinExpr::new().scalar(a, 1.0).scalar(b, 2.0)).unwrap();
    p
}

/// Lovasz theta of the 5-cycle.
pub fn theta_c5() -> ConicProblem {
    let n = 5;
    let mut p = ConicProblem::new();
    let x = p.add_psd_var("X", n, Field::Real).unwrap();
    p.add_equality(LinExpr::new().trace(x, n, 1.0), 1.0).unwrap();
    for i in 0..n {
        p.add_equality(LinExpr::new().entry(x, n, i, (i + 1) % n, 1.0), 0.0).unwrap();
    }
    let j = CMatrix::from_element(n, n, c(1.0, 0.0));
    p.set_objective(Sense::Maximize, LinExpr::new().trace_with(x, j)).unwrap();
    p
}

/// Optimal discrimination of |0> and |+> with equal priors.
pub fn helstrom() -> ConicProblem {
    let mut p = ConicProblem::new();
    let e0 = p.add_psd_var("E0", 2, Field::Complex).unwrap();
    let e1 = p.add_psd_var("E1", 2, Field::Complex).unwrap();
    for (k, coord) in coordinate_functionals(2) {
        p.add_equality(LinExpr::new().trace_with(e0, k.clone()).trace_with(e1, k), coord(&CMatrix::identity(2, 2))).unwrap();
    }
    let r0 = CMatrix::from_row_slice(2, 2, &[c(0.5, 0.0), c(0.0, 0.0), c(0.0, 0.0), c(0.0, 0.0)]);
    let r1 = CMatrix::from_element(2, 2, c(0.25, 0.0));
    p.set_objective(Sense::Maximize, LinExpr::new().trace_with(e0, r0).trace_with(e1, r1)).unwrap();
    p
}

/// What a validation problem should return.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Expected {
    Optimum(f64),
    /// Phase-I verdict infeasible with this margin.
    Infeasible {
        margin: f64,
    },
}

pub struct ValidationCase {
    pub name: &'static str,
    pub problem: ConicProblem,
    pub sense: Option<Sense>,
    pub expected: Expected,
}

/// Twelve problems whose answers follow from eigenvalues or closed forms.
pub fn battery() -> Vec<ValidationCase> {
    let h = test_hermitian();
    let ev = eigenvalues_hermitian(&h);
    let (fd, fd_value) = forced_diagonal();
    let opt = |name, problem, sense, v| ValidationCase { name, problem, sense: Some(sense), expected: Expected::Optimum(v) };
    vec![
        opt("forced diagonal", fd, Sense::Minimize, fd_value),
        opt("largest eigenvalue of sigma_x", largest_eigenvalue_lifted(&pauli_x()), Sense::Minimize, 1.0),
        opt("largest eigenvalue (lifted)", largest_eigenvalue_lifted(&h), Sense::Minimize, ev[0]),
        opt("largest eigenvalue (density)", density_extreme(&h, Sense::Maximize, 1.0), Sense::Maximize, ev[0]),
        opt("smallest eigenvalue (density)", density_extreme(&h, Sense::Minimize, 1.0), Sense::Minimize, ev[2]),
        opt("ky fan 2-norm", ky_fan(&h), Sense::Maximize, ev[0] + ev[1]),
        opt("trace norm", trace_norm(&h), Sense::Minimize, ev.iter().map(|v| v.abs()).sum()),
        opt("ppt fidelity", ppt_fidelity(), Sense::Maximize, 0.5),
        opt("scalar lp", scalar_lp(), Sense::Minimize, 1.0),
        opt("lovasz theta c5", theta_c5(), Sense::Maximize, 5f64.sqrt()),
        opt("helstrom", helstrom(), Sense::Maximize, 0.5 * (1.0 + 0.5f64.sqrt())),
        // Overlap 0.8 misses the reachable interval [0, 1/2] by 0.3.
        ValidationCase { name: "ppt overlap 0.8", problem: ppt_overlap(0.8), sense: None, expected: Expected::Infeasible { margin: 0.3 } },
    ]
}
