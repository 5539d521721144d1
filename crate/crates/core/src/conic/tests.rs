use super::validation::*;
use super::*;
use crate::linalg::{eigenvalues_hermitian, CMatrix};

fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(1.0)
}

fn assert_optimal(r: &SolveReport, expect: f64, what: &str) {
    assert_eq!(r.status, SolveStatus::Optimal, "{what}: {:?}", r.message);
    assert!(rel_err(r.objective, expect) < 1e-7, "{what}: got {} want {}", r.objective, expect);
    assert!(r.primal_residual <= tolerances::PRIMAL_RESIDUAL);
}

fn top_eigs(h: &CMatrix) -> Vec<f64> {
    eigenvalues_hermitian(h)
}

#[test]
fn battery_of_known_optima() {
    let cases = battery();
    assert_eq!(cases.len(), 12);
    for case in &cases {
        match case.expected {
            Expected::Optimum(v) => assert_optimal(&solve(&case.problem).unwrap(), v, case.name),
            Expected::Infeasible { margin } => {
                let r = solve_feasibility(&case.problem).unwrap();
                assert_eq!(r.verdict, Verdict::Infeasible);
                assert!(rel_err(r.margin, margin) < 1e-7, "margin {}", r.margin);
            }
        }
    }
    assert_eq!(solve_feasibility(&ppt_overlap(0.4)).unwrap().verdict, Verdict::Feasible);
}

#[test]
fn negative_trace_is_certified_infeasible() {
    let mut p = ConicProblem::new();
    let x = p.add_psd_var("X", 2, Field::Real).unwrap();
    p.add_equality(LinExpr::new().trace(x, 2, 1.0), -1.0).unwrap();
    let r = solve(&p).unwrap();
    assert_eq!(r.status, SolveStatus::InfeasibleCertified);
    let cert = r.certificate.unwrap();
    assert!(cert.margin >= 1e-7);
    let f = solve_feasibility(&p).unwrap();
    assert_eq!(f.verdict, Verdict::Infeasible);
    assert!(rel_err(f.margin, 1.0) < 1e-7);
}

#[test]
fn inconsistent_equalities_are_certified() {
    let mut p = ConicProblem::new();
    let x = p.add_psd_var("X", 2, Field::Real).unwrap();
    p.add_equality(LinExpr::new().trace(x, 2, 1.0), 1.0).unwrap();
    p.add_equality(LinExpr::new().trace(x, 2, 2.0), 3.0).unwrap();
    let r = solve(&p).unwrap();
    assert_eq!(r.status, SolveStatus::InfeasibleCertified);
    assert!(r.certificate.unwrap().margin > 1e-7);
}

#[test]
fn complex_variable_is_realified() {
    let mut p = ConicProblem::new();
    let x = p.add_psd_var("X", 4, Field::Complex).unwrap();
    p.add_equality(LinExpr::new().trace(x, 4, 1.0), 1.0).unwrap();
    let sf = compile::compile(&p, Mode::Normal).unwrap();
    assert_eq!(sf.psd[0].n, 8);
    assert_eq!(sf.n, 16);
}

#[test]
fn weak_duality_holds() {
    let h = test_hermitian();
    let problems =
        vec![forced_diagonal().0, largest_eigenvalue_lifted(&h), density_extreme(&h, Sense::Minimize, 1.0), trace_norm(&h), scalar_lp()];
    for p in problems {
        let r = solve(&p).unwrap();
        assert!(r.dual_objective <= r.objective + 1e-9, "{} > {}", r.dual_objective, r.objective);
    }
    for p in [theta_c5(), helstrom(), ppt_fidelity()] {
        let r = solve(&p).unwrap();
        assert!(r.dual_objective >= r.objective - 1e-9);
    }
}

#[test]
fn verdicts_are_scale_invariant() {
    for (f, expect) in [(0.2, Verdict::Feasible), (0.45, Verdict::Feasible), (0.8, Verdict::Infeasible), (1.0, Verdict::Infeasible)] {
        let mut p = ppt_overlap(f);
        assert_eq!(solve_feasibility(&p).unwrap().verdict, expect);
        p.scale_equalities(10.0);
        assert_eq!(solve_feasibility(&p).unwrap().verdict, expect);
    }
    let (mut p, v) = forced_diagonal();
    p.scale_equalities(10.0);
    assert_optimal(&solve(&p).unwrap(), v, "scaled");
}

#[test]
fn duals_are_sensitivities() {
    // min lambda_max(H) problem: d(opt)/d(rhs) for X00 = t in forced diagonal is 1.
    let (p, _) = forced_diagonal();
    let r = solve(&p).unwrap();
    assert!((r.duals[0] - 1.0).abs() < 1e-6, "{:?}", r.duals);
    // max Tr[HX], Tr X = t has optimum t * lambda_max.
    let h = test_hermitian();
    let r = solve(&density_extreme(&h, Sense::Maximize, 1.0)).unwrap();
    assert!((r.duals[0] - top_eigs(&h)[0]).abs() < 1e-6);
}

#[test]
fn phase_one_certificate_separates() {
    let p = ppt_overlap(0.9);
    let r = solve_feasibility(&p).unwrap();
    let cert = r.certificate.expect("infeasible instance has a certificate");
    let rhs: Vec<f64> = p.equalities().iter().map(|e| e.rhs).collect();
    assert!((cert.score(&rhs) - r.margin).abs() < 1e-7);
    for f in [0.0, 0.1, 0.3, 0.5] {
        let q: Vec<f64> = vec![1.0, f];
        assert!(cert.score(&q) <= 1e-8, "{f}: {}", cert.score(&q));
    }
}

#[test]
fn problem_dump_lists_components() {
    let v = ppt_fidelity().to_json();
    assert_eq!(v["variables"][0]["dim"], 4);
    assert_eq!(v["cones"].as_array().unwrap().len(), 2);
    assert_eq!(v["objective"]["sense"], "max");
}
