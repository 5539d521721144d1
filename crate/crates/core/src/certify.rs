//! Entanglement certification from behaviours: relaxed-separable realizability of
//! bipartite data, full separability and biseparability of tripartite data, and
//! witnesses read off the dual certificate.

use serde::{Deserialize, Serialize};

use crate::conic::{CertificationResult, ConicProblem, ConicSolver, EmbeddedIpm, Verdict};
use crate::error::{Error, Result};
use crate::relax::{self, Family};
use crate::scenario::Behaviour;

pub use crate::relax::RelaxationLevel;

/// Linear functional on behaviours separating the observed data from every
/// behaviour realizable within the relaxation.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct WitnessCoefficients {
    pub outcome_counts: Vec<usize>,
    pub input_counts: Vec<usize>,
    /// One coefficient per behaviour cell, in behaviour order.
    pub coefficients: Vec<f64>,
    /// Realizable behaviours score at most this.
    pub threshold: f64,
    pub relaxation: RelaxationLevel,
    pub normalization: String,
}

impl WitnessCoefficients {
    pub fn score(&self, b: &Behaviour) -> Result<f64> {
        if b.outcome_counts() != self.outcome_counts || b.input_counts() != self.input_counts {
            return Err(Error::MalformedBehaviour("behaviour shape does not match the witness".into()));
        }
        Ok(self.coefficients.iter().zip(b.probs()).map(|(c, p)| c * p).sum())
    }

    /// Whether `b` is flagged as outside the relaxation.
    pub fn detects(&self, b: &Behaviour) -> Result<bool> {
        Ok(self.score(b)? > self.threshold)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("witness serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let de = &mut serde_json::Deserializer::from_str(text);
        serde_path_to_error::deserialize(de).map_err(|e| Error::Schema { path: e.path().to_string(), message: e.inner().to_string() })
    }
}

fn require_parties(b: &Behaviour, n: usize) -> Result<()> {
    if b.parties() != n {
        return Err(Error::MalformedBehaviour(format!("expected a {n}-party behaviour, got {} parties", b.parties())));
    }
    Ok(())
}

/// Relaxed-separable family for two parties: PT cone or a symmetric extension.
pub(crate) fn bipartite_cone(p: &mut ConicProblem, label: &str, dims: &[usize], counts: &[usize], r: RelaxationLevel) -> Result<Family> {
    r.check(dims)?;
    match r {
        RelaxationLevel::Ppt => Family::new(p, label, dims, counts, true, &[0]),
        RelaxationLevel::SymExt { k, with_ppt } => {
            let fam = Family::new(p, label, dims, counts, true, &[])?;
            relax::symmetric_extension(p, &fam, &format!("{label}ext"), k, with_ppt)?;
            Ok(fam)
        }
    }
}

fn tripartite_ppt_only(r: RelaxationLevel, dims: &[usize]) -> Result<()> {
    if r != RelaxationLevel::Ppt {
        return Err(Error::Unsupported(format!("relaxation {} for three parties; use ppt", r.label())));
    }
    r.check(dims)
}

/// Families whose sum is relaxed fully separable (one family) or biseparable (one per cut).
pub(crate) fn tripartite_cone(
    p: &mut ConicProblem,
    label: &str,
    dims: &[usize],
    counts: &[usize],
    target: TripartiteTarget,
    r: RelaxationLevel,
) -> Result<Vec<Family>> {
    tripartite_ppt_only(r, dims)?;
    match target {
        TripartiteTarget::FullSeparability => Ok(vec![Family::new(p, label, dims, counts, true, &[0, 1, 2])?]),
        TripartiteTarget::Biseparability => {
            (0..3).map(|cut| Family::new(p, &format!("{label}cut{cut}"), dims, counts, true, &[cut])).collect()
        }
    }
}

/// Separability structure tested for three parties.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TripartiteTarget {
    FullSeparability,
    Biseparability,
}

fn bipartite_problem(b: &Behaviour, r: RelaxationLevel) -> Result<(ConicProblem, usize)> {
    require_parties(b, 2)?;
    let mut p = ConicProblem::new();
    let fam = bipartite_cone(&mut p, "M", &b.input_dims(), b.outcome_counts(), r)?;
    fam.no_signalling(&mut p)?;
    fam.normalize(&mut p, 1.0, Default::default())?;
    let start = relax::behaviour_rows(&mut p, b, |o| vec![(fam.var(o), 1.0)])?;
    Ok((p, start))
}

fn tripartite_problem(b: &Behaviour, target: TripartiteTarget, r: RelaxationLevel) -> Result<ConicProblem> {
    require_parties(b, 3)?;
    let mut p = ConicProblem::new();
    let fams = tripartite_cone(&mut p, "M", &b.input_dims(), b.outcome_counts(), target, r)?;
    let refs: Vec<&Family> = fams.iter().collect();
    relax::no_signalling_sum(&mut p, &refs)?;
    let all: Vec<_> = fams.iter().flat_map(|f| f.vars.iter().copied()).collect();
    relax::sum_is_identity(&mut p, &all, fams[0].dim(), Some((1.0, Default::default())))?;
    relax::behaviour_rows(&mut p, b, |o| fams.iter().map(|f| (f.var(o), 1.0)).collect())?;
    Ok(p)
}

/// Can `b` be produced by a bipartite effective POVM in the relaxed separable set?
/// An infeasible verdict certifies that the shared state is entangled.
pub fn certify_bipartite(b: &Behaviour, r: RelaxationLevel) -> Result<CertificationResult> {
    certify_bipartite_with(&EmbeddedIpm::default(), b, r)
}

pub fn certify_bipartite_with(solver: &dyn ConicSolver, b: &Behaviour, r: RelaxationLevel) -> Result<CertificationResult> {
    let (p, _) = bipartite_problem(b, r)?;
    solver.solve_feasibility(&p)
}

/// Full separability test (PT-positive across every single-party cut).
pub fn certify_tripartite_full(b: &Behaviour, r: RelaxationLevel) -> Result<CertificationResult> {
    EmbeddedIpm::default().solve_feasibility(&tripartite_problem(b, TripartiteTarget::FullSeparability, r)?)
}

/// Biseparability test: the effective POVM must split into three branches, each
/// PT-positive across its own cut. Infeasible certifies genuine multipartite entanglement.
pub fn certify_tripartite_bisep(b: &Behaviour, r: RelaxationLevel) -> Result<CertificationResult> {
    EmbeddedIpm::default().solve_feasibility(&tripartite_problem(b, TripartiteTarget::Biseparability, r)?)
}

/// Witness from the infeasibility certificate of [`certify_bipartite`], scaled so the
/// observed behaviour scores 1 and every relaxed-separable behaviour scores at most 0.
pub fn extract_witness(b: &Behaviour, r: RelaxationLevel) -> Result<WitnessCoefficients> {
    let (p, start) = bipartite_problem(b, r)?;
    let res = EmbeddedIpm::default().solve_feasibility(&p)?;
    let cert = match (res.verdict, res.certificate) {
        (Verdict::Infeasible, Some(c)) if res.margin.is_finite() => c,
        (Verdict::Infeasible, _) => return Err(Error::Solver("infeasible verdict without a usable certificate".into())),
        (v, _) => return Err(Error::Unsupported(format!("no witness for a behaviour with verdict {v:?}"))),
    };
    // Every normalized behaviour has cell total equal to the number of input tuples, so
    // the offset can be spread over the coefficients.
    let cells = b.probs().len();
    let shift = cert.theta / b.input_tuples() as f64;
    let coefficients = (0..cells).map(|i| (cert.beta[start + i] - shift) / res.margin).collect();
    Ok(WitnessCoefficients {
        outcome_counts: b.outcome_counts().to_vec(),
        input_counts: b.input_counts(),
        coefficients,
        threshold: 0.0,
        relaxation: r,
        normalization: "observed behaviour scores 1; relaxed-separable behaviours score at most 0".into(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quantum::{bsm, tomo4_inputs, werner, QuantumState};
    use crate::scenario::simulate_bipartite;

    fn werner_behaviour(w: f64) -> Behaviour {
        let e = tomo4_inputs();
        simulate_bipartite(&werner(w).unwrap(), &bsm(), &bsm(), &e, &e).unwrap()
    }

    #[test]
    fn werner_verdicts_follow_the_pt_threshold() {
        for (w, v) in [(0.2, Verdict::Feasible), (0.3, Verdict::Feasible), (0.8, Verdict::Infeasible), (1.0, Verdict::Infeasible)] {
            let r = certify_bipartite(&werner_behaviour(w), RelaxationLevel::Ppt).unwrap();
            assert_eq!(r.verdict, v, "w = {w}: margin {} {:?}", r.margin, r.report.message);
        }
    }

    #[test]
    fn product_state_is_feasible() {
        let e = tomo4_inputs();
        let rho = QuantumState::bloch([0.3, -0.2, 0.5]).unwrap().kron(&QuantumState::bloch([0.0, 0.6, -0.1]).unwrap());
        let b = simulate_bipartite(&rho, &bsm(), &bsm(), &e, &e).unwrap();
        let r = certify_bipartite(&b, RelaxationLevel::Ppt).unwrap();
        assert_eq!(r.verdict, Verdict::Feasible);
        assert!(r.margin <= 1e-7);
    }

    #[test]
    fn symmetric_extension_tightens_ppt() {
        let b = werner_behaviour(0.9);
        for r in [RelaxationLevel::sym_ext(2, true).unwrap(), RelaxationLevel::sym_ext(2, false).unwrap()] {
            let res = certify_bipartite(&b, r).unwrap();
            assert_eq!(res.verdict, Verdict::Infeasible, "{}", r.label());
        }
        let res = certify_bipartite(&werner_behaviour(0.2), RelaxationLevel::sym_ext(2, false).unwrap()).unwrap();
        assert_eq!(res.verdict, Verdict::Feasible);
    }

    #[test]
    fn witness_scores_one_on_its_own_data() {
        let w = extract_witness(&werner_behaviour(1.0), RelaxationLevel::Ppt).unwrap();
        assert!((w.score(&werner_behaviour(1.0)).unwrap() - 1.0).abs() < 1e-6);
        assert!(w.score(&werner_behaviour(0.0)).unwrap() <= 1e-6);
        assert!(w.score(&werner_behaviour(0.6)).unwrap() > 0.0);
        let back = WitnessCoefficients::from_json(&w.to_json()).unwrap();
        assert_eq!(back, w);
        assert!(extract_witness(&werner_behaviour(0.1), RelaxationLevel::Ppt).is_err());
    }

    #[test]
    fn wrong_party_count_is_rejected() {
        let e = tomo4_inputs();
        let b =
            crate::scenario::simulate_single_box(&crate::quantum::tetrahedral_povm(), &QuantumState::maximally_mixed(vec![1]), &e).unwrap();
        assert!(matches!(certify_bipartite(&b, RelaxationLevel::Ppt), Err(Error::MalformedBehaviour(_))));
    }

    fn tripartite(rho: &QuantumState) -> Behaviour {
        let boxes = crate::quantum::binary_povm(&crate::quantum::bell_states()[0]).unwrap();
        let e = tomo4_inputs();
        crate::scenario::simulate_tripartite(rho, [&boxes, &boxes, &boxes], [&e, &e, &e]).unwrap()
    }

    #[test]
    fn tripartite_suite() {
        let q = |v| QuantumState::bloch(v).unwrap();
        let product = q([0.2, 0.1, 0.4]).kron(&q([0.0, -0.5, 0.3])).kron(&q([0.6, 0.0, 0.0]));
        let ab_c = werner(0.9).unwrap().kron(&q([0.1, 0.2, -0.3]));
        let cases = [
            (product, Verdict::Feasible, Verdict::Feasible),
            (ab_c, Verdict::Feasible, Verdict::Infeasible),
            (crate::quantum::ghz(), Verdict::Infeasible, Verdict::Infeasible),
        ];
        for (i, (rho, bisep, full)) in cases.iter().enumerate() {
            let b = tripartite(rho);
            let rb = certify_tripartite_bisep(&b, RelaxationLevel::Ppt).unwrap();
            let rf = certify_tripartite_full(&b, RelaxationLevel::Ppt).unwrap();
            assert_eq!(rb.verdict, *bisep, "case {i} bisep");
            assert_eq!(rf.verdict, *full, "case {i} full");
        }
    }

    #[test]
    fn tripartite_symmetric_extension_is_unsupported() {
        let b = tripartite(&crate::quantum::ghz());
        let r = RelaxationLevel::sym_ext(2, false).unwrap();
        assert!(matches!(certify_tripartite_full(&b, r), Err(Error::Unsupported(_))));
    }
}
