//! Entanglement quantification from behaviours: MDI robustness against three noise
//! sets and the MDI lower bound on negativity.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::certify::{self, bipartite_cone, tripartite_cone, TripartiteTarget};
use crate::conic::{self, CertificationResult, ConicProblem, LinExpr, ReportSummary, ScalarKind, Sense, SolveReport, SolveStatus, Verdict};
use crate::error::{Error, Result};
use crate::exec::{self, Execution};
use crate::quantum::{bsm, werner, InputEnsemble};
use crate::relax::{self, Family, RelaxationLevel};
use crate::scenario::{simulate_bipartite, Behaviour};
use crate::tolerances;

/// Noise admixed to the behaviour before asking for a relaxed-separable model.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NoiseSet {
    /// Any quantum effective POVM.
    Generalized,
    /// Relaxed-separable effective POVMs.
    Separable,
    /// Product noise. Solved over the separable cone, so the value bounds the
    /// random robustness from below without being tight.
    Random,
}

impl NoiseSet {
    pub fn label(self) -> &'static str {
        match self {
            NoiseSet::Generalized => "generalized",
            NoiseSet::Separable => "separable",
            NoiseSet::Random => "random",
        }
    }
}

impl std::str::FromStr for NoiseSet {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "generalized" => Ok(NoiseSet::Generalized),
            "separable" => Ok(NoiseSet::Separable),
            "random" => Ok(NoiseSet::Random),
            _ => Err(Error::Unsupported(format!("noise set {s:?}; expected generalized, separable or random"))),
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct QuantifyResult {
    /// Optimal value, clamped to zero when within rounding of it.
    pub value: f64,
    pub quantity: String,
    pub relaxation: RelaxationLevel,
    pub noise: Option<NoiseSet>,
    /// Set when the noise set was replaced by a larger convex one.
    pub outer_bound: bool,
    pub status: SolveStatus,
    pub report: ReportSummary,
}

impl QuantifyResult {
    fn from_report(quantity: &str, rep: &SolveReport, relaxation: RelaxationLevel, noise: Option<NoiseSet>) -> Self {
        let raw = rep.objective;
        let value = if (-tolerances::CLAMP..0.0).contains(&raw) { 0.0 } else { raw };
        Self {
            value,
            quantity: quantity.into(),
            relaxation,
            noise,
            outer_bound: noise == Some(NoiseSet::Random),
            status: rep.status,
            report: rep.summary(),
        }
    }

    pub fn is_optimal(&self) -> bool {
        self.status == SolveStatus::Optimal
    }
}

fn require_parties(b: &Behaviour, n: usize) -> Result<()> {
    if b.parties() != n {
        return Err(Error::MalformedBehaviour(format!("expected a {n}-party behaviour, got {} parties", b.parties())));
    }
    Ok(())
}

/// Noise family `Ω` with `Σ Ω = r I`.
fn noise_families(
    p: &mut ConicProblem,
    b: &Behaviour,
    noise: NoiseSet,
    relaxed: impl FnOnce(&mut ConicProblem) -> Result<Vec<Family>>,
) -> Result<Vec<Family>> {
    match noise {
        NoiseSet::Generalized => Ok(vec![Family::new(p, "Omega", &b.input_dims(), b.outcome_counts(), true, &[])?]),
        NoiseSet::Separable | NoiseSet::Random => relaxed(p),
    }
}

/// Degenerate optima at `r = 0` stall the interior point method a little above
/// zero. A small value is replaced by an exact zero when the behaviour itself has a
/// relaxed-separable model, which is a feasible point with `r = 0` and `Ω = 0`.
fn snap_to_zero(mut res: QuantifyResult, certify: impl FnOnce() -> Result<CertificationResult>) -> Result<QuantifyResult> {
    if res.status == SolveStatus::Optimal && res.value > 0.0 && res.value < tolerances::INFEASIBLE_MARGIN {
        let c = certify()?;
        if c.verdict == Verdict::Feasible && c.margin <= tolerances::PRIMAL_RESIDUAL {
            res.value = 0.0;
            res.report.message = Some(format!("relaxed-separable model found with residual {:.1e}; value set to zero", c.margin));
        }
    }
    Ok(res)
}

/// `min r` with `Γ = (1 + r) M` relaxed-separable, `Ω = r N` in the noise set and
/// `Γ - Ω` reproducing the data.
fn robustness_problem(b: &Behaviour, gamma: Vec<Family>, omega: Vec<Family>, p: &mut ConicProblem) -> Result<()> {
    let r = p.add_scalar("r", ScalarKind::Nonneg)?;
    let dim = gamma[0].dim();
    for (fams, constant) in [(&gamma, 1.0), (&omega, 0.0)] {
        let refs: Vec<&Family> = fams.iter().collect();
        relax::no_signalling_sum(p, &refs)?;
        let all: Vec<_> = fams.iter().flat_map(|f| f.vars.iter().copied()).collect();
        relax::sum_is_identity(p, &all, dim, Some((constant, LinExpr::new().scalar(r, 1.0))))?;
    }
    relax::behaviour_rows(p, b, |o| {
        let mut t: Vec<_> = gamma.iter().map(|f| (f.var(o), 1.0)).collect();
        t.extend(omega.iter().map(|f| (f.var(o), -1.0)));
        t
    })?;
    p.set_objective(Sense::Minimize, LinExpr::new().scalar(r, 1.0))
}

/// MDI robustness of a bipartite behaviour: a lower bound on the robustness of
/// every state that could have produced it.
pub fn mdi_robustness(b: &Behaviour, noise: NoiseSet, r: RelaxationLevel) -> Result<QuantifyResult> {
    require_parties(b, 2)?;
    let dims = b.input_dims();
    let counts = b.outcome_counts().to_vec();
    let mut p = ConicProblem::new();
    let gamma = bipartite_cone(&mut p, "Gamma", &dims, &counts, r)?;
    let omega = noise_families(&mut p, b, noise, |p| Ok(vec![bipartite_cone(p, "Omega", &dims, &counts, r)?]))?;
    robustness_problem(b, vec![gamma], omega, &mut p)?;
    let rep = conic::solve(&p)?;
    let res = QuantifyResult::from_report("robustness", &rep, r, Some(noise));
    snap_to_zero(res, || certify::certify_bipartite(b, r))
}

/// Tripartite analogue of [`mdi_robustness`] against full separability or biseparability.
pub fn mdi_robustness_tripartite(b: &Behaviour, target: TripartiteTarget, noise: NoiseSet, r: RelaxationLevel) -> Result<QuantifyResult> {
    require_parties(b, 3)?;
    let dims = b.input_dims();
    let counts = b.outcome_counts().to_vec();
    let mut p = ConicProblem::new();
    let gamma = tripartite_cone(&mut p, "Gamma", &dims, &counts, target, r)?;
    let omega = noise_families(&mut p, b, noise, |p| tripartite_cone(p, "Omega", &dims, &counts, target, r))?;
    robustness_problem(b, gamma, omega, &mut p)?;
    let rep = conic::solve(&p)?;
    let res = QuantifyResult::from_report("robustness", &rep, r, Some(noise));
    snap_to_zero(res, || match target {
        TripartiteTarget::FullSeparability => certify::certify_tripartite_full(b, r),
        TripartiteTarget::Biseparability => certify::certify_tripartite_bisep(b, r),
    })
}

/// MDI lower bound on the negativity (A cut) of any state producing `b`.
///
/// The behaviour is split as `M⁺ - M⁻` with both families PT-positive and
/// no-signalling, `Σ M⁺ = (1 + t) I`, `Σ M⁻ = t I`; the bound is the least `t`.
/// The two parts stem from operators that are PT-positive but need not be
/// positive, so no positivity is imposed on `M^±` themselves.
pub fn mdi_negativity(b: &Behaviour) -> Result<QuantifyResult> {
    require_parties(b, 2)?;
    let dims = b.input_dims();
    let counts = b.outcome_counts();
    let mut p = ConicProblem::new();
    let t = p.add_scalar("t", ScalarKind::Nonneg)?;
    let plus = Family::new(&mut p, "Mplus", &dims, counts, false, &[0])?;
    let minus = Family::new(&mut p, "Mminus", &dims, counts, false, &[0])?;
    plus.no_signalling(&mut p)?;
    minus.no_signalling(&mut p)?;
    plus.normalize(&mut p, 1.0, LinExpr::new().scalar(t, 1.0))?;
    minus.normalize(&mut p, 0.0, LinExpr::new().scalar(t, 1.0))?;
    relax::behaviour_rows(&mut p, b, |o| vec![(plus.var(o), 1.0), (minus.var(o), -1.0)])?;
    p.set_objective(Sense::Minimize, LinExpr::new().scalar(t, 1.0))?;
    let rep = conic::solve(&p)?;
    Ok(QuantifyResult::from_report("negativity", &rep, RelaxationLevel::Ppt, None))
}

/// What a Werner sweep evaluates at each grid point.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Quantity {
    Robustness(NoiseSet),
    Negativity,
}

#[derive(Clone, Debug, Serialize)]
pub struct QuantitySweepPoint {
    pub w: f64,
    pub value: Option<f64>,
    pub status: String,
    pub runtime_ms: f64,
}

/// Evaluates `quantity` on `werner(w)` measured with Bell-state measurements on
/// both sides, one independent solve per grid point.
pub fn werner_quantity_sweep(
    quantity: Quantity,
    ens: &InputEnsemble,
    grid: &[f64],
    r: RelaxationLevel,
    exec: Execution,
) -> Vec<QuantitySweepPoint> {
    exec::map(exec, grid, |&w| {
        let start = Instant::now();
        let out = werner(w).and_then(|rho| simulate_bipartite(&rho, &bsm(), &bsm(), ens, ens)).and_then(|b| match quantity {
            Quantity::Robustness(noise) => mdi_robustness(&b, noise, r),
            Quantity::Negativity => mdi_negativity(&b),
        });
        let runtime_ms = start.elapsed().as_secs_f64() * 1e3;
        match out {
            Ok(res) => QuantitySweepPoint { w, value: Some(res.value), status: status_label(res.status).into(), runtime_ms },
            Err(e) => QuantitySweepPoint { w, value: None, status: format!("error: {e}"), runtime_ms },
        }
    })
}

pub(crate) fn status_label(s: SolveStatus) -> &'static str {
    match s {
        SolveStatus::Optimal => "optimal",
        SolveStatus::InfeasibleCertified => "infeasible",
        SolveStatus::Indeterminate => "indeterminate",
    }
}

pub fn quantity_sweep_csv(points: &[QuantitySweepPoint]) -> String {
    let mut out = String::from("w,value,status,runtime_ms\n");
    for p in points {
        let value = p.value.map_or(String::new(), |v| format!("{v:.14e}"));
        out.push_str(&format!("{},{},{},{:.3}\n", p.w, value, csv_field(&p.status), p.runtime_ms));
    }
    out
}

pub(crate) fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quantum::{tomo4_inputs, QuantumState};

    fn werner_behaviour(w: f64) -> Behaviour {
        let e = tomo4_inputs();
        simulate_bipartite(&werner(w).unwrap(), &bsm(), &bsm(), &e, &e).unwrap()
    }

    #[test]
    fn product_state_has_zero_robustness_and_negativity() {
        let e = tomo4_inputs();
        let rho = QuantumState::bloch([0.1, 0.5, -0.2]).unwrap().kron(&QuantumState::bloch([-0.4, 0.0, 0.3]).unwrap());
        let b = simulate_bipartite(&rho, &bsm(), &bsm(), &e, &e).unwrap();
        for noise in [NoiseSet::Generalized, NoiseSet::Separable, NoiseSet::Random] {
            let r = mdi_robustness(&b, noise, RelaxationLevel::Ppt).unwrap();
            assert!(r.is_optimal(), "{noise:?}: {:?}", r.report);
            assert!(r.value.abs() <= 1e-7, "{noise:?}: {}", r.value);
        }
        let n = mdi_negativity(&b).unwrap();
        assert!(n.is_optimal());
        assert!(n.value.abs() <= 1e-7, "{}", n.value);
    }

    #[test]
    fn werner_values_are_monotone_and_bounded() {
        let mut last = (0.0, 0.0);
        for w in [0.0, 0.25, 0.5, 0.75, 1.0] {
            let b = werner_behaviour(w);
            let rob = mdi_robustness(&b, NoiseSet::Generalized, RelaxationLevel::Ppt).unwrap();
            let neg = mdi_negativity(&b).unwrap();
            assert!(rob.is_optimal() && neg.is_optimal(), "w = {w}: {:?} {:?}", rob.report, neg.report);
            assert!(rob.value >= last.0 - 1e-6 && neg.value >= last.1 - 1e-6, "w = {w}");
            let n_state = ((3.0 * w - 1.0) / 4.0).max(0.0);
            assert!(neg.value <= n_state + 1e-6, "w = {w}: {} > {n_state}", neg.value);
            last = (rob.value, neg.value);
        }
        assert!(last.0 > 0.1 && last.1 > 0.1, "{last:?}");
    }

    #[test]
    fn random_noise_is_flagged_as_outer_bound() {
        let b = werner_behaviour(1.0);
        let r = mdi_robustness(&b, NoiseSet::Random, RelaxationLevel::Ppt).unwrap();
        assert!(r.outer_bound);
        let s = mdi_robustness(&b, NoiseSet::Separable, RelaxationLevel::Ppt).unwrap();
        assert!((r.value - s.value).abs() < 1e-6);
        assert!(!s.outer_bound);
    }

    #[test]
    fn sweep_csv_has_one_row_per_point() {
        let pts =
            werner_quantity_sweep(Quantity::Negativity, &tomo4_inputs(), &[0.0, 1.0, 1.5], RelaxationLevel::Ppt, Execution::Sequential);
        let csv = quantity_sweep_csv(&pts);
        let lines: Vec<_> = csv.lines().collect();
        assert_eq!(lines[0], "w,value,status,runtime_ms");
        assert_eq!(lines.len(), 4);
        assert!(lines[1].starts_with("0,") && lines[1].contains(",optimal,"));
        assert!(lines[3].starts_with("1.5,,") && lines[3].contains("error"));
    }

    #[test]
    fn noise_set_parses() {
        assert_eq!("separable".parse::<NoiseSet>().unwrap(), NoiseSet::Separable);
        assert!("white".parse::<NoiseSet>().is_err());
    }
}
