//! Linear optimization over products of PSD cones with affine equality constraints.
//!
//! Problems are assembled with [`ConicProblem`] and solved by [`EmbeddedIpm`], a
//! homogeneous self-dual interior-point method on the realified problem.
//! [`solve_feasibility`] implements the phase-I reformulation used by the
//! certification routines.

mod compile;
mod cones;
mod ipm;
mod kkt;
mod model;
pub mod validation;

use std::time::{Duration, Instant};

use serde::Serialize;
use serde_json::json;

pub use model::{ConeMap, ConicProblem, EqualityKind, Field, LinExpr, MatrixVar, ScalarId, ScalarKind, ScalarVar, Sense, VarId};

use crate::error::Result;
use crate::linalg::{self, CMatrix};
use crate::tolerances;
use compile::{Mode, RowTarget, StandardForm};
use ipm::{RawSolution, RawStatus, RowReduction, Settings};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum SolveStatus {
    Optimal,
    InfeasibleCertified,
    Indeterminate,
}

/// Primal values of every variable, in declaration order.
#[derive(Clone, Debug, Default)]
pub struct Solution {
    pub matrices: Vec<CMatrix>,
    pub scalars: Vec<f64>,
}

impl Solution {
    pub fn matrix(&self, v: VarId) -> &CMatrix {
        &self.matrices[v.0]
    }

    pub fn scalar(&self, s: ScalarId) -> f64 {
        self.scalars[s.0]
    }
}

/// Farkas-type evidence that the equalities cannot be met inside the cones.
#[derive(Clone, Debug)]
pub struct InfeasibilityCertificate {
    /// Multiplier per equality, scaled so the largest multiplier has magnitude one.
    pub multipliers: Vec<f64>,
    /// Amount by which the certificate separates the constraints from feasibility.
    pub margin: f64,
}

#[derive(Clone, Debug)]
pub struct SolveReport {
    pub status: SolveStatus,
    /// Objective at the returned point, in the user's sense.
    pub objective: f64,
    pub dual_objective: f64,
    /// Largest equality violation or cone violation of the returned point.
    pub primal_residual: f64,
    /// `|primal - dual| / max(1, |primal|)`.
    pub duality_gap: f64,
    /// Sensitivity of the optimum to each equality's right-hand side.
    pub duals: Vec<f64>,
    pub iterations: usize,
    pub wall_time: Duration,
    pub solution: Solution,
    pub certificate: Option<InfeasibilityCertificate>,
    pub message: Option<String>,
}

impl SolveReport {
    pub fn is_optimal(&self) -> bool {
        self.status == SolveStatus::Optimal
    }

    pub fn summary(&self) -> ReportSummary {
        ReportSummary {
            status: self.status,
            objective: self.objective,
            dual_objective: self.dual_objective,
            primal_residual: self.primal_residual,
            duality_gap: self.duality_gap,
            iterations: self.iterations,
            wall_time_ms: self.wall_time.as_secs_f64() * 1e3,
            message: self.message.clone(),
        }
    }
}

/// Compact, serializable part of a [`SolveReport`].
#[derive(Clone, Debug, Serialize)]
pub struct ReportSummary {
    pub status: SolveStatus,
    pub objective: f64,
    pub dual_objective: f64,
    pub primal_residual: f64,
    pub duality_gap: f64,
    pub iterations: usize,
    pub wall_time_ms: f64,
    pub message: Option<String>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Verdict {
    Feasible,
    Infeasible,
    Indeterminate,
}

/// Dual certificate of the phase-I problem.
///
/// For every right-hand side vector `q` of the data equalities for which the
/// equalities can be met exactly, `Σ beta_i q_i - theta <= 0`; at the tested
/// data the score equals the phase-I optimum.
#[derive(Clone, Debug)]
pub struct PhaseOneCertificate {
    /// One coefficient per equality (zero for structural ones).
    pub beta: Vec<f64>,
    pub theta: f64,
}

impl PhaseOneCertificate {
    pub fn score(&self, rhs: &[f64]) -> f64 {
        self.beta.iter().zip(rhs).map(|(b, q)| b * q).sum::<f64>() - self.theta
    }
}

#[derive(Clone, Debug)]
pub struct CertificationResult {
    pub verdict: Verdict,
    /// Optimal phase-I slack: the smallest uniform violation of the data equalities.
    pub margin: f64,
    pub certificate: Option<PhaseOneCertificate>,
    pub report: SolveReport,
}

/// Interface for conic back ends.
pub trait ConicSolver: Send + Sync {
    fn name(&self) -> &'static str;
    fn solve(&self, p: &ConicProblem) -> Result<SolveReport>;
    fn solve_feasibility(&self, p: &ConicProblem) -> Result<CertificationResult>;
}

/// The built-in interior-point solver.
#[derive(Clone, Debug)]
pub struct EmbeddedIpm {
    pub max_iterations: usize,
    pub tolerance: f64,
}

impl Default for EmbeddedIpm {
    fn default() -> Self {
        let s = Settings::default();
        Self { max_iterations: s.max_iter, tolerance: s.tol }
    }
}

impl ConicSolver for EmbeddedIpm {
    fn name(&self) -> &'static str {
        "embedded-ipm"
    }

    fn solve(&self, p: &ConicProblem) -> Result<SolveReport> {
        let start = Instant::now();
        let sf = compile::compile(p, Mode::Normal)?;
        let raw = run(&sf, &self.settings());
        Ok(finish(p, &sf, raw, start))
    }

    fn solve_feasibility(&self, p: &ConicProblem) -> Result<CertificationResult> {
        let start = Instant::now();
        if p.equalities.is_empty() {
            return Err(crate::Error::Model("feasibility problem without equalities".into()));
        }
        let sf = compile::compile(p, Mode::PhaseOne)?;
        let settings = Settings { primal_target: Some(0.1 * tolerances::FEASIBLE_MARGIN), ..self.settings() };
        let raw = run(&sf, &settings);
        let report = finish(p, &sf, raw, start);
        Ok(phase_one_result(p, &sf, report))
    }
}

impl EmbeddedIpm {
    fn settings(&self) -> Settings {
        Settings { max_iter: self.max_iterations, tol: self.tolerance, ..Settings::default() }
    }
}

/// Solve with the embedded solver.
pub fn solve(p: &ConicProblem) -> Result<SolveReport> {
    EmbeddedIpm::default().solve(p)
}

/// Phase-I feasibility test with the embedded solver.
///
/// Data equalities are relaxed by a common slack `s` (structural equalities stay
/// exact, unless there are no data equalities); the verdict is read off `s*`.
pub fn solve_feasibility(p: &ConicProblem) -> Result<CertificationResult> {
    EmbeddedIpm::default().solve_feasibility(p)
}

enum Run {
    /// Solver output and the equality rows it kept.
    Raw(RawSolution, Vec<usize>),
    /// Equality rows inconsistent on their own: multiplier per standard-form row.
    Inconsistent(Vec<f64>),
    TrivialRow(usize),
}

fn run(sf: &StandardForm, settings: &Settings) -> Run {
    if let Some(i) = sf.trivially_infeasible {
        return Run::TrivialRow(i);
    }
    match ipm::reduce_rows(sf) {
        RowReduction::Inconsistent(y) => Run::Inconsistent(y),
        RowReduction::Keep(keep) => Run::Raw(ipm::solve(sf, &keep, settings), keep),
    }
}

fn extract_solution(p: &ConicProblem, sf: &StandardForm, x: &[f64]) -> Solution {
    let matrices = p
        .vars
        .iter()
        .zip(&sf.var_params)
        .map(|(v, &(start, count))| compile::assemble_matrix(&x[start..start + count], v.dim, v.field))
        .collect();
    let scalars = sf.scalar_params.iter().map(|&(plus, minus)| x[plus] - minus.map_or(0.0, |m| x[m])).collect();
    Solution { matrices, scalars }
}

fn eval_expr(e: &LinExpr, sol: &Solution) -> f64 {
    let mats: f64 = e.mats.iter().map(|(v, k)| linalg::re_trace_product(k, &sol.matrices[v.0])).sum();
    mats + e.scalars.iter().map(|(s, c)| c * sol.scalars[s.0]).sum::<f64>()
}

/// Equality and cone violations of `sol`, measured directly on the model.
fn primal_violation(p: &ConicProblem, sol: &Solution, skip_data: bool) -> f64 {
    let mut worst = 0.0f64;
    for eq in &p.equalities {
        if skip_data && eq.kind == EqualityKind::Data {
            continue;
        }
        worst = worst.max((eval_expr(&eq.expr, sol) - eq.rhs).abs());
    }
    for cone in &p.cones {
        let var = &p.vars[cone.var.0];
        let m = &sol.matrices[cone.var.0];
        let image = match cone.map {
            ConeMap::Identity => m.clone(),
            ConeMap::PartialTranspose(f) => linalg::partial_transpose(m, &var.factors, f).expect("factor checked on construction"),
        };
        let min = linalg::eigenvalues_hermitian(&image).iter().fold(f64::INFINITY, |a, &b| a.min(b));
        worst = worst.max(-min);
    }
    for (s, &v) in p.scalars.iter().zip(&sol.scalars) {
        if s.kind == ScalarKind::Nonneg {
            worst = worst.max(-v);
        }
    }
    worst
}

/// Per-equality values of a standard-form row vector (`y`), mapped back to the model.
fn duals_from(sf: &StandardForm, y: &[f64], z_lp: Option<&[f64]>) -> Vec<f64> {
    sf.targets
        .iter()
        .map(|t| match *t {
            RowTarget::Hard { row, scale } => -sf.sense_sign * y[row] / scale,
            RowTarget::Soft { plus, minus } => z_lp.map_or(0.0, |z| z[minus] - z[plus]),
            RowTarget::Vacuous => 0.0,
        })
        .collect()
}

fn finish(p: &ConicProblem, sf: &StandardForm, run: Run, start: Instant) -> SolveReport {
    let m = p.equalities.len();
    let blank = |status, cert, msg: &str| SolveReport {
        status,
        objective: f64::NAN,
        dual_objective: f64::NAN,
        primal_residual: f64::NAN,
        duality_gap: f64::NAN,
        duals: vec![0.0; m],
        iterations: 0,
        wall_time: start.elapsed(),
        solution: Solution::default(),
        certificate: cert,
        message: Some(msg.to_string()),
    };
    let (raw, keep) = match run {
        Run::TrivialRow(i) => {
            let mut mult = vec![0.0; m];
            mult[i] = -p.equalities[i].rhs.signum();
            let cert = InfeasibilityCertificate { multipliers: mult, margin: p.equalities[i].rhs.abs() };
            return blank(SolveStatus::InfeasibleCertified, Some(cert), "equality with no terms has a nonzero right-hand side");
        }
        Run::Inconsistent(y) => {
            let mut mult = duals_from(sf, &y, None);
            mult.iter_mut().for_each(|v| *v *= -sf.sense_sign);
            let big = mult.iter().fold(0.0f64, |a, &b| a.max(b.abs())).max(f64::MIN_POSITIVE);
            mult.iter_mut().for_each(|v| *v /= big);
            let margin = -p.equalities.iter().zip(&mult).map(|(e, w)| e.rhs * w).sum::<f64>();
            let cert = InfeasibilityCertificate { multipliers: mult, margin };
            return blank(SolveStatus::InfeasibleCertified, Some(cert), "equality constraints are inconsistent");
        }
        Run::Raw(raw, keep) => (raw, keep),
    };

    let elapsed = start.elapsed();
    match raw.status {
        RawStatus::PrimalInfeasible => {
            // Ray normalized to b'y + h'z = -1; rescale to unit max multiplier.
            let mut mult: Vec<f64> = sf
                .targets
                .iter()
                .map(|t| match *t {
                    RowTarget::Hard { row, scale } => raw.y[row] / scale,
                    _ => 0.0,
                })
                .collect();
            let big = mult.iter().fold(raw.z.max_abs(), |a, &b| a.max(b.abs())).max(f64::MIN_POSITIVE);
            mult.iter_mut().for_each(|v| *v /= big);
            let cert = InfeasibilityCertificate { multipliers: mult, margin: 1.0 / big };
            let mut r = blank(SolveStatus::InfeasibleCertified, Some(cert), "primal infeasible");
            r.iterations = raw.iterations;
            r
        }
        RawStatus::DualInfeasible => {
            let mut r = blank(SolveStatus::Indeterminate, None, "objective unbounded");
            r.iterations = raw.iterations;
            r
        }
        RawStatus::Optimal | RawStatus::Stopped(_) => {
            let phase_one = sf.slack_param.is_some();
            let mut solution = extract_solution(p, sf, &raw.x);
            let mut primal_residual = primal_violation(p, &solution, phase_one);
            // Interior iterates stall a little short of the equality tolerance on
            // degenerate problems; a least-squares correction usually closes it.
            if !phase_one && primal_residual > tolerances::PRIMAL_RESIDUAL {
                if let Some(x) = ipm::project_onto_rows(sf, &keep, &raw.x) {
                    let polished = extract_solution(p, sf, &x);
                    let v = primal_violation(p, &polished, phase_one);
                    if v < primal_residual {
                        solution = polished;
                        primal_residual = v;
                    }
                }
            }
            let objective = match (&p.objective, phase_one) {
                (Some((_, e)), false) => eval_expr(e, &solution),
                _ => sf.c.iter().zip(&raw.x).map(|(c, x)| c * x).sum(),
            };
            let dual_objective = sf.sense_sign * raw.dcost;
            let gap = (raw.pcost - raw.dcost).abs() / raw.pcost.abs().max(1.0);
            let good = primal_residual <= tolerances::PRIMAL_RESIDUAL && gap <= tolerances::RELATIVE_GAP;
            let status = if good { SolveStatus::Optimal } else { SolveStatus::Indeterminate };
            let message = match (&raw.status, good) {
                (RawStatus::Stopped(why), true) => Some(format!("{why}; accepted at reduced accuracy")),
                (RawStatus::Stopped(why), false) => {
                    Some(format!("{why}; primal residual {primal_residual:.2e}, gap {gap:.2e}, dual residual {:.2e}", raw.dres))
                }
                (_, false) => Some(format!("residual {primal_residual:.2e}, gap {gap:.2e}")),
                _ => None,
            };
            SolveReport {
                status,
                objective,
                dual_objective,
                primal_residual,
                duality_gap: gap,
                duals: duals_from(sf, &raw.y, Some(&raw.z.lp)),
                iterations: raw.iterations,
                wall_time: elapsed,
                solution,
                certificate: None,
                message,
            }
        }
    }
}

fn phase_one_result(p: &ConicProblem, sf: &StandardForm, report: SolveReport) -> CertificationResult {
    if report.status == SolveStatus::InfeasibleCertified {
        // Hard equalities alone are inconsistent.
        return CertificationResult { verdict: Verdict::Infeasible, margin: f64::INFINITY, certificate: None, report };
    }
    // A feasible verdict rests on the primal point alone, checked against every equality.
    if !report.solution.matrices.is_empty() || !report.solution.scalars.is_empty() {
        let violation = primal_violation(p, &report.solution, false);
        if violation <= tolerances::FEASIBLE_MARGIN {
            return CertificationResult { verdict: Verdict::Feasible, margin: violation, certificate: None, report };
        }
    }
    if report.status != SolveStatus::Optimal {
        let margin = if report.objective.is_finite() { report.objective } else { f64::NAN };
        return CertificationResult { verdict: Verdict::Indeterminate, margin, certificate: None, report };
    }
    let margin = report.objective.max(0.0);
    let verdict = if margin <= tolerances::FEASIBLE_MARGIN {
        Verdict::Feasible
    } else if margin >= tolerances::INFEASIBLE_MARGIN {
        Verdict::Infeasible
    } else {
        Verdict::Indeterminate
    };
    let mut beta = vec![0.0; p.equalities.len()];
    let mut theta = 0.0;
    for (i, t) in sf.targets.iter().enumerate() {
        match *t {
            RowTarget::Soft { .. } => beta[i] = report.duals[i],
            RowTarget::Hard { .. } => theta -= report.duals[i] * p.equalities[i].rhs,
            RowTarget::Vacuous => {}
        }
    }
    let certificate = (verdict == Verdict::Infeasible).then_some(PhaseOneCertificate { beta, theta });
    CertificationResult { verdict, margin, certificate, report }
}

impl ConicProblem {
    /// Debug dump: variables, cones, equality triplets and objective.
    pub fn to_json(&self) -> serde_json::Value {
        let expr_json = |e: &LinExpr| {
            let mats: Vec<_> = e
                .mats
                .iter()
                .map(|(v, k)| {
                    let entries: Vec<_> = k
                        .iter()
                        .enumerate()
                        .filter(|(_, z)| z.re != 0.0 || z.im != 0.0)
                        .map(|(idx, z)| {
                            let n = k.nrows();
                            json!([idx % n, idx / n, z.re, z.im])
                        })
                        .collect();
                    json!({ "var": self.vars[v.0].label, "entries": entries })
                })
                .collect();
            let scalars: Vec<_> = e.scalars.iter().map(|(s, c)| json!([self.scalars[s.0].label, c])).collect();
            json!({ "matrices": mats, "scalars": scalars })
        };
        json!({
            "variables": self.vars.iter().map(|v| json!({
                "label": v.label,
                "dim": v.dim,
                "field": if v.field == Field::Complex { "complex" } else { "real" },
                "factors": v.factors,
            })).collect::<Vec<_>>(),
            "scalars": self.scalars.iter().map(|s| json!({
                "label": s.label,
                "kind": if s.kind == ScalarKind::Free { "free" } else { "nonneg" },
            })).collect::<Vec<_>>(),
            "cones": self.cones.iter().map(|c| json!({
                "var": self.vars[c.var.0].label,
                "map": match c.map {
                    ConeMap::Identity => json!("identity"),
                    ConeMap::PartialTranspose(f) => json!({ "partial_transpose": f }),
                },
            })).collect::<Vec<_>>(),
            "equalities": self.equalities.iter().map(|e| json!({
                "kind": if e.kind == EqualityKind::Data { "data" } else { "structural" },
                "label": e.label,
                "lhs": expr_json(&e.expr),
                "rhs": e.rhs,
            })).collect::<Vec<_>>(),
            "objective": self.objective.as_ref().map(|(s, e)| json!({
                "sense": if *s == Sense::Minimize { "min" } else { "max" },
                "expr": expr_json(e),
            })),
        })
    }
}

#[cfg(test)]
mod tests;
