//! Randomness certification: how well an eavesdropper holding a classical copy `e`
//! of her own guess can predict the outcomes at target inputs.

use std::time::Instant;

use serde::Serialize;

use crate::conic::{self, ConicProblem, Field, LinExpr, ReportSummary, ScalarKind, Sense, SolveStatus};
use crate::error::{Error, Result};
use crate::exec::{self, Execution};
use crate::linalg::CMatrix;
use crate::quantify::{csv_field, status_label};
use crate::quantum::{bsm, werner, InputEnsemble};
use crate::relax::{behaviour_rows, no_signalling_for, sum_is_identity, Compressed, Operand};
use crate::scenario::{simulate_bipartite, tomographic_reconstruction, tuple_digits, tuple_index, Behaviour};
use crate::tolerances::SUPPORT_RANK;

/// Largest eavesdropper alphabet accepted by the guessing programs.
pub const MAX_EVE_ALPHABET: usize = 64;

#[derive(Clone, Debug, Serialize)]
pub struct GuessingResult {
    pub guessing_probability: f64,
    /// `-log2` of the guessing probability.
    pub min_entropy_bits: f64,
    /// One input index per party.
    pub targets: Vec<usize>,
    pub status: SolveStatus,
    /// Absent for bounds read directly off the table.
    pub report: Option<ReportSummary>,
}

impl GuessingResult {
    fn new(g: f64, targets: &[usize], status: SolveStatus, report: Option<ReportSummary>) -> Self {
        Self { guessing_probability: g, min_entropy_bits: -g.log2(), targets: targets.to_vec(), status, report }
    }

    pub fn is_optimal(&self) -> bool {
        self.status == SolveStatus::Optimal
    }
}

fn check_targets(b: &Behaviour, targets: &[usize]) -> Result<()> {
    let counts = b.input_counts();
    if targets.len() != counts.len() {
        return Err(Error::MalformedBehaviour(format!("{} target inputs for a {}-party behaviour", targets.len(), counts.len())));
    }
    for (party, (&t, &n)) in targets.iter().zip(&counts).enumerate() {
        if t >= n {
            return Err(Error::MalformedBehaviour(format!("target input {t} of party {party} out of range (0..{n})")));
        }
    }
    Ok(())
}

/// Largest cell probability at the target inputs: what Eve achieves by always
/// guessing the most likely outcome.
pub fn naive_guessing(b: &Behaviour, targets: &[usize]) -> Result<GuessingResult> {
    check_targets(b, targets)?;
    let counts = b.outcome_counts();
    let g = (0..b.outcome_tuples()).map(|o| b.prob(targets, &tuple_digits(o, counts))).fold(0.0, f64::max);
    Ok(GuessingResult::new(g, targets, SolveStatus::Optimal, None))
}

/// Guessing probability of the outcome of one box at input `target`.
pub fn single_box_guessing(b: &Behaviour, target: usize) -> Result<GuessingResult> {
    if b.parties() != 1 {
        return Err(Error::MalformedBehaviour(format!("expected a single-party behaviour, got {} parties", b.parties())));
    }
    guessing(b, &[target])
}

/// Guessing probability of the outcome pair at inputs `(x, y)`.
pub fn bipartite_guessing(b: &Behaviour, x: usize, y: usize) -> Result<GuessingResult> {
    if b.parties() != 2 {
        return Err(Error::MalformedBehaviour(format!("expected a bipartite behaviour, got {} parties", b.parties())));
    }
    guessing(b, &[x, y])
}

/// Maximizes `Σ_e Tr[M_{o=e, e} ψ_target]` over PSD operators `M_{o,e}` that
/// reproduce the behaviour after summing over `e`, where each `M_{., e}` is a
/// no-signalling family normalized to `p(e) I` and `Σ_e p(e) = 1`.
fn guessing(b: &Behaviour, targets: &[usize]) -> Result<GuessingResult> {
    let (p, _) = guessing_program(b, targets)?;
    let rep = conic::solve(&p)?;
    Ok(GuessingResult::new(rep.objective, targets, rep.status, Some(rep.summary())))
}

/// The guessing program and its operators `M_{o,e}`, indexed `o * |E| + e`.
fn guessing_program(b: &Behaviour, targets: &[usize]) -> Result<(ConicProblem, Vec<Compressed>)> {
    check_targets(b, targets)?;
    let n_out = b.outcome_tuples();
    if n_out > MAX_EVE_ALPHABET {
        return Err(Error::DimensionGuard { dim: n_out, limit: MAX_EVE_ALPHABET });
    }
    let dims = b.input_dims();
    let dim: usize = dims.iter().product();
    let mut counts = b.outcome_counts().to_vec();
    counts.push(n_out);

    let supports = supports(b)?;
    let mut p = ConicProblem::new();
    let mut ops = Vec::with_capacity(n_out * n_out);
    for o in 0..n_out {
        let v = &supports[o];
        for e in 0..n_out {
            let var = match v.ncols() {
                0 => None,
                r => Some(p.add_psd_var_with_factors(&format!("M[{o},{e}]"), vec![r], Field::Complex)?),
            };
            ops.push(Compressed { var, v: v.clone() });
        }
    }
    let op = |o: usize, e: usize| &ops[o * n_out + e];
    if dims.len() > 1 {
        for party in 0..dims.len() {
            no_signalling_for(&mut p, &[&ops], &counts, &dims, party)?;
        }
    }
    let mut total = LinExpr::new();
    for e in 0..n_out {
        let pe = p.add_scalar(&format!("p[{e}]"), ScalarKind::Free)?;
        let family: Vec<Compressed> = (0..n_out).map(|o| op(o, e).clone()).collect();
        sum_is_identity(&mut p, &family, dim, Some((0.0, LinExpr::new().scalar(pe, 1.0))))?;
        total.push_scalar(pe, 1.0);
    }
    p.add_structural_equality(total, 1.0)?;
    let radices = b.outcome_counts().to_vec();
    behaviour_rows(&mut p, b, |digits| {
        let o = tuple_index(digits, &radices);
        (0..n_out).map(|e| (op(o, e).clone(), 1.0)).collect()
    })?;
    let k = b.input_product(tuple_index(targets, &b.input_counts()));
    let mut objective = LinExpr::new();
    for e in 0..n_out {
        op(e, e).push_trace(&mut objective, &k);
    }
    p.set_objective(Sense::Maximize, objective)?;
    Ok((p, ops))
}

/// Isometry onto the support of each effective POVM element.
///
/// Every `M_{o,e}` lies below `Σ_e M_{o,e} = M_o`, so it is supported where `M_o`
/// is. Restricting to that support gives the program an interior when `M_o` is
/// rank deficient. Without a complete ensemble `M_o` is unknown and the full
/// space is kept.
fn supports(b: &Behaviour) -> Result<Vec<CMatrix>> {
    let dim: usize = b.input_dims().iter().product();
    if !b.ensembles().iter().all(|e| e.tomographically_complete()) {
        return Ok(vec![CMatrix::identity(dim, dim); b.outcome_tuples()]);
    }
    let family = tomographic_reconstruction(b)?;
    let eigs: Vec<_> = family.operators.iter().map(|m| m.eig()).collect();
    let top = eigs.iter().flat_map(|e| e.values.iter()).fold(0.0f64, |a, &v| a.max(v));
    Ok(eigs
        .iter()
        .map(|e| {
            let keep: Vec<usize> = (0..e.values.len()).filter(|&i| e.values[i] > SUPPORT_RANK * top).collect();
            CMatrix::from_fn(dim, keep.len(), |r, c| e.vectors[(r, keep[c])])
        })
        .collect())
}

/// `{0, 0.05, ..., 1}`.
pub fn default_grid() -> Vec<f64> {
    (0..=20).map(|i| i as f64 / 20.0).collect()
}

#[derive(Clone, Debug, Serialize)]
pub struct SweepPoint {
    pub w: f64,
    pub guessing_probability: Option<f64>,
    pub min_entropy_bits: Option<f64>,
    pub status: String,
    pub runtime_ms: f64,
}

/// Bipartite guessing probability of `werner(w)` measured with Bell-state
/// measurements on both sides; a failed point is recorded, not propagated.
pub fn werner_sweep(grid: &[f64], ens: &InputEnsemble, targets: (usize, usize), exec: Execution) -> Vec<SweepPoint> {
    exec::map(exec, grid, |&w| {
        let start = Instant::now();
        let out = werner(w)
            .and_then(|rho| simulate_bipartite(&rho, &bsm(), &bsm(), ens, ens))
            .and_then(|b| bipartite_guessing(&b, targets.0, targets.1));
        let runtime_ms = start.elapsed().as_secs_f64() * 1e3;
        match out {
            Ok(r) => SweepPoint {
                w,
                guessing_probability: Some(r.guessing_probability),
                min_entropy_bits: Some(r.min_entropy_bits),
                status: status_label(r.status).into(),
                runtime_ms,
            },
            Err(e) => SweepPoint { w, guessing_probability: None, min_entropy_bits: None, status: format!("error: {e}"), runtime_ms },
        }
    })
}

/// Header `w,guessing_probability,min_entropy_bits,status,runtime_ms`; floats carry
/// 15 significant digits, failed values are left empty.
pub fn sweep_csv(points: &[SweepPoint]) -> String {
    let num = |v: Option<f64>| v.map_or(String::new(), |v| format!("{v:.14e}"));
    let mut out = String::from("w,guessing_probability,min_entropy_bits,status,runtime_ms\n");
    for p in points {
        out.push_str(&format!(
            "{},{},{},{},{:.3}\n",
            num(Some(p.w)),
            num(p.guessing_probability),
            num(p.min_entropy_bits),
            csv_field(&p.status),
            p.runtime_ms
        ));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quantum::{computational_povm, tetrahedral_povm, tetrahedron_inputs, tomo4_inputs, QuantumState};
    use crate::scenario::simulate_single_box;

    fn werner_box(w: f64) -> Behaviour {
        let e = tetrahedron_inputs();
        simulate_bipartite(&werner(w).unwrap(), &bsm(), &bsm(), &e, &e).unwrap()
    }

    fn single_box(povm: &crate::quantum::Povm) -> Behaviour {
        simulate_single_box(povm, &QuantumState::maximally_mixed(vec![1]), &tomo4_inputs()).unwrap()
    }

    #[test]
    fn naive_bound_reads_the_table() {
        let u = Behaviour::uniform(vec![4, 4], vec![tomo4_inputs(), tomo4_inputs()]).unwrap();
        assert!((naive_guessing(&u, &[1, 2]).unwrap().guessing_probability - 1.0 / 16.0).abs() < 1e-15);
        let b = werner_box(1.0);
        let counts = b.outcome_counts().to_vec();
        let direct = (0..16).map(|o| b.prob(&[2, 3], &tuple_digits(o, &counts))).fold(0.0, f64::max);
        assert_eq!(naive_guessing(&b, &[2, 3]).unwrap().guessing_probability, direct);
        assert!(naive_guessing(&b, &[4, 0]).is_err());
        assert!(naive_guessing(&b, &[0]).is_err());
    }

    #[test]
    fn tetrahedral_box_gives_two_bits() {
        let r = single_box_guessing(&single_box(&tetrahedral_povm()), 0).unwrap();
        assert!(r.is_optimal());
        assert!((r.guessing_probability - 0.25).abs() < 1e-6, "{}", r.guessing_probability);
        assert!((r.min_entropy_bits - 2.0).abs() < 1e-5);
    }

    #[test]
    fn projective_box_gives_one_bit() {
        let r = single_box_guessing(&single_box(&computational_povm(2)), 0).unwrap();
        assert!((r.guessing_probability - 0.5).abs() < 1e-6, "{}", r.guessing_probability);
    }

    #[test]
    fn deterministic_box_is_fully_predictable() {
        let ens = tomo4_inputs();
        let probs: Vec<f64> = (0..4).flat_map(|_| [1.0, 0.0]).collect();
        let b = Behaviour::new(vec![2], vec![ens], probs, Default::default()).unwrap();
        let r = single_box_guessing(&b, 0).unwrap();
        assert!((r.guessing_probability - 1.0).abs() < 1e-6);
    }

    fn tomo4_werner_box(w: f64) -> Behaviour {
        let e = tomo4_inputs();
        simulate_bipartite(&werner(w).unwrap(), &bsm(), &bsm(), &e, &e).unwrap()
    }

    #[test]
    fn werner_endpoints() {
        // Target pair (0, 0) of tomo4 is I/2 on both sides.
        let r = bipartite_guessing(&tomo4_werner_box(1.0), 0, 0).unwrap();
        assert!(r.is_optimal());
        assert!((r.guessing_probability - 1.0 / 16.0).abs() < 1e-6, "{}", r.guessing_probability);
        assert!((r.min_entropy_bits - 4.0).abs() < 1e-4);
        let r = bipartite_guessing(&tomo4_werner_box(0.0), 0, 0).unwrap();
        assert!((r.guessing_probability - 1.0).abs() < 1e-6, "{}", r.guessing_probability);
        assert!(r.min_entropy_bits.abs() < 1e-5);
    }

    #[test]
    fn pure_targets_cannot_beat_the_table() {
        let b = werner_box(1.0);
        let naive = naive_guessing(&b, &[0, 0]).unwrap().guessing_probability;
        let r = bipartite_guessing(&b, 0, 0).unwrap();
        assert!(r.is_optimal());
        assert!(r.guessing_probability >= naive - 1e-7);
        assert!((r.guessing_probability - naive).abs() < 1e-6, "{} vs {naive}", r.guessing_probability);
    }

    #[test]
    fn wrong_party_count_is_rejected() {
        let b = werner_box(0.5);
        assert!(single_box_guessing(&b, 0).is_err());
        assert!(bipartite_guessing(&single_box(&tetrahedral_povm()), 0, 0).is_err());
    }

    #[test]
    fn sweep_csv_layout() {
        let pts = werner_sweep(&[1.0], &tomo4_inputs(), (0, 0), Execution::Sequential);
        let csv = sweep_csv(&pts);
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], "w,guessing_probability,min_entropy_bits,status,runtime_ms");
        let cols: Vec<&str> = lines[1].split(',').collect();
        assert_eq!(cols[0], "1.00000000000000e0");
        assert_eq!(cols[3], "optimal");
        let bits: f64 = cols[2].parse().unwrap();
        assert!((bits - 4.0).abs() < 1e-3);
        assert_eq!(default_grid().len(), 21);
    }
}
