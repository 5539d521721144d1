//! Lowering of a [`ConicProblem`] to the real standard form used by the interior-point method:
//!
//! ```text
//! min c'x  s.t.  A x = b,  slack_k = h_k + T_k x  in cone K_k
//! ```
//!
//! `x` collects the real coordinates of every Hermitian variable (in a fixed
//! Hermitian basis) and every scalar. PSD cones are realified images of one
//! variable; LP rows hold scalar nonnegativity and phase-I slack rows.

use num_complex::Complex64;

use super::model::{ConeMap, ConicProblem, EqualityKind, Field, LinExpr, ScalarKind, Sense};
use crate::error::{Error, Result};
use crate::linalg::CMatrix;

pub(crate) type SparseVec = Vec<(usize, f64)>;

/// Entries `(row, col, value)` of a real symmetric matrix, both triangles listed.
pub(crate) type SymEntries = Vec<(usize, usize, f64)>;

#[derive(Clone, Debug)]
pub(crate) struct PsdBlock {
    /// Real dimension of the cone.
    pub n: usize,
    /// Global parameter indices touching the block.
    pub params: Vec<usize>,
    /// Slack contribution per parameter: `slack = Σ x_params[j] * mats[j]`.
    pub mats: Vec<SymEntries>,
    pub group: usize,
}

#[derive(Clone, Debug)]
pub(crate) struct LpRow {
    /// `slack = h + terms . x`.
    pub terms: SparseVec,
    pub h: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) enum Mode {
    Normal,
    PhaseOne,
}

#[derive(Clone, Copy, Debug)]
pub(crate) enum RowTarget {
    /// Index into the equality rows and the scale the row was divided by.
    Hard { row: usize, scale: f64 },
    /// Pair of LP rows `s - (a x - b) >= 0`, `s + (a x - b) >= 0`.
    Soft { plus: usize, minus: usize },
    /// Identically zero row with consistent right-hand side.
    Vacuous,
}

#[derive(Clone, Debug)]
pub(crate) struct StandardForm {
    pub n: usize,
    pub c: Vec<f64>,
    pub a: Vec<SparseVec>,
    pub b: Vec<f64>,
    pub psd: Vec<PsdBlock>,
    pub lp: Vec<LpRow>,
    /// Matrix-variable parameters of each group.
    pub groups: Vec<Vec<usize>>,
    /// Parameters outside every group (scalars).
    pub border: Vec<usize>,
    /// First parameter and count for each matrix variable.
    pub var_params: Vec<(usize, usize)>,
    /// Parameter (and negative part for free scalars) of each scalar.
    pub scalar_params: Vec<(usize, Option<usize>)>,
    pub targets: Vec<RowTarget>,
    /// `+1` for minimization, `-1` when a maximization was negated.
    pub sense_sign: f64,
    /// Phase-I slack parameter.
    pub slack_param: Option<usize>,
    /// An identically-zero equality demands a nonzero constant.
    pub trivially_infeasible: Option<usize>,
}

/// Sparse Hermitian basis `E_k` used for the real coordinates of a variable.
pub(crate) fn basis_elements(d: usize, field: Field) -> Vec<Vec<(usize, usize, Complex64)>> {
    let one = Complex64::new(1.0, 0.0);
    let i = Complex64::new(0.0, 1.0);
    let mut out = Vec::new();
    for r in 0..d {
        out.push(vec![(r, r, one)]);
    }
    for r in 0..d {
        for c in (r + 1)..d {
            out.push(vec![(r, c, one), (c, r, one)]);
            if field == Field::Complex {
                out.push(vec![(r, c, i), (c, r, -i)]);
            }
        }
    }
    out
}

pub(crate) fn param_count(d: usize, field: Field) -> usize {
    match field {
        Field::Complex => d * d,
        Field::Real => d * (d + 1) / 2,
    }
}

/// Coefficients `Re Tr[K E_k]` for every basis element, in basis order.
pub(crate) fn functional_coefficients(k: &CMatrix, field: Field) -> Vec<f64> {
    let d = k.nrows();
    let mut out = Vec::with_capacity(param_count(d, field));
    for r in 0..d {
        out.push(k[(r, r)].re);
    }
    for r in 0..d {
        for c in (r + 1)..d {
            out.push(k[(c, r)].re + k[(r, c)].re);
            if field == Field::Complex {
                out.push(k[(r, c)].im - k[(c, r)].im);
            }
        }
    }
    out
}

/// Matrix `Σ x_k E_k` from coordinates.
pub(crate) fn assemble_matrix(x: &[f64], d: usize, field: Field) -> CMatrix {
    let mut m = CMatrix::zeros(d, d);
    for (k, e) in basis_elements(d, field).iter().enumerate() {
        for &(r, c, v) in e {
            m[(r, c)] += v * x[k];
        }
    }
    m
}

fn swap_digit(i: usize, j: usize, stride: usize, d: usize) -> (usize, usize) {
    let di = (i / stride) % d;
    let dj = (j / stride) % d;
    (i - di * stride + dj * stride, j - dj * stride + di * stride)
}

/// Real symmetric slack matrices of a cone image, one per basis element.
fn cone_matrices(d: usize, field: Field, factors: &[usize], map: ConeMap) -> Vec<SymEntries> {
    let pt = match map {
        ConeMap::Identity => None,
        ConeMap::PartialTranspose(f) => Some((factors[f + 1..].iter().product::<usize>(), factors[f])),
    };
    basis_elements(d, field)
        .into_iter()
        .map(|e| {
            let mut out = Vec::with_capacity(4 * e.len());
            for (r, c, v) in e {
                let (r, c) = match pt {
                    Some((stride, df)) => swap_digit(r, c, stride, df),
                    None => (r, c),
                };
                match field {
                    Field::Real => out.push((r, c, v.re)),
                    Field::Complex => {
                        if v.re != 0.0 {
                            out.push((r, c, v.re));
                            out.push((r + d, c + d, v.re));
                        }
                        if v.im != 0.0 {
                            out.push((r, c + d, -v.im));
                            out.push((r + d, c, v.im));
                        }
                    }
                }
            }
            out
        })
        .collect()
}

struct UnionFind(Vec<usize>);

impl UnionFind {
    fn find(&mut self, i: usize) -> usize {
        let mut r = i;
        while self.0[r] != r {
            r = self.0[r];
        }
        let mut i = i;
        while self.0[i] != r {
            let next = self.0[i];
            self.0[i] = r;
            i = next;
        }
        r
    }

    fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            self.0[ra.max(rb)] = ra.min(rb);
        }
    }
}

fn merge_sparse(mut v: SparseVec) -> SparseVec {
    v.sort_unstable_by_key(|e| e.0);
    let mut out: SparseVec = Vec::with_capacity(v.len());
    for (i, x) in v {
        match out.last_mut() {
            Some(last) if last.0 == i => last.1 += x,
            _ => out.push((i, x)),
        }
    }
    out.retain(|e| e.1 != 0.0);
    out
}

pub(crate) fn compile(p: &ConicProblem, mode: Mode) -> Result<StandardForm> {
    if p.vars.is_empty() && p.scalars.is_empty() {
        return Err(Error::Model("problem has no variables".into()));
    }
    let mut n = 0usize;
    let mut var_params = Vec::with_capacity(p.vars.len());
    for v in &p.vars {
        let count = param_count(v.dim, v.field);
        var_params.push((n, count));
        n += count;
    }
    let mut lp = Vec::new();
    let mut border = Vec::new();
    let mut scalar_params = Vec::with_capacity(p.scalars.len());
    for s in &p.scalars {
        let plus = n;
        n += 1;
        border.push(plus);
        lp.push(LpRow { terms: vec![(plus, 1.0)], h: 0.0 });
        let minus = if s.kind == ScalarKind::Free {
            let m = n;
            n += 1;
            border.push(m);
            lp.push(LpRow { terms: vec![(m, 1.0)], h: 0.0 });
            Some(m)
        } else {
            None
        };
        scalar_params.push((plus, minus));
    }
    let slack_param = if mode == Mode::PhaseOne {
        let s = n;
        n += 1;
        border.push(s);
        lp.push(LpRow { terms: vec![(s, 1.0)], h: 0.0 });
        Some(s)
    } else {
        None
    };

    let expr_row = |e: &LinExpr| -> SparseVec {
        let mut row = Vec::new();
        for (v, k) in &e.mats {
            let var = &p.vars[v.0];
            let (start, _) = var_params[v.0];
            for (j, coef) in functional_coefficients(k, var.field).into_iter().enumerate() {
                if coef != 0.0 {
                    row.push((start + j, coef));
                }
            }
        }
        for (s, coef) in &e.scalars {
            let (plus, minus) = scalar_params[s.0];
            row.push((plus, *coef));
            if let Some(m) = minus {
                row.push((m, -*coef));
            }
        }
        merge_sparse(row)
    };

    let mut covered = vec![false; p.vars.len()];
    for cone in &p.cones {
        covered[cone.var.0] = true;
    }
    if let Some(v) = covered.iter().position(|c| !c) {
        return Err(Error::Model(format!("variable `{}` is not constrained to any cone", p.vars[v].label)));
    }

    let any_data = p.equalities.iter().any(|e| e.kind == EqualityKind::Data);
    let mut a = Vec::new();
    let mut b = Vec::new();
    let mut targets = Vec::with_capacity(p.equalities.len());
    let mut trivially_infeasible = None;
    for (i, eq) in p.equalities.iter().enumerate() {
        let row = expr_row(&eq.expr);
        let soft = mode == Mode::PhaseOne && (eq.kind == EqualityKind::Data || !any_data);
        if soft {
            // The slack term is attached once the groups are known.
            let plus = lp.len();
            lp.push(LpRow { terms: row.iter().map(|&(j, v)| (j, -v)).collect(), h: eq.rhs });
            lp.push(LpRow { terms: row.clone(), h: -eq.rhs });
            targets.push(RowTarget::Soft { plus, minus: plus + 1 });
            continue;
        }
        let norm = row.iter().map(|e| e.1 * e.1).sum::<f64>().sqrt();
        if norm == 0.0 {
            if eq.rhs.abs() > 1e-12 && trivially_infeasible.is_none() {
                trivially_infeasible = Some(i);
            }
            targets.push(RowTarget::Vacuous);
            continue;
        }
        targets.push(RowTarget::Hard { row: a.len(), scale: norm });
        a.push(row.into_iter().map(|(j, v)| (j, v / norm)).collect());
        b.push(eq.rhs / norm);
    }

    let mut c = vec![0.0; n];
    let mut sense_sign = 1.0;
    if let Some(s) = slack_param {
        c[s] = 1.0;
    } else if let Some((sense, expr)) = &p.objective {
        if *sense == Sense::Maximize {
            sense_sign = -1.0;
        }
        for (j, v) in expr_row(expr) {
            c[j] += sense_sign * v;
        }
    }

    // Groups: variables linked through LP rows share a KKT block.
    let param_var = {
        let mut pv = vec![usize::MAX; n];
        for (v, &(start, count)) in var_params.iter().enumerate() {
            for slot in &mut pv[start..start + count] {
                *slot = v;
            }
        }
        pv
    };
    let mut uf = UnionFind((0..p.vars.len()).collect());
    for row in &lp {
        let mut first = None;
        for &(j, _) in &row.terms {
            let v = param_var[j];
            if v == usize::MAX {
                continue;
            }
            match first {
                None => first = Some(v),
                Some(f) => uf.union(f, v),
            }
        }
    }
    let mut group_of_root = vec![usize::MAX; p.vars.len()];
    let mut groups: Vec<Vec<usize>> = Vec::new();
    let mut var_group = vec![0; p.vars.len()];
    for v in 0..p.vars.len() {
        let r = uf.find(v);
        if group_of_root[r] == usize::MAX {
            group_of_root[r] = groups.len();
            groups.push(Vec::new());
        }
        let g = group_of_root[r];
        var_group[v] = g;
        let (start, count) = var_params[v];
        groups[g].extend(start..start + count);
    }

    // Each group gets its own copy of the phase-I slack, tied to the shared one by a
    // hard row, so soft rows stay inside their group and never couple to the border.
    if let Some(s) = slack_param {
        let mut copy = vec![None; groups.len()];
        for t in &targets {
            let RowTarget::Soft { plus, minus } = *t else { continue };
            let g = lp[plus].terms.iter().find(|e| param_var[e.0] != usize::MAX).map(|e| var_group[param_var[e.0]]);
            let slack = match g {
                Some(g) => *copy[g].get_or_insert_with(|| {
                    let k = n;
                    n += 1;
                    groups[g].push(k);
                    a.push(vec![(s, -std::f64::consts::FRAC_1_SQRT_2), (k, std::f64::consts::FRAC_1_SQRT_2)]);
                    b.push(0.0);
                    k
                }),
                None => s,
            };
            for r in [plus, minus] {
                lp[r].terms.push((slack, 1.0));
                lp[r].terms = merge_sparse(std::mem::take(&mut lp[r].terms));
            }
        }
        c.resize(n, 0.0);
    }

    let psd = p
        .cones
        .iter()
        .map(|cone| {
            let var = &p.vars[cone.var.0];
            let (start, count) = var_params[cone.var.0];
            let n = match var.field {
                Field::Real => var.dim,
                Field::Complex => 2 * var.dim,
            };
            PsdBlock {
                n,
                params: (start..start + count).collect(),
                mats: cone_matrices(var.dim, var.field, &var.factors, cone.map),
                group: var_group[cone.var.0],
            }
        })
        .collect();

    Ok(StandardForm {
        n,
        c,
        a,
        b,
        psd,
        lp,
        groups,
        border,
        var_params,
        scalar_params,
        targets,
        sense_sign,
        slack_param,
        trivially_infeasible,
    })
}
