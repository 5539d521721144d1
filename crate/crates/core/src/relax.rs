//! Effective-POVM families as conic-program variables: relaxed separability
//! cones, no-signalling structure, normalization and behaviour rows.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::conic::{ConeMap, ConicProblem, Field, LinExpr, VarId};
use crate::error::{Error, Result};
use crate::linalg::{self, CMatrix};
use crate::scenario::{insert_factor_permutation, tuple_digits, tuple_index, Behaviour};
use crate::tolerances::MAX_RELAXATION_DIM;

/// Outer approximation used in place of the separable cone.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum RelaxationLevel {
    /// Positive partial transpose.
    #[default]
    Ppt,
    /// `k`-symmetric extension on the second party, optionally PT-positive.
    SymExt { k: usize, with_ppt: bool },
}

impl RelaxationLevel {
    pub fn sym_ext(k: usize, with_ppt: bool) -> Result<Self> {
        if !(2..=3).contains(&k) {
            return Err(Error::Unsupported(format!("symmetric extension of order {k}; supported orders are 2 and 3")));
        }
        Ok(RelaxationLevel::SymExt { k, with_ppt })
    }

    pub fn label(&self) -> String {
        match *self {
            RelaxationLevel::Ppt => "ppt".into(),
            RelaxationLevel::SymExt { k, with_ppt: false } => format!("symext{k}"),
            RelaxationLevel::SymExt { k, with_ppt: true } => format!("symext{k}+ppt"),
        }
    }

    /// Dimension of the largest variable the relaxation needs for the given inputs.
    pub fn extended_dim(&self, input_dims: &[usize]) -> usize {
        let d: usize = input_dims.iter().product();
        match *self {
            RelaxationLevel::Ppt => d,
            RelaxationLevel::SymExt { k, .. } => d * input_dims.last().copied().unwrap_or(1).pow(k as u32 - 1),
        }
    }

    pub(crate) fn check(&self, input_dims: &[usize]) -> Result<()> {
        if let RelaxationLevel::SymExt { k, .. } = *self {
            if k < 2 {
                return Err(Error::Unsupported(format!("symmetric extension of order {k}")));
            }
        }
        let dim = self.extended_dim(input_dims);
        if dim > MAX_RELAXATION_DIM {
            return Err(Error::DimensionGuard { dim, limit: MAX_RELAXATION_DIM });
        }
        Ok(())
    }
}

/// Hermitian operators `M_o` on the joint input space, one per outcome tuple (row-major).
#[derive(Clone, Debug)]
pub(crate) struct Family {
    pub vars: Vec<VarId>,
    pub input_dims: Vec<usize>,
    pub outcome_counts: Vec<usize>,
}

impl Family {
    /// Declares the operators; `psd` adds `M_o ⪰ 0`, `pt` adds `M_o^{T_f} ⪰ 0` per factor.
    pub fn new(p: &mut ConicProblem, label: &str, input_dims: &[usize], outcome_counts: &[usize], psd: bool, pt: &[usize]) -> Result<Self> {
        let count: usize = outcome_counts.iter().product();
        let mut vars = Vec::with_capacity(count);
        for o in 0..count {
            let v = p.add_hermitian_var(&format!("{label}[{o}]"), input_dims.to_vec(), Field::Complex)?;
            if psd {
                p.require_psd(v, ConeMap::Identity)?;
            }
            for &f in pt {
                p.require_psd(v, ConeMap::PartialTranspose(f))?;
            }
            vars.push(v);
        }
        Ok(Self { vars, input_dims: input_dims.to_vec(), outcome_counts: outcome_counts.to_vec() })
    }

    pub fn dim(&self) -> usize {
        self.input_dims.iter().product()
    }

    pub fn var(&self, outcomes: &[usize]) -> VarId {
        self.vars[tuple_index(outcomes, &self.outcome_counts)]
    }

    /// Requires, for every party, `Σ_{a_p} M = I_p ⊗ X` (factor order preserved).
    pub fn no_signalling(&self, p: &mut ConicProblem) -> Result<()> {
        no_signalling_sum(p, &[self])
    }

    /// Requires `Σ_o M_o = (constant + scale) I`.
    pub fn normalize(&self, p: &mut ConicProblem, constant: f64, scale: LinExpr) -> Result<()> {
        sum_is_identity(p, &self.vars, self.dim(), Some((constant, scale)))
    }
}

/// An operator that enters linear constraints through its traces against kernels.
pub(crate) trait Operand {
    fn push_trace(&self, e: &mut LinExpr, k: &CMatrix);
}

impl Operand for VarId {
    fn push_trace(&self, e: &mut LinExpr, k: &CMatrix) {
        e.push_trace(*self, k.clone());
    }
}

/// `V X V†` for a PSD variable `X` and an isometry `V`; zero when the support is empty.
#[derive(Clone, Debug)]
pub(crate) struct Compressed {
    pub var: Option<VarId>,
    pub v: CMatrix,
}

impl Operand for Compressed {
    fn push_trace(&self, e: &mut LinExpr, k: &CMatrix) {
        let Some(var) = self.var else { return };
        let mut c = self.v.adjoint() * k * &self.v;
        // Entries at rounding level of `k` are zero; kept, they would survive row
        // normalization as spurious constraints.
        let floor = 1e-13 * k.norm();
        c.iter_mut().for_each(|z| {
            if z.re.abs() <= floor {
                z.re = 0.0;
            }
            if z.im.abs() <= floor {
                z.im = 0.0;
            }
        });
        if c.iter().any(|z| z.re != 0.0 || z.im != 0.0) {
            e.push_trace(var, c);
        }
    }
}

/// No-signalling structure of the operator-wise sum of same-shaped families.
pub(crate) fn no_signalling_sum(p: &mut ConicProblem, fams: &[&Family]) -> Result<()> {
    let first = fams[0];
    let vars: Vec<&[VarId]> = fams.iter().map(|f| f.vars.as_slice()).collect();
    for party in 0..first.input_dims.len() {
        no_signalling_for(p, &vars, &first.outcome_counts, &first.input_dims, party)?;
    }
    Ok(())
}

/// `Σ_{a_party} M_{.., a_party, ..}` must act as the identity on that party's input,
/// where `M` is the operator-wise sum of `families`.
///
/// `counts` may describe more outcome digits than input factors (an extra trailing
/// digit for the eavesdropper); only the first `dims.len()` digits are parties.
pub(crate) fn no_signalling_for<T: Operand>(
    p: &mut ConicProblem,
    families: &[&[T]],
    counts: &[usize],
    dims: &[usize],
    party: usize,
) -> Result<()> {
    let rest: Vec<usize> = (0..counts.len()).filter(|&q| q != party).collect();
    let rest_counts: Vec<usize> = rest.iter().map(|&q| counts[q]).collect();
    let rest_dims: Vec<usize> = (0..dims.len()).filter(|&q| q != party).map(|q| dims[q]).collect();
    let d_rest: usize = rest_dims.iter().product();
    let dim: usize = dims.iter().product();
    let traceless = &linalg::hermitian_basis(dims[party])[1..];
    let rest_basis = linalg::hermitian_basis(d_rest);
    let mut order_src = vec![dims[party]];
    order_src.extend(&rest_dims);
    let perm = insert_factor_permutation(dims.len(), party);
    let mut kernels = Vec::with_capacity(traceless.len() * rest_basis.len());
    for g in traceless {
        for h in &rest_basis {
            kernels.push(linalg::permute_factors(&linalg::kron(g, h), &order_src, &perm)?);
        }
    }
    let combos: usize = rest_counts.iter().product();
    for ri in 0..combos {
        let rd = tuple_digits(ri, &rest_counts);
        let mut members = Vec::with_capacity(counts[party]);
        for a in 0..counts[party] {
            let mut digits = vec![0; counts.len()];
            digits[party] = a;
            for (k, &q) in rest.iter().enumerate() {
                digits[q] = rd[k];
            }
            let o = tuple_index(&digits, counts);
            members.extend(families.iter().map(|f| &f[o]));
        }
        for k in &kernels {
            let mut e = LinExpr::new();
            for v in &members {
                v.push_trace(&mut e, k);
            }
            p.add_structural_equality(e, 0.0)?;
        }
    }
    debug_assert_eq!(dim, dims[party] * d_rest);
    Ok(())
}

/// `Σ vars` is proportional to the identity; with `trace = Some((c, s))` the factor is `c + s`.
pub(crate) fn sum_is_identity<T: Operand>(p: &mut ConicProblem, vars: &[T], dim: usize, trace: Option<(f64, LinExpr)>) -> Result<()> {
    for g in &linalg::hermitian_basis(dim)[1..] {
        let mut e = LinExpr::new();
        for v in vars {
            v.push_trace(&mut e, g);
        }
        p.add_structural_equality(e, 0.0)?;
    }
    if let Some((constant, scale)) = trace {
        let mut e = LinExpr::new();
        let id = linalg::identity(dim);
        for v in vars {
            v.push_trace(&mut e, &id);
        }
        e.extend(scale.scaled(-(dim as f64)));
        p.add_structural_equality(e, constant * dim as f64)?;
    }
    Ok(())
}

/// One data row per behaviour cell, `Σ_terms w Tr[X (ψ_x ⊗ ..)] = p(o|x)`, in
/// behaviour order; returns the index of the first row.
pub(crate) fn behaviour_rows<T, F>(p: &mut ConicProblem, b: &Behaviour, terms: F) -> Result<usize>
where
    T: Operand,
    F: Fn(&[usize]) -> Vec<(T, f64)>,
{
    let start = p.equalities().len();
    let radices = b.outcome_counts().to_vec();
    let no = b.outcome_tuples();
    let probs = b.probs();
    for x in 0..b.input_tuples() {
        let k = b.input_product(x);
        for o in 0..no {
            let digits = tuple_digits(o, &radices);
            let mut e = LinExpr::new();
            for (v, w) in terms(&digits) {
                v.push_trace(&mut e, &(&k * Complex64::new(w, 0.0)));
            }
            p.add_equality(e, probs[x * no + o])?;
        }
    }
    Ok(start)
}

/// Attaches a `k`-symmetric extension to every operator of a bipartite family:
/// `N ⪰ 0` on `A ⊗ B^{⊗k}`, invariant under permutations of the `B` copies, with
/// `Tr_{B_2..B_k} N = M` (and `N^{T_A} ⪰ 0` when `with_ppt`).
pub(crate) fn symmetric_extension(p: &mut ConicProblem, fam: &Family, label: &str, k: usize, with_ppt: bool) -> Result<()> {
    let [da, db] = fam.input_dims[..] else {
        return Err(Error::Unsupported("symmetric extensions are implemented for two parties".into()));
    };
    let mut factors = vec![da];
    factors.extend(std::iter::repeat_n(db, k));
    let n: usize = factors.iter().product();
    let d = da * db;
    let pad = db.pow(k as u32 - 1);
    let ties = symmetric_ties(&factors);
    let basis = linalg::hermitian_basis(d);
    let lifted: Vec<CMatrix> = basis.iter().map(|h| linalg::kron(h, &linalg::identity(pad))).collect();
    for (o, &m) in fam.vars.iter().enumerate() {
        let ext = p.add_psd_var_with_factors(&format!("{label}[{o}]"), factors.clone(), Field::Complex)?;
        if with_ppt {
            p.require_psd(ext, ConeMap::PartialTranspose(0))?;
        }
        for (h, hl) in basis.iter().zip(&lifted) {
            let e = LinExpr::new().trace_with(ext, hl.clone()).trace_with(m, -h.clone());
            p.add_structural_equality(e, 0.0)?;
        }
        for tie in &ties {
            match *tie {
                Tie::Equal { entry: (r, c), root: (r0, c0), conj } => {
                    let re = LinExpr::new().entry(ext, n, r, c, 1.0).entry(ext, n, r0, c0, -1.0);
                    p.add_structural_equality(re, 0.0)?;
                    if r != c {
                        let sign = if conj { 1.0 } else { -1.0 };
                        let im = LinExpr::new().entry_im(ext, n, r, c, 1.0).entry_im(ext, n, r0, c0, sign);
                        p.add_structural_equality(im, 0.0)?;
                    }
                }
                Tie::Real((r, c)) => {
                    p.add_structural_equality(LinExpr::new().entry_im(ext, n, r, c, 1.0), 0.0)?;
                }
            }
        }
    }
    Ok(())
}

/// Linear conditions making an operator on `factors` invariant under permutations
/// of factors `1..`, over its upper-triangular entries.
#[derive(Clone, Copy, Debug, PartialEq)]
enum Tie {
    /// `X[entry] = X[root]`, or its conjugate when `conj`.
    Equal { entry: (usize, usize), root: (usize, usize), conj: bool },
    /// `Im X[entry] = 0`.
    Real((usize, usize)),
}

fn symmetric_ties(factors: &[usize]) -> Vec<Tie> {
    let n: usize = factors.iter().product();
    // Union-find over upper-triangular entries; `par[i]` says whether X[i] is the
    // conjugate of X[parent[i]].
    let mut parent: Vec<usize> = (0..n * n).collect();
    let mut par = vec![false; n * n];
    let mut real = vec![false; n * n];
    fn find(parent: &mut [usize], par: &mut [bool], i: usize) -> (usize, bool) {
        if parent[i] == i {
            return (i, false);
        }
        let (root, p) = find(parent, par, parent[i]);
        parent[i] = root;
        par[i] ^= p;
        (root, par[i])
    }
    let swap = |i: usize, j: usize| -> usize {
        let mut d = tuple_digits(i, factors);
        d.swap(j, j + 1);
        tuple_index(&d, factors)
    };
    for j in 1..factors.len().saturating_sub(1) {
        for r in 0..n {
            for c in r..n {
                let (sr, sc) = (swap(r, j), swap(c, j));
                let (u, conj) = if sr <= sc { (sr * n + sc, false) } else { (sc * n + sr, true) };
                let (ra, pa) = find(&mut parent, &mut par, r * n + c);
                let (rb, pb) = find(&mut parent, &mut par, u);
                if ra == rb {
                    if pa ^ pb ^ conj {
                        real[ra] = true;
                    }
                } else {
                    let (child, root) = (ra.max(rb), ra.min(rb));
                    parent[child] = root;
                    par[child] = pa ^ pb ^ conj;
                    real[root] |= real[child];
                }
            }
        }
    }
    let mut out = Vec::new();
    for r in 0..n {
        for c in r..n {
            let (root, conj) = find(&mut parent, &mut par, r * n + c);
            let root_rc = (root / n, root % n);
            if root != r * n + c {
                out.push(Tie::Equal { entry: (r, c), root: root_rc, conj });
            } else if real[root] && r != c {
                out.push(Tie::Real((r, c)));
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ties_cut_out_the_commutant() {
        // Real constraints per tie: diagonal ties 1, off-diagonal ties 2, realness 1.
        let count = |f: &[usize]| -> usize {
            symmetric_ties(f)
                .iter()
                .map(|t| match *t {
                    Tie::Equal { entry: (r, c), .. } if r == c => 1,
                    Tie::Equal { .. } => 2,
                    Tie::Real(_) => 1,
                })
                .sum()
        };
        // Swap-invariant Hermitian operators on 2 ⊗ 2: 16 - 10 orbit pairs.
        let ties = symmetric_ties(&[1, 2, 2]);
        assert!(ties.contains(&Tie::Equal { entry: (2, 2), root: (1, 1), conj: false }));
        assert!(ties.contains(&Tie::Real((1, 2))));
        assert_eq!(count(&[1, 2, 2]), 6);
        // S_3 on three qubit copies: 20 orbit pairs on the copies, 4 on the first factor.
        assert_eq!(count(&[2, 2, 2, 2]), 256 - 80);
    }

    #[test]
    fn guard_rejects_large_extensions() {
        let r = RelaxationLevel::sym_ext(3, true).unwrap();
        assert_eq!(r.extended_dim(&[2, 2]), 16);
        assert!(r.check(&[2, 2]).is_ok());
        assert!(matches!(r.check(&[4, 4]), Err(Error::DimensionGuard { dim: 256, .. })));
        assert!(RelaxationLevel::sym_ext(4, false).is_err());
    }
}
