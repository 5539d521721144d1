//! Block-structured solution of the reduced Newton system
//!
//! ```text
//! [ H  A' ] [dx]   [f]
//! [ A  0  ] [dy] = [g],     H = G' (W'W)^{-1} G
//! ```
//!
//! Parameters of variables that share no cone or LP row form independent
//! diagonal blocks of `H`; scalars form a small border. The equality
//! multipliers are found from the dense Schur complement `A H^{-1} A'`.

use faer::linalg::solvers::{Llt, Solve};
use faer::{Mat, MatMut, Side};

use super::compile::{SparseVec, StandardForm};
use super::cones::Scaling;

/// Factor `L L'` of a symmetric positive definite matrix.
pub(crate) struct Chol {
    factor: Factor,
    n: usize,
}

enum Factor {
    Llt(Llt<f64>),
    /// Upper-triangular `R` with `M = R' R`.
    Upper(Mat<f64>),
}

impl Chol {
    /// Cholesky factorization, regularizing the diagonal if it fails.
    pub fn factor(m: &Mat<f64>) -> Option<Self> {
        if let Some(c) = Self::exact(m) {
            return Some(c);
        }
        let n = m.nrows();
        let scale = (0..n).fold(0.0f64, |a, i| a.max(m[(i, i)].abs())).max(f64::MIN_POSITIVE);
        let mut reg = m.clone();
        let mut delta = 1e-14 * scale;
        for _ in 0..8 {
            for i in 0..n {
                reg[(i, i)] = m[(i, i)] + delta;
            }
            if let Ok(llt) = reg.llt(Side::Lower) {
                return Some(Self { factor: Factor::Llt(llt), n });
            }
            delta *= 100.0;
        }
        None
    }

    fn exact(m: &Mat<f64>) -> Option<Self> {
        let n = m.nrows();
        if n == 0 {
            return Some(Self { factor: Factor::Upper(Mat::zeros(0, 0)), n });
        }
        m.llt(Side::Lower).ok().map(|llt| Self { factor: Factor::Llt(llt), n })
    }

    /// Squared ratio of the extreme diagonal entries of the factor.
    fn condition_estimate(&self) -> f64 {
        let diag: Vec<f64> = match &self.factor {
            Factor::Llt(llt) => (0..self.n).map(|i| llt.L()[(i, i)].abs()).collect(),
            Factor::Upper(r) => (0..self.n).map(|i| r[(i, i)].abs()).collect(),
        };
        let hi = diag.iter().fold(0.0f64, |a, &b| a.max(b));
        let lo = diag.iter().fold(f64::INFINITY, |a, &b| a.min(b));
        if self.n == 0 {
            1.0
        } else {
            (hi / lo).powi(2)
        }
    }

    /// Factor of `B' B` from a QR decomposition of `B`, which avoids squaring
    /// the condition number.
    fn from_square_root(b: &Mat<f64>) -> Option<Self> {
        let n = b.ncols();
        if b.nrows() < n {
            return None;
        }
        let r = b.qr().thin_R().to_owned();
        let scale = (0..n).fold(0.0f64, |a, i| a.max(r[(i, i)].abs()));
        if (0..n).any(|i| !(r[(i, i)].abs() > 1e-15 * scale)) {
            return None;
        }
        Some(Self { factor: Factor::Upper(r), n })
    }

    pub fn solve_vec(&self, v: &mut [f64]) {
        if self.n == 0 {
            return;
        }
        let mut mat = MatMut::from_column_major_slice_mut(v, self.n, 1);
        match &self.factor {
            Factor::Llt(llt) => llt.solve_in_place(mat),
            Factor::Upper(r) => {
                r.transpose().solve_lower_triangular_in_place(mat.as_mut());
                r.solve_upper_triangular_in_place(mat.as_mut());
            }
        }
    }

    pub fn solve_mat(&self, m: &mut Mat<f64>) {
        if self.n == 0 {
            return;
        }
        match &self.factor {
            Factor::Llt(llt) => llt.solve_in_place(m.as_mut()),
            Factor::Upper(r) => {
                r.transpose().solve_lower_triangular_in_place(m.as_mut());
                r.solve_upper_triangular_in_place(m.as_mut());
            }
        }
    }
}

/// Above this estimated condition number a group block is refactored from its
/// square root.
const GROUP_CONDITION_LIMIT: f64 = 1e10;

#[derive(Clone, Copy, Debug)]
enum Loc {
    Group(usize, usize),
    Border(usize),
}

/// Structure that does not change between iterations.
pub(crate) struct KktLayout {
    loc: Vec<Loc>,
    group_sizes: Vec<usize>,
    nb: usize,
    m: usize,
    /// Equality rows touching each group.
    group_rows: Vec<Vec<usize>>,
    /// Dense restriction of `A` to `group_rows[g]` x group parameters.
    a_group: Vec<Mat<f64>>,
    /// `A` restricted to border columns (m x nb).
    a_border: Mat<f64>,
    /// LP rows touching each group, with their group and border coefficients.
    lp_rows: Vec<Vec<usize>>,
    lp_group: Vec<Mat<f64>>,
    lp_border: Vec<Mat<f64>>,
    /// LP rows touching only border parameters.
    border_lp: Vec<(usize, Vec<(usize, f64)>)>,
}

impl KktLayout {
    pub fn new(sf: &StandardForm, rows: &[SparseVec]) -> Self {
        let mut loc = vec![Loc::Border(0); sf.n];
        for (g, params) in sf.groups.iter().enumerate() {
            for (k, &p) in params.iter().enumerate() {
                loc[p] = Loc::Group(g, k);
            }
        }
        for (k, &p) in sf.border.iter().enumerate() {
            loc[p] = Loc::Border(k);
        }
        let ng = sf.groups.len();
        let nb = sf.border.len();
        let m = rows.len();
        let groups_of = |terms: &[(usize, f64)]| {
            let mut touched: Vec<usize> = Vec::new();
            for &(j, _) in terms {
                if let Loc::Group(g, _) = loc[j] {
                    if !touched.contains(&g) {
                        touched.push(g);
                    }
                }
            }
            touched
        };

        let mut group_rows: Vec<Vec<usize>> = vec![Vec::new(); ng];
        for (i, row) in rows.iter().enumerate() {
            for g in groups_of(row) {
                group_rows[g].push(i);
            }
        }
        let mut a_group: Vec<Mat<f64>> = (0..ng).map(|g| Mat::zeros(group_rows[g].len(), sf.groups[g].len())).collect();
        let mut a_border = Mat::zeros(m, nb);
        let mut next = vec![0usize; ng];
        for (i, row) in rows.iter().enumerate() {
            for &(j, v) in row {
                match loc[j] {
                    Loc::Group(g, k) => {
                        // Rows are visited in increasing order, so the position is a cursor.
                        while group_rows[g][next[g]] != i {
                            next[g] += 1;
                        }
                        a_group[g][(next[g], k)] += v;
                    }
                    Loc::Border(k) => a_border[(i, k)] += v,
                }
            }
        }

        let mut lp_rows: Vec<Vec<usize>> = vec![Vec::new(); ng];
        let mut border_lp = Vec::new();
        for (i, row) in sf.lp.iter().enumerate() {
            let touched = groups_of(&row.terms);
            debug_assert!(touched.len() <= 1, "LP rows never span groups");
            match touched.first() {
                Some(&g) => lp_rows[g].push(i),
                None => border_lp.push((
                    i,
                    row.terms
                        .iter()
                        .map(|&(j, v)| match loc[j] {
                            Loc::Border(k) => (k, v),
                            Loc::Group(..) => unreachable!(),
                        })
                        .collect(),
                )),
            }
        }
        let mut lp_group = Vec::with_capacity(ng);
        let mut lp_border = Vec::with_capacity(ng);
        for g in 0..ng {
            let mut ag = Mat::zeros(lp_rows[g].len(), sf.groups[g].len());
            let mut eg = Mat::zeros(lp_rows[g].len(), nb);
            for (r, &i) in lp_rows[g].iter().enumerate() {
                for &(j, v) in &sf.lp[i].terms {
                    match loc[j] {
                        Loc::Group(_, k) => ag[(r, k)] += v,
                        Loc::Border(k) => eg[(r, k)] += v,
                    }
                }
            }
            lp_group.push(ag);
            lp_border.push(eg);
        }

        Self {
            loc,
            group_sizes: sf.groups.iter().map(|g| g.len()).collect(),
            nb,
            m,
            group_rows,
            a_group,
            a_border,
            lp_rows,
            lp_group,
            lp_border,
            border_lp,
        }
    }
}

/// Factorization for one scaling point.
pub(crate) struct KktFactor<'a> {
    layout: &'a KktLayout,
    /// Inverse of each group block `D_g = D0_g + A_g' Ω A_g`.
    groups: Vec<Chol>,
    /// `D_g^{-1} C_g` with `C_g = A_g' Ω E_g` the group-border coupling.
    f: Vec<Mat<f64>>,
    sb_chol: Chol,
    s_chol: Chol,
}

fn add_psd_block_h(d: &mut Mat<f64>, local: &[usize], mats: &[Vec<(usize, usize, f64)>], q: &nalgebra::DMatrix<f64>) {
    let p = mats.len();
    for l in 0..p {
        for j in 0..=l {
            let mut acc = 0.0;
            for &(r, c, v) in &mats[l] {
                for &(r2, c2, v2) in &mats[j] {
                    acc += v * v2 * q[(r2, r)] * q[(c, c2)];
                }
            }
            let (a, b) = (local[j], local[l]);
            d[(a, b)] += acc;
            if a != b {
                d[(b, a)] += acc;
            }
        }
    }
}

/// `B` with `B' B = D_g`: one row per entry of each scaled cone image
/// `W^{-T} E_j` and one per LP row.
fn group_square_root(layout: &KktLayout, sf: &StandardForm, scaling: &Scaling, g: usize) -> Mat<f64> {
    let cols = layout.group_sizes[g];
    let blocks: Vec<usize> = (0..sf.psd.len()).filter(|&k| sf.psd[k].group == g).collect();
    let lp = &layout.lp_group[g];
    let rows = blocks.iter().map(|&k| scaling.psd[k].rinv.nrows().pow(2)).sum::<usize>() + lp.nrows();
    let mut b = Mat::<f64>::zeros(rows, cols);
    let mut at = 0;
    for &k in &blocks {
        let block = &sf.psd[k];
        let rinv = &scaling.psd[k].rinv;
        let n = rinv.nrows();
        for (&p, mat) in block.params.iter().zip(&block.mats) {
            let Loc::Group(_, j) = layout.loc[p] else { unreachable!("cone parameters belong to a group") };
            for &(r, c, v) in mat {
                for col in 0..n {
                    let vc = v * rinv[(col, c)];
                    for row in 0..n {
                        b[(at + col * n + row, j)] += vc * rinv[(row, r)];
                    }
                }
            }
        }
        at += n * n;
    }
    for (rr, &i) in layout.lp_rows[g].iter().enumerate() {
        let s = 1.0 / scaling.lp_w[i];
        for j in 0..cols {
            b[(at + rr, j)] = s * lp[(rr, j)];
        }
    }
    b
}

impl<'a> KktFactor<'a> {
    pub fn new(layout: &'a KktLayout, sf: &StandardForm, scaling: &Scaling) -> Option<Self> {
        let ng = layout.group_sizes.len();
        let nb = layout.nb;
        let mut d0: Vec<Mat<f64>> = layout.group_sizes.iter().map(|&n| Mat::zeros(n, n)).collect();
        for (block, sc) in sf.psd.iter().zip(&scaling.psd) {
            let local: Vec<usize> = block
                .params
                .iter()
                .map(|&p| match layout.loc[p] {
                    Loc::Group(_, k) => k,
                    Loc::Border(_) => unreachable!("cone parameters belong to a group"),
                })
                .collect();
            add_psd_block_h(&mut d0[block.group], &local, &block.mats, &sc.q);
        }
        let omega = |i: usize| {
            let w = scaling.lp_w[i];
            1.0 / (w * w)
        };

        let mut sb = Mat::<f64>::zeros(nb, nb);
        for (i, terms) in &layout.border_lp {
            let om = omega(*i);
            for &(k, v) in terms {
                for &(k2, v2) in terms {
                    sb[(k, k2)] += om * v * v2;
                }
            }
        }

        let mut groups = Vec::with_capacity(ng);
        let mut f = Vec::with_capacity(ng);
        for g in 0..ng {
            let lpa = &layout.lp_group[g];
            let r = lpa.nrows();
            let mut dg = d0[g].clone();
            let mut c = Mat::<f64>::zeros(layout.group_sizes[g], nb);
            if r > 0 {
                let om: Vec<f64> = layout.lp_rows[g].iter().map(|&i| omega(i)).collect();
                let mut oa = lpa.clone();
                let mut oe = layout.lp_border[g].clone();
                for (rr, w) in om.iter().enumerate() {
                    for j in 0..oa.ncols() {
                        oa[(rr, j)] *= w;
                    }
                    for k in 0..nb {
                        oe[(rr, k)] *= w;
                    }
                }
                dg += lpa.transpose() * &oa;
                if nb > 0 {
                    c = lpa.transpose() * &oe;
                    sb += layout.lp_border[g].transpose() * &oe;
                }
            }
            let dc = match Chol::exact(&dg) {
                Some(c) if c.condition_estimate() <= GROUP_CONDITION_LIMIT => c,
                _ => Chol::from_square_root(&group_square_root(layout, sf, scaling, g)).or_else(|| Chol::factor(&dg))?,
            };
            let mut fg = c.clone();
            dc.solve_mat(&mut fg);
            if nb > 0 && r > 0 {
                sb -= c.transpose() * &fg;
            }
            groups.push(dc);
            f.push(fg);
        }
        let sb_chol = Chol::factor(&sb)?;

        let m = layout.m;
        let mut s = Mat::<f64>::zeros(m, m);
        let mut e = Mat::<f64>::zeros(m, nb);
        for g in 0..ng {
            let rows = &layout.group_rows[g];
            if rows.is_empty() {
                continue;
            }
            let ag = &layout.a_group[g];
            let mut t = ag.transpose().to_owned();
            groups[g].solve_mat(&mut t);
            let block = ag * &t;
            for (p, &i) in rows.iter().enumerate() {
                for (q, &k) in rows.iter().enumerate() {
                    s[(i, k)] += block[(p, q)];
                }
            }
            if nb > 0 {
                let ef = ag * &f[g];
                for (p, &i) in rows.iter().enumerate() {
                    for k in 0..nb {
                        e[(i, k)] += ef[(p, k)];
                    }
                }
            }
        }
        if nb > 0 {
            e -= &layout.a_border;
            let mut sbe = e.transpose().to_owned();
            sb_chol.solve_mat(&mut sbe);
            s += &e * &sbe;
        }
        let s_chol = Chol::factor(&s)?;
        Some(Self { layout, groups, f, sb_chol, s_chol })
    }

    /// `H^{-1} v` by block elimination.
    fn h_solve(&self, sf: &StandardForm, v: &[f64]) -> Vec<f64> {
        let l = self.layout;
        let nb = l.nb;
        let mut w: Vec<f64> = sf.border.iter().map(|&p| v[p]).collect();
        let mut u: Vec<Vec<f64>> = Vec::with_capacity(sf.groups.len());
        for (g, ps) in sf.groups.iter().enumerate() {
            let mut ug: Vec<f64> = ps.iter().map(|&p| v[p]).collect();
            if nb > 0 {
                // C_g' D_g^{-1} v_g = F_g' v_g
                let fg = &self.f[g];
                for (k, wk) in w.iter_mut().enumerate() {
                    *wk -= (0..ug.len()).map(|i| fg[(i, k)] * ug[i]).sum::<f64>();
                }
            }
            self.groups[g].solve_vec(&mut ug);
            u.push(ug);
        }
        if nb > 0 {
            self.sb_chol.solve_vec(&mut w);
            for (g, ug) in u.iter_mut().enumerate() {
                let fg = &self.f[g];
                for (i, ui) in ug.iter_mut().enumerate() {
                    *ui -= (0..nb).map(|k| fg[(i, k)] * w[k]).sum::<f64>();
                }
            }
        }
        let mut out = vec![0.0; sf.n];
        for (g, ps) in sf.groups.iter().enumerate() {
            for (k, &p) in ps.iter().enumerate() {
                out[p] = u[g][k];
            }
        }
        for (k, &p) in sf.border.iter().enumerate() {
            out[p] = w[k];
        }
        out
    }

    /// Solve `H dx + A' dy = f`, `A dx = g`.
    pub fn solve(&self, sf: &StandardForm, rows: &[SparseVec], f: &[f64], g: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let hf = self.h_solve(sf, f);
        let mut dy: Vec<f64> = rows.iter().zip(g).map(|(row, gi)| sparse_dot(row, &hf) - gi).collect();
        self.s_chol.solve_vec(&mut dy);
        let mut r = f.to_vec();
        for (row, yi) in rows.iter().zip(&dy) {
            for &(j, v) in row {
                r[j] -= v * yi;
            }
        }
        let dx = self.h_solve(sf, &r);
        (dx, dy)
    }
}

pub(crate) fn sparse_dot(row: &[(usize, f64)], x: &[f64]) -> f64 {
    row.iter().map(|&(j, v)| v * x[j]).sum()
}
