//! Homogeneous self-dual interior-point method with Nesterov-Todd scaling and a
//! Mehrotra predictor-corrector.

use super::compile::{SparseVec, StandardForm};
use super::cones::{ConeVec, Scaling};
use super::kkt::{sparse_dot, KktFactor, KktLayout};

#[derive(Clone, Debug)]
pub(crate) struct Settings {
    pub max_iter: usize,
    pub tol: f64,
    pub infeas_tol: f64,
    /// Stop as soon as the objective drops below this with a small primal
    /// residual (phase I only needs a primal point once it is below threshold).
    pub primal_target: Option<f64>,
}

impl Default for Settings {
    fn default() -> Self {
        Self { max_iter: 120, tol: 1e-9, infeas_tol: 1e-8, primal_target: None }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub(crate) enum RawStatus {
    Optimal,
    PrimalInfeasible,
    DualInfeasible,
    Stopped(String),
}

#[derive(Clone, Debug)]
pub(crate) struct RawSolution {
    pub status: RawStatus,
    /// Primal point (or unboundedness ray).
    pub x: Vec<f64>,
    /// One multiplier per row of `sf.a` (or Farkas ray).
    pub y: Vec<f64>,
    pub z: ConeVec,
    pub pcost: f64,
    pub dcost: f64,
    pub dres: f64,
    pub iterations: usize,
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn axpy(y: &mut [f64], a: f64, x: &[f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += a * xi;
    }
}

/// Linear maps of the standard form restricted to a subset of equality rows.
pub(crate) struct Ops<'a> {
    pub sf: &'a StandardForm,
    pub rows: Vec<SparseVec>,
    pub b: Vec<f64>,
    pub h: ConeVec,
}

impl<'a> Ops<'a> {
    pub fn new(sf: &'a StandardForm, keep: &[usize]) -> Self {
        let mut h = ConeVec::zeros(sf);
        h.lp = sf.lp.iter().map(|r| r.h).collect();
        Self { sf, rows: keep.iter().map(|&i| sf.a[i].clone()).collect(), b: keep.iter().map(|&i| sf.b[i]).collect(), h }
    }

    pub fn a_mul(&self, x: &[f64]) -> Vec<f64> {
        self.rows.iter().map(|r| sparse_dot(r, x)).collect()
    }

    pub fn at_mul(&self, y: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.sf.n];
        for (r, yi) in self.rows.iter().zip(y) {
            for &(j, v) in r {
                out[j] += v * yi;
            }
        }
        out
    }

    /// `G x`, where the cone slack is `h - G x`.
    pub fn g_mul(&self, x: &[f64]) -> ConeVec {
        let mut out = ConeVec::zeros(self.sf);
        for (blk, m) in self.sf.psd.iter().zip(out.psd.iter_mut()) {
            for (j, &p) in blk.params.iter().enumerate() {
                let xp = x[p];
                if xp == 0.0 {
                    continue;
                }
                for &(r, c, v) in &blk.mats[j] {
                    m[(r, c)] -= v * xp;
                }
            }
        }
        for (row, o) in self.sf.lp.iter().zip(out.lp.iter_mut()) {
            *o = -sparse_dot(&row.terms, x);
        }
        out
    }

    pub fn gt_mul(&self, z: &ConeVec) -> Vec<f64> {
        let mut out = vec![0.0; self.sf.n];
        for (blk, m) in self.sf.psd.iter().zip(&z.psd) {
            for (j, &p) in blk.params.iter().enumerate() {
                let mut acc = 0.0;
                for &(r, c, v) in &blk.mats[j] {
                    acc += v * m[(r, c)];
                }
                out[p] -= acc;
            }
        }
        for (row, zi) in self.sf.lp.iter().zip(&z.lp) {
            for &(j, v) in &row.terms {
                out[j] -= v * zi;
            }
        }
        out
    }

    fn h_apply(&self, scaling: &Scaling, v: &[f64]) -> Vec<f64> {
        self.gt_mul(&scaling.what(&self.g_mul(v)))
    }
}

/// Minimum-norm correction of `x` onto `A_K x = b_K` for the kept rows.
pub(crate) fn project_onto_rows(sf: &StandardForm, keep: &[usize], x: &[f64]) -> Option<Vec<f64>> {
    use faer::linalg::solvers::Solve;
    let m = keep.len();
    if m == 0 {
        return None;
    }
    let mut cols: Vec<Vec<(usize, f64)>> = vec![Vec::new(); sf.n];
    for (k, &i) in keep.iter().enumerate() {
        for &(j, v) in &sf.a[i] {
            cols[j].push((k, v));
        }
    }
    let mut gram = faer::Mat::<f64>::zeros(m, m);
    for col in &cols {
        for &(i, vi) in col {
            for &(k, vk) in col {
                gram[(i, k)] += vi * vk;
            }
        }
    }
    let llt = gram.llt(faer::Side::Lower).ok()?;
    let mut r = faer::Mat::<f64>::zeros(m, 1);
    for (k, &i) in keep.iter().enumerate() {
        r[(k, 0)] = sf.b[i] - sparse_dot(&sf.a[i], x);
    }
    let w = llt.solve(&r);
    let mut out = x.to_vec();
    for (k, &i) in keep.iter().enumerate() {
        for &(j, v) in &sf.a[i] {
            out[j] += w[(k, 0)] * v;
        }
    }
    Some(out)
}

/// Result of eliminating linearly dependent equality rows.
pub(crate) enum RowReduction {
    Keep(Vec<usize>),
    /// `y` with `A'y ~ 0` and `b'y < 0`.
    Inconsistent(Vec<f64>),
}

/// Greedy pivoted Cholesky of the Gram matrix `A A'` (rows have unit norm).
pub(crate) fn reduce_rows(sf: &StandardForm) -> RowReduction {
    let m = sf.a.len();
    if m == 0 {
        return RowReduction::Keep(Vec::new());
    }
    let mut cols: Vec<Vec<(usize, f64)>> = vec![Vec::new(); sf.n];
    for (i, row) in sf.a.iter().enumerate() {
        for &(j, v) in row {
            cols[j].push((i, v));
        }
    }
    let mut gram = vec![0.0; m * m];
    for col in &cols {
        for &(i, vi) in col {
            for &(k, vk) in col {
                gram[i * m + k] += vi * vk;
            }
        }
    }
    let mut diag: Vec<f64> = (0..m).map(|i| gram[i * m + i]).collect();
    let scale = diag.iter().fold(0.0f64, |a, &b| a.max(b));
    let mut picked: Vec<usize> = Vec::new();
    let mut is_picked = vec![false; m];
    let mut lcols: Vec<Vec<f64>> = Vec::new();
    loop {
        let mut best = None;
        for i in 0..m {
            if !is_picked[i] && best.is_none_or(|(_, d)| diag[i] > d) {
                best = Some((i, diag[i]));
            }
        }
        let Some((p, dp)) = best else { break };
        if dp <= 1e-11 * scale {
            break;
        }
        let mut col: Vec<f64> = gram[p * m..(p + 1) * m].to_vec();
        for l in &lcols {
            let f = l[p];
            if f != 0.0 {
                axpy(&mut col, -f, l);
            }
        }
        let piv = dp.sqrt();
        for (i, v) in col.iter_mut().enumerate() {
            *v = if is_picked[i] { 0.0 } else { *v / piv };
        }
        col[p] = piv;
        for i in 0..m {
            if !is_picked[i] {
                diag[i] -= col[i] * col[i];
            }
        }
        is_picked[p] = true;
        diag[p] = 0.0;
        picked.push(p);
        lcols.push(col);
    }
    if picked.len() == m {
        return RowReduction::Keep((0..m).collect());
    }
    // Lower-triangular factor restricted to the pivot rows, in pivot order.
    let r = picked.len();
    let mut v = vec![0.0; r];
    for k in 0..r {
        let mut acc = sf.b[picked[k]];
        for j in 0..k {
            acc -= lcols[j][picked[k]] * v[j];
        }
        v[k] = acc / lcols[k][picked[k]];
    }
    let bnorm = sf.b.iter().fold(0.0f64, |a, &x| a.max(x.abs()));
    for i in 0..m {
        if is_picked[i] {
            continue;
        }
        let li: Vec<f64> = lcols.iter().map(|l| l[i]).collect();
        let predicted = dot(&li, &v);
        let mismatch = sf.b[i] - predicted;
        if mismatch.abs() > 1e-9 * (1.0 + bnorm) {
            // y_i = 1, y_K = -L_K^{-T} l_i so that A'y = a_i - c'A_K ~ 0.
            let mut c = vec![0.0; r];
            for k in (0..r).rev() {
                let mut acc = li[k];
                for j in (k + 1)..r {
                    acc -= lcols[k][picked[j]] * c[j];
                }
                c[k] = acc / lcols[k][picked[k]];
            }
            let mut y = vec![0.0; m];
            y[i] = 1.0;
            for (k, &p) in picked.iter().enumerate() {
                y[p] = -c[k];
            }
            if mismatch > 0.0 {
                y.iter_mut().for_each(|v| *v = -*v);
            }
            return RowReduction::Inconsistent(y);
        }
    }
    picked.sort_unstable();
    RowReduction::Keep(picked)
}

#[derive(Clone)]
struct Point {
    x: Vec<f64>,
    y: Vec<f64>,
    s: ConeVec,
    z: ConeVec,
    tau: f64,
    kappa: f64,
}

struct Direction {
    dx: Vec<f64>,
    dy: Vec<f64>,
    ds: ConeVec,
    dz: ConeVec,
    dtau: f64,
    dkappa: f64,
}

struct Residuals {
    rx: Vec<f64>,
    ry: Vec<f64>,
    rz: ConeVec,
    rtau: f64,
}

fn solve_refined(ops: &Ops, scaling: &Scaling, kkt: &KktFactor, f: &[f64], g: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let (mut dx, mut dy) = kkt.solve(ops.sf, &ops.rows, f, g);
    let fscale = 1.0 + norm(f) + norm(g);
    for _ in 0..2 {
        let hx = ops.h_apply(scaling, &dx);
        let aty = ops.at_mul(&dy);
        let ex: Vec<f64> = (0..f.len()).map(|i| f[i] - hx[i] - aty[i]).collect();
        let ax = ops.a_mul(&dx);
        let ey: Vec<f64> = (0..g.len()).map(|i| g[i] - ax[i]).collect();
        let err = norm(&ex) + norm(&ey);
        if err <= 1e-14 * fscale {
            break;
        }
        let (cx, cy) = kkt.solve(ops.sf, &ops.rows, &ex, &ey);
        axpy(&mut dx, 1.0, &cx);
        axpy(&mut dy, 1.0, &cy);
    }
    (dx, dy)
}

/// Right-hand side of the linearized system
///
/// ```text
/// A'dy + G'dz + c dtau        = bx
/// A dx - b dtau                = by
/// G dx + ds - h dtau           = bz
/// dkappa + c'dx + b'dy + h'dz  = btau
/// W^{-T} ds + W dz             = bs
/// tau dkappa + kappa dtau      = bk
/// ```
struct Rhs {
    bx: Vec<f64>,
    by: Vec<f64>,
    bz: ConeVec,
    btau: f64,
    bs: ConeVec,
    bk: f64,
}

struct Newton<'a> {
    ops: &'a Ops<'a>,
    scaling: &'a Scaling,
    kkt: &'a KktFactor<'a>,
    tau: f64,
    kappa: f64,
    dx2: Vec<f64>,
    dy2: Vec<f64>,
    dz2: ConeVec,
}

impl<'a> Newton<'a> {
    fn new(ops: &'a Ops<'a>, scaling: &'a Scaling, kkt: &'a KktFactor<'a>, tau: f64, kappa: f64) -> Self {
        let sf = ops.sf;
        let gh = ops.gt_mul(&scaling.what(&ops.h));
        let f2: Vec<f64> = (0..sf.n).map(|i| gh[i] - sf.c[i]).collect();
        let (dx2, dy2) = solve_refined(ops, scaling, kkt, &f2, &ops.b);
        let mut t = ops.g_mul(&dx2);
        t.axpy(-1.0, &ops.h);
        let dz2 = scaling.what(&t);
        Self { ops, scaling, kkt, tau, kappa, dx2, dy2, dz2 }
    }

    fn eliminate(&self, r: &Rhs) -> Direction {
        let (ops, scaling) = (self.ops, self.scaling);
        let sf = ops.sf;
        // dz = What (G dx - h dtau - bz + W' bs)
        let mut u = scaling.wt(&r.bs);
        u.axpy(-1.0, &r.bz);
        let gw = ops.gt_mul(&scaling.what(&u));
        let f1: Vec<f64> = (0..sf.n).map(|i| r.bx[i] - gw[i]).collect();
        let (dx1, dy1) = self.kkt.solve(sf, &ops.rows, &f1, &r.by);
        let mut t = ops.g_mul(&dx1);
        t.axpy(1.0, &u);
        let dz1 = scaling.what(&t);
        let v1 = dot(&sf.c, &dx1) + dot(&ops.b, &dy1) + ops.h.dot(&dz1);
        let v2 = dot(&sf.c, &self.dx2) + dot(&ops.b, &self.dy2) + ops.h.dot(&self.dz2);
        let dtau = (r.btau - r.bk / self.tau - v1) / (v2 - self.kappa / self.tau);
        let dkappa = (r.bk - self.kappa * dtau) / self.tau;
        let mut dx = dx1;
        axpy(&mut dx, dtau, &self.dx2);
        let mut dy = dy1;
        axpy(&mut dy, dtau, &self.dy2);
        let mut dz = dz1;
        dz.axpy(dtau, &self.dz2);
        // ds from the linear equation keeps the residuals of the iterates exact;
        // rounding then only perturbs the centering equation.
        let mut ds = r.bz.clone();
        ds.axpy(-1.0, &ops.g_mul(&dx));
        ds.axpy(dtau, &ops.h);
        Direction { dx, dy, ds, dz, dtau, dkappa }
    }

    fn residual(&self, r: &Rhs, d: &Direction) -> Rhs {
        let ops = self.ops;
        let sf = ops.sf;
        let aty = ops.at_mul(&d.dy);
        let gtz = ops.gt_mul(&d.dz);
        let bx = (0..sf.n).map(|i| r.bx[i] - aty[i] - gtz[i] - sf.c[i] * d.dtau).collect();
        let ax = ops.a_mul(&d.dx);
        let by = (0..ax.len()).map(|i| r.by[i] - ax[i] + ops.b[i] * d.dtau).collect();
        let mut bz = r.bz.clone();
        bz.axpy(-1.0, &ops.g_mul(&d.dx));
        bz.axpy(-1.0, &d.ds);
        bz.axpy(d.dtau, &ops.h);
        let btau = r.btau - d.dkappa - dot(&sf.c, &d.dx) - dot(&ops.b, &d.dy) - ops.h.dot(&d.dz);
        let mut bs = r.bs.clone();
        bs.axpy(-1.0, &self.scaling.winv_t(&d.ds));
        bs.axpy(-1.0, &self.scaling.w(&d.dz));
        let bk = r.bk - self.tau * d.dkappa - self.kappa * d.dtau;
        Rhs { bx, by, bz, btau, bs, bk }
    }

    /// Solve with iterative refinement on the full system; a correction is kept
    /// only while it shrinks the residual.
    fn solve(&self, r: &Rhs) -> Direction {
        let mut d = self.eliminate(r);
        let mut e = self.residual(r, &d);
        let mut err = e.norm();
        for _ in 0..3 {
            if err <= 1e-15 * (1.0 + r.norm()) {
                break;
            }
            let c = self.eliminate(&e);
            let mut cand = Direction {
                dx: d.dx.clone(),
                dy: d.dy.clone(),
                ds: d.ds.add(&c.ds),
                dz: d.dz.add(&c.dz),
                dtau: d.dtau + c.dtau,
                dkappa: d.dkappa + c.dkappa,
            };
            axpy(&mut cand.dx, 1.0, &c.dx);
            axpy(&mut cand.dy, 1.0, &c.dy);
            let ce = self.residual(r, &cand);
            let cerr = ce.norm();
            if !(cerr < err) {
                break;
            }
            d = cand;
            e = ce;
            err = cerr;
        }
        d
    }
}

impl Rhs {
    fn norm(&self) -> f64 {
        (dot(&self.bx, &self.bx)
            + dot(&self.by, &self.by)
            + self.bz.dot(&self.bz)
            + self.btau * self.btau
            + self.bs.dot(&self.bs)
            + self.bk * self.bk)
            .sqrt()
    }
}

fn newton_rhs(res: &Residuals, q: &ConeVec, d_k: f64, eta: f64) -> Rhs {
    Rhs {
        bx: res.rx.iter().map(|v| -eta * v).collect(),
        by: res.ry.iter().map(|v| -eta * v).collect(),
        bz: res.rz.scaled(-eta),
        btau: -eta * res.rtau,
        bs: q.clone(),
        bk: d_k,
    }
}

fn step_length(scaling: &Scaling, pt: &Point, d: &Direction) -> (f64, ConeVec, ConeVec) {
    let ds_t = scaling.winv_t(&d.ds);
    let dz_t = scaling.w(&d.dz);
    let mut a = scaling.max_step(&ds_t).min(scaling.max_step(&dz_t));
    if d.dtau < 0.0 {
        a = a.min(-pt.tau / d.dtau);
    }
    if d.dkappa < 0.0 {
        a = a.min(-pt.kappa / d.dkappa);
    }
    (a, ds_t, dz_t)
}

pub(crate) fn solve(sf: &StandardForm, keep: &[usize], settings: &Settings) -> RawSolution {
    let ops = Ops::new(sf, keep);
    let layout = KktLayout::new(sf, &ops.rows);
    let m = ops.rows.len();
    let nu = ConeVec::zeros(sf).degree();

    let mut pt = Point { x: vec![0.0; sf.n], y: vec![0.0; m], s: ConeVec::identity(sf), z: ConeVec::identity(sf), tau: 1.0, kappa: 1.0 };
    let mut scaling = Scaling::new(&pt.s, &pt.z).expect("identity is interior");

    let resx0 = norm(&sf.c).max(1.0);
    let resy0 = norm(&ops.b).max(1.0);
    let resz0 = ops.h.norm().max(1.0);

    let report = |pt: &Point, status: RawStatus, it: usize, _pres: f64, dres: f64| -> RawSolution {
        let (x, y, z, pcost, dcost) = match status {
            RawStatus::PrimalInfeasible => {
                let scale = -(dot(&ops.b, &pt.y) + ops.h.dot(&pt.z));
                (vec![0.0; sf.n], pt.y.iter().map(|v| v / scale).collect(), pt.z.scaled(1.0 / scale), f64::INFINITY, f64::INFINITY)
            }
            RawStatus::DualInfeasible => {
                let scale = -dot(&sf.c, &pt.x);
                (pt.x.iter().map(|v| v / scale).collect(), vec![0.0; m], ConeVec::zeros(sf), f64::NEG_INFINITY, f64::NEG_INFINITY)
            }
            _ => {
                let inv = 1.0 / pt.tau;
                let x: Vec<f64> = pt.x.iter().map(|v| v * inv).collect();
                let y: Vec<f64> = pt.y.iter().map(|v| v * inv).collect();
                let z = pt.z.scaled(inv);
                let pcost = dot(&sf.c, &x);
                let dcost = -dot(&ops.b, &y) - ops.h.dot(&z);
                (x, y, z, pcost, dcost)
            }
        };
        let mut yfull = vec![0.0; sf.a.len()];
        for (k, &i) in keep.iter().enumerate() {
            yfull[i] = y[k];
        }
        RawSolution { status, x, y: yfull, z, pcost, dcost, dres, iterations: it }
    };

    // Best iterate so far, by the worst of the three convergence measures.
    let mut best: Option<(f64, Point, f64, f64)> = None;
    for it in 0..=settings.max_iter {
        // Residuals.
        let aty = ops.at_mul(&pt.y);
        let gtz = ops.gt_mul(&pt.z);
        let ax = ops.a_mul(&pt.x);
        let gx = ops.g_mul(&pt.x);
        let cx = dot(&sf.c, &pt.x);
        let by = dot(&ops.b, &pt.y);
        let hz = ops.h.dot(&pt.z);
        let hres: Vec<f64> = (0..sf.n).map(|i| aty[i] + gtz[i]).collect();
        let rx: Vec<f64> = (0..sf.n).map(|i| hres[i] + sf.c[i] * pt.tau).collect();
        let ry: Vec<f64> = (0..m).map(|i| ax[i] - ops.b[i] * pt.tau).collect();
        let mut hresz = gx.clone();
        hresz.axpy(1.0, &pt.s);
        let mut rz = hresz.clone();
        rz.axpy(-pt.tau, &ops.h);
        let rtau = pt.kappa + cx + by + hz;

        let sz = pt.s.dot(&pt.z);
        let mu = (sz + pt.tau * pt.kappa) / (nu + 1.0);
        let pcost = cx / pt.tau;
        let dcost = -(by + hz) / pt.tau;
        let pres = (norm(&ry) / resy0).max(rz.norm() / resz0) / pt.tau;
        let dres = norm(&rx) / resx0 / pt.tau;
        let gap = sz / (pt.tau * pt.tau);
        let rel = gap.max((pcost - dcost).abs()) / pcost.abs().max(1.0);
        let merit = pres.max(dres).max(rel);
        if pres <= settings.tol && dres <= settings.tol && rel <= settings.tol {
            return report(&pt, RawStatus::Optimal, it, pres, dres);
        }
        if let Some(t) = settings.primal_target {
            if pcost <= t && pres <= t {
                return report(&pt, RawStatus::Stopped("primal target reached".into()), it, pres, dres);
            }
        }
        if by + hz < 0.0 {
            let pinf = norm(&hres) / resx0 / (-(by + hz));
            if pinf <= settings.infeas_tol {
                return report(&pt, RawStatus::PrimalInfeasible, it, pres, dres);
            }
        }
        if cx < 0.0 {
            let dinf = (norm(&ax) / resy0).max(hresz.norm() / resz0) / (-cx);
            if dinf <= settings.infeas_tol {
                return report(&pt, RawStatus::DualInfeasible, it, pres, dres);
            }
        }
        match &best {
            Some((b, ..)) if merit >= *b => {
                // Past the attainable accuracy the reduced system stops resolving the
                // complementary directions; further steps only add noise.
                if *b <= 1e-6 && merit > 100.0 * b {
                    let (_, bp, bpres, bdres) = best.take().expect("checked");
                    return report(&bp, RawStatus::Stopped("numerical precision exhausted".into()), it, bpres, bdres);
                }
            }
            _ => best = Some((merit, pt.clone(), pres, dres)),
        }
        if it == settings.max_iter {
            break;
        }

        let Some(kkt) = KktFactor::new(&layout, sf, &scaling) else {
            let (_, bp, bpres, bdres) = best.take().expect("recorded above");
            return report(&bp, RawStatus::Stopped("KKT factorization failed".into()), it, bpres, bdres);
        };
        let res = Residuals { rx, ry, rz, rtau };

        let newton = Newton::new(&ops, &scaling, &kkt, pt.tau, pt.kappa);

        let lambda = scaling.lambda();
        // Predictor.
        let q_aff = lambda.scaled(-1.0);
        let aff = newton.solve(&newton_rhs(&res, &q_aff, -pt.tau * pt.kappa, 1.0));
        let (a_aff, ds_a, dz_a) = step_length(&scaling, &pt, &aff);
        let a_aff = a_aff.min(1.0);
        let sigma = (1.0 - a_aff).powi(3);

        // Corrector.
        let mut rc = lambda.jordan(&lambda).scaled(-1.0);
        rc.axpy(-1.0, &ds_a.jordan(&dz_a));
        let e = ConeVec::identity(sf);
        rc.axpy(sigma * mu, &e);
        let q = scaling.lambda_div(&rc);
        let d_k = sigma * mu - pt.tau * pt.kappa - aff.dtau * aff.dkappa;
        let dir = newton.solve(&newton_rhs(&res, &q, d_k, 1.0 - sigma));
        let (amax, ds_t, dz_t) = step_length(&scaling, &pt, &dir);
        let alpha = (0.99 * amax).min(1.0);
        if !alpha.is_finite() || alpha < 1e-10 {
            let (_, bp, bpres, bdres) = best.take().expect("recorded above");
            return report(&bp, RawStatus::Stopped("step length collapsed".into()), it, bpres, bdres);
        }

        let Some(next) = scaling.update(&ds_t, &dz_t, alpha) else {
            let (_, bp, bpres, bdres) = best.take().expect("recorded above");
            return report(&bp, RawStatus::Stopped("lost interiority".into()), it, bpres, bdres);
        };
        axpy(&mut pt.x, alpha, &dir.dx);
        axpy(&mut pt.y, alpha, &dir.dy);
        pt.s.axpy(alpha, &dir.ds);
        pt.z.axpy(alpha, &dir.dz);
        // A fresh scaling tracks the iterates; chained updates accumulate error.
        scaling = Scaling::new(&pt.s, &pt.z).unwrap_or(next);
        pt.tau += alpha * dir.dtau;
        pt.kappa += alpha * dir.dkappa;
    }
    let (_, bp, bpres, bdres) = best.expect("at least one iterate");
    report(&bp, RawStatus::Stopped("iteration limit".into()), settings.max_iter, bpres, bdres)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::conic::compile::{compile, Mode};
    use crate::conic::model::{ConeMap, ConicProblem, Field, LinExpr};
    use nalgebra::DMatrix;

    fn random_interior(sf: &StandardForm, seed: f64) -> ConeVec {
        let mut v = ConeVec::identity(sf);
        for (k, m) in v.psd.iter_mut().enumerate() {
            let n = m.nrows();
            let a = DMatrix::from_fn(n, n, |i, j| ((i * 7 + j * 3 + k) as f64 * seed).sin());
            *m = &a * a.transpose() + DMatrix::identity(n, n) * 1e-3;
        }
        for (i, x) in v.lp.iter_mut().enumerate() {
            *x = 1e-6 + ((i as f64) * seed).cos().abs();
        }
        v
    }

    #[test]
    fn kkt_solution_satisfies_system() {
        let mut p = ConicProblem::new();
        let s = p.add_psd_var_with_factors("sigma", vec![2, 2], Field::Complex).unwrap();
        p.require_psd(s, ConeMap::PartialTranspose(0)).unwrap();
        p.add_structural_equality(LinExpr::new().trace(s, 4, 1.0), 1.0).unwrap();
        let mut phi = crate::linalg::CMatrix::zeros(4, 4);
        for &(i, j) in &[(0, 0), (0, 3), (3, 0), (3, 3)] {
            phi[(i, j)] = num_complex::Complex64::new(0.5, 0.0);
        }
        p.add_equality(LinExpr::new().trace_with(s, phi), 0.8).unwrap();
        let sf = compile(&p, Mode::PhaseOne).unwrap();
        let keep: Vec<usize> = (0..sf.a.len()).collect();
        let ops = Ops::new(&sf, &keep);
        let layout = KktLayout::new(&sf, &ops.rows);
        let scaling = Scaling::new(&random_interior(&sf, 0.37), &random_interior(&sf, 1.91)).unwrap();
        let kkt = KktFactor::new(&layout, &sf, &scaling).unwrap();
        let f: Vec<f64> = (0..sf.n).map(|i| (i as f64 * 0.3).sin()).collect();
        let g: Vec<f64> = (0..ops.rows.len()).map(|i| (i as f64 + 0.5).cos()).collect();
        let (dx, dy) = kkt.solve(&sf, &ops.rows, &f, &g);
        let hx = ops.h_apply(&scaling, &dx);
        let aty = ops.at_mul(&dy);
        let ex: f64 = (0..sf.n).map(|i| (f[i] - hx[i] - aty[i]).abs()).fold(0.0, f64::max);
        let ax = ops.a_mul(&dx);
        let ey: f64 = (0..g.len()).map(|i| (g[i] - ax[i]).abs()).fold(0.0, f64::max);
        assert!(ex < 1e-8 && ey < 1e-8, "{ex} {ey}");
    }
}
