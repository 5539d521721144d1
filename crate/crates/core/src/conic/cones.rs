//! Cone vectors, Nesterov-Todd scaling and Jordan-algebra helpers for products
//! of real PSD cones and the nonnegative orthant.

use nalgebra::{DMatrix, DVector, SVD};

use super::compile::StandardForm;

/// An element of `K = S^{n_1}_+ x .. x S^{n_k}_+ x R^m_+` (or its linear span).
#[derive(Clone, Debug)]
pub(crate) struct ConeVec {
    pub psd: Vec<DMatrix<f64>>,
    pub lp: Vec<f64>,
}

impl ConeVec {
    pub fn zeros(sf: &StandardForm) -> Self {
        Self { psd: sf.psd.iter().map(|b| DMatrix::zeros(b.n, b.n)).collect(), lp: vec![0.0; sf.lp.len()] }
    }

    pub fn identity(sf: &StandardForm) -> Self {
        Self { psd: sf.psd.iter().map(|b| DMatrix::identity(b.n, b.n)).collect(), lp: vec![1.0; sf.lp.len()] }
    }

    /// Barrier degree.
    pub fn degree(&self) -> f64 {
        (self.psd.iter().map(|m| m.nrows()).sum::<usize>() + self.lp.len()) as f64
    }

    pub fn dot(&self, o: &Self) -> f64 {
        let mut acc: f64 = self.lp.iter().zip(&o.lp).map(|(a, b)| a * b).sum();
        for (a, b) in self.psd.iter().zip(&o.psd) {
            acc += a.dot(b);
        }
        acc
    }

    pub fn axpy(&mut self, alpha: f64, o: &Self) {
        for (a, b) in self.lp.iter_mut().zip(&o.lp) {
            *a += alpha * b;
        }
        for (a, b) in self.psd.iter_mut().zip(&o.psd) {
            *a += b * alpha;
        }
    }

    pub fn scale(&mut self, alpha: f64) {
        self.lp.iter_mut().for_each(|a| *a *= alpha);
        self.psd.iter_mut().for_each(|a| *a *= alpha);
    }

    pub fn scaled(&self, alpha: f64) -> Self {
        let mut out = self.clone();
        out.scale(alpha);
        out
    }

    pub fn norm(&self) -> f64 {
        self.dot(self).sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        let lp = self.lp.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        self.psd.iter().fold(lp, |m, a| a.iter().fold(m, |m, v| m.max(v.abs())))
    }

    pub fn add(&self, o: &Self) -> Self {
        let mut out = self.clone();
        out.axpy(1.0, o);
        out
    }

    /// Jordan product: `(UV + VU)/2` on PSD blocks, elementwise on LP.
    pub fn jordan(&self, o: &Self) -> Self {
        Self {
            psd: self.psd.iter().zip(&o.psd).map(|(u, v)| (u * v + v * u) * 0.5).collect(),
            lp: self.lp.iter().zip(&o.lp).map(|(a, b)| a * b).collect(),
        }
    }
}

#[derive(Clone, Debug)]
pub(crate) struct PsdScale {
    pub r: DMatrix<f64>,
    pub rinv: DMatrix<f64>,
    /// `(R R')^{-1}`.
    pub q: DMatrix<f64>,
    pub lambda: DVector<f64>,
}

/// Nesterov-Todd scaling point of a pair of interior cone vectors.
#[derive(Clone, Debug)]
pub(crate) struct Scaling {
    pub psd: Vec<PsdScale>,
    pub lp_w: Vec<f64>,
    pub lp_lambda: Vec<f64>,
}

fn psd_scaling(s: &DMatrix<f64>, z: &DMatrix<f64>) -> Option<PsdScale> {
    let ls = s.clone().cholesky()?.l();
    let lz = z.clone().cholesky()?.l();
    let m = lz.transpose() * &ls;
    let svd = SVD::new(m, true, true);
    let u = svd.u?;
    let vt = svd.v_t?;
    let lam = svd.singular_values;
    if lam.iter().any(|&l| !(l > 0.0) || !l.is_finite()) {
        return None;
    }
    let inv_sqrt = lam.map(|l| 1.0 / l.sqrt());
    // R = L_s V Λ^{-1/2}; R^{-1} = Λ^{-1/2} U' L_z'.
    let mut r = ls * vt.transpose();
    for (j, mut col) in r.column_iter_mut().enumerate() {
        col *= inv_sqrt[j];
    }
    let mut rinv = u.transpose() * lz.transpose();
    for (i, mut row) in rinv.row_iter_mut().enumerate() {
        row *= inv_sqrt[i];
    }
    let q = rinv.transpose() * &rinv;
    Some(PsdScale { r, rinv, q, lambda: lam })
}

impl Scaling {
    pub fn new(s: &ConeVec, z: &ConeVec) -> Option<Self> {
        let psd = s.psd.iter().zip(&z.psd).map(|(s, z)| psd_scaling(s, z)).collect::<Option<Vec<_>>>()?;
        let mut lp_w = Vec::with_capacity(s.lp.len());
        let mut lp_lambda = Vec::with_capacity(s.lp.len());
        for (&a, &b) in s.lp.iter().zip(&z.lp) {
            if !(a > 0.0 && b > 0.0) {
                return None;
            }
            lp_w.push((a / b).sqrt());
            lp_lambda.push((a * b).sqrt());
        }
        Some(Self { psd, lp_w, lp_lambda })
    }

    /// Scaling at `s + alpha ds`, `z + alpha dz`, given the scaled directions
    /// `W^{-T} ds` and `W dz`. The new point is scaled in the current frame first,
    /// which keeps the factorizations well conditioned near the boundary.
    pub fn update(&self, ds: &ConeVec, dz: &ConeVec, alpha: f64) -> Option<Self> {
        let lam = self.lambda();
        let mut st = lam.clone();
        st.axpy(alpha, ds);
        let mut zt = lam;
        zt.axpy(alpha, dz);
        for m in st.psd.iter_mut().chain(zt.psd.iter_mut()) {
            let sym = (&*m + m.transpose()) * 0.5;
            *m = sym;
        }
        let inner = Scaling::new(&st, &zt)?;
        let psd = self
            .psd
            .iter()
            .zip(inner.psd)
            .map(|(outer, inner)| {
                let r = &outer.r * &inner.r;
                // Products of the inverses drift away from the inverse of the product.
                let rinv = r.clone().lu().try_inverse().unwrap_or_else(|| &inner.rinv * &outer.rinv);
                let q = rinv.transpose() * &rinv;
                PsdScale { r, rinv, q, lambda: inner.lambda }
            })
            .collect();
        let lp_w = self.lp_w.iter().zip(&inner.lp_w).map(|(a, b)| a * b).collect();
        Some(Self { psd, lp_w, lp_lambda: inner.lp_lambda })
    }

    pub fn lambda(&self) -> ConeVec {
        ConeVec { psd: self.psd.iter().map(|p| DMatrix::from_diagonal(&p.lambda)).collect(), lp: self.lp_lambda.clone() }
    }

    /// `W v` (maps dual-side vectors into the scaled frame).
    pub fn w(&self, v: &ConeVec) -> ConeVec {
        ConeVec {
            psd: self.psd.iter().zip(&v.psd).map(|(p, m)| p.r.transpose() * m * &p.r).collect(),
            lp: self.lp_w.iter().zip(&v.lp).map(|(w, x)| w * x).collect(),
        }
    }

    /// `W^T v`.
    pub fn wt(&self, v: &ConeVec) -> ConeVec {
        ConeVec {
            psd: self.psd.iter().zip(&v.psd).map(|(p, m)| &p.r * m * p.r.transpose()).collect(),
            lp: self.lp_w.iter().zip(&v.lp).map(|(w, x)| w * x).collect(),
        }
    }

    /// `W^{-T} v` (maps primal-side vectors into the scaled frame).
    pub fn winv_t(&self, v: &ConeVec) -> ConeVec {
        ConeVec {
            psd: self.psd.iter().zip(&v.psd).map(|(p, m)| &p.rinv * m * p.rinv.transpose()).collect(),
            lp: self.lp_w.iter().zip(&v.lp).map(|(w, x)| x / w).collect(),
        }
    }

    /// `(W^T W)^{-1} v`.
    pub fn what(&self, v: &ConeVec) -> ConeVec {
        ConeVec {
            psd: self.psd.iter().zip(&v.psd).map(|(p, m)| &p.q * m * &p.q).collect(),
            lp: self.lp_w.iter().zip(&v.lp).map(|(w, x)| x / (w * w)).collect(),
        }
    }

    /// Solve `lambda ∘ u = r` for `u`.
    pub fn lambda_div(&self, r: &ConeVec) -> ConeVec {
        ConeVec {
            psd: self
                .psd
                .iter()
                .zip(&r.psd)
                .map(|(p, m)| {
                    let l = &p.lambda;
                    DMatrix::from_fn(m.nrows(), m.ncols(), |i, j| 2.0 * m[(i, j)] / (l[i] + l[j]))
                })
                .collect(),
            lp: self.lp_lambda.iter().zip(&r.lp).map(|(l, x)| x / l).collect(),
        }
    }

    /// Largest `alpha` with `lambda + alpha * d` in the cone (`f64::INFINITY` if unbounded).
    pub fn max_step(&self, d: &ConeVec) -> f64 {
        let mut alpha = f64::INFINITY;
        for (l, x) in self.lp_lambda.iter().zip(&d.lp) {
            if *x < 0.0 {
                alpha = alpha.min(-l / x);
            }
        }
        for (p, m) in self.psd.iter().zip(&d.psd) {
            let inv = p.lambda.map(|l| 1.0 / l.sqrt());
            let scaled = DMatrix::from_fn(m.nrows(), m.ncols(), |i, j| inv[i] * m[(i, j)] * inv[j]);
            let sym = (&scaled + scaled.transpose()) * 0.5;
            let min = sym.symmetric_eigenvalues().iter().fold(f64::INFINITY, |a, &b| a.min(b));
            if min < 0.0 {
                alpha = alpha.min(-1.0 / min);
            }
        }
        alpha
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spd(n: usize, seed: f64) -> DMatrix<f64> {
        let a = DMatrix::from_fn(n, n, |i, j| ((i * n + j) as f64 * seed).sin());
        &a * a.transpose() + DMatrix::identity(n, n) * 0.1
    }

    #[test]
    fn scaling_maps_both_sides_to_lambda() {
        let s = spd(5, 0.7);
        let z = spd(5, 1.3);
        let p = psd_scaling(&s, &z).unwrap();
        let lam = DMatrix::from_diagonal(&p.lambda);
        let ws = &p.rinv * &s * p.rinv.transpose();
        let wz = p.r.transpose() * &z * &p.r;
        assert!((ws - &lam).norm() < 1e-10);
        assert!((wz - &lam).norm() < 1e-10);
        let rr = &p.r * p.r.transpose();
        assert!((&rr * &p.q - DMatrix::identity(5, 5)).norm() < 1e-9);
        // W^T W maps z to s.
        assert!((&rr * &z * &rr - &s).norm() < 1e-9);
    }
}
