//! Complex Hermitian operators on tensor-product spaces.
//!
//! Factors are ordered most-significant first: a basis index `i` of a space
//! with factor dimensions `[d0, d1, ..]` decomposes as `i = i0 * (d1 * ..) + i1 * (..) + ..`.

use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::tolerances;

pub type CMatrix = DMatrix<Complex64>;
pub type RMatrix = DMatrix<f64>;

pub const ZERO: Complex64 = Complex64::new(0.0, 0.0);
pub const ONE: Complex64 = Complex64::new(1.0, 0.0);
pub const I: Complex64 = Complex64::new(0.0, 1.0);

/// Kronecker product of two complex matrices.
pub fn kron(a: &CMatrix, b: &CMatrix) -> CMatrix {
    a.kronecker(b)
}

pub fn kron_all<'a>(ops: impl IntoIterator<Item = &'a CMatrix>) -> CMatrix {
    let mut acc = CMatrix::from_element(1, 1, ONE);
    for op in ops {
        acc = acc.kronecker(op);
    }
    acc
}

pub fn identity(d: usize) -> CMatrix {
    CMatrix::identity(d, d)
}

fn digits(mut index: usize, factors: &[usize], out: &mut [usize]) {
    for k in (0..factors.len()).rev() {
        out[k] = index % factors[k];
        index /= factors[k];
    }
}

fn compose(digits: &[usize], factors: &[usize]) -> usize {
    digits.iter().zip(factors).fold(0, |acc, (&d, &f)| acc * f + d)
}

fn check_factors(dim: usize, factors: &[usize]) -> Result<()> {
    if factors.contains(&0) {
        return Err(Error::InvalidFactor("zero-dimensional factor".into()));
    }
    let prod: usize = factors.iter().product();
    if prod != dim {
        return Err(Error::InvalidFactor(format!("factors {factors:?} multiply to {prod}, matrix dimension is {dim}")));
    }
    Ok(())
}

/// Partial trace of a square matrix, keeping the listed factors in ascending order.
pub fn partial_trace(m: &CMatrix, factors: &[usize], keep: &[usize]) -> Result<CMatrix> {
    check_factors(m.nrows(), factors)?;
    let mut keep: Vec<usize> = keep.to_vec();
    keep.sort_unstable();
    keep.dedup();
    if keep.iter().any(|&k| k >= factors.len()) {
        return Err(Error::InvalidFactor(format!("keep set {keep:?} out of range for {} factors", factors.len())));
    }
    let traced: Vec<usize> = (0..factors.len()).filter(|k| !keep.contains(k)).collect();
    let kdims: Vec<usize> = keep.iter().map(|&k| factors[k]).collect();
    let tdims: Vec<usize> = traced.iter().map(|&k| factors[k]).collect();
    let kd: usize = kdims.iter().product();
    let td: usize = tdims.iter().product();

    // Full index for every (kept, traced) pair.
    let mut full = vec![0usize; kd * td];
    let mut dig = vec![0usize; factors.len()];
    let mut kdig = vec![0usize; keep.len()];
    let mut tdig = vec![0usize; traced.len()];
    for ki in 0..kd {
        digits(ki, &kdims, &mut kdig);
        for ti in 0..td {
            digits(ti, &tdims, &mut tdig);
            for (p, &k) in keep.iter().enumerate() {
                dig[k] = kdig[p];
            }
            for (p, &t) in traced.iter().enumerate() {
                dig[t] = tdig[p];
            }
            full[ki * td + ti] = compose(&dig, factors);
        }
    }
    let mut out = CMatrix::zeros(kd, kd);
    for r in 0..kd {
        for c in 0..kd {
            let mut acc = ZERO;
            for t in 0..td {
                acc += m[(full[r * td + t], full[c * td + t])];
            }
            out[(r, c)] = acc;
        }
    }
    Ok(out)
}

/// Transpose of the given factor only.
pub fn partial_transpose(m: &CMatrix, factors: &[usize], factor: usize) -> Result<CMatrix> {
    check_factors(m.nrows(), factors)?;
    if factor >= factors.len() {
        return Err(Error::InvalidFactor(format!("factor {factor} out of range for {} factors", factors.len())));
    }
    let n = m.nrows();
    // Stride of the factor within a flat index.
    let stride: usize = factors[factor + 1..].iter().product();
    let d = factors[factor];
    let mut out = CMatrix::zeros(n, n);
    for i in 0..n {
        let di = (i / stride) % d;
        let ib = i - di * stride;
        for j in 0..n {
            let dj = (j / stride) % d;
            let jb = j - dj * stride;
            out[(ib + dj * stride, jb + di * stride)] = m[(i, j)];
        }
    }
    Ok(out)
}

/// Reorder tensor factors: factor `k` of the result is factor `perm[k]` of the input.
pub fn permute_factors(m: &CMatrix, factors: &[usize], perm: &[usize]) -> Result<CMatrix> {
    check_factors(m.nrows(), factors)?;
    let mut seen = vec![false; factors.len()];
    if perm.len() != factors.len() || perm.iter().any(|&p| p >= factors.len() || std::mem::replace(&mut seen[p], true)) {
        return Err(Error::InvalidFactor(format!("{perm:?} is not a permutation")));
    }
    let new_factors: Vec<usize> = perm.iter().map(|&p| factors[p]).collect();
    let n = m.nrows();
    let mut map = vec![0usize; n];
    let mut old = vec![0usize; factors.len()];
    let mut new = vec![0usize; factors.len()];
    for (i, slot) in map.iter_mut().enumerate() {
        digits(i, &new_factors, &mut new);
        for (k, &p) in perm.iter().enumerate() {
            old[p] = new[k];
        }
        *slot = compose(&old, factors);
    }
    Ok(CMatrix::from_fn(n, n, |r, c| m[(map[r], map[c])]))
}

/// Real representation `[[Re, -Im], [Im, Re]]`; PSD-ness is preserved both ways.
pub fn realify(m: &CMatrix) -> RMatrix {
    let (r, c) = m.shape();
    let mut out = RMatrix::zeros(2 * r, 2 * c);
    for i in 0..r {
        for j in 0..c {
            let z = m[(i, j)];
            out[(i, j)] = z.re;
            out[(i + r, j + c)] = z.re;
            out[(i, j + c)] = -z.im;
            out[(i + r, j)] = z.im;
        }
    }
    out
}

/// `Re Tr[A B]`.
pub fn re_trace_product(a: &CMatrix, b: &CMatrix) -> f64 {
    let mut acc = 0.0;
    for i in 0..a.nrows() {
        for k in 0..a.ncols() {
            let x = a[(i, k)];
            let y = b[(k, i)];
            acc += x.re * y.re - x.im * y.im;
        }
    }
    acc
}

pub fn trace(m: &CMatrix) -> Complex64 {
    m.diagonal().iter().sum()
}

pub fn max_hermitian_deviation(m: &CMatrix) -> f64 {
    let mut dev: f64 = 0.0;
    for i in 0..m.nrows() {
        for j in i..m.ncols() {
            dev = dev.max((m[(i, j)] - m[(j, i)].conj()).norm());
        }
    }
    dev
}

/// Eigendecomposition with eigenvalues sorted in descending order.
#[derive(Clone, Debug)]
pub struct Eigen {
    pub values: Vec<f64>,
    /// Column `k` is the eigenvector of `values[k]`.
    pub vectors: CMatrix,
}

pub fn eig_hermitian(m: &CMatrix) -> Eigen {
    let se = SymmetricEigen::new(m.clone());
    let mut order: Vec<usize> = (0..se.eigenvalues.len()).collect();
    order.sort_by(|&a, &b| se.eigenvalues[b].total_cmp(&se.eigenvalues[a]));
    let values = order.iter().map(|&k| se.eigenvalues[k]).collect();
    let vectors = CMatrix::from_fn(m.nrows(), order.len(), |r, c| se.eigenvectors[(r, order[c])]);
    Eigen { values, vectors }
}

pub fn eigenvalues_hermitian(m: &CMatrix) -> Vec<f64> {
    let mut v: Vec<f64> = m.clone().symmetric_eigenvalues().iter().copied().collect();
    v.sort_by(|a, b| b.total_cmp(a));
    v
}

/// A Hermitian matrix tagged with the dimensions of its tensor factors.
#[derive(Clone, Debug, PartialEq)]
pub struct HermitianOperator {
    mat: CMatrix,
    factors: Vec<usize>,
}

impl HermitianOperator {
    /// Validates Hermiticity within [`tolerances::HERMITICITY`] (scaled by the matrix size)
    /// and stores the exactly symmetrized matrix.
    pub fn new(mat: CMatrix, factors: Vec<usize>) -> Result<Self> {
        if !mat.is_square() {
            return Err(Error::Dimension(format!("{}x{} matrix is not square", mat.nrows(), mat.ncols())));
        }
        if mat.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::NonFinite);
        }
        check_factors(mat.nrows(), &factors)?;
        let scale = mat.iter().fold(1.0f64, |m, z| m.max(z.norm()));
        let dev = max_hermitian_deviation(&mat);
        if dev > tolerances::HERMITICITY * scale {
            return Err(Error::NotHermitian(dev));
        }
        let sym = (&mat + mat.adjoint()) * Complex64::new(0.5, 0.0);
        Ok(Self { mat: sym, factors })
    }

    /// Single-factor operator.
    pub fn from_matrix(mat: CMatrix) -> Result<Self> {
        let n = mat.nrows();
        Self::new(mat, vec![n])
    }

    pub fn from_real(mat: &RMatrix, factors: Vec<usize>) -> Result<Self> {
        Self::new(mat.map(|x| Complex64::new(x, 0.0)), factors)
    }

    pub fn identity(factors: Vec<usize>) -> Self {
        let n = factors.iter().product();
        Self { mat: identity(n), factors }
    }

    pub fn zeros(factors: Vec<usize>) -> Self {
        let n = factors.iter().product();
        Self { mat: CMatrix::zeros(n, n), factors }
    }

    /// Projector onto a (not necessarily normalized) vector.
    pub fn projector(v: &[Complex64]) -> Self {
        let n = v.len();
        let norm2: f64 = v.iter().map(|z| z.norm_sqr()).sum();
        let mat = CMatrix::from_fn(n, n, |r, c| v[r] * v[c].conj() / norm2);
        Self { mat, factors: vec![n] }
    }

    pub fn dim(&self) -> usize {
        self.mat.nrows()
    }

    pub fn factors(&self) -> &[usize] {
        &self.factors
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.mat
    }

    pub fn into_matrix(self) -> CMatrix {
        self.mat
    }

    pub fn with_factors(mut self, factors: Vec<usize>) -> Result<Self> {
        check_factors(self.dim(), &factors)?;
        self.factors = factors;
        Ok(self)
    }

    pub fn trace(&self) -> f64 {
        trace(&self.mat).re
    }

    /// `Re Tr[self * other]`.
    pub fn inner(&self, other: &HermitianOperator) -> f64 {
        re_trace_product(&self.mat, &other.mat)
    }

    pub fn scale(&self, s: f64) -> Self {
        Self { mat: &self.mat * Complex64::new(s, 0.0), factors: self.factors.clone() }
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.same_shape(other)?;
        Ok(Self { mat: &self.mat + &other.mat, factors: self.factors.clone() })
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.same_shape(other)?;
        Ok(Self { mat: &self.mat - &other.mat, factors: self.factors.clone() })
    }

    fn same_shape(&self, other: &Self) -> Result<()> {
        if self.factors != other.factors {
            return Err(Error::Dimension(format!("factor mismatch {:?} vs {:?}", self.factors, other.factors)));
        }
        Ok(())
    }

    pub fn kron(&self, other: &Self) -> Self {
        let mut factors = self.factors.clone();
        factors.extend_from_slice(&other.factors);
        Self { mat: kron(&self.mat, &other.mat), factors }
    }

    pub fn partial_trace(&self, keep: &[usize]) -> Result<Self> {
        let mat = partial_trace(&self.mat, &self.factors, keep)?;
        let mut keep = keep.to_vec();
        keep.sort_unstable();
        keep.dedup();
        let factors = keep.iter().map(|&k| self.factors[k]).collect();
        Ok(Self { mat, factors })
    }

    pub fn partial_transpose(&self, factor: usize) -> Result<Self> {
        let mat = partial_transpose(&self.mat, &self.factors, factor)?;
        Ok(Self { mat, factors: self.factors.clone() })
    }

    pub fn permute_factors(&self, perm: &[usize]) -> Result<Self> {
        let mat = permute_factors(&self.mat, &self.factors, perm)?;
        let factors = perm.iter().map(|&p| self.factors[p]).collect();
        Ok(Self { mat, factors })
    }

    pub fn eig(&self) -> Eigen {
        eig_hermitian(&self.mat)
    }

    pub fn eigenvalues(&self) -> Vec<f64> {
        eigenvalues_hermitian(&self.mat)
    }

    pub fn min_eigenvalue(&self) -> f64 {
        *self.eigenvalues().last().expect("non-empty operator")
    }

    pub fn realify(&self) -> RMatrix {
        realify(&self.mat)
    }

    /// Largest entrywise absolute difference.
    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        self.mat.iter().zip(other.mat.iter()).fold(0.0, |m, (a, b)| m.max((a - b).norm()))
    }
}

/// Orthonormal Hermitian basis of `d x d` matrices under the Hilbert-Schmidt product.
/// The first element is `I / sqrt(d)`; the rest are traceless.
pub fn hermitian_basis(d: usize) -> Vec<CMatrix> {
    let mut basis = Vec::with_capacity(d * d);
    basis.push(identity(d) * Complex64::new(1.0 / (d as f64).sqrt(), 0.0));
    let h = std::f64::consts::FRAC_1_SQRT_2;
    for j in 0..d {
        for k in (j + 1)..d {
            let mut s = CMatrix::zeros(d, d);
            s[(j, k)] = Complex64::new(h, 0.0);
            s[(k, j)] = Complex64::new(h, 0.0);
            basis.push(s);
            let mut a = CMatrix::zeros(d, d);
            a[(j, k)] = Complex64::new(0.0, -h);
            a[(k, j)] = Complex64::new(0.0, h);
            basis.push(a);
        }
    }
    for l in 1..d {
        let norm = 1.0 / ((l * (l + 1)) as f64).sqrt();
        let mut g = CMatrix::zeros(d, d);
        for j in 0..l {
            g[(j, j)] = Complex64::new(norm, 0.0);
        }
        g[(l, l)] = Complex64::new(-(l as f64) * norm, 0.0);
        basis.push(g);
    }
    basis
}
