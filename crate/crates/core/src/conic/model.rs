//! Problem builder: Hermitian matrix variables, scalars, affine equalities, linear objective.

use std::collections::HashMap;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::linalg::CMatrix;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct VarId(pub(crate) usize);

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct ScalarId(pub(crate) usize);

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Field {
    Real,
    Complex,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ScalarKind {
    Free,
    Nonneg,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Sense {
    Minimize,
    Maximize,
}

/// Linear image of a matrix variable required to be PSD.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ConeMap {
    Identity,
    /// Partial transpose of one tensor factor of the variable.
    PartialTranspose(usize),
}

/// How an equality is treated by the phase-I feasibility reformulation.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum EqualityKind {
    /// Relaxed by the phase-I slack (observations, data).
    Data,
    /// Always enforced exactly (normalization, marginal structure, symmetry).
    Structural,
}

#[derive(Clone, Debug)]
pub struct MatrixVar {
    pub label: String,
    pub dim: usize,
    pub field: Field,
    pub factors: Vec<usize>,
}

#[derive(Clone, Debug)]
pub struct ScalarVar {
    pub label: String,
    pub kind: ScalarKind,
}

#[derive(Clone, Debug)]
pub struct PsdConstraint {
    pub var: VarId,
    pub map: ConeMap,
}

/// `Σ Re Tr[K_i X_i] + Σ c_j s_j`.
#[derive(Clone, Debug, Default)]
pub struct LinExpr {
    pub(crate) mats: Vec<(VarId, CMatrix)>,
    pub(crate) scalars: Vec<(ScalarId, f64)>,
}

impl LinExpr {
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds `Re Tr[k X]`.
    pub fn trace_with(mut self, var: VarId, k: CMatrix) -> Self {
        self.mats.push((var, k));
        self
    }

    /// Adds `weight * Re X[r, c]`.
    pub fn entry(self, var: VarId, dim: usize, r: usize, c: usize, weight: f64) -> Self {
        let mut k = CMatrix::zeros(dim, dim);
        k[(c, r)] = Complex64::new(weight, 0.0);
        self.trace_with(var, k)
    }

    /// Adds `weight * Im X[r, c]`.
    pub fn entry_im(self, var: VarId, dim: usize, r: usize, c: usize, weight: f64) -> Self {
        let mut k = CMatrix::zeros(dim, dim);
        k[(c, r)] = Complex64::new(0.0, -weight);
        self.trace_with(var, k)
    }

    /// Adds `weight * Tr X`.
    pub fn trace(self, var: VarId, dim: usize, weight: f64) -> Self {
        self.trace_with(var, CMatrix::identity(dim, dim) * Complex64::new(weight, 0.0))
    }

    pub fn scalar(mut self, s: ScalarId, coef: f64) -> Self {
        self.scalars.push((s, coef));
        self
    }

    pub fn push_trace(&mut self, var: VarId, k: CMatrix) {
        self.mats.push((var, k));
    }

    pub fn push_scalar(&mut self, s: ScalarId, coef: f64) {
        self.scalars.push((s, coef));
    }

    pub fn extend(&mut self, other: LinExpr) {
        self.mats.extend(other.mats);
        self.scalars.extend(other.scalars);
    }

    pub fn scaled(mut self, f: f64) -> Self {
        let cf = Complex64::new(f, 0.0);
        for (_, k) in &mut self.mats {
            *k *= cf;
        }
        for (_, c) in &mut self.scalars {
            *c *= f;
        }
        self
    }

    pub fn is_empty(&self) -> bool {
        self.mats.is_empty() && self.scalars.is_empty()
    }
}

#[derive(Clone, Debug)]
pub struct Equality {
    pub label: Option<String>,
    pub expr: LinExpr,
    pub rhs: f64,
    pub kind: EqualityKind,
}

/// Immutable-once-solved description of a conic program over PSD matrix variables.
#[derive(Clone, Debug, Default)]
pub struct ConicProblem {
    pub(crate) vars: Vec<MatrixVar>,
    pub(crate) scalars: Vec<ScalarVar>,
    pub(crate) cones: Vec<PsdConstraint>,
    pub(crate) equalities: Vec<Equality>,
    pub(crate) objective: Option<(Sense, LinExpr)>,
    labels: HashMap<String, Label>,
}

#[derive(Clone, Copy, Debug)]
enum Label {
    Var(VarId),
    Scalar(ScalarId),
}

impl ConicProblem {
    pub fn new() -> Self {
        Self::default()
    }

    fn claim(&mut self, label: &str, l: Label) -> Result<()> {
        if self.labels.contains_key(label) {
            return Err(Error::Model(format!("duplicate label `{label}`")));
        }
        self.labels.insert(label.to_string(), l);
        Ok(())
    }

    /// PSD matrix variable of dimension `dim` (single tensor factor).
    pub fn add_psd_var(&mut self, label: &str, dim: usize, field: Field) -> Result<VarId> {
        self.add_psd_var_with_factors(label, vec![dim], field)
    }

    pub fn add_psd_var_with_factors(&mut self, label: &str, factors: Vec<usize>, field: Field) -> Result<VarId> {
        let id = self.add_hermitian_var(label, factors, field)?;
        self.cones.push(PsdConstraint { var: id, map: ConeMap::Identity });
        Ok(id)
    }

    /// Hermitian (or real symmetric) variable with no implicit cone; at least one
    /// [`require_psd`](Self::require_psd) constraint must be attached before solving.
    pub fn add_hermitian_var(&mut self, label: &str, factors: Vec<usize>, field: Field) -> Result<VarId> {
        let dim: usize = factors.iter().product();
        if dim == 0 {
            return Err(Error::Model(format!("variable `{label}` has zero dimension")));
        }
        let id = VarId(self.vars.len());
        self.claim(label, Label::Var(id))?;
        self.vars.push(MatrixVar { label: label.to_string(), dim, field, factors });
        Ok(id)
    }

    pub fn add_scalar(&mut self, label: &str, kind: ScalarKind) -> Result<ScalarId> {
        let id = ScalarId(self.scalars.len());
        self.claim(label, Label::Scalar(id))?;
        self.scalars.push(ScalarVar { label: label.to_string(), kind });
        Ok(id)
    }

    pub fn add_free_scalar(&mut self, label: &str) -> Result<ScalarId> {
        self.add_scalar(label, ScalarKind::Free)
    }

    pub fn require_psd(&mut self, var: VarId, map: ConeMap) -> Result<()> {
        let v = self.vars.get(var.0).ok_or_else(|| Error::Model(format!("dangling variable reference {}", var.0)))?;
        if let ConeMap::PartialTranspose(f) = map {
            if f >= v.factors.len() {
                return Err(Error::Model(format!("variable `{}` has no factor {f}", v.label)));
            }
        }
        self.cones.push(PsdConstraint { var, map });
        Ok(())
    }

    pub fn var(&self, label: &str) -> Result<VarId> {
        match self.labels.get(label) {
            Some(Label::Var(v)) => Ok(*v),
            _ => Err(Error::Model(format!("undeclared variable `{label}`"))),
        }
    }

    pub fn scalar(&self, label: &str) -> Result<ScalarId> {
        match self.labels.get(label) {
            Some(Label::Scalar(s)) => Ok(*s),
            _ => Err(Error::Model(format!("undeclared scalar `{label}`"))),
        }
    }

    pub fn var_info(&self, var: VarId) -> &MatrixVar {
        &self.vars[var.0]
    }

    pub fn vars(&self) -> &[MatrixVar] {
        &self.vars
    }

    pub fn scalars(&self) -> &[ScalarVar] {
        &self.scalars
    }

    pub fn equalities(&self) -> &[Equality] {
        &self.equalities
    }

    pub fn has_objective(&self) -> bool {
        self.objective.is_some()
    }

    fn check_expr(&self, expr: &LinExpr) -> Result<()> {
        for (v, k) in &expr.mats {
            let var = self.vars.get(v.0).ok_or_else(|| Error::Model(format!("dangling variable reference {}", v.0)))?;
            if k.nrows() != var.dim || k.ncols() != var.dim {
                return Err(Error::Model(format!(
                    "coefficient of size {}x{} for {}-dimensional variable `{}`",
                    k.nrows(),
                    k.ncols(),
                    var.dim,
                    var.label
                )));
            }
            if k.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
                return Err(Error::Model("non-finite coefficient".into()));
            }
        }
        for (s, c) in &expr.scalars {
            if s.0 >= self.scalars.len() {
                return Err(Error::Model(format!("dangling scalar reference {}", s.0)));
            }
            if !c.is_finite() {
                return Err(Error::Model("non-finite coefficient".into()));
            }
        }
        Ok(())
    }

    pub fn add_equality(&mut self, expr: LinExpr, rhs: f64) -> Result<usize> {
        self.add_equality_of_kind(expr, rhs, EqualityKind::Data, None)
    }

    pub fn add_structural_equality(&mut self, expr: LinExpr, rhs: f64) -> Result<usize> {
        self.add_equality_of_kind(expr, rhs, EqualityKind::Structural, None)
    }

    pub fn add_equality_of_kind(&mut self, expr: LinExpr, rhs: f64, kind: EqualityKind, label: Option<String>) -> Result<usize> {
        self.check_expr(&expr)?;
        if !rhs.is_finite() {
            return Err(Error::Model("non-finite right-hand side".into()));
        }
        self.equalities.push(Equality { label, expr, rhs, kind });
        Ok(self.equalities.len() - 1)
    }

    pub fn set_objective(&mut self, sense: Sense, expr: LinExpr) -> Result<()> {
        self.check_expr(&expr)?;
        self.objective = Some((sense, expr));
        Ok(())
    }

    pub fn clear_objective(&mut self) {
        self.objective = None;
    }

    /// Multiply every equality (coefficients and constant) by `f`.
    pub fn scale_equalities(&mut self, f: f64) {
        for e in &mut self.equalities {
            e.expr = std::mem::take(&mut e.expr).scaled(f);
            e.rhs *= f;
        }
    }
}
