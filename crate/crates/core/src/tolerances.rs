//! Numerical tolerances shared across the crate.

/// Maximum entrywise deviation from Hermiticity accepted on construction.
pub const HERMITICITY: f64 = 1e-12;

/// Eigendecomposition reconstruction tolerance (Frobenius norm).
pub const EIG_RECONSTRUCTION: f64 = 1e-10;

/// Trace and positivity slack when validating density matrices and POVMs.
pub const STATE_VALIDATION: f64 = 1e-9;

/// Probabilities of a behaviour must sum to one per input tuple within this.
pub const NORMALIZATION: f64 = 1e-9;

/// Eigenvalues of the Gram matrix below this (relative to the largest) count as zero.
pub const GRAM_RANK: f64 = 1e-10;

/// Condition number above which tomographic inversion is refused.
pub const MAX_GRAM_CONDITION: f64 = 1e8;

/// Feasibility margin at or below which a phase-I problem counts as feasible.
pub const FEASIBLE_MARGIN: f64 = 1e-7;

/// Feasibility margin at or above which a phase-I problem counts as infeasible.
pub const INFEASIBLE_MARGIN: f64 = 1e-5;

/// Optimal solves must reach this primal residual (max norm).
pub const PRIMAL_RESIDUAL: f64 = 1e-8;

/// Optimal solves must reach this relative duality gap.
pub const RELATIVE_GAP: f64 = 1e-7;

/// Quantifier values in `[-CLAMP, 0)` are reported as zero.
pub const CLAMP: f64 = 1e-8;

/// Eigenvalues of a reconstructed effective POVM element below this fraction of
/// the largest one are treated as zero when restricting operators to its support.
pub const SUPPORT_RANK: f64 = 1e-9;

/// Largest Hilbert-space dimension a single relaxation variable may have.
pub const MAX_RELAXATION_DIM: usize = 64;
