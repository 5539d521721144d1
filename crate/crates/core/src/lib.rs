//! Measurement-device-independent entanglement and randomness certification.

// Negated comparisons are there to catch NaN; indexed loops walk several parallel arrays.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop, clippy::type_complexity)]

pub mod certify;
pub mod conic;
pub mod error;
pub mod exec;
pub mod linalg;
pub mod oracle;
pub mod quantify;
pub mod quantum;
pub mod randomness;
pub mod relax;
pub mod scenario;
pub mod tolerances;

pub use error::{Error, Result};
