//! Numerical core for decreased-individual-sharpness training across domains.
//!
//! The crate provides multi-domain objectives, the ERM / SAM / DGSAM update
//! rules, sharpness and curvature estimators, and worst-case risk tools for
//! finite-support distributions.

// `!(x > 0.0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod numeric;
pub mod objectives;
pub mod optimizers;
pub mod robust;
pub mod sharpness;

pub use error::{Error, Result};
pub use numeric::{ParamVec, SeededRng};
