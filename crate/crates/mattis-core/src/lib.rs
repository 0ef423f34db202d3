//! Numerical core for high-temperature mean-field spin glasses with a Mattis
//! interaction: replica-symmetric and cascade functionals, their fixed points,
//! Hamilton–Jacobi checks, large-deviation quantities and an exact finite-N
//! enumeration oracle.
#![no_std]
// Index loops mirror the formulas, and negated comparisons reject NaN.
#![allow(clippy::needless_range_loop, clippy::neg_cmp_op_on_partial_ord, clippy::type_complexity)]

extern crate alloc;

pub mod cascade;
pub mod error;
pub mod expr;
pub mod hj;
pub mod ldp;
pub mod linalg;
pub mod model;
pub mod numeric;
pub mod optim;
pub mod oracle;
pub mod path;
pub mod quadrature;
pub mod rbm;
pub mod rs;
mod site;
pub mod xi;

pub use error::{Error, Result};
pub use linalg::SymMatrix;
pub use model::{DiscreteMeasure, Mode, ModelSpec, SiteModel, Species, Structure};
pub use path::PiecewisePath;
pub use xi::{Monomial, TStarBound, XiPoly};
