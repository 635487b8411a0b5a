//! Numerical toolkit for isolated singularities of polyharmonic functions on
//! the punctured unit ball.

pub mod calculus;
pub mod error;
pub mod field;
pub mod geometry;
pub mod growth;
pub mod kernel;
pub mod navier;
pub mod poly;
pub mod removability;

pub use error::{Error, Result};
pub use field::{ExprField, FieldExpr, FieldMeta, FnField, ScalarField};
pub use geometry::{Point, QuadratureRule};
