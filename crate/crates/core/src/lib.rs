//! Numerical analysis of Hölder-type regularity for set-valued maps,
//! Łojasiewicz-type inequalities and parametric variational inequalities.

pub mod error;
pub mod expr;
pub(crate) mod linalg;
pub mod map_model;
pub mod metrics;

pub use error::{Error, Result};
pub mod regularity;
pub mod report;
pub mod lojasiewicz;
pub mod vi;
pub mod cli;
