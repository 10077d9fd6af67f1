use thiserror::Error;

use crate::expr::ExprError;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Expr(#[from] ExprError),

    #[error("dimension mismatch in {context}: expected {expected}, got {got}")]
    Dimension {
        context: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("invalid {what}: {reason}")]
    Invalid { what: &'static str, reason: String },

    #[error("polyhedron is infeasible: {0}")]
    Infeasible(String),

    #[error("point {point:?} is not in the range of the map within the analysis box")]
    NotInRange { point: Vec<f64> },

    #[error("point {point:?} is not in the domain of the map within the analysis box")]
    NotInDomain { point: Vec<f64> },

    #[error("closed-graph violation at x = {x:?}, y = {y:?}: dist(y, F(x)) = 0 but dist(x, F^-1(y)) = {r}")]
    ClosedGraph { x: Vec<f64>, y: Vec<f64>, r: f64 },

    #[error("fixture error at `{path}`: {message}")]
    Fixture { path: String, message: String },

    #[error("internal consistency error: {0}")]
    Consistency(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn dim(context: &'static str, expected: usize, got: usize) -> Self {
        Error::Dimension {
            context,
            expected,
            got,
        }
    }

    pub(crate) fn fixture(path: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Fixture {
            path: path.into(),
            message: message.into(),
        }
    }
}
