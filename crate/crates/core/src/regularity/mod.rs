//! Hölder-type regularity estimates, openness and extremum tests.

mod audit;
mod envelope;
mod estimators;
mod extremum;
mod openness;
mod sampling;

use serde::Serialize;

pub use audit::{equivalence_audit, AuditCheck, AuditReport, Consistency};
pub use envelope::{fit_holder_envelope, HolderFit, WindowFit, ALPHA_MIN, ALPHA_STABILITY, MIN_SAMPLES, SAFETY, WINDOW_BINS};
pub(crate) use estimators::pseudo_holder_with;
pub use estimators::{
    estimate_metric_regularity, estimate_pseudo_holder, estimate_subregularity, Estimate, PseudoMode,
};
pub use extremum::{test_extremum_free, ExtremumReport, ExtremumVerdict};
pub use openness::{test_openness, JumpWitness, OpennessReport, OpennessVerdict};
pub use sampling::{ball_grid, shell_points, EstimatorOptions, SampleSet};

use crate::report::finite_or_str;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Verdict {
    Holder,
    NotHolder,
    Inconclusive,
}

/// One paired observation `(s, r)` of the inequality `r ≤ c·s^α`, where `s`
/// is the right-hand distance and `r` the left-hand one. `x` and `y` index
/// the point tables of the owning [`SampleSet`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RegularitySample {
    #[serde(serialize_with = "finite_or_str")]
    pub s: f64,
    #[serde(serialize_with = "finite_or_str")]
    pub r: f64,
    pub x: u32,
    pub y: u32,
}

impl RegularitySample {
    pub fn new(s: f64, r: f64) -> Self {
        RegularitySample { s, r, x: 0, y: 0 }
    }
}
