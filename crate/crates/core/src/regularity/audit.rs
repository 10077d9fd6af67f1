//! Cross-checks of the four equivalent regularity conditions.

use serde::Serialize;

use super::estimators::{estimate_metric_regularity, estimate_pseudo_holder, PseudoMode};
use super::openness::{test_openness, OpennessReport, OpennessVerdict};
use super::sampling::EstimatorOptions;
use super::{HolderFit, Verdict};
use crate::error::Result;
use crate::map_model::{AnalysisBox, MapModel};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Consistency {
    Consistent,
    Inconsistent,
}

impl Consistency {
    /// All positive or all negative is consistent; anything else is not.
    pub fn of(flags: &[Option<bool>]) -> Self {
        let all = |v: bool| flags.iter().all(|f| *f == Some(v));
        if !flags.is_empty() && (all(true) || all(false)) {
            Consistency::Consistent
        } else {
            Consistency::Inconsistent
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AuditCheck {
    pub condition: String,
    pub verdict: String,
    /// `None` when the check was inconclusive.
    pub positive: Option<bool>,
}

impl AuditCheck {
    pub fn holder(condition: &str, fit: &HolderFit) -> Self {
        AuditCheck {
            condition: condition.to_string(),
            verdict: format!("{:?}", fit.verdict),
            positive: match fit.verdict {
                Verdict::Holder => Some(true),
                Verdict::NotHolder => Some(false),
                Verdict::Inconclusive => None,
            },
        }
    }

    pub fn openness(condition: &str, rep: &OpennessReport) -> Self {
        AuditCheck {
            condition: condition.to_string(),
            verdict: format!("{:?}", rep.verdict),
            positive: match rep.verdict {
                OpennessVerdict::Open => Some(true),
                OpennessVerdict::NotOpen => Some(false),
                OpennessVerdict::Inconclusive => None,
            },
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct AuditReport {
    pub checks: Vec<AuditCheck>,
    pub consistency: Consistency,
    pub annotation: Option<String>,
    pub openness: OpennessReport,
    pub metric_regularity: HolderFit,
    pub pseudo_holder_full: HolderFit,
    pub pseudo_holder_lower: HolderFit,
}

pub const NON_SEMIALGEBRAIC_NOTE: &str =
    "map is not semialgebraic: the conditions need not be equivalent, so disagreement is expected";

/// Runs openness of `F`, metric regularity of `F` at `ystar`, and full and
/// lower pseudo-Hölder continuity of `F⁻¹` at `ystar`, all on the same boxes.
#[allow(clippy::too_many_arguments)]
pub fn equivalence_audit(
    map: &MapModel,
    ystar: &[f64],
    xbox: &AnalysisBox,
    ybox: &AnalysisBox,
    eps: f64,
    semialgebraic: bool,
    opts: &EstimatorOptions,
) -> Result<AuditReport> {
    let openness = test_openness(map, xbox, ybox, opts.tol)?;
    let metric = estimate_metric_regularity(map, ystar, xbox, eps, ybox, opts)?.fit;
    let inverse = map.clone().inverse();
    let full = estimate_pseudo_holder(&inverse, ystar, xbox, eps, PseudoMode::Full, opts)?.fit;
    let lower = estimate_pseudo_holder(&inverse, ystar, xbox, eps, PseudoMode::Lower, opts)?.fit;
    let checks = vec![
        AuditCheck::openness("open", &openness),
        AuditCheck::holder("metrically_regular", &metric),
        AuditCheck::holder("inverse_pseudo_holder", &full),
        AuditCheck::holder("inverse_lower_pseudo_holder", &lower),
    ];
    let flags: Vec<Option<bool>> = checks.iter().map(|c| c.positive).collect();
    let consistency = Consistency::of(&flags);
    let annotation = (!semialgebraic).then(|| NON_SEMIALGEBRAIC_NOTE.to_string());
    Ok(AuditReport {
        checks,
        consistency,
        annotation,
        openness,
        metric_regularity: metric,
        pseudo_holder_full: full,
        pseudo_holder_lower: lower,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn consistency_rule() {
        assert_eq!(Consistency::of(&[Some(true); 4]), Consistency::Consistent);
        assert_eq!(Consistency::of(&[Some(false); 4]), Consistency::Consistent);
        assert_eq!(Consistency::of(&[Some(true), Some(false)]), Consistency::Inconsistent);
        assert_eq!(Consistency::of(&[Some(true), None]), Consistency::Inconsistent);
    }

    #[test]
    fn cube_audit_is_consistent() {
        let f = MapModel::from_exprs(&["x1^3"]).unwrap();
        let k = AnalysisBox::new(vec![-1.0], vec![1.0], 64).unwrap();
        let rep = equivalence_audit(&f, &[0.0], &k, &k, 0.5, true, &EstimatorOptions::default()).unwrap();
        assert_eq!(rep.consistency, Consistency::Consistent, "{:?}", rep.checks);
        assert!(rep.checks.iter().all(|c| c.positive == Some(true)));
    }
}
