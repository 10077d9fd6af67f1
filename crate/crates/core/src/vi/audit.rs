//! Cross-checks of the equivalent stability conditions for a parametric VI.

use serde::Serialize;

use super::solve::ViSolver;
use super::sweep::{sweep_solution_map, SweepReport};
use super::{NormalMap, VIProblem};
use crate::error::Result;
use crate::map_model::{AnalysisBox, MapModel};
use crate::regularity::{
    equivalence_audit, pseudo_holder_with, AuditCheck, AuditReport, Consistency, EstimatorOptions, HolderFit, PseudoMode,
};

pub const LOCAL_CLOSEDNESS_NOTE: &str =
    "local closedness of dom S and range F is not tested numerically; it is excluded from the consistency flag";

#[derive(Debug, Clone, Serialize)]
pub struct ViAuditReport {
    pub checks: Vec<AuditCheck>,
    pub consistency: Consistency,
    pub local_closedness: String,
    pub sweep: SweepReport,
    pub solution_pseudo_holder_full: HolderFit,
    /// Audit of the normal map `𝓕` at `−pstar` over `ubox`.
    pub normal_map: AuditReport,
}

/// Evaluates, on one set of boxes: lower semicontinuity of `𝒮` (from a
/// sweep over `p_grid`), full and lower pseudo-Hölder continuity of `𝒮` at
/// `pstar`, openness and metric regularity of `𝓕`, and full and lower
/// pseudo-Hölder continuity of `𝓕⁻¹` at `−pstar`.
pub fn vi_equivalence_audit(
    problem: &VIProblem,
    ubox: &AnalysisBox,
    p_grid: &AnalysisBox,
    pstar: &[f64],
    eps: f64,
    opts: &EstimatorOptions,
) -> Result<ViAuditReport> {
    let sweep = sweep_solution_map(problem, p_grid, ubox, opts.tol, Some(pstar), Some(eps), opts)?;
    let normal = NormalMap::new(problem.clone());
    let full = {
        let solver = ViSolver::new(&normal, ubox, opts.tol)?;
        match pseudo_holder_with(&solver, pstar, eps, PseudoMode::Full, opts) {
            Ok(e) => e.fit,
            Err(e @ (crate::Error::NotInDomain { .. } | crate::Error::ClosedGraph { .. })) => {
                HolderFit::inconclusive(0, format!("aborted: {e}"))
            }
            Err(e) => return Err(e),
        }
    };

    let ystar: Vec<f64> = pstar.iter().map(|v| -v).collect();
    let ybox = AnalysisBox {
        lo: p_grid.hi.iter().map(|v| -v).collect(),
        hi: p_grid.lo.iter().map(|v| -v).collect(),
        resolution: p_grid.resolution,
    };
    let fmodel = MapModel::single_valued(normal);
    let normal_map = equivalence_audit(&fmodel, &ystar, ubox, &ybox, eps, true, opts)?;

    let lsc = &sweep.lsc;
    let mut checks = vec![
        AuditCheck {
            condition: "solution_map_lower_semicontinuous".into(),
            verdict: match lsc {
                super::LscVerdict::Lsc => "LSC".into(),
                super::LscVerdict::NotLsc { .. } => "NotLSC".into(),
                super::LscVerdict::Inconclusive { .. } => "Inconclusive".into(),
            },
            positive: lsc.positive(),
        },
        AuditCheck::holder("solution_map_pseudo_holder", &full),
        AuditCheck::holder("solution_map_lower_pseudo_holder", &sweep.holder_fit),
    ];
    let renamed = ["normal_map_open", "normal_map_metrically_regular", "normal_map_inverse_pseudo_holder", "normal_map_inverse_lower_pseudo_holder"];
    for (c, name) in normal_map.checks.iter().zip(renamed) {
        checks.push(AuditCheck {
            condition: name.into(),
            ..c.clone()
        });
    }
    let flags: Vec<Option<bool>> = checks.iter().map(|c| c.positive).collect();
    Ok(ViAuditReport {
        consistency: Consistency::of(&flags),
        checks,
        local_closedness: LOCAL_CLOSEDNESS_NOTE.into(),
        sweep,
        solution_pseudo_holder_full: full,
        normal_map,
    })
}
