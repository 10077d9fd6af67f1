//! Sweeps of the solution map `p ↦ 𝒮(p)` over a parameter grid.

use rayon::prelude::*;
use serde::Serialize;

use super::solve::ViSolver;
use super::{NormalMap, VIProblem};
use crate::error::{Error, Result};
use crate::linalg::dist;
use crate::map_model::{AnalysisBox, ImageOracle, PointSet};
use crate::metrics::dist_point_set;
use crate::regularity::{pseudo_holder_with, EstimatorOptions, HolderFit, PseudoMode};

/// Bisection levels per lower-semicontinuity candidate.
const LSC_LEVELS: usize = 40;
/// Candidates refined, largest gap first.
const LSC_CANDIDATES: usize = 64;
/// Trailing levels over which a gap has to persist.
const LSC_PERSIST: usize = 3;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LscWitness {
    /// Parameter where a branch of solutions ends.
    pub p: Vec<f64>,
    /// Solution at `p` with no nearby solution across the gap.
    pub x: Vec<f64>,
    /// Parameter across the gap.
    pub p_across: Vec<f64>,
    pub gap: f64,
    pub levels: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "verdict")]
pub enum LscVerdict {
    #[serde(rename = "LSC")]
    Lsc,
    #[serde(rename = "NotLSC")]
    NotLsc { witness: LscWitness },
    Inconclusive { reason: String },
}

impl LscVerdict {
    pub fn positive(&self) -> Option<bool> {
        match self {
            LscVerdict::Lsc => Some(true),
            LscVerdict::NotLsc { .. } => Some(false),
            LscVerdict::Inconclusive { .. } => None,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepReport {
    pub p_grid: Vec<Vec<f64>>,
    pub solutions: Vec<PointSet>,
    pub cardinalities: Vec<usize>,
    pub max_cardinality: usize,
    pub lsc: LscVerdict,
    /// Lower pseudo-Hölder fit of `𝒮` at `pstar`.
    pub holder_fit: HolderFit,
    pub pstar: Vec<f64>,
    pub eps: f64,
}

enum Outcome {
    Resolved,
    Persistent(LscWitness),
    Unresolved,
}

/// Follows the branch through `x ∈ 𝒮(a)` toward `b`, bisecting into the
/// half where the gap sits.
fn refine(oracle: &dyn ImageOracle, a: &[f64], b: &[f64], x: &[f64], gap0: f64) -> Outcome {
    let (mut a, mut b, mut x) = (a.to_vec(), b.to_vec(), x.to_vec());
    let mut gaps = Vec::new();
    let mut widths = Vec::new();
    let mut gap = gap0;
    for _ in 0..LSC_LEVELS {
        let m: Vec<f64> = a.iter().zip(&b).map(|(u, v)| 0.5 * (u + v)).collect();
        if m == a || m == b {
            break;
        }
        let Ok(sm) = oracle.image(&m) else {
            return Outcome::Unresolved;
        };
        if sm.is_empty() {
            return Outcome::Unresolved;
        }
        let near = dist_point_set(&x, &sm).value();
        if near >= 0.5 * gap {
            b = m;
            gap = near;
        } else {
            let Some(next) = sm
                .points()
                .iter()
                .min_by(|p, q| dist(p, &x).total_cmp(&dist(q, &x)))
                .cloned()
            else {
                return Outcome::Unresolved;
            };
            x = next;
            a = m;
            let Ok(sb) = oracle.image(&b) else {
                return Outcome::Unresolved;
            };
            gap = dist_point_set(&x, &sb).value();
        }
        gaps.push(gap);
        widths.push(dist(&a, &b));
    }
    let tail = gaps.len().saturating_sub(LSC_PERSIST);
    let persistent = gaps.len() >= LSC_PERSIST
        && gaps[tail..]
            .iter()
            .zip(&widths[tail..])
            .all(|(&g, &w)| g >= 0.5 * gap0 && g > 10.0 * w.sqrt());
    if persistent {
        Outcome::Persistent(LscWitness {
            p: a,
            x,
            p_across: b,
            gap,
            levels: gaps.len(),
        })
    } else if gaps.last().map_or(true, |&g| g < 0.5 * gap0) {
        Outcome::Resolved
    } else {
        Outcome::Unresolved
    }
}

/// Lower semicontinuity of `𝒮` from solutions on the grid of `p_grid`.
///
/// For each `x ∈ 𝒮(p)` and grid neighbour `p′` with `𝒮(p′) ≠ ∅`, a gap
/// `dist(x, 𝒮(p′))` above `√h` is followed by bisection of `[p, p′]`.
/// The verdict is NotLSC when, over the last three levels, the gap stays
/// above half its initial value and above `10·√w` for the current width `w`.
pub fn test_lower_semicontinuity(oracle: &dyn ImageOracle, p_grid: &AnalysisBox, solutions: &[PointSet]) -> LscVerdict {
    let n = p_grid.dim();
    let res = p_grid.resolution;
    let points = p_grid.points();
    let stride = |a: usize| res.pow((n - 1 - a) as u32);
    let h = (0..n).map(|a| p_grid.step(a)).fold(0.0, f64::max);
    let mut cands: Vec<(f64, usize, usize, Vec<f64>)> = Vec::new();
    for i in 0..points.len() {
        for a in 0..n {
            let c = (i / stride(a)) % res;
            let mut nbrs = Vec::new();
            if c > 0 {
                nbrs.push(i - stride(a));
            }
            if c + 1 < res {
                nbrs.push(i + stride(a));
            }
            for j in nbrs {
                if solutions[j].is_empty() {
                    continue;
                }
                for x in solutions[i].points() {
                    let gap = dist_point_set(x, &solutions[j]).value();
                    if gap > h.sqrt() {
                        cands.push((gap, i, j, x.clone()));
                    }
                }
            }
        }
    }
    cands.sort_by(|p, q| q.0.total_cmp(&p.0).then((p.1, p.2).cmp(&(q.1, q.2))));
    let total = cands.len();
    cands.truncate(LSC_CANDIDATES);
    let outcomes: Vec<Outcome> = cands
        .par_iter()
        .map(|(gap, i, j, x)| refine(oracle, &points[*i], &points[*j], x, *gap))
        .collect();
    let mut best: Option<LscWitness> = None;
    let mut unresolved = total - outcomes.len();
    for o in outcomes {
        match o {
            Outcome::Resolved => {}
            Outcome::Unresolved => unresolved += 1,
            Outcome::Persistent(w) => {
                if best.as_ref().map_or(true, |b| w.gap > b.gap) {
                    best = Some(w);
                }
            }
        }
    }
    match best {
        Some(witness) => LscVerdict::NotLsc { witness },
        None if unresolved == 0 => LscVerdict::Lsc,
        None => LscVerdict::Inconclusive {
            reason: format!("{unresolved} of {total} gaps neither closed nor persisted"),
        },
    }
}

/// Solves the VI at every point of `p_grid`, records cardinalities, tests
/// lower semicontinuity and fits the lower pseudo-Hölder modulus of `𝒮` at
/// `pstar` (the grid centre when `None`) with radius `eps` (a quarter of the
/// grid diameter when `None`).
pub fn sweep_solution_map(
    problem: &VIProblem,
    p_grid: &AnalysisBox,
    ubox: &AnalysisBox,
    tol: f64,
    pstar: Option<&[f64]>,
    eps: Option<f64>,
    opts: &EstimatorOptions,
) -> Result<SweepReport> {
    if p_grid.dim() != problem.n() {
        return Err(Error::dim("parameter grid", problem.n(), p_grid.dim()));
    }
    p_grid.validate()?;
    let normal = NormalMap::new(problem.clone());
    let solver = ViSolver::new(&normal, ubox, tol)?;
    let p_points = p_grid.points();
    let solutions = p_points
        .par_iter()
        .map(|p| solver.solutions(p))
        .collect::<Result<Vec<PointSet>>>()?;
    let cardinalities: Vec<usize> = solutions.iter().map(PointSet::len).collect();
    let max_cardinality = cardinalities.iter().copied().max().unwrap_or(0);
    let lsc = test_lower_semicontinuity(&solver, p_grid, &solutions);

    let pstar = pstar.map_or_else(
        || p_grid.lo.iter().zip(&p_grid.hi).map(|(a, b)| 0.5 * (a + b)).collect(),
        <[f64]>::to_vec,
    );
    let eps = eps.unwrap_or(0.25 * p_grid.diameter());
    let holder_fit = match pseudo_holder_with(&solver, &pstar, eps, PseudoMode::Lower, opts) {
        Ok(e) => e.fit,
        Err(e @ (Error::NotInDomain { .. } | Error::ClosedGraph { .. })) => {
            HolderFit::inconclusive(0, format!("aborted: {e}"))
        }
        Err(e) => return Err(e),
    };
    Ok(SweepReport {
        p_grid: p_points,
        solutions,
        cardinalities,
        max_cardinality,
        lsc,
        holder_fit,
        pstar,
        eps,
    })
}
