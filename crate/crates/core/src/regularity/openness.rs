//! Openness via continuity of `(x, y) ↦ dist(x, F⁻¹(y))` on `range F`.

use rayon::prelude::*;
use serde::Serialize;

use crate::error::Result;
use crate::map_model::{AnalysisBox, ImageOracle, MapModel, PointSet};
use crate::metrics::dist_point_set;

/// Refinement levels tried per candidate before giving up.
const MAX_LEVELS: usize = 200;
/// Candidate edges refined, largest oscillation first.
const MAX_CANDIDATES: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum OpennessVerdict {
    Open,
    NotOpen,
    Inconclusive,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct JumpWitness {
    /// A preimage point of `y` with no nearby preimage across the jump.
    pub x: Vec<f64>,
    /// `y` on the side of the jump where `x` is a preimage.
    pub y: Vec<f64>,
    /// Unit direction from `y` across the jump.
    pub direction: Vec<f64>,
    pub jump: f64,
    pub levels: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ModulusRow {
    pub level: usize,
    pub step: f64,
    pub max_oscillation: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OpennessReport {
    pub verdict: OpennessVerdict,
    pub witness: Option<JumpWitness>,
    pub modulus_table: Vec<ModulusRow>,
    /// Oscillation threshold on the base grid.
    pub eta: f64,
    pub candidates: usize,
    pub resolved: usize,
    pub y_points_in_range: usize,
}

enum Outcome {
    Resolved,
    Persistent(JumpWitness),
    Unresolved,
}

struct Refiner<'a> {
    pre: &'a dyn ImageOracle,
    eta: f64,
}

impl Refiner<'_> {
    fn g(&self, x: &[f64], y: &[f64]) -> Option<f64> {
        let set: PointSet = self.pre.image(y).ok()?;
        if set.is_empty() {
            return None;
        }
        Some(dist_point_set(x, &set).value())
    }

    /// Bisects `[ya, yb]`, following the half with the larger oscillation.
    /// Returns the outcome and the oscillation per level.
    fn refine(&self, x: &[f64], ya: &[f64], yb: &[f64], ga: f64, gb: f64) -> (Outcome, Vec<f64>) {
        let osc0 = (ga - gb).abs();
        let (mut ya, mut yb, mut ga, mut gb) = (ya.to_vec(), yb.to_vec(), ga, gb);
        let mut history = Vec::new();
        for _ in 0..MAX_LEVELS {
            let ym: Vec<f64> = ya.iter().zip(&yb).map(|(a, b)| 0.5 * (a + b)).collect();
            if ym == ya || ym == yb {
                break;
            }
            let Some(gm) = self.g(x, &ym) else {
                return (Outcome::Unresolved, history);
            };
            let (left, right) = ((ga - gm).abs(), (gm - gb).abs());
            let osc = if left >= right {
                yb = ym;
                gb = gm;
                left
            } else {
                ya = ym;
                ga = gm;
                right
            };
            history.push(osc);
            if osc <= 0.25 * osc0 {
                return (Outcome::Resolved, history);
            }
        }
        let persistent = history.len() >= 3 && history.iter().all(|&o| o >= 0.5 * osc0 && o > self.eta);
        if persistent {
            // report the preimage point that vanishes across the jump
            let (Ok(sa), Ok(sb)) = (self.pre.image(&ya), self.pre.image(&yb)) else {
                return (Outcome::Unresolved, history);
            };
            let farthest = |from: &PointSet, to: &PointSet| {
                from.points()
                    .iter()
                    .map(|w| (dist_point_set(w, to).value(), w.clone()))
                    .max_by(|a, b| a.0.total_cmp(&b.0))
            };
            let (near, far, (jump, w)) = match (farthest(&sa, &sb), farthest(&sb, &sa)) {
                (Some(a), Some(b)) if b.0 > a.0 => (yb.clone(), ya.clone(), b),
                (Some(a), _) => (ya.clone(), yb.clone(), a),
                (None, Some(b)) => (yb.clone(), ya.clone(), b),
                (None, None) => (ya.clone(), yb.clone(), (*history.last().unwrap(), x.to_vec())),
            };
            let d: Vec<f64> = near.iter().zip(&far).map(|(a, b)| b - a).collect();
            let len = crate::linalg::norm(&d);
            let witness = JumpWitness {
                x: w,
                y: near,
                direction: d.iter().map(|v| v / len).collect(),
                jump,
                levels: history.len(),
            };
            (Outcome::Persistent(witness), history)
        } else {
            (Outcome::Unresolved, history)
        }
    }
}

/// Scans `g(x, y) = dist(x, F⁻¹(y) ∩ xbox)` over the grid of `xbox` times the
/// grid of `ybox` restricted to `range F`. Adjacent `y` pairs whose
/// oscillation exceeds `η = 10·(h_y / diam(ybox))·diam(xbox)` are refined by
/// bisection until the oscillation either decays below a quarter of its
/// initial value or persists to floating-point resolution.
pub fn test_openness(map: &MapModel, xbox: &AnalysisBox, ybox: &AnalysisBox, tol: f64) -> Result<OpennessReport> {
    let pre = map.inverse_oracle(xbox, tol)?;
    if ybox.dim() != map.m() {
        return Err(crate::error::Error::dim("openness y box", map.m(), ybox.dim()));
    }
    ybox.validate()?;
    let xs = xbox.points();
    let ys = ybox.points();
    let sets: Vec<Option<PointSet>> = ys
        .par_iter()
        .map(|y| pre.image(y).ok().filter(|s| !s.is_empty()))
        .collect();
    let in_range = sets.iter().filter(|s| s.is_some()).count();
    let m = ybox.dim();
    let res = ybox.resolution;
    let h_max = (0..m).map(|a| ybox.step(a)).fold(0.0, f64::max);
    let eta = 10.0 * (h_max / ybox.diameter()) * xbox.diameter();

    // neighbour along axis a of flat index i, if any
    let stride = |a: usize| res.pow((m - 1 - a) as u32);
    let neighbour = |i: usize, a: usize| {
        let coord = (i / stride(a)) % res;
        (coord + 1 < res).then(|| i + stride(a))
    };

    // per x: (max oscillation, candidate edges (osc, yi, axis))
    let scans: Vec<(f64, Vec<(f64, usize, usize)>)> = xs
        .par_iter()
        .map(|x| {
            let g: Vec<Option<f64>> = sets
                .iter()
                .map(|s| s.as_ref().map(|s| dist_point_set(x, s).value()))
                .collect();
            let mut max_osc = 0.0f64;
            let mut cands = Vec::new();
            for i in 0..ys.len() {
                let Some(gi) = g[i] else { continue };
                for a in 0..m {
                    let Some(j) = neighbour(i, a) else { continue };
                    let Some(gj) = g[j] else { continue };
                    let osc = (gi - gj).abs();
                    max_osc = max_osc.max(osc);
                    if osc > eta {
                        cands.push((osc, i, a));
                    }
                }
            }
            (max_osc, cands)
        })
        .collect();

    let base_max = scans.iter().map(|s| s.0).fold(0.0, f64::max);
    // keep the x with the largest oscillation per edge
    let mut per_edge: std::collections::BTreeMap<(usize, usize), (f64, usize)> = std::collections::BTreeMap::new();
    for (xi, (_, cands)) in scans.iter().enumerate() {
        for &(osc, yi, a) in cands {
            let e = per_edge.entry((yi, a)).or_insert((osc, xi));
            if osc > e.0 {
                *e = (osc, xi);
            }
        }
    }
    let mut edges: Vec<(f64, usize, usize, usize)> =
        per_edge.into_iter().map(|((yi, a), (osc, xi))| (osc, yi, a, xi)).collect();
    edges.sort_by(|p, q| q.0.total_cmp(&p.0).then((p.1, p.2, p.3).cmp(&(q.1, q.2, q.3))));
    let candidates = edges.len();
    edges.truncate(MAX_CANDIDATES);

    let refiner = Refiner { pre: pre.as_ref(), eta };
    let results: Vec<(Outcome, Vec<f64>)> = edges
        .par_iter()
        .map(|&(_, yi, a, xi)| {
            let j = neighbour(yi, a).expect("candidate edge has a neighbour");
            let x = &xs[xi];
            let ga = dist_point_set(x, sets[yi].as_ref().unwrap()).value();
            let gb = dist_point_set(x, sets[j].as_ref().unwrap()).value();
            refiner.refine(x, &ys[yi], &ys[j], ga, gb)
        })
        .collect();

    let depth = results.iter().map(|r| r.1.len()).max().unwrap_or(0);
    let mut modulus_table = vec![ModulusRow {
        level: 0,
        step: h_max,
        max_oscillation: base_max,
    }];
    for level in 1..=depth {
        let mx = results
            .iter()
            .filter_map(|r| r.1.get(level - 1))
            .fold(0.0f64, |a, &b| a.max(b));
        modulus_table.push(ModulusRow {
            level,
            step: h_max / 2f64.powi(level as i32),
            max_oscillation: mx,
        });
    }

    let mut witness: Option<JumpWitness> = None;
    let mut resolved = 0;
    let mut unresolved = candidates - results.len();
    for (outcome, _) in results {
        match outcome {
            Outcome::Resolved => resolved += 1,
            Outcome::Unresolved => unresolved += 1,
            Outcome::Persistent(w) => {
                if witness.as_ref().map_or(true, |b| w.jump > b.jump) {
                    witness = Some(w);
                }
            }
        }
    }
    let verdict = if witness.is_some() {
        OpennessVerdict::NotOpen
    } else if unresolved == 0 {
        OpennessVerdict::Open
    } else {
        OpennessVerdict::Inconclusive
    };
    Ok(OpennessReport {
        verdict,
        witness,
        modulus_table,
        eta,
        candidates,
        resolved,
        y_points_in_range: in_range,
    })
}
