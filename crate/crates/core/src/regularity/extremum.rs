//! Local extremum search for scalar maps.

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::map_model::{AnalysisBox, MapModel, VectorMap};

const MAX_CANDIDATES: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum ExtremumKind {
    Min,
    Max,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExtremumWitness {
    pub x: Vec<f64>,
    pub value: f64,
    pub kind: ExtremumKind,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "verdict")]
pub enum ExtremumVerdict {
    NoExtremum,
    HasExtremum { witnesses: Vec<ExtremumWitness> },
    Inconclusive { reason: String },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExtremumReport {
    #[serde(flatten)]
    pub verdict: ExtremumVerdict,
    /// Grid points that were discrete local extrema.
    pub candidates: usize,
    /// Neighbourhood radii used for confirmation, relative to the grid step.
    pub radii: [f64; 3],
}

impl ExtremumReport {
    pub fn has_extremum(&self) -> Option<bool> {
        match self.verdict {
            ExtremumVerdict::NoExtremum => Some(false),
            ExtremumVerdict::HasExtremum { .. } => Some(true),
            ExtremumVerdict::Inconclusive { .. } => None,
        }
    }
}

fn offsets(n: usize) -> Vec<Vec<i64>> {
    let total = 3usize.pow(n as u32);
    (0..total)
        .filter(|&k| k != total / 2)
        .map(|mut k| {
            let mut o = vec![0i64; n];
            for v in o.iter_mut() {
                *v = (k % 3) as i64 - 1;
                k /= 3;
            }
            o
        })
        .collect()
}

struct Scalar<'a>(&'a dyn VectorMap);

impl Scalar<'_> {
    fn at(&self, x: &[f64]) -> Option<f64> {
        self.0.eval(x).ok().map(|v| v[0])
    }
}

/// Moves `x` downhill on `sign·f` by compass search with a shrinking step.
fn descend(f: &Scalar, sign: f64, x: &[f64], step: f64, k: &AnalysisBox) -> Option<(Vec<f64>, f64)> {
    let mut x = x.to_vec();
    let mut fx = sign * f.at(&x)?;
    let mut h = 0.5 * step;
    let floor = 1e-12 * step;
    while h > floor {
        let mut moved = false;
        for j in 0..x.len() {
            for s in [1.0, -1.0] {
                let mut c = x.clone();
                c[j] += s * h;
                if !k.contains(&c, 0.0) {
                    continue;
                }
                if let Some(v) = f.at(&c) {
                    if sign * v < fx {
                        x = c;
                        fx = sign * v;
                        moved = true;
                    }
                }
            }
        }
        if !moved {
            h *= 0.5;
        }
    }
    Some((x, sign * fx))
}

/// Finds local extrema of a scalar map on the interior of `K`.
///
/// Discrete extrema of the grid are refined by compass search and confirmed
/// when `f(x*)` is no larger (or no smaller) than every neighbour sample at
/// radii `h`, `h/4` and `h/16` in all `3ⁿ − 1` grid directions. Plateaus
/// count: a non-strict comparison is enough.
pub fn test_extremum_free(map: &MapModel, k: &AnalysisBox, _tol: f64) -> Result<ExtremumReport> {
    let f = map.as_single_valued().ok_or(Error::Invalid {
        what: "map",
        reason: "extremum test needs a single-valued map".into(),
    })?;
    if f.dim_out() != 1 {
        return Err(Error::dim("extremum test output", 1, f.dim_out()));
    }
    if k.dim() != f.dim_in() {
        return Err(Error::dim("extremum box", f.dim_in(), k.dim()));
    }
    k.validate()?;
    let f = Scalar(f.as_ref());
    let n = k.dim();
    let res = k.resolution;
    let radii = [1.0, 0.25, 1.0 / 16.0];
    let values: Vec<Option<f64>> = (0..k.num_points()).into_par_iter().map(|i| f.at(&k.point(i))).collect();
    let offs = offsets(n);
    let coords = |mut i: usize| {
        let mut c = vec![0usize; n];
        for a in (0..n).rev() {
            c[a] = i % res;
            i /= res;
        }
        c
    };
    let flat = |c: &[i64]| c.iter().fold(0usize, |acc, &v| acc * res + v as usize);

    let mut cands: Vec<(usize, ExtremumKind)> = Vec::new();
    for i in 0..values.len() {
        let c = coords(i);
        if c.iter().any(|&v| v == 0 || v + 1 == res) {
            continue;
        }
        let Some(v) = values[i] else { continue };
        let nb: Option<Vec<f64>> = offs
            .iter()
            .map(|o| {
                let cc: Vec<i64> = c.iter().zip(o).map(|(&a, &b)| a as i64 + b).collect();
                values[flat(&cc)]
            })
            .collect();
        let Some(nb) = nb else { continue };
        if nb.iter().all(|&w| v <= w) {
            cands.push((i, ExtremumKind::Min));
        } else if nb.iter().all(|&w| v >= w) {
            cands.push((i, ExtremumKind::Max));
        }
    }
    let candidates = cands.len();
    cands.truncate(MAX_CANDIDATES);
    let h = (0..n).map(|a| k.step(a)).fold(f64::INFINITY, f64::min);

    let checked: Vec<Option<Option<ExtremumWitness>>> = cands
        .par_iter()
        .map(|&(i, kind)| {
            let sign = if kind == ExtremumKind::Min { 1.0 } else { -1.0 };
            let (x, fx) = descend(&f, sign, &k.point(i), h, k)?;
            for r in radii {
                for o in &offs {
                    let p: Vec<f64> = x.iter().zip(o).map(|(a, &b)| a + r * h * b as f64).collect();
                    let v = f.at(&p)?;
                    if sign * v < sign * fx {
                        return Some(None);
                    }
                }
            }
            Some(Some(ExtremumWitness { x, value: fx, kind }))
        })
        .collect();

    let mut witnesses = Vec::new();
    let mut failures = 0;
    for c in checked {
        match c {
            Some(Some(w)) => witnesses.push(w),
            Some(None) => {}
            None => failures += 1,
        }
    }
    let verdict = if !witnesses.is_empty() {
        ExtremumVerdict::HasExtremum { witnesses }
    } else if failures > 0 {
        ExtremumVerdict::Inconclusive {
            reason: format!("{failures} candidates left the domain during refinement"),
        }
    } else {
        ExtremumVerdict::NoExtremum
    };
    Ok(ExtremumReport {
        verdict,
        candidates,
        radii,
    })
}
