//! Sample generation shared by the estimators.

use serde::Serialize;

use super::RegularitySample;
use crate::error::{Error, Result};
use crate::linalg::{dist, norm};
use crate::map_model::AnalysisBox;
use crate::metrics::PREIMAGE_TOL;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EstimatorOptions {
    pub tol: f64,
    /// Dyadic shells `center + radius·2^-k·d`, `k = 0..shell_depth`.
    pub shell_depth: usize,
    /// Grid points per axis for sampling a ball.
    pub ball_resolution: usize,
}

impl Default for EstimatorOptions {
    fn default() -> Self {
        EstimatorOptions {
            tol: PREIMAGE_TOL,
            shell_depth: 300,
            ball_resolution: 17,
        }
    }
}

/// Samples reduced to what the envelope fit can use, plus the point tables
/// they index.
#[derive(Debug, Clone, Default, Serialize)]
pub struct SampleSet {
    pub xs: Vec<Vec<f64>>,
    pub ys: Vec<Vec<f64>>,
    /// Per dyadic bin of `s`, the Pareto front of (small `s`, large `r`).
    /// Every other sample is dominated in both the envelope and the
    /// violation check.
    pub samples: Vec<RegularitySample>,
    /// Number of samples before reduction.
    pub total: usize,
}

impl SampleSet {
    pub(crate) fn new(xs: Vec<Vec<f64>>, ys: Vec<Vec<f64>>, chunks: Vec<Vec<RegularitySample>>) -> Self {
        let total = chunks.iter().map(Vec::len).sum();
        let all: Vec<RegularitySample> = chunks.into_iter().flatten().collect();
        SampleSet {
            xs,
            ys,
            samples: pareto_reduce(all),
            total,
        }
    }
}

fn bin_of(s: f64) -> i32 {
    if s > 0.0 && s.is_finite() {
        super::envelope::dyadic_bin(s)
    } else {
        i32::MIN
    }
}

/// Keeps, per dyadic bin, the samples not dominated by one with smaller or
/// equal `s` and larger or equal `r`. Output order is canonical, so the
/// result does not depend on the input order.
pub(crate) fn pareto_reduce(mut v: Vec<RegularitySample>) -> Vec<RegularitySample> {
    v.sort_by(|a, b| {
        bin_of(a.s)
            .cmp(&bin_of(b.s))
            .then(a.s.total_cmp(&b.s))
            .then(b.r.total_cmp(&a.r))
            .then(a.x.cmp(&b.x))
            .then(a.y.cmp(&b.y))
    });
    let mut out = Vec::new();
    let mut cur_bin = None;
    let mut best_r = f64::NEG_INFINITY;
    for p in v {
        let b = bin_of(p.s);
        if cur_bin != Some(b) {
            cur_bin = Some(b);
            best_r = f64::NEG_INFINITY;
        }
        if p.r > best_r {
            best_r = p.r;
            out.push(p);
        }
    }
    out
}

fn directions(n: usize) -> Vec<Vec<f64>> {
    let mut dirs = Vec::new();
    for i in 0..n {
        for s in [1.0, -1.0] {
            let mut d = vec![0.0; n];
            d[i] = s;
            dirs.push(d);
        }
    }
    if n >= 2 {
        let w = 1.0 / (n as f64).sqrt();
        if n <= 3 {
            for mask in 0..(1usize << n) {
                dirs.push((0..n).map(|i| if mask >> i & 1 == 1 { -w } else { w }).collect());
            }
        } else {
            dirs.push(vec![w; n]);
            dirs.push(vec![-w; n]);
        }
    }
    dirs
}

/// Points `center + radius·2^-k·d` along axis and diagonal directions,
/// stopping once the offset is below floating-point resolution at `center`.
pub fn shell_points(center: &[f64], radius: f64, depth: usize) -> Vec<Vec<f64>> {
    shell_points_above(center, radius, depth, 0.0)
}

/// As [`shell_points`], also stopping below `min_offset`: a center known
/// only to that accuracy has no finer shells worth sampling.
pub(crate) fn shell_points_above(center: &[f64], radius: f64, depth: usize, min_offset: f64) -> Vec<Vec<f64>> {
    shell_rays(center, radius, depth, min_offset).concat()
}

/// The shells of [`shell_points_above`], one list per direction, outermost first.
pub(crate) fn shell_rays(center: &[f64], radius: f64, depth: usize, min_offset: f64) -> Vec<Vec<Vec<f64>>> {
    let scale = center.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    let floor = if scale > 0.0 {
        16.0 * f64::EPSILON * scale
    } else {
        1e-290
    }
    .max(min_offset);
    directions(center.len())
        .into_iter()
        .map(|d| {
            let mut ray = Vec::new();
            let mut delta = radius;
            for _ in 0..depth {
                if delta < floor {
                    break;
                }
                let p: Vec<f64> = center.iter().zip(&d).map(|(c, v)| c + delta * v).collect();
                if p != center {
                    ray.push(p);
                }
                delta *= 0.5;
            }
            ray
        })
        .collect()
}

/// Grid points of the bounding box of `B(center, radius)` inside the ball.
pub fn ball_grid(center: &[f64], radius: f64, resolution: usize) -> Vec<Vec<f64>> {
    AnalysisBox::around(center, radius, resolution.max(2))
        .points()
        .into_iter()
        .filter(|p| dist(p, center) <= radius * (1.0 + 1e-12))
        .collect()
}

/// Turns a raw `(s, r)` pair into a sample. `s` below the rounding noise of
/// `scale` counts as zero; then `r` must vanish up to `10·tol` or the graph
/// is not closed.
pub(crate) fn classify(s: f64, r: f64, scale: f64, tol: f64, x: &[f64], y: &[f64]) -> Result<Option<(f64, f64)>> {
    let noise = 64.0 * f64::EPSILON * scale;
    if s <= noise {
        if r.is_finite() && r > 10.0 * tol {
            return Err(Error::ClosedGraph {
                x: x.to_vec(),
                y: y.to_vec(),
                r,
            });
        }
        return Ok(None);
    }
    if s < 1e-280 {
        return Ok(None);
    }
    Ok(Some((s, r)))
}

pub(crate) fn merge_points(mut base: Vec<Vec<f64>>, extra: impl IntoIterator<Item = Vec<f64>>) -> Vec<Vec<f64>> {
    for p in extra {
        if !base.iter().any(|q| q == &p) {
            base.push(p);
        }
    }
    base
}

pub(crate) fn max_norm(points: &[Vec<f64>]) -> f64 {
    points.iter().map(|p| norm(p)).fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pareto_keeps_envelope() {
        let v = vec![
            RegularitySample::new(0.3, 1.0),
            RegularitySample::new(0.26, 0.5),
            RegularitySample::new(0.4, 0.9),
            RegularitySample::new(0.45, 2.0),
        ];
        let out = pareto_reduce(v);
        let pairs: Vec<(f64, f64)> = out.iter().map(|p| (p.s, p.r)).collect();
        assert_eq!(pairs, vec![(0.26, 0.5), (0.3, 1.0), (0.45, 2.0)]);
    }

    #[test]
    fn shells_stop_at_resolution() {
        let z = shell_points(&[0.0], 1.0, 400);
        assert_eq!(z.len(), 2 * 400);
        let c = shell_points(&[1.0], 1.0, 400);
        assert!(c.len() < 2 * 60);
        assert_eq!(shell_points(&[0.0, 0.0], 1.0, 3).len(), 8 * 3);
    }
}
