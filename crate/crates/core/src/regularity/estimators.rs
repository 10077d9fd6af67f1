//! Sampled estimates of metric regularity, subregularity and pseudo-Hölder
//! continuity.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::envelope::{fit_counted, HolderFit};
use super::sampling::{ball_grid, classify, max_norm, merge_points, shell_points_above, shell_rays, EstimatorOptions, SampleSet};
use super::RegularitySample;
use crate::error::{Error, Result};
use crate::linalg::{dist, norm};
use crate::map_model::{AnalysisBox, MapModel, PointSet};
use crate::metrics::dist_point_set;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PseudoMode {
    Lower,
    Full,
}

/// A fit together with the samples that produced it.
#[derive(Debug, Clone, Serialize)]
pub struct Estimate {
    pub fit: HolderFit,
    #[serde(skip)]
    pub samples: SampleSet,
}

impl Estimate {
    fn from_samples(samples: SampleSet) -> Self {
        Estimate {
            fit: fit_counted(&samples.samples, Some(samples.total)),
            samples,
        }
    }

    fn aborted(err: Error) -> Result<Self> {
        match err {
            Error::ClosedGraph { .. } => Ok(Estimate {
                fit: HolderFit::inconclusive(0, format!("aborted: {err}")),
                samples: SampleSet::default(),
            }),
            other => Err(other),
        }
    }
}

fn check_point(what: &'static str, p: &[f64], dim: usize) -> Result<()> {
    if p.len() != dim {
        return Err(Error::dim(what, dim, p.len()));
    }
    if p.iter().any(|v| !v.is_finite()) {
        return Err(Error::Invalid {
            what,
            reason: "must be finite".into(),
        });
    }
    Ok(())
}

fn check_radius(eps: f64) -> Result<()> {
    if eps > 0.0 && eps.is_finite() {
        Ok(())
    } else {
        Err(Error::Invalid {
            what: "radius eps",
            reason: format!("must be positive and finite, got {eps}"),
        })
    }
}

/// Drops points other than `center` itself that the oracle cannot tell
/// apart from `center`.
/// Distances within the oracle's accuracy are rounding noise, and a little
/// above it the partner shells are unresolved, biasing bin maxima low.
/// Exact zeros carry no envelope information but are kept for the counts.
fn resolved(r: f64, accuracy: f64) -> bool {
    r == 0.0 || r > 16.0 * accuracy
}

fn unresolved_removed(points: Vec<Vec<f64>>, center: &[f64], resolution: f64) -> Vec<Vec<f64>> {
    if resolution <= 0.0 {
        return points;
    }
    points
        .into_iter()
        .filter(|p| {
            let d = dist(p, center);
            d == 0.0 || d > 2.0 * resolution
        })
        .collect()
}

/// Images for each point; points outside the domain map to `None`.
/// Images of `base` and of the dyadic shells around `center`, dropping
/// empty images and points unresolved at `center`. With a positive oracle
/// accuracy a shell ray stops after two consecutive images within it of
/// `at_center`: deeper shells would only repeat the center.
fn sampled_images(
    oracle: &(dyn crate::map_model::ImageOracle + '_),
    base: Vec<Vec<f64>>,
    center: &[f64],
    radius: f64,
    depth: usize,
    at_center: &PointSet,
) -> (Vec<Vec<f64>>, Vec<PointSet>) {
    let base = unresolved_removed(base, center, oracle.resolution_at(center));
    let limit = 2.0 * oracle.resolution_at(center);
    let accuracy = oracle.accuracy();
    let base_sets = images(oracle, &base);
    let rays: Vec<Vec<(Vec<f64>, PointSet)>> = shell_rays(center, radius, depth, 0.0)
        .into_par_iter()
        .map(|ray| {
            let mut out = Vec::new();
            let mut quiet = 0;
            for p in ray {
                let d = dist(&p, center);
                if (d > 0.0 && d <= limit) || base.contains(&p) {
                    continue;
                }
                let Some(img) = oracle.image(&p).ok().filter(|s| !s.is_empty()) else {
                    continue;
                };
                let close = accuracy > 0.0 && excess(&img, at_center).max(excess(at_center, &img)) <= accuracy;
                out.push((p, img));
                quiet = if close { quiet + 1 } else { 0 };
                if quiet >= 2 {
                    break;
                }
            }
            out
        })
        .collect();
    base.into_iter()
        .zip(base_sets)
        .filter_map(|(p, s)| s.map(|s| (p, s)))
        .chain(rays.into_iter().flatten())
        .unzip()
}

fn images(oracle: &(dyn crate::map_model::ImageOracle + '_), points: &[Vec<f64>]) -> Vec<Option<PointSet>> {
    points
        .par_iter()
        .map(|p| oracle.image(p).ok().filter(|s| !s.is_empty()))
        .collect()
}

/// Hölder metric regularity of `F` at `ystar` over `K`:
/// `dist(x, F⁻¹(y)) ≤ c·dist(y, F(x))^α` for `x ∈ K`, `y ∈ B(ystar, eps) ∩ range F`.
///
/// `x` runs over the grid of `K` and the fiber `F⁻¹(ystar) ∩ K`; `y` over a
/// ball grid and dyadic shells around `ystar`, kept when `F⁻¹(y) ∩ K ≠ ∅`.
pub fn estimate_metric_regularity(
    map: &MapModel,
    ystar: &[f64],
    k: &AnalysisBox,
    eps: f64,
    ybox: &AnalysisBox,
    opts: &EstimatorOptions,
) -> Result<Estimate> {
    check_point("ystar", ystar, map.m())?;
    check_radius(eps)?;
    let pre = map.inverse_oracle(k, opts.tol)?;
    let fwd = map.forward_oracle(ybox, opts.tol)?;
    let fiber = pre.image(ystar)?;
    if fiber.is_empty() {
        return Err(Error::NotInRange { point: ystar.to_vec() });
    }
    let xs = merge_points(k.points(), fiber.points().iter().cloned());
    let (ys, pre_sets) = sampled_images(
        pre.as_ref(),
        ball_grid(ystar, eps, opts.ball_resolution),
        ystar,
        eps,
        opts.shell_depth,
        &fiber,
    );
    let img_sets = images(fwd.as_ref(), &xs);
    let floor = 2.0 * pre.resolution_at(ystar);
    let accuracy = pre.accuracy();

    let chunks: Result<Vec<Vec<RegularitySample>>> = xs
        .par_iter()
        .enumerate()
        .map(|(xi, x)| {
            let Some(img) = &img_sets[xi] else {
                return Ok(Vec::new());
            };
            let img_scale = max_norm(img.points());
            let mut out = Vec::with_capacity(ys.len());
            for (yi, (y, pre_y)) in ys.iter().zip(&pre_sets).enumerate() {
                let s = dist_point_set(y, img).value();
                if s > 0.0 && s <= floor {
                    continue;
                }
                let r = dist_point_set(x, pre_y).value();
                if !resolved(r, accuracy) {
                    continue;
                }
                let scale = norm(y).max(img_scale);
                if let Some((s, r)) = classify(s, r, scale, opts.tol, x, y)? {
                    out.push(RegularitySample {
                        s,
                        r,
                        x: xi as u32,
                        y: yi as u32,
                    });
                }
            }
            Ok(super::sampling::pareto_reduce(out))
        })
        .collect();
    match chunks {
        Ok(chunks) => Ok(Estimate::from_samples(SampleSet::new(xs, ys, chunks))),
        Err(e) => Estimate::aborted(e),
    }
}

/// Hölder metric subregularity at `ystar`:
/// `dist(x, F⁻¹(ystar)) ≤ c·dist(ystar, F(x))^α` for `x ∈ K`.
///
/// `x` runs over the grid of `K`, the fiber, and dyadic shells around each
/// fiber point of radius `diam(K)/4`.
pub fn estimate_subregularity(
    map: &MapModel,
    ystar: &[f64],
    k: &AnalysisBox,
    ybox: &AnalysisBox,
    opts: &EstimatorOptions,
) -> Result<Estimate> {
    check_point("ystar", ystar, map.m())?;
    let pre = map.inverse_oracle(k, opts.tol)?;
    let fwd = map.forward_oracle(ybox, opts.tol)?;
    let fiber = pre.image(ystar)?;
    if fiber.is_empty() {
        return Err(Error::NotInRange { point: ystar.to_vec() });
    }
    let radius = k.diameter() / 4.0;
    let accuracy = pre.accuracy();
    let shells = fiber
        .points()
        .iter()
        .flat_map(|c| shell_points_above(c, radius, opts.shell_depth, accuracy))
        .filter(|p| k.contains(p, 0.0));
    let xs = merge_points(merge_points(k.points(), fiber.points().iter().cloned()), shells);
    let img_sets = images(fwd.as_ref(), &xs);
    let ys = vec![ystar.to_vec()];

    let per_x: Result<Vec<Option<RegularitySample>>> = xs
        .par_iter()
        .enumerate()
        .map(|(xi, x)| {
            let Some(img) = &img_sets[xi] else {
                return Ok(None);
            };
            let s = dist_point_set(ystar, img).value();
            let r = dist_point_set(x, &fiber).value();
            if !resolved(r, accuracy) {
                return Ok(None);
            }
            let scale = norm(ystar).max(max_norm(img.points()));
            Ok(classify(s, r, scale, opts.tol, x, ystar)?.map(|(s, r)| RegularitySample {
                s,
                r,
                x: xi as u32,
                y: 0,
            }))
        })
        .collect();
    match per_x {
        Ok(v) => {
            let chunk: Vec<RegularitySample> = v.into_iter().flatten().collect();
            Ok(Estimate::from_samples(SampleSet::new(xs, ys, vec![chunk])))
        }
        Err(e) => Estimate::aborted(e),
    }
}

/// `max_{w ∈ A} dist(w, B)`: the excess of `A` over `B`.
fn excess(a: &PointSet, b: &PointSet) -> f64 {
    a.points()
        .iter()
        .map(|w| dist_point_set(w, b).value())
        .fold(0.0, f64::max)
}

/// Pseudo-Hölder continuity of `G` at `xstar` relative to the codomain box
/// `K`: `G(x¹) ∩ K ⊂ G(x²) + c‖x¹ − x²‖^α 𝔹`, with `x¹ = xstar` in lower
/// mode and both points ranging over `B(xstar, eps) ∩ dom G` in full mode.
pub fn estimate_pseudo_holder(
    map: &MapModel,
    xstar: &[f64],
    k: &AnalysisBox,
    eps: f64,
    mode: PseudoMode,
    opts: &EstimatorOptions,
) -> Result<Estimate> {
    check_point("xstar", xstar, map.n())?;
    check_radius(eps)?;
    let oracle = map.forward_oracle(k, opts.tol)?;
    pseudo_holder_with(oracle.as_ref(), xstar, eps, mode, opts)
}

/// [`estimate_pseudo_holder`] for any image oracle.
pub(crate) fn pseudo_holder_with(
    oracle: &(dyn crate::map_model::ImageOracle + '_),
    xstar: &[f64],
    eps: f64,
    mode: PseudoMode,
    opts: &EstimatorOptions,
) -> Result<Estimate> {
    let at_star = oracle.image(xstar)?;
    if at_star.is_empty() {
        return Err(Error::NotInDomain { point: xstar.to_vec() });
    }
    let accuracy = oracle.accuracy();
    let (xs, sets) = sampled_images(
        oracle,
        merge_points(vec![xstar.to_vec()], ball_grid(xstar, eps, opts.ball_resolution)),
        xstar,
        eps,
        opts.shell_depth,
        &at_star,
    );

    let chunks: Vec<Vec<RegularitySample>> = match mode {
        PseudoMode::Lower => {
            let v: Vec<RegularitySample> = xs
                .par_iter()
                .zip(&sets)
                .enumerate()
                .filter_map(|(i, (x, gx))| {
                    let s = dist(x, xstar);
                    let r = excess(&at_star, gx);
                    (s > 0.0 && resolved(r, accuracy)).then(|| RegularitySample {
                        s,
                        r,
                        x: 0,
                        y: i as u32,
                    })
                })
                .collect();
            vec![v]
        }
        PseudoMode::Full => xs
            .par_iter()
            .enumerate()
            .map(|(i, x1)| {
                let out: Vec<RegularitySample> = xs
                    .iter()
                    .enumerate()
                    .filter_map(|(j, x2)| {
                        let s = dist(x1, x2);
                        if i == j || s <= 0.0 {
                            return None;
                        }
                        let r = excess(&sets[i], &sets[j]);
                        resolved(r, accuracy).then(|| RegularitySample {
                            s,
                            r,
                            x: i as u32,
                            y: j as u32,
                        })
                    })
                    .collect();
                super::sampling::pareto_reduce(out)
            })
            .collect(),
    };
    Ok(Estimate::from_samples(SampleSet::new(xs.clone(), xs, chunks)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::regularity::Verdict;

    fn bx(lo: f64, hi: f64) -> AnalysisBox {
        AnalysisBox::new(vec![lo], vec![hi], 64).unwrap()
    }

    #[test]
    fn metric_regularity_of_cube() {
        let f = MapModel::from_exprs(&["x1^3"]).unwrap();
        let est =
            estimate_metric_regularity(&f, &[0.0], &bx(-1.0, 1.0), 0.5, &bx(-2.0, 2.0), &EstimatorOptions::default())
                .unwrap();
        assert!((est.fit.alpha - 1.0 / 3.0).abs() < 0.05, "{:?}", est.fit);
        assert_eq!(est.fit.verdict, Verdict::Holder, "{:?}", est.fit);
    }

    #[test]
    fn identity_is_lipschitz() {
        let f = MapModel::from_exprs(&["x1"]).unwrap();
        let opts = EstimatorOptions::default();
        let est = estimate_metric_regularity(&f, &[0.2], &bx(-1.0, 1.0), 0.5, &bx(-2.0, 2.0), &opts).unwrap();
        assert!((est.fit.alpha - 1.0).abs() < 0.02, "{:?}", est.fit);
        assert!((est.fit.c - 1.0).abs() < 0.05);
        let est = estimate_pseudo_holder(&f, &[0.2], &bx(-1.0, 1.0), 0.5, PseudoMode::Full, &opts).unwrap();
        assert!((est.fit.alpha - 1.0).abs() < 0.02, "{:?}", est.fit);
        assert_eq!(est.fit.verdict, Verdict::Holder);
    }

    #[test]
    fn subregularity_examples() {
        let opts = EstimatorOptions::default();
        let sq = MapModel::from_exprs(&["x1^2"]).unwrap();
        let est = estimate_subregularity(&sq, &[0.0], &bx(-1.0, 1.0), &bx(-2.0, 2.0), &opts).unwrap();
        assert!((est.fit.alpha - 0.5).abs() < 0.05, "{:?}", est.fit);
        assert_eq!(est.fit.verdict, Verdict::Holder);

        let cube = MapModel::from_exprs(&["x1^3"]).unwrap();
        let est = estimate_subregularity(&cube, &[1.0], &bx(0.5, 1.5), &bx(-5.0, 5.0), &opts).unwrap();
        assert!((est.fit.alpha - 1.0).abs() < 0.05, "{:?}", est.fit);
        assert_eq!(est.fit.verdict, Verdict::Holder);
    }

    #[test]
    fn not_in_range_is_an_error() {
        let sq = MapModel::from_exprs(&["x1^2"]).unwrap();
        let r = estimate_subregularity(&sq, &[-1.0], &bx(-1.0, 1.0), &bx(-2.0, 2.0), &EstimatorOptions::default());
        assert!(matches!(r, Err(Error::NotInRange { .. })));
    }

    #[test]
    fn inverse_cube_lower_pseudo() {
        let g = MapModel::from_exprs(&["x1^3"]).unwrap().inverse();
        let est =
            estimate_pseudo_holder(&g, &[0.0], &bx(-2.0, 2.0), 0.5, PseudoMode::Lower, &EstimatorOptions::default())
                .unwrap();
        assert!((est.fit.alpha - 1.0 / 3.0).abs() < 0.05, "{:?}", est.fit);
        assert_eq!(est.fit.verdict, Verdict::Holder);
    }

    #[test]
    fn flat_inverse_is_not_holder() {
        let f = MapModel::from_exprs(&["if(x1>0, exp(-1/x1), if(x1<0, -exp(1/x1), 0))"]).unwrap();
        let est = estimate_pseudo_holder(
            &f.inverse(),
            &[0.0],
            &bx(-1.0, 1.0),
            0.25,
            PseudoMode::Lower,
            &EstimatorOptions::default(),
        )
        .unwrap();
        assert_eq!(est.fit.verdict, Verdict::NotHolder, "{:?}", est.fit);
    }
}
