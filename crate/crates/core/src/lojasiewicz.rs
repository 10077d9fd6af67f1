//! Fits of `c·ψ(x)^α ≥ φ(x)` on a box through the level-set profile
//! `μ(t) = sup { φ(x) : ψ(x) = t }`.

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::expr::Expression;
use crate::map_model::AnalysisBox;
use crate::report::{finite_or_str, vec_opt_finite};

/// A scalar function on the box, fallible on domain errors.
pub type ScalarFn<'a> = dyn Fn(&[f64]) -> Result<f64> + Sync + 'a;

/// Grid points per axis used when the box does not say otherwise.
pub fn default_resolution(dim: usize) -> usize {
    match dim {
        1 => 4097,
        2 => 513,
        _ => 33,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LojaOptions {
    /// Geometric t-grid points per octave.
    pub per_octave: usize,
    /// Bins per fitting window.
    pub window_bins: usize,
    /// Slope deviation tolerated when choosing ε.
    pub slope_tol: f64,
    /// Bins with fewer grid points are too sparse to fit.
    pub min_points: usize,
}

impl Default for LojaOptions {
    fn default() -> Self {
        LojaOptions {
            per_octave: 4,
            window_bins: 12,
            slope_tol: 0.05,
            min_points: 4,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MuProfile {
    pub t_grid: Vec<f64>,
    /// `None` where no grid point has `ψ` in the band.
    #[serde(serialize_with = "vec_opt_finite")]
    pub mu_values: Vec<Option<f64>>,
    /// Half-width of each level band.
    pub band: Vec<f64>,
    /// Grid points per band.
    pub counts: Vec<usize>,
    /// `M = sup_K φ` over the grid.
    pub m_sup: f64,
    /// Smallest positive `ψ` on the grid, at the fit and at twice the resolution.
    pub zero_gap: Option<f64>,
    pub zero_gap_refined: Option<f64>,
    pub resolution: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Dichotomy {
    IsolatedZero,
    ConstantZero,
    PowerGrowth,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LojaFit {
    #[serde(serialize_with = "finite_or_str")]
    pub a: f64,
    #[serde(serialize_with = "finite_or_str")]
    pub alpha: f64,
    #[serde(serialize_with = "finite_or_str")]
    pub c: f64,
    #[serde(serialize_with = "finite_or_str")]
    pub c1: f64,
    #[serde(serialize_with = "finite_or_str")]
    pub c2: f64,
    #[serde(serialize_with = "finite_or_str")]
    pub eps: f64,
    pub m_sup: f64,
    /// `max_t μ(t) − c·t^α` over the nonempty bins.
    #[serde(serialize_with = "finite_or_str")]
    pub max_violation: f64,
    pub dichotomy: Option<Dichotomy>,
    pub diagnostic: Option<String>,
}

struct Samples {
    phi: Vec<f64>,
    psi: Vec<f64>,
}

fn sample(phi: &ScalarFn, psi: &ScalarFn, k: &AnalysisBox) -> Result<Samples> {
    let vals: Vec<Result<(f64, f64)>> = (0..k.num_points())
        .into_par_iter()
        .map(|i| {
            let x = k.point(i);
            Ok((phi(&x)?, psi(&x)?))
        })
        .collect();
    let mut out = Samples {
        phi: Vec::with_capacity(vals.len()),
        psi: Vec::with_capacity(vals.len()),
    };
    for (i, v) in vals.into_iter().enumerate() {
        let (f, p) = v?;
        for (name, v) in [("phi", f), ("psi", p)] {
            if !(v >= 0.0) || !v.is_finite() {
                return Err(Error::fixture(
                    name,
                    format!("must be finite and nonnegative on the box; got {v} at x = {:?}", k.point(i)),
                ));
            }
        }
        out.phi.push(f);
        out.psi.push(p);
    }
    Ok(out)
}

fn zero_gap(psi: &[f64]) -> Option<f64> {
    psi.iter().copied().filter(|&v| v > 0.0).min_by(f64::total_cmp)
}

/// Geometric grid from `max ψ` down to the smallest positive `ψ`, with
/// `per_octave` points per octave, increasing.
pub fn default_t_grid(t_max: f64, t_min: f64, per_octave: usize) -> Vec<f64> {
    let mut out = Vec::new();
    if !(t_max > 0.0) || !(t_min > 0.0) {
        return out;
    }
    let q = 2f64.powf(-1.0 / per_octave as f64);
    let mut t = t_max;
    while t >= t_min && out.len() < 4000 {
        out.push(t);
        t *= q;
    }
    out.reverse();
    out
}

/// Half the local spacing of an increasing grid.
fn half_spacing(t: &[f64]) -> Vec<f64> {
    (0..t.len())
        .map(|i| {
            let gaps = [i.checked_sub(1).map(|j| t[i] - t[j]), t.get(i + 1).map(|v| v - t[i])];
            let g = gaps.iter().flatten().copied().fold(f64::INFINITY, f64::min);
            if g.is_finite() {
                0.5 * g
            } else {
                0.5 * t[i]
            }
        })
        .collect()
}

/// `μ(t) = max φ` over grid points with `|ψ − t| ≤ band`. When `t_grid` is
/// `None` the geometric default grid is used with bands of half the local
/// spacing.
pub fn compute_mu_with(
    phi: &ScalarFn,
    psi: &ScalarFn,
    k: &AnalysisBox,
    t_grid: Option<&[f64]>,
    band: Option<f64>,
    opts: &LojaOptions,
) -> Result<MuProfile> {
    k.validate()?;
    let s = sample(phi, psi, k)?;
    let m_sup = s.phi.iter().copied().fold(0.0, f64::max);
    let gap = zero_gap(&s.psi);
    let refined = k.with_resolution(2 * k.resolution - 1);
    let gap_refined = if refined.num_points() <= 4_000_000 {
        zero_gap(&sample(phi, psi, &refined)?.psi)
    } else {
        None
    };

    // zero-set inclusion: where ψ vanishes, φ must too
    let psi_max = s.psi.iter().copied().fold(0.0, f64::max);
    let zero_tol = 1e-6 * (1.0 + m_sup);
    for (i, (&f, &p)) in s.phi.iter().zip(&s.psi).enumerate() {
        if p <= 1e-12 * psi_max && f > zero_tol {
            return Err(Error::Invalid {
                what: "function pair",
                reason: format!(
                    "zero set of psi is not inside the zero set of phi: psi = {p:e}, phi = {f:e} at x = {:?}",
                    k.point(i)
                ),
            });
        }
    }

    let t_grid: Vec<f64> = match t_grid {
        Some(t) => {
            if t.windows(2).any(|w| !(w[0] < w[1])) || t.iter().any(|&v| !(v > 0.0)) {
                return Err(Error::Invalid {
                    what: "t grid",
                    reason: "must be positive and strictly increasing".into(),
                });
            }
            t.to_vec()
        }
        None => default_t_grid(psi_max, gap.unwrap_or(psi_max), opts.per_octave),
    };
    let bands = match band {
        Some(b) if b > 0.0 => vec![b; t_grid.len()],
        Some(b) => {
            return Err(Error::Invalid {
                what: "band",
                reason: format!("must be positive, got {b}"),
            })
        }
        None => half_spacing(&t_grid),
    };

    let mut order: Vec<usize> = (0..s.psi.len()).collect();
    order.sort_by(|&a, &b| s.psi[a].total_cmp(&s.psi[b]));
    let sorted_psi: Vec<f64> = order.iter().map(|&i| s.psi[i]).collect();
    let (mu_values, counts): (Vec<Option<f64>>, Vec<usize>) = t_grid
        .par_iter()
        .zip(&bands)
        .map(|(&t, &b)| {
            let lo = sorted_psi.partition_point(|&v| v < t - b);
            let hi = sorted_psi.partition_point(|&v| v <= t + b);
            let mu = order[lo..hi].iter().map(|&i| s.phi[i]).fold(None, |acc: Option<f64>, v| {
                Some(acc.map_or(v, |a| a.max(v)))
            });
            (mu, hi - lo)
        })
        .unzip();

    Ok(MuProfile {
        t_grid,
        mu_values,
        band: bands,
        counts,
        m_sup,
        zero_gap: gap,
        zero_gap_refined: gap_refined,
        resolution: k.resolution,
    })
}

fn least_squares(pts: &[(f64, f64)]) -> (f64, f64) {
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let slope = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    (slope, my - slope * mx)
}

/// Classifies the profile and fits `μ(t) ≈ a·t^α` near `0⁺`.
pub fn fit_growth(profile: &MuProfile, opts: &LojaOptions) -> LojaFit {
    let m = profile.m_sup;
    let mut fit = LojaFit {
        a: f64::NAN,
        alpha: f64::NAN,
        c: f64::NAN,
        c1: f64::NAN,
        c2: f64::NAN,
        eps: f64::NAN,
        m_sup: m,
        max_violation: f64::NAN,
        dichotomy: None,
        diagnostic: None,
    };
    let finish = |mut fit: LojaFit| {
        fit.max_violation = profile
            .t_grid
            .iter()
            .zip(&profile.mu_values)
            .filter_map(|(&t, mu)| mu.map(|mu| mu - fit.c * t.powf(fit.alpha)))
            .fold(f64::NEG_INFINITY, f64::max);
        fit
    };

    // Case 1: 0 is isolated in ψ(K), witnessed by a gap that does not shrink
    // when the grid is refined.
    let isolated = match (profile.zero_gap, profile.zero_gap_refined) {
        (None, _) => true,
        (Some(g), Some(gr)) => gr > 0.5 * g,
        (Some(_), None) => false,
    };
    if isolated {
        let eps = profile.zero_gap.unwrap_or(1.0);
        fit.dichotomy = Some(Dichotomy::IsolatedZero);
        fit.alpha = 1.0;
        fit.eps = eps;
        fit.c2 = (m + 1.0) / eps;
        fit.c = fit.c2;
        return finish(fit);
    }

    let usable: Vec<(f64, f64)> = profile
        .t_grid
        .iter()
        .zip(&profile.mu_values)
        .zip(&profile.counts)
        .filter(|(_, &n)| n >= opts.min_points)
        .filter_map(|((&t, mu), _)| mu.map(|mu| (t, mu)))
        .collect();
    let zero_level = 1e-12 * (1.0 + m);

    // Case 2.1: μ vanishes on an initial segment.
    let zero_prefix = usable.iter().take_while(|p| p.1 <= zero_level).count();
    if zero_prefix >= opts.window_bins.min(usable.len()) && zero_prefix > 0 {
        let eps = usable[zero_prefix - 1].0;
        fit.dichotomy = Some(Dichotomy::ConstantZero);
        fit.alpha = 1.0;
        fit.eps = eps;
        fit.c2 = (m + 1.0) / eps;
        fit.c = fit.c2;
        return finish(fit);
    }

    // Case 2.2: power growth on the smallest window of positive bins.
    let positive: Vec<(f64, f64)> = usable.into_iter().filter(|p| p.1 > zero_level).collect();
    let w = opts.window_bins;
    if positive.len() < w.max(10) {
        fit.diagnostic = Some(format!("{} usable bins near 0, need at least {}", positive.len(), w.max(10)));
        return fit;
    }
    let logs: Vec<(f64, f64)> = positive.iter().map(|&(t, mu)| (t.ln(), mu.ln())).collect();
    let (alpha, log_a) = least_squares(&logs[..w]);
    if !(alpha > 0.0) {
        fit.diagnostic = Some(format!("fitted exponent {alpha:.4} is not positive"));
        fit.alpha = alpha;
        return fit;
    }
    // ε: upper end of the last window, sliding by one octave, whose slope
    // stays within tolerance of α
    let step = opts.per_octave.max(1);
    let mut eps = positive[w - 1].0;
    let mut start = step;
    while start + w <= logs.len() {
        let (slope, _) = least_squares(&logs[start..start + w]);
        if (slope - alpha).abs() > opts.slope_tol {
            break;
        }
        eps = positive[start + w - 1].0;
        start += step;
    }
    let a = log_a.exp();
    fit.dichotomy = Some(Dichotomy::PowerGrowth);
    fit.a = a;
    fit.alpha = alpha;
    fit.eps = eps;
    fit.c1 = 2.0 * a;
    fit.c2 = (m + 1.0) / eps.powf(alpha);
    fit.c = fit.c1.max(fit.c2);
    finish(fit)
}

/// `max_x φ(x) − margin·c·ψ(x)^α` over the grid of `K` at twice its
/// resolution; `≤ 0` means the inequality holds at that resolution.
pub fn verify_inequality_with(
    phi: &ScalarFn,
    psi: &ScalarFn,
    k: &AnalysisBox,
    c: f64,
    alpha: f64,
    margin: f64,
) -> Result<f64> {
    let fine = k.with_resolution(2 * k.resolution - 1);
    let s = sample(phi, psi, &fine)?;
    Ok(s.phi
        .iter()
        .zip(&s.psi)
        .map(|(&f, &p)| f - margin * c * p.powf(alpha))
        .fold(f64::NEG_INFINITY, f64::max))
}

fn expr_fn(e: &Expression) -> impl Fn(&[f64]) -> Result<f64> + Sync + '_ {
    move |x: &[f64]| e.eval(x).map_err(Error::from)
}

pub fn compute_mu(
    phi: &Expression,
    psi: &Expression,
    k: &AnalysisBox,
    t_grid: Option<&[f64]>,
    band: Option<f64>,
    opts: &LojaOptions,
) -> Result<MuProfile> {
    compute_mu_with(&expr_fn(phi), &expr_fn(psi), k, t_grid, band, opts)
}

pub fn verify_inequality(phi: &Expression, psi: &Expression, k: &AnalysisBox, c: f64, alpha: f64, margin: f64) -> Result<f64> {
    verify_inequality_with(&expr_fn(phi), &expr_fn(psi), k, c, alpha, margin)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn e(s: &str) -> Expression {
        Expression::parse_with_arity(s, 1).unwrap()
    }

    fn unit(res: usize) -> AnalysisBox {
        AnalysisBox::new(vec![-1.0], vec![1.0], res).unwrap()
    }

    #[test]
    fn mu_examples() {
        let k = unit(4097);
        let opts = LojaOptions::default();
        let p = compute_mu(&e("abs(x1)"), &e("x1^2"), &k, Some(&[0.04]), Some(1e-3), &opts).unwrap();
        assert!((p.mu_values[0].unwrap() - 0.2).abs() < 3e-3);
        let p = compute_mu(&e("x1^2"), &e("x1^2"), &k, Some(&[0.1, 0.5]), Some(1e-3), &opts).unwrap();
        assert!((p.mu_values[1].unwrap() - 0.5).abs() < 1e-3);
        let p = compute_mu(&e("x1^2"), &e("abs(x1)"), &k, Some(&[0.3]), Some(1e-3), &opts).unwrap();
        assert!((p.mu_values[0].unwrap() - 0.09).abs() < 1e-3);
    }

    #[test]
    fn abs_square_power_growth() {
        let k = unit(4097);
        let opts = LojaOptions::default();
        let p = compute_mu(&e("abs(x1)"), &e("x1^2"), &k, None, None, &opts).unwrap();
        let fit = fit_growth(&p, &opts);
        assert_eq!(fit.dichotomy, Some(Dichotomy::PowerGrowth), "{fit:?}");
        assert!((fit.alpha - 0.5).abs() < 0.03, "{fit:?}");
        assert!(fit.c >= fit.c1 && fit.c >= fit.c2);
    }

    #[test]
    fn isolated_and_constant_zero() {
        let k = unit(1025);
        let opts = LojaOptions::default();
        let phi = e("max(0, abs(x1) - 0.25)");
        let psi = e("if(abs(x1) <= 0.25, 0, 0.5 + 0.5*abs(x1))");
        let fit = fit_growth(&compute_mu(&phi, &psi, &k, None, None, &opts).unwrap(), &opts);
        assert_eq!(fit.dichotomy, Some(Dichotomy::IsolatedZero), "{fit:?}");
        assert!(verify_inequality(&phi, &psi, &k, fit.c, fit.alpha, 1.0).unwrap() <= 0.0);

        let fit = fit_growth(&compute_mu(&e("0"), &e("x1^2"), &k, None, None, &opts).unwrap(), &opts);
        assert_eq!(fit.dichotomy, Some(Dichotomy::ConstantZero), "{fit:?}");
        assert_eq!(fit.m_sup, 0.0);
        assert!((fit.c - 1.0 / fit.eps).abs() < 1e-12);
    }

    #[test]
    fn verification_examples() {
        let k = unit(1025);
        assert!(verify_inequality(&e("abs(x1)"), &e("x1^2"), &k, 1.0, 0.5, 2.0).unwrap() <= 0.0);
        assert!(verify_inequality(&e("x1^2"), &e("abs(x1)"), &k, 1.0, 2.0, 2.0).unwrap() <= 0.0);
        assert!(verify_inequality(&e("abs(x1)"), &e("x1^2"), &k, 1.0, 1.0, 1.0).unwrap() > 0.0);
    }

    #[test]
    fn negativity_and_zero_set_are_checked() {
        let k = unit(65);
        let opts = LojaOptions::default();
        assert!(matches!(
            compute_mu(&e("x1"), &e("x1^2"), &k, None, None, &opts),
            Err(Error::Fixture { .. })
        ));
        assert!(compute_mu(&e("1"), &e("x1^2"), &k, None, None, &opts).is_err());
    }
}
