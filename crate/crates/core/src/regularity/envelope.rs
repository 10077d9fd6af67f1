//! Upper-envelope power-law fits `r ≤ c·s^α` on dyadic bins of `s`.

use serde::Serialize;

use super::{RegularitySample, Verdict};
use crate::report::finite_or_str;

/// Minimum number of usable samples for a verdict.
pub const MIN_SAMPLES: usize = 50;
/// Slopes below this count as "no Hölder exponent".
pub const ALPHA_MIN: f64 = 0.01;
/// Allowed spread of the fitted slope across windows.
pub const ALPHA_STABILITY: f64 = 0.05;
/// Nonempty dyadic bins per fitting window.
pub const WINDOW_BINS: usize = 10;
/// Safety factor on `c` when checking the fitted bound.
pub const SAFETY: f64 = 2.0;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WindowFit {
    /// `log₂ s` range covered, inclusive.
    pub log2_lo: i32,
    pub log2_hi: i32,
    pub slope: f64,
    pub intercept: f64,
    pub bins: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HolderFit {
    #[serde(serialize_with = "finite_or_str")]
    pub c: f64,
    #[serde(serialize_with = "finite_or_str")]
    pub alpha: f64,
    /// The smallest-`s` window, which determines `c` and `alpha`.
    pub window: Option<WindowFit>,
    /// Up to three windows, ordered from smallest `s` upward.
    pub windows: Vec<WindowFit>,
    pub samples: usize,
    #[serde(serialize_with = "finite_or_str")]
    pub max_violation: f64,
    pub verdict: Verdict,
    pub diagnostic: Option<String>,
}

impl HolderFit {
    pub fn inconclusive(samples: usize, diagnostic: impl Into<String>) -> Self {
        HolderFit {
            c: f64::NAN,
            alpha: f64::NAN,
            window: None,
            windows: Vec::new(),
            samples,
            max_violation: f64::NAN,
            verdict: Verdict::Inconclusive,
            diagnostic: Some(diagnostic.into()),
        }
    }
}

fn least_squares(pts: &[(f64, f64)]) -> (f64, f64) {
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    if sxx == 0.0 {
        return (0.0, my);
    }
    let slope = sxy / sxx;
    (slope, my - slope * mx)
}

/// Dyadic bin `⌊log₂ s⌋`. Shell samples sit at powers of two up to the
/// rounding of their centre, which near the resolution floor is a few
/// parts in 10⁴, so values just below an edge are snapped onto it.
pub(crate) fn dyadic_bin(s: f64) -> i32 {
    (s.log2() + 1.0 / 256.0).floor() as i32
}

/// Fits the upper envelope of `r` against `s`.
///
/// Samples are binned by `⌊log₂ s⌋` keeping the largest `r` per bin. A line
/// is fitted in log–log coordinates over the first [`WINDOW_BINS`] nonempty
/// bins (smallest `s`), and again over the next two windows to judge
/// stability.
pub fn fit_holder_envelope(samples: &[RegularitySample]) -> HolderFit {
    fit_counted(samples, None)
}

/// As [`fit_holder_envelope`], for a sample list already reduced to its
/// per-bin Pareto front; `total` is the size of the unreduced set.
pub(crate) fn fit_counted(samples: &[RegularitySample], total: Option<usize>) -> HolderFit {
    let usable: Vec<&RegularitySample> = samples
        .iter()
        .filter(|p| p.s.is_finite() && p.s > 0.0 && !p.r.is_nan())
        .collect();
    let n = total.unwrap_or(usable.len());
    if n < MIN_SAMPLES {
        return HolderFit::inconclusive(n, format!("{n} usable samples, need at least {MIN_SAMPLES}"));
    }
    if let Some(p) = usable.iter().find(|p| p.r == f64::INFINITY) {
        let mut fit = HolderFit::inconclusive(n, format!("infinite distance at s = {:e}: target set empty", p.s));
        fit.max_violation = f64::INFINITY;
        fit.verdict = Verdict::NotHolder;
        return fit;
    }

    // bin index -> (r_max, s at the maximiser)
    let mut bins: std::collections::BTreeMap<i32, (f64, f64)> = std::collections::BTreeMap::new();
    for p in &usable {
        if p.r <= 0.0 {
            continue;
        }
        let b = dyadic_bin(p.s);
        let e = bins.entry(b).or_insert((p.r, p.s));
        if p.r > e.0 || (p.r == e.0 && p.s < e.1) {
            *e = (p.r, p.s);
        }
    }
    // The modulus sup{r : s' ≤ s} is nondecreasing; its running maximum
    // fills bins that a sparse sampling only reached through smaller r.
    let mut top = 0f64;
    let bins: Vec<(i32, f64, f64)> = bins
        .into_iter()
        .map(|(b, (r, s))| {
            top = top.max(r);
            (b, top, s)
        })
        .collect();
    if bins.len() < 3 {
        return HolderFit::inconclusive(n, format!("only {} nonempty dyadic bins with r > 0", bins.len()));
    }

    let windows: Vec<WindowFit> = bins
        .chunks(WINDOW_BINS)
        .take(3)
        .filter(|w| w.len() >= 3)
        .map(|w| {
            let pts: Vec<(f64, f64)> = w.iter().map(|&(_, r, s)| (s.ln(), r.ln())).collect();
            let (slope, intercept) = least_squares(&pts);
            WindowFit {
                log2_lo: w[0].0,
                log2_hi: w[w.len() - 1].0,
                slope,
                intercept,
                bins: w.len(),
            }
        })
        .collect();
    let first = windows[0].clone();
    let alpha = first.slope;
    let c = first.intercept.exp();
    let max_violation = if alpha > 0.0 {
        usable
            .iter()
            .map(|p| p.r - SAFETY * c * p.s.powf(alpha))
            .fold(f64::NEG_INFINITY, f64::max)
    } else {
        f64::INFINITY
    };

    let slopes: Vec<f64> = windows.iter().map(|w| w.slope).collect();
    let spread = slopes.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
        - slopes.iter().cloned().fold(f64::INFINITY, f64::min);
    // slopes[0] is the smallest-s window; "falls toward small s" means
    // slopes[i] ≤ slopes[i + 1] up to the stability slack.
    let falling = slopes.windows(2).all(|w| w[0] <= w[1] + ALPHA_MIN);
    let (verdict, diagnostic) = if slopes.len() == 3 && slopes.iter().all(|&a| a < ALPHA_MIN) && falling {
        (Verdict::NotHolder, Some(format!("envelope slopes {slopes:?} fall below {ALPHA_MIN}")))
    } else if slopes.len() < 3 {
        (Verdict::Inconclusive, Some(format!("only {} fitting windows", slopes.len())))
    } else if alpha < ALPHA_MIN {
        (Verdict::Inconclusive, Some(format!("slope {alpha:.3e} below {ALPHA_MIN} but not decaying across windows {slopes:?}")))
    } else if spread > ALPHA_STABILITY {
        (Verdict::Inconclusive, Some(format!("slopes {slopes:?} vary by more than {ALPHA_STABILITY}")))
    } else if max_violation > 0.0 {
        (Verdict::Inconclusive, Some(format!("fitted bound with factor {SAFETY} violated by {max_violation:.3e}")))
    } else {
        (Verdict::Holder, None)
    };

    HolderFit {
        c,
        alpha,
        window: Some(first),
        windows,
        samples: n,
        max_violation,
        verdict,
        diagnostic,
    }
}
