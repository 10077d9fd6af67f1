//! Root enumeration over analysis boxes.
//!
//! Scalar problems are bracketed cell by cell and refined by bisection to
//! floating-point resolution; cells without a sign change are searched for
//! an interior extremum, which either splits into two brackets or yields a
//! touching root. Vector problems seed a damped Newton iteration from every
//! cell whose corner values could enclose the target.

use crate::linalg::{damped_normal_step, norm, solve};

const GOLDEN: f64 = 0.618_033_988_749_894_9;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum FdStep {
    /// `h_i = c · max(|x_i|, ‖x‖, 1e-100)`; a coordinate much smaller than
    /// the others would otherwise get a step lost in rounding.
    Relative(f64),
    /// `h = c · (1 + ‖x‖)` for every coordinate.
    Scaled(f64),
}

#[derive(Debug, Clone, Copy)]
pub struct NewtonOptions {
    pub max_iter: usize,
    pub fd_step: FdStep,
    /// Consecutive non-improving Newton attempts before compass search.
    pub stall_limit: usize,
}

impl Default for NewtonOptions {
    fn default() -> Self {
        NewtonOptions {
            max_iter: 600,
            fd_step: FdStep::Relative(1e-7),
            stall_limit: 5,
        }
    }
}

fn sign(v: f64) -> i8 {
    if v > 0.0 {
        1
    } else if v < 0.0 {
        -1
    } else {
        0
    }
}

/// All roots of a scalar function on a sampled interval.
///
/// `grid` is increasing and `values[i] = g(grid[i])` (`None` outside the
/// domain). `tol` bounds `|g|` for touching roots that do not change sign.
pub fn roots_1d(g: &dyn Fn(f64) -> Option<f64>, grid: &[f64], values: &[Option<f64>], tol: f64) -> Vec<f64> {
    let mut out = Vec::new();
    for i in 0..grid.len().saturating_sub(1) {
        let (a, b) = (grid[i], grid[i + 1]);
        let (Some(ga), Some(gb)) = (values[i], values[i + 1]) else {
            if values[i] == Some(0.0) {
                out.push(a);
            }
            continue;
        };
        if ga == 0.0 {
            out.push(a);
        }
        if i + 2 == grid.len() && gb == 0.0 {
            out.push(b);
        }
        let (sa, sb) = (sign(ga), sign(gb));
        if sa == 0 || sb == 0 {
            continue;
        }
        if sa != sb {
            out.extend(bracket(g, a, b, sa));
            continue;
        }
        // same sign: look for an interior extremum of sa·g
        let (xm, gm) = golden_min(&|t| g(t).map(|v| f64::from(sa) * v), a, b);
        let Some(gm) = gm else { continue };
        let width = b - a;
        let interior = xm - a > 1e-9 * width && b - xm > 1e-9 * width;
        if gm < 0.0 {
            out.extend(bracket(g, a, xm, sa));
            out.extend(bracket(g, xm, b, -sa));
        } else if gm <= tol && interior {
            out.push(xm);
        }
    }
    out
}

/// Refines a sign change on `[a, b]` where `sign(g(a)) = sa`. An exact-zero
/// plateau narrower than a quarter of the cell collapses to its midpoint;
/// a wider one is reported by its two ends and midpoint.
fn bracket(g: &dyn Fn(f64) -> Option<f64>, a: f64, b: f64, sa: i8) -> Vec<f64> {
    // last point of the strict `sa` region
    let left = bisect(g, a, b, |s| s == sa);
    // first point of the strict `-sa` region
    let right = bisect(g, a, b, |s| s != -sa);
    let mid = 0.5 * (left + right);
    if right - left > 0.25 * (b - a) {
        vec![left, mid, right]
    } else {
        vec![mid]
    }
}

/// Bisection keeping `keep_left(sign(g(l)))` true and false at `r`.
fn bisect(g: &dyn Fn(f64) -> Option<f64>, a: f64, b: f64, keep_left: impl Fn(i8) -> bool) -> f64 {
    let (mut l, mut r) = (a, b);
    for _ in 0..2200 {
        let m = l + 0.5 * (r - l);
        if m <= l || m >= r {
            break;
        }
        match g(m) {
            Some(v) if keep_left(sign(v)) => l = m,
            Some(_) => r = m,
            None => break,
        }
    }
    0.5 * (l + r)
}

/// Golden-section minimization on `[a, b]`; returns the best point and value.
pub(crate) fn golden_min(f: &dyn Fn(f64) -> Option<f64>, a: f64, b: f64) -> (f64, Option<f64>) {
    let (mut lo, mut hi) = (a, b);
    let mut x1 = hi - GOLDEN * (hi - lo);
    let mut x2 = lo + GOLDEN * (hi - lo);
    let mut f1 = f(x1);
    let mut f2 = f(x2);
    let key = |v: Option<f64>| v.unwrap_or(f64::INFINITY);
    for _ in 0..2000 {
        if hi - lo <= 4.0 * f64::EPSILON * lo.abs().max(hi.abs()) || hi - lo < 1e-300 {
            break;
        }
        if key(f1) <= key(f2) {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - GOLDEN * (hi - lo);
            f1 = f(x1);
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + GOLDEN * (hi - lo);
            f2 = f(x2);
        }
        // reused points drift off the golden ratio; re-seed once out of order
        if !(lo < x1 && x1 < x2 && x2 < hi) {
            x1 = hi - GOLDEN * (hi - lo);
            x2 = lo + GOLDEN * (hi - lo);
            if !(x1 < x2) {
                break;
            }
            f1 = f(x1);
            f2 = f(x2);
        }
    }
    // endpoints compete too, so a boundary minimum is recognised as such
    let mut best = if key(f1) <= key(f2) { (x1, f1) } else { (x2, f2) };
    for x in [a, b] {
        let v = f(x);
        if key(v) < key(best.1) {
            best = (x, v);
        }
    }
    best
}

fn jacobian(r: &dyn Fn(&[f64]) -> Option<Vec<f64>>, x: &[f64], rows: usize, step: FdStep) -> Option<Vec<f64>> {
    let n = x.len();
    let mut jac = vec![0.0; rows * n];
    let xn = norm(x);
    let mut xp = x.to_vec();
    for j in 0..n {
        let h = match step {
            FdStep::Relative(c) => c * x[j].abs().max(xn).max(1e-100),
            FdStep::Scaled(c) => c * (1.0 + xn),
        };
        xp[j] = x[j] + h;
        let fp = r(&xp)?;
        xp[j] = x[j] - h;
        let fm = r(&xp)?;
        xp[j] = x[j];
        let denom = (x[j] + h) - (x[j] - h);
        for i in 0..rows {
            jac[i * n + j] = (fp[i] - fm[i]) / denom;
        }
    }
    Some(jac)
}

/// Drives `‖r(x)‖` toward zero from `x0`. Returns the final point and
/// residual norm; acceptance is left to the caller.
pub fn refine_root(r: &dyn Fn(&[f64]) -> Option<Vec<f64>>, x0: &[f64], opts: &NewtonOptions) -> Option<(Vec<f64>, f64)> {
    let n = x0.len();
    let mut x = x0.to_vec();
    let mut rx = r(&x)?;
    let rows = rx.len();
    let mut rn = norm(&rx);
    let mut stalls = 0usize;
    let mut compass = 1e-2 * (1.0 + norm(&x));
    for _ in 0..opts.max_iter {
        if rn == 0.0 {
            break;
        }
        let mut improved = false;
        if let Some(jac) = jacobian(r, &x, rows, opts.fd_step) {
            let diag = (0..n)
                .map(|j| (0..rows).map(|i| jac[i * n + j].powi(2)).sum::<f64>())
                .fold(0.0, f64::max);
            let mut lambda = 0.0;
            for attempt in 0..8 {
                let step = if rows == n && lambda == 0.0 {
                    solve(jac.clone(), rx.iter().map(|v| -v).collect())
                } else {
                    damped_normal_step(&jac, rows, n, &rx, lambda)
                };
                if let Some(d) = step {
                    // backtracking on the residual norm
                    let mut t = 1.0;
                    for _ in 0..12 {
                        let cand: Vec<f64> = x.iter().zip(&d).map(|(a, b)| a + t * b).collect();
                        if let Some(rc) = r(&cand) {
                            let cn = norm(&rc);
                            if cn < rn {
                                x = cand;
                                rx = rc;
                                rn = cn;
                                improved = true;
                                break;
                            }
                        }
                        t *= 0.5;
                    }
                }
                if improved {
                    break;
                }
                lambda = if attempt == 0 {
                    (1e-6 * diag).max(1e-300)
                } else {
                    lambda * 100.0
                };
            }
        }
        if improved {
            stalls = 0;
            continue;
        }
        stalls += 1;
        if stalls < opts.stall_limit {
            continue;
        }
        // derivative-free fallback: compass search with shrinking step
        let floor = 1e-16 * (1.0 + norm(&x));
        let mut found = false;
        while compass > floor && !found {
            'dirs: for j in 0..n {
                for s in [1.0, -1.0] {
                    let mut cand = x.clone();
                    cand[j] += s * compass;
                    if let Some(rc) = r(&cand) {
                        let cn = norm(&rc);
                        if cn < rn {
                            x = cand;
                            rx = rc;
                            rn = cn;
                            found = true;
                            break 'dirs;
                        }
                    }
                }
            }
            if !found {
                compass *= 0.5;
            }
        }
        if !found {
            break;
        }
        stalls = 0;
    }
    Some((x, rn))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample(g: &dyn Fn(f64) -> Option<f64>, lo: f64, hi: f64, k: usize) -> (Vec<f64>, Vec<Option<f64>>) {
        let grid: Vec<f64> = (0..k).map(|i| lo + (hi - lo) * i as f64 / (k - 1) as f64).collect();
        let vals = grid.iter().map(|&t| g(t)).collect();
        (grid, vals)
    }

    #[test]
    fn bisection_reaches_float_resolution() {
        let g = |t: f64| Some(t * t * t - 0.001);
        let (grid, vals) = sample(&g, -3.0, 3.0, 64);
        let r = roots_1d(&g, &grid, &vals, 1e-7);
        assert_eq!(r.len(), 1);
        assert!((r[0] - 0.1).abs() < 1e-15);
    }

    #[test]
    fn touching_and_split_roots() {
        let g = |t: f64| Some(t * t);
        let (grid, vals) = sample(&g, -1.0, 1.0, 64);
        let r = roots_1d(&g, &grid, &vals, 1e-7);
        assert_eq!(r.len(), 1);
        assert!(r[0].abs() < 1e-12);

        let y = 2f64.powi(-200);
        let g = move |t: f64| Some(t * t - y);
        let (grid, vals) = sample(&g, -1.0, 1.0, 64);
        let r = roots_1d(&g, &grid, &vals, 1e-7);
        assert_eq!(r.len(), 2);
        assert!((r[1] - 2f64.powi(-100)).abs() < 1e-15 * 2f64.powi(-100));
    }

    #[test]
    fn zero_plateau_collapses_to_midpoint() {
        let g = |t: f64| {
            Some(if t > 0.0 {
                (-1.0 / t).exp()
            } else if t < 0.0 {
                -(1.0 / t).exp()
            } else {
                0.0
            })
        };
        let (grid, vals) = sample(&g, -1.0, 1.0, 64);
        let r = roots_1d(&g, &grid, &vals, 1e-7);
        assert_eq!(r.len(), 1);
        assert!(r[0].abs() < 1e-12, "{r:?}");
    }

    #[test]
    fn newton_on_complex_square() {
        let target = [1e-30, 0.0];
        let r = move |x: &[f64]| Some(vec![x[0] * x[0] - x[1] * x[1] - target[0], 2.0 * x[0] * x[1] - target[1]]);
        let (x, res) = refine_root(&r, &[0.02, 0.01], &NewtonOptions::default()).unwrap();
        assert!(res < 1e-40, "{res}");
        assert!((x[0].abs() - 1e-15).abs() < 1e-25);
    }
}
