//! Solution sets through the normal equation `𝓕(u) + p = 0`, and a
//! brute-force scan used to cross-check them.

use rayon::prelude::*;

use super::{vi_residual, NormalMap, VIProblem};
use crate::error::{Error, Result};
use crate::linalg::{dist, norm};
use crate::map_model::roots::{golden_min, NewtonOptions};
use crate::map_model::{AnalysisBox, GridRootSolver, ImageOracle, PointSet};
use crate::metrics::PROJECTION_TOL;

/// Normal-equation solver with the grid of `𝓕` over `ubox` cached, so
/// that many parameters can be solved against one setup.
pub struct ViSolver<'a> {
    normal: &'a NormalMap,
    roots: GridRootSolver<'a>,
    probes: Vec<Vec<f64>>,
    tol: f64,
    accept: f64,
}

impl<'a> ViSolver<'a> {
    pub fn new(normal: &'a NormalMap, ubox: &AnalysisBox, tol: f64) -> Result<Self> {
        let n = normal.problem().n();
        if ubox.dim() != n {
            return Err(Error::dim("normal equation box", n, ubox.dim()));
        }
        ubox.validate()?;
        if !(tol > 0.0 && tol.is_finite()) {
            return Err(Error::Invalid {
                what: "tolerance",
                reason: format!("must be positive and finite, got {tol}"),
            });
        }
        Ok(ViSolver {
            normal,
            roots: GridRootSolver::new(normal, ubox, tol, NewtonOptions::default()),
            probes: normal.problem().probe_points(ubox),
            tol,
            accept: tol * ubox.diameter().max(1.0),
        })
    }

    pub fn problem(&self) -> &VIProblem {
        self.normal.problem()
    }

    pub fn probes(&self) -> &[Vec<f64>] {
        &self.probes
    }

    /// `{u ∈ ubox : ‖𝓕(u) + p‖ ≤ tol}`.
    pub fn normal_roots(&self, p: &[f64]) -> Result<PointSet> {
        self.problem().check_parameter(p)?;
        let target: Vec<f64> = p.iter().map(|v| -v).collect();
        self.roots.image(&target)
    }

    /// `Π_C` of the normal-equation roots, each checked against the VI.
    /// A root with `‖𝓕(u) + p‖ ≤ tol` bounds the VI residual by `tol` times
    /// the probe distance, so the check uses `tol·max(1, diam(ubox))`.
    pub fn solutions(&self, p: &[f64]) -> Result<PointSet> {
        let roots = self.normal_roots(p)?;
        let problem = self.problem();
        let xs = roots
            .points()
            .iter()
            .map(|u| problem.project(u))
            .collect::<Result<Vec<_>>>()?;
        // Π_C is injective on the roots, so only numerical copies merge.
        let acc = self.accuracy();
        let set = PointSet::merged_by(xs, self.tol, |a, b| {
            dist(a, b) <= acc.max(4.0 * f64::EPSILON * norm(a).max(norm(b)))
        });
        for x in set.points() {
            let r = vi_residual(problem, p, x, &self.probes, self.tol)?;
            if r.value() > self.accept {
                return Err(Error::Consistency(format!(
                    "normal-map solution {x:?} for p = {p:?} has VI residual {}",
                    r.value()
                )));
            }
        }
        Ok(set)
    }
}

impl ImageOracle for ViSolver<'_> {
    fn dim_in(&self) -> usize {
        self.problem().n()
    }

    fn dim_out(&self) -> usize {
        self.problem().n()
    }

    fn image(&self, p: &[f64]) -> Result<PointSet> {
        self.solutions(p)
    }

    fn accuracy(&self) -> f64 {
        self.roots.accuracy() + self.problem().set().projection_accuracy(PROJECTION_TOL)
    }

    fn resolution_at(&self, p: &[f64]) -> f64 {
        let minus: Vec<f64> = p.iter().map(|v| -v).collect();
        self.roots.resolution_at(&minus)
    }
}

/// All roots of the normal equation `𝓕(u) = −p` in `ubox`.
pub fn solve_normal_equation(problem: &VIProblem, p: &[f64], ubox: &AnalysisBox, tol: f64) -> Result<PointSet> {
    let normal = NormalMap::new(problem.clone());
    ViSolver::new(&normal, ubox, tol)?.normal_roots(p)
}

/// `𝒮(p) = Π_C(𝓕⁻¹(−p))`, each point validated by the VI residual.
pub fn solution_set(problem: &VIProblem, p: &[f64], ubox: &AnalysisBox, tol: f64) -> Result<PointSet> {
    let normal = NormalMap::new(problem.clone());
    ViSolver::new(&normal, ubox, tol)?.solutions(p)
}

/// Natural residual `‖x − Π_C(x − (p + f(x)))‖`, zero exactly on `𝒮(p)`.
fn natural_residual(problem: &VIProblem, p: &[f64], x: &[f64]) -> Option<f64> {
    let g = problem.shifted(p, x).ok()?;
    let step: Vec<f64> = x.iter().zip(&g).map(|(a, b)| a - b).collect();
    let y = problem.project(&step).ok()?;
    Some(dist(x, &y))
}

fn descend(phi: &dyn Fn(&[f64]) -> Option<f64>, x: &[f64], step: f64) -> Option<(Vec<f64>, f64)> {
    let mut x = x.to_vec();
    let mut fx = phi(&x)?;
    let mut h = 0.5 * step;
    while h > 1e-14 * step {
        let mut moved = false;
        for j in 0..x.len() {
            for s in [1.0, -1.0] {
                let mut c = x.clone();
                c[j] += s * h;
                if let Some(v) = phi(&c) {
                    if v < fx {
                        x = c;
                        fx = v;
                        moved = true;
                    }
                }
            }
        }
        if !moved {
            h *= 0.5;
        }
    }
    Some((x, fx))
}

/// `𝒮(p)` by scanning the natural residual over the grid of `grid_box`
/// without going through the normal map. Grid local minima are polished
/// (golden section in 1-D, compass search otherwise) and kept when the
/// residual is at most `tol`; results closer than one grid step merge.
pub fn solution_set_by_scan(problem: &VIProblem, p: &[f64], grid_box: &AnalysisBox, tol: f64) -> Result<PointSet> {
    problem.check_parameter(p)?;
    if grid_box.dim() != problem.n() {
        return Err(Error::dim("scan box", problem.n(), grid_box.dim()));
    }
    grid_box.validate()?;
    let n = grid_box.dim();
    let res = grid_box.resolution;
    let phi = |x: &[f64]| natural_residual(problem, p, x);
    let values: Vec<Option<f64>> = (0..grid_box.num_points())
        .into_par_iter()
        .map(|i| phi(&grid_box.point(i)))
        .collect();
    let h = (0..n).map(|a| grid_box.step(a)).fold(0.0, f64::max);
    let stride = |a: usize| res.pow((n - 1 - a) as u32);

    let minima: Vec<usize> = (0..values.len())
        .filter(|&i| {
            let Some(v) = values[i] else { return false };
            (0..n).all(|a| {
                let c = (i / stride(a)) % res;
                let left = (c > 0).then(|| values[i - stride(a)]).flatten();
                let right = (c + 1 < res).then(|| values[i + stride(a)]).flatten();
                left.map_or(true, |w| v <= w) && right.map_or(true, |w| v <= w)
            })
        })
        .collect();

    let found: Vec<Vec<f64>> = minima
        .par_iter()
        .filter_map(|&i| {
            let x0 = grid_box.point(i);
            let (x, v) = if n == 1 {
                let (lo, hi) = (x0[0] - h, x0[0] + h);
                let (lo, hi) = (lo.max(grid_box.lo[0]), hi.min(grid_box.hi[0]));
                let (t, v) = golden_min(&|t| phi(&[t]), lo, hi);
                (vec![t], v?)
            } else {
                descend(&phi, &x0, h)?
            };
            (v <= tol).then_some(x)
        })
        .collect();
    Ok(PointSet::merged_by(found, tol, |a, b| dist(a, b) <= h))
}

#[cfg(test)]
mod tests {
    use super::super::tests::nonneg;
    use super::*;
    use crate::metrics::ConvexSet;

    fn line() -> AnalysisBox {
        AnalysisBox::new(vec![-3.0], vec![3.0], 61).unwrap()
    }

    #[test]
    fn identity_on_half_line() {
        let id = VIProblem::parse(&["x1"], nonneg()).unwrap();
        let u = solve_normal_equation(&id, &[1.0], &line(), 1e-7).unwrap();
        assert_eq!(u.len(), 1);
        assert!((u.points()[0][0] + 1.0).abs() < 1e-9);
        let u = solve_normal_equation(&id, &[-1.0], &line(), 1e-7).unwrap();
        assert!((u.points()[0][0] - 1.0).abs() < 1e-9);
        let s = solution_set(&id, &[1.0], &line(), 1e-7).unwrap();
        assert_eq!(s.len(), 1);
        assert!(s.points()[0][0].abs() < 1e-9);
        let s = solution_set(&id, &[-1.0], &line(), 1e-7).unwrap();
        assert!((s.points()[0][0] - 1.0).abs() < 1e-9);
    }

    #[test]
    fn squaring_map_two_solutions() {
        let sq = VIProblem::parse(&["x1^2-x2^2", "2*x1*x2"], ConvexSet::WholeSpace { dim: 2 }).unwrap();
        let ubox = AnalysisBox::new(vec![-2.0, -2.0], vec![2.0, 2.0], 33).unwrap();
        let s = solution_set(&sq, &[-1.0, 0.0], &ubox, 1e-7).unwrap();
        assert_eq!(s.len(), 2, "{s:?}");
        for (x, want) in s.points().iter().zip([-1.0, 1.0]) {
            assert!((x[0] - want).abs() < 1e-8 && x[1].abs() < 1e-8, "{x:?}");
        }
    }

    #[test]
    fn scan_agrees_on_fold() {
        let fold = VIProblem::parse(&["x1^3-x1"], ConvexSet::WholeSpace { dim: 1 }).unwrap();
        let fine = AnalysisBox::new(vec![-2.0], vec![2.0], 4001).unwrap();
        for p in [-0.3, 0.0, 0.1, 0.5] {
            let a = solution_set(&fold, &[p], &line(), 1e-7).unwrap();
            let b = solution_set_by_scan(&fold, &[p], &fine, 1e-7).unwrap();
            assert_eq!(a.len(), b.len(), "p = {p}: {a:?} vs {b:?}");
            for (x, y) in a.points().iter().zip(b.points()) {
                assert!(dist(x, y) <= fine.step(0), "{x:?} {y:?}");
            }
        }
    }
}
