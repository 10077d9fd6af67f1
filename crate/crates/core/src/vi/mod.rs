//! Parametric variational inequalities
//! `find x ∈ C with ⟨p + f(x), x′ − x⟩ ≥ 0 for all x′ ∈ C`
//! solved through the normal map `𝓕(u) = f(Π_C u) + u − Π_C u`.

mod audit;
mod solve;
mod sweep;

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::linalg::dot;
use crate::map_model::{AnalysisBox, ExprMap, VectorMap};
use crate::metrics::{ConvexSet, ExtendedReal, PROJECTION_TOL};

pub use audit::{vi_equivalence_audit, ViAuditReport};
pub use solve::{solution_set, solution_set_by_scan, solve_normal_equation, ViSolver};
pub use sweep::{sweep_solution_map, test_lower_semicontinuity, LscVerdict, LscWitness, SweepReport};

/// Grid points kept when probing `C` for the residual, across all axes.
/// The projection certificate does the real work; the grid is a cross-check.
const MAX_PROBES: usize = 256;

#[derive(Debug, Clone)]
pub struct VIProblem {
    f: Arc<ExprMap>,
    c: ConvexSet,
}

impl VIProblem {
    pub fn new(f: ExprMap, c: ConvexSet) -> Result<Self> {
        if f.dim_out() != f.dim_in() {
            return Err(Error::dim("vi map f", f.dim_in(), f.dim_out()));
        }
        if c.dim() != f.dim_in() {
            return Err(Error::dim("vi convex set", f.dim_in(), c.dim()));
        }
        c.validate()?;
        Ok(VIProblem { f: Arc::new(f), c })
    }

    pub fn parse(sources: &[impl AsRef<str>], c: ConvexSet) -> Result<Self> {
        Self::new(ExprMap::parse(Some(c.dim()), sources)?, c)
    }

    pub fn n(&self) -> usize {
        self.f.dim_in()
    }

    pub fn f(&self) -> &ExprMap {
        &self.f
    }

    pub fn set(&self) -> &ConvexSet {
        &self.c
    }

    pub fn project(&self, u: &[f64]) -> Result<Vec<f64>> {
        self.c.project(u, PROJECTION_TOL)
    }

    /// `p + f(x)`.
    fn shifted(&self, p: &[f64], x: &[f64]) -> Result<Vec<f64>> {
        Ok(self.f.eval(x)?.iter().zip(p).map(|(a, b)| a + b).collect())
    }

    fn check_parameter(&self, p: &[f64]) -> Result<()> {
        if p.len() != self.n() {
            return Err(Error::dim("vi parameter", self.n(), p.len()));
        }
        Ok(())
    }

    /// Grid points of `probe_box` that lie in `C`.
    pub fn probe_points(&self, probe_box: &AnalysisBox) -> Vec<Vec<f64>> {
        let n = probe_box.dim();
        let cap = (MAX_PROBES as f64).powf(1.0 / n as f64).floor() as usize;
        let res = probe_box.resolution.min(cap.max(2));
        probe_box
            .with_resolution(res)
            .points()
            .into_iter()
            .filter(|x| self.c.contains(x, PROJECTION_TOL))
            .collect()
    }
}

/// The normal map of a [`VIProblem`] as a single-valued map `ℝⁿ → ℝⁿ`.
#[derive(Debug, Clone)]
pub struct NormalMap {
    problem: VIProblem,
}

impl NormalMap {
    pub fn new(problem: VIProblem) -> Self {
        NormalMap { problem }
    }

    pub fn problem(&self) -> &VIProblem {
        &self.problem
    }
}

impl VectorMap for NormalMap {
    fn dim_in(&self) -> usize {
        self.problem.n()
    }

    fn dim_out(&self) -> usize {
        self.problem.n()
    }

    fn eval(&self, u: &[f64]) -> Result<Vec<f64>> {
        if u.len() != self.problem.n() {
            return Err(Error::dim("normal map argument", self.problem.n(), u.len()));
        }
        let x = self.problem.project(u)?;
        let fx = self.problem.f.eval(&x)?;
        Ok(fx.iter().zip(u).zip(&x).map(|((a, b), c)| a + b - c).collect())
    }
}

/// `𝓕(u) = f(Π_C u) + u − Π_C u`.
pub fn normal_map_eval(problem: &VIProblem, u: &[f64]) -> Result<Vec<f64>> {
    if u.iter().any(|v| !v.is_finite()) {
        return Err(Error::Invalid {
            what: "normal map argument",
            reason: "must be finite".into(),
        });
    }
    NormalMap::new(problem.clone()).eval(u)
}

/// `max −⟨p + f(x), x′ − x⟩` over `x′` in `probes` and the certificate
/// point `Π_C(x − (p + f(x)))`. Infinite when `x ∉ C` (within `tol`) or
/// `f(x)` is undefined. At least zero, since `x′ = x` is always included.
pub fn vi_residual(problem: &VIProblem, p: &[f64], x: &[f64], probes: &[Vec<f64>], tol: f64) -> Result<ExtendedReal> {
    problem.check_parameter(p)?;
    if x.len() != problem.n() {
        return Err(Error::dim("vi point", problem.n(), x.len()));
    }
    if !problem.c.contains(x, tol) {
        return Ok(ExtendedReal::INFINITY);
    }
    let Ok(g) = problem.shifted(p, x) else {
        return Ok(ExtendedReal::INFINITY);
    };
    let step: Vec<f64> = x.iter().zip(&g).map(|(a, b)| a - b).collect();
    let cert = problem.project(&step)?;
    let worst = probes
        .iter()
        .chain(std::iter::once(&cert))
        .map(|q| {
            let d: Vec<f64> = q.iter().zip(x).map(|(a, b)| a - b).collect();
            -dot(&g, &d)
        })
        .fold(0.0, f64::max);
    Ok(ExtendedReal::new(worst))
}
