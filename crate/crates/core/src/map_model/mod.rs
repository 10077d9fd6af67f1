//! Computable set-valued maps `F: ℝⁿ ⇉ ℝᵐ` restricted to analysis boxes.
//!
//! Every query goes through an [`ImageOracle`], which answers `F(x) ∩ box`
//! as a finite [`PointSet`]. Oracles are built once per box so that grid
//! precomputation is shared by the many queries an estimator issues.

pub mod roots;

use std::fmt;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::expr::{ExprError, Expression};
use crate::linalg::{dist, dot, norm};
use crate::metrics::Halfspace;
use roots::{golden_min, refine_root, roots_1d, NewtonOptions};

/// Points closer than `DEDUP_FACTOR · tol · diam(box)` are merged.
pub const DEDUP_FACTOR: f64 = 10.0;

/// Default seeds per axis.
pub fn default_resolution(dim: usize) -> usize {
    if dim <= 2 {
        64
    } else {
        16
    }
}

/// An axis-aligned box with a uniform grid of `resolution` points per axis,
/// both corners included.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnalysisBox {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
    pub resolution: usize,
}

impl AnalysisBox {
    pub fn new(lo: Vec<f64>, hi: Vec<f64>, resolution: usize) -> Result<Self> {
        let b = AnalysisBox { lo, hi, resolution };
        b.validate()?;
        Ok(b)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |reason: String| Err(Error::Invalid {
            what: "analysis box",
            reason,
        });
        if self.lo.is_empty() || self.lo.len() != self.hi.len() {
            return bad("lo and hi must have equal positive length".into());
        }
        if self.lo.iter().zip(&self.hi).any(|(l, h)| !(l < h) || !l.is_finite() || !h.is_finite()) {
            return bad("requires finite lo < hi componentwise".into());
        }
        if self.resolution < 2 {
            return bad(format!("resolution must be >= 2, got {}", self.resolution));
        }
        Ok(())
    }

    /// A box of half-width `radius` around `center`.
    pub fn around(center: &[f64], radius: f64, resolution: usize) -> Self {
        AnalysisBox {
            lo: center.iter().map(|c| c - radius).collect(),
            hi: center.iter().map(|c| c + radius).collect(),
            resolution,
        }
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    pub fn diameter(&self) -> f64 {
        dist(&self.lo, &self.hi)
    }

    pub fn step(&self, axis: usize) -> f64 {
        (self.hi[axis] - self.lo[axis]) / (self.resolution - 1) as f64
    }

    pub fn with_resolution(&self, resolution: usize) -> Self {
        AnalysisBox {
            resolution,
            ..self.clone()
        }
    }

    pub fn num_points(&self) -> usize {
        self.resolution.pow(self.dim() as u32)
    }

    /// Coordinate `i` along `axis`; the last grid point is exactly `hi`.
    pub fn coord(&self, axis: usize, i: usize) -> f64 {
        if i + 1 == self.resolution {
            self.hi[axis]
        } else {
            self.lo[axis] + self.step(axis) * i as f64
        }
    }

    /// Grid point with flat index `idx` (last axis fastest).
    pub fn point(&self, idx: usize) -> Vec<f64> {
        let n = self.dim();
        let mut out = vec![0.0; n];
        let mut rem = idx;
        for axis in (0..n).rev() {
            out[axis] = self.coord(axis, rem % self.resolution);
            rem /= self.resolution;
        }
        out
    }

    pub fn points(&self) -> Vec<Vec<f64>> {
        (0..self.num_points()).map(|i| self.point(i)).collect()
    }

    pub fn contains(&self, x: &[f64], slack: f64) -> bool {
        x.len() == self.dim()
            && x
                .iter()
                .zip(self.lo.iter().zip(&self.hi))
                .all(|(v, (l, h))| *v >= l - slack && *v <= h + slack)
    }

    pub(crate) fn dedup_radius(&self, tol: f64) -> f64 {
        DEDUP_FACTOR * tol * self.diameter()
    }
}

/// A finite approximation of a subset of ℝᵏ. Points are kept in canonical
/// lexicographic order with no two closer than the deduplication radius.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PointSet {
    points: Vec<Vec<f64>>,
    tolerance: f64,
}

impl PointSet {
    pub fn empty(tolerance: f64) -> Self {
        PointSet {
            points: Vec::new(),
            tolerance,
        }
    }

    /// Wraps points without merging; sorts them canonically.
    pub fn from_points(mut points: Vec<Vec<f64>>, tolerance: f64) -> Self {
        points.sort_by(|a, b| lex_cmp(a, b));
        PointSet { points, tolerance }
    }

    /// Sorts and merges points within `radius` of an earlier kept point.
    pub fn deduplicated(points: Vec<Vec<f64>>, radius: f64, tolerance: f64) -> Self {
        let mut sorted = points;
        sorted.sort_by(|a, b| lex_cmp(a, b));
        let mut kept: Vec<Vec<f64>> = Vec::with_capacity(sorted.len());
        for p in sorted {
            if !kept.iter().any(|q| dist(q, &p) <= radius) {
                kept.push(p);
            }
        }
        PointSet {
            points: kept,
            tolerance,
        }
    }

    /// Sorts and merges a point into an earlier kept one when `same` says so.
    pub fn merged_by(points: Vec<Vec<f64>>, tolerance: f64, same: impl Fn(&[f64], &[f64]) -> bool) -> Self {
        let mut sorted = points;
        sorted.sort_by(|a, b| lex_cmp(a, b));
        let mut kept: Vec<Vec<f64>> = Vec::with_capacity(sorted.len());
        for p in sorted {
            if !kept.iter().any(|q| same(q, &p)) {
                kept.push(p);
            }
        }
        PointSet {
            points: kept,
            tolerance,
        }
    }

    pub fn points(&self) -> &[Vec<f64>] {
        &self.points
    }

    pub fn into_points(self) -> Vec<Vec<f64>> {
        self.points
    }

    pub fn tolerance(&self) -> f64 {
        self.tolerance
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

pub(crate) fn lex_cmp(a: &[f64], b: &[f64]) -> std::cmp::Ordering {
    for (x, y) in a.iter().zip(b) {
        match x.total_cmp(y) {
            std::cmp::Ordering::Equal => continue,
            o => return o,
        }
    }
    a.len().cmp(&b.len())
}

/// A continuous single-valued map ℝⁿ → ℝᵐ.
pub trait VectorMap: Send + Sync + fmt::Debug {
    fn dim_in(&self) -> usize;
    fn dim_out(&self) -> usize;
    fn eval(&self, x: &[f64]) -> Result<Vec<f64>>;
}

/// Component expressions `(f₁, …, f_m)` sharing one input dimension.
#[derive(Debug, Clone)]
pub struct ExprMap {
    n: usize,
    components: Vec<Expression>,
}

impl ExprMap {
    pub fn new(n: usize, components: Vec<Expression>) -> Result<Self> {
        if components.is_empty() {
            return Err(Error::Invalid {
                what: "expression map",
                reason: "needs at least one component".into(),
            });
        }
        for c in &components {
            if c.arity() > n {
                return Err(ExprError::VariableOutOfRange { index: c.arity(), arity: n }.into());
            }
        }
        let components = components
            .into_iter()
            .map(|c| Expression::parse_with_arity(&c.to_string(), n))
            .collect::<std::result::Result<_, _>>()?;
        Ok(ExprMap { n, components })
    }

    pub fn parse(n: Option<usize>, sources: &[impl AsRef<str>]) -> Result<Self> {
        let parsed: Vec<Expression> = sources
            .iter()
            .map(|s| Expression::parse(s.as_ref()))
            .collect::<std::result::Result<_, _>>()?;
        let n = n.unwrap_or_else(|| parsed.iter().map(Expression::arity).max().unwrap_or(0).max(1));
        ExprMap::new(n, parsed)
    }

    pub fn components(&self) -> &[Expression] {
        &self.components
    }
}

impl VectorMap for ExprMap {
    fn dim_in(&self) -> usize {
        self.n
    }

    fn dim_out(&self) -> usize {
        self.components.len()
    }

    fn eval(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.n {
            return Err(Error::dim("map evaluation", self.n, x.len()));
        }
        self.components
            .iter()
            .map(|c| c.eval(x).map_err(Error::from))
            .collect()
    }
}

/// A convex polyhedron in ℝ^{n+m}: constraints act on `(x, y)` stacked.
pub type GraphPiece = Vec<Halfspace>;

#[derive(Debug, Clone)]
pub enum MapModel {
    SingleValued(Arc<dyn VectorMap>),
    Polyhedral {
        n: usize,
        m: usize,
        pieces: Vec<GraphPiece>,
    },
    Inverse(Box<MapModel>),
    GraphSample {
        n: usize,
        m: usize,
        pairs: Vec<(Vec<f64>, Vec<f64>)>,
    },
}

/// Answers `F(x) ∩ box` for a fixed box and tolerance.
pub trait ImageOracle: Sync {
    fn dim_in(&self) -> usize;
    fn dim_out(&self) -> usize;
    fn image(&self, x: &[f64]) -> Result<PointSet>;

    /// Input distance around `x` below which images are not resolved:
    /// arguments that close to `x` may get the same answer by rounding alone.
    fn resolution_at(&self, x: &[f64]) -> f64 {
        let _ = x;
        0.0
    }

    /// Distance to which reported image points are reliable.
    fn accuracy(&self) -> f64 {
        0.0
    }
}

impl MapModel {
    pub fn single_valued(map: impl VectorMap + 'static) -> Self {
        MapModel::SingleValued(Arc::new(map))
    }

    /// Convenience constructor from expression sources.
    pub fn from_exprs(sources: &[&str]) -> Result<Self> {
        Ok(MapModel::single_valued(ExprMap::parse(None, sources)?))
    }

    pub fn inverse(self) -> Self {
        MapModel::Inverse(Box::new(self))
    }

    pub fn n(&self) -> usize {
        match self {
            MapModel::SingleValued(f) => f.dim_in(),
            MapModel::Polyhedral { n, .. } | MapModel::GraphSample { n, .. } => *n,
            MapModel::Inverse(g) => g.m(),
        }
    }

    pub fn m(&self) -> usize {
        match self {
            MapModel::SingleValued(f) => f.dim_out(),
            MapModel::Polyhedral { m, .. } | MapModel::GraphSample { m, .. } => *m,
            MapModel::Inverse(g) => g.n(),
        }
    }

    /// The underlying single-valued map, looking through double inverses.
    pub fn as_single_valued(&self) -> Option<&Arc<dyn VectorMap>> {
        match self {
            MapModel::SingleValued(f) => Some(f),
            MapModel::Inverse(g) => match g.as_ref() {
                MapModel::Inverse(h) => h.as_single_valued(),
                _ => None,
            },
            _ => None,
        }
    }

    /// Oracle for `x ↦ F(x) ∩ ybox`.
    pub fn forward_oracle<'a>(&'a self, ybox: &AnalysisBox, tol: f64) -> Result<Box<dyn ImageOracle + 'a>> {
        check_tol(tol)?;
        if ybox.dim() != self.m() {
            return Err(Error::dim("forward box", self.m(), ybox.dim()));
        }
        Ok(match self {
            MapModel::SingleValued(f) => Box::new(DirectImage { map: f.as_ref() }),
            MapModel::Polyhedral { n, m, pieces } => Box::new(Slicer {
                pieces,
                n: *n,
                m: *m,
                given_first: true,
                free_box: ybox.clone(),
                tol,
            }),
            MapModel::Inverse(g) => g.inverse_oracle(ybox, tol)?,
            MapModel::GraphSample { n, m, pairs } => Box::new(SampleFilter {
                pairs,
                n: *n,
                m: *m,
                forward: true,
                free_box: ybox.clone(),
                tol,
            }),
        })
    }

    /// Oracle for `y ↦ F⁻¹(y) ∩ xbox`.
    pub fn inverse_oracle<'a>(&'a self, xbox: &AnalysisBox, tol: f64) -> Result<Box<dyn ImageOracle + 'a>> {
        check_tol(tol)?;
        if xbox.dim() != self.n() {
            return Err(Error::dim("preimage box", self.n(), xbox.dim()));
        }
        xbox.validate()?;
        Ok(match self {
            MapModel::SingleValued(f) => Box::new(GridRootSolver::new(f.as_ref(), xbox, tol, NewtonOptions::default())),
            MapModel::Polyhedral { n, m, pieces } => Box::new(Slicer {
                pieces,
                n: *n,
                m: *m,
                given_first: false,
                free_box: xbox.clone(),
                tol,
            }),
            MapModel::Inverse(g) => g.forward_oracle(xbox, tol)?,
            MapModel::GraphSample { n, m, pairs } => Box::new(SampleFilter {
                pairs,
                n: *n,
                m: *m,
                forward: false,
                free_box: xbox.clone(),
                tol,
            }),
        })
    }

    /// `F(x) ∩ ybox`.
    pub fn forward_set(&self, x: &[f64], ybox: &AnalysisBox, tol: f64) -> Result<PointSet> {
        self.forward_oracle(ybox, tol)?.image(x)
    }

    /// `F⁻¹(y) ∩ xbox`; an empty set is a valid answer.
    pub fn inverse_set(&self, y: &[f64], xbox: &AnalysisBox, tol: f64) -> Result<PointSet> {
        self.inverse_oracle(xbox, tol)?.image(y)
    }

    /// Whether `y ∈ F(xbox)`, i.e. the preimage is nonempty.
    pub fn range_membership(&self, y: &[f64], xbox: &AnalysisBox, tol: f64) -> Result<bool> {
        Ok(!self.inverse_set(y, xbox, tol)?.is_empty())
    }

    /// Numerical closed-graph spot check for single-valued maps. Each grid
    /// edge is bisected toward its larger half-jump; a jump that survives
    /// sixty halvings undiminished marks a discontinuity.
    pub fn check_closed_graph(&self, xbox: &AnalysisBox) -> Result<()> {
        let Some(f) = self.as_single_valued() else {
            return Ok(());
        };
        let n = xbox.dim();
        let mut res = xbox.resolution.min(33);
        while res > 3 && res.pow(n as u32) > 5000 {
            res -= 1;
        }
        let coarse = xbox.with_resolution(res);
        let jump_at = |x: &[f64], axis: usize| -> Option<(Vec<f64>, usize)> {
            let eval = |t: f64| {
                let mut p = x.to_vec();
                p[axis] = t;
                f.eval(&p).ok()
            };
            let (mut a, mut b) = (x[axis], x[axis] + coarse.step(axis));
            let (mut fa, mut fb) = (eval(a)?, eval(b)?);
            let first = dist(&fa, &fb);
            let floor = 1e-6 * (1.0 + norm(&fa).max(norm(&fb)));
            if first <= floor {
                return None;
            }
            for _ in 0..60 {
                let m = 0.5 * (a + b);
                if m <= a || m >= b {
                    break;
                }
                let fm = eval(m)?;
                if dist(&fa, &fm) >= dist(&fm, &fb) {
                    b = m;
                    fb = fm;
                } else {
                    a = m;
                    fa = fm;
                }
                if dist(&fa, &fb) < 0.5 * first {
                    return None;
                }
            }
            let mut p = x.to_vec();
            p[axis] = a;
            Some((p, axis))
        };
        let bad = (0..coarse.num_points()).into_par_iter().find_map_first(|idx| {
            let x = coarse.point(idx);
            (0..n)
                .filter(|&axis| x[axis] < coarse.hi[axis])
                .find_map(|axis| jump_at(&x, axis))
        });
        match bad {
            Some((x, axis)) => Err(Error::Invalid {
                what: "map",
                reason: format!(
                    "graph is not closed near x = {x:?} along axis {}: value jump persists under refinement",
                    axis + 1
                ),
            }),
            None => Ok(()),
        }
    }
}

fn check_tol(tol: f64) -> Result<()> {
    if tol > 0.0 && tol.is_finite() {
        Ok(())
    } else {
        Err(Error::Invalid {
            what: "tolerance",
            reason: format!("must be positive and finite, got {tol}"),
        })
    }
}

struct DirectImage<'a> {
    map: &'a dyn VectorMap,
}

impl ImageOracle for DirectImage<'_> {
    fn dim_in(&self) -> usize {
        self.map.dim_in()
    }

    fn dim_out(&self) -> usize {
        self.map.dim_out()
    }

    fn image(&self, x: &[f64]) -> Result<PointSet> {
        let y = self.map.eval(x)?;
        Ok(PointSet::from_points(vec![y], 0.0))
    }
}

/// Preimages of a single-valued map over a seeded grid.
/// Seeds sit this far into their cell, off centre: symmetric maps keep
/// Newton on an invariant line through a centred seed.
const SEED_OFFSET: f64 = 0.618_033_988_749_894_9;

pub(crate) struct GridRootSolver<'a> {
    map: &'a dyn VectorMap,
    xbox: AnalysisBox,
    tol: f64,
    opts: NewtonOptions,
    grid_values: Vec<Option<Vec<f64>>>,
    /// Local extreme values of a scalar map over the box, sorted.
    critical_values: Vec<f64>,
}

impl<'a> GridRootSolver<'a> {
    pub(crate) fn new(map: &'a dyn VectorMap, xbox: &AnalysisBox, tol: f64, opts: NewtonOptions) -> Self {
        let grid_values = (0..xbox.num_points())
            .into_par_iter()
            .map(|i| map.eval(&xbox.point(i)).ok())
            .collect();
        let mut solver = GridRootSolver {
            map,
            xbox: xbox.clone(),
            tol,
            opts,
            grid_values,
            critical_values: Vec::new(),
        };
        if map.dim_in() == 1 && map.dim_out() == 1 {
            solver.critical_values = solver.scalar_extrema();
        }
        solver
    }

    fn scalar_extrema(&self) -> Vec<f64> {
        let v: Vec<Option<f64>> = self.grid_values.iter().map(|v| v.as_ref().map(|v| v[0])).collect();
        let f = |t: f64| self.map.eval(&[t]).ok().map(|v| v[0]);
        let mut out = Vec::new();
        for i in 0..v.len() {
            if i > 0 && i + 1 < v.len() {
                if let (Some(a), Some(b), Some(c)) = (v[i - 1], v[i], v[i + 1]) {
                    if (b <= a && b <= c) || (b >= a && b >= c) {
                        out.push(b);
                    }
                }
            }
            if i + 1 == v.len() {
                break;
            }
            let (a, b) = (self.xbox.coord(0, i), self.xbox.coord(0, i + 1));
            let width = b - a;
            for sg in [1.0, -1.0] {
                let (xm, fm) = golden_min(&|t| f(t).map(|v| sg * v), a, b);
                if fm.is_some() && xm - a > 1e-9 * width && b - xm > 1e-9 * width {
                    out.push(sg * fm.unwrap());
                }
            }
        }
        out.sort_by(f64::total_cmp);
        out.dedup();
        out
    }

    fn solve_scalar(&self, y: f64) -> Vec<Vec<f64>> {
        let grid: Vec<f64> = (0..self.xbox.resolution).map(|i| self.xbox.coord(0, i)).collect();
        let values: Vec<Option<f64>> = self.grid_values.iter().map(|v| v.as_ref().map(|v| v[0] - y)).collect();
        let g = |t: f64| self.map.eval(&[t]).ok().map(|v| v[0] - y);
        // Touching roots must vanish to rounding level; accepting |g| ≤ tol
        // would extend every fold by a band of phantom roots.
        let touch = self.tol.min(self.touch_floor().max(1024.0 * f64::EPSILON * y.abs()));
        roots_1d(&g, &grid, &values, touch)
            .into_iter()
            .filter(|t| self.xbox.contains(&[*t], 0.0))
            .map(|t| vec![t])
            .collect()
    }

    /// Rounding level of the scalar residual over the grid.
    fn touch_floor(&self) -> f64 {
        let scale = self.grid_values.iter().flatten().fold(1f64, |m, v| m.max(v[0].abs()));
        1024.0 * f64::EPSILON * scale
    }

    /// Cells whose corner values, with a margin, could enclose `y`.
    fn candidate_cells(&self, y: &[f64]) -> Vec<Vec<f64>> {
        let n = self.xbox.dim();
        let res = self.xbox.resolution;
        let cells = (res - 1).pow(n as u32);
        let m = y.len();
        let mut out = Vec::new();
        let mut lo = vec![0.0; m];
        let mut hi = vec![0.0; m];
        for cell in 0..cells {
            let mut base = vec![0usize; n];
            let mut rem = cell;
            for axis in (0..n).rev() {
                base[axis] = rem % (res - 1);
                rem /= res - 1;
            }
            lo.iter_mut().for_each(|v| *v = f64::INFINITY);
            hi.iter_mut().for_each(|v| *v = f64::NEG_INFINITY);
            let mut seen = false;
            for corner in 0..(1usize << n) {
                let mut flat = 0;
                for axis in 0..n {
                    flat = flat * res + base[axis] + ((corner >> axis) & 1);
                }
                if let Some(v) = &self.grid_values[flat] {
                    seen = true;
                    for k in 0..m {
                        lo[k] = lo[k].min(v[k]);
                        hi[k] = hi[k].max(v[k]);
                    }
                }
            }
            if !seen {
                continue;
            }
            let extent = (0..m).map(|k| hi[k] - lo[k]).fold(0.0, f64::max);
            let inside = (0..m).all(|k| {
                let pad = 0.5 * extent + 1e-12 * (1.0 + lo[k].abs().max(hi[k].abs()));
                y[k] >= lo[k] - pad && y[k] <= hi[k] + pad
            });
            if inside {
                out.push(
                    (0..n)
                        .map(|axis| self.xbox.coord(axis, base[axis]) + SEED_OFFSET * self.xbox.step(axis))
                        .collect(),
                );
            }
        }
        out
    }
}

impl ImageOracle for GridRootSolver<'_> {
    fn dim_in(&self) -> usize {
        self.map.dim_out()
    }

    fn dim_out(&self) -> usize {
        self.map.dim_in()
    }

    fn image(&self, y: &[f64]) -> Result<PointSet> {
        if y.len() != self.map.dim_out() {
            return Err(Error::dim("preimage target", self.map.dim_out(), y.len()));
        }
        let radius = self.xbox.dedup_radius(self.tol);
        let found: Vec<Vec<f64>> = if self.map.dim_in() == 1 && self.map.dim_out() == 1 {
            self.solve_scalar(y[0])
        } else {
            let resid = |x: &[f64]| {
                self.map
                    .eval(x)
                    .ok()
                    .map(|v| v.iter().zip(y).map(|(a, b)| a - b).collect::<Vec<f64>>())
            };
            let slack = 1e-9 * self.xbox.diameter();
            self.candidate_cells(y)
                .iter()
                .filter_map(|seed| refine_root(&resid, seed, &self.opts))
                .filter(|(x, r)| *r <= self.tol && self.xbox.contains(x, slack))
                .map(|(x, _)| x)
                .collect()
        };
        // Nearby roots are one root only if the residual does not rise
        // between them; this keeps the split roots of tiny targets apart.
        let resid = |x: &[f64]| {
            self.map
                .eval(x)
                .map(|v| dist(&v, y))
                .unwrap_or(f64::INFINITY)
        };
        let same = |p: &[f64], q: &[f64]| {
            let d = dist(p, q);
            if d <= 1e-12 * norm(p).max(norm(q)) {
                return true;
            }
            if d > radius {
                return false;
            }
            let mid: Vec<f64> = p.iter().zip(q).map(|(a, b)| 0.5 * (a + b)).collect();
            resid(&mid) <= resid(p).max(resid(q))
        };
        Ok(PointSet::merged_by(found, self.tol, same))
    }

    /// Bracketed scalar roots are exact to rounding; Newton roots are not,
    /// and a multiple one can sit anywhere within rounding of the box scale.
    fn accuracy(&self) -> f64 {
        if self.map.dim_in() == 1 && self.map.dim_out() == 1 {
            0.0
        } else {
            16.0 * f64::EPSILON * self.xbox.diameter()
        }
    }

    /// Nonzero only near a fold: elsewhere roots cross and are exact.
    fn resolution_at(&self, y: &[f64]) -> f64 {
        if self.critical_values.is_empty() {
            return 0.0;
        }
        let floor = self.touch_floor().min(self.tol);
        let near = self.critical_values.iter().any(|c| (c - y[0]).abs() <= 2.0 * floor);
        if near {
            floor
        } else {
            0.0
        }
    }
}

/// Slices of a polyhedral graph at a fixed `x` (forward) or `y` (inverse).
struct Slicer<'a> {
    pieces: &'a [GraphPiece],
    n: usize,
    m: usize,
    given_first: bool,
    free_box: AnalysisBox,
    tol: f64,
}

impl ImageOracle for Slicer<'_> {
    fn dim_in(&self) -> usize {
        if self.given_first {
            self.n
        } else {
            self.m
        }
    }

    fn dim_out(&self) -> usize {
        if self.given_first {
            self.m
        } else {
            self.n
        }
    }

    fn image(&self, given: &[f64]) -> Result<PointSet> {
        if given.len() != self.dim_in() {
            return Err(Error::dim("polyhedral slice", self.dim_in(), given.len()));
        }
        let (gs, fs) = if self.given_first { (0, self.n) } else { (self.n, 0) };
        let k = self.dim_out();
        let mut found = Vec::new();
        for piece in self.pieces {
            // reduced constraints ⟨a_free, z⟩ ≤ b − ⟨a_given, given⟩
            let reduced: Vec<(Vec<f64>, f64)> = piece
                .iter()
                .map(|h| {
                    let a_given = &h.a[gs..gs + given.len()];
                    (h.a[fs..fs + k].to_vec(), h.b - dot(a_given, given))
                })
                .collect();
            let ok = |z: &[f64]| {
                reduced
                    .iter()
                    .all(|(a, b)| dot(a, z) - b <= self.tol * (1.0 + norm(a)))
            };
            if k == 1 {
                let (mut lo, mut hi) = (self.free_box.lo[0], self.free_box.hi[0]);
                let mut feasible = true;
                for (a, b) in &reduced {
                    if a[0] > 0.0 {
                        hi = hi.min(b / a[0]);
                    } else if a[0] < 0.0 {
                        lo = lo.max(b / a[0]);
                    } else if *b < -self.tol {
                        feasible = false;
                    }
                }
                if feasible && lo <= hi + self.tol {
                    let hi = hi.max(lo);
                    found.push(vec![lo]);
                    found.push(vec![hi]);
                    for i in 0..self.free_box.resolution {
                        let z = self.free_box.coord(0, i);
                        if z > lo && z < hi {
                            found.push(vec![z]);
                        }
                    }
                }
            } else {
                found.extend(self.free_box.points().into_iter().filter(|z| ok(z)));
            }
        }
        Ok(PointSet::deduplicated(found, self.free_box.dedup_radius(self.tol), self.tol))
    }
}

struct SampleFilter<'a> {
    pairs: &'a [(Vec<f64>, Vec<f64>)],
    n: usize,
    m: usize,
    forward: bool,
    free_box: AnalysisBox,
    tol: f64,
}

impl ImageOracle for SampleFilter<'_> {
    fn dim_in(&self) -> usize {
        if self.forward {
            self.n
        } else {
            self.m
        }
    }

    fn dim_out(&self) -> usize {
        if self.forward {
            self.m
        } else {
            self.n
        }
    }

    fn image(&self, given: &[f64]) -> Result<PointSet> {
        if given.len() != self.dim_in() {
            return Err(Error::dim("graph sample query", self.dim_in(), given.len()));
        }
        let found = self
            .pairs
            .iter()
            .map(|(x, y)| if self.forward { (x, y) } else { (y, x) })
            .filter(|(g, z)| dist(g, given) <= self.tol && self.free_box.contains(z, 0.0))
            .map(|(_, z)| z.clone())
            .collect();
        Ok(PointSet::deduplicated(found, self.free_box.dedup_radius(self.tol), self.tol))
    }
}

/// Declarative map description, as found in fixture files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum MapSpec {
    SingleValued {
        #[serde(default)]
        n: Option<usize>,
        exprs: Vec<String>,
    },
    Inverse {
        of: Box<MapSpec>,
    },
    Polyhedral {
        n: usize,
        m: usize,
        pieces: Vec<GraphPiece>,
    },
    GraphSample {
        n: usize,
        m: usize,
        pairs: Vec<(Vec<f64>, Vec<f64>)>,
    },
}

/// Builds a model from its declarative description; errors name the
/// offending field.
pub fn build_from_spec(spec: &MapSpec) -> Result<MapModel> {
    build_at(spec, "map")
}

fn build_at(spec: &MapSpec, path: &str) -> Result<MapModel> {
    match spec {
        MapSpec::SingleValued { n, exprs } => {
            if exprs.is_empty() {
                return Err(Error::fixture(format!("{path}.exprs"), "needs at least one expression"));
            }
            let mut parsed = Vec::with_capacity(exprs.len());
            for (i, src) in exprs.iter().enumerate() {
                let e = Expression::parse(src).map_err(|e| Error::fixture(format!("{path}.exprs[{i}]"), e.to_string()))?;
                parsed.push(e);
            }
            let n = n.unwrap_or_else(|| parsed.iter().map(Expression::arity).max().unwrap_or(0).max(1));
            let map = ExprMap::new(n, parsed).map_err(|e| Error::fixture(format!("{path}.exprs"), e.to_string()))?;
            Ok(MapModel::single_valued(map))
        }
        MapSpec::Inverse { of } => Ok(build_at(of, &format!("{path}.of"))?.inverse()),
        MapSpec::Polyhedral { n, m, pieces } => {
            if pieces.is_empty() {
                return Err(Error::fixture(format!("{path}.pieces"), "needs at least one piece"));
            }
            for (i, piece) in pieces.iter().enumerate() {
                for (j, h) in piece.iter().enumerate() {
                    if h.a.len() != n + m {
                        return Err(Error::fixture(
                            format!("{path}.pieces[{i}][{j}].a"),
                            format!("expected length n + m = {}, got {}", n + m, h.a.len()),
                        ));
                    }
                }
            }
            Ok(MapModel::Polyhedral {
                n: *n,
                m: *m,
                pieces: pieces.clone(),
            })
        }
        MapSpec::GraphSample { n, m, pairs } => {
            for (i, (x, y)) in pairs.iter().enumerate() {
                if x.len() != *n || y.len() != *m {
                    return Err(Error::fixture(format!("{path}.pairs[{i}]"), format!("expected ({n}, {m}) coordinates")));
                }
            }
            Ok(MapModel::GraphSample {
                n: *n,
                m: *m,
                pairs: pairs.clone(),
            })
        }
    }
}
