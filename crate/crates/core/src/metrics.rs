//! Distances between points and sets, and Euclidean projections onto
//! closed convex sets.

use std::cmp::Ordering;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{dot, norm, solve};
use crate::map_model::{AnalysisBox, MapModel, PointSet};

/// Default tolerance for projections.
pub const PROJECTION_TOL: f64 = 1e-9;
/// Default residual tolerance for preimage refinement.
pub const PREIMAGE_TOL: f64 = 1e-7;
/// Sweep cap for the polyhedral projection.
pub const PROJECTION_MAX_SWEEPS: usize = 100_000;

/// A nonnegative-or-finite real extended by `+∞`. Never NaN.
///
/// The distance from a point to the empty set is `+∞`.
#[derive(Clone, Copy, PartialEq)]
pub struct ExtendedReal(f64);

impl ExtendedReal {
    pub const INFINITY: ExtendedReal = ExtendedReal(f64::INFINITY);
    pub const ZERO: ExtendedReal = ExtendedReal(0.0);

    /// Panics on NaN and `-∞`.
    pub fn new(v: f64) -> Self {
        assert!(!v.is_nan() && v != f64::NEG_INFINITY, "ExtendedReal from {v}");
        ExtendedReal(v)
    }

    pub fn value(self) -> f64 {
        self.0
    }

    pub fn is_finite(self) -> bool {
        self.0.is_finite()
    }

    pub fn finite(self) -> Option<f64> {
        self.is_finite().then_some(self.0)
    }

    pub fn min(self, other: Self) -> Self {
        if other < self {
            other
        } else {
            self
        }
    }

    pub fn max(self, other: Self) -> Self {
        if other > self {
            other
        } else {
            self
        }
    }
}

impl Eq for ExtendedReal {}

impl PartialOrd for ExtendedReal {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for ExtendedReal {
    fn cmp(&self, other: &Self) -> Ordering {
        self.0.total_cmp(&other.0)
    }
}

impl std::ops::Add for ExtendedReal {
    type Output = ExtendedReal;
    fn add(self, rhs: Self) -> Self {
        ExtendedReal(self.0 + rhs.0)
    }
}

impl fmt::Debug for ExtendedReal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Display::fmt(self, f)
    }
}

impl fmt::Display for ExtendedReal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_finite() {
            write!(f, "{}", self.0)
        } else {
            write!(f, "inf")
        }
    }
}

impl From<f64> for ExtendedReal {
    fn from(v: f64) -> Self {
        ExtendedReal::new(v)
    }
}

impl Serialize for ExtendedReal {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        if self.is_finite() {
            s.serialize_f64(self.0)
        } else {
            s.serialize_str("inf")
        }
    }
}

/// One closed halfspace `⟨a, x⟩ ≤ b`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Halfspace {
    pub a: Vec<f64>,
    pub b: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ConvexSet {
    WholeSpace { dim: usize },
    Box { lo: Vec<f64>, hi: Vec<f64> },
    Ball { center: Vec<f64>, radius: f64 },
    Polyhedron { constraints: Vec<Halfspace> },
}

impl ConvexSet {
    pub fn dim(&self) -> usize {
        match self {
            ConvexSet::WholeSpace { dim } => *dim,
            ConvexSet::Box { lo, .. } => lo.len(),
            ConvexSet::Ball { center, .. } => center.len(),
            ConvexSet::Polyhedron { constraints } => constraints.first().map_or(0, |h| h.a.len()),
        }
    }

    /// Checks the structural invariants and, for polyhedra, nonemptiness.
    pub fn validate(&self) -> Result<()> {
        let invalid = |reason: String| Err(Error::Invalid {
            what: "convex set",
            reason,
        });
        match self {
            ConvexSet::WholeSpace { dim } if *dim == 0 => invalid("dimension must be positive".into()),
            ConvexSet::WholeSpace { .. } => Ok(()),
            ConvexSet::Box { lo, hi } => {
                if lo.len() != hi.len() || lo.is_empty() {
                    return invalid("box bounds must have equal positive length".into());
                }
                if lo.iter().zip(hi).any(|(l, h)| !(l <= h)) {
                    return invalid("box requires lo <= hi componentwise".into());
                }
                Ok(())
            }
            ConvexSet::Ball { center, radius } => {
                if center.is_empty() || !(*radius > 0.0) || !radius.is_finite() {
                    return invalid(format!("ball radius must be positive, got {radius}"));
                }
                Ok(())
            }
            ConvexSet::Polyhedron { constraints } => {
                let Some(first) = constraints.first() else {
                    return invalid("polyhedron needs at least one constraint".into());
                };
                let n = first.a.len();
                if n == 0 || constraints.iter().any(|h| h.a.len() != n) {
                    return invalid("constraint normals must share a positive dimension".into());
                }
                if constraints.iter().any(|h| norm(&h.a) == 0.0) {
                    return invalid("constraint normal must be nonzero".into());
                }
                self.project(&vec![0.0; n], PROJECTION_TOL).map(|_| ())
            }
        }
    }

    /// Constraint violation of `x` (zero when `x ∈ C`).
    pub fn violation(&self, x: &[f64]) -> f64 {
        match self {
            ConvexSet::WholeSpace { .. } => 0.0,
            ConvexSet::Box { lo, hi } => x
                .iter()
                .zip(lo.iter().zip(hi))
                .map(|(v, (l, h))| (l - v).max(v - h).max(0.0))
                .fold(0.0, f64::max),
            ConvexSet::Ball { center, radius } => (crate::linalg::dist(x, center) - radius).max(0.0),
            ConvexSet::Polyhedron { constraints } => constraints
                .iter()
                .map(|h| ((dot(&h.a, x) - h.b) / norm(&h.a)).max(0.0))
                .fold(0.0, f64::max),
        }
    }

    pub fn contains(&self, x: &[f64], tol: f64) -> bool {
        self.violation(x) <= tol
    }

    /// Distance to which [`ConvexSet::project`] with tolerance `tol` is
    /// exact: closed forms are exact to rounding, Dykstra's iteration to `tol`.
    pub fn projection_accuracy(&self, tol: f64) -> f64 {
        match self {
            ConvexSet::Polyhedron { constraints } if constraints.len() > 1 => tol,
            _ => 0.0,
        }
    }

    /// Euclidean projection of `u` onto the set.
    pub fn project(&self, u: &[f64], tol: f64) -> Result<Vec<f64>> {
        if u.len() != self.dim() {
            return Err(Error::dim("projection", self.dim(), u.len()));
        }
        Ok(match self {
            ConvexSet::WholeSpace { .. } => u.to_vec(),
            ConvexSet::Box { lo, hi } => u
                .iter()
                .zip(lo.iter().zip(hi))
                .map(|(v, (l, h))| v.clamp(*l, *h))
                .collect(),
            ConvexSet::Ball { center, radius } => {
                let d = crate::linalg::dist(u, center);
                if d <= *radius {
                    u.to_vec()
                } else {
                    let s = radius / d;
                    u.iter().zip(center).map(|(v, c)| c + s * (v - c)).collect()
                }
            }
            ConvexSet::Polyhedron { constraints } => {
                if constraints.len() == 1 {
                    project_halfspace(&constraints[0], u)
                } else {
                    project_polyhedron(constraints, u, tol)?
                }
            }
        })
    }
}

fn project_halfspace(h: &Halfspace, u: &[f64]) -> Vec<f64> {
    let excess = dot(&h.a, u) - h.b;
    if excess <= 0.0 {
        return u.to_vec();
    }
    let s = excess / dot(&h.a, &h.a);
    u.iter().zip(&h.a).map(|(v, a)| v - s * a).collect()
}

/// Projection onto an intersection of halfspaces: Dykstra's alternating
/// projections, accelerated by periodically solving the equality-constrained
/// projection on the current active set and accepting it when it satisfies
/// the KKT conditions.
fn project_polyhedron(cons: &[Halfspace], u: &[f64], tol: f64) -> Result<Vec<f64>> {
    if cons.iter().all(|h| dot(&h.a, u) <= h.b) {
        return Ok(u.to_vec());
    }
    let n = u.len();
    if let Some(p) = enumerate_active_sets(cons, u, tol) {
        return Ok(p);
    }
    let norms2: Vec<f64> = cons.iter().map(|h| dot(&h.a, &h.a)).collect();
    let scale = 1.0 + norm(u) + cons.iter().map(|h| h.b.abs() / norms2.len() as f64).sum::<f64>();
    let mut x = u.to_vec();
    // Dykstra increments; each is a nonnegative multiple of its normal.
    let mut lam = vec![0.0; cons.len()];
    let mut best: Option<(f64, Vec<f64>)> = None;

    for sweep in 0..PROJECTION_MAX_SWEEPS {
        for (i, h) in cons.iter().enumerate() {
            // z = x + lam_i a_i; x = P_i(z); lam_i = (z - x) / a_i
            let excess = dot(&h.a, &x) + lam[i] * norms2[i] - h.b;
            let new_lam = (excess / norms2[i]).max(0.0);
            let shift = new_lam - lam[i];
            for k in 0..n {
                x[k] -= shift * h.a[k];
            }
            lam[i] = new_lam;
        }
        let res = kkt_residual(cons, &norms2, &x, &lam);
        if res <= tol * scale {
            return Ok(polish(cons, u, &x, &lam, tol).unwrap_or(x));
        }
        if sweep % 16 == 15 {
            if let Some(p) = polish(cons, u, &x, &lam, tol * scale) {
                return Ok(p);
            }
        }
        if best.as_ref().map_or(true, |(r, _)| res < *r) {
            best = Some((res, x.clone()));
        }
    }
    let infeas = cons
        .iter()
        .zip(&norms2)
        .map(|(h, n2)| ((dot(&h.a, &x) - h.b) / n2.sqrt()).max(0.0))
        .fold(0.0, f64::max);
    if infeas > tol * scale {
        return Err(Error::Infeasible(format!(
            "no point with constraint violation <= {tol} after {PROJECTION_MAX_SWEEPS} sweeps (violation {infeas:.3e})"
        )));
    }
    Ok(best.map(|(_, p)| p).unwrap_or(x))
}

/// Exact projection for small problems: KKT conditions are sufficient, so
/// the first active set (by size) whose equality projection is feasible with
/// nonnegative multipliers gives the answer. `None` when there are too many
/// subsets to try or none qualifies numerically.
fn enumerate_active_sets(cons: &[Halfspace], u: &[f64], tol: f64) -> Option<Vec<f64>> {
    const MAX_SUBSETS: usize = 4096;
    let (m, n) = (cons.len(), u.len());
    let mut total = 0usize;
    let mut binom = 1usize;
    for k in 1..=n.min(m) {
        binom = binom * (m + 1 - k) / k;
        total = total.saturating_add(binom);
        if total > MAX_SUBSETS {
            return None;
        }
    }
    for k in 1..=n.min(m) {
        let mut idx: Vec<usize> = (0..k).collect();
        loop {
            if let Some(p) = equality_projection(cons, &idx, u, tol) {
                return Some(p);
            }
            // next k-combination in lexicographic order
            let Some(pos) = (0..k).rev().find(|&i| idx[i] < m - k + i) else {
                break;
            };
            idx[pos] += 1;
            for j in pos + 1..k {
                idx[j] = idx[j - 1] + 1;
            }
        }
    }
    None
}

fn kkt_residual(cons: &[Halfspace], norms2: &[f64], x: &[f64], lam: &[f64]) -> f64 {
    cons.iter()
        .zip(norms2)
        .zip(lam)
        .map(|((h, n2), l)| {
            let gap = (dot(&h.a, x) - h.b) / n2.sqrt();
            gap.max(0.0).max(l * n2.sqrt() * gap.abs())
        })
        .fold(0.0, f64::max)
}

fn polish(cons: &[Halfspace], u: &[f64], x: &[f64], lam: &[f64], tol: f64) -> Option<Vec<f64>> {
    let by_multiplier: Vec<usize> = (0..cons.len()).filter(|&i| lam[i] > 0.0).collect();
    let near_active: Vec<usize> = (0..cons.len())
        .filter(|&i| {
            let h = &cons[i];
            dot(&h.a, x) - h.b >= -1e-7 * norm(&h.a) * (1.0 + norm(x))
        })
        .collect();
    for active in [by_multiplier, near_active] {
        if active.is_empty() || active.len() > u.len() {
            continue;
        }
        if let Some(p) = equality_projection(cons, &active, u, tol) {
            return Some(p);
        }
    }
    None
}

/// Solves `min ‖x − u‖` subject to `⟨a_i, x⟩ = b_i` for `i ∈ active`, and
/// accepts the result only if multipliers are nonnegative and every
/// constraint holds within `tol`.
fn equality_projection(cons: &[Halfspace], active: &[usize], u: &[f64], tol: f64) -> Option<Vec<f64>> {
    let k = active.len();
    let mut gram = vec![0.0; k * k];
    let mut rhs = vec![0.0; k];
    for (r, &i) in active.iter().enumerate() {
        for (c, &j) in active.iter().enumerate() {
            gram[r * k + c] = dot(&cons[i].a, &cons[j].a);
        }
        rhs[r] = dot(&cons[i].a, u) - cons[i].b;
    }
    let mu = solve(gram, rhs)?;
    if mu.iter().any(|&m| m < -1e-12 * (1.0 + norm(&mu))) {
        return None;
    }
    let mut x = u.to_vec();
    for (r, &i) in active.iter().enumerate() {
        for (xk, ak) in x.iter_mut().zip(&cons[i].a) {
            *xk -= mu[r] * ak;
        }
    }
    let feasible = cons.iter().all(|h| (dot(&h.a, &x) - h.b) / norm(&h.a) <= tol);
    feasible.then_some(x)
}

/// `dist(x, S)`; `+∞` when `S` is empty.
pub fn dist_point_set(x: &[f64], set: &PointSet) -> ExtendedReal {
    set.points()
        .iter()
        .map(|p| ExtendedReal::new(crate::linalg::dist(x, p)))
        .min()
        .unwrap_or(ExtendedReal::INFINITY)
}

/// `dist(y, F(x))`.
pub fn dist_to_image(map: &MapModel, x: &[f64], y: &[f64], ybox: &AnalysisBox, tol: f64) -> Result<ExtendedReal> {
    let image = map.forward_set(x, ybox, tol)?;
    if y.len() != map.m() {
        return Err(Error::dim("dist_to_image", map.m(), y.len()));
    }
    Ok(dist_point_set(y, &image))
}

/// `dist(x, F⁻¹(y))`.
pub fn dist_to_preimage(map: &MapModel, x: &[f64], y: &[f64], xbox: &AnalysisBox, tol: f64) -> Result<ExtendedReal> {
    let pre = map.inverse_set(y, xbox, tol)?;
    if x.len() != map.n() {
        return Err(Error::dim("dist_to_preimage", map.n(), x.len()));
    }
    Ok(dist_point_set(x, &pre))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn close(a: &[f64], b: &[f64], tol: f64) -> bool {
        crate::linalg::dist(a, b) <= tol
    }

    #[test]
    fn point_set_distances() {
        let s = PointSet::from_points(vec![vec![3.0, 4.0]], 1e-9);
        assert_eq!(dist_point_set(&[0.0, 0.0], &s).value(), 5.0);
        let s = PointSet::from_points(vec![vec![0.0], vec![3.0]], 1e-9);
        assert_eq!(dist_point_set(&[1.0], &s).value(), 1.0);
        assert_eq!(dist_point_set(&[0.0], &PointSet::empty(1e-9)), ExtendedReal::INFINITY);
    }

    #[test]
    fn extended_real_order() {
        let inf = ExtendedReal::INFINITY;
        assert!(ExtendedReal::new(1e308) < inf);
        assert_eq!(inf.min(ExtendedReal::new(2.0)).value(), 2.0);
        assert_eq!((inf + ExtendedReal::new(-5.0)), inf);
        assert_eq!(serde_json::to_string(&inf).unwrap(), "\"inf\"");
    }

    #[test]
    fn closed_form_projections() {
        let b = ConvexSet::Box {
            lo: vec![0.0, 0.0],
            hi: vec![1.0, 1.0],
        };
        assert_eq!(b.project(&[2.0, 0.5], 1e-9).unwrap(), vec![1.0, 0.5]);
        let ball = ConvexSet::Ball {
            center: vec![0.0, 0.0],
            radius: 1.0,
        };
        assert!(close(&ball.project(&[3.0, 4.0], 1e-9).unwrap(), &[0.6, 0.8], 1e-15));
        let half = ConvexSet::Polyhedron {
            constraints: vec![Halfspace {
                a: vec![1.0, 1.0],
                b: 1.0,
            }],
        };
        assert_eq!(half.project(&[1.0, 1.0], 1e-9).unwrap(), vec![0.5, 0.5]);
    }

    #[test]
    fn polyhedron_projection_hits_corner() {
        // unit square as four halfspaces: projection of (2, 3) is (1, 1)
        let sq = ConvexSet::Polyhedron {
            constraints: vec![
                Halfspace { a: vec![1.0, 0.0], b: 1.0 },
                Halfspace { a: vec![-1.0, 0.0], b: 0.0 },
                Halfspace { a: vec![0.0, 1.0], b: 1.0 },
                Halfspace { a: vec![0.0, -1.0], b: 0.0 },
            ],
        };
        sq.validate().unwrap();
        assert!(close(&sq.project(&[2.0, 3.0], 1e-9).unwrap(), &[1.0, 1.0], 1e-9));
        assert!(close(&sq.project(&[0.5, -3.0], 1e-9).unwrap(), &[0.5, 0.0], 1e-9));
    }

    #[test]
    fn infeasible_polyhedron_is_rejected() {
        let empty = ConvexSet::Polyhedron {
            constraints: vec![Halfspace { a: vec![1.0], b: -1.0 }, Halfspace { a: vec![-1.0], b: -1.0 }],
        };
        assert!(matches!(empty.validate(), Err(Error::Infeasible(_))));
        let bad_ball = ConvexSet::Ball {
            center: vec![0.0],
            radius: 0.0,
        };
        assert!(bad_ball.validate().is_err());
    }

    fn wedge() -> ConvexSet {
        ConvexSet::Polyhedron {
            constraints: vec![
                Halfspace { a: vec![1.0, 2.0], b: 1.0 },
                Halfspace { a: vec![-3.0, 1.0], b: 0.5 },
                Halfspace { a: vec![0.0, -1.0], b: 2.0 },
            ],
        }
    }

    proptest! {
        #[test]
        fn wedge_projection_properties(u in prop::collection::vec(-5.0f64..5.0, 2),
                                       v in prop::collection::vec(-5.0f64..5.0, 2)) {
            let c = wedge();
            let pu = c.project(&u, 1e-9).unwrap();
            let pv = c.project(&v, 1e-9).unwrap();
            prop_assert!(c.violation(&pu) <= 1e-9);
            prop_assert!(close(&c.project(&pu, 1e-9).unwrap(), &pu, 1e-9));
            prop_assert!(crate::linalg::dist(&pu, &pv) <= crate::linalg::dist(&u, &v) + 4e-9);
            // variational inequality against the other projected point
            let lhs = dot(&crate::linalg::sub(&u, &pu), &crate::linalg::sub(&pv, &pu));
            prop_assert!(lhs <= 1e-9 * crate::linalg::dist(&u, &pv).max(1.0));
        }
    }
}
