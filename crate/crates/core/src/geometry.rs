//! Euclidean projections onto the box, affine subspaces and their
//! intersection, plus the projected-gradient stationarity residual.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{ConfigError, ContractError};
use crate::types::{BoxPolytope, DecisionPoint};

/// Default tolerance on the change between Dykstra sweeps.
pub const DYKSTRA_TOL: f64 = 1e-10;
/// Default sweep cap for Dykstra's algorithm.
pub const DYKSTRA_MAX_SWEEPS: usize = 10_000;

/// Membership tolerance at `x`: `1e-8 · (1 + ‖x‖)`.
pub fn membership_tol(x: &DVector<f64>) -> f64 {
    1e-8 * (1.0 + x.norm())
}

pub fn project_box(z: &DVector<f64>, domain: &BoxPolytope) -> DecisionPoint {
    DecisionPoint::new(domain.clamp(z))
}

fn pseudo_inverse(a: &DMatrix<f64>) -> DMatrix<f64> {
    if a.nrows() == 0 || a.norm() == 0.0 {
        return DMatrix::zeros(a.ncols(), a.nrows());
    }
    let eps = 1e-12 * a.norm();
    a.clone()
        .pseudo_inverse(eps)
        .expect("a nonnegative tolerance is always accepted")
}

/// Closest point to `z` in `{x : A x = rhs}` (minimum-norm correction when
/// `A` is rank deficient).
pub fn project_affine(z: &DVector<f64>, a: &DMatrix<f64>, rhs: &DVector<f64>) -> DVector<f64> {
    let pinv = pseudo_inverse(a);
    z - pinv * (a * z - rhs)
}

/// `{x ∈ box : A (x − center) = 0}`: the box cut by the linearized
/// constraints at `center`.
#[derive(Debug, Clone, PartialEq)]
pub struct TangentSet {
    domain: BoxPolytope,
    a: DMatrix<f64>,
    center: DecisionPoint,
    pinv: DMatrix<f64>,
}

impl TangentSet {
    /// `a` is `m×n` with the constraint gradients as rows.
    pub fn new(domain: BoxPolytope, a: DMatrix<f64>, center: DecisionPoint) -> Result<Self, ConfigError> {
        if a.ncols() != domain.dim() || center.dim() != domain.dim() {
            return Err(ConfigError::Dimension(format!(
                "tangent set with {} columns, box of dimension {}, center of dimension {}",
                a.ncols(),
                domain.dim(),
                center.dim()
            )));
        }
        if domain.violation(&center) > membership_tol(&center) {
            return Err(ConfigError::Invalid("tangent set center lies outside the box".into()));
        }
        let pinv = pseudo_inverse(&a);
        Ok(TangentSet {
            domain,
            a,
            center,
            pinv,
        })
    }

    pub fn domain(&self) -> &BoxPolytope {
        &self.domain
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.a
    }

    pub fn center(&self) -> &DecisionPoint {
        &self.center
    }

    /// `‖A (x − center)‖`
    pub fn affine_violation(&self, x: &DVector<f64>) -> f64 {
        (&self.a * (x - self.center.as_vector())).norm()
    }

    pub fn contains(&self, x: &DVector<f64>) -> bool {
        let tol = membership_tol(x);
        self.domain.violation(x) <= tol && self.affine_violation(x) <= tol
    }

    /// Projection of a displacement onto the null space of `A`.
    fn null_project(&self, d: &DVector<f64>) -> DVector<f64> {
        if self.a.nrows() == 0 {
            return d.clone();
        }
        d - &self.pinv * (&self.a * d)
    }
}

/// Result of an alternating projection onto a [`TangentSet`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TangentProjection {
    pub point: DecisionPoint,
    /// Largest of the iterate changes and the gap between the two sets.
    pub residual: f64,
    pub sweeps: usize,
    /// Set when the sweep cap was hit before the tolerance.
    pub flagged: bool,
}

/// Projects `z` onto `set` with Dykstra's algorithm.
///
/// Iterates in coordinates relative to the center so the affine piece is a
/// null-space projection; the returned point is the last affine iterate
/// clamped into the box.
pub fn project_tangent(z: &DVector<f64>, set: &TangentSet, tol: f64) -> TangentProjection {
    let c = set.center.as_vector();
    let lo: Vec<f64> = set.domain.lower().iter().zip(c.iter()).map(|(l, ci)| l - ci).collect();
    let hi: Vec<f64> = set.domain.upper().iter().zip(c.iter()).map(|(u, ci)| u - ci).collect();
    let clamp = |v: &DVector<f64>| DVector::from_fn(v.len(), |i, _| v[i].clamp(lo[i], hi[i]));

    let mut x = z - c;
    let mut p = DVector::zeros(x.len());
    let mut q = DVector::zeros(x.len());
    let mut yb_prev = clamp(&x);
    let mut residual = f64::INFINITY;
    let mut sweeps = 0;
    while sweeps < DYKSTRA_MAX_SWEEPS {
        sweeps += 1;
        let xp = &x + &p;
        let yb = clamp(&xp);
        p = xp - &yb;
        let yq = &yb + &q;
        let xa = set.null_project(&yq);
        q = yq - &xa;
        // The affine iterate alone can stall while the corrections still
        // move, so both iterates and their gap must settle.
        residual = (&xa - &x).norm().max((&yb - &yb_prev).norm()).max((&yb - &xa).norm());
        x = xa;
        yb_prev = yb;
        if residual <= tol {
            break;
        }
    }
    let flagged = residual > tol;
    let zc = z - c;
    let d = polish(set, &zc, &p, &lo, &hi).unwrap_or_else(|| clamp(&x));
    let point = set.domain.clamp(&(c + d));
    TangentProjection {
        point: DecisionPoint::new(point),
        residual,
        sweeps,
        flagged,
    }
}

/// Exact projection for the active set Dykstra identified.
///
/// Bounds whose Dykstra correction `p` is nonzero are fixed; the remaining
/// coordinates are projected onto the affine constraint in closed form. The
/// result is kept only if it is feasible and its multipliers have the right
/// signs, which makes it the projection up to rounding.
fn polish(set: &TangentSet, z: &DVector<f64>, p: &DVector<f64>, lo: &[f64], hi: &[f64]) -> Option<DVector<f64>> {
    let n = z.len();
    let a = &set.a;
    if a.nrows() == 0 {
        return None;
    }
    let scale = 1.0 + z.amax();
    let fixed: Vec<Option<f64>> = (0..n)
        .map(|i| {
            if p[i] > 0.0 {
                Some(hi[i])
            } else if p[i] < 0.0 {
                Some(lo[i])
            } else {
                None
            }
        })
        .collect();
    let free: Vec<usize> = (0..n).filter(|&i| fixed[i].is_none()).collect();
    let mut d = DVector::from_fn(n, |i, _| fixed[i].unwrap_or(z[i]));
    let lambda = if free.is_empty() {
        DVector::zeros(a.nrows())
    } else {
        let a_u = a.select_columns(&free);
        let rhs = a * &d;
        let lambda = pseudo_inverse(&(&a_u * a_u.transpose())) * rhs;
        let shift = a_u.transpose() * &lambda;
        for (k, &i) in free.iter().enumerate() {
            d[i] -= shift[k];
        }
        lambda
    };
    let tol = 1e-12 * scale;
    if (a * &d).amax() > tol * (1.0 + a.amax()) {
        return None;
    }
    let multipliers = z - &d - a.transpose() * &lambda;
    for i in 0..n {
        match fixed[i] {
            None if d[i] < lo[i] - tol || d[i] > hi[i] + tol => return None,
            Some(v) if v == hi[i] && multipliers[i] < -tol => return None,
            Some(v) if v == lo[i] && v != hi[i] && multipliers[i] > tol => return None,
            _ => {}
        }
    }
    Some(d)
}

/// The set a stationarity residual is measured on.
#[derive(Debug, Clone, Copy)]
pub enum FeasibleSet<'a> {
    Box(&'a BoxPolytope),
    Tangent(&'a TangentSet),
}

impl FeasibleSet<'_> {
    pub fn project(&self, z: &DVector<f64>) -> DVector<f64> {
        match self {
            FeasibleSet::Box(b) => b.clamp(z),
            FeasibleSet::Tangent(t) => project_tangent(z, t, DYKSTRA_TOL).point.into_vector(),
        }
    }

    fn violation(&self, x: &DVector<f64>) -> f64 {
        match self {
            FeasibleSet::Box(b) => b.violation(x),
            FeasibleSet::Tangent(t) => t.domain.violation(x).max(t.affine_violation(x)),
        }
    }
}

/// `‖P(x − grad) − x‖` on the given set.
pub fn stationarity_residual(
    x: &DVector<f64>,
    grad: &DVector<f64>,
    set: FeasibleSet<'_>,
) -> Result<f64, ContractError> {
    let tolerance = membership_tol(x);
    let violation = set.violation(x);
    if violation > tolerance {
        return Err(ContractError::NotMember { violation, tolerance });
    }
    Ok((set.project(&(x - grad)) - x).norm())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn v(xs: &[f64]) -> DVector<f64> {
        DVector::from_column_slice(xs)
    }

    fn unit_square() -> BoxPolytope {
        BoxPolytope::cube(2, 0.0, 1.0).unwrap()
    }

    fn diagonal_set() -> TangentSet {
        TangentSet::new(
            unit_square(),
            DMatrix::from_row_slice(1, 2, &[1.0, -1.0]),
            DecisionPoint::from_slice(&[0.5, 0.5]),
        )
        .unwrap()
    }

    #[test]
    fn box_projection_examples() {
        let b = unit_square();
        assert_eq!(*project_box(&v(&[2.0, -1.0]), &b), v(&[1.0, 0.0]));
        assert_eq!(*project_box(&v(&[0.3, 0.7]), &b), v(&[0.3, 0.7]));
        assert_eq!(*project_box(&v(&[0.5, 3.0]), &b), v(&[0.5, 1.0]));
    }

    #[test]
    fn affine_projection_examples() {
        let a = DMatrix::from_row_slice(1, 2, &[1.0, 1.0]);
        let zero = v(&[0.0]);
        assert!((project_affine(&v(&[1.0, 1.0]), &a, &zero) - v(&[0.0, 0.0])).norm() < 1e-15);
        assert_eq!(project_affine(&v(&[1.0, -1.0]), &a, &zero), v(&[1.0, -1.0]));
        // Duplicated rows are rank deficient; the pseudo-inverse copes.
        let dup = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 2.0, 2.0]);
        let p = project_affine(&v(&[1.0, 1.0]), &dup, &v(&[0.0, 0.0]));
        assert!(p.norm() < 1e-12);
    }

    #[test]
    fn tangent_projection_examples() {
        let set = diagonal_set();
        let z = v(&[0.25, 0.25]);
        let out = project_tangent(&z, &set, DYKSTRA_TOL);
        assert_eq!(*out.point, z);
        assert_eq!(out.residual, 0.0);

        // Hand KKT: the diagonal through (0.5, 0.5) is closest to (1, 0) at its midpoint.
        let out = project_tangent(&v(&[1.0, 0.0]), &set, DYKSTRA_TOL);
        assert!((out.point.as_vector() - v(&[0.5, 0.5])).norm() < 1e-9);
        assert!(!out.flagged);

        // Inactive box reduces to the affine projection.
        let wide = BoxPolytope::cube(2, -1e6, 1e6).unwrap();
        let a = DMatrix::from_row_slice(1, 2, &[1.0, 2.0]);
        let center = DecisionPoint::from_slice(&[1.0, 1.0]);
        let set = TangentSet::new(wide, a.clone(), center).unwrap();
        let z = v(&[3.0, -2.0]);
        let out = project_tangent(&z, &set, DYKSTRA_TOL);
        let expected = project_affine(&z, &a, &v(&[3.0]));
        assert!((out.point.as_vector() - expected).norm() < 1e-9);
    }

    #[test]
    fn dykstra_matches_a_brute_force_search() {
        // Box [0,1]², plane x1 + x2 = 1.2 through (0.6, 0.6): segment from (0.2, 1) to (1, 0.2).
        let set = TangentSet::new(
            unit_square(),
            DMatrix::from_row_slice(1, 2, &[1.0, 1.0]),
            DecisionPoint::from_slice(&[0.6, 0.6]),
        )
        .unwrap();
        let z = v(&[2.0, 0.9]);
        let out = project_tangent(&z, &set, DYKSTRA_TOL);
        let best = (0..=100_000)
            .map(|i| {
                let t = i as f64 / 100_000.0;
                v(&[0.2 + 0.8 * t, 1.0 - 0.8 * t])
            })
            .min_by(|a, b| (a - &z).norm().total_cmp(&(b - &z).norm()))
            .unwrap();
        assert!((out.point.as_vector() - best).norm() < 1e-4);
        assert!(set.contains(out.point.as_vector()));
    }

    #[test]
    fn residual_examples() {
        let b = BoxPolytope::cube(1, 0.0, 1.0).unwrap();
        let x = v(&[0.5]);
        assert_eq!(
            stationarity_residual(&x, &v(&[0.0]), FeasibleSet::Box(&b)).unwrap(),
            0.0
        );
        assert_eq!(
            stationarity_residual(&x, &v(&[0.25]), FeasibleSet::Box(&b)).unwrap(),
            0.25
        );
        // At the upper face with the descent direction pointing outward.
        let x = v(&[1.0]);
        assert_eq!(
            stationarity_residual(&x, &v(&[-3.0]), FeasibleSet::Box(&b)).unwrap(),
            0.0
        );
        let outside = v(&[1.5]);
        assert!(stationarity_residual(&outside, &v(&[0.0]), FeasibleSet::Box(&b)).is_err());
        let set = diagonal_set();
        assert!(stationarity_residual(&v(&[0.2, 0.8]), &v(&[0.0, 0.0]), FeasibleSet::Tangent(&set)).is_err());
    }

    #[test]
    fn residual_zero_exactly_at_grid_minimizers() {
        // The linear model gᵀ(x − x0) over the square is minimized at a vertex;
        // the residual vanishes there and nowhere else on the grid.
        let b = unit_square();
        let g = v(&[0.3, -0.7]);
        let mut zeros = Vec::new();
        for i in 0..=10 {
            for j in 0..=10 {
                let x = v(&[i as f64 / 10.0, j as f64 / 10.0]);
                if stationarity_residual(&x, &g, FeasibleSet::Box(&b)).unwrap() == 0.0 {
                    zeros.push(x);
                }
            }
        }
        assert_eq!(zeros, vec![v(&[0.0, 1.0])]);
    }

    #[test]
    fn dykstra_does_not_stop_on_a_stalled_affine_iterate() {
        // The first two affine iterates coincide although the box
        // corrections are still changing.
        let z = v(&[-0.7589518344168061, 2.497740525261486]);
        let pt = project_tangent(&z, &diagonal_set(), DYKSTRA_TOL).point;
        let mean = (z[0] + z[1]) / 2.0;
        assert!((pt.as_vector() - v(&[mean, mean])).norm() < 1e-12);
    }

    fn vec2() -> impl Strategy<Value = DVector<f64>> {
        (-3.0f64..3.0, -3.0f64..3.0).prop_map(|(a, b)| v(&[a, b]))
    }

    proptest! {
        #[test]
        fn projections_are_idempotent(z in vec2()) {
            let b = unit_square();
            let once = project_box(&z, &b);
            prop_assert_eq!(&*project_box(&once, &b), &*once);

            let a = DMatrix::from_row_slice(1, 2, &[1.0, 2.0]);
            let rhs = v(&[0.5]);
            let pa = project_affine(&z, &a, &rhs);
            prop_assert!((project_affine(&pa, &a, &rhs) - &pa).norm() < 1e-12);

            let set = diagonal_set();
            let pt = project_tangent(&z, &set, DYKSTRA_TOL).point;
            let again = project_tangent(&pt, &set, DYKSTRA_TOL).point;
            prop_assert!((again.as_vector() - pt.as_vector()).norm() < 1e-9);
            prop_assert!(set.contains(pt.as_vector()));
        }

        #[test]
        fn projections_are_nonexpansive(u in vec2(), w in vec2()) {
            let b = unit_square();
            let d = (&u - &w).norm();
            prop_assert!((project_box(&u, &b).as_vector() - project_box(&w, &b).as_vector()).norm() <= d + 1e-12);
            let set = diagonal_set();
            let pu = project_tangent(&u, &set, DYKSTRA_TOL).point;
            let pw = project_tangent(&w, &set, DYKSTRA_TOL).point;
            prop_assert!((pu.as_vector() - pw.as_vector()).norm() <= d + 1e-8);
        }
    }
}
