//! Approximate solvers for the two regularized quadratic subproblems.
//!
//! Both solvers run projected gradient with Barzilai–Borwein steps and Armijo
//! backtracking on a strongly convex model, then certify the result. A
//! certificate that cannot be attained within the iteration cap makes the
//! solver fall back to the zero step, which satisfies the decrease
//! conditions trivially, and flags the certificate.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{ConfigError, OracleError};
use crate::geometry::{project_tangent, TangentSet, DYKSTRA_TOL};
use crate::oracle::{eval_grad_f, EvaluationLedger, InexactProblem};
use crate::types::{BoxPolytope, DecisionPoint, PrecisionLevel};

/// Iteration cap of the inner projected-gradient loop.
pub const QP_MAX_ITER: usize = 500;

/// Ratio of residual to step at which the inner loop stops early; far below
/// any sensible certificate constant.
const INNER_RTOL: f64 = 1e-6;

/// A symmetric model Hessian with spectral norm at most `M`.
#[derive(Debug, Clone, PartialEq)]
pub struct HessianModel {
    pub matrix: DMatrix<f64>,
    pub norm_bound_ok: bool,
}

impl HessianModel {
    pub fn zero(n: usize) -> Self {
        HessianModel {
            matrix: DMatrix::zeros(n, n),
            norm_bound_ok: true,
        }
    }

    pub fn norm(&self) -> f64 {
        spectral_norm(&self.matrix)
    }
}

/// How the optimization-phase Hessian is chosen.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HessianPolicy {
    #[default]
    Zero,
    /// Symmetrized forward differences of the objective gradient, scaled to
    /// norm `M`. Costs `n + 1` extra gradient evaluations per iteration.
    FiniteDifference,
}

/// Measured quality of an approximate subproblem solution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveCertificate {
    /// Model value at the returned point (the model vanishes at the center).
    pub model_decrease: f64,
    /// Unit-step projected-gradient residual of the model at the returned point.
    pub stationarity_residual: f64,
    pub step_norm: f64,
    /// `‖A · step‖`; zero for the restoration subproblem.
    pub tangent_violation: f64,
    /// `residual / step`, the realized first-order constant; `None` when
    /// unbounded (zero step, nonzero residual).
    pub kappa_estimate: Option<f64>,
    /// `tangent_violation / step²`.
    pub kappa_t_estimate: Option<f64>,
    /// Dykstra residual of the projection used in the certificate.
    pub projection_residual: f64,
    pub iterations: usize,
    pub flagged: bool,
}

fn spectral_norm(a: &DMatrix<f64>) -> f64 {
    if a.is_empty() {
        return 0.0;
    }
    let sym = (a + a.transpose()) * 0.5;
    SymmetricEigen::new(sym)
        .eigenvalues
        .iter()
        .fold(0.0, |m, v| m.max(v.abs()))
}

fn scale_to(mut matrix: DMatrix<f64>, m: f64) -> HessianModel {
    let norm = spectral_norm(&matrix);
    if norm > m {
        matrix *= m / norm;
    }
    let norm_bound_ok = spectral_norm(&matrix) <= m * (1.0 + 1e-12);
    HessianModel { matrix, norm_bound_ok }
}

/// Gauss–Newton matrix `J Jᵀ` from the `n×m` constraint Jacobian, scaled so
/// its norm is at most `M`.
pub fn build_b(jac: &DMatrix<f64>, m: f64, sigma_min: f64) -> Result<HessianModel, ConfigError> {
    if m * sigma_min < 1.0 {
        return Err(ConfigError::OutOfRange {
            key: "sigma_min",
            value: sigma_min,
            expected: ">= 1/M so that the regularized inverse is bounded by M",
        });
    }
    Ok(scale_to(jac * jac.transpose(), m))
}

/// Hessian model for the optimization phase at `(x_r, y)`.
pub fn build_h<P: InexactProblem + ?Sized>(
    problem: &P,
    x_r: &DecisionPoint,
    y: &PrecisionLevel,
    m: f64,
    policy: HessianPolicy,
    ledger: &mut EvaluationLedger,
) -> Result<HessianModel, OracleError> {
    let n = problem.dim();
    match policy {
        HessianPolicy::Zero => Ok(HessianModel::zero(n)),
        HessianPolicy::FiniteDifference => {
            let domain = problem.domain();
            let g0 = eval_grad_f(problem, x_r, y, ledger)?;
            let mut cols = Vec::with_capacity(n);
            for i in 0..n {
                // Step inward from whichever face is farther away.
                let room_up = domain.upper()[i] - x_r[i];
                let room_down = x_r[i] - domain.lower()[i];
                let t = 1e-6 * (1.0 + x_r[i].abs());
                let t = if room_up >= room_down {
                    t.min(room_up)
                } else {
                    -t.min(room_down)
                };
                if t == 0.0 {
                    cols.push(DVector::zeros(n));
                    continue;
                }
                let mut xp = x_r.as_vector().clone();
                xp[i] += t;
                let gp = eval_grad_f(problem, &xp, y, ledger)?;
                cols.push((gp - &g0) / t);
            }
            let raw = DMatrix::from_columns(&cols);
            Ok(scale_to((&raw + raw.transpose()) * 0.5, m))
        }
    }
}

struct Quadratic<'a> {
    g: &'a DVector<f64>,
    q: DMatrix<f64>,
}

impl Quadratic<'_> {
    fn value(&self, d: &DVector<f64>) -> f64 {
        self.g.dot(d) + 0.5 * d.dot(&(&self.q * d))
    }

    fn gradient(&self, d: &DVector<f64>) -> DVector<f64> {
        self.g + &self.q * d
    }
}

/// Minimizes the model over displacements with a projection onto the
/// feasible displacements; returns the final displacement and the number of
/// iterations used.
fn projected_gradient(
    model: &Quadratic<'_>,
    project: impl Fn(&DVector<f64>) -> DVector<f64>,
    lipschitz: f64,
    floor: f64,
) -> (DVector<f64>, usize) {
    let n = model.g.len();
    let mut d = DVector::zeros(n);
    let mut grad = model.gradient(&d);
    let mut val = 0.0;
    let mut step = 1.0 / lipschitz;
    let mut iterations = 0;
    while iterations < QP_MAX_ITER {
        let residual = (project(&(&d - &grad)) - &d).norm();
        if residual <= (INNER_RTOL * d.norm()).max(floor) {
            break;
        }
        iterations += 1;
        let mut t = step;
        let accepted = loop {
            let cand = project(&(&d - t * &grad));
            let diff = &cand - &d;
            if diff.norm() == 0.0 {
                break None;
            }
            let v = model.value(&cand);
            if v <= val + 1e-4 * grad.dot(&diff) {
                break Some((cand, diff, v));
            }
            t *= 0.5;
            if t < 1e-20 {
                break None;
            }
        };
        let Some((cand, diff, v)) = accepted else {
            break;
        };
        let curv = diff.dot(&(&model.q * &diff));
        step = if curv > 0.0 {
            (diff.norm_squared() / curv).clamp(1e-12, 1e12)
        } else {
            1.0 / lipschitz
        };
        d = cand;
        grad = model.gradient(&d);
        val = v;
    }
    (d, iterations)
}

fn shifted_clamp(domain: &BoxPolytope, center: &DVector<f64>, v: &DVector<f64>) -> DVector<f64> {
    DVector::from_fn(v.len(), |i, _| {
        v[i].clamp(domain.lower()[i] - center[i], domain.upper()[i] - center[i])
    })
}

fn ratio(num: f64, den: f64) -> Option<f64> {
    if den > 0.0 {
        Some(num / den)
    } else if num == 0.0 {
        Some(0.0)
    } else {
        None
    }
}

/// Recomputes the restoration certificate for `z` from scratch.
pub fn restoration_certificate(
    grad_c: &DVector<f64>,
    b: &HessianModel,
    sigma: f64,
    z_center: &DecisionPoint,
    z: &DecisionPoint,
    domain: &BoxPolytope,
) -> SolveCertificate {
    let d = z.as_vector() - z_center.as_vector();
    let bd = &b.matrix * &d;
    let model_decrease = grad_c.dot(&d) + 0.5 * d.dot(&bd) + 0.5 * sigma * d.norm_squared();
    let inner = z.as_vector() - (grad_c + &bd + sigma * &d);
    let stationarity_residual = (domain.clamp(&inner) - z.as_vector()).norm();
    let step_norm = d.norm();
    SolveCertificate {
        model_decrease,
        stationarity_residual,
        step_norm,
        tangent_violation: 0.0,
        kappa_estimate: ratio(stationarity_residual, step_norm),
        kappa_t_estimate: Some(0.0),
        projection_residual: 0.0,
        iterations: 0,
        flagged: false,
    }
}

/// Approximately minimizes `∇cᵀd + ½ dᵀ(B + σI)d` over `z_center + d ∈ Ω`.
pub fn solve_restoration_qp(
    grad_c: &DVector<f64>,
    b: &HessianModel,
    sigma: f64,
    z_center: &DecisionPoint,
    domain: &BoxPolytope,
    kappa_r: f64,
) -> (DecisionPoint, SolveCertificate) {
    let n = grad_c.len();
    let center = z_center.as_vector();
    let q = &b.matrix + DMatrix::identity(n, n) * sigma;
    let model = Quadratic { g: grad_c, q };
    let lipschitz = b.norm() + sigma;
    let floor = 1e-15 * (1.0 + grad_c.norm());
    let (d, iterations) = projected_gradient(&model, |v| shifted_clamp(domain, center, v), lipschitz, floor);
    let z = DecisionPoint::new(domain.clamp(&(center + d)));
    let mut cert = restoration_certificate(grad_c, b, sigma, z_center, &z, domain);
    cert.iterations = iterations;
    let valid = cert.model_decrease <= 0.0 && cert.stationarity_residual <= kappa_r * cert.step_norm;
    if valid || (cert.step_norm == 0.0 && cert.stationarity_residual == 0.0) {
        return (z, cert);
    }
    let mut fallback = restoration_certificate(grad_c, b, sigma, z_center, z_center, domain);
    fallback.iterations = iterations;
    fallback.flagged = true;
    (z_center.clone(), fallback)
}

/// Recomputes the tangent-subproblem certificate for `x` from scratch.
pub fn tangent_certificate(
    grad_f: &DVector<f64>,
    h: &HessianModel,
    mu: f64,
    set: &TangentSet,
    x: &DecisionPoint,
) -> SolveCertificate {
    let x_r = set.center();
    let d = x.as_vector() - x_r.as_vector();
    let hd = &h.matrix * &d;
    let model_decrease = grad_f.dot(&d) + 0.5 * d.dot(&hd) + mu * d.norm_squared();
    let inner = x.as_vector() - grad_f - &hd - 2.0 * mu * &d;
    let proj = project_tangent(&inner, set, DYKSTRA_TOL);
    let stationarity_residual = (proj.point.as_vector() - x.as_vector()).norm();
    let step_norm = d.norm();
    let tangent_violation = (set.matrix() * &d).norm();
    SolveCertificate {
        model_decrease,
        stationarity_residual,
        step_norm,
        tangent_violation,
        kappa_estimate: ratio(stationarity_residual, step_norm),
        kappa_t_estimate: ratio(tangent_violation, step_norm * step_norm),
        projection_residual: proj.residual,
        iterations: 0,
        flagged: false,
    }
}

/// Approximately minimizes `∇fᵀd + ½ dᵀHd + μ‖d‖²` over `x_R + d ∈ D`.
pub fn solve_tangent_qp(
    grad_f: &DVector<f64>,
    h: &HessianModel,
    mu: f64,
    set: &TangentSet,
    kappa_t: f64,
    kappa: f64,
) -> (DecisionPoint, SolveCertificate) {
    let n = grad_f.len();
    let x_r = set.center();
    let center = x_r.as_vector();
    let q = &h.matrix + DMatrix::identity(n, n) * (2.0 * mu);
    let model = Quadratic { g: grad_f, q };
    let lipschitz = h.norm() + 2.0 * mu;
    let project = |v: &DVector<f64>| project_tangent(&(center + v), set, DYKSTRA_TOL).point.into_vector() - center;
    let (d, iterations) = projected_gradient(&model, project, lipschitz, 10.0 * DYKSTRA_TOL);
    let x = DecisionPoint::new(set.domain().clamp(&(center + d)));
    let mut cert = tangent_certificate(grad_f, h, mu, set, &x);
    cert.iterations = iterations;
    let valid = cert.model_decrease <= 0.0
        && cert.tangent_violation <= kappa_t * cert.step_norm * cert.step_norm
        && cert.stationarity_residual <= kappa * cert.step_norm;
    if valid {
        return (x, cert);
    }
    let mut fallback = tangent_certificate(grad_f, h, mu, set, x_r);
    fallback.iterations = iterations;
    fallback.flagged = !(fallback.stationarity_residual == 0.0);
    (x_r.clone(), fallback)
}

/// Realized one-dimensional constant: `‖d‖ / ‖t* d‖` where `t*` minimizes the
/// restoration model along `d = z_trial − z_center` inside the box; `None`
/// when `t* = 0`.
pub fn line_minimizer_ratio(
    grad_c: &DVector<f64>,
    b: &HessianModel,
    sigma: f64,
    z_center: &DecisionPoint,
    z_trial: &DecisionPoint,
    domain: &BoxPolytope,
) -> Option<f64> {
    let d = z_trial.as_vector() - z_center.as_vector();
    if d.norm() == 0.0 {
        return Some(1.0);
    }
    let slope = grad_c.dot(&d);
    let curv = d.dot(&(&b.matrix * &d)) + sigma * d.norm_squared();
    let (mut lo, mut hi) = (f64::NEG_INFINITY, f64::INFINITY);
    for i in 0..d.len() {
        if d[i] != 0.0 {
            let a = (domain.lower()[i] - z_center[i]) / d[i];
            let c = (domain.upper()[i] - z_center[i]) / d[i];
            lo = lo.max(a.min(c));
            hi = hi.min(a.max(c));
        }
    }
    let t = (-slope / curv).clamp(lo, hi);
    (t != 0.0).then(|| 1.0 / t.abs())
}
