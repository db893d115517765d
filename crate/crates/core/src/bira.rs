//! The outer inexact-restoration loop: restore, test for restoration
//! failure, update the penalty parameter, then take a regularized step on
//! the tangent set and accept it with a merit test.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::diagnostics::{Kappas, TheoreticalConstants};
use crate::error::{ConfigError, SolverError};
use crate::geometry::{stationarity_residual, FeasibleSet, TangentSet};
use crate::merit::merit_phi;
use crate::oracle::{eval_f, eval_grad_f, eval_grad_h, eval_h, EvaluationLedger, InexactProblem, OracleBounds};
use crate::qp::{build_h, solve_tangent_qp, HessianPolicy, SolveCertificate};
use crate::resta::{resta, RestorationOutcome, DEFAULT_HARD_CAP};
use crate::types::{AlgorithmParams, DecisionPoint, PenaltyState, PrecisionLevel, ProblemConstants};

/// Schema version of serialized run reports.
pub const TRACE_VERSION: u32 = 1;

/// Attempt cap of the optimization phase when no analytic bound exists.
const DEFAULT_ATTEMPT_CAP: usize = 200;

/// Stopping tolerances.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Tolerances {
    pub eps_feas: f64,
    pub eps_prec: f64,
    pub eps_opt: f64,
}

impl Tolerances {
    pub fn new(eps_feas: f64, eps_prec: f64, eps_opt: f64) -> Result<Self, ConfigError> {
        for (key, v) in [("eps_feas", eps_feas), ("eps_prec", eps_prec), ("eps_opt", eps_opt)] {
            if !(v.is_finite() && v > 0.0) {
                return Err(ConfigError::OutOfRange {
                    key,
                    value: v,
                    expected: "finite and > 0",
                });
            }
        }
        Ok(Tolerances {
            eps_feas,
            eps_prec,
            eps_opt,
        })
    }
}

/// Chooses the trial precision for attempt `ell` of the optimization phase,
/// before the forced switch to `y_R`.
pub type RelaxationPolicy = fn(y_k: &PrecisionLevel, y_r: &PrecisionLevel, ell: usize) -> PrecisionLevel;

/// Reuses the precision of the current iterate.
pub fn reuse_current_precision(y_k: &PrecisionLevel, _y_r: &PrecisionLevel, _ell: usize) -> PrecisionLevel {
    *y_k
}

#[derive(Debug, Clone, Copy)]
pub struct BiraOptions {
    pub kappas: Kappas,
    pub hessian: HessianPolicy,
    pub relaxation: RelaxationPolicy,
}

impl Default for BiraOptions {
    fn default() -> Self {
        BiraOptions {
            kappas: Kappas::default(),
            hessian: HessianPolicy::Zero,
            relaxation: reuse_current_precision,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum RunStatus {
    Converged,
    RestorationFailure,
    BudgetExceeded,
}

/// One trial of the optimization phase.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Attempt {
    pub mu: f64,
    pub y_trial: PrecisionLevel,
    pub step_norm: f64,
    pub f_trial: f64,
    pub h_trial: f64,
    pub desfinte: bool,
    pub desmeri: bool,
    pub certificate: SolveCertificate,
}

/// Everything one complete outer iteration computed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub k: usize,
    pub x_k: DecisionPoint,
    pub y_k: PrecisionLevel,
    pub x_r: DecisionPoint,
    pub y_r: PrecisionLevel,
    pub x_next: DecisionPoint,
    pub y_next: PrecisionLevel,
    pub theta_before: f64,
    pub theta_after: f64,
    /// Value the unmodified quotient would have produced, when it was used.
    pub theta_quotient: Option<f64>,
    pub mu_k: f64,
    pub ell_count: usize,
    pub restoration: RestorationOutcome,
    pub h_xk_yk: f64,
    pub h_xk_yr: f64,
    pub h_xr_yr: f64,
    pub h_xk_ynext: f64,
    pub h_xnext_ynext: f64,
    pub f_xk_yk: f64,
    pub f_xk_yr: f64,
    pub f_xr_yr: f64,
    pub f_xk_ynext: f64,
    pub f_xnext_ynext: f64,
    pub g_yk: f64,
    pub g_yr: f64,
    pub g_ynext: f64,
    /// `Φ(x_R, y_R, θ_{k+1})`
    pub merit_xr_yr: f64,
    /// `Φ(x_k, y_R, θ_{k+1})`
    pub merit_xk_yr: f64,
    /// `Φ(x_{k+1}, y_{k+1}, θ_{k+1})`
    pub merit_next: f64,
    /// `Φ(x_k, y_{k+1}, θ_{k+1})`
    pub merit_xk_ynext: f64,
    /// `‖x_R − x_k‖`
    pub restoration_distance: f64,
    /// `‖x_{k+1} − x_R‖`
    pub step_norm: f64,
    /// Projected gradient of `f(·, y_{k+1})` on the tangent set at `x_R`.
    pub stationarity_residual: f64,
    pub hessian_norm: f64,
    pub attempts: Vec<Attempt>,
    pub ledger: EvaluationLedger,
}

/// The iteration that ended in restoration failure.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FailureRecord {
    pub k: usize,
    pub x_k: DecisionPoint,
    pub y_k: PrecisionLevel,
    pub restoration: RestorationOutcome,
    pub h_xk_yr: f64,
    pub h_xr_yr: f64,
    pub g_yk: f64,
    pub g_yr: f64,
    pub fallar: bool,
    pub errata: bool,
    pub ledger: EvaluationLedger,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub trace_version: u32,
    pub problem: String,
    pub status: RunStatus,
    pub iterations: Vec<IterationRecord>,
    pub failure: Option<FailureRecord>,
    pub final_point: DecisionPoint,
    pub final_precision: PrecisionLevel,
    pub final_h_norm: f64,
    pub final_residual: Option<f64>,
    pub ledger: EvaluationLedger,
    /// Evaluations made before the first iteration.
    pub initial_ledger: EvaluationLedger,
    pub f_x0_y0: f64,
    pub params: AlgorithmParams,
    pub kappas: Kappas,
    pub hessian: HessianPolicy,
    pub tolerances: Tolerances,
    pub budget: usize,
    pub problem_constants: ProblemConstants,
    pub oracle_bounds: Option<OracleBounds>,
}

impl RunReport {
    pub fn theta_history(&self) -> Vec<f64> {
        let mut h: Vec<f64> = self.iterations.first().map(|r| r.theta_before).into_iter().collect();
        h.extend(self.iterations.iter().map(|r| r.theta_after));
        h
    }
}

/// True when the restored point fails to reduce the constraint violation
/// enough, or reduces it too little for the precision it consumed.
pub fn restoration_failure(h_xk_yr: f64, h_xr_yr: f64, g_yk: f64, g_yr: f64, r: f64) -> bool {
    fallar(h_xk_yr, h_xr_yr, r) || errata(h_xk_yr, h_xr_yr, g_yk, g_yr, r)
}

fn fallar(h_xk_yr: f64, h_xr_yr: f64, r: f64) -> bool {
    h_xr_yr > r * h_xk_yr
}

fn errata(h_xk_yr: f64, h_xr_yr: f64, g_yk: f64, g_yr: f64, r: f64) -> bool {
    h_xk_yr - h_xr_yr < (1.0 - r) / (2.0 * r) * (g_yk - g_yr)
}

/// The quotient `(1+r)(D_h + D_g) / (2(Δf + D_h + D_g))` with
/// `D_h = ‖h(x_k,y_R)‖ − ‖h(x_R,y_R)‖`, `D_g = g(y_k) − g(y_R)` and
/// `Δf = f(x_R,y_R) − f(x_k,y_R)`.
pub fn penalty_quotient(f_xr_yr: f64, f_xk_yr: f64, h_xk_yr: f64, h_xr_yr: f64, g_yk: f64, g_yr: f64, r: f64) -> f64 {
    let dh = h_xk_yr - h_xr_yr;
    let dg = g_yk - g_yr;
    (1.0 + r) * (dh + dg) / (2.0 * (f_xr_yr - f_xk_yr + dh + dg))
}

/// Whether the restored point improves the merit function by the required
/// fraction of its infeasibility decrease at penalty `theta`.
#[allow(clippy::too_many_arguments)]
pub fn penalty_test(
    theta: f64,
    f_xr_yr: f64,
    f_xk_yr: f64,
    h_xk_yr: f64,
    h_xr_yr: f64,
    g_yk: f64,
    g_yr: f64,
    r: f64,
) -> bool {
    let lhs = theta * (f_xr_yr - f_xk_yr) + (1.0 - theta) * (h_xr_yr - h_xk_yr);
    lhs <= 0.5 * (1.0 - r) * (h_xr_yr - h_xk_yr + g_yr - g_yk)
}

/// Largest penalty parameter at which [`penalty_test`] holds, if positive.
fn penalty_threshold(
    f_xr_yr: f64,
    f_xk_yr: f64,
    h_xk_yr: f64,
    h_xr_yr: f64,
    g_yk: f64,
    g_yr: f64,
    r: f64,
) -> Option<f64> {
    let dh = h_xk_yr - h_xr_yr;
    let dg = g_yk - g_yr;
    let num = dh - 0.5 * (1.0 - r) * (dh + dg);
    let den = f_xr_yr - f_xk_yr + dh;
    (den > 0.0 && num > 0.0).then(|| num / den)
}

/// Outcome of the penalty update.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PenaltyUpdate {
    pub theta: f64,
    /// The raw quotient, when the test failed and the quotient was consulted.
    pub quotient: Option<f64>,
}

/// Keeps `theta_k` when the merit test holds; otherwise the quotient, capped
/// by the largest value at which the merit test holds.
///
/// The quotient alone does not always satisfy the merit test (precision
/// terms cancel on its left side), so the cap keeps the decrease guarantee
/// that later steps rely on.
#[allow(clippy::too_many_arguments)]
pub fn update_penalty(
    theta_k: f64,
    f_xr_yr: f64,
    f_xk_yr: f64,
    h_xk_yr: f64,
    h_xr_yr: f64,
    g_yk: f64,
    g_yr: f64,
    r: f64,
) -> Result<PenaltyUpdate, SolverError> {
    if penalty_test(theta_k, f_xr_yr, f_xk_yr, h_xk_yr, h_xr_yr, g_yk, g_yr, r) {
        return Ok(PenaltyUpdate {
            theta: theta_k,
            quotient: None,
        });
    }
    let q = penalty_quotient(f_xr_yr, f_xk_yr, h_xk_yr, h_xr_yr, g_yk, g_yr, r);
    let Some(cap) = penalty_threshold(f_xr_yr, f_xk_yr, h_xk_yr, h_xr_yr, g_yk, g_yr, r) else {
        return Err(SolverError::InvariantViolation(format!(
            "penalty update has no positive solution (theta_k = {theta_k}, quotient = {q})"
        )));
    };
    let theta = if q > 0.0 && q.is_finite() { q.min(cap) } else { cap };
    Ok(PenaltyUpdate {
        theta: theta.min(theta_k),
        quotient: Some(q),
    })
}

/// Per-iteration memo of oracle values, so no pair is evaluated twice.
#[derive(Default)]
struct Memo {
    f: Vec<(DVector<f64>, PrecisionLevel, f64)>,
    h: Vec<(DVector<f64>, PrecisionLevel, f64)>,
}

impl Memo {
    fn lookup(list: &[(DVector<f64>, PrecisionLevel, f64)], x: &DVector<f64>, y: &PrecisionLevel) -> Option<f64> {
        list.iter().find(|(px, py, _)| px == x && py == y).map(|e| e.2)
    }

    fn f<P: InexactProblem + ?Sized>(
        &mut self,
        problem: &P,
        x: &DVector<f64>,
        y: &PrecisionLevel,
        ledger: &mut EvaluationLedger,
    ) -> Result<f64, SolverError> {
        if let Some(v) = Self::lookup(&self.f, x, y) {
            return Ok(v);
        }
        let v = eval_f(problem, x, y, ledger)?;
        self.f.push((x.clone(), *y, v));
        Ok(v)
    }

    fn h<P: InexactProblem + ?Sized>(
        &mut self,
        problem: &P,
        x: &DVector<f64>,
        y: &PrecisionLevel,
        ledger: &mut EvaluationLedger,
    ) -> Result<f64, SolverError> {
        if let Some(v) = Self::lookup(&self.h, x, y) {
            return Ok(v);
        }
        let v = eval_h(problem, x, y, ledger)?.norm();
        self.h.push((x.clone(), *y, v));
        Ok(v)
    }

    fn seed_f(&mut self, x: &DVector<f64>, y: &PrecisionLevel, v: f64) {
        self.f.push((x.clone(), *y, v));
    }

    fn seed_h(&mut self, x: &DVector<f64>, y: &PrecisionLevel, v: f64) {
        self.h.push((x.clone(), *y, v));
    }
}

/// Result of the optimization phase.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimizationStep {
    pub x_next: DecisionPoint,
    pub y_next: PrecisionLevel,
    pub mu_k: f64,
    pub ell_count: usize,
    pub attempts: Vec<Attempt>,
    /// Objective gradient at `(x_R, y_{k+1})`.
    pub grad_f: DVector<f64>,
    pub tangent: TangentSet,
    pub hessian_norm: f64,
}

/// Inputs of the optimization phase that come from earlier steps.
pub struct PhaseContext<'a> {
    pub x_r: &'a DecisionPoint,
    pub y_r: &'a PrecisionLevel,
    pub x_k: &'a DecisionPoint,
    pub y_k: &'a PrecisionLevel,
    pub theta: f64,
    pub mu_start: f64,
    /// `‖h(x_R,y_R)‖ − ‖h(x_k,y_R)‖ + g(y_R) − g(y_k)`
    pub infeasibility_change: f64,
    pub attempt_cap: usize,
    pub c_mu: Option<f64>,
}

fn phase<P: InexactProblem + ?Sized>(
    ctx: &PhaseContext<'_>,
    problem: &P,
    params: &AlgorithmParams,
    options: &BiraOptions,
    memo: &mut Memo,
    ledger: &mut EvaluationLedger,
) -> Result<OptimizationStep, SolverError> {
    let x_r = ctx.x_r.as_vector();
    let f_xr_yr = memo.f(problem, x_r, ctx.y_r, ledger)?;
    let mut mu = ctx.mu_start;
    let mut attempts = Vec::new();
    // Gradients and model for the precision currently in use.
    let mut current: Option<(PrecisionLevel, DVector<f64>, TangentSet, crate::qp::HessianModel)> = None;
    let mut ell = 0usize;
    loop {
        let y_trial = if ell >= params.n_acce as usize {
            *ctx.y_r
        } else {
            (options.relaxation)(ctx.y_k, ctx.y_r, ell)
        };
        if current.as_ref().map(|c| c.0) != Some(y_trial) {
            let g = eval_grad_f(problem, x_r, &y_trial, ledger)?;
            let jac = eval_grad_h(problem, x_r, &y_trial, ledger)?;
            let set = TangentSet::new(problem.domain().clone(), jac.transpose(), ctx.x_r.clone())?;
            let h = build_h(problem, ctx.x_r, &y_trial, params.m, options.hessian, ledger)?;
            current = Some((y_trial, g, set, h));
        }
        let (_, g, set, h) = current.as_ref().expect("set above");
        let (x, cert) = solve_tangent_qp(g, h, mu, set, options.kappas.kappa_t, options.kappas.kappa);
        let step = cert.step_norm;
        let f_x = memo.f(problem, &x, &y_trial, ledger)?;
        let desfinte = f_x <= f_xr_yr - params.alpha * step * step;
        let h_x = memo.h(problem, &x, &y_trial, ledger)?;
        let f_xk = memo.f(problem, ctx.x_k, &y_trial, ledger)?;
        let h_xk = memo.h(problem, ctx.x_k, &y_trial, ledger)?;
        let g_trial = y_trial.g();
        let lhs =
            merit_phi(f_x, h_x, g_trial, ctx.theta).map_err(|e| SolverError::InvariantViolation(e.to_string()))?;
        let base =
            merit_phi(f_xk, h_xk, g_trial, ctx.theta).map_err(|e| SolverError::InvariantViolation(e.to_string()))?;
        let desmeri = lhs <= base + 0.5 * (1.0 - params.r) * ctx.infeasibility_change;
        attempts.push(Attempt {
            mu,
            y_trial,
            step_norm: step,
            f_trial: f_x,
            h_trial: h_x,
            desfinte,
            desmeri,
            certificate: cert,
        });
        if desfinte && desmeri {
            let (_, g, set, h) = current.expect("set above");
            return Ok(OptimizationStep {
                x_next: x,
                y_next: y_trial,
                mu_k: mu,
                ell_count: ell + 1,
                attempts,
                grad_f: g,
                tangent: set,
                hessian_norm: h.norm(),
            });
        }
        ell += 1;
        if ell >= ctx.attempt_cap {
            let bound_reached = ctx.c_mu.is_none_or(|c| mu >= c);
            return Err(SolverError::InvariantViolation(format!(
                "optimization phase rejected {ell} trial steps (mu = {mu:.3e}, bound reached: {bound_reached})"
            )));
        }
        mu *= 2.0;
    }
}

/// Step 3 of the outer loop with default caching: evaluates what it needs
/// and returns the accepted step.
#[allow(clippy::too_many_arguments)]
pub fn optimization_phase<P: InexactProblem + ?Sized>(
    x_r: &DecisionPoint,
    y_r: &PrecisionLevel,
    x_k: &DecisionPoint,
    y_k: &PrecisionLevel,
    theta_next: f64,
    problem: &P,
    params: &AlgorithmParams,
    options: &BiraOptions,
    ledger: &mut EvaluationLedger,
) -> Result<OptimizationStep, SolverError> {
    let mut memo = Memo::default();
    let h_xr_yr = memo.h(problem, x_r, y_r, ledger)?;
    let h_xk_yr = memo.h(problem, x_k, y_r, ledger)?;
    let ctx = PhaseContext {
        x_r,
        y_r,
        x_k,
        y_k,
        theta: theta_next,
        mu_start: params.mu_init.clamp(params.mu_min, params.mu_max),
        infeasibility_change: h_xr_yr - h_xk_yr + y_r.g() - y_k.g(),
        attempt_cap: DEFAULT_ATTEMPT_CAP,
        c_mu: None,
    };
    phase(&ctx, problem, params, options, &mut memo, ledger)
}

fn merit(f: f64, h: f64, g: f64, theta: f64) -> Result<f64, SolverError> {
    merit_phi(f, h, g, theta).map_err(|e| SolverError::InvariantViolation(e.to_string()))
}

/// Runs the algorithm with default options.
pub fn bira_run<P: InexactProblem + ?Sized>(
    problem: &P,
    params: &AlgorithmParams,
    tolerances: Tolerances,
    budget: usize,
) -> Result<RunReport, SolverError> {
    bira_run_with(problem, params, tolerances, budget, &BiraOptions::default())
}

pub fn bira_run_with<P: InexactProblem + ?Sized>(
    problem: &P,
    params: &AlgorithmParams,
    tolerances: Tolerances,
    budget: usize,
    options: &BiraOptions,
) -> Result<RunReport, SolverError> {
    params.validate()?;
    if budget == 0 {
        return Err(ConfigError::OutOfRange {
            key: "budget",
            value: 0.0,
            expected: ">= 1",
        }
        .into());
    }
    let pc = problem.constants();
    let bounds = problem.oracle_bounds();
    let theory = TheoreticalConstants::compute_partial(&pc, params, &options.kappas, bounds.as_ref()).ok();
    let hard_cap = theory.as_ref().map_or(DEFAULT_HARD_CAP, |t| {
        (10.0 * t.n_resta).min(DEFAULT_HARD_CAP as f64) as usize
    });
    let attempt_cap = theory.as_ref().map_or(DEFAULT_ATTEMPT_CAP, |t| t.n_reg as usize);
    let c_mu = theory.as_ref().map(|t| t.c_mu);

    let (mut x_k, mut y_k) = problem.start();
    let mut ledger = EvaluationLedger::new();
    let f_x0_y0 = eval_f(problem, &x_k, &y_k, &mut ledger)?;
    let initial_ledger = ledger;
    let mut f_xk_yk = f_x0_y0;
    let mut penalty = PenaltyState::new(params.theta_0)?;
    let mut mu_prev = params.mu_init;
    let mut iterations = Vec::new();

    let mut report = RunReport {
        trace_version: TRACE_VERSION,
        problem: problem.id().to_string(),
        status: RunStatus::BudgetExceeded,
        iterations: Vec::new(),
        failure: None,
        final_point: x_k.clone(),
        final_precision: y_k,
        final_h_norm: f64::NAN,
        final_residual: None,
        ledger,
        initial_ledger,
        f_x0_y0,
        params: params.clone(),
        kappas: options.kappas,
        hessian: options.hessian,
        tolerances,
        budget,
        problem_constants: pc,
        oracle_bounds: bounds,
    };

    for k in 0..budget {
        let before = ledger;
        let ctx_err = |e: SolverError| e.at_iteration(k);

        // Step 1.
        let rest = resta(&x_k, &y_k, problem, params, &options.kappas, hard_cap, &mut ledger).map_err(ctx_err)?;
        let x_r = rest.x_r.clone();
        let y_r = rest.y_r;
        let (h_xk_yr, h_xr_yr) = (rest.h_xk_yr, rest.h_xr_yr);
        let (g_yk, g_yr) = (y_k.g(), y_r.g());
        let fail_h = fallar(h_xk_yr, h_xr_yr, params.r);
        let fail_g = errata(h_xk_yr, h_xr_yr, g_yk, g_yr, params.r);
        if fail_h || fail_g {
            report.status = RunStatus::RestorationFailure;
            report.final_point = x_k.clone();
            report.final_precision = y_k;
            report.final_h_norm = rest.h_xk_yk;
            report.failure = Some(FailureRecord {
                k,
                x_k: x_k.clone(),
                y_k,
                restoration: rest,
                h_xk_yr,
                h_xr_yr,
                g_yk,
                g_yr,
                fallar: fail_h,
                errata: fail_g,
                ledger: ledger.since(&before),
            });
            break;
        }

        let mut memo = Memo::default();
        memo.seed_f(&x_k, &y_k, f_xk_yk);
        memo.seed_h(&x_k, &y_k, rest.h_xk_yk);
        memo.seed_h(&x_k, &y_r, h_xk_yr);
        memo.seed_h(&x_r, &y_r, h_xr_yr);

        // Step 2.
        let f_xr_yr = memo.f(problem, &x_r, &y_r, &mut ledger).map_err(ctx_err)?;
        let f_xk_yr = memo.f(problem, &x_k, &y_r, &mut ledger).map_err(ctx_err)?;
        let theta_before = penalty.theta();
        let update =
            update_penalty(theta_before, f_xr_yr, f_xk_yr, h_xk_yr, h_xr_yr, g_yk, g_yr, params.r).map_err(ctx_err)?;
        penalty
            .push(update.theta)
            .map_err(|e| SolverError::InvariantViolation(e.to_string()))?;
        let theta = penalty.theta();

        // Step 3.
        let ctx = PhaseContext {
            x_r: &x_r,
            y_r: &y_r,
            x_k: &x_k,
            y_k: &y_k,
            theta,
            mu_start: mu_prev.clamp(params.mu_min, params.mu_max),
            infeasibility_change: h_xr_yr - h_xk_yr + g_yr - g_yk,
            attempt_cap,
            c_mu,
        };
        let opt = phase(&ctx, problem, params, options, &mut memo, &mut ledger).map_err(ctx_err)?;
        mu_prev = opt.mu_k;

        let residual = stationarity_residual(&x_r, &opt.grad_f, FeasibleSet::Tangent(&opt.tangent))
            .map_err(|e| SolverError::InvariantViolation(e.to_string()))?;
        let y_next = opt.y_next;
        let x_next = opt.x_next.clone();
        let f_next = memo.f(problem, &x_next, &y_next, &mut ledger).map_err(ctx_err)?;
        let h_next = memo.h(problem, &x_next, &y_next, &mut ledger).map_err(ctx_err)?;
        let f_xk_ynext = memo.f(problem, &x_k, &y_next, &mut ledger).map_err(ctx_err)?;
        let h_xk_ynext = memo.h(problem, &x_k, &y_next, &mut ledger).map_err(ctx_err)?;
        let g_next = y_next.g();

        let record = IterationRecord {
            k,
            x_k: x_k.clone(),
            y_k,
            x_r: x_r.clone(),
            y_r,
            x_next: x_next.clone(),
            y_next,
            theta_before,
            theta_after: theta,
            theta_quotient: update.quotient,
            mu_k: opt.mu_k,
            ell_count: opt.ell_count,
            h_xk_yk: rest.h_xk_yk,
            h_xk_yr,
            h_xr_yr,
            h_xk_ynext,
            h_xnext_ynext: h_next,
            f_xk_yk,
            f_xk_yr,
            f_xr_yr,
            f_xk_ynext,
            f_xnext_ynext: f_next,
            g_yk,
            g_yr,
            g_ynext: g_next,
            merit_xr_yr: merit(f_xr_yr, h_xr_yr, g_yr, theta)?,
            merit_xk_yr: merit(f_xk_yr, h_xk_yr, g_yr, theta)?,
            merit_next: merit(f_next, h_next, g_next, theta)?,
            merit_xk_ynext: merit(f_xk_ynext, h_xk_ynext, g_next, theta)?,
            restoration_distance: x_r.distance(&x_k),
            step_norm: x_next.distance(&x_r),
            stationarity_residual: residual,
            hessian_norm: opt.hessian_norm,
            attempts: opt.attempts,
            restoration: rest,
            ledger: ledger.since(&before),
        };
        iterations.push(record);

        let converged = h_xr_yr <= tolerances.eps_feas
            && g_yr <= tolerances.eps_prec
            && g_next <= tolerances.eps_prec
            && residual <= tolerances.eps_opt;
        if converged {
            report.status = RunStatus::Converged;
            report.final_point = x_r;
            report.final_precision = y_r;
            report.final_h_norm = h_xr_yr;
            report.final_residual = Some(residual);
            break;
        }
        x_k = x_next;
        y_k = y_next;
        f_xk_yk = f_next;
        report.final_point = x_k.clone();
        report.final_precision = y_k;
        report.final_h_norm = h_next;
        report.final_residual = Some(residual);
    }

    report.iterations = iterations;
    report.ledger = ledger;
    Ok(report)
}
