//! Restoration: improve feasibility and precision without touching the
//! objective.
//!
//! Precision is refined first, then a regularized Gauss–Newton descent on
//! `c(·, w) = ½‖h(·, w)‖²` runs until the squared residual has dropped by
//! `r²`, or its projected gradient is small (possible infeasibility, or a
//! signal to refine precision further).

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::diagnostics::Kappas;
use crate::error::{OracleError, SolverError};
use crate::geometry::{stationarity_residual, FeasibleSet};
use crate::merit::constraint_ssq;
use crate::oracle::{eval_grad_h, eval_h, EvaluationLedger, InexactProblem};
use crate::qp::{build_b, line_minimizer_ratio, solve_restoration_qp};
use crate::types::{AlgorithmParams, DecisionPoint, PrecisionLevel};

/// Inner-iteration cap used when no analytic bound is available.
pub const DEFAULT_HARD_CAP: usize = 100_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RestorationStatus {
    /// `c` dropped below `r²·c(x_k, w)`.
    Restored,
    /// Projected gradient of `c` small at the finest allowed precision.
    PossibleInfeasibility,
    /// The input was already feasible and exact.
    TrivialReturn,
    /// The problem-dependent procedure supplied a verified point.
    PdpRestored,
}

/// One test of the sufficient-decrease condition on `c`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DescentTest {
    /// Refinement round the test belongs to.
    pub round: usize,
    pub sigma: f64,
    pub step_norm: f64,
    pub c_before: f64,
    pub c_trial: f64,
    pub accepted: bool,
    /// The subproblem solver fell back to the zero step.
    pub qp_flagged: bool,
    /// `‖h(x_k, w)‖` for the current round.
    pub h_xk_w: f64,
    /// Realized one-dimensional constant of an accepted step.
    pub kappa_phi: Option<f64>,
    /// Realized projected-gradient constant of the step.
    pub kappa_r: Option<f64>,
    pub model_decrease: f64,
}

/// Verdict of the problem-dependent procedure.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PdpVerdict {
    pub accepted: bool,
    pub h_xk_yr: f64,
    pub h_xr_yr: f64,
    pub distance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RestorationOutcome {
    pub x_r: DecisionPoint,
    pub y_r: PrecisionLevel,
    pub status: RestorationStatus,
    /// Number of sufficient-decrease tests.
    pub inner_iterations: usize,
    /// Number of precision refinements beyond the first.
    pub refinements: usize,
    pub sigma_history: Vec<f64>,
    pub tests: Vec<DescentTest>,
    /// `‖h(x_k, y_k)‖` as seen on entry.
    pub h_xk_yk: f64,
    /// `‖h(x_k, y_R)‖`
    pub h_xk_yr: f64,
    /// `‖h(x_R, y_R)‖`
    pub h_xr_yr: f64,
    /// Projected gradient of `c(·, y_R)` at `x_R` when the descent loop ran.
    pub final_residual: Option<f64>,
    pub pdp: Option<PdpVerdict>,
    pub ledger: EvaluationLedger,
}

/// Starting point of the descent: the current iterate.
pub fn choose_z0<P: InexactProblem + ?Sized>(
    x_k: &DecisionPoint,
    _w_next: &PrecisionLevel,
    _problem: &P,
    _ledger: &mut EvaluationLedger,
) -> DecisionPoint {
    x_k.clone()
}

/// Verifies a PDP candidate with two fresh constraint evaluations.
pub fn check_pdp<P: InexactProblem + ?Sized>(
    candidate: &(DecisionPoint, PrecisionLevel),
    x_k: &DecisionPoint,
    y_k: &PrecisionLevel,
    problem: &P,
    params: &AlgorithmParams,
    ledger: &mut EvaluationLedger,
) -> Result<PdpVerdict, OracleError> {
    let (x_r, y_r) = candidate;
    let r = params.r;
    let h_xr_yr = eval_h(problem, x_r, y_r, ledger)?.norm();
    let h_xk_yr = eval_h(problem, x_k, y_r, ledger)?.norm();
    let distance = x_r.distance(x_k).max(y_r.distance(y_k));
    let accepted =
        y_r.gf <= r * y_k.gf && y_r.gh <= r * y_k.gh && h_xr_yr <= r * h_xk_yr && distance <= params.beta_pdp * h_xk_yr;
    Ok(PdpVerdict {
        accepted,
        h_xk_yr,
        h_xr_yr,
        distance,
    })
}

/// Regularization growth after a failed descent test.
pub fn sigma_schedule(sigma: f64) -> f64 {
    2.0 * sigma
}

/// Restores `(x_k, y_k)`.
///
/// Makes no objective evaluations. Fails with
/// [`SolverError::AbnormalTermination`] if more than `hard_cap` descent tests
/// are needed.
pub fn resta<P: InexactProblem + ?Sized>(
    x_k: &DecisionPoint,
    y_k: &PrecisionLevel,
    problem: &P,
    params: &AlgorithmParams,
    kappas: &Kappas,
    hard_cap: usize,
    ledger: &mut EvaluationLedger,
) -> Result<RestorationOutcome, SolverError> {
    let start = *ledger;
    let domain = problem.domain();
    let r = params.r;

    let h_xk_yk = eval_h(problem, x_k, y_k, ledger)?.norm();
    let mut out = RestorationOutcome {
        x_r: x_k.clone(),
        y_r: *y_k,
        status: RestorationStatus::TrivialReturn,
        inner_iterations: 0,
        refinements: 0,
        sigma_history: Vec::new(),
        tests: Vec::new(),
        h_xk_yk,
        h_xk_yr: h_xk_yk,
        h_xr_yr: h_xk_yk,
        final_residual: None,
        pdp: None,
        ledger: EvaluationLedger::new(),
    };
    if h_xk_yk + y_k.g() == 0.0 {
        out.ledger = ledger.since(&start);
        return Ok(out);
    }

    if let Some(candidate) = problem.pdp(x_k, y_k) {
        let verdict = check_pdp(&candidate, x_k, y_k, problem, params, ledger)?;
        let accepted = verdict.accepted;
        out.pdp = Some(verdict.clone());
        if accepted {
            out.x_r = candidate.0;
            out.y_r = candidate.1;
            out.status = RestorationStatus::PdpRestored;
            out.h_xk_yr = verdict.h_xk_yr;
            out.h_xr_yr = verdict.h_xr_yr;
            out.ledger = ledger.since(&start);
            return Ok(out);
        }
    }

    let mut w = *y_k;
    let mut round = 0usize;
    loop {
        // Step 2: precision.
        let gh_target = if round <= params.n_prec as usize {
            r * w.gh
        } else {
            params.eps_prec_bar.min(r * w.gh)
        };
        let w_next = if w.is_exact() {
            w
        } else {
            problem.refine(&w, r * y_k.gf, gh_target)
        };

        // Step 3.
        let h_xk = eval_h(problem, x_k, &w_next, ledger)?;
        let h_xk_norm = h_xk.norm();
        let c_xk = constraint_ssq(&h_xk);
        let mut z = choose_z0(x_k, &w_next, problem, ledger);
        let mut h_z = h_xk.clone();
        let mut jac = eval_grad_h(problem, &z, &w_next, ledger)?;
        let eps_c = params.r_feas * h_xk_norm;

        loop {
            // Step 4.
            let c_z = constraint_ssq(&h_z);
            let grad_c: DVector<f64> = &jac * &h_z;
            let residual = stationarity_residual(&z, &grad_c, FeasibleSet::Box(domain))
                .map_err(|e| SolverError::InvariantViolation(e.to_string()))?;
            let finish = |out: &mut RestorationOutcome, status| {
                out.status = status;
                out.x_r = z.clone();
                out.y_r = w_next;
                out.h_xk_yr = h_xk_norm;
                out.h_xr_yr = h_z.norm();
                out.final_residual = Some(residual);
            };
            if c_z <= r * r * c_xk {
                finish(&mut out, RestorationStatus::Restored);
                out.ledger = ledger.since(&start);
                return Ok(out);
            }
            if residual <= eps_c && w_next.gh <= params.eps_prec_bar {
                finish(&mut out, RestorationStatus::PossibleInfeasibility);
                out.ledger = ledger.since(&start);
                return Ok(out);
            }
            if residual <= eps_c {
                break;
            }

            // Step 5.
            let b = build_b(&jac, params.m, params.sigma_min)?;
            let mut sigma = params.sigma_min;
            loop {
                if out.inner_iterations >= hard_cap {
                    return Err(SolverError::AbnormalTermination { cap: hard_cap });
                }
                out.inner_iterations += 1;
                out.sigma_history.push(sigma);
                let (trial, cert) = solve_restoration_qp(&grad_c, &b, sigma, &z, domain, kappas.kappa_r);
                let mut test = DescentTest {
                    round,
                    sigma,
                    step_norm: cert.step_norm,
                    c_before: c_z,
                    c_trial: c_z,
                    accepted: false,
                    qp_flagged: cert.flagged,
                    h_xk_w: h_xk_norm,
                    kappa_phi: None,
                    kappa_r: cert.kappa_estimate,
                    model_decrease: cert.model_decrease,
                };
                // A zero step would pass the decrease test without progress.
                if cert.flagged || cert.step_norm == 0.0 {
                    out.tests.push(test);
                    sigma = sigma_schedule(sigma);
                    continue;
                }
                let h_trial = eval_h(problem, &trial, &w_next, ledger)?;
                let c_trial = constraint_ssq(&h_trial);
                test.c_trial = c_trial;
                if c_trial <= c_z - params.alpha_r * cert.step_norm * cert.step_norm {
                    test.accepted = true;
                    test.kappa_phi = line_minimizer_ratio(&grad_c, &b, sigma, &z, &trial, domain);
                    out.tests.push(test);
                    z = trial;
                    h_z = h_trial;
                    jac = eval_grad_h(problem, &z, &w_next, ledger)?;
                    break;
                }
                out.tests.push(test);
                sigma = sigma_schedule(sigma);
            }
        }

        round += 1;
        out.refinements = round;
        w = w_next;
    }
}
