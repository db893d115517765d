//! The inexact-evaluation interface and the evaluation ledger.
//!
//! Algorithms never call an [`InexactProblem`] directly; they go through the
//! counting wrappers ([`eval_f`], [`eval_h`], ...) so every evaluation is
//! charged to exactly one ledger counter.

mod suite;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::OracleError;
use crate::types::{BoxPolytope, DecisionPoint, PrecisionLevel, ProblemConstants};

pub use suite::{make_problem, make_suite, SyntheticProblem, SUITE_IDS};

/// Properties of the oracle that cannot be observed from a trace: the
/// deterioration constants of the precision-restoration assumptions and the
/// evaluation budget of the problem-dependent restoration procedure.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OracleBounds {
    /// Deterioration of `f` when only `y` is restored.
    pub beta: f64,
    /// Slack factor of the restricted deterioration condition, in (0, 1).
    pub gamma: f64,
    /// Iteration from which the restricted deterioration condition holds.
    pub k_r: usize,
    /// Evaluations of `h` and its Jacobian spent by one PDP check.
    pub n_pdp: usize,
}

/// A problem whose objective and constraints are only available through
/// evaluations at a controllable precision level.
///
/// `grad_h` returns the `n×m` matrix whose columns are the constraint
/// gradients.
pub trait InexactProblem: Send + Sync {
    fn id(&self) -> &str;
    fn dim(&self) -> usize;
    fn num_constraints(&self) -> usize;
    fn domain(&self) -> &BoxPolytope;
    /// Starting point and precision.
    fn start(&self) -> (DecisionPoint, PrecisionLevel);

    fn f(&self, x: &DVector<f64>, y: &PrecisionLevel) -> f64;
    fn grad_f(&self, x: &DVector<f64>, y: &PrecisionLevel) -> DVector<f64>;
    fn h(&self, x: &DVector<f64>, y: &PrecisionLevel) -> DVector<f64>;
    fn grad_h(&self, x: &DVector<f64>, y: &PrecisionLevel) -> DMatrix<f64>;

    /// A precision level at least as fine as the targets. Exact levels are
    /// returned unchanged.
    fn refine(&self, y: &PrecisionLevel, gf_target: f64, gh_target: f64) -> PrecisionLevel {
        if y.is_exact() {
            *y
        } else {
            PrecisionLevel {
                gf: gf_target.max(0.0),
                gh: gh_target.max(0.0),
            }
        }
    }

    fn constants(&self) -> ProblemConstants;

    fn exact_f(&self, _x: &DVector<f64>) -> Option<f64> {
        None
    }

    fn exact_h(&self, _x: &DVector<f64>) -> Option<DVector<f64>> {
        None
    }

    /// Optional cheap restoration; the candidate is verified by the caller.
    fn pdp(&self, _x: &DecisionPoint, _y: &PrecisionLevel) -> Option<(DecisionPoint, PrecisionLevel)> {
        None
    }

    fn oracle_bounds(&self) -> Option<OracleBounds> {
        None
    }
}

/// Exact count of oracle calls.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct EvaluationLedger {
    pub f_evals: u64,
    pub gradf_evals: u64,
    pub h_evals: u64,
    pub gradh_evals: u64,
}

impl EvaluationLedger {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn total(&self) -> u64 {
        self.f_evals + self.gradf_evals + self.h_evals + self.gradh_evals
    }

    /// Counts accumulated since `earlier`.
    pub fn since(&self, earlier: &EvaluationLedger) -> EvaluationLedger {
        EvaluationLedger {
            f_evals: self.f_evals - earlier.f_evals,
            gradf_evals: self.gradf_evals - earlier.gradf_evals,
            h_evals: self.h_evals - earlier.h_evals,
            gradh_evals: self.gradh_evals - earlier.gradh_evals,
        }
    }
}

fn check_point<P: InexactProblem + ?Sized>(problem: &P, x: &DVector<f64>) -> Result<(), OracleError> {
    if x.len() != problem.dim() {
        return Err(OracleError::Dimension {
            expected: problem.dim(),
            found: x.len(),
        });
    }
    if !x.iter().all(|v| v.is_finite()) {
        return Err(OracleError::NonFinite);
    }
    let violation = problem.domain().violation(x);
    // Affine corrections can leave a point a few ulps outside a face.
    let tol = 1e-12 * (1.0 + x.amax());
    if violation > tol {
        return Err(OracleError::OutsideDomain(violation));
    }
    Ok(())
}

fn finite_scalar(v: f64) -> Result<f64, OracleError> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(OracleError::NonFinite)
    }
}

fn finite_all<'a>(mut it: impl Iterator<Item = &'a f64>) -> Result<(), OracleError> {
    if it.all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(OracleError::NonFinite)
    }
}

pub fn eval_f<P: InexactProblem + ?Sized>(
    problem: &P,
    x: &DVector<f64>,
    y: &PrecisionLevel,
    ledger: &mut EvaluationLedger,
) -> Result<f64, OracleError> {
    check_point(problem, x)?;
    ledger.f_evals += 1;
    finite_scalar(problem.f(x, y))
}

pub fn eval_grad_f<P: InexactProblem + ?Sized>(
    problem: &P,
    x: &DVector<f64>,
    y: &PrecisionLevel,
    ledger: &mut EvaluationLedger,
) -> Result<DVector<f64>, OracleError> {
    check_point(problem, x)?;
    ledger.gradf_evals += 1;
    let g = problem.grad_f(x, y);
    finite_all(g.iter())?;
    Ok(g)
}

pub fn eval_h<P: InexactProblem + ?Sized>(
    problem: &P,
    x: &DVector<f64>,
    y: &PrecisionLevel,
    ledger: &mut EvaluationLedger,
) -> Result<DVector<f64>, OracleError> {
    check_point(problem, x)?;
    ledger.h_evals += 1;
    let h = problem.h(x, y);
    finite_all(h.iter())?;
    Ok(h)
}

pub fn eval_grad_h<P: InexactProblem + ?Sized>(
    problem: &P,
    x: &DVector<f64>,
    y: &PrecisionLevel,
    ledger: &mut EvaluationLedger,
) -> Result<DMatrix<f64>, OracleError> {
    check_point(problem, x)?;
    ledger.gradh_evals += 1;
    let j = problem.grad_h(x, y);
    finite_all(j.iter())?;
    Ok(j)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_call_increments_one_counter() {
        let p = make_problem("p1").unwrap();
        let (x0, y0) = p.start();
        let mut ledger = EvaluationLedger::new();
        eval_f(&p, &x0, &y0, &mut ledger).unwrap();
        eval_f(&p, &x0, &y0, &mut ledger).unwrap();
        eval_grad_f(&p, &x0, &y0, &mut ledger).unwrap();
        eval_h(&p, &x0, &y0, &mut ledger).unwrap();
        eval_grad_h(&p, &x0, &y0, &mut ledger).unwrap();
        eval_grad_h(&p, &x0, &y0, &mut ledger).unwrap();
        eval_grad_h(&p, &x0, &y0, &mut ledger).unwrap();
        assert_eq!(
            ledger,
            EvaluationLedger {
                f_evals: 2,
                gradf_evals: 1,
                h_evals: 1,
                gradh_evals: 3
            }
        );
        assert_eq!(ledger.total(), 7);
        let before = ledger;
        eval_h(&p, &x0, &y0, &mut ledger).unwrap();
        assert_eq!(ledger.since(&before).h_evals, 1);
        assert_eq!(ledger.since(&before).total(), 1);
    }

    #[test]
    fn outside_domain_is_rejected() {
        let p = make_problem("p3").unwrap();
        let mut ledger = EvaluationLedger::new();
        let x = DVector::from_vec(vec![1.5, 0.0]);
        let err = eval_f(&p, &x, &PrecisionLevel::EXACT, &mut ledger).unwrap_err();
        assert!(matches!(err, OracleError::OutsideDomain(v) if (v - 0.5).abs() < 1e-15));
        assert_eq!(ledger.total(), 0);
        let short = DVector::from_vec(vec![0.0]);
        assert!(matches!(
            eval_h(&p, &short, &PrecisionLevel::EXACT, &mut ledger),
            Err(OracleError::Dimension { expected: 2, found: 1 })
        ));
    }

    #[test]
    fn default_refine_hits_targets_and_keeps_exact() {
        let p = make_problem("p1").unwrap();
        let y = PrecisionLevel { gf: 0.2, gh: 0.4 };
        assert_eq!(p.refine(&y, 0.1, 0.2), PrecisionLevel { gf: 0.1, gh: 0.2 });
        assert_eq!(p.refine(&PrecisionLevel::EXACT, 0.3, 0.3), PrecisionLevel::EXACT);
        // The forced-precision branch of the refinement rule.
        let (r, eps_bar) = (0.5, 0.05);
        let gh_target = f64::min(eps_bar, r * y.gh);
        assert_eq!(p.refine(&y, r * y.gf, gh_target).gh, 0.05);
    }
}
