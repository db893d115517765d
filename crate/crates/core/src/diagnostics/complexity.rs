//! Empirical evaluation complexity: how total evaluations grow as the
//! optimality tolerance shrinks.

use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum FitError {
    #[error("need at least 3 points, got {0}")]
    TooFewPoints(usize),
    #[error("point {0} has a nonpositive tolerance or evaluation count")]
    NonPositive(usize),
    #[error("all tolerances are equal")]
    Degenerate,
}

/// Least-squares slope of `log(evals)` against `log(1/ε)`.
pub fn complexity_fit(points: &[(f64, f64)]) -> Result<f64, FitError> {
    if points.len() < 3 {
        return Err(FitError::TooFewPoints(points.len()));
    }
    let mut xs = Vec::with_capacity(points.len());
    let mut ys = Vec::with_capacity(points.len());
    for (i, &(eps, evals)) in points.iter().enumerate() {
        if !(eps > 0.0 && evals > 0.0 && eps.is_finite() && evals.is_finite()) {
            return Err(FitError::NonPositive(i));
        }
        xs.push(-eps.ln());
        ys.push(evals.ln());
    }
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    if sxx == 0.0 {
        return Err(FitError::Degenerate);
    }
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    Ok(sxy / sxx)
}
