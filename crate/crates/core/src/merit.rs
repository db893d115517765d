//! Closed-form scalar quantities shared by the restoration and optimization phases.

use nalgebra::DVector;

use crate::error::ContractError;
use crate::types::PrecisionLevel;

/// Merit function `θ·f + (1−θ)(‖h‖ + g)`.
pub fn merit_phi(f_val: f64, h_norm: f64, g_val: f64, theta: f64) -> Result<f64, ContractError> {
    if !(0.0..=1.0).contains(&theta) {
        return Err(ContractError::ThetaOutOfRange(theta));
    }
    let infeas = infeasibility(h_norm, g_val)?;
    Ok(theta * f_val + (1.0 - theta) * infeas)
}

/// Half the squared Euclidean norm of the constraint residual.
pub fn constraint_ssq(h_vec: &DVector<f64>) -> f64 {
    0.5 * h_vec.norm_squared()
}

pub fn precision_g(y: &PrecisionLevel) -> f64 {
    y.gf.max(y.gh)
}

/// Total infeasibility `‖h‖ + g`: algebraic plus precision.
pub fn infeasibility(h_norm: f64, g_val: f64) -> Result<f64, ContractError> {
    if h_norm.is_nan() || h_norm < 0.0 {
        return Err(ContractError::NegativeMeasure(h_norm));
    }
    if g_val.is_nan() || g_val < 0.0 {
        return Err(ContractError::NegativeMeasure(g_val));
    }
    Ok(h_norm + g_val)
}
