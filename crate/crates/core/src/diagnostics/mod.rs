//! Worst-case constants, trace audits and complexity fits.

mod audit;
mod complexity;
mod constants;

pub use audit::{
    audit, audit_with, AuditReport, CheckOutcome, CheckResult, ObservedCounts, RealizedConstants, Violation,
    AUDIT_RELATIVE_SLACK,
};
pub use complexity::{complexity_fit, FitError};
pub use constants::{n_sigma, sigma_bar, theta_bar, IterationBounds, Kappas, TheoreticalConstants};
