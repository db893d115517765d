//! Inexact restoration for box-constrained problems whose objective and
//! equality constraints are only available through oracles of adjustable
//! precision.
//!
//! Each outer iteration restores feasibility (and sharpens precision) with
//! [`resta`], tests the result, adjusts the penalty parameter and takes a
//! regularized step on the tangent set. [`bira_run`] drives the loop and
//! returns a [`RunReport`] that [`diagnostics::audit`] can replay against
//! the worst-case bounds of the analysis.
//!
//! ```
//! use inexact_restoration::{bira_run, make_problem, AlgorithmParams, RunStatus, Tolerances};
//!
//! let problem = make_problem("p1").unwrap();
//! let tol = Tolerances::new(1e-6, 1e-6, 1e-4).unwrap();
//! let report = bira_run(&problem, &AlgorithmParams::default(), tol, 500).unwrap();
//! assert_eq!(report.status, RunStatus::Converged);
//! ```

pub mod bira;
pub mod diagnostics;
pub mod error;
pub mod geometry;
pub mod merit;
pub mod oracle;
pub mod qp;
pub mod resta;
pub mod types;

pub use bira::{bira_run, bira_run_with, BiraOptions, IterationRecord, RunReport, RunStatus, Tolerances};
pub use diagnostics::{audit, Kappas, TheoreticalConstants};
pub use error::{ConfigError, ContractError, OracleError, SolverError};
pub use oracle::{make_problem, make_suite, EvaluationLedger, InexactProblem, OracleBounds, SUITE_IDS};
pub use resta::{resta, RestorationOutcome, RestorationStatus};
pub use types::{AlgorithmParams, BoxPolytope, DecisionPoint, PrecisionLevel, ProblemConstants};

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/problems.md")]
    mod problems {}
    #[doc = include_str!("../../../book/src/restoration.md")]
    mod restoration {}
    #[doc = include_str!("../../../book/src/outer_loop.md")]
    mod outer_loop {}
    #[doc = include_str!("../../../book/src/diagnostics.md")]
    mod diagnostics {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
}
