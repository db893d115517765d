//! Replays a run report against the worst-case inequalities of the analysis.
//!
//! Every inequality is recomputed from recorded oracle values, never from
//! recorded verdicts, so an edited trace is caught.

use serde::{Deserialize, Serialize};

use crate::bira::{RunReport, RunStatus};
use crate::diagnostics::{IterationBounds, TheoreticalConstants};

/// Relative slack of every `lhs ≤ rhs` comparison.
pub const AUDIT_RELATIVE_SLACK: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CheckOutcome {
    Pass,
    Fail,
    /// A constant the check needs is unavailable for this problem.
    NotEvaluable,
    /// Reported for information; violations do not fail the audit.
    Informational,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub check: String,
    pub iteration: Option<usize>,
    pub lhs: f64,
    pub rhs: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckResult {
    pub name: String,
    pub outcome: CheckOutcome,
    /// Number of inequalities evaluated.
    pub evaluated: usize,
    /// Smallest `rhs − lhs` seen.
    pub worst_margin: Option<f64>,
    pub violations: Vec<Violation>,
    pub note: Option<String>,
}

/// Largest realized values of quantities the analysis bounds.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RealizedConstants {
    pub max_sigma: f64,
    pub max_mu: f64,
    pub max_kappa_r: f64,
    pub max_kappa_t: f64,
    pub max_kappa: f64,
    pub max_kappa_phi: f64,
    pub feasibility_sum: f64,
    pub step_sum: f64,
    pub residual_sum: f64,
    pub tangent_fallbacks: usize,
}

/// Iterations on which each stopping condition still failed.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct ObservedCounts {
    pub n_hinfeas: usize,
    pub n_ginfeas: usize,
    pub n_infeas: usize,
    pub n_opt: usize,
    pub iterations: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditReport {
    pub checks: Vec<CheckResult>,
    pub realized: RealizedConstants,
    pub observed: ObservedCounts,
    pub bounds: Option<IterationBounds>,
    pub constants: Option<TheoreticalConstants>,
}

impl AuditReport {
    /// Violations of checks that count toward the verdict.
    pub fn violations(&self) -> impl Iterator<Item = &Violation> {
        self.checks
            .iter()
            .filter(|c| c.outcome == CheckOutcome::Fail)
            .flat_map(|c| c.violations.iter())
    }

    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.outcome != CheckOutcome::Fail)
    }

    pub fn check(&self, name: &str) -> Option<&CheckResult> {
        self.checks.iter().find(|c| c.name == name)
    }
}

struct Check {
    name: &'static str,
    informational: bool,
    evaluated: usize,
    worst: Option<f64>,
    violations: Vec<Violation>,
    note: Option<String>,
}

impl Check {
    fn new(name: &'static str) -> Self {
        Check {
            name,
            informational: false,
            evaluated: 0,
            worst: None,
            violations: Vec::new(),
            note: None,
        }
    }

    fn informational(name: &'static str, note: &str) -> Self {
        Check {
            informational: true,
            note: Some(note.to_string()),
            ..Check::new(name)
        }
    }

    /// Records `lhs ≤ rhs` with slack relative to `scale` (at least the
    /// magnitudes of both sides).
    fn leq(&mut self, k: Option<usize>, lhs: f64, rhs: f64, scale: f64) {
        self.evaluated += 1;
        let margin = rhs - lhs;
        self.worst = Some(self.worst.map_or(margin, |w: f64| w.min(margin)));
        let scale = scale.max(lhs.abs()).max(rhs.abs());
        let ok = lhs <= rhs + AUDIT_RELATIVE_SLACK * scale;
        if !ok || lhs.is_nan() || rhs.is_nan() {
            self.violations.push(Violation {
                check: self.name.to_string(),
                iteration: k,
                lhs,
                rhs,
            });
        }
    }

    fn finish(self) -> CheckResult {
        let outcome = if self.informational {
            CheckOutcome::Informational
        } else if self.violations.is_empty() {
            CheckOutcome::Pass
        } else {
            CheckOutcome::Fail
        };
        CheckResult {
            name: self.name.to_string(),
            outcome,
            evaluated: self.evaluated,
            worst_margin: self.worst,
            violations: self.violations,
            note: self.note,
        }
    }
}

fn not_evaluable(name: &str, why: &str) -> CheckResult {
    CheckResult {
        name: name.to_string(),
        outcome: CheckOutcome::NotEvaluable,
        evaluated: 0,
        worst_margin: None,
        violations: Vec::new(),
        note: Some(why.to_string()),
    }
}

fn phi(f: f64, h: f64, g: f64, theta: f64) -> f64 {
    theta * f + (1.0 - theta) * (h + g)
}

/// Audits `report` with constants derived from its own recorded inputs.
pub fn audit(report: &RunReport) -> AuditReport {
    let constants = TheoreticalConstants::compute_partial(
        &report.problem_constants,
        &report.params,
        &report.kappas,
        report.oracle_bounds.as_ref(),
    )
    .ok();
    audit_with(report, constants.as_ref())
}

pub fn audit_with(report: &RunReport, constants: Option<&TheoreticalConstants>) -> AuditReport {
    let recs = &report.iterations;
    let r = report.params.r;
    let half = 0.5 * (1.0 - r);
    let tol = report.tolerances;
    let mut checks = Vec::new();
    let mut realized = RealizedConstants::default();

    // Penalty parameter.
    let mut mono = Check::new("theta_nonincreasing");
    for (i, rec) in recs.iter().enumerate() {
        let prev = if i == 0 {
            report.params.theta_0
        } else {
            recs[i - 1].theta_after
        };
        mono.leq(Some(rec.k), rec.theta_before, prev, 1.0);
        mono.leq(Some(rec.k), rec.theta_after, rec.theta_before, 1.0);
    }
    checks.push(mono.finish());

    match constants {
        Some(c) => {
            let mut lower = Check::new("theta_lower_bound");
            for rec in recs {
                lower.leq(Some(rec.k), c.theta_bar, rec.theta_after, 1.0);
            }
            checks.push(lower.finish());
        }
        None => checks.push(not_evaluable("theta_lower_bound", "problem constants invalid")),
    }

    let mut pen = Check::new("penalty_merit_decrease");
    let mut meri = Check::new("merit_decrease");
    let mut fin = Check::new("objective_decrease");
    let mut restore = Check::new("restoration_progress");
    for rec in recs {
        let th = rec.theta_after;
        let change = rec.h_xr_yr - rec.h_xk_yr + rec.g_yr - rec.g_yk;
        let a = phi(rec.f_xr_yr, rec.h_xr_yr, rec.g_yr, th);
        let b = phi(rec.f_xk_yr, rec.h_xk_yr, rec.g_yr, th);
        let scale = a.abs() + b.abs() + rec.h_xr_yr + rec.h_xk_yr + rec.g_yr + rec.g_yk;
        pen.leq(Some(rec.k), a - b, half * change, scale);

        let a = phi(rec.f_xnext_ynext, rec.h_xnext_ynext, rec.g_ynext, th);
        let b = phi(rec.f_xk_ynext, rec.h_xk_ynext, rec.g_ynext, th);
        let scale = a.abs() + b.abs() + rec.h_xr_yr + rec.h_xk_yr + rec.g_yr + rec.g_yk;
        meri.leq(Some(rec.k), a, b + half * change, scale);

        let step = rec.x_next.distance(&rec.x_r);
        fin.leq(
            Some(rec.k),
            rec.f_xnext_ynext,
            rec.f_xr_yr - report.params.alpha * step * step,
            rec.f_xr_yr.abs(),
        );

        restore.leq(Some(rec.k), rec.h_xr_yr, r * rec.h_xk_yr, rec.h_xk_yr);
        restore.leq(
            Some(rec.k),
            (1.0 - r) / (2.0 * r) * (rec.g_yk - rec.g_yr),
            rec.h_xk_yr - rec.h_xr_yr,
            rec.h_xk_yr + rec.g_yk,
        );
    }
    checks.extend([pen.finish(), meri.finish(), fin.finish(), restore.finish()]);

    // Regularization caps.
    let restorations = recs
        .iter()
        .map(|r| &r.restoration)
        .chain(report.failure.iter().map(|f| &f.restoration));
    let sigmas: Vec<(usize, f64)> = recs
        .iter()
        .map(|r| (r.k, &r.restoration))
        .chain(report.failure.iter().map(|f| (f.k, &f.restoration)))
        .flat_map(|(k, o)| o.sigma_history.iter().map(move |s| (k, *s)))
        .collect();
    realized.max_sigma = sigmas.iter().map(|s| s.1).fold(0.0, f64::max);
    let mus: Vec<(usize, f64)> = recs
        .iter()
        .flat_map(|r| r.attempts.iter().map(move |a| (r.k, a.mu)))
        .collect();
    realized.max_mu = mus.iter().map(|m| m.1).fold(0.0, f64::max);
    for o in restorations.clone() {
        for t in &o.tests {
            if t.accepted {
                realized.max_kappa_r = realized.max_kappa_r.max(t.kappa_r.unwrap_or(f64::INFINITY));
                realized.max_kappa_phi = realized.max_kappa_phi.max(t.kappa_phi.unwrap_or(f64::INFINITY));
            }
        }
    }
    for rec in recs {
        for a in rec.attempts.iter().filter(|a| !a.certificate.flagged) {
            let c = &a.certificate;
            realized.max_kappa = realized.max_kappa.max(c.kappa_estimate.unwrap_or(f64::INFINITY));
            realized.max_kappa_t = realized.max_kappa_t.max(c.kappa_t_estimate.unwrap_or(f64::INFINITY));
        }
        realized.tangent_fallbacks += rec.attempts.iter().filter(|a| a.certificate.flagged).count();
    }

    match constants {
        Some(c) => {
            let mut sig = Check::new("sigma_cap");
            for (k, s) in &sigmas {
                sig.leq(Some(*k), *s, c.sigma_cap, 1.0);
            }
            checks.push(sig.finish());
            let mut mu = Check::new("mu_cap");
            for (k, m) in &mus {
                mu.leq(Some(*k), *m, c.mu_bar, 1.0);
            }
            checks.push(mu.finish());

            let mut dist = Check::new("restoration_distance");
            for rec in recs {
                dist.leq(Some(rec.k), rec.x_r.distance(&rec.x_k), c.beta_r * rec.h_xk_yr, 0.0);
            }
            checks.push(dist.finish());

            let mut count = Check::new("restoration_test_count");
            let mut step_bound = Check::new("restoration_step_bound");
            let c_s = realized.max_kappa_phi * report.params.m * report.problem_constants.c_h;
            for (k, o) in recs
                .iter()
                .map(|r| (r.k, &r.restoration))
                .chain(report.failure.iter().map(|f| (f.k, &f.restoration)))
            {
                count.leq(Some(k), o.inner_iterations as f64, c.n_resta, 1.0);
                for t in o.tests.iter().filter(|t| t.accepted) {
                    step_bound.leq(Some(k), t.step_norm, c_s * t.h_xk_w, 0.0);
                }
            }
            checks.push(count.finish());
            let mut sb = step_bound.finish();
            sb.note = Some(format!(
                "C_s evaluated with realized kappa_phi = {:.6e}",
                realized.max_kappa_phi
            ));
            checks.push(sb);

            let mut caps = Check::new("evaluation_caps");
            for rec in recs {
                let l = &rec.ledger;
                caps.leq(Some(rec.k), l.h_evals as f64, c.n_r + c.n_reg + 1.0, 1.0);
                caps.leq(Some(rec.k), l.gradh_evals as f64, c.n_r + 2.0, 1.0);
                caps.leq(Some(rec.k), l.f_evals as f64, c.n_reg + 3.0, 1.0);
                caps.leq(Some(rec.k), l.gradf_evals as f64, 2.0, 1.0);
            }
            checks.push(caps.finish());

            let mut resid = Check::new("residual_vs_step");
            for rec in recs {
                resid.leq(Some(rec.k), rec.stationarity_residual, c.c_p * rec.step_norm, 0.0);
            }
            checks.push(resid.finish());
        }
        None => {
            for name in [
                "sigma_cap",
                "mu_cap",
                "restoration_distance",
                "restoration_test_count",
                "restoration_step_bound",
                "evaluation_caps",
                "residual_vs_step",
            ] {
                checks.push(not_evaluable(name, "problem constants invalid"));
            }
        }
    }

    let mut no_f = Check::new("restoration_objective_free");
    for (k, o) in recs
        .iter()
        .map(|r| (r.k, &r.restoration))
        .chain(report.failure.iter().map(|f| (f.k, &f.restoration)))
    {
        no_f.leq(Some(k), (o.ledger.f_evals + o.ledger.gradf_evals) as f64, 0.0, 0.0);
    }
    checks.push(no_f.finish());

    let alpha_r = report.params.alpha_r;
    let mut desc = Check::new("restoration_descent");
    let mut rcert = Check::new("restoration_certificates");
    for (k, o) in recs
        .iter()
        .map(|r| (r.k, &r.restoration))
        .chain(report.failure.iter().map(|f| (f.k, &f.restoration)))
    {
        for t in &o.tests {
            if !t.qp_flagged {
                rcert.leq(Some(k), t.model_decrease, 0.0, 0.0);
            }
            if t.accepted {
                desc.leq(
                    Some(k),
                    t.c_trial,
                    t.c_before - alpha_r * t.step_norm * t.step_norm,
                    t.c_before,
                );
                rcert.leq(Some(k), t.kappa_r.unwrap_or(f64::INFINITY), report.kappas.kappa_r, 1.0);
            }
        }
    }
    checks.extend([desc.finish(), rcert.finish()]);

    let mut tcert = Check::new("tangent_certificates");
    for rec in recs {
        for a in rec.attempts.iter().filter(|a| !a.certificate.flagged) {
            let c = &a.certificate;
            let s = c.step_norm;
            tcert.leq(Some(rec.k), c.model_decrease, 0.0, 0.0);
            tcert.leq(Some(rec.k), c.tangent_violation, report.kappas.kappa_t * s * s, 0.0);
            tcert.leq(Some(rec.k), c.stationarity_residual, report.kappas.kappa * s, 0.0);
        }
    }
    checks.push(tcert.finish());
    let mut fallbacks = Check::informational(
        "tangent_fallbacks",
        "trial steps where the tangent subproblem returned the restored point uncertified",
    );
    for rec in recs {
        for a in rec.attempts.iter().filter(|a| a.certificate.flagged) {
            fallbacks.leq(Some(rec.k), a.certificate.stationarity_residual, 0.0, 0.0);
        }
    }
    checks.push(fallbacks.finish());

    // Oracle error model.
    match (report.oracle_bounds, constants) {
        (Some(b), Some(c)) => {
            let beta_f = c.beta_f.expect("bounds present");
            let beta_bar = c.beta_bar.expect("bounds present");
            let mut obj = Check::new("restored_objective");
            let mut prec = Check::new("precision_objective_change");
            let mut next_f = Check::new("next_precision_objective");
            let mut next_h = Check::informational(
                "next_precision_constraints",
                "constraint noise is deliberately larger than this bound",
            );
            for rec in recs {
                obj.leq(
                    Some(rec.k),
                    rec.f_xr_yr,
                    rec.f_xk_yk + beta_f * (rec.h_xk_yr + rec.g_yk),
                    rec.f_xk_yk.abs(),
                );
                prec.leq(
                    Some(rec.k),
                    rec.f_xk_yr,
                    rec.f_xk_yk + b.beta * rec.g_yk,
                    rec.f_xk_yk.abs(),
                );
                next_f.leq(
                    Some(rec.k),
                    rec.f_xk_ynext,
                    rec.f_xk_yk + beta_bar * rec.g_yk,
                    rec.f_xk_yk.abs(),
                );
                next_h.leq(
                    Some(rec.k),
                    rec.h_xk_ynext,
                    rec.h_xk_yk + beta_bar * rec.g_yk,
                    rec.h_xk_yk,
                );
            }
            checks.extend([obj.finish(), prec.finish(), next_f.finish(), next_h.finish()]);

            let c_feas = c.c_feas.expect("bounds present");
            let c_d = c.c_d.expect("bounds present");
            let c_proj = c.c_proj.expect("bounds present");
            let mut feas = Check::new("feasibility_sum");
            let mut steps = Check::new("step_sum");
            let mut res = Check::new("residual_sum");
            for rec in recs {
                realized.feasibility_sum += rec.h_xk_yr + rec.g_yk;
                realized.step_sum += rec.step_norm * rec.step_norm;
                realized.residual_sum += rec.stationarity_residual * rec.stationarity_residual;
                feas.leq(Some(rec.k), realized.feasibility_sum, c_feas, 0.0);
                steps.leq(Some(rec.k), realized.step_sum, c_d, 0.0);
                res.leq(Some(rec.k), realized.residual_sum, c_proj, 0.0);
            }
            checks.extend([feas.finish(), steps.finish(), res.finish()]);
        }
        _ => {
            for rec in recs {
                realized.feasibility_sum += rec.h_xk_yr + rec.g_yk;
                realized.step_sum += rec.step_norm * rec.step_norm;
                realized.residual_sum += rec.stationarity_residual * rec.stationarity_residual;
            }
            for name in [
                "restored_objective",
                "precision_objective_change",
                "next_precision_objective",
                "next_precision_constraints",
                "feasibility_sum",
                "step_sum",
                "residual_sum",
            ] {
                checks.push(not_evaluable(name, "no oracle error model"));
            }
        }
    }

    // Iteration counts.
    let mut observed = ObservedCounts {
        iterations: recs.len(),
        ..ObservedCounts::default()
    };
    for rec in recs {
        observed.n_hinfeas += usize::from(rec.h_xr_yr > tol.eps_feas);
        observed.n_ginfeas += usize::from(rec.g_yk > tol.eps_prec);
        observed.n_infeas += usize::from(rec.h_xr_yr > tol.eps_feas || rec.g_yr > tol.eps_prec);
        observed.n_opt += usize::from(rec.stationarity_residual > tol.eps_opt);
    }
    let bounds = constants.and_then(|c| c.iteration_bounds(r, tol.eps_feas, tol.eps_prec, tol.eps_opt));
    match bounds {
        Some(b) => {
            let mut it = Check::new("iteration_counts");
            it.leq(None, observed.n_hinfeas as f64, b.n_hinfeas, 1.0);
            it.leq(None, observed.n_ginfeas as f64, b.n_ginfeas, 1.0);
            it.leq(None, observed.n_infeas as f64, b.n_infeas, 1.0);
            it.leq(None, observed.n_opt as f64, b.n_opt, 1.0);
            it.leq(None, observed.iterations as f64, b.n_max, 1.0);
            checks.push(it.finish());
        }
        None => checks.push(not_evaluable("iteration_counts", "no oracle error model")),
    }

    if report.status == RunStatus::Converged {
        let mut stop = Check::new("stopping_test");
        if let Some(rec) = recs.last() {
            stop.leq(Some(rec.k), rec.h_xr_yr, tol.eps_feas, 0.0);
            stop.leq(Some(rec.k), rec.g_yr, tol.eps_prec, 0.0);
            stop.leq(Some(rec.k), rec.g_ynext, tol.eps_prec, 0.0);
            stop.leq(Some(rec.k), rec.stationarity_residual, tol.eps_opt, 0.0);
        }
        checks.push(stop.finish());
    }

    AuditReport {
        checks,
        realized,
        observed,
        bounds,
        constants: constants.cloned(),
    }
}
