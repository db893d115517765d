//! Worst-case constants of the complexity analysis.
//!
//! They are evaluated from problem constants, algorithm parameters and the
//! solver constants `κ`. Most of them are astronomically large for any
//! realistic input; they serve as audit bounds, not as predictions.

use serde::{Deserialize, Serialize};

use crate::error::ConfigError;
use crate::oracle::OracleBounds;
use crate::types::{AlgorithmParams, ProblemConstants};

/// Constants certified by the subproblem solvers.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Kappas {
    /// Projected-gradient bound of restoration steps.
    pub kappa_r: f64,
    /// Tangent-violation bound of optimization steps.
    pub kappa_t: f64,
    /// Projected-gradient bound of optimization steps.
    pub kappa: f64,
    /// One-dimensional line bound of restoration steps.
    pub kappa_phi: f64,
}

impl Default for Kappas {
    fn default() -> Self {
        Kappas {
            kappa_r: 10.0,
            kappa_t: 10.0,
            kappa: 10.0,
            kappa_phi: 2.0,
        }
    }
}

impl Kappas {
    pub fn validate(&self) -> Result<(), ConfigError> {
        for (key, v) in [
            ("kappa_R", self.kappa_r),
            ("kappa_T", self.kappa_t),
            ("kappa", self.kappa),
            ("kappa_phi", self.kappa_phi),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(ConfigError::OutOfRange {
                    key,
                    value: v,
                    expected: "finite and > 0",
                });
            }
        }
        Ok(())
    }
}

/// `σ̄ = 2(L_c + M/2 + α_R)`
pub fn sigma_bar(l_c: f64, m: f64, alpha_r: f64) -> f64 {
    2.0 * (l_c + m / 2.0 + alpha_r)
}

/// Number of regularization doublings from `σ_min` past `σ̄`, at least one.
pub fn n_sigma(sigma_bar: f64, sigma_min: f64) -> f64 {
    ((sigma_bar.log2() - sigma_min.log2()).floor() + 1.0).max(1.0)
}

/// `min{θ₀, [2/(1+r)·(L_f β_R/(1−r) + 1)]⁻¹}`
pub fn theta_bar(theta_0: f64, l_f: f64, beta_r: f64, r: f64) -> f64 {
    let inv = 2.0 / (1.0 + r) * (l_f * beta_r / (1.0 - r) + 1.0);
    theta_0.min(1.0 / inv)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TheoreticalConstants {
    pub sigma_bar: f64,
    /// `max(10σ̄, σ_max)`, the largest regularization restoration may use.
    pub sigma_cap: f64,
    pub c_p_omega: f64,
    pub c_rest: f64,
    pub c_s: f64,
    pub n_sigma: f64,
    pub n_resta: f64,
    pub n_pdp: f64,
    pub n_r: f64,
    pub beta_r: f64,
    pub theta_bar: f64,
    pub alpha_tilde: f64,
    pub c_mu: f64,
    pub n_reg: f64,
    pub mu_bar: f64,
    pub c_rho: f64,
    pub c_p: f64,
    /// The remaining constants depend on the oracle error model and are
    /// absent without it.
    pub beta_f: Option<f64>,
    pub beta_bar: Option<f64>,
    pub c_feas: Option<f64>,
    pub c_d: Option<f64>,
    pub c_proj: Option<f64>,
    pub kappas: Kappas,
    pub bounds: Option<OracleBounds>,
}

impl TheoreticalConstants {
    pub fn compute(
        pc: &ProblemConstants,
        params: &AlgorithmParams,
        kappas: &Kappas,
        bounds: &OracleBounds,
    ) -> Result<Self, ConfigError> {
        Self::compute_partial(pc, params, kappas, Some(bounds))
    }

    pub fn compute_partial(
        pc: &ProblemConstants,
        params: &AlgorithmParams,
        kappas: &Kappas,
        bounds: Option<&OracleBounds>,
    ) -> Result<Self, ConfigError> {
        pc.validate()?;
        params.validate()?;
        kappas.validate()?;
        if let Some(b) = bounds {
            if !(b.beta.is_finite() && b.beta >= 0.0) {
                return Err(ConfigError::OutOfRange {
                    key: "beta",
                    value: b.beta,
                    expected: ">= 0",
                });
            }
            if !(b.gamma > 0.0 && b.gamma < 1.0) {
                return Err(ConfigError::OutOfRange {
                    key: "gamma",
                    value: b.gamma,
                    expected: "in (0, 1)",
                });
            }
        }
        let p = params;
        let r = p.r;
        let sigma_bar = sigma_bar(pc.l_c, p.m, p.alpha_r);
        let sigma_cap = (10.0 * sigma_bar).max(p.sigma_max);
        let c_p_omega = pc.l_c + p.m + kappas.kappa_r + sigma_cap;
        let c_rest = c_p_omega.powi(2) * (1.0 - r * r) / (2.0 * p.alpha_r * p.r_feas.powi(2)) + 1.0;
        let c_s = kappas.kappa_phi * p.m * pc.c_h;
        let n_sigma = n_sigma(sigma_bar, p.sigma_min);
        // With no refinement rounds configured one round still runs.
        let n_prec = f64::from(p.n_prec.max(1));
        let n_resta = (c_rest * n_sigma + 1.0) * n_prec;
        let n_pdp = bounds.map_or(0.0, |b| b.n_pdp as f64);
        let n_r = n_resta + n_pdp;
        let beta_r = p.beta_pdp.max(p.beta_c + n_resta * c_s);
        let theta_bar = theta_bar(p.theta_0, pc.l_f, beta_r, r);
        let alpha_tilde = p.alpha.max((1.0 - theta_bar) / theta_bar * (kappas.kappa_t + pc.l_h));
        let c_mu = p.m + alpha_tilde + pc.l_f;
        let n_acce = f64::from(p.n_acce);
        let n_reg = (c_mu.log2() - p.mu_min.log2()).floor().max(n_acce) + 1.0;
        let mu_bar = (10.0 * c_mu).max(10f64.powf(n_acce) * p.mu_max);
        let c_rho = pc.c_h / theta_bar;
        let c_p = p.m + kappas.kappa + 2.0 * mu_bar + 2.0;

        let (beta_f, beta_bar, c_feas, c_d, c_proj) = match bounds {
            Some(b) => {
                let beta_f = pc.l_f * beta_r + b.beta;
                let beta_bar = theta_bar * (1.0 - b.gamma) * (1.0 - r).powi(2) / 2.0;
                let k_r = b.k_r as f64;
                let c_feas =
                    2.0 / (b.gamma * (1.0 - r).powi(2)) * (k_r * (2.0 * pc.c_f + pc.c_h) + c_rho + pc.c_h + pc.c_g);
                let c_d = ((beta_f + b.beta) * c_feas + 2.0 * pc.c_f) / p.alpha;
                let c_proj = c_p * c_p * c_d;
                (Some(beta_f), Some(beta_bar), Some(c_feas), Some(c_d), Some(c_proj))
            }
            None => (None, None, None, None, None),
        };

        Ok(TheoreticalConstants {
            sigma_bar,
            sigma_cap,
            c_p_omega,
            c_rest,
            c_s,
            n_sigma,
            n_resta,
            n_pdp,
            n_r,
            beta_r,
            theta_bar,
            alpha_tilde,
            c_mu,
            n_reg,
            mu_bar,
            c_rho,
            c_p,
            beta_f,
            beta_bar,
            c_feas,
            c_d,
            c_proj,
            kappas: *kappas,
            bounds: bounds.copied(),
        })
    }

    /// Iteration bounds at the given tolerances; `None` without the oracle
    /// error model.
    pub fn iteration_bounds(&self, r: f64, eps_feas: f64, eps_prec: f64, eps_opt: f64) -> Option<IterationBounds> {
        let c_feas = self.c_feas?;
        let c_proj = self.c_proj?;
        let n_hinfeas = (r * c_feas / eps_feas).floor();
        let n_ginfeas = (c_feas / eps_prec).floor();
        let n_infeas = (r * c_feas / eps_feas).max(r * c_feas / eps_prec).floor();
        let n_opt = (c_proj / (eps_opt * eps_opt)).floor();
        Some(IterationBounds {
            n_hinfeas,
            n_ginfeas,
            n_infeas,
            n_opt,
            n_max: n_infeas + n_ginfeas + n_opt,
        })
    }
}

/// Worst-case iteration counts, kept as floats because they overflow any
/// integer type for typical constants.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IterationBounds {
    /// Iterations with `‖h(x_R, y_R)‖ > ε_feas`.
    pub n_hinfeas: f64,
    /// Iterations with `g(y_k) > ε_prec`.
    pub n_ginfeas: f64,
    /// Iterations where restoration leaves either tolerance unmet.
    pub n_infeas: f64,
    /// Iterations with projected-gradient residual `> ε_opt`.
    pub n_opt: f64,
    pub n_max: f64,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::Provenance;
    use approx::assert_relative_eq;

    fn pc() -> ProblemConstants {
        ProblemConstants {
            l_f: 2.0,
            l_h: 1.0,
            l_c: 1.0,
            c_f: 1.0,
            c_h: 1.0,
            c_g: 1.0,
            provenance: Provenance::Analytic,
        }
    }

    fn bounds() -> OracleBounds {
        OracleBounds {
            beta: 0.1,
            gamma: 0.5,
            k_r: 0,
            n_pdp: 0,
        }
    }

    #[test]
    fn closed_form_examples() {
        assert_relative_eq!(sigma_bar(1.0, 1.0, 0.5), 4.0);
        assert_relative_eq!(theta_bar(0.9, 2.0, 1.0, 0.5), 0.15, epsilon = 1e-15);
        assert_eq!(n_sigma(4.0, 1.0), 3.0);
        assert_eq!(n_sigma(0.5, 1.0), 1.0);
    }

    #[test]
    fn chain_is_consistent() {
        let params = AlgorithmParams::default();
        let t = TheoreticalConstants::compute(&pc(), &params, &Kappas::default(), &bounds()).unwrap();
        assert_relative_eq!(t.sigma_bar, 2.0 * (1.0 + 50.0 + 1e-4));
        assert_eq!(t.sigma_cap, 1e4);
        assert_relative_eq!(t.n_resta, (t.c_rest * t.n_sigma + 1.0) * 3.0);
        assert_eq!(t.n_r, t.n_resta);
        assert_relative_eq!(t.beta_r, 1.0 + t.n_resta * t.c_s);
        assert!(t.theta_bar > 0.0 && t.theta_bar <= 0.9);
        assert!(t.mu_bar >= 10.0 * t.c_mu);
        let c_feas = t.c_feas.unwrap();
        assert_relative_eq!(c_feas, 16.0 * (t.c_rho + 2.0), max_relative = 1e-14);
        assert_relative_eq!(t.c_proj.unwrap(), t.c_p * t.c_p * t.c_d.unwrap());
        assert_relative_eq!(t.beta_bar.unwrap(), t.theta_bar * 0.5 * 0.25 / 2.0);
    }

    #[test]
    fn missing_bounds_leave_dependent_constants_empty() {
        let t = TheoreticalConstants::compute_partial(&pc(), &AlgorithmParams::default(), &Kappas::default(), None)
            .unwrap();
        assert!(t.c_feas.is_none() && t.c_d.is_none() && t.beta_bar.is_none());
        assert!(t.iteration_bounds(0.5, 1e-3, 1e-3, 1e-3).is_none());
    }

    #[test]
    fn iteration_bounds_floor() {
        let mut t =
            TheoreticalConstants::compute(&pc(), &AlgorithmParams::default(), &Kappas::default(), &bounds()).unwrap();
        t.c_feas = Some(10.0);
        t.c_proj = Some(2.0);
        let b = t.iteration_bounds(0.5, 0.3, 0.7, 0.5).unwrap();
        assert_eq!(b.n_hinfeas, 16.0);
        assert_eq!(b.n_ginfeas, 14.0);
        assert_eq!(b.n_infeas, 16.0);
        assert_eq!(b.n_opt, 8.0);
        assert_eq!(b.n_max, 38.0);
    }

    #[test]
    fn rejects_bad_inputs() {
        let bad = Kappas {
            kappa: 0.0,
            ..Kappas::default()
        };
        assert!(TheoreticalConstants::compute(&pc(), &AlgorithmParams::default(), &bad, &bounds()).is_err());
        let b = OracleBounds { gamma: 1.0, ..bounds() };
        assert!(TheoreticalConstants::compute(&pc(), &AlgorithmParams::default(), &Kappas::default(), &b).is_err());
    }
}
