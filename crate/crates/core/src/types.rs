//! Domain types shared by every stage of the solver.

use std::ops::Deref;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::ConfigError;

/// A point of the decision space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(from = "Vec<f64>", into = "Vec<f64>")]
pub struct DecisionPoint(DVector<f64>);

impl DecisionPoint {
    pub fn new(coords: DVector<f64>) -> Self {
        DecisionPoint(coords)
    }

    pub fn from_slice(coords: &[f64]) -> Self {
        DecisionPoint(DVector::from_column_slice(coords))
    }

    pub fn zeros(n: usize) -> Self {
        DecisionPoint(DVector::zeros(n))
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|v| v.is_finite())
    }

    pub fn as_vector(&self) -> &DVector<f64> {
        &self.0
    }

    pub fn into_vector(self) -> DVector<f64> {
        self.0
    }

    /// Euclidean distance to another point.
    pub fn distance(&self, other: &DecisionPoint) -> f64 {
        (&self.0 - &other.0).norm()
    }
}

impl Deref for DecisionPoint {
    type Target = DVector<f64>;

    fn deref(&self) -> &DVector<f64> {
        &self.0
    }
}

impl From<DVector<f64>> for DecisionPoint {
    fn from(v: DVector<f64>) -> Self {
        DecisionPoint(v)
    }
}

impl From<Vec<f64>> for DecisionPoint {
    fn from(v: Vec<f64>) -> Self {
        DecisionPoint(DVector::from_vec(v))
    }
}

impl From<DecisionPoint> for Vec<f64> {
    fn from(p: DecisionPoint) -> Self {
        p.0.iter().copied().collect()
    }
}

/// Axis-aligned compact box `{x : lower <= x <= upper}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoxPolytope {
    lower: Vec<f64>,
    upper: Vec<f64>,
}

impl BoxPolytope {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self, ConfigError> {
        if lower.len() != upper.len() {
            return Err(ConfigError::Dimension(format!(
                "box bounds have lengths {} and {}",
                lower.len(),
                upper.len()
            )));
        }
        for (i, (l, u)) in lower.iter().zip(&upper).enumerate() {
            if !l.is_finite() || !u.is_finite() || l > u {
                return Err(ConfigError::Invalid(format!(
                    "box coordinate {i} has bounds [{l}, {u}]"
                )));
            }
        }
        Ok(BoxPolytope { lower, upper })
    }

    /// The cube `[lo, hi]^n`.
    pub fn cube(n: usize, lo: f64, hi: f64) -> Result<Self, ConfigError> {
        BoxPolytope::new(vec![lo; n], vec![hi; n])
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn lower(&self) -> &[f64] {
        &self.lower
    }

    pub fn upper(&self) -> &[f64] {
        &self.upper
    }

    /// Largest coordinate-wise amount by which `x` leaves the box.
    pub fn violation(&self, x: &DVector<f64>) -> f64 {
        x.iter()
            .zip(self.lower.iter().zip(&self.upper))
            .map(|(v, (l, u))| (l - v).max(v - u).max(0.0))
            .fold(0.0, f64::max)
    }

    pub fn contains(&self, x: &DVector<f64>) -> bool {
        x.len() == self.dim() && self.violation(x) == 0.0
    }

    pub fn clamp(&self, z: &DVector<f64>) -> DVector<f64> {
        DVector::from_iterator(
            z.len(),
            z.iter()
                .zip(self.lower.iter().zip(&self.upper))
                .map(|(v, (l, u))| v.clamp(*l, *u)),
        )
    }

    /// Length of the box diagonal.
    pub fn diameter(&self) -> f64 {
        self.lower
            .iter()
            .zip(&self.upper)
            .map(|(l, u)| (u - l) * (u - l))
            .sum::<f64>()
            .sqrt()
    }
}

/// Precision variable identified with its pair of precision measures.
///
/// `gf` governs the accuracy of the objective and `gh` the accuracy of the
/// constraints; both are zero exactly when evaluations are exact.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PrecisionLevel {
    pub gf: f64,
    pub gh: f64,
}

impl PrecisionLevel {
    pub const EXACT: PrecisionLevel = PrecisionLevel { gf: 0.0, gh: 0.0 };

    pub fn new(gf: f64, gh: f64) -> Result<Self, ConfigError> {
        if !(gf.is_finite() && gf >= 0.0) {
            return Err(ConfigError::OutOfRange {
                key: "gf",
                value: gf,
                expected: "finite and >= 0",
            });
        }
        if !(gh.is_finite() && gh >= 0.0) {
            return Err(ConfigError::OutOfRange {
                key: "gh",
                value: gh,
                expected: "finite and >= 0",
            });
        }
        Ok(PrecisionLevel { gf, gh })
    }

    /// Overall precision measure `max(gf, gh)`.
    pub fn g(&self) -> f64 {
        crate::merit::precision_g(self)
    }

    pub fn is_exact(&self) -> bool {
        self.gf == 0.0 && self.gh == 0.0
    }

    /// Euclidean distance between two precision pairs.
    pub fn distance(&self, other: &PrecisionLevel) -> f64 {
        (self.gf - other.gf).hypot(self.gh - other.gh)
    }
}

/// Parameters of the outer algorithm and its restoration phase.
///
/// Field names serialize to the conventional symbols (`alpha_R`, `M`,
/// `beta_PDP`, `N_prec`, ...) so configuration files read like the
/// algorithm's parameter list.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AlgorithmParams {
    #[serde(rename = "alpha_R")]
    pub alpha_r: f64,
    pub alpha: f64,
    #[serde(rename = "M")]
    pub m: f64,
    pub sigma_min: f64,
    pub sigma_max: f64,
    pub mu_min: f64,
    pub mu_max: f64,
    pub beta_c: f64,
    #[serde(rename = "beta_PDP")]
    pub beta_pdp: f64,
    pub r: f64,
    pub r_feas: f64,
    pub eps_prec_bar: f64,
    #[serde(rename = "N_prec")]
    pub n_prec: u32,
    #[serde(rename = "N_acce")]
    pub n_acce: u32,
    pub theta_0: f64,
    pub mu_init: f64,
}

impl Default for AlgorithmParams {
    fn default() -> Self {
        AlgorithmParams {
            alpha_r: 1e-4,
            alpha: 1e-4,
            m: 100.0,
            sigma_min: 0.01,
            sigma_max: 1e4,
            mu_min: 1e-3,
            mu_max: 1e3,
            beta_c: 1.0,
            beta_pdp: 10.0,
            r: 0.5,
            r_feas: 0.1,
            eps_prec_bar: 0.0,
            n_prec: 3,
            n_acce: 0,
            theta_0: 0.9,
            mu_init: 1.0,
        }
    }
}

fn positive(key: &'static str, v: f64) -> Result<(), ConfigError> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(ConfigError::OutOfRange {
            key,
            value: v,
            expected: "finite and > 0",
        })
    }
}

impl AlgorithmParams {
    /// Checks every range constraint; the error names the offending key.
    pub fn validate(&self) -> Result<(), ConfigError> {
        positive("alpha_R", self.alpha_r)?;
        positive("alpha", self.alpha)?;
        if !(self.m.is_finite() && self.m >= 1.0) {
            return Err(ConfigError::OutOfRange {
                key: "M",
                value: self.m,
                expected: ">= 1",
            });
        }
        positive("sigma_min", self.sigma_min)?;
        positive("sigma_max", self.sigma_max)?;
        if self.sigma_max < self.sigma_min {
            return Err(ConfigError::OutOfRange {
                key: "sigma_max",
                value: self.sigma_max,
                expected: ">= sigma_min",
            });
        }
        positive("mu_min", self.mu_min)?;
        positive("mu_max", self.mu_max)?;
        if self.mu_max < self.mu_min {
            return Err(ConfigError::OutOfRange {
                key: "mu_max",
                value: self.mu_max,
                expected: ">= mu_min",
            });
        }
        positive("beta_c", self.beta_c)?;
        positive("beta_PDP", self.beta_pdp)?;
        if !(self.r > 0.0 && self.r < 1.0) {
            return Err(ConfigError::OutOfRange {
                key: "r",
                value: self.r,
                expected: "in (0, 1)",
            });
        }
        if !(self.r_feas > 0.0 && self.r_feas < self.r) {
            return Err(ConfigError::OutOfRange {
                key: "r_feas",
                value: self.r_feas,
                expected: "in (0, r)",
            });
        }
        if !(self.eps_prec_bar.is_finite() && self.eps_prec_bar >= 0.0) {
            return Err(ConfigError::OutOfRange {
                key: "eps_prec_bar",
                value: self.eps_prec_bar,
                expected: ">= 0",
            });
        }
        if !(self.theta_0 > 0.0 && self.theta_0 < 1.0) {
            return Err(ConfigError::OutOfRange {
                key: "theta_0",
                value: self.theta_0,
                expected: "in (0, 1)",
            });
        }
        if !(self.mu_init >= self.mu_min && self.mu_init <= self.mu_max) {
            return Err(ConfigError::OutOfRange {
                key: "mu_init",
                value: self.mu_init,
                expected: "in [mu_min, mu_max]",
            });
        }
        Ok(())
    }
}

/// Whether a problem constant is a proven bound or a sampled estimate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    Analytic,
    Estimated,
}

/// Lipschitz constants and bounds of the oracle over the domain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProblemConstants {
    pub l_f: f64,
    pub l_h: f64,
    pub l_c: f64,
    pub c_f: f64,
    pub c_h: f64,
    pub c_g: f64,
    pub provenance: Provenance,
}

impl ProblemConstants {
    pub fn validate(&self) -> Result<(), ConfigError> {
        for (key, v) in [
            ("L_f", self.l_f),
            ("L_h", self.l_h),
            ("L_c", self.l_c),
            ("C_f", self.c_f),
            ("C_h", self.c_h),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(ConfigError::OutOfRange {
                    key,
                    value: v,
                    expected: "finite and >= 0",
                });
            }
        }
        if !(self.c_g.is_finite() && self.c_g >= 1.0) {
            return Err(ConfigError::OutOfRange {
                key: "C_g",
                value: self.c_g,
                expected: ">= 1",
            });
        }
        Ok(())
    }
}

/// Penalty parameter together with its (nonincreasing) history.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PenaltyState {
    history: Vec<f64>,
}

impl PenaltyState {
    pub fn new(theta_0: f64) -> Result<Self, ConfigError> {
        if !(theta_0 > 0.0 && theta_0 < 1.0) {
            return Err(ConfigError::OutOfRange {
                key: "theta_0",
                value: theta_0,
                expected: "in (0, 1)",
            });
        }
        Ok(PenaltyState { history: vec![theta_0] })
    }

    pub fn theta(&self) -> f64 {
        *self.history.last().expect("history is never empty")
    }

    pub fn history(&self) -> &[f64] {
        &self.history
    }

    /// Appends a new value; refuses increases and values outside `(0, 1)`.
    pub fn push(&mut self, theta: f64) -> Result<(), ConfigError> {
        if !(theta > 0.0 && theta < 1.0) || theta > self.theta() {
            return Err(ConfigError::OutOfRange {
                key: "theta",
                value: theta,
                expected: "in (0, previous theta]",
            });
        }
        self.history.push(theta);
        Ok(())
    }
}
