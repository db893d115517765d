//! Flat JSON run configuration: algorithm parameters under their usual
//! names, plus problem, tolerances, budget and output settings.

use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use inexact_restoration::{AlgorithmParams, Kappas, Tolerances};
use serde::Deserialize;
use serde_json::{Map, Value};

pub const DEFAULT_EPS_OPT_GRID: [f64; 5] = [1e-1, 3e-2, 1e-2, 3e-3, 1e-3];

/// Keys handled here; everything else must be an algorithm parameter.
#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RunKeys {
    problem: Option<String>,
    #[serde(default = "default_eps")]
    eps_feas: f64,
    #[serde(default = "default_eps")]
    eps_prec: f64,
    #[serde(default = "default_eps_opt")]
    eps_opt: f64,
    #[serde(default = "default_budget")]
    budget: usize,
    out: Option<PathBuf>,
    jobs: Option<usize>,
    eps_opt_grid: Option<Vec<f64>>,
    #[serde(rename = "kappa_R")]
    kappa_r: Option<f64>,
    #[serde(rename = "kappa_T")]
    kappa_t: Option<f64>,
    kappa: Option<f64>,
    kappa_phi: Option<f64>,
}

const RUN_KEYS: [&str; 12] = [
    "problem",
    "eps_feas",
    "eps_prec",
    "eps_opt",
    "budget",
    "out",
    "jobs",
    "eps_opt_grid",
    "kappa_R",
    "kappa_T",
    "kappa",
    "kappa_phi",
];

fn default_eps() -> f64 {
    1e-6
}

fn default_eps_opt() -> f64 {
    1e-4
}

fn default_budget() -> usize {
    500
}

#[derive(Debug, Clone)]
pub struct RunConfig {
    pub problem: Option<String>,
    pub params: AlgorithmParams,
    pub kappas: Kappas,
    pub tolerances: Tolerances,
    pub budget: usize,
    pub out: Option<PathBuf>,
    pub jobs: Option<usize>,
    pub eps_opt_grid: Vec<f64>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            problem: None,
            params: AlgorithmParams::default(),
            kappas: Kappas::default(),
            tolerances: Tolerances::new(default_eps(), default_eps(), default_eps_opt()).expect("valid defaults"),
            budget: default_budget(),
            out: None,
            jobs: None,
            eps_opt_grid: DEFAULT_EPS_OPT_GRID.to_vec(),
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("cannot read config {}", path.display()))?;
        Self::parse(&text).with_context(|| format!("invalid config {}", path.display()))
    }

    pub fn parse(text: &str) -> Result<Self> {
        let value: Value = serde_json::from_str(text)?;
        let Value::Object(mut all) = value else {
            bail!("config must be a JSON object");
        };
        let mut run = Map::new();
        for key in RUN_KEYS {
            if let Some(v) = all.remove(key) {
                run.insert(key.to_string(), v);
            }
        }
        let keys: RunKeys = serde_json::from_value(Value::Object(run))?;
        let params: AlgorithmParams = serde_json::from_value(Value::Object(all))?;
        params.validate()?;

        let defaults = Kappas::default();
        let kappas = Kappas {
            kappa_r: keys.kappa_r.unwrap_or(defaults.kappa_r),
            kappa_t: keys.kappa_t.unwrap_or(defaults.kappa_t),
            kappa: keys.kappa.unwrap_or(defaults.kappa),
            kappa_phi: keys.kappa_phi.unwrap_or(defaults.kappa_phi),
        };
        kappas.validate()?;
        let tolerances = Tolerances::new(keys.eps_feas, keys.eps_prec, keys.eps_opt)?;
        if keys.budget == 0 {
            bail!("parameter `budget` = 0 is out of range: >= 1");
        }
        if keys.jobs == Some(0) {
            bail!("parameter `jobs` = 0 is out of range: >= 1");
        }
        let eps_opt_grid = keys.eps_opt_grid.unwrap_or_else(|| DEFAULT_EPS_OPT_GRID.to_vec());
        if let Some(bad) = eps_opt_grid.iter().find(|e| !(e.is_finite() && **e > 0.0)) {
            bail!("parameter `eps_opt_grid` entry {bad} is out of range: > 0");
        }
        Ok(RunConfig {
            problem: keys.problem,
            params,
            kappas,
            tolerances,
            budget: keys.budget,
            out: keys.out,
            jobs: keys.jobs,
            eps_opt_grid,
        })
    }

    pub fn problem_id(&self) -> Result<&str> {
        self.problem.as_deref().ok_or_else(|| anyhow!("missing key `problem`"))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flat_keys_reach_the_parameters() {
        let c =
            RunConfig::parse(r#"{"problem": "p2", "r": 0.25, "M": 50, "alpha_R": 0.001, "eps_opt": 1e-3}"#).unwrap();
        assert_eq!(c.problem_id().unwrap(), "p2");
        assert_eq!(c.params.r, 0.25);
        assert_eq!(c.params.m, 50.0);
        assert_eq!(c.params.alpha_r, 0.001);
        assert_eq!(c.tolerances.eps_opt, 1e-3);
        assert_eq!(c.budget, 500);
    }

    #[test]
    fn unknown_keys_are_named() {
        let err = RunConfig::parse(r#"{"problem": "p1", "rr": 0.5}"#).unwrap_err();
        assert!(format!("{err:#}").contains("rr"), "{err:#}");
    }

    #[test]
    fn out_of_range_values_are_named() {
        let err = RunConfig::parse(r#"{"r": 1.5}"#).unwrap_err();
        assert!(format!("{err:#}").contains("`r` = 1.5"), "{err:#}");
        let err = RunConfig::parse(r#"{"kappa_T": -1}"#).unwrap_err();
        assert!(format!("{err:#}").contains("kappa_T"), "{err:#}");
        assert!(RunConfig::parse(r#"{"budget": 0}"#).is_err());
        assert!(RunConfig::parse(r#"{"eps_opt_grid": [0.1, 0]}"#).is_err());
        assert!(RunConfig::parse("[1]").is_err());
    }

    #[test]
    fn empty_object_is_all_defaults() {
        let c = RunConfig::parse("{}").unwrap();
        assert!(c.problem.is_none());
        assert_eq!(c.params, AlgorithmParams::default());
        assert_eq!(c.eps_opt_grid, DEFAULT_EPS_OPT_GRID.to_vec());
    }
}
