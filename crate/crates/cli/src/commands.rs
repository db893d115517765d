use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, Context, Result};
use inexact_restoration::diagnostics::{audit, complexity_fit, AuditReport, CheckOutcome};
use inexact_restoration::{bira_run_with, make_problem, BiraOptions, RunReport, RunStatus, Tolerances, SUITE_IDS};
use rayon::prelude::*;
use serde::Serialize;

use crate::config::RunConfig;

pub const EXIT_OK: u8 = 0;
pub const EXIT_ERROR: u8 = 1;
pub const EXIT_RESTORATION_FAILURE: u8 = 2;
pub const EXIT_BUDGET: u8 = 3;
pub const EXIT_VIOLATIONS: u8 = 4;

pub const CSV_HEADER: &str = "eps_opt,f_evals,gradf_evals,h_evals,gradh_evals,iterations,status";

fn status_code(status: RunStatus) -> u8 {
    match status {
        RunStatus::Converged => EXIT_OK,
        RunStatus::RestorationFailure => EXIT_RESTORATION_FAILURE,
        RunStatus::BudgetExceeded => EXIT_BUDGET,
    }
}

fn status_name(status: RunStatus) -> &'static str {
    match status {
        RunStatus::Converged => "converged",
        RunStatus::RestorationFailure => "restoration_failure",
        RunStatus::BudgetExceeded => "budget_exceeded",
    }
}

fn solve(id: &str, cfg: &RunConfig, tolerances: Tolerances) -> Result<RunReport> {
    let problem =
        make_problem(id).ok_or_else(|| anyhow!("unknown problem `{id}` (known: {})", SUITE_IDS.join(", ")))?;
    let options = BiraOptions {
        kappas: cfg.kappas,
        ..BiraOptions::default()
    };
    bira_run_with(&problem, &cfg.params, tolerances, cfg.budget, &options).with_context(|| format!("solving {id}"))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text).with_context(|| format!("cannot write {}", path.display()))
}

fn pick_out(flag: Option<PathBuf>, cfg: &RunConfig, default: impl FnOnce() -> PathBuf) -> PathBuf {
    flag.or_else(|| cfg.out.clone()).unwrap_or_else(default)
}

fn pool(jobs: Option<usize>) -> Result<rayon::ThreadPool> {
    let mut b = rayon::ThreadPoolBuilder::new();
    if let Some(n) = jobs {
        b = b.num_threads(n);
    }
    b.build().context("cannot start worker threads")
}

pub fn summary_line(report: &RunReport) -> String {
    let l = &report.ledger;
    format!(
        "{}: {} after {} iterations, infeasibility {:.3e}, residual {}, evaluations f={} gradf={} h={} gradh={} total={}",
        report.problem,
        status_name(report.status),
        report.iterations.len(),
        report.final_h_norm,
        report.final_residual.map_or("n/a".to_string(), |r| format!("{r:.3e}")),
        l.f_evals,
        l.gradf_evals,
        l.h_evals,
        l.gradh_evals,
        l.total()
    )
}

pub fn cmd_run(config: &Path, out: Option<PathBuf>) -> Result<u8> {
    let cfg = RunConfig::load(config)?;
    let id = cfg.problem_id()?.to_string();
    let report = solve(&id, &cfg, cfg.tolerances)?;
    let path = pick_out(out, &cfg, || PathBuf::from(format!("{id}.trace.json")));
    write_json(&path, &report)?;
    println!("{}", summary_line(&report));
    println!("trace written to {}", path.display());
    Ok(status_code(report.status))
}

#[derive(Serialize)]
struct SuiteRow {
    problem: String,
    status: RunStatus,
    expected: RunStatus,
    iterations: usize,
    total_evals: u64,
    violations: usize,
    passed: bool,
}

fn expected_status(id: &str) -> RunStatus {
    if id == "p3" {
        RunStatus::RestorationFailure
    } else {
        RunStatus::Converged
    }
}

pub fn cmd_suite(config: Option<&Path>, out: Option<PathBuf>, jobs: Option<usize>) -> Result<u8> {
    let cfg = match config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    let runs: Vec<Result<(RunReport, AuditReport)>> = pool(jobs.or(cfg.jobs))?.install(|| {
        SUITE_IDS
            .par_iter()
            .map(|id| {
                let report = solve(id, &cfg, cfg.tolerances)?;
                let a = audit(&report);
                Ok((report, a))
            })
            .collect()
    });
    let mut rows = Vec::new();
    println!(
        "{:<8} {:<20} {:>6} {:>8} {:>10}  result",
        "problem", "status", "iters", "evals", "violations"
    );
    for run in runs {
        let (report, a) = run?;
        let expected = expected_status(&report.problem);
        let violations = a.violations().count();
        let passed = report.status == expected && violations == 0;
        println!(
            "{:<8} {:<20} {:>6} {:>8} {:>10}  {}",
            report.problem,
            status_name(report.status),
            report.iterations.len(),
            report.ledger.total(),
            violations,
            if passed { "pass" } else { "FAIL" }
        );
        for v in a.violations() {
            println!("    {} at {:?}: {:e} > {:e}", v.check, v.iteration, v.lhs, v.rhs);
        }
        rows.push(SuiteRow {
            problem: report.problem.clone(),
            status: report.status,
            expected,
            iterations: report.iterations.len(),
            total_evals: report.ledger.total(),
            violations,
            passed,
        });
    }
    if let Some(path) = out.or(cfg.out) {
        write_json(&path, &rows)?;
    }
    Ok(if rows.iter().all(|r| r.passed) {
        EXIT_OK
    } else {
        EXIT_VIOLATIONS
    })
}

pub fn format_audit(a: &AuditReport) -> String {
    let mut s = String::new();
    for c in &a.checks {
        let tag = match c.outcome {
            CheckOutcome::Pass => "ok",
            CheckOutcome::Fail => "VIOLATED",
            CheckOutcome::NotEvaluable => "not evaluable",
            CheckOutcome::Informational => "info",
        };
        let _ = write!(s, "{:<28} {:<14} {:>5} checked", c.name, tag, c.evaluated);
        if c.outcome == CheckOutcome::Informational {
            let _ = write!(s, ", {} exceed", c.violations.len());
        }
        if let Some(note) = &c.note {
            let _ = write!(s, " ({note})");
        }
        s.push('\n');
        if c.outcome == CheckOutcome::Fail {
            for v in &c.violations {
                let at = v.iteration.map_or("run".to_string(), |k| format!("k={k}"));
                let _ = writeln!(s, "    {at}: {:e} > {:e}", v.lhs, v.rhs);
            }
        }
    }
    s
}

pub fn cmd_audit(trace: &Path, out: Option<PathBuf>) -> Result<u8> {
    let text = fs::read_to_string(trace).with_context(|| format!("cannot read trace {}", trace.display()))?;
    let report: RunReport =
        serde_json::from_str(&text).with_context(|| format!("cannot parse trace {}", trace.display()))?;
    if report.trace_version != inexact_restoration::bira::TRACE_VERSION {
        return Err(anyhow!("unsupported trace_version {}", report.trace_version));
    }
    let a = audit(&report);
    print!("{}", format_audit(&a));
    if let Some(path) = out {
        write_json(&path, &a)?;
    }
    let n = a.violations().count();
    if n == 0 {
        println!("no violations");
        Ok(EXIT_OK)
    } else {
        println!("{n} violations");
        Ok(EXIT_VIOLATIONS)
    }
}

pub fn complexity_csv(rows: &[(f64, RunReport)]) -> String {
    let mut s = String::from(CSV_HEADER);
    s.push('\n');
    for (eps, r) in rows {
        let l = &r.ledger;
        let _ = writeln!(
            s,
            "{eps:e},{},{},{},{},{},{}",
            l.f_evals,
            l.gradf_evals,
            l.h_evals,
            l.gradh_evals,
            r.iterations.len(),
            status_name(r.status)
        );
    }
    s
}

pub fn cmd_complexity(config: &Path, out: Option<PathBuf>, jobs: Option<usize>) -> Result<u8> {
    let cfg = RunConfig::load(config)?;
    let id = cfg.problem_id()?.to_string();
    let runs: Vec<Result<(f64, RunReport)>> = pool(jobs.or(cfg.jobs))?.install(|| {
        cfg.eps_opt_grid
            .par_iter()
            .map(|&eps| {
                let tol = Tolerances::new(cfg.tolerances.eps_feas, cfg.tolerances.eps_prec, eps)?;
                Ok((eps, solve(&id, &cfg, tol)?))
            })
            .collect()
    });
    let rows = runs.into_iter().collect::<Result<Vec<_>>>()?;
    let path = pick_out(out, &cfg, || PathBuf::from(format!("{id}.complexity.csv")));
    fs::write(&path, complexity_csv(&rows)).with_context(|| format!("cannot write {}", path.display()))?;
    let points: Vec<(f64, f64)> = rows.iter().map(|(e, r)| (*e, r.ledger.total() as f64)).collect();
    let slope = complexity_fit(&points)?;
    println!("{id}: {} runs written to {}", rows.len(), path.display());
    println!("slope {slope:.4}");
    Ok(EXIT_OK)
}
