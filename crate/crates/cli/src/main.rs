//! `bsderk`: batch driver for order checks and convergence studies.
//!
//! Exit codes: 0 pass, 1 a study missed its tolerance, 2 configuration error,
//! 3 numerical failure.

mod config;

use std::path::Path;
use std::process::ExitCode;

use bsderk::analysis::{
    barrier_demo_order4, expansion_check_y, expansion_check_z, global_convergence_study, local_truncation_study,
    stability_probe, zproxy_check,
};
use bsderk::psi::by_name as weight_by_name;
use bsderk::smooth::SmoothFn;
use bsderk::suite::{self, CRITERIA};
use bsderk::tableau::{classify_order, order_conditions};
use bsderk::{AnalysisError, Band, SolverConfig, StudyReport};
use clap::{Parser, Subcommand};
use rayon::prelude::*;
use serde_json::json;

use config::{standard_name, Overrides, RunConfig, Which, DEFAULT_N, STABILITY_N};

#[derive(Debug)]
pub enum CliError {
    Config(String),
    Numeric(String),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Numeric(_) => 3,
        }
    }
}

impl From<AnalysisError> for CliError {
    fn from(e: AnalysisError) -> Self {
        if e.is_config() {
            CliError::Config(e.to_string())
        } else {
            CliError::Numeric(e.to_string())
        }
    }
}

#[derive(Parser)]
#[command(name = "bsderk", version, about = "Order checks and convergence studies for BSDE Runge-Kutta schemes")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Evaluate the order-condition system of a tableau.
    OrderCheck(Overrides),
    /// One-step error exponents over an h ladder.
    LocalTrunc(Overrides),
    /// Global error slopes over uniform partitions.
    Converge(Overrides),
    /// Perturbation ratio spread across partitions.
    Stability(Overrides),
    /// Remainder slopes of the weak Taylor expansions.
    Expansion(Overrides),
    /// Z-proxy approximation slopes.
    Zproxy(Overrides),
    /// Order-4 barrier certificate and best-effort four-stage scheme.
    Barrier(Overrides),
    /// Every acceptance criterion.
    Suite(Overrides),
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let res = init_threads().and_then(|_| match &cli.command {
        Command::OrderCheck(o) => order_check(o),
        Command::LocalTrunc(o) => study("local-trunc", o, local_trunc),
        Command::Converge(o) => study("converge", o, converge),
        Command::Stability(o) => study("stability", o, stability),
        Command::Expansion(o) => study("expansion", o, expansion),
        Command::Zproxy(o) => study("zproxy", o, zproxy),
        Command::Barrier(o) => study("barrier", o, barrier),
        Command::Suite(o) => run_suite(o),
    });
    match res {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            match &e {
                CliError::Config(m) => eprintln!("config error: {m}"),
                CliError::Numeric(m) => eprintln!("numeric error: {m}"),
            }
            ExitCode::from(e.code())
        }
    }
}

fn init_threads() -> Result<(), CliError> {
    let Ok(v) = std::env::var("BSDERK_THREADS") else { return Ok(()) };
    let n: usize = v.trim().parse().ok().filter(|&n| n > 0).ok_or_else(|| CliError::Config(format!("BSDERK_THREADS must be a positive integer, got `{v}`")))?;
    rayon::ThreadPoolBuilder::new().num_threads(n).build_global().map_err(|e| CliError::Config(e.to_string()))
}

fn write(path: &Path, text: &str) -> Result<(), CliError> {
    std::fs::write(path, text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
}

/// Writes the JSON (stdout if no paths are set) and CSV outputs.
fn emit(cfg: &RunConfig, json_text: &str, csv: Option<&str>) -> Result<(), CliError> {
    match &cfg.out_json {
        Some(p) => write(p, json_text)?,
        None if cfg.out_csv.is_none() => println!("{}", json_text.trim_end()),
        None => {}
    }
    if let (Some(p), Some(text)) = (&cfg.out_csv, csv) {
        write(p, text)?;
    }
    Ok(())
}

fn order_check(o: &Overrides) -> Result<bool, CliError> {
    let mut cfg = RunConfig::from_overrides("order-check", o)?;
    let t = cfg.tableau()?;
    let order = cfg.order.ok_or_else(|| CliError::Config("order-check needs --order".into()))?;
    let fz_zero = *cfg.fz.get_or_insert(config::Fz::Nonzero) == config::Fz::Zero;
    let rep = order_conditions(&t, order, fz_zero).map_err(|e| CliError::Config(e.to_string()))?;
    let classified = classify_order(&t, fz_zero);
    for c in rep.failing() {
        eprintln!("failing: {} (residual {:.3e})", c.name, c.residual);
    }
    eprintln!("order {order} {}; classified order {classified}", if rep.satisfied { "satisfied" } else { "not satisfied" });
    let out = json!({ "config": cfg.echo(), "report": rep, "classified_order": classified });
    emit(&cfg, &(serde_json::to_string_pretty(&out).expect("report serializes") + "\n"), None)?;
    Ok(rep.satisfied)
}

fn study(command: &str, o: &Overrides, f: fn(&mut RunConfig) -> Result<StudyReport, CliError>) -> Result<bool, CliError> {
    let mut cfg = RunConfig::from_overrides(command, o)?;
    let mut rep = f(&mut cfg)?;
    rep.config = cfg.echo();
    for c in &rep.checks {
        eprintln!("{}: {:.3} (band {}) {}", c.name, c.slope(), c.band, if c.pass { "ok" } else { "FAIL" });
    }
    eprintln!("{}: {}", rep.kind, if rep.pass { "pass" } else { "fail" });
    emit(&cfg, &(rep.to_json() + "\n"), Some(&rep.to_csv()))?;
    Ok(rep.pass)
}

fn local_trunc(cfg: &mut RunConfig) -> Result<StudyReport, CliError> {
    let problem = cfg.problem("brownian_sine")?;
    let (scheme, order) = cfg.scheme(problem.driver.fz_zero)?;
    let (h, tol, m) = (cfg.h_ladder(), cfg.tol(), order as f64);
    Ok(local_truncation_study(&scheme, &problem, &cfg.solver, cfg.anchor, &h, Band::around(m + 1.0, tol), Band::around(m, tol))?)
}

fn converge(cfg: &mut RunConfig) -> Result<StudyReport, CliError> {
    let problem = cfg.problem("brownian_sine")?;
    let (scheme, order) = cfg.scheme(problem.driver.fz_zero)?;
    let (n, tol) = (cfg.n_ladder(&DEFAULT_N), cfg.tol());
    let band = cfg.band(Band::around(order as f64, tol));
    Ok(global_convergence_study(&scheme, &problem, &cfg.solver, &n, band, true)?)
}

fn stability(cfg: &mut RunConfig) -> Result<StudyReport, CliError> {
    let problem = cfg.problem("brownian_sine")?;
    let (scheme, _) = cfg.scheme(problem.driver.fz_zero)?;
    let n = cfg.n_ladder(&STABILITY_N);
    let eps = *cfg.epsilon.get_or_insert(1e-3);
    let spread = *cfg.max_spread.get_or_insert(3.0);
    Ok(stability_probe(&scheme, &problem, &cfg.solver, eps, &n, spread)?)
}

fn test_function(cfg: &mut RunConfig, problem: &bsderk::Problem64) -> Result<SmoothFn<f64>, CliError> {
    match cfg.test_fn.get_or_insert_with(|| "sin".into()).as_str() {
        "sin" => Ok(SmoothFn::sin(1.0, 0.0, 1.0, 1.0, 0.0)),
        "exact" => problem
            .exact
            .as_ref()
            .map(|e| e.u.clone())
            .ok_or_else(|| CliError::Config(format!("problem `{}` has no exact solution", problem.name))),
        other => Err(CliError::Config(format!("unknown test function `{other}` (sin, exact)"))),
    }
}

fn point(cfg: &mut RunConfig) -> (usize, f64, f64) {
    let (t0, x0) = suite::EXPANSION_POINT;
    (*cfg.m.get_or_insert(1), *cfg.t.get_or_insert(t0), *cfg.x.get_or_insert(x0))
}

fn weight(cfg: &mut RunConfig, m: usize) -> Result<bsderk::Psi64, CliError> {
    let name = cfg.psi.get_or_insert_with(|| standard_name(m)).clone();
    weight_by_name(&name).map_err(|e| CliError::Config(e.to_string()))
}

fn expansion(cfg: &mut RunConfig) -> Result<StudyReport, CliError> {
    let problem = cfg.problem("ou_manufactured")?;
    let v = test_function(cfg, &problem)?;
    let (m, t, x) = point(cfg);
    let (h, tol) = (cfg.h_ladder(), cfg.tol());
    let target = m as f64 + 1.0;
    match *cfg.which.get_or_insert(Which::Y) {
        Which::Y => Ok(expansion_check_y(&problem, &v, m, t, x, &h, cfg.band(Band::around(target, tol)))?),
        Which::Z => {
            let psi = weight(cfg, m)?;
            Ok(expansion_check_z(&problem, &v, &psi, m, t, x, &h, cfg.band(Band::at_least(target - tol)))?)
        }
    }
}

fn zproxy(cfg: &mut RunConfig) -> Result<StudyReport, CliError> {
    let problem = cfg.problem("ou_manufactured")?;
    let (m, t, x) = point(cfg);
    let psi = weight(cfg, m)?;
    let (h, tol) = (cfg.h_ladder(), cfg.tol());
    Ok(zproxy_check(&problem, &psi, m, t, x, &h, cfg.band(Band::at_least(m as f64 + 1.0 - tol)))?)
}

fn barrier(cfg: &mut RunConfig) -> Result<StudyReport, CliError> {
    let problem = cfg.problem("brownian_sine")?;
    let n = cfg.n_ladder(&DEFAULT_N);
    let max = *cfg.max_slope.get_or_insert(3.4);
    Ok(barrier_demo_order4(&problem, &cfg.solver, &n, max)?)
}

fn run_suite(o: &Overrides) -> Result<bool, CliError> {
    let cfg = RunConfig::from_overrides("suite", o)?;
    let solver: &SolverConfig = &cfg.solver;
    let results: Vec<_> = CRITERIA.par_iter().map(|&(id, _)| suite::run(id, solver)).collect();
    let mut all_pass = true;
    let mut error: Option<CliError> = None;
    let mut summary = Vec::new();
    for (&(id, title), res) in CRITERIA.iter().zip(results) {
        match res {
            Ok(c) => {
                println!("{}", c.summary_line());
                for d in &c.details {
                    println!("    {d}");
                }
                all_pass &= c.pass;
                summary.push(serde_json::to_value(&c).expect("criterion serializes"));
            }
            Err(e) => {
                println!("criterion {id}: FAIL ({title}) error: {e}");
                all_pass = false;
                summary.push(json!({ "id": id, "title": title, "pass": false, "error": e.to_string() }));
                error.get_or_insert(e.into());
            }
        }
    }
    if let Some(p) = &cfg.out_json {
        let out = json!({ "config": cfg.echo(), "criteria": summary, "pass": all_pass });
        write(p, &(serde_json::to_string_pretty(&out).expect("summary serializes") + "\n"))?;
    }
    match error {
        Some(e) => Err(e),
        None => Ok(all_pass),
    }
}
