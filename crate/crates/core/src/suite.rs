//! The acceptance criteria as runnable checks, shared by the `suite` command
//! and the integration harness.

use serde::Serialize;

use crate::analysis::{
    barrier_demo_order4, expansion_check_y, expansion_check_z, global_convergence_study, local_truncation_study,
    stability_probe, zproxy_check, AnalysisError, Band, StudyReport,
};
use crate::model::{brownian_fzero, brownian_sine, ou_manufactured, polynomial_martingale, Problem};
use crate::numerics::marginal_mean_square;
use crate::psi::{default_bm, indicator, linear_b1, piecewise_constant_bm, three_piece_b2, two_piece_b1, PsiFunction, MOMENT_TOL};
use crate::smooth::SmoothFn;
use crate::solver::{Engine, Partition, SchemeSpec, SolverConfig};
use crate::tableau::{
    classify_order, crank_nicholson, explicit_euler, implicit_euler, named, order4_barrier_certificate, order_conditions,
    three_stage, two_stage_explicit, two_stage_implicit_o3, Tableau, TableauError, RESIDUAL_TOL,
};

pub const N_LADDER: [usize; 5] = [8, 16, 32, 64, 128];
pub const H_LADDER: [f64; 5] = [0.4, 0.2, 0.1, 0.05, 0.025];

/// Criterion ids and titles.
pub const CRITERIA: [(u8, &str); 9] = [
    (1, "tableau algebra"),
    (2, "global orders on brownian_sine"),
    (3, "local truncation exponents"),
    (4, "implicit order-3 barrier"),
    (5, "noncommuting weight machinery"),
    (6, "L2 stability"),
    (7, "expansion and Z-proxy suites"),
    (8, "order-4 barrier"),
    (9, "exactness floor"),
];

#[derive(Clone, Debug, Serialize)]
pub struct Criterion {
    pub id: u8,
    pub title: String,
    pub pass: bool,
    /// One line per individual check, each ending in `ok` or `FAIL`.
    pub details: Vec<String>,
    #[serde(skip)]
    pub reports: Vec<StudyReport>,
}

impl Criterion {
    fn new(id: u8) -> Self {
        let title = CRITERIA.iter().find(|c| c.0 == id).map_or("", |c| c.1).to_string();
        Criterion { id, title, pass: true, details: Vec::new(), reports: Vec::new() }
    }

    fn record(&mut self, ok: bool, line: String) {
        self.pass &= ok;
        self.details.push(format!("{line} {}", if ok { "ok" } else { "FAIL" }));
    }

    fn slope(&mut self, label: &str, rep: StudyReport, check: &str) {
        let c = rep.check(check).cloned();
        let (ok, s) = match &c {
            Some(c) => (c.pass, format!("{label}: {check} = {:.3} (band {})", c.slope(), c.band)),
            None => (false, format!("{label}: no check `{check}`")),
        };
        self.record(ok, s);
        self.reports.push(rep);
    }

    /// Informational line that does not affect the verdict.
    fn note(&mut self, line: String) {
        self.details.push(format!("{line} (info)"));
    }

    pub fn summary_line(&self) -> String {
        format!("criterion {}: {} ({})", self.id, if self.pass { "PASS" } else { "FAIL" }, self.title)
    }
}

fn tableau_err(e: TableauError) -> AnalysisError {
    AnalysisError::Invalid(e.to_string())
}

fn three_stage_default() -> Result<Tableau<f64>, AnalysisError> {
    three_stage(0.5, 1.0, 0.0).map_err(tableau_err)
}

/// Explicit Euler with the free `β1` set to 0, the classical `Z = E[Y ΔW] / h`.
/// The stored `β1 = 1` cancels the leading Z defect on constant-coefficient
/// models, so its one-step Z exponent exceeds the generic order.
fn classical_euler() -> Tableau<f64> {
    let mut t = explicit_euler();
    t.beta[0] = 0.0;
    t
}

/// Evaluation point for the pointwise expansion checks: the forward start `x0 = 0`.
pub const EXPANSION_POINT: (f64, f64) = (0.2, 0.0);

fn ou() -> Result<Problem<f64>, AnalysisError> {
    Ok(ou_manufactured(1.0, 0.5, 0.5, 1.0, 1.0)?)
}

pub fn run(id: u8, config: &SolverConfig) -> Result<Criterion, AnalysisError> {
    match id {
        1 => tableau_algebra(),
        2 => global_orders(config),
        3 => local_exponents(config),
        4 => implicit_barrier(config),
        5 => noncommuting(config),
        6 => stability(config),
        7 => expansions(),
        8 => order4_barrier(config),
        9 => exactness(config),
        _ => Err(AnalysisError::Invalid(format!("no criterion {id}"))),
    }
}

pub fn run_all(config: &SolverConfig) -> Vec<Result<Criterion, AnalysisError>> {
    CRITERIA.iter().map(|&(id, _)| run(id, config)).collect()
}

fn tableau_algebra() -> Result<Criterion, AnalysisError> {
    let mut out = Criterion::new(1);
    let cases: Vec<(&str, Tableau<f64>, u8, bool)> = vec![
        ("explicit_euler", explicit_euler(), 1, false),
        ("implicit_euler", implicit_euler(), 1, false),
        ("crank_nicholson", crank_nicholson(), 2, false),
        ("two_stage_explicit", two_stage_explicit(0.5, 0.5).map_err(tableau_err)?, 2, false),
        ("two_stage_implicit_o3", two_stage_implicit_o3(2.0 / 3.0).map_err(tableau_err)?, 3, true),
        ("three_stage", three_stage_default()?, 3, false),
    ];
    for (name, t, order, fz_zero) in &cases {
        let rep = order_conditions(t, *order, *fz_zero).map_err(tableau_err)?;
        let r = rep.max_abs_residual();
        out.record(rep.satisfied && r <= RESIDUAL_TOL, format!("{name}: order-{order} residual {r:.2e}"));
        let got = classify_order(t, *fz_zero);
        out.record(got == *order, format!("{name}: classify_order(fz_zero={fz_zero}) = {got}"));
    }
    let got = classify_order(&cases[4].1, false);
    out.record(got == 2, format!("two_stage_implicit_o3: classify_order(fz_zero=false) = {got}"));
    Ok(out)
}

fn global_orders(config: &SolverConfig) -> Result<Criterion, AnalysisError> {
    let mut out = Criterion::new(2);
    let problem = brownian_sine(1.0);
    let cases = [
        ("explicit_euler", explicit_euler(), 1usize, 0.25),
        ("crank_nicholson", crank_nicholson(), 2, 0.3),
        ("three_stage", three_stage_default()?, 3, 0.35),
    ];
    for (name, t, m, tol) in cases {
        let scheme = SchemeSpec::for_order(t, m);
        let rep = global_convergence_study(&scheme, &problem, config, &N_LADDER, Band::around(m as f64, tol), false)?;
        out.slope(name, rep, "slope_Y+Z");
    }
    Ok(out)
}

fn local_exponents(config: &SolverConfig) -> Result<Criterion, AnalysisError> {
    let mut out = Criterion::new(3);
    let problem = brownian_sine(1.0);
    let cases = [("explicit_euler (beta1 = 0)", classical_euler(), 1usize), ("crank_nicholson", crank_nicholson(), 2), ("three_stage", three_stage_default()?, 3)];
    for (name, t, m) in cases {
        let scheme = SchemeSpec::for_order(t, m);
        let (by, bz) = (Band::around(m as f64 + 1.0, 0.3), Band::around(m as f64, 0.3));
        let rep = local_truncation_study(&scheme, &problem, config, None, &H_LADDER, by, bz)?;
        out.slope(name, rep.clone(), "slope_Y");
        out.slope(name, rep, "slope_Z");
    }
    let free = Band { lo: None, hi: None };
    let rep = local_truncation_study(&SchemeSpec::for_order(explicit_euler(), 1), &problem, config, None, &H_LADDER, free, free)?;
    out.note(format!("explicit_euler (beta1 = 1): slope_Z = {:.3}", rep.check("slope_Z").map_or(f64::NAN, |c| c.slope())));
    Ok(out)
}

fn implicit_barrier(config: &SolverConfig) -> Result<Criterion, AnalysisError> {
    let mut out = Criterion::new(4);
    let scheme = SchemeSpec::for_order(two_stage_implicit_o3(2.0 / 3.0).map_err(tableau_err)?, 3);
    let rep = global_convergence_study(&scheme, &brownian_fzero(1.0), config, &N_LADDER, Band::around(3.0, 0.35), false)?;
    out.slope("brownian_fzero", rep, "slope_Y+Z");
    let rep = global_convergence_study(&scheme, &brownian_sine(1.0), config, &N_LADDER, Band::at_most(2.5), false)?;
    out.slope("brownian_sine", rep, "slope_Y+Z");
    Ok(out)
}

fn noncommuting(config: &SolverConfig) -> Result<Criterion, AnalysisError> {
    let mut out = Criterion::new(5);
    let scheme = SchemeSpec::with_classes(three_stage_default()?, 2, 1);
    let swapped = scheme.with_indicator_weights();
    let problem = ou()?;
    let free = Band { lo: None, hi: None };
    let rep = local_truncation_study(&scheme, &problem, config, None, &H_LADDER, free, Band::at_least(2.6))?;
    out.slope("OU, psi in B2, phi in B1", rep, "slope_Z");
    let rep = local_truncation_study(&swapped, &problem, config, None, &H_LADDER, free, Band::at_most(1.5))?;
    out.slope("OU, indicator weights", rep, "slope_Z");

    let bm = brownian_sine(1.0);
    let part = Partition::uniform(16, 1.0)?;
    let a = Engine::new(&scheme, &bm, config)?.solve(&part)?;
    let b = Engine::new(&swapped, &bm, config)?.solve(&part)?;
    let diff = a
        .y
        .iter()
        .zip(&b.y)
        .chain(a.z.iter().zip(&b.z))
        .flat_map(|(p, q)| p.values.iter().zip(&q.values).map(|(u, v)| (u - v).abs()))
        .fold(0.0, f64::max);
    out.record(diff <= 1e-12, format!("brownian_sine: weight swap changes outputs by {diff:.2e} (max 1e-12)"));
    Ok(out)
}

fn stability(config: &SolverConfig) -> Result<Criterion, AnalysisError> {
    let mut out = Criterion::new(6);
    let problem = brownian_sine(1.0);
    let ladder = [8, 16, 32, 64];
    for (name, scheme) in [
        ("explicit_euler", SchemeSpec::for_order(explicit_euler(), 1)),
        ("three_stage", SchemeSpec::for_order(three_stage_default()?, 3)),
    ] {
        let rep = stability_probe(&scheme, &problem, config, 1e-3, &ladder, 3.0)?;
        let spread = rep.extra["spread"].as_f64().unwrap_or(f64::NAN);
        out.record(rep.pass, format!("{name}: ratio spread {spread:.3} (max 3)"));
        out.reports.push(rep);
        let rep = stability_probe(&scheme, &problem, config, 0.0, &ladder, 3.0)?;
        let lhs = rep.rows.iter().map(|r| r.err_y).fold(0.0, f64::max);
        out.record(rep.pass, format!("{name}: epsilon = 0 gives LHS {lhs:e}"));
        out.reports.push(rep);
    }
    Ok(out)
}

fn expansions() -> Result<Criterion, AnalysisError> {
    let mut out = Criterion::new(7);
    let problem = ou()?;
    let bm = brownian_sine(1.0);
    let v = SmoothFn::sin(1.0, 0.0, 1.0, 1.0, 0.0);
    let (t, x) = EXPANSION_POINT;
    for m in 0..=2 {
        let rep = expansion_check_y(&problem, &v, m, t, x, &H_LADDER, Band::around(m as f64 + 1.0, 0.3))?;
        out.slope(&format!("expansion_y OU m={m}"), rep, "slope");
    }
    let z_cases = [
        ("BM indicator m=1", &bm, indicator(), 1, Band::at_least(1.7)),
        ("OU linear B1 m=1", &problem, linear_b1(), 1, Band::at_least(1.7)),
        ("OU B2 m=2", &problem, default_bm(2), 2, Band::at_least(2.7)),
        ("OU indicator m=1", &problem, indicator(), 1, Band::at_most(1.5)),
    ];
    for (label, p, psi, m, band) in z_cases {
        let rep = expansion_check_z(p, &v, &psi, m, t, x, &H_LADDER, band)?;
        out.slope(&format!("expansion_z {label}"), rep, "slope");
    }
    for (label, psi, m) in [("indicator m=0", indicator(), 0usize), ("linear B1 m=1", linear_b1(), 1)] {
        let rep = zproxy_check(&problem, &psi, m, t, x, &H_LADDER, Band::at_least(m as f64 + 0.7))?;
        out.slope(&format!("zproxy OU {label}"), rep, "slope");
    }
    Ok(out)
}

fn order4_barrier(config: &SolverConfig) -> Result<Criterion, AnalysisError> {
    let mut out = Criterion::new(8);
    let cert = order4_barrier_certificate();
    let last = cert.steps.last().map_or("", String::as_str);
    out.record(last.ends_with("c2 = 0"), format!("derivation ends in `{}`", last.rsplit(", ").next().unwrap_or("")));
    out.record(cert.min_residual > 0.0, format!("combined residual over {} samples stays above {:.3e}", cert.sample_count, cert.min_residual));
    for s in &cert.spot_checks {
        let ok = (s.alpha32 - s.three_stage_a32).abs() <= 1e-12 && (s.combined_residual - s.c2).abs() <= 1e-12;
        out.record(
            ok,
            format!(
                "(c2, c3) = ({:.4}, {:.4}): alpha32 {:.6} vs three-stage a32 {:.6}, residual {:.6} = c2",
                s.c2, s.c3, s.alpha32, s.three_stage_a32, s.combined_residual
            ),
        );
    }
    let rep = barrier_demo_order4(&brownian_sine(1.0), config, &N_LADDER, 3.4)?;
    out.slope("best-effort four-stage on brownian_sine", rep, "slope_Y+Z");
    Ok(out)
}

/// Exactness tolerance for polynomial terminals with `f ≡ 0`.
pub const EXACT_TOL: f64 = 1e-11;

fn exactness(config: &SolverConfig) -> Result<Criterion, AnalysisError> {
    let mut out = Criterion::new(9);
    let specs = [
        "explicit_euler",
        "implicit_euler",
        "crank_nicholson",
        "two_stage_explicit:c2=1/2,beta1=1/2",
        "two_stage_explicit:c2=1,beta1=1",
        "two_stage_implicit_o3:c2=2/3",
        "three_stage:c2=1/2,c3=1",
        "three_stage:c2=1/3,c3=2/3",
        "four_stage_three_eighths",
    ];
    let terminals: [&[f64]; 3] = [&[0.5, -1.0, 0.25, 0.2], &[0.0, 0.0, 0.0, 1.0], &[1.0, 2.0]];
    let ns = [1, 2, 3, 5, 8, 16, 32, 64, 128];
    for spec in specs {
        let t: Tableau<f64> = named(spec).map_err(tableau_err)?;
        let scheme = SchemeSpec::for_order(t, 3);
        let mut worst = 0.0f64;
        for g in terminals {
            let problem = polynomial_martingale(g, 0.3, 1.0, 1.0);
            let engine = Engine::new(&scheme, &problem, config)?;
            for n in ns {
                let part = Partition::uniform(n, 1.0)?;
                let traj = engine.solve(&part)?;
                for (i, &ti) in part.times.iter().enumerate() {
                    let ry = |x: f64| problem.exact_yz(ti, x).map_or(f64::NAN, |v| v.0);
                    let rz = |x: f64| problem.exact_yz(ti, x).map_or(f64::NAN, |v| v.1);
                    worst = worst.max(marginal_mean_square(&problem.forward, &traj.y[i], ry, &engine.quad).sqrt());
                    if i < n {
                        worst = worst.max(marginal_mean_square(&problem.forward, &traj.z[i], rz, &engine.quad).sqrt());
                    }
                }
            }
        }
        out.record(worst <= EXACT_TOL, format!("{spec}: worst RMS error {worst:.2e} (max {EXACT_TOL:e})"));
    }

    let mut weights: Vec<(String, PsiFunction<f64>)> = vec![("indicator".into(), indicator()), ("linear_b1".into(), linear_b1())];
    let perr = |e: crate::psi::PsiError| AnalysisError::Invalid(e.to_string());
    for c in [0.25, 0.5, 0.8] {
        weights.push((format!("two_piece_b1({c})"), two_piece_b1(c).map_err(perr)?));
    }
    for (c, cp) in [(0.25, 0.75), (0.5, 0.2), (0.9, 0.1)] {
        weights.push((format!("three_piece_b2({c}, {cp})"), three_piece_b2(c, cp).map_err(perr)?));
    }
    weights.push(("piecewise_constant_bm(3, [0.1, 0.5, 0.7])".into(), piecewise_constant_bm(3, &[0.1, 0.5, 0.7]).map_err(perr)?));
    for m in 0..=4 {
        weights.push((format!("default_bm({m})"), default_bm(m)));
    }
    for (name, psi) in &weights {
        let r = psi.moment_residuals(psi.claimed_m).iter().map(|x| x.abs()).fold(0.0, f64::max);
        out.record(r <= MOMENT_TOL, format!("{name}: B^{} moment residual {r:.2e}", psi.claimed_m));
    }
    Ok(out)
}
