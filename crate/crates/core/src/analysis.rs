//! Convergence, stability and expansion studies with slope fits.

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use thiserror::Error;

use crate::hcoef::{endpoint_projection, HcoefError};
use crate::model::{ModelError, Problem};
use crate::numerics::{gaussian_expectation, marginal_mean_square, GridFunction, QuadratureRule};
use crate::psi::PsiFunction;
use crate::scalar::Real;
use crate::smooth::SmoothFn;
use crate::solver::{Engine, Partition, Perturbation, SchemeSpec, SolverConfig, SolverError};
use crate::tableau::{four_stage_three_eighths, order4_barrier_certificate};

/// Errors below this are treated as quadrature/interpolation noise.
pub const NOISE_FLOOR: f64 = 1e-11;
/// Rows within 100x of the noise floor are excluded from fits.
pub const FIT_FLOOR: f64 = 100.0 * NOISE_FLOOR;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AnalysisError {
    #[error("fit needs at least 3 rows above {floor:e}, got {usable}")]
    TooFewRows { usable: usize, floor: f64 },
    #[error("invalid study parameters: {0}")]
    Invalid(String),
    #[error(transparent)]
    Solver(#[from] SolverError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Hcoef(#[from] HcoefError),
}

impl AnalysisError {
    /// Bad inputs as opposed to failures during the computation.
    pub fn is_config(&self) -> bool {
        match self {
            AnalysisError::Invalid(_) | AnalysisError::Model(_) | AnalysisError::Hcoef(_) => true,
            AnalysisError::Solver(e) => e.is_config(),
            AnalysisError::TooFewRows { .. } => false,
        }
    }
}

/// Least-squares slope of `log err` against `log h`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Fit {
    pub slope: f64,
    /// Root-mean-square residual of the log–log fit.
    pub residual: f64,
    /// `log(e_k / e_{k+1}) / log(h_k / h_{k+1})` for consecutive rows (`log2` of
    /// the error ratio on halving ladders).
    pub ratios: Vec<f64>,
    pub used: usize,
}

pub fn fit_order(points: &[(f64, f64)]) -> Result<Fit, AnalysisError> {
    fit_order_above(points, FIT_FLOOR)
}

pub fn fit_order_above(points: &[(f64, f64)], floor: f64) -> Result<Fit, AnalysisError> {
    let usable: Vec<(f64, f64)> = points.iter().copied().filter(|&(h, e)| h > 0.0 && e.is_finite() && e >= floor).collect();
    if usable.len() < 3 {
        return Err(AnalysisError::TooFewRows { usable: usable.len(), floor });
    }
    let n = usable.len() as f64;
    let (xs, ys): (Vec<f64>, Vec<f64>) = usable.iter().map(|&(h, e)| (h.ln(), e.ln())).unzip();
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    let residual = (xs.iter().zip(&ys).map(|(x, y)| (y - my - slope * (x - mx)).powi(2)).sum::<f64>() / n).sqrt();
    let ratios = usable.windows(2).map(|w| (w[0].1 / w[1].1).ln() / (w[0].0 / w[1].0).ln()).collect();
    Ok(Fit { slope, residual, ratios, used: usable.len() })
}

/// Accepted slope range.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Band {
    pub lo: Option<f64>,
    pub hi: Option<f64>,
}

impl Band {
    pub fn around(target: f64, tol: f64) -> Self {
        Band { lo: Some(target - tol), hi: Some(target + tol) }
    }

    pub fn at_least(lo: f64) -> Self {
        Band { lo: Some(lo), hi: None }
    }

    pub fn at_most(hi: f64) -> Self {
        Band { lo: None, hi: Some(hi) }
    }

    pub fn contains(&self, x: f64) -> bool {
        x.is_finite() && self.lo.is_none_or(|l| x >= l) && self.hi.is_none_or(|h| x <= h)
    }
}

impl std::fmt::Display for Band {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match (self.lo, self.hi) {
            (Some(l), Some(h)) => write!(f, "[{l:.2}, {h:.2}]"),
            (Some(l), None) => write!(f, ">= {l:.2}"),
            (None, Some(h)) => write!(f, "<= {h:.2}"),
            (None, None) => f.write_str("any"),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Row {
    /// `h` for local and expansion studies, `n` for global ones.
    pub ladder_param: f64,
    pub h: f64,
    pub err_y: f64,
    pub err_z: Option<f64>,
    pub excluded: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SlopeCheck {
    pub name: String,
    pub fit: Option<Fit>,
    pub band: Band,
    pub pass: bool,
    pub note: Option<String>,
}

impl SlopeCheck {
    fn new(name: &str, points: &[(f64, f64)], band: Band) -> Self {
        match fit_order(points) {
            Ok(fit) => SlopeCheck { name: name.into(), pass: band.contains(fit.slope), fit: Some(fit), band, note: None },
            Err(e) => SlopeCheck { name: name.into(), fit: None, band, pass: false, note: Some(e.to_string()) },
        }
    }

    pub fn slope(&self) -> f64 {
        self.fit.as_ref().map_or(f64::NAN, |f| f.slope)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StudyReport {
    pub kind: String,
    /// Configuration echo (filled in by the caller that owns the full config).
    pub config: Value,
    pub params: Value,
    pub rows: Vec<Row>,
    pub checks: Vec<SlopeCheck>,
    pub extra: Value,
    pub pass: bool,
}

impl StudyReport {
    fn new(kind: &str, params: Value, rows: Vec<Row>, checks: Vec<SlopeCheck>, extra: Value, extra_pass: bool) -> Self {
        let pass = extra_pass && checks.iter().all(|c| c.pass);
        StudyReport { kind: kind.into(), config: Value::Null, params, rows, checks, extra, pass }
    }

    pub fn check(&self, name: &str) -> Option<&SlopeCheck> {
        self.checks.iter().find(|c| c.name == name)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("reports serialize")
    }

    /// `ladder_param,err_Y,err_Z,ratio_Y,ratio_Z` rows, then slope/residual/pass footers.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("ladder_param,err_Y,err_Z,ratio_Y,ratio_Z\n");
        let ratio = |a: f64, b: f64, ha: f64, hb: f64| if a > 0.0 && b > 0.0 { format!("{:.6}", (a / b).ln() / (ha / hb).ln()) } else { String::new() };
        for (i, r) in self.rows.iter().enumerate() {
            let prev = i.checked_sub(1).map(|k| &self.rows[k]);
            let ry = prev.map_or(String::new(), |p| ratio(p.err_y, r.err_y, p.h, r.h));
            let rz = match (prev.and_then(|p| p.err_z), r.err_z) {
                (Some(a), Some(b)) => ratio(a, b, prev.expect("has previous row").h, r.h),
                _ => String::new(),
            };
            let ez = r.err_z.map_or(String::new(), |z| format!("{z:.6e}"));
            out.push_str(&format!("{},{:.6e},{},{},{}\n", r.ladder_param, r.err_y, ez, ry, rz));
        }
        let cell = |c: Option<&SlopeCheck>, f: &dyn Fn(&SlopeCheck) -> String| c.map_or(String::new(), f);
        let cy = self.check("slope_Y").or_else(|| self.check("slope"));
        let cz = self.check("slope_Z");
        let slope = |c: &SlopeCheck| c.fit.as_ref().map_or("nan".into(), |f| format!("{:.6}", f.slope));
        let resid = |c: &SlopeCheck| c.fit.as_ref().map_or("nan".into(), |f| format!("{:.6e}", f.residual));
        out.push_str(&format!("slope,{},{},,\n", cell(cy, &slope), cell(cz, &slope)));
        out.push_str(&format!("residual,{},{},,\n", cell(cy, &resid), cell(cz, &resid)));
        out.push_str(&format!("pass,{},,,\n", self.pass));
        out
    }
}

fn mark(rows: &mut [Row]) {
    for r in rows {
        r.excluded = r.err_y < FIT_FLOOR || r.err_z.is_some_and(|z| z < FIT_FLOOR);
    }
}

fn exact_ref<T: Real>(problem: &Problem<T>, t: T) -> (impl Fn(T) -> T + '_, impl Fn(T) -> T + '_) {
    (move |x| problem.exact_yz(t, x).map(|v| v.0).unwrap_or(T::nan()), move |x| problem.exact_yz(t, x).map(|v| v.1).unwrap_or(T::nan()))
}

fn require_exact<T: Real>(problem: &Problem<T>) -> Result<(), AnalysisError> {
    if problem.exact.is_none() {
        return Err(ModelError::MissingExact(problem.name.clone()).into());
    }
    Ok(())
}

/// Marginal RMS of `Ŷ - Y_t` and `Ẑ - Z_t` at the anchor time.
pub fn one_step_errors<T: Real>(engine: &Engine<'_, T>, t_i: T, h: T) -> Result<(f64, f64), AnalysisError> {
    let (y, z) = engine.one_step_hat(t_i, h)?;
    let (ry, rz) = exact_ref(engine.problem, t_i);
    let ey = marginal_mean_square(&engine.problem.forward, &y, ry, &engine.quad).as_f64().sqrt();
    let ez = marginal_mean_square(&engine.problem.forward, &z, rz, &engine.quad).as_f64().sqrt();
    Ok((ey, ez))
}

/// One-step RMS errors over a ladder of `h` at a fixed anchor; targets are
/// slopes `m + 1` (Y) and `m` (Z).
pub fn local_truncation_study<T: Real>(
    scheme: &SchemeSpec<T>,
    problem: &Problem<T>,
    config: &SolverConfig,
    t_anchor: Option<f64>,
    h_ladder: &[f64],
    band_y: Band,
    band_z: Band,
) -> Result<StudyReport, AnalysisError> {
    require_exact(problem)?;
    let hmax = h_ladder.iter().copied().fold(0.0, f64::max);
    let horizon = problem.horizon.as_f64();
    let anchor = t_anchor.unwrap_or(horizon - hmax);
    if anchor < 0.0 || anchor + hmax > horizon + 1e-12 {
        return Err(AnalysisError::Invalid(format!("anchor {anchor} with h up to {hmax} leaves [0, {horizon}]")));
    }
    let engine = Engine::new(scheme, problem, config)?;
    let mut rows = Vec::new();
    for &h in h_ladder {
        let (ey, ez) = one_step_errors(&engine, T::lit(anchor), T::lit(h))?;
        rows.push(Row { ladder_param: h, h, err_y: ey, err_z: Some(ez), excluded: false });
    }
    mark(&mut rows);
    let checks = vec![
        SlopeCheck::new("slope_Y", &rows.iter().map(|r| (r.h, r.err_y)).collect::<Vec<_>>(), band_y),
        SlopeCheck::new("slope_Z", &rows.iter().map(|r| (r.h, r.err_z.unwrap_or(f64::NAN))).collect::<Vec<_>>(), band_z),
    ];
    let params = json!({ "problem": problem.name, "t_anchor": anchor, "h_ladder": h_ladder });
    let extra = json!({ "diagnostics": engine.diagnostics() });
    Ok(StudyReport::new("local_truncation", params, rows, checks, extra, true))
}

/// `(sqrt(E_Y), sqrt(E_Z))` with `E_Y = max_i E|Y_{t_i} - Y_i|²` and `E_Z = Σ h_i E|Z_{t_i} - Z_i|²`.
pub fn global_errors<T: Real>(engine: &Engine<'_, T>, partition: &Partition<T>) -> Result<(f64, f64), AnalysisError> {
    let tr = engine.solve(partition)?;
    let mut ey = 0.0f64;
    let mut ez = 0.0f64;
    for i in 0..=partition.n() {
        let t = partition.times[i];
        let (ry, rz) = exact_ref(engine.problem, t);
        ey = ey.max(marginal_mean_square(&engine.problem.forward, &tr.y[i], ry, &engine.quad).as_f64());
        if i < partition.n() {
            ez += partition.steps[i].as_f64() * marginal_mean_square(&engine.problem.forward, &tr.z[i], rz, &engine.quad).as_f64();
        }
    }
    Ok((ey.sqrt(), ez.sqrt()))
}

/// `T(π) = Σ h_i (η^Y_i + η^Z_i)` with `η^Y_i = E|Y_{t_i} - Ŷ_i|² / h_i²` and `η^Z_i = E|Z_{t_i} - Ẑ_i|²`.
pub fn truncation_total<T: Real>(engine: &Engine<'_, T>, partition: &Partition<T>) -> Result<f64, AnalysisError> {
    let mut total = 0.0;
    for i in 0..partition.n() {
        let (ey, ez) = eta(engine, partition.times[i], partition.steps[i])?;
        total += partition.steps[i].as_f64() * (ey + ez);
    }
    Ok(total)
}

/// `(η^Y_i, η^Z_i)` for the step `[t_i, t_i + h]`.
pub fn eta<T: Real>(engine: &Engine<'_, T>, t_i: T, h: T) -> Result<(f64, f64), AnalysisError> {
    let (ey, ez) = one_step_errors(engine, t_i, h)?;
    let h = h.as_f64();
    Ok((ey * ey / (h * h), ez * ez))
}

/// Global errors over uniform partitions; the fitted slope of
/// `sqrt(E_Y) + sqrt(E_Z)` against `|π|` targets the scheme order.
pub fn global_convergence_study<T: Real>(
    scheme: &SchemeSpec<T>,
    problem: &Problem<T>,
    config: &SolverConfig,
    n_ladder: &[usize],
    band: Band,
    with_truncation: bool,
) -> Result<StudyReport, AnalysisError> {
    require_exact(problem)?;
    let engine = Engine::new(scheme, problem, config)?;
    let mut rows = Vec::new();
    let mut combined = Vec::new();
    let mut prop11 = Vec::new();
    for &n in n_ladder {
        let part = Partition::uniform(n, problem.horizon)?;
        let (ey, ez) = global_errors(&engine, &part)?;
        let h = part.mesh().as_f64();
        rows.push(Row { ladder_param: n as f64, h, err_y: ey, err_z: Some(ez), excluded: false });
        combined.push((h, ey + ez));
        if with_truncation {
            let t = truncation_total(&engine, &part)?;
            prop11.push(json!({ "n": n, "global_sq": ey * ey + ez * ez, "truncation": t, "ratio": (ey * ey + ez * ez) / t }));
        }
    }
    mark(&mut rows);
    let checks = vec![
        SlopeCheck::new("slope_Y+Z", &combined, band),
        SlopeCheck::new("slope_Y", &rows.iter().map(|r| (r.h, r.err_y)).collect::<Vec<_>>(), Band { lo: None, hi: None }),
        SlopeCheck::new("slope_Z", &rows.iter().map(|r| (r.h, r.err_z.unwrap_or(f64::NAN))).collect::<Vec<_>>(), Band { lo: None, hi: None }),
    ];
    let params = json!({ "problem": problem.name, "n_ladder": n_ladder });
    let diag = engine.diagnostics();
    let extra = json!({ "diagnostics": diag, "global_vs_truncation": prop11 });
    Ok(StudyReport::new("global_convergence", params, rows, checks, extra, true))
}

/// Perturbation ratios `LHS / RHS` with `ζ^Y_i = ε h² sin x`, `ζ^Z_i = ε h sin x`.
pub fn stability_probe<T: Real>(
    scheme: &SchemeSpec<T>,
    problem: &Problem<T>,
    config: &SolverConfig,
    epsilon: f64,
    n_ladder: &[usize],
    max_spread: f64,
) -> Result<StudyReport, AnalysisError> {
    let engine = Engine::new(scheme, problem, config)?;
    let fwd = &problem.forward;
    let zero = |_: T| T::zero();
    let eps = T::lit(epsilon);
    let mut rows = Vec::new();
    let mut entries = Vec::new();
    for &n in n_ladder {
        let part = Partition::uniform(n, problem.horizon)?;
        let base = engine.solve(&part)?;
        let zeta = |_: usize, t1: T, h: T| -> Result<Perturbation<T>, SolverError> {
            Ok(Perturbation {
                y: Some(GridFunction::sample(t1, &engine.grid, |x| eps * h * h * x.sin())),
                z: Some(GridFunction::sample(t1, &engine.grid, |x| eps * h * x.sin())),
            })
        };
        let pert = engine.solve_perturbed(&part, zeta)?;
        let mut lhs_y = 0.0f64;
        let mut lhs_z = 0.0f64;
        let mut rhs = 0.0f64;
        for i in 0..=n {
            let dy = base.y[i].axpy(-T::one(), &pert.y[i]);
            lhs_y = lhs_y.max(marginal_mean_square(fwd, &dy, zero, &engine.quad).as_f64());
            if i < n {
                let h = part.steps[i];
                let dz = base.z[i].axpy(-T::one(), &pert.z[i]);
                lhs_z += h.as_f64() * marginal_mean_square(fwd, &dz, zero, &engine.quad).as_f64();
                let z = zeta(i, part.times[i + 1], h)?;
                let ti = part.times[i];
                let cy = engine.ce(z.y.as_ref().expect("set above"), ti, h)?;
                let cz = engine.ce(z.z.as_ref().expect("set above"), ti, h)?;
                let hf = h.as_f64();
                rhs += hf * (marginal_mean_square(fwd, &cy, zero, &engine.quad).as_f64() / (hf * hf) + marginal_mean_square(fwd, &cz, zero, &engine.quad).as_f64());
            }
        }
        let lhs = lhs_y + lhs_z;
        let ratio = if rhs > 0.0 { lhs / rhs } else { f64::NAN };
        rows.push(Row { ladder_param: n as f64, h: part.mesh().as_f64(), err_y: lhs, err_z: Some(rhs), excluded: false });
        entries.push(json!({ "n": n, "lhs": lhs, "rhs": rhs, "ratio": ratio }));
    }
    let ratios: Vec<f64> = rows.iter().map(|r| r.err_y / r.err_z.unwrap_or(f64::NAN)).collect();
    let pass = if epsilon == 0.0 {
        rows.iter().all(|r| r.err_y == 0.0)
    } else {
        let max = ratios.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let min = ratios.iter().copied().fold(f64::INFINITY, f64::min);
        ratios.iter().all(|r| r.is_finite() && *r > 0.0) && max / min <= max_spread
    };
    let spread = ratios.iter().copied().fold(f64::NEG_INFINITY, f64::max) / ratios.iter().copied().fold(f64::INFINITY, f64::min);
    let params = json!({ "problem": problem.name, "epsilon": epsilon, "n_ladder": n_ladder, "max_spread": max_spread });
    let extra = json!({ "entries": entries, "spread": spread });
    Ok(StudyReport::new("stability", params, rows, Vec::new(), extra, pass))
}

/// `|E_t[v(t + h, X_{t+h})] - Σ_{k ≤ m} L⁰^k v h^k / k!|` at `(t, x)`.
pub fn expansion_remainder_y<T: Real>(problem: &Problem<T>, v: &SmoothFn<T>, m: usize, t: T, x: T, h: T, quad: &QuadratureRule<T>) -> T {
    let fwd = &problem.forward;
    let tr = fwd.transition(h);
    let lhs = gaussian_expectation(tr.a * x + tr.m, tr.v, quad, |y| v.eval(t + h, y));
    let mut term = v.clone();
    let mut sum = T::zero();
    let mut fact = T::one();
    for k in 0..=m {
        if k > 0 {
            term = term.l0(fwd);
            fact = fact * T::int(k as i64);
        }
        sum = sum + term.eval(t, x) * h.pow_n(k) / fact;
    }
    (lhs - sum).abs()
}

/// `|E_t[H^ψ_{t,h} v(t + h, X_{t+h})] - Σ_{k ≤ m} L¹L⁰^k v h^k / k!|` at `(t, x)`.
#[allow(clippy::too_many_arguments)]
pub fn expansion_remainder_z<T: Real>(
    problem: &Problem<T>,
    v: &SmoothFn<T>,
    psi: &PsiFunction<T>,
    m: usize,
    t: T,
    x: T,
    h: T,
    quad: &QuadratureRule<T>,
) -> Result<T, AnalysisError> {
    let fwd = &problem.forward;
    let tr = fwd.transition(h);
    let lambda = endpoint_projection(fwd, psi, h)?.lambda;
    let sd = tr.v.sqrt();
    let mean = tr.a * x + tr.m;
    let lhs = quad.integrate(|xi| lambda * sd * xi * v.eval(t + h, mean + sd * xi));
    let mut term = v.clone();
    let mut sum = T::zero();
    let mut fact = T::one();
    for k in 0..=m {
        if k > 0 {
            term = term.l0(fwd);
            fact = fact * T::int(k as i64);
        }
        sum = sum + term.l1(fwd).eval(t, x) * h.pow_n(k) / fact;
    }
    Ok((lhs - sum).abs())
}

fn ladder_report<T: Real>(kind: &str, params: Value, h_ladder: &[f64], band: Band, f: impl Fn(T) -> Result<T, AnalysisError>) -> Result<StudyReport, AnalysisError> {
    let mut rows = Vec::new();
    for &h in h_ladder {
        let e = f(T::lit(h))?.as_f64();
        rows.push(Row { ladder_param: h, h, err_y: e, err_z: None, excluded: false });
    }
    mark(&mut rows);
    let checks = vec![SlopeCheck::new("slope", &rows.iter().map(|r| (r.h, r.err_y)).collect::<Vec<_>>(), band)];
    Ok(StudyReport::new(kind, params, rows, checks, Value::Null, true))
}

pub const EXPANSION_QUAD: usize = 60;

#[allow(clippy::too_many_arguments)]
pub fn expansion_check_y<T: Real>(problem: &Problem<T>, test_v: &SmoothFn<T>, m: usize, t: f64, x: f64, h_ladder: &[f64], band: Band) -> Result<StudyReport, AnalysisError> {
    let quad = QuadratureRule::gauss_hermite(EXPANSION_QUAD);
    let params = json!({ "problem": problem.name, "m": m, "t": t, "x": x, "h_ladder": h_ladder });
    ladder_report("expansion_y", params, h_ladder, band, |h| Ok(expansion_remainder_y(problem, test_v, m, T::lit(t), T::lit(x), h, &quad)))
}

#[allow(clippy::too_many_arguments)]
pub fn expansion_check_z<T: Real>(
    problem: &Problem<T>,
    test_v: &SmoothFn<T>,
    psi: &PsiFunction<T>,
    m: usize,
    t: f64,
    x: f64,
    h_ladder: &[f64],
    band: Band,
) -> Result<StudyReport, AnalysisError> {
    let quad = QuadratureRule::gauss_hermite(EXPANSION_QUAD);
    let params = json!({ "problem": problem.name, "m": m, "t": t, "x": x, "psi_class": psi.claimed_m, "h_ladder": h_ladder });
    ladder_report("expansion_z", params, h_ladder, band, |h| expansion_remainder_z(problem, test_v, psi, m, T::lit(t), T::lit(x), h, &quad))
}

/// `Z^ψ_{t,h} = (1/h) ∫_t^{t+h} ψ((s - t)/h) E_t[σ u_x(s, X_s)] ds` at `x`.
pub fn z_proxy<T: Real>(problem: &Problem<T>, psi: &PsiFunction<T>, t: T, x: T, h: T, quad: &QuadratureRule<T>) -> Result<T, AnalysisError> {
    let exact = problem.exact.as_ref().ok_or_else(|| ModelError::MissingExact(problem.name.clone()))?;
    let fwd = &problem.forward;
    let mut total = T::zero();
    for piece in &psi.pieces {
        let gl = QuadratureRule::<T>::gauss_legendre(20, piece.lo.as_f64(), piece.hi.as_f64());
        total = total
            + gl.integrate(|r| {
                let tr = fwd.transition(r * h);
                let e = gaussian_expectation(tr.a * x + tr.m, tr.v, quad, |y| exact.ux.eval(t + r * h, y));
                piece.eval(r) * fwd.sigma * e
            });
    }
    Ok(total)
}

pub fn zproxy_check<T: Real>(problem: &Problem<T>, psi: &PsiFunction<T>, m: usize, t: f64, x: f64, h_ladder: &[f64], band: Band) -> Result<StudyReport, AnalysisError> {
    require_exact(problem)?;
    let quad = QuadratureRule::gauss_hermite(EXPANSION_QUAD);
    let params = json!({ "problem": problem.name, "m": m, "t": t, "x": x, "psi_class": psi.claimed_m, "h_ladder": h_ladder });
    let (tt, xx) = (T::lit(t), T::lit(x));
    let z = problem.exact_yz(tt, xx)?.1;
    ladder_report("zproxy", params, h_ladder, band, |h| Ok((z - z_proxy(problem, psi, tt, xx, h, &quad)?).abs()))
}

/// The 3/8-rule four-stage scheme with `ψ ∈ B³`, `φ ∈ B²`: satisfies every
/// Y-side order-4 condition but not the Z-side β–α coupling.
pub fn best_effort_four_stage<T: Real>() -> SchemeSpec<T> {
    SchemeSpec::with_classes(four_stage_three_eighths(), 3, 2)
}

/// Global convergence of the best-effort four-stage scheme, with the
/// algebraic certificate attached; passes iff the fitted slope stays at or below `max_slope`.
pub fn barrier_demo_order4<T: Real>(problem: &Problem<T>, config: &SolverConfig, n_ladder: &[usize], max_slope: f64) -> Result<StudyReport, AnalysisError> {
    if problem.driver.fz_zero {
        return Err(AnalysisError::Invalid("the order-4 barrier needs a driver depending on z".into()));
    }
    let scheme = best_effort_four_stage::<T>();
    let mut rep = global_convergence_study(&scheme, problem, config, n_ladder, Band::at_most(max_slope), false)?;
    rep.kind = "barrier_order4".into();
    let cert = order4_barrier_certificate();
    rep.extra = json!({ "certificate": cert, "global": rep.extra });
    Ok(rep)
}
