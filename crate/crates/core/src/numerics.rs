//! Spatial grids, interpolation, Gauss rules and Gaussian conditional expectations.
//!
//! Hermite rules use the probabilists' convention throughout: nodes and
//! weights integrate against the standard normal density, and the weights sum
//! to one.

use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Mutex;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::ForwardModel;
use crate::scalar::Real;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NumericsError {
    #[error("grid function lives at t = {found}, expected t = {expected}")]
    TimeMismatch { expected: f64, found: f64 },
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
}

/// Gauss rule `Σ w_i f(x_i)`.
#[derive(Clone, Debug, PartialEq)]
pub struct QuadratureRule<T> {
    pub nodes: Vec<T>,
    pub weights: Vec<T>,
}

impl<T: Real> QuadratureRule<T> {
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn cast(nodes: Vec<f64>, weights: Vec<f64>) -> Self {
        QuadratureRule { nodes: nodes.into_iter().map(T::lit).collect(), weights: weights.into_iter().map(T::lit).collect() }
    }

    /// Probabilists' Gauss–Hermite rule: `E[f(N)] ≈ Σ w_i f(ξ_i)`, `N ~ N(0, 1)`.
    pub fn gauss_hermite(n: usize) -> Self {
        let (x, w) = hermite_physicists(n);
        let s2 = std::f64::consts::SQRT_2;
        let rpi = std::f64::consts::PI.sqrt();
        Self::cast(x.iter().map(|z| z * s2).collect(), w.iter().map(|v| v / rpi).collect())
    }

    /// Gauss–Legendre rule on `[lo, hi]`.
    pub fn gauss_legendre(n: usize, lo: f64, hi: f64) -> Self {
        let (x, w) = legendre(n);
        let (c, r) = (0.5 * (lo + hi), 0.5 * (hi - lo));
        Self::cast(x.iter().map(|z| c + r * z).collect(), w.iter().map(|v| v * r).collect())
    }

    pub fn integrate(&self, f: impl Fn(T) -> T) -> T {
        self.nodes.iter().zip(&self.weights).fold(T::zero(), |acc, (&x, &w)| acc + w * f(x))
    }
}

/// Nodes and weights for `∫ e^{-x²} f(x) dx`, ascending. Newton iteration on
/// the orthonormal Hermite recurrence with the usual asymptotic initial guesses.
fn hermite_physicists(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1, "Gauss-Hermite needs at least one node");
    let pim4 = std::f64::consts::PI.powf(-0.25);
    let nf = n as f64;
    let m = n.div_ceil(2);
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    let mut z = 0.0f64;
    for i in 0..m {
        z = match i {
            0 => (2.0 * nf + 1.0).sqrt() - 1.85575 * (2.0 * nf + 1.0).powf(-1.0 / 6.0),
            1 => z - 1.14 * nf.powf(0.426) / z,
            2 => 1.86 * z - 0.86 * x[0],
            3 => 1.91 * z - 0.91 * x[1],
            _ => 2.0 * z - x[i - 2],
        };
        let mut pp = 0.0;
        for _ in 0..100 {
            let mut p1 = pim4;
            let mut p2 = 0.0;
            for j in 1..=n {
                let p3 = p2;
                p2 = p1;
                let jf = j as f64;
                p1 = z * (2.0 / jf).sqrt() * p2 - ((jf - 1.0) / jf).sqrt() * p3;
            }
            pp = (2.0 * nf).sqrt() * p2;
            let z1 = z;
            z = z1 - p1 / pp;
            if (z - z1).abs() <= 1e-15 * z.abs().max(1.0) {
                break;
            }
        }
        x[i] = z;
        x[n - 1 - i] = -z;
        w[i] = 2.0 / (pp * pp);
        w[n - 1 - i] = w[i];
    }
    if n % 2 == 1 {
        x[n / 2] = 0.0;
    }
    let mut idx: Vec<usize> = (0..n).collect();
    idx.sort_by(|&a, &b| x[a].total_cmp(&x[b]));
    (idx.iter().map(|&i| x[i]).collect(), idx.iter().map(|&i| w[i]).collect())
}

/// Gauss–Legendre nodes and weights on `[-1, 1]`, ascending.
fn legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1, "Gauss-Legendre needs at least one node");
    let nf = n as f64;
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        let mut z = (std::f64::consts::PI * (i as f64 + 0.75) / (nf + 0.5)).cos();
        let mut pp = 0.0;
        for _ in 0..100 {
            let mut p1 = 1.0;
            let mut p2 = 0.0;
            for j in 1..=n {
                let p3 = p2;
                p2 = p1;
                let jf = j as f64;
                p1 = ((2.0 * jf - 1.0) * z * p2 - (jf - 1.0) * p3) / jf;
            }
            pp = nf * (z * p1 - p2) / (z * z - 1.0);
            let z1 = z;
            z = z1 - p1 / pp;
            if (z - z1).abs() <= 1e-16 {
                break;
            }
        }
        x[i] = -z;
        x[n - 1 - i] = z;
        w[i] = 2.0 / ((1.0 - z * z) * pp * pp);
        w[n - 1 - i] = w[i];
    }
    (x, w)
}

/// Discretization parameters for the spatial layer.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridConfig {
    pub n_nodes: usize,
    pub p_interp: usize,
    pub n_quad: usize,
    /// Domain half-width in units of the largest marginal standard deviation.
    pub radius: f64,
}

impl Default for GridConfig {
    fn default() -> Self {
        GridConfig { n_nodes: 601, p_interp: 8, n_quad: 40, radius: 12.0 }
    }
}

/// Uniform nodes `x_lo + i dx`, `i = 0..n`, with barycentric weights for
/// local interpolation of order `p`.
#[derive(Clone, Debug, PartialEq)]
pub struct Grid<T> {
    pub x_lo: T,
    pub x_hi: T,
    pub n: usize,
    pub p_interp: usize,
    bary: Vec<T>,
}

impl<T: Real> Grid<T> {
    pub fn new(x_lo: T, x_hi: T, n: usize, p_interp: usize) -> Result<Self, NumericsError> {
        if n < p_interp + 1 || n < 2 {
            return Err(NumericsError::InvalidGrid(format!("{n} nodes cannot support order-{p_interp} interpolation")));
        }
        if x_hi.partial_cmp(&x_lo) != Some(std::cmp::Ordering::Greater) {
            return Err(NumericsError::InvalidGrid("empty domain".into()));
        }
        // Uniform-node barycentric weights (-1)^j C(p, j).
        let mut bary = Vec::with_capacity(p_interp + 1);
        let mut binom = 1.0f64;
        for j in 0..=p_interp {
            let sign = if j % 2 == 0 { 1.0 } else { -1.0 };
            bary.push(T::lit(sign * binom));
            binom = binom * (p_interp - j) as f64 / (j + 1) as f64;
        }
        Ok(Grid { x_lo, x_hi, n, p_interp, bary })
    }

    /// Domain covering the marginal mean range over `[0, horizon]` plus
    /// `radius` times the largest marginal standard deviation.
    pub fn for_model(model: &ForwardModel<T>, horizon: T, cfg: &GridConfig) -> Result<Self, NumericsError> {
        let samples = 200;
        let (mut lo, mut hi, mut var) = (model.x0, model.x0, T::zero());
        for k in 0..=samples {
            let t = horizon * T::lit(k as f64 / samples as f64);
            let (m, v) = model.marginal(t);
            lo = lo.min(m);
            hi = hi.max(m);
            var = var.max(v);
        }
        let r = T::lit(cfg.radius) * var.sqrt();
        Self::new(lo - r, hi + r, cfg.n_nodes, cfg.p_interp)
    }

    pub fn dx(&self) -> T {
        (self.x_hi - self.x_lo) / T::int(self.n as i64 - 1)
    }

    pub fn node(&self, i: usize) -> T {
        self.x_lo + self.dx() * T::int(i as i64)
    }

    pub fn nodes(&self) -> Vec<T> {
        (0..self.n).map(|i| self.node(i)).collect()
    }

    /// Interpolation stencil at `x` as `(first index, weights)`; `None` weights
    /// mark a point outside the domain (clamped to the nearest boundary node).
    fn stencil(&self, x: T, w: &mut Vec<T>) -> (usize, bool) {
        w.clear();
        if x < self.x_lo {
            w.push(T::one());
            return (0, true);
        }
        if x > self.x_hi {
            w.push(T::one());
            return (self.n - 1, true);
        }
        let dx = self.dx();
        let s = (x - self.x_lo) / dx;
        let p = self.p_interp;
        let start = (s - T::lit(p as f64 / 2.0)).round().to_i64().unwrap_or(0).clamp(0, (self.n - 1 - p) as i64) as usize;
        let mut denom = T::zero();
        for j in 0..=p {
            let d = x - self.node(start + j);
            if d == T::zero() {
                w.clear();
                w.push(T::one());
                return (start + j, false);
            }
            let c = self.bary[j] / d;
            w.push(c);
            denom = denom + c;
        }
        for c in w.iter_mut() {
            *c = *c / denom;
        }
        (start, false)
    }
}

/// A function of `x` sampled on a grid at time `t`.
#[derive(Clone, Debug, PartialEq)]
pub struct GridFunction<T> {
    pub t: T,
    pub grid: Grid<T>,
    pub values: Vec<T>,
}

impl<T: Real> GridFunction<T> {
    pub fn sample(t: T, grid: &Grid<T>, f: impl Fn(T) -> T) -> Self {
        GridFunction { t, grid: grid.clone(), values: grid.nodes().into_iter().map(f).collect() }
    }

    pub fn constant(t: T, grid: &Grid<T>, c: T) -> Self {
        GridFunction { t, grid: grid.clone(), values: vec![c; grid.n] }
    }

    /// Local Lagrange interpolation; clamps to the boundary value outside the domain.
    pub fn interpolate(&self, x: T) -> T {
        self.interpolate_counted(x, None)
    }

    pub fn interpolate_counted(&self, x: T, ctx: Option<&EvalContext>) -> T {
        let mut w = Vec::with_capacity(self.grid.p_interp + 1);
        let (start, out) = self.grid.stencil(x, &mut w);
        if let Some(c) = ctx {
            c.record(1, out as u64);
        }
        w.iter().enumerate().fold(T::zero(), |acc, (j, &c)| acc + c * self.values[start + j])
    }

    pub fn map(&self, f: impl Fn(T, T) -> T) -> Self {
        let values = self.grid.nodes().into_iter().zip(&self.values).map(|(x, &v)| f(x, v)).collect();
        GridFunction { t: self.t, grid: self.grid.clone(), values }
    }

    /// `self + s · other` (time label of `self`).
    pub fn axpy(&self, s: T, other: &GridFunction<T>) -> Self {
        let values = self.values.iter().zip(&other.values).map(|(&a, &b)| a + s * b).collect();
        GridFunction { t: self.t, grid: self.grid.clone(), values }
    }

    pub fn with_time(mut self, t: T) -> Self {
        self.t = t;
        self
    }

    pub fn all_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }
}

/// Evaluation counters shared by one solve or study.
#[derive(Debug, Default)]
pub struct EvalContext {
    evaluations: AtomicU64,
    out_of_domain: AtomicU64,
    operators: AtomicU64,
    leak: Mutex<LeakStats>,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize)]
pub struct LeakStats {
    /// Largest marginal-weighted probability mass that any single
    /// conditional-expectation operator sent outside the domain.
    pub max_weighted_leak: f64,
}

/// Threshold above which a run is flagged for domain leakage.
pub const LEAK_FLAG: f64 = 1e-6;

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize)]
pub struct EvalSummary {
    pub evaluations: u64,
    pub out_of_domain: u64,
    pub operators: u64,
    pub max_weighted_leak: f64,
    pub flagged: bool,
}

impl EvalContext {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn record(&self, evaluations: u64, out: u64) {
        self.evaluations.fetch_add(evaluations, Ordering::Relaxed);
        self.out_of_domain.fetch_add(out, Ordering::Relaxed);
    }

    fn record_leak(&self, weighted: f64) {
        self.operators.fetch_add(1, Ordering::Relaxed);
        let mut l = self.leak.lock().expect("leak stats lock");
        l.max_weighted_leak = l.max_weighted_leak.max(weighted);
    }

    pub fn summary(&self) -> EvalSummary {
        let leak = *self.leak.lock().expect("leak stats lock");
        EvalSummary {
            evaluations: self.evaluations.load(Ordering::Relaxed),
            out_of_domain: self.out_of_domain.load(Ordering::Relaxed),
            operators: self.operators.load(Ordering::Relaxed),
            max_weighted_leak: leak.max_weighted_leak,
            flagged: leak.max_weighted_leak > LEAK_FLAG,
        }
    }
}

/// Linear map `values at s + δ ↦ values at s` for one span and weighting:
/// `(Pg)(x) = Σ_q w_q K(ξ_q) g(a x + m + √v ξ_q)` with `K = 1` or `K = λ√v ξ`.
#[derive(Clone, Debug)]
pub struct CeOperator<T> {
    pub delta: T,
    pub lambda: Option<T>,
    rows: Vec<(usize, Vec<T>)>,
    evaluations: u64,
    out_of_domain: u64,
    /// Probability mass per output node whose quadrature points left the domain.
    leak: Vec<f64>,
    kind: OpKind,
}

#[derive(Clone, Copy, Debug, PartialEq)]
enum OpKind {
    Identity,
    Zero,
    General,
}

impl<T: Real> CeOperator<T> {
    pub fn build(model: &ForwardModel<T>, grid: &Grid<T>, delta: T, lambda: Option<T>, quad: &QuadratureRule<T>) -> Self {
        let empty = |kind| CeOperator {
            delta,
            lambda,
            rows: Vec::new(),
            evaluations: 0,
            out_of_domain: 0,
            leak: vec![0.0; grid.n],
            kind,
        };
        if delta == T::zero() {
            return empty(if lambda.is_some() { OpKind::Zero } else { OpKind::Identity });
        }
        let tr = model.transition(delta);
        let sd = tr.v.sqrt();
        let built: Vec<((usize, Vec<T>), u64, f64)> = (0..grid.n)
            .into_par_iter()
            .map(|i| {
                let base = tr.a * grid.node(i) + tr.m;
                let mut lo = usize::MAX;
                let mut hi = 0usize;
                let mut entries: Vec<(usize, T)> = Vec::with_capacity(quad.len() * (grid.p_interp + 1));
                let mut w = Vec::with_capacity(grid.p_interp + 1);
                let mut out = 0u64;
                let mut leak = 0.0;
                for (&xi, &wq) in quad.nodes.iter().zip(&quad.weights) {
                    let k = match lambda {
                        Some(l) => wq * l * sd * xi,
                        None => wq,
                    };
                    let (start, outside) = grid.stencil(base + sd * xi, &mut w);
                    if outside {
                        out += 1;
                        leak += wq.as_f64();
                    }
                    for (j, &c) in w.iter().enumerate() {
                        entries.push((start + j, k * c));
                    }
                    lo = lo.min(start);
                    hi = hi.max(start + w.len() - 1);
                }
                let mut dense = vec![T::zero(); hi - lo + 1];
                for (idx, v) in entries {
                    dense[idx - lo] = dense[idx - lo] + v;
                }
                ((lo, dense), out, leak)
            })
            .collect();
        let mut op = empty(OpKind::General);
        op.evaluations = (grid.n * quad.len()) as u64;
        for (i, (row, out, leak)) in built.into_iter().enumerate() {
            op.rows.push(row);
            op.out_of_domain += out;
            op.leak[i] = leak;
        }
        op
    }

    pub fn apply(&self, values: &[T]) -> Vec<T> {
        match self.kind {
            OpKind::Identity => values.to_vec(),
            OpKind::Zero => vec![T::zero(); values.len()],
            OpKind::General => self
                .rows
                .iter()
                .map(|(lo, row)| row.iter().zip(&values[*lo..]).fold(T::zero(), |acc, (&a, &b)| acc + a * b))
                .collect(),
        }
    }

    /// Marginal-weighted leak mass when the operator's output is read under
    /// `N(mean, var)` at the output time.
    pub fn weighted_leak(&self, grid: &Grid<T>, mean: f64, var: f64) -> f64 {
        if self.kind != OpKind::General {
            return 0.0;
        }
        let dx = grid.dx().as_f64();
        let sd = var.max(0.0).sqrt();
        if sd < dx {
            let i = ((mean - grid.x_lo.as_f64()) / dx).round().clamp(0.0, (grid.n - 1) as f64) as usize;
            return self.leak[i];
        }
        let norm = dx / (sd * (2.0 * std::f64::consts::PI).sqrt());
        (0..grid.n)
            .map(|i| {
                let z = (grid.node(i).as_f64() - mean) / sd;
                self.leak[i] * norm * (-0.5 * z * z).exp()
            })
            .sum()
    }

    /// Applies the operator to `gf` (which must live at `s + δ`) and returns
    /// the result at `s`, updating counters in `ctx`.
    pub fn apply_gf(&self, gf: &GridFunction<T>, s: T, ctx: Option<(&EvalContext, &ForwardModel<T>)>) -> Result<GridFunction<T>, NumericsError> {
        check_time(gf.t, s + self.delta)?;
        if let Some((c, model)) = ctx {
            c.record(self.evaluations, self.out_of_domain);
            let (m, v) = model.marginal(s);
            c.record_leak(self.weighted_leak(&gf.grid, m.as_f64(), v.as_f64()));
        }
        Ok(GridFunction { t: s, grid: gf.grid.clone(), values: self.apply(&gf.values) })
    }
}

fn check_time<T: Real>(found: T, expected: T) -> Result<(), NumericsError> {
    let tol = 1e-9 * expected.abs().as_f64().max(1.0);
    if (found - expected).abs().as_f64() > tol {
        return Err(NumericsError::TimeMismatch { expected: expected.as_f64(), found: found.as_f64() });
    }
    Ok(())
}

/// `E[g(X_{s+δ}) | X_s = x]` (or `E[H g(X_{s+δ}) | X_s = x]` when `lambda`
/// is the endpoint projection of `H`) on every grid node.
pub fn conditional_expectation<T: Real>(
    model: &ForwardModel<T>,
    gf: &GridFunction<T>,
    s: T,
    delta: T,
    lambda: Option<T>,
    quad: &QuadratureRule<T>,
) -> Result<GridFunction<T>, NumericsError> {
    check_time(gf.t, s + delta)?;
    CeOperator::build(model, &gf.grid, delta, lambda, quad).apply_gf(gf, s, None)
}

/// `E[(gf(X_t) - reference(X_t))²]` under the exact marginal of `X_t`.
/// Quadrature points outside the grid domain are skipped: the grid function
/// has no values there, and their marginal mass is below the Gauss–Hermite
/// tail weights.
pub fn marginal_mean_square<T: Real>(
    model: &ForwardModel<T>,
    gf: &GridFunction<T>,
    reference: impl Fn(T) -> T,
    quad: &QuadratureRule<T>,
) -> T {
    let (mean, var) = model.marginal(gf.t);
    let sd = var.sqrt();
    quad.integrate(|xi| {
        let x = mean + sd * xi;
        if x < gf.grid.x_lo || x > gf.grid.x_hi {
            return T::zero();
        }
        let d = gf.interpolate(x) - reference(x);
        d * d
    })
}

/// `E[f(N(mean, var))]` by Gauss–Hermite quadrature.
pub fn gaussian_expectation<T: Real>(mean: T, var: T, quad: &QuadratureRule<T>, f: impl Fn(T) -> T) -> T {
    let sd = var.sqrt();
    quad.integrate(|xi| f(mean + sd * xi))
}
