//! Backward Runge–Kutta recursion on a spatial grid.

use std::collections::HashMap;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::hcoef::{endpoint_projection, HcoefError};
use crate::model::{ModelError, Problem};
use crate::numerics::{CeOperator, EvalContext, EvalSummary, Grid, GridConfig, GridFunction, NumericsError, QuadratureRule};
use crate::psi::{default_bm, indicator, linear_b1, PsiFunction};
use crate::scalar::Real;
use crate::tableau::Tableau;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SolverError {
    #[error("invalid tableau: {}", .0.join("; "))]
    Tableau(Vec<String>),
    #[error("weight for stage {stage} is not in B^{m}")]
    WeightClass { stage: usize, m: usize },
    #[error("scheme needs {expected} weights per list, got {found}")]
    WeightCount { expected: usize, found: usize },
    #[error("implicit stages need h * Lip(f) * max|a_jj| < 0.9, got {0}")]
    Contraction(f64),
    #[error("Picard iteration did not converge at t = {t} (node {node}) after {iterations} iterations")]
    Picard { t: f64, node: usize, iterations: usize },
    #[error("non-finite values at t = {0}")]
    NonFinite(f64),
    #[error("invalid partition: {0}")]
    Partition(String),
    #[error(transparent)]
    Numerics(#[from] NumericsError),
    #[error(transparent)]
    Hcoef(#[from] HcoefError),
    #[error(transparent)]
    Model(#[from] ModelError),
}

impl SolverError {
    /// Configuration problems as opposed to failures during the computation.
    pub fn is_config(&self) -> bool {
        matches!(
            self,
            SolverError::Tableau(_)
                | SolverError::WeightClass { .. }
                | SolverError::WeightCount { .. }
                | SolverError::Partition(_)
                | SolverError::Model(_)
                | SolverError::Numerics(NumericsError::InvalidGrid(_))
                | SolverError::Hcoef(HcoefError::Degenerate)
        )
    }
}

/// Standard member of `B^m`: the indicator, `4 - 6u`, or the equispaced
/// piecewise-constant weight.
pub fn standard_weight<T: Real>(m: usize) -> PsiFunction<T> {
    match m {
        0 => indicator(),
        1 => linear_b1(),
        _ => default_bm(m),
    }
}

/// A tableau with the weights used for its H-coefficients. `psi[j - 1]` and
/// `phi[j - 1]` belong to stage `j` (0-based, `1 ≤ j ≤ q`, `j = q` the final step).
#[derive(Clone, Debug, PartialEq)]
pub struct SchemeSpec<T> {
    pub tableau: Tableau<T>,
    pub psi_z: Vec<PsiFunction<T>>,
    pub phi_z: Vec<PsiFunction<T>>,
}

impl<T: Real> SchemeSpec<T> {
    /// Every stage uses the given weights; checked against their recorded classes.
    pub fn new(tableau: Tableau<T>, psi_z: Vec<PsiFunction<T>>, phi_z: Vec<PsiFunction<T>>) -> Result<Self, SolverError> {
        let s = SchemeSpec { tableau, psi_z, phi_z };
        s.check()?;
        Ok(s)
    }

    /// `ψ_j ∈ B^{psi_m}`, `φ_j ∈ B^{phi_m}` for every stage, from [`standard_weight`].
    pub fn with_classes(tableau: Tableau<T>, psi_m: usize, phi_m: usize) -> Self {
        let q = tableau.q;
        SchemeSpec { tableau, psi_z: vec![standard_weight(psi_m); q], phi_z: vec![standard_weight(phi_m); q] }
    }

    /// Weights sufficient for global order `m`: `ψ ∈ B^{m-1}`, `φ ∈ B^{m-2}`.
    pub fn for_order(tableau: Tableau<T>, m: usize) -> Self {
        Self::with_classes(tableau, m.saturating_sub(1), m.saturating_sub(2))
    }

    /// Same tableau with every weight replaced by the indicator.
    pub fn with_indicator_weights(&self) -> Self {
        Self::with_classes(self.tableau.clone(), 0, 0)
    }

    pub fn psi_for(&self, stage: usize) -> &PsiFunction<T> {
        &self.psi_z[stage - 1]
    }

    pub fn phi_for(&self, stage: usize) -> &PsiFunction<T> {
        &self.phi_z[stage - 1]
    }

    pub fn check(&self) -> Result<(), SolverError> {
        let v = self.tableau.validate();
        if !v.is_ok() {
            return Err(SolverError::Tableau(v.violations));
        }
        let q = self.tableau.q;
        for list in [&self.psi_z, &self.phi_z] {
            if list.len() != q {
                return Err(SolverError::WeightCount { expected: q, found: list.len() });
            }
            for (j, w) in list.iter().enumerate() {
                if !w.verify_class(w.claimed_m) {
                    return Err(SolverError::WeightClass { stage: j + 1, m: w.claimed_m });
                }
            }
        }
        Ok(())
    }
}

/// Times `0 = t_0 < … < t_n = T` with step sizes kept separately so that a
/// uniform partition has bit-identical steps.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Partition<T> {
    pub times: Vec<T>,
    pub steps: Vec<T>,
}

impl<T: Real> Partition<T> {
    pub fn uniform(n: usize, horizon: T) -> Result<Self, SolverError> {
        if n == 0 || horizon.partial_cmp(&T::zero()) != Some(std::cmp::Ordering::Greater) {
            return Err(SolverError::Partition(format!("need n >= 1 and T > 0, got n = {n}")));
        }
        let h = horizon / T::int(n as i64);
        let mut times: Vec<T> = (0..n).map(|i| h * T::int(i as i64)).collect();
        times.push(horizon);
        Ok(Partition { times, steps: vec![h; n] })
    }

    pub fn from_times(times: Vec<T>) -> Result<Self, SolverError> {
        if times.len() < 2 || times[0] != T::zero() {
            return Err(SolverError::Partition("need at least two times starting at 0".into()));
        }
        if times.windows(2).any(|w| w[1] <= w[0]) {
            return Err(SolverError::Partition("times must be strictly increasing".into()));
        }
        let steps = times.windows(2).map(|w| w[1] - w[0]).collect();
        Ok(Partition { times, steps })
    }

    pub fn n(&self) -> usize {
        self.steps.len()
    }

    pub fn horizon(&self) -> T {
        self.times[self.n()]
    }

    pub fn mesh(&self) -> T {
        self.steps.iter().fold(T::zero(), |m, &h| m.max(h))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverConfig {
    pub grid: GridConfig,
    pub picard_max_iter: usize,
    pub picard_tol: f64,
    /// Run the fixed-point loop even for zero diagonal weights.
    pub force_implicit: bool,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig { grid: GridConfig::default(), picard_max_iter: 100, picard_tol: 1e-13, force_implicit: false }
    }
}

/// Additive perturbations at `t_{i+1}`, entering the final conditional expectations.
#[derive(Clone, Debug)]
pub struct Perturbation<T> {
    pub y: Option<GridFunction<T>>,
    pub z: Option<GridFunction<T>>,
}

impl<T> Default for Perturbation<T> {
    fn default() -> Self {
        Perturbation { y: None, z: None }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize)]
pub struct SolveDiagnostics {
    pub picard_solves: usize,
    pub picard_max_iterations: usize,
    pub eval: EvalSummary,
}

#[derive(Clone, Debug)]
pub struct Trajectory<T> {
    pub partition: Partition<T>,
    pub y: Vec<GridFunction<T>>,
    pub z: Vec<GridFunction<T>>,
    pub diagnostics: SolveDiagnostics,
}

type OpKey = (u64, Option<u64>);

/// Grid, quadrature and operator cache for one scheme and problem.
pub struct Engine<'a, T: Real> {
    pub scheme: &'a SchemeSpec<T>,
    pub problem: &'a Problem<T>,
    pub grid: Grid<T>,
    pub quad: QuadratureRule<T>,
    pub config: SolverConfig,
    ops: Mutex<HashMap<OpKey, Arc<CeOperator<T>>>>,
    ctx: EvalContext,
    picard_solves: AtomicUsize,
    picard_max: AtomicUsize,
}

impl<'a, T: Real> Engine<'a, T> {
    pub fn new(scheme: &'a SchemeSpec<T>, problem: &'a Problem<T>, config: &SolverConfig) -> Result<Self, SolverError> {
        scheme.check()?;
        let grid = Grid::for_model(&problem.forward, problem.horizon, &config.grid)?;
        Ok(Engine {
            scheme,
            problem,
            grid,
            quad: QuadratureRule::gauss_hermite(config.grid.n_quad),
            config: config.clone(),
            ops: Mutex::new(HashMap::new()),
            ctx: EvalContext::new(),
            picard_solves: AtomicUsize::new(0),
            picard_max: AtomicUsize::new(0),
        })
    }

    pub fn diagnostics(&self) -> SolveDiagnostics {
        SolveDiagnostics {
            picard_solves: self.picard_solves.load(Ordering::Relaxed),
            picard_max_iterations: self.picard_max.load(Ordering::Relaxed),
            eval: self.ctx.summary(),
        }
    }

    pub fn context(&self) -> &EvalContext {
        &self.ctx
    }

    fn operator(&self, span: T, lambda: Option<T>) -> Arc<CeOperator<T>> {
        let key = (span.as_f64().to_bits(), lambda.map(|l| l.as_f64().to_bits()));
        if let Some(op) = self.ops.lock().expect("operator cache lock").get(&key) {
            return op.clone();
        }
        let op = Arc::new(CeOperator::build(&self.problem.forward, &self.grid, span, lambda, &self.quad));
        self.ops.lock().expect("operator cache lock").entry(key).or_insert(op).clone()
    }

    /// `E[g(X_{s+span}) | X_s]` on the grid, for `g` living at `s + span`.
    pub fn ce(&self, g: &GridFunction<T>, s: T, span: T) -> Result<GridFunction<T>, SolverError> {
        let op = self.operator(span, None);
        Ok(op.apply_gf(g, s, Some((&self.ctx, &self.problem.forward)))?)
    }

    /// `E[H^ψ_{s,span} g(X_{s+span}) | X_s]`; zero for a zero span.
    pub fn hce(&self, g: &GridFunction<T>, psi: &PsiFunction<T>, s: T, span: T) -> Result<GridFunction<T>, SolverError> {
        if span == T::zero() {
            return Ok(GridFunction::constant(s, &self.grid, T::zero()));
        }
        let lambda = endpoint_projection(&self.problem.forward, psi, span)?.lambda;
        let op = self.operator(span, Some(lambda));
        Ok(op.apply_gf(g, s, Some((&self.ctx, &self.problem.forward)))?)
    }

    fn driver_on_grid(&self, t: T, y: &GridFunction<T>, z: &GridFunction<T>) -> GridFunction<T> {
        let d = &self.problem.driver;
        let values = self.grid.nodes().into_iter().zip(y.values.iter().zip(&z.values)).map(|(x, (&y, &z))| d.eval(t, x, y, z)).collect();
        GridFunction { t, grid: self.grid.clone(), values }
    }

    /// Solves `y = base + w f(t, x, y, z)` node by node.
    fn implicit(&self, base: GridFunction<T>, w: T, z: &GridFunction<T>) -> Result<GridFunction<T>, SolverError> {
        if w == T::zero() && !self.config.force_implicit {
            return Ok(base);
        }
        let t = base.t;
        let d = &self.problem.driver;
        let tol = T::lit(self.config.picard_tol).max(T::epsilon() * T::lit(4.0));
        let max_iter = self.config.picard_max_iter;
        let nodes = self.grid.nodes();
        let solved: Vec<Result<(T, usize), usize>> = (0..self.grid.n)
            .into_par_iter()
            .map(|i| {
                let (x, b, zi) = (nodes[i], base.values[i], z.values[i]);
                let mut y = b;
                for it in 1..=max_iter {
                    let next = b + w * d.eval(t, x, y, zi);
                    let done = (next - y).abs() <= tol * (T::one() + next.abs());
                    y = next;
                    if done {
                        return Ok((y, it));
                    }
                }
                Err(i)
            })
            .collect();
        let mut values = Vec::with_capacity(self.grid.n);
        let mut worst = 0;
        for r in solved {
            match r {
                Ok((y, it)) => {
                    values.push(y);
                    worst = worst.max(it);
                }
                Err(node) => return Err(SolverError::Picard { t: t.as_f64(), node, iterations: max_iter }),
            }
        }
        self.picard_solves.fetch_add(1, Ordering::Relaxed);
        self.picard_max.fetch_max(worst, Ordering::Relaxed);
        Ok(GridFunction { t, grid: self.grid.clone(), values })
    }

    fn check_contraction(&self, h: T) -> Result<(), SolverError> {
        let tb = &self.scheme.tableau;
        let diag = (0..tb.q).map(|j| tb.a[j][j].abs()).fold(tb.b[tb.q].abs(), |m, v| m.max(v));
        let k = (h * self.problem.driver.lipschitz * diag).as_f64();
        if k >= 0.9 {
            return Err(SolverError::Contraction(k));
        }
        Ok(())
    }

    /// One backward transition from `(Y_{i+1}, Z_{i+1})` at `t_{i+1}` to `t_{i+1} - h`.
    pub fn step(
        &self,
        y_next: &GridFunction<T>,
        z_next: &GridFunction<T>,
        h: T,
        zeta: &Perturbation<T>,
    ) -> Result<(GridFunction<T>, GridFunction<T>), SolverError> {
        self.check_contraction(h)?;
        let tb = &self.scheme.tableau;
        let q = tb.q;
        let t1 = y_next.t;
        let mut f: Vec<GridFunction<T>> = Vec::with_capacity(q);
        f.push(self.driver_on_grid(t1, y_next, z_next));
        for j in 1..=q {
            let last = j == q;
            let cj = tb.c[j];
            let tj = if last { t1 - h } else { t1 - cj * h };
            let span = cj * h;
            let mut z = self.hce(y_next, self.scheme.psi_for(j), tj, span)?;
            let mut y = self.ce(y_next, tj, span)?;
            for (k, fk) in f.iter().enumerate() {
                let (wy, wz) = if last { (tb.b[k], tb.beta_t(k)) } else { (tb.a[j][k], tb.alpha_t(j, k)) };
                let sub = (cj - tb.c[k]) * h;
                if wz != T::zero() {
                    z = z.axpy(h * wz, &self.hce(fk, self.scheme.phi_for(j), tj, sub)?);
                }
                if wy != T::zero() {
                    y = y.axpy(h * wy, &self.ce(fk, tj, sub)?);
                }
            }
            if last {
                if let Some(zz) = &zeta.z {
                    z = z.axpy(T::one(), &self.ce(zz, tj, h)?);
                }
                if let Some(zy) = &zeta.y {
                    y = y.axpy(T::one(), &self.ce(zy, tj, h)?);
                }
            }
            let diag = if last { tb.b[q] } else { tb.a[j][j] };
            let y = self.implicit(y, h * diag, &z)?;
            if !y.all_finite() || !z.all_finite() {
                return Err(SolverError::NonFinite(tj.as_f64()));
            }
            if last {
                return Ok((y, z));
            }
            f.push(self.driver_on_grid(tj, &y, &z));
        }
        unreachable!("the loop returns at the final stage")
    }

    pub fn terminal(&self) -> (GridFunction<T>, GridFunction<T>) {
        let t = self.problem.horizon;
        let sigma = self.problem.forward.sigma;
        let y = GridFunction::sample(t, &self.grid, |x| self.problem.g(x));
        let z = GridFunction::sample(t, &self.grid, |x| sigma * self.problem.gx(x));
        (y, z)
    }

    pub fn solve(&self, partition: &Partition<T>) -> Result<Trajectory<T>, SolverError> {
        self.solve_perturbed(partition, |_, _, _| Ok(Perturbation::default()))
    }

    /// Solve with perturbations `zeta(i, t_{i+1}, h_i)` in step `i`.
    pub fn solve_perturbed(
        &self,
        partition: &Partition<T>,
        zeta: impl Fn(usize, T, T) -> Result<Perturbation<T>, SolverError>,
    ) -> Result<Trajectory<T>, SolverError> {
        let horizon = partition.horizon();
        if (horizon - self.problem.horizon).abs().as_f64() > 1e-12 * horizon.as_f64().abs().max(1.0) {
            return Err(SolverError::Partition(format!("partition ends at {horizon}, problem horizon is {}", self.problem.horizon)));
        }
        let n = partition.n();
        let (yn, zn) = self.terminal();
        let mut ys = vec![yn];
        let mut zs = vec![zn];
        for i in (0..n).rev() {
            let h = partition.steps[i];
            let (yp, zp) = (ys.last().expect("nonempty"), zs.last().expect("nonempty"));
            let (y, z) = self.step(yp, zp, h, &zeta(i, partition.times[i + 1], h)?)?;
            let ti = partition.times[i];
            ys.push(y.with_time(ti));
            zs.push(z.with_time(ti));
        }
        ys.reverse();
        zs.reverse();
        Ok(Trajectory { partition: partition.clone(), y: ys, z: zs, diagnostics: self.diagnostics() })
    }

    /// Exact `(u, σ u_x)` on the grid at time `t`.
    pub fn exact_on_grid(&self, t: T) -> Result<(GridFunction<T>, GridFunction<T>), SolverError> {
        let mut y = Vec::with_capacity(self.grid.n);
        let mut z = Vec::with_capacity(self.grid.n);
        for x in self.grid.nodes() {
            let (a, b) = self.problem.exact_yz(t, x)?;
            y.push(a);
            z.push(b);
        }
        Ok((GridFunction { t, grid: self.grid.clone(), values: y }, GridFunction { t, grid: self.grid.clone(), values: z }))
    }

    /// `(Ŷ, Ẑ)` at `t_i`: one step from the exact solution at `t_i + h`.
    pub fn one_step_hat(&self, t_i: T, h: T) -> Result<(GridFunction<T>, GridFunction<T>), SolverError> {
        let (y, z) = self.exact_on_grid(t_i + h)?;
        self.step(&y, &z, h, &Perturbation::default())
    }
}

pub fn step<T: Real>(
    scheme: &SchemeSpec<T>,
    problem: &Problem<T>,
    y_next: &GridFunction<T>,
    z_next: &GridFunction<T>,
    h: T,
    zeta: &Perturbation<T>,
    config: &SolverConfig,
) -> Result<(GridFunction<T>, GridFunction<T>), SolverError> {
    Engine::new(scheme, problem, config)?.step(y_next, z_next, h, zeta)
}

pub fn solve<T: Real>(scheme: &SchemeSpec<T>, problem: &Problem<T>, partition: &Partition<T>, config: &SolverConfig) -> Result<Trajectory<T>, SolverError> {
    Engine::new(scheme, problem, config)?.solve(partition)
}

pub fn one_step_hat<T: Real>(
    scheme: &SchemeSpec<T>,
    problem: &Problem<T>,
    t_i: T,
    h: T,
    config: &SolverConfig,
) -> Result<(GridFunction<T>, GridFunction<T>), SolverError> {
    Engine::new(scheme, problem, config)?.one_step_hat(t_i, h)
}
