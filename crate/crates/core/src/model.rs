//! FBSDE problem instances on linear-Gaussian forward models.
//!
//! The forward SDE is `dX = (a0 + a1 X) dt + σ dW` in one dimension. Drivers
//! take `(t, x, y, z)`. Manufactured problems carry their exact solution `u`
//! as a [`SmoothFn`], so `Y_t = u(t, X_t)`, `Z_t = σ u_x(t, X_t)` and every
//! iterated generator `L^α u` are available in closed form.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scalar::Real;
use crate::smooth::{BiPoly, SmoothFn};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("problem `{0}` has no exact solution")]
    MissingExact(String),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("unknown problem `{0}`")]
    UnknownName(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ForwardModel<T> {
    pub a0: T,
    pub a1: T,
    pub sigma: T,
    pub x0: T,
}

/// Exact transition over a span `δ`: `X_{s+δ} = a X_s + m + N`, `Var N = v`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Transition<T> {
    pub a: T,
    pub m: T,
    pub v: T,
}

/// `(e^z - 1) / z`, continuous at 0.
pub fn exprel<T: Real>(z: T) -> T {
    if z.abs() < T::lit(1e-6) {
        // Six terms of Σ z^k / (k+1)!.
        (1..6).rev().fold(T::one(), |acc, k| T::one() + acc * z / T::int(k + 1))
    } else {
        z.exp_m1() / z
    }
}

impl<T: Real> ForwardModel<T> {
    pub fn brownian(mu: T, sigma: T, x0: T) -> Self {
        ForwardModel { a0: mu, a1: T::zero(), sigma, x0 }
    }

    pub fn transition(&self, delta: T) -> Transition<T> {
        if delta == T::zero() {
            return Transition { a: T::one(), m: T::zero(), v: T::zero() };
        }
        let z = self.a1 * delta;
        Transition {
            a: z.exp(),
            m: self.a0 * delta * exprel(z),
            v: self.sigma * self.sigma * delta * exprel(z + z),
        }
    }

    /// Mean and variance of `X_t` started from `x0` at time 0.
    pub fn marginal(&self, t: T) -> (T, T) {
        let tr = self.transition(t);
        (tr.a * self.x0 + tr.m, tr.v)
    }

    /// Zero drift slope: the generators commute.
    pub fn is_commuting(&self) -> bool {
        self.a1 == T::zero()
    }
}

pub type DriverFn<T> = Arc<dyn Fn(T, T, T, T) -> T + Send + Sync>;

/// Driver `f(t, x, y, z)` with a Lipschitz estimate and dependence flags.
#[derive(Clone)]
pub struct Driver<T> {
    pub f: DriverFn<T>,
    pub lipschitz: T,
    pub fy_zero: bool,
    pub fz_zero: bool,
}

impl<T: Real> Driver<T> {
    pub fn eval(&self, t: T, x: T, y: T, z: T) -> T {
        (self.f)(t, x, y, z)
    }

    pub fn zero() -> Self {
        Driver { f: Arc::new(|_, _, _, _| T::zero()), lipschitz: T::zero(), fy_zero: true, fz_zero: true }
    }
}

impl<T> fmt::Debug for Driver<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Driver").field("fy_zero", &self.fy_zero).field("fz_zero", &self.fz_zero).finish()
    }
}

/// `u` and `u_x` with access to `L^α u`.
#[derive(Clone, Debug)]
pub struct ExactSolution<T> {
    pub u: SmoothFn<T>,
    pub ux: SmoothFn<T>,
}

impl<T: Real> ExactSolution<T> {
    pub fn new(u: SmoothFn<T>) -> Self {
        let ux = u.dx();
        ExactSolution { u, ux }
    }

    pub fn multi_index(&self, alpha: &[u8], m: &ForwardModel<T>) -> SmoothFn<T> {
        self.u.multi_index(alpha, m)
    }
}

#[derive(Clone, Debug)]
pub struct Problem<T> {
    pub name: String,
    pub forward: ForwardModel<T>,
    pub driver: Driver<T>,
    pub horizon: T,
    pub terminal: Arc<Terminal<T>>,
    pub exact: Option<ExactSolution<T>>,
}

/// Terminal data `g` and `g_x`.
pub enum Terminal<T> {
    Smooth { g: SmoothFn<T>, gx: SmoothFn<T>, horizon: T },
    Closure { g: Arc<dyn Fn(T) -> T + Send + Sync>, gx: Arc<dyn Fn(T) -> T + Send + Sync> },
}

impl<T: fmt::Debug> fmt::Debug for Terminal<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Terminal::Smooth { .. } => f.write_str("Smooth"),
            Terminal::Closure { .. } => f.write_str("Closure"),
        }
    }
}

impl<T: Real> Terminal<T> {
    pub fn g(&self, x: T) -> T {
        match self {
            Terminal::Smooth { g, horizon, .. } => g.eval(*horizon, x),
            Terminal::Closure { g, .. } => g(x),
        }
    }

    pub fn gx(&self, x: T) -> T {
        match self {
            Terminal::Smooth { gx, horizon, .. } => gx.eval(*horizon, x),
            Terminal::Closure { gx, .. } => gx(x),
        }
    }
}

impl<T: Real> Problem<T> {
    fn manufactured(name: &str, forward: ForwardModel<T>, driver: Driver<T>, horizon: T, u: SmoothFn<T>) -> Self {
        let exact = ExactSolution::new(u);
        let g = Terminal::Smooth { g: exact.u.clone(), gx: exact.ux.clone(), horizon };
        Problem { name: name.to_string(), forward, driver, horizon, terminal: Arc::new(g), exact: Some(exact) }
    }

    pub fn g(&self, x: T) -> T {
        self.terminal.g(x)
    }

    pub fn gx(&self, x: T) -> T {
        self.terminal.gx(x)
    }

    /// `(u(t, x), σ u_x(t, x))`.
    pub fn exact_yz(&self, t: T, x: T) -> Result<(T, T), ModelError> {
        let e = self.exact.as_ref().ok_or_else(|| ModelError::MissingExact(self.name.clone()))?;
        Ok((e.u.eval(t, x), e.ux.eval(t, x) * self.forward.sigma))
    }

    /// `L⁰u + f(t, x, u, σ u_x)` at `(t, x)`; zero for an exact solution.
    pub fn pde_residual(&self, t: T, x: T) -> Result<T, ModelError> {
        let e = self.exact.as_ref().ok_or_else(|| ModelError::MissingExact(self.name.clone()))?;
        let (y, z) = self.exact_yz(t, x)?;
        Ok(e.u.l0(&self.forward).eval(t, x) + self.driver.eval(t, x, y, z))
    }
}

/// `X = W` on `[0, T]`, `u(t, x) = sin(x + T - t)`, `f = z + y/2`.
pub fn brownian_sine<T: Real>(horizon: T) -> Problem<T> {
    let half = T::ratio(1, 2);
    let driver = Driver {
        f: Arc::new(move |_, _, y, z| z + y * half),
        lipschitz: T::ratio(3, 2),
        fy_zero: false,
        fz_zero: false,
    };
    let u = SmoothFn::sin(T::one(), T::zero(), T::one(), -T::one(), horizon);
    Problem::manufactured("brownian_sine", ForwardModel::brownian(T::zero(), T::one(), T::zero()), driver, horizon, u)
}

/// `X = W`, `u(t, x) = exp(x + t - T)`, `f = -3y/2` (no `z` dependence).
pub fn brownian_fzero<T: Real>(horizon: T) -> Problem<T> {
    let k = T::ratio(3, 2);
    let driver = Driver { f: Arc::new(move |_, _, y, _| -k * y), lipschitz: k, fy_zero: false, fz_zero: true };
    let u = SmoothFn::exp((-horizon).exp(), T::one(), T::one());
    Problem::manufactured("brownian_fzero", ForwardModel::brownian(T::zero(), T::one(), T::zero()), driver, horizon, u)
}

/// Ornstein–Uhlenbeck forward `dX = -κX dt + σ dW` with
/// `u(t, x) = sin(x) exp(-(T - t))` and
/// `f = -L⁰u + κ_y (y - u) + κ_z (z - σ u_x)`.
pub fn ou_manufactured<T: Real>(kappa: T, kappa_y: T, kappa_z: T, sigma: T, horizon: T) -> Result<Problem<T>, ModelError> {
    if kappa <= T::zero() {
        return Err(ModelError::InvalidParameter(format!("ou_manufactured needs kappa > 0, got {kappa:?}")));
    }
    if sigma <= T::zero() {
        return Err(ModelError::InvalidParameter(format!("ou_manufactured needs sigma > 0, got {sigma:?}")));
    }
    let forward = ForwardModel { a0: T::zero(), a1: -kappa, sigma, x0: T::zero() };
    let u = SmoothFn::sin((-horizon).exp(), T::one(), T::one(), T::zero(), T::zero());
    let l0u = u.l0(&forward);
    let (uu, ux) = (u.clone(), u.dx());
    let driver = Driver {
        f: Arc::new(move |t, x, y, z| -l0u.eval(t, x) + kappa_y * (y - uu.eval(t, x)) + kappa_z * (z - sigma * ux.eval(t, x))),
        lipschitz: kappa_y.abs() + kappa_z.abs(),
        fy_zero: kappa_y == T::zero(),
        fz_zero: kappa_z == T::zero(),
    };
    Ok(Problem::manufactured("ou_manufactured", forward, driver, horizon, u))
}

/// `f ≡ 0` with polynomial terminal `g(x) = Σ g_k x^k` under `dX = μ dt + σ dW`;
/// `u(t, x) = E[g(x + μτ + σ√τ N)]`, `τ = T - t`, is a polynomial in `(t, x)`.
pub fn polynomial_martingale<T: Real>(g: &[T], mu: T, sigma: T, horizon: T) -> Problem<T> {
    // tau = T - t and a = x + mu tau as bivariate polynomials.
    let tau = BiPoly::constant(horizon).add(&BiPoly::monomial(-T::one(), 1, 0));
    let a = BiPoly::monomial(T::one(), 0, 1).add(&tau.scale(mu));
    let mut u = BiPoly::zero();
    for (k, &gk) in g.iter().enumerate() {
        // E[(a + s N)^k] = Σ_{j even} C(k, j) (j-1)!! s^j a^{k-j}, s² = σ² τ.
        for j in (0..=k).step_by(2) {
            let binom = (0..j).fold(1.0, |acc, i| acc * (k - i) as f64 / (i + 1) as f64);
            let dfact = (1..j).step_by(2).fold(1.0, |acc, i| acc * i as f64);
            let coef = gk * T::lit(binom * dfact) * sigma.powi(j as i32);
            u = u.add(&tau.pow((j / 2) as u32).mul(&a.pow((k - j) as u32)).scale(coef));
        }
    }
    Problem::manufactured(
        "polynomial_martingale",
        ForwardModel::brownian(mu, sigma, T::zero()),
        Driver::zero(),
        horizon,
        SmoothFn::poly(u),
    )
}

/// Problem names understood by [`by_name`].
pub const NAMED_PROBLEMS: &[&str] = &["brownian_sine", "brownian_fzero", "ou_manufactured", "polynomial_martingale"];

/// Parameters accepted by [`by_name`]; unset fields take the documented defaults.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemParams {
    /// Horizon `T` (default 1).
    pub horizon: Option<f64>,
    /// OU mean reversion (default 1).
    pub kappa: Option<f64>,
    /// OU driver coefficients (defaults 0.5 and 0.5).
    pub kappa_y: Option<f64>,
    pub kappa_z: Option<f64>,
    /// Diffusion for OU and the polynomial problem (default 1).
    pub sigma: Option<f64>,
    /// Drift for the polynomial problem (default 0.3).
    pub mu: Option<f64>,
    /// Terminal polynomial coefficients for the polynomial problem (default `[0.5, -1, 0.25, 0.2]`).
    pub g: Option<Vec<f64>>,
}

pub fn by_name<T: Real>(name: &str, p: &ProblemParams) -> Result<Problem<T>, ModelError> {
    let horizon = T::lit(p.horizon.unwrap_or(1.0));
    if horizon <= T::zero() {
        return Err(ModelError::InvalidParameter("horizon must be positive".into()));
    }
    let lit = |x: Option<f64>, d: f64| T::lit(x.unwrap_or(d));
    match name {
        "brownian_sine" => Ok(brownian_sine(horizon)),
        "brownian_fzero" => Ok(brownian_fzero(horizon)),
        "ou_manufactured" => ou_manufactured(
            lit(p.kappa, 1.0),
            lit(p.kappa_y, 0.5),
            lit(p.kappa_z, 0.5),
            lit(p.sigma, 1.0),
            horizon,
        ),
        "polynomial_martingale" => {
            let g: Vec<T> = p.g.clone().unwrap_or_else(|| vec![0.5, -1.0, 0.25, 0.2]).into_iter().map(T::lit).collect();
            if g.len() > 4 {
                return Err(ModelError::InvalidParameter("polynomial terminal degree must be at most 3".into()));
            }
            Ok(polynomial_martingale(&g, lit(p.mu, 0.3), lit(p.sigma, 1.0), horizon))
        }
        _ => Err(ModelError::UnknownName(name.to_string())),
    }
}
