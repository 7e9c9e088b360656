//! Closed-form smooth functions of `(t, x)` with exact derivatives.
//!
//! A [`SmoothFn`] is a finite sum of terms
//! `P(t, x) · exp(λt + μx) · trig(ωx + νt + φ)` with `P` a bivariate
//! polynomial and `trig ∈ {1, cos, sin}`. The class is closed under `∂t`, `∂x`
//! and multiplication by `x`, so the generators of an affine-drift,
//! constant-diffusion SDE map it to itself and every iterated operator
//! `L^α v` is available exactly.

use std::collections::BTreeMap;

use crate::model::ForwardModel;
use crate::scalar::Real;

/// Bivariate polynomial `Σ c_{ij} t^i x^j`.
#[derive(Clone, Debug, PartialEq)]
pub struct BiPoly<T> {
    pub coeffs: BTreeMap<(u32, u32), T>,
}

impl<T: Real> BiPoly<T> {
    pub fn zero() -> Self {
        BiPoly { coeffs: BTreeMap::new() }
    }

    pub fn constant(c: T) -> Self {
        Self::monomial(c, 0, 0)
    }

    pub fn monomial(c: T, i: u32, j: u32) -> Self {
        let mut p = Self::zero();
        if c != T::zero() {
            p.coeffs.insert((i, j), c);
        }
        p
    }

    pub fn is_zero(&self) -> bool {
        self.coeffs.is_empty()
    }

    fn add_term(&mut self, key: (u32, u32), c: T) {
        let e = self.coeffs.entry(key).or_insert_with(T::zero);
        *e = *e + c;
        if *e == T::zero() {
            self.coeffs.remove(&key);
        }
    }

    pub fn add(&self, other: &Self) -> Self {
        let mut out = self.clone();
        for (&k, &c) in &other.coeffs {
            out.add_term(k, c);
        }
        out
    }

    pub fn scale(&self, s: T) -> Self {
        if s == T::zero() {
            return Self::zero();
        }
        BiPoly { coeffs: self.coeffs.iter().map(|(&k, &c)| (k, c * s)).collect() }
    }

    pub fn mul(&self, other: &Self) -> Self {
        let mut out = Self::zero();
        for (&(i, j), &a) in &self.coeffs {
            for (&(k, l), &b) in &other.coeffs {
                out.add_term((i + k, j + l), a * b);
            }
        }
        out
    }

    pub fn pow(&self, n: u32) -> Self {
        (0..n).fold(Self::constant(T::one()), |acc, _| acc.mul(self))
    }

    pub fn dt(&self) -> Self {
        let mut out = Self::zero();
        for (&(i, j), &c) in &self.coeffs {
            if i > 0 {
                out.add_term((i - 1, j), c * T::int(i as i64));
            }
        }
        out
    }

    pub fn dx(&self) -> Self {
        let mut out = Self::zero();
        for (&(i, j), &c) in &self.coeffs {
            if j > 0 {
                out.add_term((i, j - 1), c * T::int(j as i64));
            }
        }
        out
    }

    pub fn eval(&self, t: T, x: T) -> T {
        self.coeffs
            .iter()
            .fold(T::zero(), |acc, (&(i, j), &c)| acc + c * t.powi(i as i32) * x.powi(j as i32))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub enum Trig {
    One,
    Cos,
    Sin,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Term<T> {
    pub poly: BiPoly<T>,
    /// `exp(lam t + mu x)`.
    pub lam: T,
    pub mu: T,
    /// `trig(omega x + nu t + phase)`.
    pub omega: T,
    pub nu: T,
    pub phase: T,
    pub trig: Trig,
}

impl<T: Real> Term<T> {
    fn same_shape(&self, o: &Self) -> bool {
        self.trig == o.trig
            && self.lam == o.lam
            && self.mu == o.mu
            && (self.trig == Trig::One || (self.omega == o.omega && self.nu == o.nu && self.phase == o.phase))
    }

    fn with(&self, poly: BiPoly<T>, trig: Trig) -> Self {
        Term { poly, trig, ..self.clone() }
    }

    /// Derivative along a direction with exponential rate `e`, phase rate `w`
    /// and polynomial derivative `dp`.
    fn derive(&self, e: T, w: T, dp: BiPoly<T>) -> Vec<Term<T>> {
        let main = dp.add(&self.poly.scale(e));
        match self.trig {
            Trig::One => vec![self.with(main, Trig::One)],
            Trig::Cos => vec![self.with(main, Trig::Cos), self.with(self.poly.scale(-w), Trig::Sin)],
            Trig::Sin => vec![self.with(main, Trig::Sin), self.with(self.poly.scale(w), Trig::Cos)],
        }
    }

    fn eval(&self, t: T, x: T) -> T {
        let p = self.poly.eval(t, x);
        if p == T::zero() {
            return T::zero();
        }
        let e = if self.lam == T::zero() && self.mu == T::zero() {
            T::one()
        } else {
            (self.lam * t + self.mu * x).exp()
        };
        let arg = self.omega * x + self.nu * t + self.phase;
        let g = match self.trig {
            Trig::One => T::one(),
            Trig::Cos => arg.cos(),
            Trig::Sin => arg.sin(),
        };
        p * e * g
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SmoothFn<T> {
    pub terms: Vec<Term<T>>,
}

impl<T: Real> SmoothFn<T> {
    pub fn zero() -> Self {
        SmoothFn { terms: Vec::new() }
    }

    pub fn poly(p: BiPoly<T>) -> Self {
        Self::from_terms(vec![Term {
            poly: p,
            lam: T::zero(),
            mu: T::zero(),
            omega: T::zero(),
            nu: T::zero(),
            phase: T::zero(),
            trig: Trig::One,
        }])
    }

    /// `amp · exp(lam t + mu x)`.
    pub fn exp(amp: T, lam: T, mu: T) -> Self {
        Self::from_terms(vec![Term {
            poly: BiPoly::constant(amp),
            lam,
            mu,
            omega: T::zero(),
            nu: T::zero(),
            phase: T::zero(),
            trig: Trig::One,
        }])
    }

    /// `amp · exp(lam t) · sin(omega x + nu t + phase)`.
    pub fn sin(amp: T, lam: T, omega: T, nu: T, phase: T) -> Self {
        Self::from_terms(vec![Term { poly: BiPoly::constant(amp), lam, mu: T::zero(), omega, nu, phase, trig: Trig::Sin }])
    }

    fn from_terms(terms: Vec<Term<T>>) -> Self {
        let mut out: Vec<Term<T>> = Vec::new();
        for t in terms {
            if t.poly.is_zero() {
                continue;
            }
            if let Some(existing) = out.iter_mut().find(|e| e.same_shape(&t)) {
                existing.poly = existing.poly.add(&t.poly);
            } else {
                out.push(t);
            }
        }
        out.retain(|t| !t.poly.is_zero());
        SmoothFn { terms: out }
    }

    pub fn add(&self, o: &Self) -> Self {
        Self::from_terms(self.terms.iter().chain(o.terms.iter()).cloned().collect())
    }

    pub fn scale(&self, s: T) -> Self {
        Self::from_terms(self.terms.iter().map(|t| t.with(t.poly.scale(s), t.trig)).collect())
    }

    /// Multiplication by the polynomial `p(t, x)`.
    pub fn mul_poly(&self, p: &BiPoly<T>) -> Self {
        Self::from_terms(self.terms.iter().map(|t| t.with(t.poly.mul(p), t.trig)).collect())
    }

    pub fn dt(&self) -> Self {
        Self::from_terms(self.terms.iter().flat_map(|t| t.derive(t.lam, t.nu, t.poly.dt())).collect())
    }

    pub fn dx(&self) -> Self {
        Self::from_terms(self.terms.iter().flat_map(|t| t.derive(t.mu, t.omega, t.poly.dx())).collect())
    }

    pub fn eval(&self, t: T, x: T) -> T {
        self.terms.iter().fold(T::zero(), |acc, term| acc + term.eval(t, x))
    }

    /// `L⁰ v = v_t + (a0 + a1 x) v_x + σ²/2 v_xx`.
    pub fn l0(&self, m: &ForwardModel<T>) -> Self {
        let vx = self.dx();
        let drift = BiPoly::constant(m.a0).add(&BiPoly::monomial(m.a1, 0, 1));
        self.dt().add(&vx.mul_poly(&drift)).add(&vx.dx().scale(m.sigma * m.sigma / T::int(2)))
    }

    /// `L¹ v = σ v_x`.
    pub fn l1(&self, m: &ForwardModel<T>) -> Self {
        self.dx().scale(m.sigma)
    }

    /// `v^{(j1, ..., jl)} = L^{j1} L^{j2} ... L^{jl} v` (the last index acts first).
    pub fn multi_index(&self, alpha: &[u8], m: &ForwardModel<T>) -> Self {
        alpha.iter().rev().fold(self.clone(), |v, &j| if j == 0 { v.l0(m) } else { v.l1(m) })
    }
}
