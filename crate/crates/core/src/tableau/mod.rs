//! Extended Butcher tableaux `(c, a, α, b, β)` for the BSDE Runge–Kutta family.
//!
//! Indices are 0-based in storage; condition names and diagnostics use the
//! 1-based stage numbering of the usual tableau notation.

mod barrier;
mod conditions;
mod constructors;

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scalar::Scalar;

pub use barrier::{
    alpha32_from_z_conditions, order4_barrier_certificate, random_order4_search, BarrierCertificate,
    RandomSearchSummary, SpotCheck,
};
pub use conditions::{classify_order, ode_order4_residuals, order_conditions, Condition, ConditionReport};

/// Tolerance for row sums and order-condition residuals.
pub const RESIDUAL_TOL: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TableauError {
    #[error("no order-{target} condition system for this tableau ({q} stages): {reason}")]
    Unsupported { target: u8, q: usize, reason: String },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("invalid tableau: {}", .0.join("; "))]
    Invalid(Vec<String>),
    #[error("unknown tableau `{0}`")]
    UnknownName(String),
}

/// Marks the entries a tableau leaves arbitrary (`*`).
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FreeMask {
    pub a: Vec<Vec<bool>>,
    pub alpha: Vec<Vec<bool>>,
    pub b: Vec<bool>,
    pub beta: Vec<bool>,
}

impl FreeMask {
    pub fn none(q: usize) -> Self {
        FreeMask {
            a: vec![vec![false; q]; q],
            alpha: vec![vec![false; q]; q],
            b: vec![false; q + 1],
            beta: vec![false; q],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Tableau<S> {
    pub q: usize,
    /// Abscissae, length `q + 1`.
    pub c: Vec<S>,
    /// Y-stage weights, `q × q` lower triangular (diagonal allowed).
    pub a: Vec<Vec<S>>,
    /// Z-stage weights, `q × q` strictly lower triangular.
    pub alpha: Vec<Vec<S>>,
    /// Final Y weights, length `q + 1`; a nonzero last entry makes the final stage implicit.
    pub b: Vec<S>,
    /// Final Z weights, length `q`.
    pub beta: Vec<S>,
    #[serde(rename = "free_mask")]
    pub free: FreeMask,
}

/// Result of [`Tableau::validate`]: the list of violated structural invariants.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize)]
pub struct ValidationOutcome {
    pub violations: Vec<String>,
}

impl ValidationOutcome {
    pub fn is_ok(&self) -> bool {
        self.violations.is_empty()
    }
}

fn close<S: Scalar>(x: S, y: S) -> bool {
    (x - y).magnitude().as_f64() <= RESIDUAL_TOL
}

impl<S: Scalar> Tableau<S> {
    /// A tableau with all weights zero and the given abscissae.
    pub fn zeros(c: Vec<S>) -> Self {
        let q = c.len().saturating_sub(1);
        Tableau {
            q,
            c,
            a: vec![vec![S::zero(); q]; q],
            alpha: vec![vec![S::zero(); q]; q],
            b: vec![S::zero(); q + 1],
            beta: vec![S::zero(); q],
            free: FreeMask::none(q),
        }
    }

    /// `α̃_{jk}` (0-based): `α_{jk}` if `c_k < c_j`, else 0.
    pub fn alpha_t(&self, j: usize, k: usize) -> S {
        if self.c[k] < self.c[j] {
            self.alpha[j][k]
        } else {
            S::zero()
        }
    }

    /// `β̃_j` (0-based): `β_j` if `c_j < 1`, else 0.
    pub fn beta_t(&self, j: usize) -> S {
        if self.c[j] < S::one() {
            self.beta[j]
        } else {
            S::zero()
        }
    }

    /// Copy with the tilde masks applied to `alpha` and `beta`.
    pub fn masked(&self) -> Self {
        let mut t = self.clone();
        for j in 0..self.q {
            for k in 0..self.q {
                t.alpha[j][k] = self.alpha_t(j, k);
            }
            t.beta[j] = self.beta_t(j);
        }
        t
    }

    pub fn is_implicit(&self) -> bool {
        (0..self.q).any(|j| self.a[j][j] != S::zero()) || self.b[self.q] != S::zero()
    }

    pub fn validate(&self) -> ValidationOutcome {
        let mut v = Vec::new();
        let q = self.q;
        if q < 1 {
            v.push("shape: q must be at least 1".to_string());
            return ValidationOutcome { violations: v };
        }
        let square = |m: &Vec<Vec<S>>| m.len() == q && m.iter().all(|r| r.len() == q);
        if self.c.len() != q + 1 {
            v.push(format!("shape: c has length {}, expected {}", self.c.len(), q + 1));
        }
        if !square(&self.a) {
            v.push(format!("shape: a must be {q}x{q}"));
        }
        if !square(&self.alpha) {
            v.push(format!("shape: alpha must be {q}x{q}"));
        }
        if self.b.len() != q + 1 {
            v.push(format!("shape: b has length {}, expected {}", self.b.len(), q + 1));
        }
        if self.beta.len() != q {
            v.push(format!("shape: beta has length {}, expected {q}", self.beta.len()));
        }
        if !v.is_empty() {
            return ValidationOutcome { violations: v };
        }

        if self.c[0] != S::zero() {
            v.push(format!("c ordering: c1 = {} must be 0", self.c[0]));
        }
        if self.c[q] != S::one() {
            v.push(format!("c ordering: c{} = {} must be 1", q + 1, self.c[q]));
        }
        if self.c[1] <= S::zero() {
            v.push(format!("c ordering: c2 = {} must be positive", self.c[1]));
        }
        for j in 1..=q {
            if self.c[j] < self.c[j - 1] {
                v.push(format!("c ordering: c{} < c{}", j + 1, j));
            }
        }
        for j in 0..=q {
            if self.c[j] < S::zero() || self.c[j] > S::one() {
                v.push(format!("c ordering: c{} = {} outside [0, 1]", j + 1, self.c[j]));
            }
        }

        for j in 0..q {
            for k in (j + 1)..q {
                if self.a[j][k] != S::zero() {
                    v.push(format!("shape: a{}{} above the diagonal", j + 1, k + 1));
                }
            }
            for k in j..q {
                if self.alpha[j][k] != S::zero() && !self.free.alpha[j][k] {
                    v.push(format!("shape: alpha{}{} on or above the diagonal", j + 1, k + 1));
                }
            }
        }
        if self.a[0][0] != S::zero() {
            v.push("shape: a11 must be 0".to_string());
        }

        for j in 0..q {
            let sa = self.a[j].iter().fold(S::zero(), |s, &x| s + x);
            if !close(sa, self.c[j]) {
                v.push(format!("row-sum stage {}: sum of a = {}, c = {}", j + 1, sa, self.c[j]));
            }
            let sal = (0..j).fold(S::zero(), |s, k| s + self.alpha_t(j, k));
            if !close(sal, self.c[j]) {
                v.push(format!(
                    "row-sum stage {} (alpha): masked sum = {}, c = {}",
                    j + 1,
                    sal,
                    self.c[j]
                ));
            }
        }
        ValidationOutcome { violations: v }
    }

    pub fn to_f64(&self) -> Tableau<f64> {
        let row = |r: &Vec<S>| r.iter().map(|x| x.as_f64()).collect::<Vec<_>>();
        Tableau {
            q: self.q,
            c: row(&self.c),
            a: self.a.iter().map(row).collect(),
            alpha: self.alpha.iter().map(row).collect(),
            b: row(&self.b),
            beta: row(&self.beta),
            free: self.free.clone(),
        }
    }
}

impl<S: Scalar> fmt::Display for Tableau<S> {
    /// Plain-text layout `c_j | a_j. | α_j.` with a final `1 | b | β` row; free entries print as `*`.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let q = self.q;
        let cell = |x: S, free: bool| if free { "*".to_string() } else { format!("{x}") };
        let mut rows: Vec<Vec<String>> = Vec::new();
        for j in 0..q {
            let mut r = vec![format!("{}", self.c[j]), "|".into()];
            for k in 0..=q {
                r.push(if k < q { cell(self.a[j][k], self.free.a[j][k]) } else { "0".into() });
            }
            r.push("|".into());
            for k in 0..q {
                r.push(cell(self.alpha[j][k], self.free.alpha[j][k]));
            }
            rows.push(r);
        }
        let mut last = vec![format!("{}", self.c[q]), "|".into()];
        for j in 0..=q {
            last.push(cell(self.b[j], self.free.b[j]));
        }
        last.push("|".into());
        for j in 0..q {
            last.push(cell(self.beta[j], self.free.beta[j]));
        }
        let ncol = rows.iter().chain(std::iter::once(&last)).map(|r| r.len()).max().unwrap_or(0);
        let mut width = vec![0; ncol];
        for r in rows.iter().chain(std::iter::once(&last)) {
            for (i, s) in r.iter().enumerate() {
                width[i] = width[i].max(s.len());
            }
        }
        let line = |r: &Vec<String>| {
            r.iter()
                .enumerate()
                .map(|(i, s)| format!("{s:>w$}", w = width[i]))
                .collect::<Vec<_>>()
                .join(" ")
        };
        for r in &rows {
            writeln!(f, "{}", line(r))?;
        }
        let total: usize = width.iter().sum::<usize>() + ncol.saturating_sub(1);
        writeln!(f, "{}", "-".repeat(total))?;
        write!(f, "{}", line(&last))
    }
}

pub use constructors::{
    crank_nicholson, explicit_euler, four_stage_three_eighths, implicit_euler, named, three_stage,
    two_stage_explicit, two_stage_implicit_o3, NAMED_TABLEAUX,
};
