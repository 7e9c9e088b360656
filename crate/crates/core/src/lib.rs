//! Runge–Kutta schemes for decoupled forward–backward SDEs on linear-Gaussian
//! forward models.
//!
//! Conditional expectations are evaluated on a spatial grid against the exact
//! Gaussian transition, so scheme errors can be measured without Monte Carlo
//! noise. The coefficient algebra ([`tableau`], [`psi`]) is generic over any
//! [`scalar::Scalar`], including exact rationals; the solver and studies need
//! a [`scalar::Real`] (`f32` or `f64`).

pub mod analysis;
pub mod hcoef;
pub mod model;
pub mod numerics;
pub mod psi;
pub mod scalar;
pub mod smooth;
pub mod solver;
pub mod suite;
pub mod tableau;

pub use num_rational::Rational64;

pub use analysis::{AnalysisError, Band, StudyReport};
pub use model::{ForwardModel, Problem};
pub use psi::PsiFunction;
pub use scalar::{Real, Scalar};
pub use solver::{Engine, Partition, SchemeSpec, SolverConfig, SolverError, Trajectory};
pub use tableau::{ConditionReport, Tableau, TableauError};

pub type Tableau64 = Tableau<f64>;
pub type TableauQ = Tableau<Rational64>;
pub type Psi64 = PsiFunction<f64>;
pub type PsiQ = PsiFunction<Rational64>;
pub type Problem64 = Problem<f64>;
pub type SchemeSpec64 = SchemeSpec<f64>;
pub type Trajectory64 = Trajectory<f64>;
pub type GridFunction64 = numerics::GridFunction<f64>;
pub type ForwardModel64 = ForwardModel<f64>;
