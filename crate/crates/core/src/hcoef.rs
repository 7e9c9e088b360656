//! Endpoint projections of weight functionals `H = ∫ψ dW` against the exact
//! transition of the forward process.

use thiserror::Error;

use crate::model::{exprel, ForwardModel};
use crate::numerics::{conditional_expectation, Grid, GridFunction, QuadratureRule};
use crate::psi::PsiFunction;
use crate::scalar::Real;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum HcoefError {
    #[error("span must be positive, got {0}")]
    NonPositiveSpan(f64),
    #[error("degenerate diffusion: sigma = 0")]
    Degenerate,
}

/// `H = (1/δ) ∫_s^{s+δ} ψ((u - s)/δ) dW_u` over the span `[start, start + span]`.
#[derive(Clone, Debug, PartialEq)]
pub struct HTerm<T> {
    pub psi: PsiFunction<T>,
    pub start: T,
    pub span: T,
}

/// `E[H | N] = λ N`, where `N` is the Gaussian innovation of `X` over the span.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EndpointProjection<T> {
    pub lambda: T,
    pub cov: T,
    pub var: T,
}

const GL_NODES: usize = 20;

/// `∫_lo^hi p(r) e^{κ(1-r)} dr` for one piece.
fn weighted_piece<T: Real>(coeffs: &[T], lo: T, hi: T, kappa: T) -> T {
    if coeffs.len() <= 1 {
        let c = coeffs.first().copied().unwrap_or_else(T::zero);
        let len = hi - lo;
        return c * (kappa * (T::one() - hi)).exp() * len * exprel(kappa * len);
    }
    let q = QuadratureRule::<T>::gauss_legendre(GL_NODES, lo.as_f64(), hi.as_f64());
    q.integrate(|r| {
        let p = coeffs.iter().rev().fold(T::zero(), |acc, &c| acc * r + c);
        p * (kappa * (T::one() - r)).exp()
    })
}

/// Projection coefficient `λ = Cov(H, N) / Var N` with
/// `Cov(H, N) = σ ∫_0^1 ψ(r) e^{a1 δ (1-r)} dr`.
pub fn endpoint_projection<T: Real>(model: &ForwardModel<T>, psi: &PsiFunction<T>, delta: T) -> Result<EndpointProjection<T>, HcoefError> {
    if delta.partial_cmp(&T::zero()) != Some(std::cmp::Ordering::Greater) {
        return Err(HcoefError::NonPositiveSpan(delta.as_f64()));
    }
    if model.sigma == T::zero() {
        return Err(HcoefError::Degenerate);
    }
    let kappa = model.a1 * delta;
    let integral = psi.pieces.iter().fold(T::zero(), |acc, p| acc + weighted_piece(&p.coeffs, p.lo, p.hi, kappa));
    let cov = model.sigma * integral;
    let var = model.transition(delta).v;
    Ok(EndpointProjection { lambda: cov / var, cov, var })
}

impl<T: Real> HTerm<T> {
    pub fn projection(&self, model: &ForwardModel<T>) -> Result<EndpointProjection<T>, HcoefError> {
        endpoint_projection(model, &self.psi, self.span)
    }

    /// `E[H²] · δ = ∫_0^1 ψ²`.
    pub fn scaled_energy(&self) -> T {
        h_energy(&self.psi)
    }
}

/// `δ · E[H²]`, independent of the span.
pub fn h_energy<T: Real>(psi: &PsiFunction<T>) -> T {
    psi.energy()
}

/// Largest `|E[H c | X_s = x]|` over interior nodes for a constant `c`; should vanish.
pub fn h_mean_zero_check<T: Real>(model: &ForwardModel<T>, psi: &PsiFunction<T>, grid: &Grid<T>, s: T, delta: T, quad: &QuadratureRule<T>) -> Result<T, HcoefError> {
    let proj = endpoint_projection(model, psi, delta)?;
    let gf = GridFunction::constant(s + delta, grid, T::one());
    let out = conditional_expectation(model, &gf, s, delta, Some(proj.lambda), quad).expect("time labels agree by construction");
    Ok(out.values.iter().fold(T::zero(), |acc, v| acc.max(v.abs())))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::psi::{default_bm, indicator, linear_b1, three_piece_b2, two_piece_b1};

    #[test]
    fn brownian_lambda() {
        let m = ForwardModel::brownian(0.4, 1.7, 0.0);
        for psi in [indicator::<f64>(), linear_b1(), default_bm(3)] {
            let p = endpoint_projection(&m, &psi, 0.05).unwrap();
            assert!((p.lambda - 1.0 / (1.7 * 0.05)).abs() < 1e-9);
        }
    }

    #[test]
    fn ou_indicator_closed_form() {
        let (kappa, sigma, delta) = (1.5f64, 0.8, 0.3);
        let m = ForwardModel { a0: 0.0, a1: -kappa, sigma, x0: 0.0 };
        let p = endpoint_projection(&m, &indicator(), delta).unwrap();
        let cov = sigma * (1.0 - (-kappa * delta).exp()) / (kappa * delta);
        assert!((p.cov - cov).abs() < 1e-14);
    }

    #[test]
    fn ou_linear_piece_matches_direct_integral() {
        let (kappa, sigma, delta) = (2.0f64, 1.1, 0.4);
        let m = ForwardModel { a0: 0.3, a1: -kappa, sigma, x0: 0.0 };
        let psi = linear_b1::<f64>();
        let p = endpoint_projection(&m, &psi, delta).unwrap();
        // Simpson reference with many panels.
        let n = 20_000;
        let f = |r: f64| psi.eval(r.min(1.0 - 1e-15)) * (-kappa * delta * (1.0 - r)).exp();
        let h = 1.0 / n as f64;
        let simpson: f64 = (0..n).map(|i| {
            let a = i as f64 * h;
            h / 6.0 * (f(a) + 4.0 * f(a + h / 2.0) + f(a + h))
        }).sum();
        assert!((p.cov - sigma * simpson).abs() < 1e-12);
    }

    #[test]
    fn small_kappa_series_is_continuous() {
        for z in [9.9e-7f64, -9.9e-7, 3e-9] {
            assert!((exprel(z) - z.exp_m1() / z).abs() < 1e-15);
        }
        let psi = two_piece_b1(0.3f64).unwrap();
        let a = endpoint_projection(&ForwardModel { a0: 0.0, a1: -0.999e-6, sigma: 1.0, x0: 0.0 }, &psi, 1.0).unwrap();
        let b = endpoint_projection(&ForwardModel { a0: 0.0, a1: -1.001e-6, sigma: 1.0, x0: 0.0 }, &psi, 1.0).unwrap();
        // d Cov / d kappa at 0 is ∫ψ(r)(1 - r) dr = 1 - ∫ψ(r) r dr.
        let slope = (a.cov - b.cov) / (-0.999e-6 + 1.001e-6);
        assert!((slope - (1.0 - psi.moment(1))).abs() < 1e-6);
    }

    #[test]
    fn rejects_bad_span() {
        let m = ForwardModel::brownian(0.0, 1.0, 0.0);
        assert!(endpoint_projection(&m, &indicator::<f64>(), 0.0).is_err());
        assert!(endpoint_projection(&ForwardModel::brownian(0.0, 0.0, 0.0), &indicator::<f64>(), 0.1).is_err());
    }

    #[test]
    fn mean_zero_and_energy() {
        let m = ForwardModel { a0: 0.1, a1: -0.7, sigma: 1.2, x0: 0.0 };
        let grid = Grid::new(-10.0, 10.0, 201, 8).unwrap();
        let quad = QuadratureRule::gauss_hermite(40);
        let psi = three_piece_b2(0.25f64, 0.75).unwrap();
        assert!(h_mean_zero_check(&m, &psi, &grid, 0.2, 0.1, &quad).unwrap() < 1e-12);
        assert!((h_energy(&indicator::<f64>()) - 1.0).abs() < 1e-15);
        assert!((h_energy(&linear_b1::<f64>()) - 4.0).abs() < 1e-14);
    }
}
