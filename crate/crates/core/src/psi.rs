//! Weight functions `ψ` on `[0, 1]` and the moment classes `B^m`.
//!
//! `ψ ∈ B^m` means `∫ψ = 1` and `∫ψ(u) u^k du = 0` for `1 ≤ k ≤ m`. Every weight
//! here is piecewise polynomial, so all moments and inner products are exact.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scalar::Scalar;

/// Tolerance on moment residuals for class membership.
pub const MOMENT_TOL: f64 = 1e-13;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PsiError {
    #[error("pieces do not partition [0, 1]: {0}")]
    Partition(String),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("singular moment system")]
    Singular,
    #[error("constructed weight fails its B^{0} moment check")]
    ClassCheck(usize),
}

/// `ψ(u) = Σ_k coeffs[k] u^k` for `u ∈ [lo, hi)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Piece<S> {
    pub lo: S,
    pub hi: S,
    pub coeffs: Vec<S>,
}

impl<S: Scalar> Piece<S> {
    pub fn constant(lo: S, hi: S, value: S) -> Self {
        Piece { lo, hi, coeffs: vec![value] }
    }

    pub fn eval(&self, u: S) -> S {
        self.coeffs.iter().rev().fold(S::zero(), |acc, &c| acc * u + c)
    }

    pub fn degree(&self) -> usize {
        self.coeffs.len().saturating_sub(1)
    }
}

/// `∫_lo^hi p(u) u^shift du` for a monomial-basis polynomial `p`.
fn poly_integral<S: Scalar>(coeffs: &[S], shift: usize, lo: S, hi: S) -> S {
    coeffs.iter().enumerate().fold(S::zero(), |acc, (k, &c)| {
        let p = k + shift + 1;
        acc + c * (hi.pow_n(p) - lo.pow_n(p)) / S::int(p as i64)
    })
}

fn poly_mul<S: Scalar>(p: &[S], q: &[S]) -> Vec<S> {
    let mut out = vec![S::zero(); p.len() + q.len() - 1];
    for (i, &a) in p.iter().enumerate() {
        for (j, &b) in q.iter().enumerate() {
            out[i + j] = out[i + j] + a * b;
        }
    }
    out
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PsiFunction<S> {
    pub claimed_m: usize,
    pub pieces: Vec<Piece<S>>,
}

impl<S: Scalar> PsiFunction<S> {
    /// Checks that the pieces partition `[0, 1]` in order.
    pub fn new(pieces: Vec<Piece<S>>, claimed_m: usize) -> Result<Self, PsiError> {
        let psi = PsiFunction { claimed_m, pieces };
        psi.check_partition()?;
        Ok(psi)
    }

    pub fn check_partition(&self) -> Result<(), PsiError> {
        let p = &self.pieces;
        if p.is_empty() {
            return Err(PsiError::Partition("no pieces".into()));
        }
        if p[0].lo != S::zero() {
            return Err(PsiError::Partition(format!("first piece starts at {}", p[0].lo)));
        }
        if p[p.len() - 1].hi != S::one() {
            return Err(PsiError::Partition(format!("last piece ends at {}", p[p.len() - 1].hi)));
        }
        for (i, piece) in p.iter().enumerate() {
            if piece.lo >= piece.hi {
                return Err(PsiError::Partition(format!("piece {i} is empty: [{}, {})", piece.lo, piece.hi)));
            }
            if piece.coeffs.is_empty() {
                return Err(PsiError::Partition(format!("piece {i} has no coefficients")));
            }
            if i > 0 && p[i - 1].hi != piece.lo {
                return Err(PsiError::Partition(format!("gap or overlap at piece {i}")));
            }
        }
        Ok(())
    }

    pub fn eval(&self, u: S) -> S {
        let last = self.pieces.len() - 1;
        for (i, p) in self.pieces.iter().enumerate() {
            if (u >= p.lo && u < p.hi) || (i == last && u == p.hi) {
                return p.eval(u);
            }
        }
        S::zero()
    }

    /// `∫_0^1 ψ(u) u^k du`, exact.
    pub fn moment(&self, k: usize) -> S {
        self.pieces
            .iter()
            .fold(S::zero(), |acc, p| acc + poly_integral(&p.coeffs, k, p.lo, p.hi))
    }

    /// Unit mass and vanishing moments `1..=m`, each within [`MOMENT_TOL`].
    pub fn verify_class(&self, m: usize) -> bool {
        self.moment_residuals(m).iter().all(|r| r.magnitude().as_f64() <= MOMENT_TOL)
    }

    /// `[moment(0) - 1, moment(1), ..., moment(m)]`.
    pub fn moment_residuals(&self, m: usize) -> Vec<S> {
        (0..=m)
            .map(|k| if k == 0 { self.moment(0) - S::one() } else { self.moment(k) })
            .collect()
    }

    /// `∫_0^1 ψ²`.
    pub fn energy(&self) -> S {
        self.inner(self)
    }

    /// `∫_0^1 ψ φ` over the common refinement of both partitions.
    pub fn inner(&self, other: &PsiFunction<S>) -> S {
        let mut acc = S::zero();
        for p in &self.pieces {
            for q in &other.pieces {
                let lo = if p.lo > q.lo { p.lo } else { q.lo };
                let hi = if p.hi < q.hi { p.hi } else { q.hi };
                if lo < hi {
                    acc = acc + poly_integral(&poly_mul(&p.coeffs, &q.coeffs), 0, lo, hi);
                }
            }
        }
        acc
    }

    pub fn max_degree(&self) -> usize {
        self.pieces.iter().map(Piece::degree).max().unwrap_or(0)
    }

    pub fn to_f64(&self) -> PsiFunction<f64> {
        PsiFunction {
            claimed_m: self.claimed_m,
            pieces: self
                .pieces
                .iter()
                .map(|p| Piece {
                    lo: p.lo.as_f64(),
                    hi: p.hi.as_f64(),
                    coeffs: p.coeffs.iter().map(|c| c.as_f64()).collect(),
                })
                .collect(),
        }
    }

    fn checked(self) -> Result<Self, PsiError> {
        self.check_partition()?;
        if self.verify_class(self.claimed_m) {
            Ok(self)
        } else {
            Err(PsiError::ClassCheck(self.claimed_m))
        }
    }
}

/// Builds a piecewise-constant weight from indicator terms `Σ w_i 1_{[lo_i, 1]}`
/// plus a constant on `[0, 1]`.
fn from_tail_indicators<S: Scalar>(base: S, tails: &[(S, S)], claimed_m: usize) -> PsiFunction<S> {
    let mut cuts: Vec<S> = tails.iter().map(|&(lo, _)| lo).filter(|&lo| lo > S::zero()).collect();
    cuts.sort_by(|a, b| a.partial_cmp(b).expect("finite breakpoints"));
    cuts.dedup();
    let mut edges = vec![S::zero()];
    edges.extend(cuts);
    edges.push(S::one());
    let pieces = edges
        .windows(2)
        .map(|w| {
            let v = tails.iter().filter(|&&(lo, _)| lo <= w[0]).fold(base, |acc, &(_, wt)| acc + wt);
            Piece::constant(w[0], w[1], v)
        })
        .collect();
    PsiFunction { claimed_m, pieces }
}

/// `1_{[0,1]}`, in `B^0`.
pub fn indicator<S: Scalar>() -> PsiFunction<S> {
    PsiFunction { claimed_m: 0, pieces: vec![Piece::constant(S::zero(), S::one(), S::one())] }
}

/// `ψ(x) = 4 - 6x`, in `B^1`.
pub fn linear_b1<S: Scalar>() -> PsiFunction<S> {
    PsiFunction { claimed_m: 1, pieces: vec![Piece { lo: S::zero(), hi: S::one(), coeffs: vec![S::int(4), S::int(-6)] }] }
}

/// `1/(c(c-1)) 1_{[1-c,1]} + (c-2)/(c-1) 1_{[0,1]}`, in `B^1` for `c ∈ (0,1)`.
pub fn two_piece_b1<S: Scalar>(c: S) -> Result<PsiFunction<S>, PsiError> {
    let one = S::one();
    if c <= S::zero() || c >= one {
        return Err(PsiError::InvalidParameter(format!("two_piece_b1 needs 0 < c < 1, got {c}")));
    }
    let base = (c - S::int(2)) / (c - one);
    from_tail_indicators(base, &[(one - c, one / (c * (c - one)))], 1).checked()
}

/// Three-level weight in `B^2` for distinct `c, c' ∈ (0,1)`.
pub fn three_piece_b2<S: Scalar>(c: S, cp: S) -> Result<PsiFunction<S>, PsiError> {
    let one = S::one();
    let inside = |x: S| x > S::zero() && x < one;
    if !inside(c) || !inside(cp) || c == cp {
        return Err(PsiError::InvalidParameter(format!(
            "three_piece_b2 needs distinct c, c' in (0,1), got {c}, {cp}"
        )));
    }
    let wc = (one - cp) / (c * (one - c) * (cp - c));
    let wcp = (c - one) / (cp * (one - cp) * (cp - c));
    let base = one + one / (one - c) + one / (one - cp);
    from_tail_indicators(base, &[(one - c, wc), (one - cp, wcp)], 2).checked()
}

/// Piecewise-constant member of `B^m` with `m` interior cuts (`m + 1` pieces),
/// obtained by solving the moment system for the piece values.
pub fn piecewise_constant_bm<S: Scalar>(m: usize, cuts: &[S]) -> Result<PsiFunction<S>, PsiError> {
    if cuts.len() != m {
        return Err(PsiError::InvalidParameter(format!("B^{m} needs {m} interior cuts, got {}", cuts.len())));
    }
    let mut edges = vec![S::zero()];
    edges.extend_from_slice(cuts);
    edges.push(S::one());
    if edges.windows(2).any(|w| w[0] >= w[1]) {
        return Err(PsiError::InvalidParameter("cuts must be increasing and inside (0, 1)".into()));
    }
    let n = m + 1;
    let mat: Vec<Vec<S>> = (0..n)
        .map(|k| (0..n).map(|p| poly_integral(&[S::one()], k, edges[p], edges[p + 1])).collect())
        .collect();
    let mut rhs = vec![S::zero(); n];
    rhs[0] = S::one();
    let values = solve_linear(mat, rhs)?;
    let pieces = (0..n).map(|p| Piece::constant(edges[p], edges[p + 1], values[p])).collect();
    PsiFunction { claimed_m: m, pieces }.checked()
}

/// Equispaced piecewise-constant member of `B^m`: the default weight.
pub fn default_bm<S: Scalar>(m: usize) -> PsiFunction<S> {
    let cuts: Vec<S> = (1..=m).map(|k| S::ratio(k as i64, m as i64 + 1)).collect();
    piecewise_constant_bm(m, &cuts).expect("equispaced moment system is nonsingular")
}

/// Names accepted by [`by_name`].
pub const NAMED_WEIGHTS: &[&str] = &[
    "indicator",
    "linear_b1",
    "two_piece_b1:<c>",
    "three_piece_b2:<c>,<c'>",
    "default_bm:<m>",
    "piecewise_constant_bm:<cut>,...",
];

/// Builds a weight from `name[:arg,...]`; arguments are decimals.
pub fn by_name<S: Scalar>(spec: &str) -> Result<PsiFunction<S>, PsiError> {
    let (name, args) = spec.split_once(':').unwrap_or((spec, ""));
    let args: Vec<&str> = args.split(',').map(str::trim).filter(|a| !a.is_empty()).collect();
    let num = |a: &str| -> Result<S, PsiError> {
        a.parse::<f64>()
            .ok()
            .and_then(S::from_f64)
            .ok_or_else(|| PsiError::InvalidParameter(format!("bad number `{a}` in `{spec}`")))
    };
    let arity = |n: usize| {
        if args.len() == n {
            Ok(())
        } else {
            Err(PsiError::InvalidParameter(format!("`{name}` takes {n} argument(s), got {}", args.len())))
        }
    };
    match name.trim() {
        "indicator" => arity(0).map(|_| indicator()),
        "linear_b1" => arity(0).map(|_| linear_b1()),
        "two_piece_b1" => {
            arity(1)?;
            two_piece_b1(num(args[0])?)
        }
        "three_piece_b2" => {
            arity(2)?;
            three_piece_b2(num(args[0])?, num(args[1])?)
        }
        "default_bm" => {
            arity(1)?;
            let m: usize = args[0].parse().map_err(|_| PsiError::InvalidParameter(format!("bad class `{}`", args[0])))?;
            Ok(default_bm(m))
        }
        "piecewise_constant_bm" => {
            let cuts = args.iter().map(|a| num(a)).collect::<Result<Vec<S>, _>>()?;
            piecewise_constant_bm(cuts.len(), &cuts)
        }
        other => Err(PsiError::InvalidParameter(format!("unknown weight `{other}`"))),
    }
}

/// Gaussian elimination with partial pivoting; works over exact and float scalars.
#[allow(clippy::needless_range_loop)]
pub(crate) fn solve_linear<S: Scalar>(mut a: Vec<Vec<S>>, mut b: Vec<S>) -> Result<Vec<S>, PsiError> {
    let n = b.len();
    let scale = a.iter().flatten().map(|x| x.magnitude().as_f64()).fold(0.0, f64::max);
    for col in 0..n {
        let piv = (col..n)
            .max_by(|&i, &j| {
                a[i][col].magnitude().partial_cmp(&a[j][col].magnitude()).unwrap_or(std::cmp::Ordering::Equal)
            })
            .ok_or(PsiError::Singular)?;
        let p = a[piv][col];
        if p == S::zero() || p.magnitude().as_f64() <= 1e-14 * scale {
            return Err(PsiError::Singular);
        }
        a.swap(col, piv);
        b.swap(col, piv);
        for row in (col + 1)..n {
            let f = a[row][col] / a[col][col];
            for k in col..n {
                a[row][k] = a[row][k] - f * a[col][k];
            }
            b[row] = b[row] - f * b[col];
        }
    }
    let mut x = vec![S::zero(); n];
    for row in (0..n).rev() {
        let s = ((row + 1)..n).fold(S::zero(), |acc, k| acc + a[row][k] * x[k]);
        x[row] = (b[row] - s) / a[row][row];
    }
    Ok(x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_rational::Rational64;
    use proptest::prelude::*;

    fn r(n: i64, d: i64) -> Rational64 {
        Rational64::new(n, d)
    }

    /// Adaptive Simpson on `[a, b]`, used only as an independent check.
    fn simpson(f: &dyn Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
        #[allow(clippy::too_many_arguments)]
        fn rec(f: &dyn Fn(f64) -> f64, a: f64, b: f64, fa: f64, fm: f64, fb: f64, whole: f64, tol: f64, d: u32) -> f64 {
            let m = 0.5 * (a + b);
            let (lm, rm) = (0.5 * (a + m), 0.5 * (m + b));
            let (flm, frm) = (f(lm), f(rm));
            let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
            let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
            if d == 0 || (left + right - whole).abs() <= 15.0 * tol {
                left + right + (left + right - whole) / 15.0
            } else {
                rec(f, a, m, fa, flm, fm, left, tol / 2.0, d - 1) + rec(f, m, b, fm, frm, fb, right, tol / 2.0, d - 1)
            }
        }
        let m = 0.5 * (a + b);
        let (fa, fm, fb) = (f(a), f(m), f(b));
        rec(f, a, b, fa, fm, fb, (b - a) / 6.0 * (fa + 4.0 * fm + fb), tol, 40)
    }

    fn numeric_moment(psi: &PsiFunction<f64>, k: usize) -> f64 {
        psi.pieces
            .iter()
            .map(|p| simpson(&|u| p.eval(u) * u.powi(k as i32), p.lo, p.hi, 1e-15))
            .sum()
    }

    #[test]
    fn indicator_moments() {
        let psi = indicator::<Rational64>();
        assert_eq!(psi.moment(0), r(1, 1));
        assert_eq!(psi.moment(1), r(1, 2));
        assert!(psi.verify_class(0));
        assert!(!psi.verify_class(1));
    }

    #[test]
    fn linear_b1_moments() {
        let psi = linear_b1::<Rational64>();
        assert_eq!(psi.moment(1), r(0, 1));
        assert!(psi.verify_class(1));
        assert!(!psi.verify_class(2));
        assert_eq!(psi.energy(), r(4, 1));
    }

    #[test]
    fn two_piece_at_half() {
        let psi = two_piece_b1(r(1, 2)).unwrap();
        assert_eq!(psi.pieces.len(), 2);
        assert_eq!(psi.eval(r(1, 4)), r(3, 1));
        assert_eq!(psi.eval(r(3, 4)), r(-1, 1));
        assert_eq!(psi.moment(0), r(1, 1));
        assert_eq!(psi.moment(1), r(0, 1));
        assert!(two_piece_b1(r(1, 1)).is_err());
    }

    #[test]
    fn three_piece_b2_at_quarter_half() {
        let psi = three_piece_b2(r(1, 4), r(1, 2)).unwrap();
        assert!(psi.verify_class(2));
        assert_eq!(psi.moment(3), r(3, 32));
        let f = three_piece_b2(0.25, 0.5).unwrap();
        assert!(f.verify_class(2));
        assert!(f.energy() > 0.0);
        assert!(three_piece_b2(0.5, 0.5).is_err());
    }

    #[test]
    fn piecewise_constant_b3() {
        let psi = piecewise_constant_bm(3, &[r(1, 4), r(1, 2), r(3, 4)]).unwrap();
        assert!(psi.verify_class(3));
        assert_ne!(psi.moment(4), r(0, 1));
        let f = piecewise_constant_bm(3, &[0.25, 0.5, 0.75]).unwrap();
        assert!(f.verify_class(3));
        assert!(piecewise_constant_bm(2, &[0.5]).is_err());
        assert!(piecewise_constant_bm(2, &[0.5, 0.4]).is_err());
    }

    #[test]
    fn default_weights_by_class() {
        for m in 0..=4 {
            let psi = default_bm::<Rational64>(m);
            assert!(psi.verify_class(m));
            assert!(!psi.verify_class(m + 1));
            assert!(default_bm::<f64>(m).verify_class(m));
        }
        assert_eq!(default_bm::<f64>(0), indicator());
    }

    #[test]
    fn energy_and_inner() {
        assert_eq!(indicator::<f64>().energy(), 1.0);
        assert_eq!(linear_b1::<Rational64>().energy(), r(4, 1));
        assert_eq!(indicator::<Rational64>().inner(&linear_b1()), r(1, 1));
        let a = two_piece_b1(r(1, 3)).unwrap();
        let b = three_piece_b2(r(1, 4), r(3, 5)).unwrap();
        assert_eq!(a.inner(&b), b.inner(&a));
    }

    #[test]
    fn closed_form_matches_adaptive_quadrature() {
        let all: Vec<PsiFunction<f64>> = vec![
            indicator(),
            linear_b1(),
            two_piece_b1(0.3).unwrap(),
            three_piece_b2(0.2, 0.7).unwrap(),
            piecewise_constant_bm(3, &[0.2, 0.5, 0.9]).unwrap(),
        ];
        for psi in &all {
            for k in 0..6 {
                let exact = psi.moment(k);
                let num = numeric_moment(psi, k);
                assert!((exact - num).abs() < 1e-12, "k={k}: {exact} vs {num}");
            }
        }
    }

    #[test]
    fn partition_errors() {
        let bad = vec![Piece::constant(0.0, 0.5, 1.0), Piece::constant(0.6, 1.0, 1.0)];
        assert!(matches!(PsiFunction::new(bad, 0), Err(PsiError::Partition(_))));
        let ok = vec![Piece::constant(0.0, 0.5, 2.0), Piece::constant(0.5, 1.0, 0.0)];
        assert!(PsiFunction::new(ok, 0).unwrap().verify_class(0));
        let json = serde_json::to_string(&linear_b1::<f64>()).unwrap();
        assert!(json.contains("claimed_m") && json.contains("coeffs"));
    }

    #[test]
    fn weights_by_name() {
        assert_eq!(by_name::<f64>("linear_b1").unwrap(), linear_b1());
        assert_eq!(by_name::<f64>("default_bm:3").unwrap(), default_bm(3));
        assert_eq!(by_name::<f64>("two_piece_b1:0.25").unwrap(), two_piece_b1(0.25).unwrap());
        assert_eq!(by_name::<f64>("piecewise_constant_bm:0.2,0.6").unwrap().claimed_m, 2);
        assert!(by_name::<f64>("indicator:1").is_err());
        assert!(by_name::<f64>("three_piece_b2:0.5,0.5").is_err());
        assert!(by_name::<f64>("hat").is_err());
    }

    proptest! {
        #[test]
        fn b0_energy_at_least_one(c in 0.05f64..0.95, cp in 0.05f64..0.95) {
            prop_assume!((c - cp).abs() > 0.05);
            for psi in [two_piece_b1(c).unwrap(), three_piece_b2(c, cp).unwrap()] {
                prop_assert!(psi.energy() >= 1.0 - 1e-12);
            }
        }

        #[test]
        fn constructors_hit_claimed_class_only(c in 0.05f64..0.95, cp in 0.05f64..0.95) {
            prop_assume!((c - cp).abs() > 0.05);
            let a = two_piece_b1(c).unwrap();
            prop_assert!(a.verify_class(1));
            prop_assert!(a.moment(2).abs() > 1e-10);
            let b = three_piece_b2(c, cp).unwrap();
            prop_assert!(b.verify_class(2));
            prop_assert!(b.moment(3).abs() > 1e-10);
        }

        #[test]
        fn random_cuts_give_class(m in 0usize..4, seed in 0u64..1000) {
            let mut cuts: Vec<f64> = (0..m).map(|i| ((seed as f64 * 0.618 + i as f64 * 0.37) % 1.0) * 0.8 + 0.1).collect();
            cuts.sort_by(|a, b| a.partial_cmp(b).unwrap());
            prop_assume!(cuts.windows(2).all(|w| w[1] - w[0] > 0.05));
            let psi = piecewise_constant_bm(m, &cuts).unwrap();
            prop_assert!(psi.verify_class(m));
        }
    }
}
