//! Order-condition systems, hard-coded per stage count and target order.
//!
//! Each level `m` holds the conditions that are new at order `m`; a report for
//! target `m` concatenates levels `1..=m`, so satisfaction is monotone.

use serde::Serialize;

use super::{Tableau, TableauError, RESIDUAL_TOL};
use crate::scalar::Scalar;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Condition<S> {
    pub name: String,
    /// Left-hand side minus right-hand side.
    pub residual: S,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ConditionReport<S> {
    pub target_order: u8,
    pub fz_zero: bool,
    pub residuals: Vec<Condition<S>>,
    pub satisfied: bool,
}

impl<S: Scalar> ConditionReport<S> {
    pub fn max_abs_residual(&self) -> f64 {
        self.residuals.iter().map(|c| c.residual.magnitude().as_f64()).fold(0.0, f64::max)
    }

    pub fn failing(&self) -> impl Iterator<Item = &Condition<S>> {
        self.residuals.iter().filter(|c| c.residual.magnitude().as_f64() > RESIDUAL_TOL)
    }
}

/// 1-based accessors so the condition code reads like the formulas.
struct View<'a, S> {
    t: &'a Tableau<S>,
}

impl<S: Scalar> View<'_, S> {
    fn c(&self, j: usize) -> S {
        self.t.c[j - 1]
    }
    fn b(&self, j: usize) -> S {
        self.t.b[j - 1]
    }
    fn a(&self, j: usize, k: usize) -> S {
        self.t.a[j - 1][k - 1]
    }
    fn at(&self, j: usize, k: usize) -> S {
        self.t.alpha_t(j - 1, k - 1)
    }
    fn bt(&self, j: usize) -> S {
        self.t.beta_t(j - 1)
    }
    fn sum(&self, range: std::ops::RangeInclusive<usize>, f: impl Fn(usize) -> S) -> S {
        range.fold(S::zero(), |s, j| s + f(j))
    }
}

fn cond<S>(name: &str, residual: S) -> Condition<S> {
    Condition { name: name.to_string(), residual }
}

fn level<S: Scalar>(t: &Tableau<S>, m: u8, fz_zero: bool) -> Result<Vec<Condition<S>>, TableauError> {
    let v = View { t };
    let q = t.q;
    let half = S::ratio(1, 2);
    let unsupported = |reason: &str| TableauError::Unsupported { target: m, q, reason: reason.to_string() };
    let out = match m {
        1 => vec![cond("sum b = 1", v.sum(1..=q + 1, |j| v.b(j)) - S::one())],
        2 => vec![
            cond("sum b c = 1/2", v.sum(1..=q + 1, |j| v.b(j) * v.c(j)) - half),
            cond("sum beta~ = 1", v.sum(1..=q, |j| v.bt(j)) - S::one()),
        ],
        3 => match q {
            1 => return Err(unsupported("one-stage schemes reach order 2 at most")),
            2 => {
                let c2 = v.c(2);
                let mut r = vec![
                    cond("sum b c^2 = 1/3", v.sum(1..=3, |j| v.b(j) * v.c(j) * v.c(j)) - S::ratio(1, 3)),
                    cond("a21 c2 = c2^2/2", v.a(2, 1) * c2 - c2 * c2 * half),
                ];
                if !fz_zero {
                    // The f^z coupling term of the two-stage expansion has
                    // coefficient c2^2/2 regardless of the weights.
                    r.push(cond("f^z term c2^2/2 = 0", c2 * c2 * half));
                }
                r.push(cond("c2 beta~2 = 1/2", c2 * v.bt(2) - half));
                r
            }
            3 | 4 => {
                if t.is_implicit() {
                    return Err(unsupported("order-3 conditions are stated for explicit schemes only"));
                }
                let mut r = vec![
                    cond("sum b c^2 = 1/3", v.sum(1..=q + 1, |j| v.b(j) * v.c(j) * v.c(j)) - S::ratio(1, 3)),
                    cond(
                        "sum b a c = 1/6",
                        v.sum(2..=q, |j| v.b(j) * v.sum(1..=j - 1, |k| v.a(j, k) * v.c(k))) - S::ratio(1, 6),
                    ),
                ];
                if !fz_zero {
                    r.push(cond(
                        "sum b alpha~ c = 1/6",
                        v.sum(2..=q, |j| v.b(j) * v.sum(1..=j - 1, |k| v.at(j, k) * v.c(k))) - S::ratio(1, 6),
                    ));
                }
                r.push(cond("sum beta~ c = 1/2", v.sum(1..=q, |j| v.bt(j) * v.c(j)) - half));
                r
            }
            _ => return Err(unsupported("tableaux with more than four stages are not covered")),
        },
        4 => {
            if q != 4 {
                return Err(unsupported("order-4 conditions are stated for four-stage schemes only"));
            }
            if fz_zero {
                return Err(unsupported("order-4 conditions are stated for drivers with f^z != 0"));
            }
            if t.is_implicit() {
                return Err(unsupported("order-4 conditions are stated for explicit schemes only"));
            }
            if v.c(2) == S::one() || v.c(3) == S::one() {
                return Err(unsupported("order-4 conditions assume c2 != 1 and c3 != 1"));
            }
            let bac = |w: &dyn Fn(usize, usize) -> S| {
                v.sum(2..=4, |j| v.sum(1..=j - 1, |k| v.b(j) * v.at(j, k) * w(j, k)))
            };
            vec![
                cond("sum b c^3 = 1/4", v.sum(1..=5, |j| v.b(j) * v.c(j).pow_n(3)) - S::ratio(1, 4)),
                cond("sum b alpha~ c c = 1/8", bac(&|j, k| v.c(j) * v.c(k)) - S::ratio(1, 8)),
                cond("sum b alpha~ c^2 = 1/12", bac(&|_, k| v.c(k) * v.c(k)) - S::ratio(1, 12)),
                cond("b4 alpha~43 alpha~32 c2 = 1/24", v.b(4) * v.at(4, 3) * v.at(3, 2) * v.c(2) - S::ratio(1, 24)),
                cond("sum beta~ c^2 = 1/3", v.sum(1..=4, |j| v.bt(j) * v.c(j) * v.c(j)) - S::ratio(1, 3)),
                cond(
                    "sum beta~ alpha~ c = 1/6",
                    v.sum(2..=4, |j| v.bt(j) * v.sum(1..=j - 1, |k| v.at(j, k) * v.c(k))) - S::ratio(1, 6),
                ),
            ]
        }
        _ => return Err(TableauError::InvalidParameter(format!("target order {m} not in 1..=4"))),
    };
    Ok(out)
}

/// Evaluates the condition system for `target` (all levels up to it).
pub fn order_conditions<S: Scalar>(
    t: &Tableau<S>,
    target: u8,
    fz_zero: bool,
) -> Result<ConditionReport<S>, TableauError> {
    let check = t.validate();
    if !check.is_ok() {
        return Err(TableauError::Invalid(check.violations));
    }
    if !(1..=4).contains(&target) {
        return Err(TableauError::InvalidParameter(format!("target order {target} not in 1..=4")));
    }
    let mut residuals = Vec::new();
    for m in 1..=target {
        residuals.extend(level(t, m, fz_zero)?);
    }
    let satisfied = residuals.iter().all(|c| c.residual.magnitude().as_f64() <= RESIDUAL_TOL);
    Ok(ConditionReport { target_order: target, fz_zero, residuals, satisfied })
}

/// Largest order in `0..=4` whose condition system holds; stops at the first
/// level that fails or has no stated system.
pub fn classify_order<S: Scalar>(t: &Tableau<S>, fz_zero: bool) -> u8 {
    let mut best = 0;
    for m in 1..=4 {
        match order_conditions(t, m, fz_zero) {
            Ok(r) if r.satisfied => best = m,
            _ => break,
        }
    }
    best
}

/// The eight classical order-4 conditions for ODE Runge–Kutta methods, using
/// the unmasked `a` of a four-stage explicit tableau.
pub fn ode_order4_residuals<S: Scalar>(t: &Tableau<S>) -> Result<Vec<Condition<S>>, TableauError> {
    if t.q != 4 || t.is_implicit() {
        return Err(TableauError::Unsupported {
            target: 4,
            q: t.q,
            reason: "classical order-4 conditions need an explicit four-stage tableau".into(),
        });
    }
    let v = View { t };
    let sb = |f: &dyn Fn(usize) -> S| v.sum(1..=4, |j| v.b(j) * f(j));
    let ac = |j: usize, p: usize| v.sum(1..=4, |k| v.a(j, k) * v.c(k).pow_n(p));
    Ok(vec![
        cond("sum b = 1", sb(&|_| S::one()) - S::one()),
        cond("sum b c = 1/2", sb(&|j| v.c(j)) - S::ratio(1, 2)),
        cond("sum b c^2 = 1/3", sb(&|j| v.c(j) * v.c(j)) - S::ratio(1, 3)),
        cond("sum b c^3 = 1/4", sb(&|j| v.c(j).pow_n(3)) - S::ratio(1, 4)),
        cond("sum b a c = 1/6", sb(&|j| ac(j, 1)) - S::ratio(1, 6)),
        cond("sum b c a c = 1/8", sb(&|j| v.c(j) * ac(j, 1)) - S::ratio(1, 8)),
        cond("sum b a c^2 = 1/12", sb(&|j| ac(j, 2)) - S::ratio(1, 12)),
        cond(
            "sum b a a c = 1/24",
            sb(&|j| v.sum(1..=4, |k| v.a(j, k) * ac(k, 1))) - S::ratio(1, 24),
        ),
    ])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tableau::*;
    use num_rational::Rational64;
    use proptest::prelude::*;

    fn r(n: i64, d: i64) -> Rational64 {
        Rational64::new(n, d)
    }

    #[test]
    fn crank_nicholson_order_two() {
        let rep = order_conditions(&crank_nicholson::<f64>(), 2, false).unwrap();
        assert!(rep.satisfied, "{rep:?}");
        assert_eq!(rep.residuals.len(), 3);
    }

    #[test]
    fn two_stage_explicit_half() {
        let t = two_stage_explicit::<f64>(0.5, 0.3).unwrap();
        assert!(order_conditions(&t, 2, false).unwrap().satisfied);
        assert!(order_conditions(&t, 2, true).unwrap().satisfied);
    }

    #[test]
    fn implicit_two_thirds_needs_fz_zero() {
        let t = Tableau {
            q: 2,
            c: vec![r(0, 1), r(2, 3), r(1, 1)],
            a: vec![vec![r(0, 1), r(0, 1)], vec![r(1, 3), r(1, 3)]],
            alpha: vec![vec![r(0, 1), r(0, 1)], vec![r(2, 3), r(0, 1)]],
            b: vec![r(1, 4), r(3, 4), r(0, 1)],
            beta: vec![r(1, 4), r(3, 4)],
            free: FreeMask::none(2),
        };
        let yes = order_conditions(&t, 3, true).unwrap();
        assert!(yes.satisfied);
        assert!(yes.residuals.iter().all(|c| c.residual == r(0, 1)));
        assert!(!order_conditions(&t, 3, false).unwrap().satisfied);
    }

    #[test]
    fn classification_of_named_tableaux() {
        assert_eq!(classify_order(&explicit_euler::<f64>(), false), 1);
        assert_eq!(classify_order(&implicit_euler::<f64>(), false), 1);
        assert_eq!(classify_order(&crank_nicholson::<f64>(), false), 2);
        let rk3 = three_stage::<f64>(0.5, 1.0, 0.0).unwrap();
        assert_eq!(classify_order(&rk3, false), 3);
        assert_eq!(classify_order(&rk3, true), 3);
    }

    #[test]
    fn rationals_classify_exactly() {
        let rk3 = three_stage(r(1, 2), r(1, 1), r(0, 1)).unwrap();
        let rep = order_conditions(&rk3, 3, false).unwrap();
        assert!(rep.residuals.iter().all(|c| c.residual == r(0, 1)));
        let o3 = two_stage_implicit_o3(r(1, 3)).unwrap();
        assert_eq!(classify_order(&o3, true), 3);
        assert_eq!(classify_order(&o3, false), 2);
    }

    #[test]
    fn unsupported_combinations_are_rejected() {
        assert!(matches!(
            order_conditions(&crank_nicholson::<f64>(), 3, false),
            Err(TableauError::Unsupported { .. })
        ));
        let rk3 = three_stage::<f64>(0.5, 1.0, 0.0).unwrap();
        assert!(matches!(order_conditions(&rk3, 4, false), Err(TableauError::Unsupported { .. })));
        let t = four_stage_three_eighths::<f64>();
        assert!(matches!(order_conditions(&t, 4, true), Err(TableauError::Unsupported { .. })));
        assert!(matches!(order_conditions(&t, 5, false), Err(TableauError::InvalidParameter(_))));
    }

    #[test]
    fn three_eighths_rule_is_y_order_four_but_not_z() {
        let t = four_stage_three_eighths::<Rational64>();
        let rep = order_conditions(&t, 4, false).unwrap();
        let failing: Vec<_> = rep.failing().map(|c| c.name.clone()).collect();
        assert_eq!(failing, vec!["sum beta~ alpha~ c = 1/6".to_string()]);
        assert_eq!(classify_order(&t, false), 3);
        assert!(ode_order4_residuals(&t).unwrap().iter().all(|c| c.residual == r(0, 1)));
    }

    #[test]
    fn classical_rk4_satisfies_ode_conditions_only() {
        let h = r(1, 2);
        let mut t = Tableau::zeros(vec![r(0, 1), h, h, r(1, 1), r(1, 1)]);
        t.a[1][0] = h;
        t.a[2][1] = h;
        t.a[3][2] = r(1, 1);
        t.b = vec![r(1, 6), r(1, 3), r(1, 3), r(1, 6), r(0, 1)];
        assert!(ode_order4_residuals(&t).unwrap().iter().all(|c| c.residual == r(0, 1)));
        // With the masked Z weights the Y-side set of the BSDE conditions fails.
        t.alpha = t.a.clone();
        t.alpha[2][0] = h;
        t.beta = vec![r(1, 6), r(1, 3), r(1, 2), r(0, 1)];
        let rep = order_conditions(&t, 4, false).unwrap();
        assert!(rep.failing().any(|c| c.name == "sum b alpha~ c = 1/6"));
    }

    proptest! {
        #[test]
        fn classification_is_monotone(c2 in 0.05f64..0.95, beta1 in -2.0f64..2.0, fz in any::<bool>()) {
            let t = two_stage_explicit(c2, beta1).unwrap();
            let m = classify_order(&t, fz);
            prop_assert_eq!(m, 2);
            for k in 1..=m {
                prop_assert!(order_conditions(&t, k, fz).unwrap().satisfied);
            }
        }

        #[test]
        fn implicit_o3_never_order_three_with_fz(c2 in 0.01f64..0.99) {
            let t = two_stage_implicit_o3(c2).unwrap();
            prop_assert_eq!(classify_order(&t, false), 2);
            prop_assert_eq!(classify_order(&t, true), 3);
        }

        #[test]
        fn masked_entries_are_inert(junk in -5.0f64..5.0, beta1 in -1.0f64..1.0) {
            // c3 = c2 masks alpha32; c4 = 1 masks beta4 in the four-stage case.
            let mut t = three_stage(0.4, 1.0, beta1).unwrap();
            let base = order_conditions(&t, 3, false).unwrap();
            t.beta[2] = junk;
            t.alpha[1][1] = junk;
            t.free.alpha[1][1] = true;
            let after = order_conditions(&t, 3, false).unwrap();
            prop_assert_eq!(base, after);
        }
    }
}
