//! Closed-form tableaux solving the stated condition systems.

use super::{FreeMask, Tableau, TableauError};
use crate::scalar::Scalar;

/// Names accepted by [`named`], with their parameters.
pub const NAMED_TABLEAUX: &[&str] = &[
    "explicit_euler",
    "implicit_euler",
    "crank_nicholson",
    "two_stage_explicit:c2=<c2>,beta1=<beta1>",
    "two_stage_implicit_o3:c2=<c2>",
    "three_stage:c2=<c2>,c3=<c3>,beta1=<beta1>",
    "four_stage_three_eighths",
];

fn invalid<T>(msg: impl Into<String>) -> Result<T, TableauError> {
    Err(TableauError::InvalidParameter(msg.into()))
}

fn near<S: Scalar>(x: S, y: S) -> bool {
    (x - y).magnitude().as_f64() <= 1e-12
}

/// Explicit Euler: `b = (1, 0)`, `β1` arbitrary (stored as 1).
pub fn explicit_euler<S: Scalar>() -> Tableau<S> {
    let mut t = Tableau::zeros(vec![S::zero(), S::one()]);
    t.b = vec![S::one(), S::zero()];
    t.beta = vec![S::one()];
    t.free.beta[0] = true;
    t
}

/// Implicit Euler: `b = (0, 1)`, `β1` arbitrary (stored as 1).
pub fn implicit_euler<S: Scalar>() -> Tableau<S> {
    let mut t = Tableau::zeros(vec![S::zero(), S::one()]);
    t.b = vec![S::zero(), S::one()];
    t.beta = vec![S::one()];
    t.free.beta[0] = true;
    t
}

/// Crank–Nicholson: `b = (1/2, 1/2)`, `β = (1)`.
pub fn crank_nicholson<S: Scalar>() -> Tableau<S> {
    let mut t = Tableau::zeros(vec![S::zero(), S::one()]);
    t.b = vec![S::ratio(1, 2), S::ratio(1, 2)];
    t.beta = vec![S::one()];
    t
}

/// Explicit two-stage family of order 2.
pub fn two_stage_explicit<S: Scalar>(c2: S, beta1: S) -> Result<Tableau<S>, TableauError> {
    let one = S::one();
    let two = S::int(2);
    if c2 <= S::zero() || c2 > one {
        return invalid(format!("two_stage_explicit needs 0 < c2 <= 1, got {c2}"));
    }
    let c2_is_one = c2 == one;
    if c2_is_one && !near(beta1, one) {
        return invalid("two_stage_explicit with c2 = 1 needs beta1 = 1 (beta2 is masked)");
    }
    let mut t = Tableau::zeros(vec![S::zero(), c2, one]);
    t.a[1][0] = c2;
    t.alpha[1][0] = c2;
    t.free.alpha[1][1] = true;
    t.b = vec![one - one / (two * c2), one / (two * c2), S::zero()];
    t.beta = vec![beta1, one - beta1];
    t.free.beta[1] = c2_is_one;
    Ok(t)
}

/// Two-stage scheme with implicit stages, of order 3 when `f^z = 0`.
pub fn two_stage_implicit_o3<S: Scalar>(c2: S) -> Result<Tableau<S>, TableauError> {
    let one = S::one();
    if c2 <= S::zero() || c2 >= one {
        return invalid(format!("two_stage_implicit_o3 needs 0 < c2 < 1, got {c2}"));
    }
    let two = S::int(2);
    let three = S::int(3);
    let six = S::int(6);
    let mut t = Tableau::zeros(vec![S::zero(), c2, one]);
    t.a[1][0] = c2 / two;
    t.a[1][1] = c2 / two;
    t.alpha[1][0] = c2;
    t.free.alpha[1][1] = true;
    t.b = vec![
        (three * c2 - one) / (six * c2),
        one / (six * c2 * (one - c2)),
        (two - three * c2) / (six * (one - c2)),
    ];
    t.beta = vec![one - one / (two * c2), one / (two * c2)];
    Ok(t)
}

/// Explicit three-stage family of order 3. With `c3 = 1` the β row is fixed
/// and `beta1` is ignored; otherwise `beta1` parameterizes it.
pub fn three_stage<S: Scalar>(c2: S, c3: S, beta1: S) -> Result<Tableau<S>, TableauError> {
    let one = S::one();
    let two = S::int(2);
    let three = S::int(3);
    let six = S::int(6);
    if c2 <= S::zero() {
        return invalid(format!("three_stage needs c2 > 0, got {c2}"));
    }
    if c2 >= one {
        return invalid("three_stage with c2 = 1 gives an order 2 scheme only");
    }
    if c3 == c2 {
        return invalid("three_stage with c3 = c2 gives an order 2 scheme only");
    }
    if near(c2, S::ratio(2, 3)) {
        return invalid("three_stage excludes c2 = 2/3");
    }
    if c3 < c2 || c3 > one {
        return invalid(format!("three_stage needs c2 < c3 <= 1, got c3 = {c3}"));
    }
    let d = c2 * (two - three * c2);
    let a31 = c3 * (three * c2 - three * c2 * c2 - c3) / d;
    let a32 = c3 * (c3 - c2) / d;

    let mut t = Tableau::zeros(vec![S::zero(), c2, c3, one]);
    t.a[1][0] = c2;
    t.a[2][0] = a31;
    t.a[2][1] = a32;
    t.alpha = t.a.clone();
    t.free.alpha[1][1] = true;
    t.free.alpha[2][2] = true;
    t.b = vec![
        (-three * c3 + six * c2 * c3 + two - three * c2) / (six * c2 * c3),
        (three * c3 - two) / (six * c2 * (c3 - c2)),
        (two - three * c2) / (six * c3 * (c3 - c2)),
        S::zero(),
    ];
    if c3 == one {
        t.beta = vec![one - one / (two * c2), one / (two * c2), S::zero()];
        t.free.beta[2] = true;
    } else {
        t.beta = vec![
            beta1,
            (two * c3 - one) / (two * (c3 - c2)) - c3 * beta1 / (c3 - c2),
            c3 * (one - two * c2) / (two * c3 * (c3 - c2)) + c2 * beta1 / (c3 - c2),
        ];
    }
    Ok(t)
}

/// Four-stage scheme whose Y weights are the classical 3/8 rule (`α = a`),
/// with the Z weights meeting every Z condition except the `α`-coupled one.
pub fn four_stage_three_eighths<S: Scalar>() -> Tableau<S> {
    let r = S::ratio;
    let mut t = Tableau::zeros(vec![S::zero(), r(1, 3), r(2, 3), S::one(), S::one()]);
    t.a[1][0] = r(1, 3);
    t.a[2][0] = r(-1, 3);
    t.a[2][1] = S::one();
    t.a[3][0] = S::one();
    t.a[3][1] = -S::one();
    t.a[3][2] = S::one();
    t.alpha = t.a.clone();
    t.b = vec![r(1, 8), r(3, 8), r(3, 8), r(1, 8), S::zero()];
    t.beta = vec![r(1, 4), S::zero(), r(3, 4), S::zero()];
    t.free.beta[3] = true;
    t
}

fn parse_value<S: Scalar>(s: &str) -> Result<S, TableauError> {
    let s = s.trim();
    if let Some((n, d)) = s.split_once('/') {
        let n: i64 = n.trim().parse().map_err(|_| TableauError::InvalidParameter(format!("bad number `{s}`")))?;
        let d: i64 = d.trim().parse().map_err(|_| TableauError::InvalidParameter(format!("bad number `{s}`")))?;
        if d == 0 {
            return invalid(format!("zero denominator in `{s}`"));
        }
        return Ok(S::ratio(n, d));
    }
    let x: f64 = s.parse().map_err(|_| TableauError::InvalidParameter(format!("bad number `{s}`")))?;
    S::from_f64(x).ok_or_else(|| TableauError::InvalidParameter(format!("`{s}` not representable")))
}

/// Builds a tableau from `name[:key=value,...]`; values may be decimals or `p/q`.
pub fn named<S: Scalar>(spec: &str) -> Result<Tableau<S>, TableauError> {
    let (name, params) = match spec.split_once(':') {
        Some((n, p)) => (n.trim(), p),
        None => (spec.trim(), ""),
    };
    let mut kv: Vec<(String, S)> = Vec::new();
    for part in params.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        let (k, v) = part
            .split_once('=')
            .ok_or_else(|| TableauError::InvalidParameter(format!("expected key=value, got `{part}`")))?;
        kv.push((k.trim().to_string(), parse_value(v)?));
    }
    let allowed: &[&str] = match name {
        "explicit_euler" | "implicit_euler" | "crank_nicholson" | "four_stage_three_eighths" => &[],
        "two_stage_explicit" => &["c2", "beta1"],
        "two_stage_implicit_o3" => &["c2"],
        "three_stage" => &["c2", "c3", "beta1"],
        _ => return Err(TableauError::UnknownName(name.to_string())),
    };
    if let Some((k, _)) = kv.iter().find(|(k, _)| !allowed.contains(&k.as_str())) {
        return invalid(format!("`{name}` has no parameter `{k}`"));
    }
    let get = |key: &str, default: S| kv.iter().rev().find(|(k, _)| k == key).map_or(default, |(_, v)| *v);
    match name {
        "explicit_euler" => Ok(explicit_euler()),
        "implicit_euler" => Ok(implicit_euler()),
        "crank_nicholson" => Ok(crank_nicholson()),
        "four_stage_three_eighths" => Ok(four_stage_three_eighths()),
        "two_stage_explicit" => two_stage_explicit(get("c2", S::ratio(1, 2)), get("beta1", S::ratio(1, 2))),
        "two_stage_implicit_o3" => two_stage_implicit_o3(get("c2", S::ratio(2, 3))),
        _ => three_stage(get("c2", S::ratio(1, 2)), get("c3", S::one()), get("beta1", S::zero())),
    }
}

impl FreeMask {
    /// Number of entries flagged free.
    pub fn count(&self) -> usize {
        let m = |v: &Vec<Vec<bool>>| v.iter().flatten().filter(|&&x| x).count();
        m(&self.a) + m(&self.alpha) + self.b.iter().filter(|&&x| x).count() + self.beta.iter().filter(|&&x| x).count()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tableau::{classify_order, order_conditions};
    use num_rational::Rational64;
    use proptest::prelude::*;

    fn r(n: i64, d: i64) -> Rational64 {
        Rational64::new(n, d)
    }

    #[test]
    fn single_stage_weights() {
        let cn = crank_nicholson::<Rational64>();
        assert_eq!(cn.b, vec![r(1, 2), r(1, 2)]);
        assert_eq!(cn.beta, vec![r(1, 1)]);
        let ee = explicit_euler::<f64>();
        assert_eq!((ee.b.clone(), ee.beta.clone(), ee.free.beta[0]), (vec![1.0, 0.0], vec![1.0], true));
        assert_eq!(implicit_euler::<f64>().b, vec![0.0, 1.0]);
    }

    #[test]
    fn two_stage_explicit_examples() {
        let t = two_stage_explicit(r(1, 2), r(1, 2)).unwrap();
        assert_eq!(t.b, vec![r(0, 1), r(1, 1), r(0, 1)]);
        let t = two_stage_explicit(r(1, 1), r(1, 1)).unwrap();
        assert_eq!(&t.b[..2], &[r(1, 2), r(1, 2)]);
        let t = two_stage_explicit(r(2, 3), r(0, 1)).unwrap();
        assert_eq!(&t.b[..2], &[r(1, 4), r(3, 4)]);
        assert_eq!(t.beta, vec![r(0, 1), r(1, 1)]);
        assert!(two_stage_explicit(0.0, 0.5).is_err());
        assert!(two_stage_explicit(1.0, 0.5).is_err());
    }

    #[test]
    fn implicit_o3_examples() {
        let t = two_stage_implicit_o3(r(2, 3)).unwrap();
        assert_eq!(t.b, vec![r(1, 4), r(3, 4), r(0, 1)]);
        assert_eq!(t.beta, vec![r(1, 4), r(3, 4)]);
        let f = two_stage_implicit_o3::<f64>(2.0 / 3.0).unwrap();
        assert_eq!(f.b[2], 0.0);
        let t = two_stage_implicit_o3(r(1, 2)).unwrap();
        assert_eq!(t.b, vec![r(1, 6), r(2, 3), r(1, 6)]);
        assert_eq!(t.beta, vec![r(0, 1), r(1, 1)]);
        assert!(two_stage_implicit_o3(0.0).is_err());
        assert!(two_stage_implicit_o3(1.0).is_err());
    }

    #[test]
    fn three_stage_examples() {
        let t = three_stage(r(1, 2), r(1, 1), r(5, 1)).unwrap();
        assert_eq!(t.a[2], vec![r(-1, 1), r(2, 1), r(0, 1)]);
        assert_eq!(t.a[1], vec![r(1, 2), r(0, 1), r(0, 1)]);
        assert_eq!(&t.b[..3], &[r(1, 6), r(2, 3), r(1, 6)]);
        assert_eq!(&t.beta[..2], &[r(0, 1), r(1, 1)]);
        assert!(t.free.beta[2]);

        let t = three_stage(r(1, 3), r(2, 3), r(1, 7)).unwrap();
        assert_eq!(&t.b[..3], &[r(1, 4), r(0, 1), r(3, 4)]);
        assert!(order_conditions(&t, 3, false).unwrap().satisfied);
    }

    #[test]
    fn three_stage_exclusions_are_named() {
        let msg = |e: TableauError| e.to_string();
        assert!(msg(three_stage(1.0, 1.0, 0.0).unwrap_err()).contains("order 2"));
        assert!(msg(three_stage(0.5, 0.5, 0.0).unwrap_err()).contains("order 2"));
        assert!(msg(three_stage(r(2, 3), r(1, 1), r(0, 1)).unwrap_err()).contains("2/3"));
        assert!(three_stage(0.0, 1.0, 0.0).is_err());
    }

    #[test]
    fn named_parsing() {
        let t: Tableau<f64> = named("two_stage_implicit_o3:c2=0.5").unwrap();
        assert_eq!(t, two_stage_implicit_o3(0.5).unwrap());
        let t: Tableau<Rational64> = named("three_stage: c2=1/3, c3=2/3, beta1=0").unwrap();
        assert_eq!(t.b[1], r(0, 1));
        assert!(matches!(named::<f64>("rk9"), Err(TableauError::UnknownName(_))));
        assert!(named::<f64>("crank_nicholson:c2=1").is_err());
        assert!(named::<f64>("three_stage:c2=abc").is_err());
        assert_eq!(named::<f64>("explicit_euler").unwrap().free.count(), 1);
    }

    #[test]
    fn constructors_validate_and_classify() {
        let fz = |t: &Tableau<f64>, z| classify_order(t, z);
        assert_eq!(fz(&explicit_euler(), false), 1);
        assert_eq!(fz(&implicit_euler(), false), 1);
        assert_eq!(fz(&crank_nicholson(), false), 2);
        assert_eq!(fz(&two_stage_explicit(0.5, 0.5).unwrap(), false), 2);
        assert_eq!(fz(&two_stage_implicit_o3(2.0 / 3.0).unwrap(), true), 3);
        assert_eq!(fz(&two_stage_implicit_o3(2.0 / 3.0).unwrap(), false), 2);
        assert_eq!(fz(&three_stage(0.5, 1.0, 0.0).unwrap(), false), 3);
        assert_eq!(fz(&four_stage_three_eighths(), false), 3);
    }

    proptest! {
        #[test]
        fn three_stage_family_is_order_three(c2 in 0.05f64..0.9, gap in 0.02f64..0.5, beta1 in -1.0f64..1.0) {
            prop_assume!((c2 - 2.0 / 3.0).abs() > 0.02);
            let c3 = (c2 + gap).min(1.0);
            let t = three_stage(c2, c3, beta1).unwrap();
            prop_assert!(t.validate().is_ok());
            let rep = order_conditions(&t, 3, false).unwrap();
            prop_assert!(rep.max_abs_residual() <= 1e-12, "{:?}", rep);
        }

        #[test]
        fn two_stage_explicit_validates(c2 in 0.01f64..1.0, beta1 in -3.0f64..3.0) {
            let t = two_stage_explicit(c2, beta1).unwrap();
            prop_assert!(t.validate().is_ok());
            prop_assert_eq!(classify_order(&t, false), 2);
        }
    }
}
