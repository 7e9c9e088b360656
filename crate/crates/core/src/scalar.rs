//! Scalar abstractions.
//!
//! The coefficient algebra (tableaux, weight functions) only needs field
//! operations and runs unchanged over exact rationals. Everything that touches
//! the Gaussian transition needs `exp`/`sqrt` and is bounded by [`Real`].

use std::fmt::{Debug, Display};
use std::ops::Neg;

use num_traits::{Float, FloatConst, FromPrimitive, Num, ToPrimitive};

/// A field element usable by the exact-capable parts of the crate.
pub trait Scalar:
    Num + Neg<Output = Self> + Copy + PartialOrd + FromPrimitive + ToPrimitive + Debug + Display + Send + Sync + 'static
{
    /// `n / d` as a scalar. Panics if the value is not representable.
    fn ratio(n: i64, d: i64) -> Self {
        let num = Self::from_i64(n).expect("integer not representable");
        let den = Self::from_i64(d).expect("integer not representable");
        num / den
    }

    fn int(n: i64) -> Self {
        Self::from_i64(n).expect("integer not representable")
    }

    /// Best-effort conversion from `f64`; exact types approximate.
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("value not representable")
    }

    fn magnitude(self) -> Self {
        if self < Self::zero() {
            -self
        } else {
            self
        }
    }

    fn as_f64(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }

    fn pow_n(self, n: usize) -> Self {
        let mut acc = Self::one();
        for _ in 0..n {
            acc = acc * self;
        }
        acc
    }
}

impl<T> Scalar for T where
    T: Num + Neg<Output = T> + Copy + PartialOrd + FromPrimitive + ToPrimitive + Debug + Display + Send + Sync + 'static
{
}

/// A floating-point scalar: what the quadrature and solver layers run on.
pub trait Real: Scalar + Float + FloatConst {}

impl<T> Real for T where T: Scalar + Float + FloatConst {}

#[cfg(test)]
mod tests {
    use super::*;
    use num_rational::Rational64;

    #[test]
    fn ratio_is_exact_for_rationals() {
        let third = Rational64::ratio(1, 3);
        assert_eq!(third * Rational64::int(3), Rational64::int(1));
        assert_eq!(Rational64::ratio(-2, 4).magnitude(), Rational64::new(1, 2));
    }

    #[test]
    fn pow_matches_float_powi() {
        assert_eq!(3.0f64.pow_n(4), 81.0);
        assert_eq!(Rational64::ratio(1, 2).pow_n(3), Rational64::new(1, 8));
        assert_eq!(2.0f32.pow_n(0), 1.0);
    }
}
