//! Scalar abstraction for the probability and payoff arithmetic.
//!
//! The contagion and equilibrium layers are written against [`Scalar`] so the
//! same enumeration code runs in floating point (`f32`/`f64`) for speed or in
//! exact rational arithmetic ([`num_rational::BigRational`]) when knife-edge
//! comparisons matter (equilibrium membership, fine-interval endpoints, the
//! worked-example probabilities).

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{Num, ToPrimitive};
use std::fmt::{Debug, Display};
use std::iter::Sum;
use std::ops::Neg;

pub trait Scalar:
    Num + Clone + PartialOrd + Neg<Output = Self> + Sum<Self> + Debug + Display + 'static
{
    fn from_int(v: i64) -> Self;

    /// Exact for rational scalars, best-effort for floats.
    fn from_ratio(num: i64, den: i64) -> Self;

    fn as_f64(&self) -> f64;

    fn powi(&self, n: u32) -> Self {
        let mut acc = Self::one();
        for _ in 0..n {
            acc = acc * self.clone();
        }
        acc
    }

    fn abs(&self) -> Self {
        if *self < Self::zero() {
            -self.clone()
        } else {
            self.clone()
        }
    }
}

impl Scalar for f64 {
    fn from_int(v: i64) -> Self {
        v as f64
    }

    fn from_ratio(num: i64, den: i64) -> Self {
        num as f64 / den as f64
    }

    fn as_f64(&self) -> f64 {
        *self
    }
}

impl Scalar for f32 {
    fn from_int(v: i64) -> Self {
        v as f32
    }

    fn from_ratio(num: i64, den: i64) -> Self {
        num as f32 / den as f32
    }

    fn as_f64(&self) -> f64 {
        f64::from(*self)
    }
}

impl Scalar for BigRational {
    fn from_int(v: i64) -> Self {
        BigRational::from_integer(BigInt::from(v))
    }

    fn from_ratio(num: i64, den: i64) -> Self {
        BigRational::new(BigInt::from(num), BigInt::from(den))
    }

    fn as_f64(&self) -> f64 {
        ToPrimitive::to_f64(self).unwrap_or(f64::NAN)
    }
}

/// Parses a plain decimal literal ("0.65", "15", "-3.5") into an exact rational.
pub fn rational_from_decimal(s: &str) -> Option<BigRational> {
    let s = s.trim();
    let (sign, body) = match s.strip_prefix('-') {
        Some(rest) => (-1i64, rest),
        None => (1i64, s),
    };
    let (int_part, frac_part) = match body.split_once('.') {
        Some((i, f)) => (i, f),
        None => (body, ""),
    };
    if int_part.is_empty() && frac_part.is_empty() {
        return None;
    }
    if !int_part.chars().all(|c| c.is_ascii_digit()) || !frac_part.chars().all(|c| c.is_ascii_digit())
    {
        return None;
    }
    let digits = format!("{}{}", int_part, frac_part);
    let num: BigInt = digits.parse().ok()?;
    let den = BigInt::from(10u32).pow(frac_part.len() as u32);
    Some(BigRational::new(BigInt::from(sign) * num, den))
}
