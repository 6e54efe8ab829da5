//! Multiprecision helpers shared by every numerical module.
//!
//! All heavy arithmetic runs on MPFR floats via `rug`. Angles of special
//! points are stored at [`LOCATION_PREC`] bits so that they can be rounded to
//! any working precision up to [`MAX_PREC`] without drift.

use std::ops::{AddAssign, SubAssign};

use rug::float::Constant;
use rug::Float;

use crate::error::{Error, Result};

/// Largest working mantissa accepted by the numerical routines.
pub const MAX_PREC: u32 = 1024;
/// Smallest working mantissa accepted by the numerical routines.
pub const MIN_PREC: u32 = 32;
/// Mantissa used to store special-point locations and other constants.
pub const LOCATION_PREC: u32 = MAX_PREC + 96;
/// Extra bits carried through density evaluation.
pub const GUARD_BITS: u32 = 16;

pub fn check_precision(bits: u32) -> Result<()> {
    if (MIN_PREC..=MAX_PREC).contains(&bits) {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!(
            "precision_bits must lie in [{MIN_PREC}, {MAX_PREC}], got {bits}"
        )))
    }
}

#[inline]
pub fn pi(prec: u32) -> Float {
    Float::with_val(prec, Constant::Pi)
}

#[inline]
pub fn two_pi(prec: u32) -> Float {
    let mut p = pi(prec);
    p *= 2u32;
    p
}

#[inline]
pub fn fl(prec: u32, v: f64) -> Float {
    Float::with_val(prec, v)
}

/// Reduces an angle into (−π, π] at the precision of `x` plus guard bits.
/// Inputs within rounding distance of ±π map to π.
pub fn reduce_angle(x: &Float) -> Float {
    let prec = x.prec() + GUARD_BITS;
    let p = pi(prec + 64);
    let near_pi = |v: &Float| {
        let d = Float::with_val(prec + 64, v.abs_ref()) - &p;
        d.is_zero() || d.abs() <= Float::with_val(32, 1) >> (x.prec().saturating_sub(3))
    };
    if near_pi(x) {
        return pi(prec);
    }
    if *x > -p.clone() && *x <= p {
        return Float::with_val(prec, x);
    }
    let tp = two_pi(prec + 64 + exponent_bits(x));
    let mut q = Float::with_val(prec + 64, x / &tp);
    q.round_mut();
    let mut r = Float::with_val(prec, x - q * &tp);
    if near_pi(&r) {
        return pi(prec);
    }
    if r <= -p.clone() {
        r += &tp;
    } else if r > p {
        r -= &tp;
    }
    r
}

fn exponent_bits(x: &Float) -> u32 {
    x.get_exp().map_or(0, |e| e.max(0) as u32)
}

/// Absolute value reduced into [0, π]; the symmetric densities evaluate here.
pub fn fold_abs(x: &Float) -> Float {
    let mut r = reduce_angle(x);
    r.abs_mut();
    r
}

/// A complex number over MPFR floats. Only the handful of operations the
/// Hermitian Toeplitz routines need are provided.
#[derive(Debug, Clone, PartialEq)]
pub struct Cx {
    pub re: Float,
    pub im: Float,
}

impl Cx {
    pub fn zero(prec: u32) -> Self {
        Cx {
            re: Float::new(prec),
            im: Float::new(prec),
        }
    }

    pub fn real(re: Float) -> Self {
        let im = Float::new(re.prec());
        Cx { re, im }
    }

    pub fn new(re: Float, im: Float) -> Self {
        Cx { re, im }
    }

    pub fn prec(&self) -> u32 {
        self.re.prec()
    }

    pub fn conj(&self) -> Self {
        Cx {
            re: self.re.clone(),
            im: Float::with_val(self.im.prec(), -&self.im),
        }
    }

    pub fn norm_sqr(&self) -> Float {
        let prec = self.prec();
        let mut n = Float::with_val(prec, self.re.square_ref());
        n += Float::with_val(prec, self.im.square_ref());
        n
    }

    pub fn mul(&self, other: &Cx) -> Cx {
        let prec = self.prec();
        let mut re = Float::with_val(prec, &self.re * &other.re);
        re -= &self.im * &other.im;
        let mut im = Float::with_val(prec, &self.re * &other.im);
        im += &self.im * &other.re;
        Cx { re, im }
    }

    /// `self += a * b`
    pub fn add_mul(&mut self, a: &Cx, b: &Cx) {
        self.re += &a.re * &b.re;
        self.re -= &a.im * &b.im;
        self.im += &a.re * &b.im;
        self.im += &a.im * &b.re;
    }

    pub fn scale(&self, s: &Float) -> Cx {
        let prec = self.prec();
        Cx {
            re: Float::with_val(prec, &self.re * s),
            im: Float::with_val(prec, &self.im * s),
        }
    }

    pub fn neg(&self) -> Cx {
        Cx {
            re: Float::with_val(self.re.prec(), -&self.re),
            im: Float::with_val(self.im.prec(), -&self.im),
        }
    }

    pub fn is_zero(&self) -> bool {
        self.re.is_zero() && self.im.is_zero()
    }
}

impl AddAssign<&Cx> for Cx {
    fn add_assign(&mut self, rhs: &Cx) {
        self.re += &rhs.re;
        self.im += &rhs.im;
    }
}

impl SubAssign<&Cx> for Cx {
    fn sub_assign(&mut self, rhs: &Cx) {
        self.re -= &rhs.re;
        self.im -= &rhs.im;
    }
}

/// Serializes a float so that parsing it back at the same precision is exact.
pub fn float_to_string(x: &Float) -> String {
    x.to_string_radix(10, None)
}

pub fn float_from_string(prec: u32, s: &str) -> Result<Float> {
    Float::parse(s)
        .map(|p| Float::with_val(prec, p))
        .map_err(|e| Error::InvalidParameter(format!("cannot parse float {s:?}: {e}")))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reduce_wraps_into_half_open_interval() {
        let p = 128;
        let x = Float::with_val(p, 3.0 * std::f64::consts::PI);
        let r = reduce_angle(&x);
        assert!((r.to_f64() - std::f64::consts::PI).abs() < 1e-12);
        let y = Float::with_val(p, -4.0);
        let r = reduce_angle(&y);
        assert!((r.to_f64() - (2.0 * std::f64::consts::PI - 4.0)).abs() < 1e-12);
        let z = Float::with_val(p, 0.25);
        assert_eq!(reduce_angle(&z), 0.25);
    }

    #[test]
    fn float_string_round_trip_is_exact() {
        let x = Float::with_val(200, 1) / Float::with_val(200, 3);
        let s = float_to_string(&x);
        let y = float_from_string(200, &s).unwrap();
        assert_eq!(x, y);
    }

    #[test]
    fn complex_product() {
        let p = 64;
        let a = Cx::new(fl(p, 1.0), fl(p, 2.0));
        let b = Cx::new(fl(p, 3.0), fl(p, -1.0));
        let c = a.mul(&b);
        assert_eq!(c.re, 5.0);
        assert_eq!(c.im, 5.0);
        assert_eq!(a.norm_sqr(), 5.0);
    }
}
