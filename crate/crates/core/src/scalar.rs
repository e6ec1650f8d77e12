//! Coefficient fields for the symbolic layer.
//!
//! Exponential sums, moment tables and the series transforms only need ring
//! operations, exact division by small integers and conjugation, so they are
//! written once over [`Scalar`] and instantiated for `Complex<f64>`,
//! `Complex<f32>` and exact `Complex<BigRational>`.

use std::fmt::Debug;
use std::ops::Neg;

use num_bigint::BigInt;
use num_complex::Complex;
use num_rational::BigRational;
use num_traits::{Num, ToPrimitive, Zero};

use crate::C64;

pub trait Scalar: Num + Neg<Output = Self> + Clone + Debug + PartialEq + Send + Sync + 'static {
    fn conj(&self) -> Self;

    fn from_int(v: i64) -> Self;

    /// Equality up to the rounding floor of the field; exact for rationals.
    fn is_near(&self, other: &Self) -> bool;

    fn to_c64(&self) -> C64;
}

macro_rules! float_scalar {
    ($t:ty, $floor:expr) => {
        impl Scalar for Complex<$t> {
            fn conj(&self) -> Self {
                Complex::conj(self)
            }

            fn from_int(v: i64) -> Self {
                Complex::new(v as $t, 0.0)
            }

            fn is_near(&self, other: &Self) -> bool {
                (self - other).norm() <= $floor * (1.0 as $t).max(other.norm())
            }

            fn to_c64(&self) -> C64 {
                C64::new(self.re as f64, self.im as f64)
            }
        }
    };
}

float_scalar!(f64, 1e-12);
float_scalar!(f32, 1e-5);

impl Scalar for Complex<BigRational> {
    fn conj(&self) -> Self {
        Complex::new(self.re.clone(), -self.im.clone())
    }

    fn from_int(v: i64) -> Self {
        Complex::new(BigRational::from_integer(BigInt::from(v)), BigRational::zero())
    }

    fn is_near(&self, other: &Self) -> bool {
        self == other
    }

    fn to_c64(&self) -> C64 {
        C64::new(
            self.re.to_f64().unwrap_or(f64::NAN),
            self.im.to_f64().unwrap_or(f64::NAN),
        )
    }
}

/// Exact complex rational `re_num/re_den + i im_num/im_den`.
pub fn exact(re_num: i64, re_den: i64, im_num: i64, im_den: i64) -> Complex<BigRational> {
    Complex::new(
        BigRational::new(re_num.into(), re_den.into()),
        BigRational::new(im_num.into(), im_den.into()),
    )
}

pub(crate) fn factorial<S: Scalar>(k: usize) -> S {
    (1..=k as i64).fold(S::one(), |acc, j| acc * S::from_int(j))
}
