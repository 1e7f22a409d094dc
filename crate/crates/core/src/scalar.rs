//! Scalar abstraction shared by the numerical modules.
//!
//! Everything that touches quadrature or Hermitian linear algebra is written
//! against [`Scalar`], so the same code runs in `f32` and `f64`. The exact
//! torus GIT tests in [`crate::gitcheck`] use integers instead.

use nalgebra::{Complex, RealField};
use num_traits::{FromPrimitive, ToPrimitive};

/// Real floating-point scalar: `f32` or `f64`.
pub trait Scalar:
    RealField + Copy + FromPrimitive + ToPrimitive + Send + Sync + 'static
{
    /// Lossy conversion from an `f64` literal.
    fn lit(x: f64) -> Self {
        <Self as FromPrimitive>::from_f64(x).expect("scalar conversion")
    }

    fn from_usize_lossy(n: usize) -> Self {
        <Self as FromPrimitive>::from_usize(n).expect("scalar conversion")
    }

    fn from_i64_lossy(n: i64) -> Self {
        <Self as FromPrimitive>::from_i64(n).expect("scalar conversion")
    }

    fn to_f64_lossy(self) -> f64 {
        <Self as ToPrimitive>::to_f64(&self).unwrap_or(f64::NAN)
    }

    /// Machine epsilon of the scalar type.
    fn eps() -> Self {
        Self::default_epsilon()
    }
}

impl<T> Scalar for T where
    T: RealField + Copy + FromPrimitive + ToPrimitive + Send + Sync + 'static
{
}

/// `|z|^2` without a square root.
#[inline]
pub fn abs2<S: Scalar>(z: Complex<S>) -> S {
    z.re * z.re + z.im * z.im
}

#[inline]
pub fn cplx<S: Scalar>(re: S) -> Complex<S> {
    Complex::new(re, S::zero())
}

/// `n!` as a scalar.
pub fn factorial<S: Scalar>(n: usize) -> S {
    (1..=n).fold(S::one(), |acc, k| acc * S::from_usize_lossy(k))
}

/// `|z|`.
#[inline]
pub fn cabs<S: Scalar>(z: Complex<S>) -> S {
    abs2(z).sqrt()
}
