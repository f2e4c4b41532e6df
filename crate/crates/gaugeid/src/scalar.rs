//! Scalar abstraction shared by every numerical routine.

use num_complex::Complex;
use num_traits::{Float, FloatConst};
use std::fmt::{Debug, Display, LowerExp};

/// Floating-point scalar the library is generic over (`f32` or `f64`).
pub trait Real:
    Float
    + FloatConst
    + rustfft::FftNum
    + Default
    + Debug
    + Display
    + LowerExp
    + Send
    + Sync
    + std::iter::Sum
    + 'static
{
    /// Lossy conversion from `f64`.
    fn of(x: f64) -> Self;
    /// Widening conversion to `f64`.
    fn f64(self) -> f64;
    /// Short type name recorded in run manifests.
    const NAME: &'static str;
}

impl Real for f32 {
    fn of(x: f64) -> Self {
        x as f32
    }
    fn f64(self) -> f64 {
        self as f64
    }
    const NAME: &'static str = "f32";
}

impl Real for f64 {
    fn of(x: f64) -> Self {
        x
    }
    fn f64(self) -> f64 {
        self
    }
    const NAME: &'static str = "f64";
}

/// Complex number over a [`Real`] scalar.
pub type C<T> = Complex<T>;

/// Build a complex number from two `f64` parts.
#[inline]
pub fn c<T: Real>(re: f64, im: f64) -> C<T> {
    Complex::new(T::of(re), T::of(im))
}

/// Convert a complex value to double precision.
#[inline]
pub fn c64<T: Real>(z: C<T>) -> Complex<f64> {
    Complex::new(z.re.f64(), z.im.f64())
}

/// Convert a double-precision complex value to the working precision.
#[inline]
pub fn cof<T: Real>(z: Complex<f64>) -> C<T> {
    Complex::new(T::of(z.re), T::of(z.im))
}
