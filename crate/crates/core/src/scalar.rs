//! Scalar abstraction shared by the generic numerical kernels.

use nalgebra::RealField;
use num_complex::Complex;

/// Real floating-point scalar usable by the generic kernels (`f32`, `f64`).
pub trait Real: RealField + Copy {
    /// Tolerance below which a quantity is treated as numerically zero.
    fn tiny() -> Self;
    fn to_f64(self) -> f64;
}

impl Real for f64 {
    fn tiny() -> Self {
        1e-12
    }
    fn to_f64(self) -> f64 {
        self
    }
}

impl Real for f32 {
    fn tiny() -> Self {
        1e-5
    }
    fn to_f64(self) -> f64 {
        self as f64
    }
}

/// Converts an `f64` literal into the working scalar.
#[inline]
pub fn lit<T: Real>(x: f64) -> T {
    nalgebra::convert(x)
}

/// Complex number with real and imaginary parts of type `T`.
pub type Cplx<T> = Complex<T>;

#[inline]
pub fn cplx<T: Real>(re: T, im: T) -> Cplx<T> {
    Complex::new(re, im)
}

/// Modulus of a complex scalar.
#[inline]
pub fn cabs<T: Real>(z: Cplx<T>) -> T {
    (z.re * z.re + z.im * z.im).sqrt()
}
