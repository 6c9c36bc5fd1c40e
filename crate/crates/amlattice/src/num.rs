//! Scalar abstraction: all numerics are generic over an IEEE float type.

use num_complex::Complex;

/// Floating-point scalar the solvers run on: `f32` or `f64`.
///
/// Math methods come from [`nalgebra::RealField`]; `rustfft::FftNum` makes
/// the same scalar usable in spectral transforms.
pub trait Real:
    Copy
    + num_traits::FloatConst
    + num_traits::FromPrimitive
    + num_traits::ToPrimitive
    + num_traits::NumAssign
    + nalgebra::RealField
    + rustfft::FftNum
    + std::iter::Sum
    + std::fmt::Display
    + std::fmt::LowerExp
{
    /// Shorthand for converting an `f64` literal into `Self`.
    #[inline]
    fn lit(x: f64) -> Self {
        num_traits::FromPrimitive::from_f64(x).expect("representable literal")
    }

    #[inline]
    fn to_f64c(self) -> f64 {
        num_traits::ToPrimitive::to_f64(&self).expect("representable value")
    }

    #[inline]
    fn inf() -> Self {
        Self::lit(f64::INFINITY)
    }
}

impl Real for f32 {}
impl Real for f64 {}

/// Complex number over the crate scalar.
pub type Cplx<T> = Complex<T>;

/// exp(i theta) without requiring `num_traits::Float` on the scalar.
#[inline]
pub fn cis<T: Real>(theta: T) -> Cplx<T> {
    let (s, c) = theta.sin_cos();
    Complex::new(c, s)
}

/// |c| for the crate scalar.
#[inline]
pub fn cnorm<T: Real>(c: Cplx<T>) -> T {
    c.norm_sqr().sqrt()
}
