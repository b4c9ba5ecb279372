//! Scalar abstraction for the numeric core.
//!
//! All model math is generic over [`Real`], which is implemented for `f32`
//! and `f64`. The crate root exports `f64` aliases for the common types;
//! `f64` is what the CLI and the file formats use.

use rand::Rng;
use rand_distr::StandardNormal;

/// Floating-point scalar the model core is generic over.
pub trait Real:
    num_traits::Float
    + num_traits::FromPrimitive
    + num_traits::ToPrimitive
    + std::fmt::Debug
    + std::fmt::Display
    + std::fmt::LowerExp
    + Send
    + Sync
    + 'static
{
    /// Draws one standard-normal sample from `rng`.
    fn standard_normal<R: Rng + ?Sized>(rng: &mut R) -> Self;
}

impl Real for f64 {
    fn standard_normal<R: Rng + ?Sized>(rng: &mut R) -> Self {
        rng.sample(StandardNormal)
    }
}

impl Real for f32 {
    fn standard_normal<R: Rng + ?Sized>(rng: &mut R) -> Self {
        rng.sample(StandardNormal)
    }
}

/// Shorthand for converting an `f64` constant into the working scalar type.
#[inline]
pub fn real<T: Real>(x: f64) -> T {
    T::from_f64(x).expect("f64 constant representable in scalar type")
}
