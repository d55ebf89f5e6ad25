//! Scalar abstraction for the numeric core.
//!
//! Ages, rates and probabilities are generic over [`Real`] so every kernel
//! runs in either `f32` or `f64`. The crate root exports concrete `f64`
//! aliases for the common instantiation.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, NumAssign, ToPrimitive};
use rand::Rng;

/// Floating-point scalar used throughout the simulators.
pub trait Real:
    Float
    + FromPrimitive
    + ToPrimitive
    + NumAssign
    + Sum<Self>
    + Debug
    + Display
    + Send
    + Sync
    + 'static
{
    /// Uniform draw in the half-open unit interval `[0, 1)`.
    fn unit_uniform<R: Rng + ?Sized>(rng: &mut R) -> Self;

    /// Conversion from an `f64` constant.
    fn of(x: f64) -> Self {
        Self::from_f64(x).expect("constant representable in scalar type")
    }

    /// View as `f64` for reporting.
    fn as_f64(self) -> f64 {
        self.to_f64().expect("scalar converts to f64")
    }
}

impl Real for f32 {
    fn unit_uniform<R: Rng + ?Sized>(rng: &mut R) -> Self {
        rng.random()
    }
}

impl Real for f64 {
    fn unit_uniform<R: Rng + ?Sized>(rng: &mut R) -> Self {
        rng.random()
    }
}

/// Exponential waiting time with the given rate, by inversion.
///
/// Uses `1 - U` so a zero uniform cannot reach `ln(0)`.
pub fn exp_draw<F: Real, R: Rng + ?Sized>(rng: &mut R, rate: F) -> F {
    debug_assert!(rate > F::zero());
    let u = F::one() - F::unit_uniform(rng);
    -u.ln() / rate
}
