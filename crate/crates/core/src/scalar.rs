//! Floating-point abstraction for the numerical kernels.
//!
//! Everything downstream (column solver, network, sampler, statistics) is
//! generic over [`Scalar`] so the same code runs in `f32` or `f64`. The
//! shipped presets and the CLI use the `f64` lane.

use std::fmt::{Debug, Display, LowerExp};
use std::iter::Sum;
use std::ops::{AddAssign, DivAssign, MulAssign, SubAssign};

use num_traits::{Float, FromPrimitive, ToPrimitive};
use rand::Rng;

/// Scalar type of the numeric kernels: `f32` or `f64`.
pub trait Scalar:
    Float
    + FromPrimitive
    + ToPrimitive
    + AddAssign
    + SubAssign
    + MulAssign
    + DivAssign
    + Sum
    + Display
    + Debug
    + LowerExp
    + Send
    + Sync
    + 'static
{
    /// Uniform draw from `[0, 1)` at native precision.
    fn uniform<R: Rng + ?Sized>(rng: &mut R) -> Self;

    /// Shorthand for converting an `f64` literal.
    fn of(x: f64) -> Self {
        Self::from(x).expect("literal out of range for scalar type")
    }

    fn as_f64(self) -> f64 {
        self.to_f64().expect("scalar convertible to f64")
    }

    fn from_count(n: usize) -> Self {
        Self::from(n).expect("count out of range for scalar type")
    }
}

impl Scalar for f32 {
    fn uniform<R: Rng + ?Sized>(rng: &mut R) -> Self {
        use rand::RngExt;
        rng.random::<f32>()
    }
}

impl Scalar for f64 {
    fn uniform<R: Rng + ?Sized>(rng: &mut R) -> Self {
        use rand::RngExt;
        rng.random::<f64>()
    }
}

/// Standard normal draw by the Box-Muller transform.
///
/// Precision-agnostic so proposal sampling does not need a distributions
/// dependency per scalar type.
pub fn standard_normal<T: Scalar, R: Rng + ?Sized>(rng: &mut R) -> T {
    // Map [0, 1) to (0, 1] so the logarithm stays finite.
    let u1 = T::one() - T::uniform(rng);
    let u2 = T::uniform(rng);
    let r = (-(T::one() + T::one()) * u1.ln()).sqrt();
    let theta = T::of(std::f64::consts::TAU) * u2;
    // The sine partner is discarded; one draw per call keeps streams simple.
    r * theta.cos()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha12Rng;

    #[test]
    fn normal_moments() {
        let mut rng = ChaCha12Rng::seed_from_u64(7);
        let n = 200_000;
        let mut sum = 0.0f64;
        let mut sumsq = 0.0f64;
        for _ in 0..n {
            let z: f64 = standard_normal(&mut rng);
            sum += z;
            sumsq += z * z;
        }
        let mean = sum / n as f64;
        let var = sumsq / n as f64 - mean * mean;
        assert!(mean.abs() < 0.01, "mean {mean}");
        assert!((var - 1.0).abs() < 0.02, "var {var}");
    }

    #[test]
    fn works_in_f32() {
        let mut rng = ChaCha12Rng::seed_from_u64(9);
        let z: f32 = standard_normal(&mut rng);
        assert!(z.is_finite());
        assert_eq!(f32::of(0.25), 0.25f32);
    }
}
