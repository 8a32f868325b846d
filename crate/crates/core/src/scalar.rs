//! Scalar abstraction: the numerical core is generic over the floating-point
//! type, with `f64` as the working precision of the CLI and `f32` available
//! for memory-bound experimentation. Concrete aliases live at the crate root.

use nalgebra::RealField;
use num_traits::{FromPrimitive, ToPrimitive};
use rand::Rng;
use rand_distr::{Distribution, Exp1, Gamma, Open01, StandardNormal, StandardUniform};

/// Floating-point scalar usable throughout the model: full real-field algebra
/// plus the random primitives and special functions the samplers need.
pub trait Scalar:
    RealField + Copy + FromPrimitive + ToPrimitive + Default + std::fmt::LowerExp
{
    /// Draw from N(0, 1).
    fn std_normal<R: Rng + ?Sized>(rng: &mut R) -> Self;

    /// Draw from Gamma(shape, scale) with mean shape*scale.
    fn gamma<R: Rng + ?Sized>(shape: Self, scale: Self, rng: &mut R) -> Self;

    /// Draw from Exp(1).
    fn std_exp<R: Rng + ?Sized>(rng: &mut R) -> Self;

    /// Uniform on the open interval (0, 1).
    fn open01<R: Rng + ?Sized>(rng: &mut R) -> Self;

    /// Uniform on [0, 1).
    fn uniform<R: Rng + ?Sized>(rng: &mut R) -> Self;

    fn erf(self) -> Self;
    fn erfc(self) -> Self;
    fn ln_gamma(self) -> Self;
    fn expm1(self) -> Self;
    fn ln1p(self) -> Self;

    /// Log of a value safely above the underflow threshold; used to pick
    /// switchover points for tail-stable evaluations.
    fn ln_tiny() -> Self;

    fn cast(v: f64) -> Self {
        <Self as FromPrimitive>::from_f64(v).expect("f64 conversion")
    }

    fn cast_usize(v: usize) -> Self {
        <Self as FromPrimitive>::from_usize(v).expect("usize conversion")
    }

    fn to_f64_lossy(self) -> f64 {
        <Self as ToPrimitive>::to_f64(&self).expect("f64 conversion")
    }

    fn is_finite(self) -> bool;
}

macro_rules! impl_scalar {
    ($t:ty, $erf:path, $erfc:path, $lgamma:path, $ln_tiny:expr) => {
        impl Scalar for $t {
            fn std_normal<R: Rng + ?Sized>(rng: &mut R) -> Self {
                StandardNormal.sample(rng)
            }

            fn gamma<R: Rng + ?Sized>(shape: Self, scale: Self, rng: &mut R) -> Self {
                Gamma::new(shape, scale)
                    .expect("gamma parameters must be positive and finite")
                    .sample(rng)
            }

            fn std_exp<R: Rng + ?Sized>(rng: &mut R) -> Self {
                Exp1.sample(rng)
            }

            fn open01<R: Rng + ?Sized>(rng: &mut R) -> Self {
                Open01.sample(rng)
            }

            fn uniform<R: Rng + ?Sized>(rng: &mut R) -> Self {
                StandardUniform.sample(rng)
            }

            fn erf(self) -> Self {
                $erf(self)
            }

            fn erfc(self) -> Self {
                $erfc(self)
            }

            fn ln_gamma(self) -> Self {
                $lgamma(self)
            }

            fn expm1(self) -> Self {
                <$t>::exp_m1(self)
            }

            fn ln1p(self) -> Self {
                <$t>::ln_1p(self)
            }

            fn ln_tiny() -> Self {
                $ln_tiny
            }

            fn is_finite(self) -> bool {
                <$t>::is_finite(self)
            }
        }
    };
}

impl_scalar!(f64, libm::erf, libm::erfc, libm::lgamma, -700.0);
impl_scalar!(f32, libm::erff, libm::erfcf, libm::lgammaf, -85.0);
