//! Scalar abstraction shared by the plain floating-point path and the
//! reverse-mode [`Var`](crate::autodiff::Var) path.
//!
//! Every bound engine is written once against [`Scalar`]. Evaluating it with
//! `f64` certifies; evaluating it with `Var` records a tape that training
//! differentiates. Discrete decisions (neuron grouping, intercept branches,
//! sign patterns) always read [`Scalar::value`], so they are constants of the
//! forward pass and never differentiated.

use std::fmt::Debug;
use std::ops::{Add, Div, Mul, Neg, Sub};

use num_traits::{Float, NumCast, One, Zero};

pub trait Scalar:
    Copy
    + Debug
    + Zero
    + One
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
{
    fn from_f64(v: f64) -> Self;

    /// Plain numeric value, used for every branch decision.
    fn value(&self) -> f64;

    /// |x| with derivative 0 at the origin.
    fn abs(self) -> Self;

    fn sqrt(self) -> Self;

    fn exp(self) -> Self;

    fn ln(self) -> Self;

    /// max(0, x) with derivative 0 at the origin.
    fn relu(self) -> Self {
        if self.value() > 0.0 {
            self
        } else {
            Self::zero()
        }
    }

    /// min(self, other); ties pick `self`.
    fn min_first(self, other: Self) -> Self {
        if other.value() < self.value() {
            other
        } else {
            self
        }
    }

    /// max(self, other); ties pick `self`.
    fn max_first(self, other: Self) -> Self {
        if other.value() > self.value() {
            other
        } else {
            self
        }
    }

    fn scale(self, k: f64) -> Self {
        self * Self::from_f64(k)
    }

    fn dot(a: &[Self], b: &[Self]) -> Self {
        debug_assert_eq!(a.len(), b.len());
        a.iter()
            .zip(b)
            .fold(Self::zero(), |acc, (&x, &y)| acc + x * y)
    }

    fn sum(xs: &[Self]) -> Self {
        xs.iter().fold(Self::zero(), |acc, &x| acc + x)
    }

    fn is_finite(&self) -> bool {
        self.value().is_finite()
    }
}

impl<F> Scalar for F
where
    F: Float + Debug,
{
    fn from_f64(v: f64) -> Self {
        <F as NumCast>::from(v).expect("f64 is representable in every Float type")
    }

    fn value(&self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }

    fn abs(self) -> Self {
        Float::abs(self)
    }

    fn sqrt(self) -> Self {
        Float::sqrt(self)
    }

    fn exp(self) -> Self {
        Float::exp(self)
    }

    fn ln(self) -> Self {
        Float::ln(self)
    }

    fn is_finite(&self) -> bool {
        Float::is_finite(*self)
    }
}

/// Numerically stable log(exp(0) + Σ exp(xs)), i.e. a log-sum-exp with an
/// implicit zero entry.
pub fn log1p_sum_exp<T: Scalar>(xs: &[T]) -> T {
    let m = xs.iter().fold(0.0f64, |m, x| m.max(x.value()));
    let shift = T::from_f64(m);
    let mut acc = T::from_f64((-m).exp());
    for &x in xs {
        acc = acc + (x - shift).exp();
    }
    shift + acc.ln()
}
