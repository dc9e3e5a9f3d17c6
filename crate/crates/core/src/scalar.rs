//! Scalar abstraction shared by every numerical routine in the crate.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, NumAssign, ToPrimitive};
use serde::de::DeserializeOwned;
use serde::Serialize;

/// Floating point type the models are evaluated in: `f32` or `f64`.
pub trait Scalar:
    Float
    + FromPrimitive
    + ToPrimitive
    + NumAssign
    + Sum
    + Default
    + Debug
    + Display
    + Send
    + Sync
    + Serialize
    + DeserializeOwned
    + 'static
{
    /// Converts an `f64` literal into `Self`.
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("literal representable in scalar type")
    }

    fn to_f64_lossy(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}

/// Extended real: a finite value or the `-inf` sentinel.
///
/// Used for utilities of dominated options and for log densities outside the
/// prior support, so that no arithmetic ever touches an IEEE infinity.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ExtReal<T> {
    Finite(T),
    NegInfinity,
}

impl<T: Scalar> ExtReal<T> {
    pub fn finite(self) -> Option<T> {
        match self {
            ExtReal::Finite(v) => Some(v),
            ExtReal::NegInfinity => None,
        }
    }

    pub fn is_neg_infinity(self) -> bool {
        matches!(self, ExtReal::NegInfinity)
    }

    /// Sum of two extended reals; `-inf` absorbs.
    pub fn add(self, other: ExtReal<T>) -> ExtReal<T> {
        match (self, other) {
            (ExtReal::Finite(a), ExtReal::Finite(b)) => ExtReal::Finite(a + b),
            _ => ExtReal::NegInfinity,
        }
    }

    /// IEEE view, for display and comparisons only.
    pub fn to_float(self) -> T {
        match self {
            ExtReal::Finite(v) => v,
            ExtReal::NegInfinity => T::neg_infinity(),
        }
    }
}

impl<T: Scalar> PartialOrd for ExtReal<T> {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        use std::cmp::Ordering;
        match (self, other) {
            (ExtReal::NegInfinity, ExtReal::NegInfinity) => Some(Ordering::Equal),
            (ExtReal::NegInfinity, _) => Some(Ordering::Less),
            (_, ExtReal::NegInfinity) => Some(Ordering::Greater),
            (ExtReal::Finite(a), ExtReal::Finite(b)) => a.partial_cmp(b),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn neg_infinity_absorbs_and_orders_lowest() {
        let a = ExtReal::Finite(-1e300_f64);
        assert!(ExtReal::NegInfinity < a);
        assert!(a.add(ExtReal::NegInfinity).is_neg_infinity());
        assert_eq!(ExtReal::Finite(1.0_f32).add(ExtReal::Finite(2.0)), ExtReal::Finite(3.0));
    }
}
