//! Scalar abstractions shared by the samplers and the exact analysis.
//!
//! Two independent axes are generic:
//!
//! * [`Word`] is the unsigned integer that holds the recycler state `(X, m)`.
//!   Any primitive unsigned type works; the die size is limited to half the
//!   type's range so that doubling never wraps.
//! * [`Mass`] is the numeric type probability masses are reported in. Exact
//!   rationals (`Ratio<BigInt>`, `Ratio<i64>`, ...) give zero-tolerance
//!   answers; `f64`/`f32` are accepted for quick reporting.

use std::fmt::{Debug, Display};
use std::hash::Hash;

use num_traits::{FromPrimitive, Num, PrimInt, ToPrimitive, Unsigned};

/// Unsigned machine word holding the recycler state.
pub trait Word:
    PrimInt + Unsigned + FromPrimitive + ToPrimitive + Debug + Display + Hash + Send + Sync + 'static
{
    /// Largest die size this word can roll without overflowing `2m`.
    fn max_die() -> Self {
        (Self::max_value() >> 1) + Self::one()
    }
}

impl<T> Word for T where
    T: PrimInt
        + Unsigned
        + FromPrimitive
        + ToPrimitive
        + Debug
        + Display
        + Hash
        + Send
        + Sync
        + 'static
{
}

/// Numeric type for probability masses.
pub trait Mass: Num + Clone + PartialOrd + FromPrimitive + Debug {
    /// `2^-level`.
    fn dyadic(level: u32) -> Self {
        let two = Self::one() + Self::one();
        Self::one() / num_traits::pow(two, level as usize)
    }

    /// `count * 2^-level`.
    fn dyadic_count(count: u64, level: u32) -> Self {
        Self::from_u64(count).expect("leaf count representable") * Self::dyadic(level)
    }
}

impl<T> Mass for T where T: Num + Clone + PartialOrd + FromPrimitive + Debug {}
