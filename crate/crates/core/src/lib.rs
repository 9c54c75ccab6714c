//! Entropy-optimal sampling of fair dice and loaded dice from fair coin
//! flips, using randomness recycling, together with an exact analysis of the
//! coin-flip trees these samplers induce.
//!
//! * [`uniform`] rolls a fair `n`-sided die; [`discrete`] samples an exact
//!   rational probability vector. Both consume bits from a [`BitSource`].
//! * [`ddg`] builds and checks discrete distribution generating trees.
//! * [`analysis`] computes expected flip counts exactly.
//! * [`oracle`] replays every bit string up to a depth for ground truth.
//!
//! The state word of the samplers is generic over [`Word`]; probability
//! masses in trees and enumerations are generic over [`Mass`]. The aliases
//! below fix the common choices.
//!
//! ```
//! use fairdie::{make_seeded, Die64};
//!
//! let die = Die64::new(6).unwrap();
//! let mut coins = make_seeded(42);
//! let roll = die.roll(&mut coins).unwrap();
//! assert!((1..=6).contains(&roll.outcome));
//! ```

pub mod analysis;
pub mod bitsource;
pub mod ddg;
pub mod discrete;
mod error;
pub mod oracle;
pub mod scalar;
pub mod uniform;

pub use analysis::{
    dominates, entropy, exact_expected_flips, expected_flips_canonical,
    flip_distribution_uniform, verify_bounds, FlipDistribution,
};
pub use bitsource::{make_seeded, Bit, BitSource, ReplaySource, RngBits, SeededSource};
pub use ddg::{build_canonical, build_from_algorithm, check_optimal, DdgTree, LevelCensus, Verdict};
pub use discrete::ProbabilityVector;
pub use error::{Error, Result};
pub use oracle::{enumerate, state_tree, SamplerKind};
pub use scalar::{Mass, Word};
pub use uniform::{FairDie, RecyclerState, TracedRoll};

/// Arbitrary-precision exact rational.
pub type Rational = num_rational::BigRational;

pub type Die32 = FairDie<u32>;
pub type Die64 = FairDie<u64>;
pub type Die128 = FairDie<u128>;

/// Flip-count law with exact masses.
pub type ExactFlipDistribution = FlipDistribution<Rational>;
/// Flip-count law in double precision, for reporting.
pub type FlipDistributionF64 = FlipDistribution<f64>;
pub type ExactEnumeration = oracle::EnumerationResult<Rational>;
