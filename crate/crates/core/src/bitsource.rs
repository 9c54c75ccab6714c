//! Fair-bit suppliers with exact consumption counting.
//!
//! Every sampler in this crate draws its randomness through [`BitSource`].
//! Two backends are provided: [`ReplaySource`] plays back a scripted bit
//! string and reports exhaustion (the enumeration oracle relies on this), and
//! [`RngBits`] peels bits off any `rand_core::RngCore`. The seeded generator
//! returned by [`make_seeded`] is ChaCha8 keyed through
//! `SeedableRng::seed_from_u64`; each 64-bit output word is consumed least
//! significant bit first.

use std::fmt;

use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};

use crate::error::{Error, Result};

/// One fair coin flip.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Bit {
    Zero,
    One,
}

impl Bit {
    pub fn as_u8(self) -> u8 {
        match self {
            Bit::Zero => 0,
            Bit::One => 1,
        }
    }

    pub fn is_one(self) -> bool {
        self == Bit::One
    }

    pub fn as_char(self) -> char {
        match self {
            Bit::Zero => '0',
            Bit::One => '1',
        }
    }

    /// Parses a `'0'`/`'1'` history string.
    pub fn parse_history(s: &str) -> Option<Vec<Bit>> {
        s.chars()
            .map(|c| match c {
                '0' => Some(Bit::Zero),
                '1' => Some(Bit::One),
                _ => None,
            })
            .collect()
    }
}

impl From<bool> for Bit {
    fn from(b: bool) -> Self {
        if b {
            Bit::One
        } else {
            Bit::Zero
        }
    }
}

impl fmt::Display for Bit {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.as_u8())
    }
}

/// Supplier of fair bits.
///
/// Implementations must increment [`flips_consumed`](BitSource::flips_consumed)
/// by exactly one per successful [`next_bit`](BitSource::next_bit) call.
pub trait BitSource {
    /// Draws the next bit. Only scripted sources may fail, with
    /// [`Error::SourceExhausted`].
    fn next_bit(&mut self) -> Result<Bit>;

    fn flips_consumed(&self) -> u64;
}

impl<S: BitSource + ?Sized> BitSource for &mut S {
    fn next_bit(&mut self) -> Result<Bit> {
        (**self).next_bit()
    }

    fn flips_consumed(&self) -> u64 {
        (**self).flips_consumed()
    }
}

impl<S: BitSource + ?Sized> BitSource for Box<S> {
    fn next_bit(&mut self) -> Result<Bit> {
        (**self).next_bit()
    }

    fn flips_consumed(&self) -> u64 {
        (**self).flips_consumed()
    }
}

/// Plays back a fixed bit string, then reports exhaustion.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ReplaySource {
    bits: Vec<Bit>,
    cursor: usize,
}

impl ReplaySource {
    pub fn new(bits: impl Into<Vec<Bit>>) -> Self {
        Self {
            bits: bits.into(),
            cursor: 0,
        }
    }

    /// Builds a source from 0/1 integers; any nonzero value counts as 1.
    pub fn from_u8s(bits: &[u8]) -> Self {
        Self::new(bits.iter().map(|&b| Bit::from(b != 0)).collect::<Vec<_>>())
    }

    pub fn remaining(&self) -> usize {
        self.bits.len() - self.cursor
    }

    pub fn is_exhausted(&self) -> bool {
        self.remaining() == 0
    }
}

impl BitSource for ReplaySource {
    fn next_bit(&mut self) -> Result<Bit> {
        match self.bits.get(self.cursor) {
            Some(&b) => {
                self.cursor += 1;
                Ok(b)
            }
            None => Err(Error::SourceExhausted {
                consumed: self.cursor as u64,
            }),
        }
    }

    fn flips_consumed(&self) -> u64 {
        self.cursor as u64
    }
}

/// Adapts a word-oriented RNG into a bit stream.
#[derive(Debug, Clone)]
pub struct RngBits<R> {
    rng: R,
    word: u64,
    left: u32,
    consumed: u64,
}

impl<R: RngCore> RngBits<R> {
    pub fn new(rng: R) -> Self {
        Self {
            rng,
            word: 0,
            left: 0,
            consumed: 0,
        }
    }

    pub fn into_inner(self) -> R {
        self.rng
    }
}

impl<R: RngCore> BitSource for RngBits<R> {
    #[inline]
    fn next_bit(&mut self) -> Result<Bit> {
        if self.left == 0 {
            self.word = self.rng.next_u64();
            self.left = 64;
        }
        let b = self.word & 1;
        self.word >>= 1;
        self.left -= 1;
        self.consumed += 1;
        Ok(Bit::from(b == 1))
    }

    fn flips_consumed(&self) -> u64 {
        self.consumed
    }
}

/// The documented seeded generator: ChaCha8, LSB-first bit extraction.
pub type SeededSource = RngBits<ChaCha8Rng>;

pub fn make_seeded(seed: u64) -> SeededSource {
    RngBits::new(ChaCha8Rng::seed_from_u64(seed))
}
