//! Fair `n`-sided die from fair coin flips via randomness recycling.
//!
//! The state `(X, m)` always satisfies "`X` is uniform on `1..=m` given `m`".
//! Each flip doubles the die (`X <- X + B*m`, `m <- 2m`); once `m >= n` the
//! roll is accepted when `X <= n`, and otherwise the leftover `X - n` is kept
//! as a roll of a smaller `(m - n)`-sided die instead of being discarded.
//! The resulting coin-flip tree is the Knuth–Yao optimal one.
//!
//! Outcomes are 1-indexed, `1..=n`.

use crate::bitsource::{Bit, BitSource};
use crate::error::{Error, Result};
use crate::scalar::Word;

/// The recycler state: `x` is a roll of an `m`-sided die.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct RecyclerState<W> {
    pub x: W,
    pub m: W,
}

/// What happened to the state after a doubling was checked against `n`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Resolution<W> {
    /// `m` is still below `n`; keep doubling.
    Growing(RecyclerState<W>),
    /// `x <= n`: the state became `(x, n)` and `x` is the outcome.
    Accepted(RecyclerState<W>),
    /// `x > n`: the state became `(x - n, m - n)`.
    Recycled(RecyclerState<W>),
}

impl<W> Resolution<W> {
    pub fn state(&self) -> &RecyclerState<W> {
        match self {
            Resolution::Growing(s) | Resolution::Accepted(s) | Resolution::Recycled(s) => s,
        }
    }
}

impl<W: Word> RecyclerState<W> {
    pub fn new(x: W, m: W) -> Self {
        Self { x, m }
    }

    pub fn initial() -> Self {
        Self::new(W::one(), W::one())
    }

    /// `X <- X + B*m`, `m <- 2m`. The caller guarantees `2m` fits in `W`.
    #[inline]
    pub fn double(self, bit: Bit) -> Self {
        let x = if bit.is_one() { self.x + self.m } else { self.x };
        Self::new(x, self.m + self.m)
    }

    /// Applies the accept / recycle rules against a target die size `n`.
    #[inline]
    pub fn resolve(self, n: W) -> Resolution<W> {
        if self.m < n {
            Resolution::Growing(self)
        } else if self.x <= n {
            Resolution::Accepted(Self::new(self.x, n))
        } else {
            Resolution::Recycled(Self::new(self.x - n, self.m - n))
        }
    }
}

/// Which step of the algorithm produced a [`Snapshot`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Phase {
    Start,
    Doubled,
    Accepted,
    Recycled,
}

/// State after one step of a roll; `flips` counts bits consumed so far.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Snapshot<W> {
    pub flips: u64,
    pub phase: Phase,
    pub state: RecyclerState<W>,
}

/// Receiver for intermediate states. `()` discards them.
pub trait TraceSink<W> {
    fn record(&mut self, snapshot: Snapshot<W>);
}

impl<W> TraceSink<W> for () {
    #[inline(always)]
    fn record(&mut self, _: Snapshot<W>) {}
}

impl<W> TraceSink<W> for Vec<Snapshot<W>> {
    fn record(&mut self, snapshot: Snapshot<W>) {
        self.push(snapshot);
    }
}

/// Result of a single roll.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TracedRoll<W> {
    pub outcome: W,
    pub flips: u64,
    /// Present only for traced rolls.
    pub trace: Option<Vec<Snapshot<W>>>,
}

/// A validated die size.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct FairDie<W> {
    n: W,
}

impl<W: Word> FairDie<W> {
    /// Accepts `1 <= n <= W::max_die()`.
    pub fn new(n: W) -> Result<Self> {
        if n.is_zero() || n > W::max_die() {
            return Err(Error::DieOutOfRange {
                n: n.to_string(),
                max: W::max_die().to_string(),
            });
        }
        Ok(Self { n })
    }

    pub fn sides(&self) -> W {
        self.n
    }

    /// Runs one roll, reporting every state change to `sink`.
    ///
    /// On [`Error::SourceExhausted`] the sink keeps the partial trace.
    pub fn roll_with<S, T>(&self, source: &mut S, sink: &mut T) -> Result<(W, u64)>
    where
        S: BitSource + ?Sized,
        T: TraceSink<W>,
    {
        let n = self.n;
        let mut state = RecyclerState::initial();
        let mut flips = 0u64;
        sink.record(Snapshot {
            flips,
            phase: Phase::Start,
            state,
        });
        if n.is_one() {
            return Ok((state.x, 0));
        }
        loop {
            let bit = source.next_bit()?;
            flips += 1;
            state = state.double(bit);
            sink.record(Snapshot {
                flips,
                phase: Phase::Doubled,
                state,
            });
            match state.resolve(n) {
                Resolution::Growing(s) => state = s,
                Resolution::Accepted(s) => {
                    sink.record(Snapshot {
                        flips,
                        phase: Phase::Accepted,
                        state: s,
                    });
                    return Ok((s.x, flips));
                }
                Resolution::Recycled(s) => {
                    sink.record(Snapshot {
                        flips,
                        phase: Phase::Recycled,
                        state: s,
                    });
                    state = s;
                }
            }
        }
    }

    pub fn roll<S: BitSource + ?Sized>(&self, source: &mut S) -> Result<TracedRoll<W>> {
        let (outcome, flips) = self.roll_with(source, &mut ())?;
        Ok(TracedRoll {
            outcome,
            flips,
            trace: None,
        })
    }

    pub fn roll_traced<S: BitSource + ?Sized>(&self, source: &mut S) -> Result<TracedRoll<W>> {
        let mut trace = Vec::new();
        let (outcome, flips) = self.roll_with(source, &mut trace)?;
        Ok(TracedRoll {
            outcome,
            flips,
            trace: Some(trace),
        })
    }

    /// `count` consecutive rolls sharing one source.
    pub fn roll_many<S: BitSource + ?Sized>(
        &self,
        count: usize,
        source: &mut S,
    ) -> Result<Vec<TracedRoll<W>>> {
        (0..count).map(|_| self.roll(source)).collect()
    }
}

/// Rolls a fair `n`-sided die.
pub fn roll<W: Word, S: BitSource + ?Sized>(n: W, source: &mut S) -> Result<TracedRoll<W>> {
    FairDie::new(n)?.roll(source)
}

pub fn roll_many<W: Word, S: BitSource + ?Sized>(
    n: W,
    count: usize,
    source: &mut S,
) -> Result<Vec<TracedRoll<W>>> {
    FairDie::new(n)?.roll_many(count, source)
}
