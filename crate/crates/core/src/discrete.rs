//! Loaded dice: the recycler driven by the binary expansions of exact
//! rational probabilities.
//!
//! At flip `j` the sampler accepts into the set of outcomes whose
//! probability has a 1 in binary digit `j`. The recycler state tracks the
//! number of still-undecided tree positions, so every outcome lands on at
//! most one leaf per level and the induced tree is Knuth–Yao optimal.

use std::fmt;
use std::str::FromStr;

use num_bigint::{BigInt, BigUint};
use num_traits::{One, Signed, Zero};
use serde_json::Value;

use crate::bitsource::BitSource;
use crate::error::{Error, Result};
use crate::uniform::{Phase, RecyclerState, Resolution, Snapshot, TraceSink, TracedRoll};
use crate::Rational;

/// An exact probability vector over outcomes `1..=K`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ProbabilityVector {
    probs: Vec<Rational>,
    // Reduced numerator/denominator pairs, for digit extraction.
    parts: Vec<(BigUint, BigUint)>,
}

impl ProbabilityVector {
    /// Validates that every entry is non-negative and the entries sum to
    /// exactly one. No renormalisation is attempted.
    pub fn new(probs: Vec<Rational>) -> Result<Self> {
        if probs.is_empty() {
            return Err(Error::InvalidDistribution("no outcomes".into()));
        }
        if let Some((i, p)) = probs.iter().enumerate().find(|(_, p)| p.is_negative()) {
            return Err(Error::InvalidDistribution(format!(
                "probability of outcome {} is negative ({p})",
                i + 1
            )));
        }
        let total: Rational = probs.iter().sum();
        if !total.is_one() {
            return Err(Error::InvalidDistribution(format!(
                "probabilities sum to {total}, not 1"
            )));
        }
        let parts = probs
            .iter()
            .map(|p| {
                (
                    p.numer().to_biguint().expect("non-negative"),
                    p.denom().to_biguint().expect("positive"),
                )
            })
            .collect();
        Ok(Self { probs, parts })
    }

    /// `(1/n, ..., 1/n)`.
    pub fn uniform(n: u64) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidDistribution("no outcomes".into()));
        }
        let p = Rational::new(BigInt::one(), BigInt::from(n));
        Self::new(vec![p; n as usize])
    }

    /// `(c_1 / 2^level, ..., c_K / 2^level)`.
    pub fn dyadic(counts: &[u64], level: u32) -> Result<Self> {
        let den = BigInt::one() << level;
        Self::new(
            counts
                .iter()
                .map(|&c| Rational::new(BigInt::from(c), den.clone()))
                .collect(),
        )
    }

    /// Number of outcomes `K`.
    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    pub fn probs(&self) -> &[Rational] {
        &self.probs
    }

    /// Probability of `outcome` (1-indexed).
    pub fn prob(&self, outcome: usize) -> &Rational {
        &self.probs[outcome - 1]
    }

    /// The outcome with probability one, if any.
    pub fn certain_outcome(&self) -> Option<usize> {
        self.probs.iter().position(|p| p.is_one()).map(|i| i + 1)
    }

    /// Binary digit `level` of the probability of `outcome`:
    /// `floor(2^level p) mod 2`, so `p = 1` has digit 1 at level 0 only.
    ///
    /// Computed from the reduced fraction `a/b` as
    /// `(a * 2^level mod 2b) >= b`, with the power taken modulo `2b`.
    pub fn bit(&self, outcome: usize, level: u32) -> bool {
        let (a, b) = &self.parts[outcome - 1];
        if a.is_zero() {
            return false;
        }
        let two_b = b << 1u32;
        let scale = BigUint::from(2u32).modpow(&BigUint::from(level), &two_b);
        (a * scale) % &two_b >= *b
    }

    /// Outcomes with a 1 in binary digit `level`, ascending.
    pub fn acceptance_set(&self, level: u32) -> Vec<usize> {
        (1..=self.len()).filter(|&i| self.bit(i, level)).collect()
    }

    /// Streams the digits of `outcome`'s probability from level 1 on.
    pub fn expansion(&self, outcome: usize) -> BinaryExpansion {
        let (a, b) = &self.parts[outcome - 1];
        BinaryExpansion {
            rem: a % b,
            den: b.clone(),
        }
    }

    /// Reads either a JSON array of `{"num", "den"}` objects or a
    /// comma-separated list of `a/b` fractions.
    pub fn parse(input: &str) -> Result<Self> {
        if input.trim_start().starts_with('[') {
            Self::parse_json(input)
        } else {
            Self::parse_fractions(input)
        }
    }

    /// `"3/8,1/2,1/8"`. Plain integers are allowed; decimals are not.
    pub fn parse_fractions(input: &str) -> Result<Self> {
        let probs = input
            .split(',')
            .map(|tok| parse_fraction(tok.trim()))
            .collect::<Result<Vec<_>>>()?;
        Self::new(probs)
    }

    /// `[{"num": 3, "den": 8}, {"num": "1", "den": "2"}, ...]`. Numbers may be
    /// JSON integers or decimal-digit strings (for values beyond 64 bits).
    pub fn parse_json(input: &str) -> Result<Self> {
        let value: Value =
            serde_json::from_str(input).map_err(|e| Error::Parse(format!("invalid JSON: {e}")))?;
        let items = value
            .as_array()
            .ok_or_else(|| Error::Parse("expected a JSON array of {\"num\", \"den\"}".into()))?;
        let probs = items
            .iter()
            .enumerate()
            .map(|(i, item)| {
                let field = |name: &str| {
                    item.get(name)
                        .ok_or_else(|| Error::Parse(format!("entry {}: missing \"{name}\"", i + 1)))
                        .and_then(json_integer)
                };
                make_fraction(field("num")?, field("den")?)
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(probs)
    }

    /// Draws an outcome (1-indexed) with probability exactly `p_i`.
    pub fn sample<S: BitSource + ?Sized>(&self, source: &mut S) -> Result<TracedRoll<usize>> {
        let (outcome, flips) = self.sample_with(source, &mut ())?;
        Ok(TracedRoll {
            outcome,
            flips,
            trace: None,
        })
    }

    pub fn sample_traced<S: BitSource + ?Sized>(
        &self,
        source: &mut S,
    ) -> Result<TracedRoll<usize>> {
        let mut trace = Vec::new();
        let (outcome, flips) = self.sample_with(source, &mut trace)?;
        Ok(TracedRoll {
            outcome,
            flips,
            trace: Some(trace),
        })
    }

    /// Runs one draw, reporting every state change to `sink`.
    ///
    /// The acceptance sets are read level by level from exact digit
    /// streams; an empty set leaves the state untouched apart from the
    /// doubling.
    pub fn sample_with<S, T>(&self, source: &mut S, sink: &mut T) -> Result<(usize, u64)>
    where
        S: BitSource + ?Sized,
        T: TraceSink<usize>,
    {
        let mut state = RecyclerState::<usize>::initial();
        let mut flips = 0u64;
        sink.record(Snapshot {
            flips,
            phase: Phase::Start,
            state,
        });
        if let Some(i) = self.certain_outcome() {
            return Ok((i, 0));
        }
        let mut digits: Vec<BinaryExpansion> = (1..=self.len()).map(|i| self.expansion(i)).collect();
        let mut accept = Vec::with_capacity(self.len());
        loop {
            accept.clear();
            for (i, d) in digits.iter_mut().enumerate() {
                if d.next_digit() {
                    accept.push(i + 1);
                }
            }
            let n = accept.len();

            let bit = source.next_bit()?;
            flips += 1;
            state = state.double(bit);
            sink.record(Snapshot {
                flips,
                phase: Phase::Doubled,
                state,
            });
            match state.resolve(n) {
                Resolution::Accepted(s) => {
                    sink.record(Snapshot {
                        flips,
                        phase: Phase::Accepted,
                        state: s,
                    });
                    return Ok((accept[s.x - 1], flips));
                }
                Resolution::Recycled(s) => {
                    sink.record(Snapshot {
                        flips,
                        phase: Phase::Recycled,
                        state: s,
                    });
                    state = s;
                }
                Resolution::Growing(_) => {
                    unreachable!("undecided positions always cover the level's leaves")
                }
            }
        }
    }
}

impl FromStr for ProbabilityVector {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::parse(s)
    }
}

impl fmt::Display for ProbabilityVector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, p) in self.probs.iter().enumerate() {
            if i > 0 {
                f.write_str(",")?;
            }
            write!(f, "{}/{}", p.numer(), p.denom())?;
        }
        Ok(())
    }
}

/// Exact digit stream of a rational in `[0, 1]`, by remainder doubling.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BinaryExpansion {
    rem: BigUint,
    den: BigUint,
}

impl BinaryExpansion {
    #[inline]
    pub fn next_digit(&mut self) -> bool {
        self.rem <<= 1u32;
        if self.rem >= self.den {
            self.rem -= &self.den;
            true
        } else {
            false
        }
    }
}

impl Iterator for BinaryExpansion {
    type Item = bool;

    fn next(&mut self) -> Option<bool> {
        Some(self.next_digit())
    }
}

/// Outcomes whose probability has digit `level` equal to 1, ascending.
pub fn acceptance_set(p: &ProbabilityVector, level: u32) -> Vec<usize> {
    p.acceptance_set(level)
}

pub fn sample<S: BitSource + ?Sized>(
    p: &ProbabilityVector,
    source: &mut S,
) -> Result<TracedRoll<usize>> {
    p.sample(source)
}

fn parse_fraction(tok: &str) -> Result<Rational> {
    if tok.is_empty() {
        return Err(Error::Parse("empty probability entry".into()));
    }
    if tok.contains(['.', 'e', 'E']) {
        return Err(Error::Parse(format!(
            "'{tok}' is a decimal; give probabilities as exact fractions a/b, e.g. 3/8,1/2,1/8"
        )));
    }
    let (num, den) = match tok.split_once('/') {
        Some((n, d)) => (n.trim(), d.trim()),
        None => (tok, "1"),
    };
    let int = |s: &str| {
        s.parse::<BigInt>().map_err(|_| {
            Error::Parse(format!(
                "'{tok}' is not a fraction a/b of integers (example: 3/8,1/2,1/8)"
            ))
        })
    };
    make_fraction(int(num)?, int(den)?)
}

fn json_integer(v: &Value) -> Result<BigInt> {
    match v {
        Value::Number(n) => {
            if let Some(u) = n.as_u64() {
                Ok(BigInt::from(u))
            } else if let Some(i) = n.as_i64() {
                Ok(BigInt::from(i))
            } else {
                Err(Error::Parse(format!(
                    "{n} is not an integer; decimals are rejected to keep probabilities exact"
                )))
            }
        }
        Value::String(s) => s
            .trim()
            .parse::<BigInt>()
            .map_err(|_| Error::Parse(format!("\"{s}\" is not an integer"))),
        other => Err(Error::Parse(format!("expected an integer, got {other}"))),
    }
}

fn make_fraction(num: BigInt, den: BigInt) -> Result<Rational> {
    if den.is_zero() {
        return Err(Error::Parse("zero denominator".into()));
    }
    Ok(Rational::new(num, den))
}

/// `floor(2^level * p) - 2 floor(2^(level-1) * p)` evaluated on rationals.
/// Slower than [`ProbabilityVector::bit`]; kept as an independent route.
pub fn floor_difference_bit(p: &Rational, level: u32) -> bool {
    let pow2 = |e: i64| {
        if e >= 0 {
            Rational::from_integer(BigInt::one() << e as u32)
        } else {
            Rational::new(BigInt::one(), BigInt::one() << (-e) as u32)
        }
    };
    let hi = (p * pow2(level as i64)).floor().to_integer();
    let lo = (p * pow2(level as i64 - 1)).floor().to_integer();
    hi - lo * 2 == BigInt::one()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bitsource::{make_seeded, ReplaySource};
    use proptest::prelude::*;

    fn r(n: i64, d: i64) -> Rational {
        Rational::new(BigInt::from(n), BigInt::from(d))
    }

    fn fig2() -> ProbabilityVector {
        ProbabilityVector::new(vec![r(3, 8), r(1, 2), r(1, 8)]).unwrap()
    }

    #[test]
    fn figure_two_acceptance_sets() {
        let p = fig2();
        assert_eq!(acceptance_set(&p, 1), vec![2]);
        assert_eq!(acceptance_set(&p, 2), vec![1]);
        assert_eq!(acceptance_set(&p, 3), vec![1, 3]);
        assert!(acceptance_set(&p, 4).is_empty());
    }

    #[test]
    fn thirds_alternate() {
        let p = ProbabilityVector::new(vec![r(1, 3), r(2, 3)]).unwrap();
        let sets: Vec<_> = (1..=4).map(|j| acceptance_set(&p, j)).collect();
        assert_eq!(sets, vec![vec![2], vec![1], vec![2], vec![1]]);
    }

    #[test]
    fn one_has_finite_expansion() {
        let p = ProbabilityVector::new(vec![r(1, 1), r(0, 1)]).unwrap();
        assert_eq!(acceptance_set(&p, 0), vec![1]);
        for j in 1..10 {
            assert!(acceptance_set(&p, j).is_empty());
        }
        assert!(p.expansion(1).take(10).all(|b| !b));
    }

    #[test]
    fn rejects_bad_vectors() {
        assert!(matches!(
            ProbabilityVector::new(vec![]),
            Err(Error::InvalidDistribution(_))
        ));
        assert!(matches!(
            ProbabilityVector::new(vec![r(1, 2), r(1, 3)]),
            Err(Error::InvalidDistribution(_))
        ));
        assert!(matches!(
            ProbabilityVector::new(vec![r(3, 2), r(-1, 2)]),
            Err(Error::InvalidDistribution(_))
        ));
    }

    #[test]
    fn certain_outcome_fast_path() {
        let p = ProbabilityVector::new(vec![r(1, 1)]).unwrap();
        let t = p.sample(&mut ReplaySource::new(vec![])).unwrap();
        assert_eq!((t.outcome, t.flips), (1, 0));
        let p = ProbabilityVector::new(vec![r(0, 1), r(1, 1), r(0, 1)]).unwrap();
        let t = p.sample(&mut ReplaySource::new(vec![])).unwrap();
        assert_eq!((t.outcome, t.flips), (2, 0));
    }

    #[test]
    fn fair_coin_distribution() {
        let p = ProbabilityVector::new(vec![r(1, 2), r(1, 2)]).unwrap();
        let t = p.sample(&mut ReplaySource::from_u8s(&[1])).unwrap();
        assert_eq!((t.outcome, t.flips), (2, 1));
        let t = p.sample(&mut ReplaySource::from_u8s(&[0])).unwrap();
        assert_eq!((t.outcome, t.flips), (1, 1));
    }

    #[test]
    fn figure_two_paths() {
        let p = fig2();
        let cases: [(&[u8], usize, u64); 4] = [
            (&[0], 2, 1),
            (&[1, 0], 1, 2),
            (&[1, 1, 0], 1, 3),
            (&[1, 1, 1], 3, 3),
        ];
        for (bits, outcome, flips) in cases {
            let t = p.sample(&mut ReplaySource::from_u8s(bits)).unwrap();
            assert_eq!((t.outcome, t.flips), (outcome, flips), "{bits:?}");
        }
    }

    #[test]
    fn empty_levels_only_double() {
        // 1/4 each: nothing accepted at level 1, everything at level 2.
        let p = ProbabilityVector::dyadic(&[1, 1, 1, 1], 2).unwrap();
        let t = p.sample_traced(&mut ReplaySource::from_u8s(&[1, 1])).unwrap();
        assert_eq!((t.outcome, t.flips), (4, 2));
        let phases: Vec<_> = t.trace.unwrap().iter().map(|s| (s.phase, s.state.x, s.state.m)).collect();
        assert_eq!(
            phases,
            vec![
                (Phase::Start, 1, 1),
                (Phase::Doubled, 2, 2),
                (Phase::Recycled, 2, 2),
                (Phase::Doubled, 4, 4),
                (Phase::Accepted, 4, 4),
            ]
        );
    }

    #[test]
    fn parses_fraction_lists() {
        let p: ProbabilityVector = "3/8, 1/2 ,1/8".parse().unwrap();
        assert_eq!(p, fig2());
        assert_eq!(p.to_string(), "3/8,1/2,1/8");
        let p = ProbabilityVector::parse("1").unwrap();
        assert_eq!(p.len(), 1);
        let p = ProbabilityVector::parse("2/6,4/6").unwrap();
        assert_eq!(p.prob(1), &r(1, 3));
    }

    #[test]
    fn rejects_decimals_with_format_hint() {
        let err = ProbabilityVector::parse("0.5,0.5").unwrap_err();
        match err {
            Error::Parse(msg) => assert!(msg.contains("a/b"), "{msg}"),
            other => panic!("{other:?}"),
        }
        assert!(matches!(
            ProbabilityVector::parse("1/0,1"),
            Err(Error::Parse(_))
        ));
        assert!(matches!(
            ProbabilityVector::parse("x/2,1/2"),
            Err(Error::Parse(_))
        ));
        assert!(matches!(
            ProbabilityVector::parse("1/2,1/3"),
            Err(Error::InvalidDistribution(_))
        ));
    }

    #[test]
    fn parses_json() {
        let p = ProbabilityVector::parse(
            r#"[{"num": 3, "den": 8}, {"num": "1", "den": "2"}, {"num": 1, "den": 8}]"#,
        )
        .unwrap();
        assert_eq!(p, fig2());
        assert!(matches!(
            ProbabilityVector::parse(r#"[{"num": 0.5, "den": 1}, {"num": 1, "den": 2}]"#),
            Err(Error::Parse(_))
        ));
        assert!(matches!(
            ProbabilityVector::parse(r#"[{"num": 1}]"#),
            Err(Error::Parse(_))
        ));
        let big = format!(
            r#"[{{"num": "1", "den": "{0}"}}, {{"num": "{1}", "den": "{0}"}}]"#,
            BigInt::one() << 100u32,
            (BigInt::one() << 100u32) - 1
        );
        assert_eq!(ProbabilityVector::parse(&big).unwrap().len(), 2);
    }

    #[test]
    fn sampled_frequencies_match() {
        let p = fig2();
        let mut src = make_seeded(99);
        let mut counts = [0u32; 3];
        let total = 80_000;
        for _ in 0..total {
            counts[p.sample(&mut src).unwrap().outcome - 1] += 1;
        }
        for (c, want) in counts.iter().zip([0.375, 0.5, 0.125]) {
            let f = *c as f64 / total as f64;
            // 4 sigma at the largest variance cell
            assert!((f - want).abs() < 0.0071, "{counts:?}");
        }
    }

    fn dyadic_strategy() -> impl Strategy<Value = Vec<u64>> {
        prop::collection::vec(0u64..=1024, 0..7).prop_map(|cuts| {
            let mut cuts = cuts;
            cuts.push(0);
            cuts.push(1024);
            cuts.sort_unstable();
            cuts.windows(2).map(|w| w[1] - w[0]).collect()
        })
    }

    proptest! {
        #[test]
        fn digit_routes_agree(counts in dyadic_strategy(), extra in 1u64..50) {
            let p = ProbabilityVector::dyadic(&counts, 10).unwrap();
            for i in 1..=p.len() {
                let streamed: Vec<bool> = p.expansion(i).take(12).collect();
                for j in 1..=12u32 {
                    let formula = floor_difference_bit(p.prob(i), j);
                    prop_assert_eq!(p.bit(i, j), formula);
                    prop_assert_eq!(streamed[j as usize - 1], formula);
                }
            }
            // Non-dyadic denominators too.
            let q = ProbabilityVector::new(vec![r(1, extra as i64 + 2), r(extra as i64 + 1, extra as i64 + 2)]).unwrap();
            for i in 1..=2 {
                let streamed: Vec<bool> = q.expansion(i).take(40).collect();
                for j in 0..=40u32 {
                    let formula = floor_difference_bit(q.prob(i), j);
                    prop_assert_eq!(q.bit(i, j), formula);
                    if j > 0 {
                        prop_assert_eq!(streamed[j as usize - 1], formula);
                    }
                }
            }
        }

        #[test]
        fn sampled_outcome_has_mass(counts in dyadic_strategy(), seed in any::<u64>()) {
            let p = ProbabilityVector::dyadic(&counts, 10).unwrap();
            let t = p.sample_traced(&mut make_seeded(seed)).unwrap();
            prop_assert!(!p.prob(t.outcome).is_zero());
            prop_assert!(t.flips <= 10);
            if t.flips > 0 {
                prop_assert!(p.bit(t.outcome, t.flips as u32));
            }
            for s in t.trace.unwrap() {
                prop_assert!(1 <= s.state.x && s.state.x <= s.state.m);
            }
        }
    }
}
