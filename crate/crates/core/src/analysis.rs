//! Exact expected-flip analysis.
//!
//! Two independent routes to `E[N]` for a fair die are provided:
//!
//! * [`exact_expected_flips`] solves the recycler recurrence. From a die of
//!   size `s < n` the sampler flips `k(s) = ceil(log2(n/s))` coins to reach
//!   `s' = s 2^k(s)`, accepts with probability `n/s'`, and otherwise continues
//!   from `r(s) = s' - n`. Each `s` has a single successor, so the walk from
//!   `s = 1` is a tail followed by at most one cycle.
//! * [`expected_flips_canonical`] sums `j * P(N = j)` over the optimal tree
//!   in closed form, using the eventual periodicity of binary expansions.

use std::collections::BTreeMap;

use num_bigint::{BigInt, BigUint};
use num_integer::Integer;
use num_traits::{One, ToPrimitive, Zero};
use serde::Serialize;

use crate::discrete::ProbabilityVector;
use crate::error::{Error, Result};
use crate::scalar::Mass;
use crate::Rational;

/// Exact law of the flip count `N`, materialised to some depth.
#[derive(Debug, Clone, PartialEq)]
pub struct FlipDistribution<M> {
    mass: BTreeMap<u32, M>,
    residual: M,
}

impl<M: Mass> FlipDistribution<M> {
    /// From per-level masses; the residual is whatever is missing from 1.
    pub fn from_masses(mass: BTreeMap<u32, M>) -> Self {
        let total = mass.values().fold(M::zero(), |acc, m| acc + m.clone());
        let residual = M::one() - total;
        Self { mass, residual }
    }

    /// From per-level leaf counts (`count * 2^-level` each).
    pub fn from_leaf_counts(counts: impl IntoIterator<Item = (u32, u64)>) -> Self {
        let mut mass = BTreeMap::new();
        for (level, count) in counts {
            if count == 0 {
                continue;
            }
            let entry = mass.entry(level).or_insert_with(M::zero);
            *entry = entry.clone() + M::dyadic_count(count, level);
        }
        Self::from_masses(mass)
    }

    /// `P(N = level)`.
    pub fn mass_at(&self, level: u32) -> M {
        self.mass.get(&level).cloned().unwrap_or_else(M::zero)
    }

    pub fn masses(&self) -> &BTreeMap<u32, M> {
        &self.mass
    }

    /// Probability not yet resolved at the materialised depth.
    pub fn residual(&self) -> &M {
        &self.residual
    }

    pub fn is_complete(&self) -> bool {
        self.residual.is_zero()
    }

    /// Deepest level carrying mass.
    pub fn max_level(&self) -> u32 {
        self.mass.keys().next_back().copied().unwrap_or(0)
    }

    /// `P(N > level)`, counting the residual as "more than any level".
    pub fn tail(&self, level: u32) -> M {
        self.mass
            .range(level + 1..)
            .fold(self.residual.clone(), |acc, (_, m)| acc + m.clone())
    }

    /// `sum_j j P(N = j)` over the materialised levels.
    pub fn expectation_resolved(&self) -> M {
        self.mass.iter().fold(M::zero(), |acc, (&j, m)| {
            acc + M::from_u32(j).expect("level representable") * m.clone()
        })
    }

    /// `E[min(N, depth)]`: unresolved paths are charged `depth` flips.
    pub fn expectation_capped(&self, depth: u32) -> M {
        self.expectation_resolved()
            + M::from_u32(depth).expect("level representable") * self.residual.clone()
    }
}

/// `true` iff `P(N_a > i) <= P(N_b > i)` at every level `i`.
pub fn dominates<M: Mass>(a: &FlipDistribution<M>, b: &FlipDistribution<M>) -> bool {
    let top = a.max_level().max(b.max_level());
    (0..=top).all(|i| a.tail(i) <= b.tail(i))
}

/// `ceil(log2 n)` for `n >= 1`.
pub fn ceil_log2(n: u64) -> u32 {
    assert!(n >= 1, "log of zero");
    n.next_power_of_two().trailing_zeros()
}

/// Exact `E[N]` for the fair `n`-sided die, from the recycler recurrence.
///
/// Along the walk `s_0 = 1, s_1, ...` the probability of reaching step `i`
/// telescopes to `s_i / 2^{K_i}` with `K_i = k_0 + ... + k_{i-1}`, so
/// `E = sum_i k_i s_i 2^{-K_i}`. The tail and one lap of the cycle are summed
/// as integers by Horner's rule and the cycle is closed with the factor
/// `1 / (1 - 2^{-K_cycle})`.
pub fn exact_expected_flips(n: u64) -> Rational {
    assert!(n >= 1, "die needs at least one side");
    let walk = RecyclerWalk::new(n);
    let horner = |steps: &[WalkStep]| {
        steps.iter().fold(BigUint::zero(), |acc, st| {
            (acc + BigUint::from(st.k) * BigUint::from(st.s)) << st.k
        })
    };
    let tail_bits: u64 = walk.tail().iter().map(|st| st.k as u64).sum();
    let tail_sum = horner(walk.tail());
    let tail_scale = BigUint::one() << tail_bits;
    match walk.cycle() {
        None => Rational::new(tail_sum.into(), tail_scale.into()),
        Some(cycle) => {
            let cycle_bits: u64 = cycle.iter().map(|st| st.k as u64).sum();
            let lap = (BigUint::one() << cycle_bits) - 1u32;
            let cycle_sum = horner(cycle);
            let numer = tail_sum * &lap + cycle_sum;
            Rational::new(numer.into(), (tail_scale * lap).into())
        }
    }
}

/// Exact `E[N]` plus the expected number of visits to each die size.
#[derive(Debug, Clone, PartialEq)]
pub struct RecurrenceSolution {
    pub expected_flips: Rational,
    /// Die size `s` at the start of a doubling run -> expected visits.
    pub visit_states: BTreeMap<u64, Rational>,
}

/// Solves `E(s) = k(s) + (1 - n/s') E(r(s))` by back-substitution through the
/// cycle, with general rational arithmetic. Slower than
/// [`exact_expected_flips`]; intended for diagnostics and cross-checks.
pub fn solve_recurrence(n: u64) -> RecurrenceSolution {
    assert!(n >= 1, "die needs at least one side");
    let walk = RecyclerWalk::new(n);
    let big = |v: u64| Rational::from_integer(BigInt::from(v));
    // Continuation probability after step i: r / s'.
    let cont = |st: &WalkStep| Rational::new(BigInt::from(st.r), BigInt::from(st.s_prime));

    // E at the cycle entry: E_c = A + C E_c.
    let entry_value = walk.cycle().map(|cycle| {
        let (a, c) = cycle
            .iter()
            .rev()
            .fold((Rational::zero(), Rational::one()), |(a, c), st| {
                (big(st.k as u64) + cont(st) * a, cont(st) * c)
            });
        a / (Rational::one() - c)
    });
    let mut e = entry_value.unwrap_or_else(Rational::zero);
    for st in walk.tail().iter().rev() {
        e = big(st.k as u64) + cont(st) * e;
    }

    // Expected visits: v_0 = 1, v_{i+1} = v_i r_i / s'_i, then the cycle
    // repeats with total continuation probability C.
    let mut visits = BTreeMap::new();
    let mut v = Rational::one();
    for st in walk.tail() {
        visits.insert(st.s, v.clone());
        v *= cont(st);
    }
    if let Some(cycle) = walk.cycle() {
        let c: Rational = cycle.iter().map(cont).product();
        v /= Rational::one() - c;
        for st in cycle {
            visits.insert(st.s, v.clone());
            v *= cont(st);
        }
    }
    RecurrenceSolution {
        expected_flips: e,
        visit_states: visits,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct WalkStep {
    s: u64,
    k: u32,
    s_prime: u64,
    r: u64,
}

/// The deterministic sequence of die sizes visited from `s = 1`.
#[derive(Debug)]
struct RecyclerWalk {
    steps: Vec<WalkStep>,
    cycle_start: Option<usize>,
}

impl RecyclerWalk {
    fn new(n: u64) -> Self {
        let mut steps = Vec::new();
        let mut seen: BTreeMap<u64, usize> = BTreeMap::new();
        let mut s = 1u64;
        if n == 1 {
            return Self {
                steps,
                cycle_start: None,
            };
        }
        loop {
            if let Some(&at) = seen.get(&s) {
                return Self {
                    steps,
                    cycle_start: Some(at),
                };
            }
            seen.insert(s, steps.len());
            let k = ceil_log2(n.div_ceil(s));
            let s_prime = s << k;
            debug_assert!(s_prime >= n && s_prime < 2 * n);
            let r = s_prime - n;
            steps.push(WalkStep { s, k, s_prime, r });
            if r == 0 {
                // s' = n: acceptance is certain.
                return Self {
                    steps,
                    cycle_start: None,
                };
            }
            s = r;
        }
    }

    fn tail(&self) -> &[WalkStep] {
        &self.steps[..self.cycle_start.unwrap_or(self.steps.len())]
    }

    fn cycle(&self) -> Option<&[WalkStep]> {
        self.cycle_start.map(|c| &self.steps[c..])
    }
}

/// Flip-count law of the optimal tree for a fair `n`-sided die:
/// `P(N = j) = n * bit_j(1/n) * 2^-j` for `j <= depth`.
pub fn flip_distribution_uniform<M: Mass>(n: u64, depth: u32) -> FlipDistribution<M> {
    assert!(n >= 1, "die needs at least one side");
    if n == 1 {
        return FlipDistribution::from_leaf_counts([(0, 1)]);
    }
    let n_big = BigUint::from(n);
    let mut rem = BigUint::one();
    let counts = (1..=depth).map(|j| {
        rem <<= 1u32;
        let bit = rem >= n_big;
        if bit {
            rem -= &n_big;
        }
        (j, if bit { n } else { 0 })
    });
    FlipDistribution::from_leaf_counts(counts.collect::<Vec<_>>())
}

/// Default cap on the expansion period handled by the closed-form sums.
pub const PERIOD_LIMIT: u64 = 1 << 22;

/// Exact `E[N]` of the Knuth–Yao optimal tree for `p`,
/// `sum_i sum_j j bit_j(p_i) 2^-j`, summed in closed form.
pub fn expected_flips_canonical(p: &ProbabilityVector) -> Result<Rational> {
    if p.certain_outcome().is_some() {
        return Ok(Rational::zero());
    }
    p.probs().iter().try_fold(Rational::zero(), |acc, pi| {
        Ok(acc + digit_series(pi, PERIOD_LIMIT)?.weighted)
    })
}

/// Closed-form sums over the binary digits of `p` in `[0, 1)`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DigitSeries {
    /// `sum_{j >= 1} bit_j 2^-j` (reproduces `p`).
    pub plain: Rational,
    /// `sum_{j >= 1} j bit_j 2^-j`.
    pub weighted: Rational,
    /// Number of digits before the repeating block.
    pub preperiod: u32,
    /// Length of the repeating block (0 for terminating expansions).
    pub period: u64,
}

/// For `p = a / (2^e q)` with `q` odd the digits `j > e` repeat with period
/// `ord_q(2)`. With `x = 2^-T`, one block contributes `S1` and `S0` (plain and
/// weighted) and the full series is `S1/(1-x)` and `S0/(1-x) + T S1 x/(1-x)^2`.
pub fn digit_series(p: &Rational, period_limit: u64) -> Result<DigitSeries> {
    let zero = Rational::zero();
    if *p < zero || *p >= Rational::one() {
        return Err(Error::InvalidDistribution(format!(
            "digit series needs 0 <= p < 1, got {p}"
        )));
    }
    let a = p.numer().to_biguint().expect("non-negative");
    let b = p.denom().to_biguint().expect("positive");
    let e = b.trailing_zeros().unwrap_or(0) as u32;
    let q = &b >> e;
    let period = if q.is_one() {
        0
    } else {
        multiplicative_order_of_two(&q, period_limit)?
    };
    let block_end = e as u64 + period;

    let mut rem = a;
    let mut plain = zero.clone();
    let mut weighted = zero.clone();
    let mut block_plain = zero.clone();
    let mut block_weighted = zero.clone();
    for j in 1..=block_end {
        rem <<= 1u32;
        if rem >= b {
            rem -= &b;
            let term = Rational::new(BigInt::one(), BigInt::one() << j);
            let jt = &term * Rational::from_integer(BigInt::from(j));
            if j <= e as u64 {
                plain += &term;
                weighted += &jt;
            } else {
                block_plain += &term;
                block_weighted += &jt;
            }
        }
    }
    if period > 0 {
        let x = Rational::new(BigInt::one(), BigInt::one() << period);
        let one_minus = Rational::one() - &x;
        let t = Rational::from_integer(BigInt::from(period));
        plain += &block_plain / &one_minus;
        weighted += &block_weighted / &one_minus + t * &block_plain * &x / (&one_minus * &one_minus);
    }
    Ok(DigitSeries {
        plain,
        weighted,
        preperiod: e,
        period,
    })
}

/// Smallest `t >= 1` with `2^t = 1 (mod q)`, for odd `q > 1`.
pub fn multiplicative_order_of_two(q: &BigUint, limit: u64) -> Result<u64> {
    assert!(q.is_odd() && !q.is_one(), "order of 2 needs odd modulus > 1");
    if let Some(q) = q.to_u64() {
        let q = q as u128;
        let mut v = 2 % q;
        let mut t = 1u64;
        while v != 1 {
            if t >= limit {
                return Err(Error::PeriodTooLong { limit });
            }
            v = v * 2 % q;
            t += 1;
        }
        return Ok(t);
    }
    let mut v = BigUint::from(2u32) % q;
    let mut t = 1u64;
    while !v.is_one() {
        if t >= limit {
            return Err(Error::PeriodTooLong { limit });
        }
        v = (v << 1u32) % q;
        t += 1;
    }
    Ok(t)
}

/// One line of the bounds sweep.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundRow {
    pub n: u64,
    #[serde(serialize_with = "ser_numer")]
    pub expected_num: BigInt,
    #[serde(serialize_with = "ser_numer")]
    pub expected_den: BigInt,
    pub lower: u32,
    pub upper: u32,
}

fn ser_numer<S: serde::Serializer>(v: &BigInt, s: S) -> std::result::Result<S::Ok, S::Error> {
    match v.to_u64() {
        Some(u) => s.serialize_u64(u),
        None => s.serialize_str(&v.to_string()),
    }
}

impl BoundRow {
    pub fn expected(&self) -> Rational {
        Rational::new(self.expected_num.clone(), self.expected_den.clone())
    }

    /// `upper - E[N]`.
    pub fn slack(&self) -> Rational {
        Rational::from_integer(BigInt::from(self.upper)) - self.expected()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BoundsReport {
    pub rows: Vec<BoundRow>,
    /// `n` with the largest `upper - E[N]`, and that slack.
    pub max_slack: (u64, Rational),
    /// `n` with the smallest `upper - E[N]`, and that slack.
    pub min_slack: (u64, Rational),
}

/// Checks `ceil(log2 n) <= E[N] <= ceil(log2 n) + 1` for `n = 1..=n_max`.
pub fn verify_bounds(n_max: u64) -> Result<BoundsReport> {
    assert!(n_max >= 1, "empty sweep");
    let mut rows = Vec::with_capacity(n_max as usize);
    let mut max_slack: Option<(u64, Rational)> = None;
    let mut min_slack: Option<(u64, Rational)> = None;
    for n in 1..=n_max {
        let expected = exact_expected_flips(n);
        let lower = ceil_log2(n);
        let upper = lower + 1;
        let row = BoundRow {
            n,
            expected_num: expected.numer().clone(),
            expected_den: expected.denom().clone(),
            lower,
            upper,
        };
        let lo = Rational::from_integer(BigInt::from(lower));
        let hi = Rational::from_integer(BigInt::from(upper));
        if expected < lo || expected > hi {
            return Err(Error::BoundViolation {
                n,
                expected: expected.to_string(),
                lower,
                upper,
            });
        }
        let slack = row.slack();
        if max_slack.as_ref().is_none_or(|(_, s)| slack > *s) {
            max_slack = Some((n, slack.clone()));
        }
        if min_slack.as_ref().is_none_or(|(_, s)| slack < *s) {
            min_slack = Some((n, slack));
        }
        rows.push(row);
    }
    Ok(BoundsReport {
        rows,
        max_slack: max_slack.expect("non-empty"),
        min_slack: min_slack.expect("non-empty"),
    })
}

/// Shannon entropy in bits, in `f64`. Reporting only; never used in exact
/// comparisons.
pub fn entropy(p: &ProbabilityVector) -> f64 {
    p.probs()
        .iter()
        .map(|pi| pi.to_f64().unwrap_or(0.0))
        .filter(|&x| x > 0.0)
        .map(|x| -x * x.log2())
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_rational::Ratio;

    fn q(n: i64, d: i64) -> Rational {
        Rational::new(BigInt::from(n), BigInt::from(d))
    }

    #[test]
    fn five_sided_die_is_eighteen_fifths() {
        assert_eq!(exact_expected_flips(5), q(18, 5));
        // The same value from E = 3 + (3/8)(1 + E/6).
        let e = q(18, 5);
        assert_eq!(e.clone(), q(3, 1) + q(3, 8) * (q(1, 1) + e / q(6, 1)));
    }

    #[test]
    fn small_dice() {
        assert_eq!(exact_expected_flips(1), q(0, 1));
        assert_eq!(exact_expected_flips(2), q(1, 1));
        assert_eq!(exact_expected_flips(4), q(2, 1));
        assert_eq!(exact_expected_flips(8), q(3, 1));
        // E = 2 + E/4
        assert_eq!(exact_expected_flips(3), q(8, 3));
    }

    #[test]
    fn recurrence_routes_agree() {
        for n in 1..=200 {
            let fast = exact_expected_flips(n);
            let sol = solve_recurrence(n);
            assert_eq!(fast, sol.expected_flips, "n = {n}");
            // E = sum over visited sizes of visits * k(s).
            let via_visits: Rational = sol
                .visit_states
                .iter()
                .map(|(&s, v)| v * q(ceil_log2(n.div_ceil(s)) as i64, 1))
                .sum();
            assert_eq!(via_visits, fast, "n = {n}");
        }
    }

    #[test]
    fn five_visits() {
        let sol = solve_recurrence(5);
        // 1 -> 8 (k=3), r=3 -> 6 (k=1), r=1: cycle of length 2 with
        // continuation (3/8)(1/6) = 1/16.
        assert_eq!(sol.visit_states[&1], q(16, 15));
        assert_eq!(sol.visit_states[&3], q(16, 15) * q(3, 8));
    }

    #[test]
    fn uniform_flip_law_for_five() {
        let d: FlipDistribution<Rational> = flip_distribution_uniform(5, 8);
        assert_eq!(d.mass_at(1), q(0, 1));
        assert_eq!(d.mass_at(3), q(5, 8));
        assert_eq!(d.mass_at(4), q(5, 16));
        assert_eq!(d.mass_at(5), q(0, 1));
        assert_eq!(d.mass_at(7), q(5, 128));
        assert_eq!(d.mass_at(8), q(5, 256));
        assert_eq!(d.residual().clone(), q(1, 256));
        assert_eq!(d.tail(4), q(1, 16));

        let two: FlipDistribution<Rational> = flip_distribution_uniform(2, 4);
        assert_eq!(two.mass_at(1), q(1, 1));
        assert!(two.is_complete());

        let six: FlipDistribution<Rational> = flip_distribution_uniform(6, 6);
        // 1/6 = 0.0010101...
        assert_eq!(six.mass_at(3), q(3, 4));
        assert_eq!(six.mass_at(4), q(0, 1));
        assert_eq!(six.mass_at(5), q(6, 32));
    }

    #[test]
    fn flip_law_in_floats() {
        let d: FlipDistribution<f64> = flip_distribution_uniform(5, 40);
        assert!((d.expectation_resolved() - 3.6).abs() < 1e-9);
        let d: FlipDistribution<Ratio<i64>> = flip_distribution_uniform(5, 24);
        let gap = Ratio::new(18, 5) - d.expectation_resolved();
        assert!(gap > Ratio::new(0, 1) && gap < Ratio::new(1, 1 << 18));
    }

    #[test]
    fn closed_form_series() {
        let s = digit_series(&q(1, 3), PERIOD_LIMIT).unwrap();
        assert_eq!((s.preperiod, s.period), (0, 2));
        assert_eq!(s.plain, q(1, 3));
        // sum_k 2k 4^-k
        assert_eq!(s.weighted, q(8, 9));
        let s = digit_series(&q(3, 8), PERIOD_LIMIT).unwrap();
        assert_eq!(s.plain, q(3, 8));
        assert_eq!(s.weighted, q(2, 4) + q(3, 8));
        let s = digit_series(&q(5, 12), PERIOD_LIMIT).unwrap();
        assert_eq!(s.plain, q(5, 12));
    }

    #[test]
    fn tree_series_matches_recurrence() {
        for n in 1..=64 {
            let p = ProbabilityVector::uniform(n).unwrap();
            assert_eq!(
                expected_flips_canonical(&p).unwrap(),
                exact_expected_flips(n),
                "n = {n}"
            );
        }
    }

    #[test]
    fn figure_two_expectation() {
        let p = ProbabilityVector::new(vec![q(3, 8), q(1, 2), q(1, 8)]).unwrap();
        assert_eq!(expected_flips_canonical(&p).unwrap(), q(7, 4));
    }

    #[test]
    fn bounds_small_sweep() {
        let report = verify_bounds(5).unwrap();
        assert_eq!(report.rows.len(), 5);
        assert_eq!(report.rows[4].slack(), q(2, 5));
        for k in 0..10u32 {
            let n = 1u64 << k;
            let e = exact_expected_flips(n);
            assert_eq!(e, q(k as i64, 1));
            assert_eq!(ceil_log2(n), k);
        }
        // Powers of two meet the lower bound, so max slack is exactly 1.
        assert_eq!(report.max_slack.1, q(1, 1));
    }

    #[test]
    fn period_limit_is_enforced() {
        // ord_1000003(2) is large.
        let err = digit_series(&q(1, 1_000_003), 100).unwrap_err();
        assert_eq!(err, Error::PeriodTooLong { limit: 100 });
        assert_eq!(
            multiplicative_order_of_two(&BigUint::from(7u32), 100).unwrap(),
            3
        );
        let big = (BigUint::one() << 70u32) - 1u32;
        assert_eq!(multiplicative_order_of_two(&big, 1000).unwrap(), 70);
    }

    #[test]
    fn entropy_values() {
        let half = ProbabilityVector::new(vec![q(1, 2), q(1, 2)]).unwrap();
        assert_eq!(entropy(&half), 1.0);
        let fig = ProbabilityVector::new(vec![q(3, 8), q(1, 2), q(1, 8)]).unwrap();
        assert!((entropy(&fig) - 1.405_639_062_229_566).abs() < 1e-12);
        assert_eq!(entropy(&ProbabilityVector::new(vec![q(1, 1)]).unwrap()), 0.0);
    }

    #[test]
    fn dominance_basics() {
        let right: FlipDistribution<Rational> =
            FlipDistribution::from_leaf_counts([(1, 1), (2, 1), (3, 2)]);
        let left: FlipDistribution<Rational> = FlipDistribution::from_leaf_counts([(3, 8)]);
        assert!(dominates(&right, &left));
        assert!(!dominates(&left, &right));
        assert!(dominates(&left, &left));
        assert_eq!(right.expectation_resolved(), q(7, 4));
        assert_eq!(left.mass_at(3), q(1, 1));
    }
}
