//! Brute-force ground truth by exhaustive replay.
//!
//! Every bit history up to a depth bound is fed to a sampler through a
//! [`ReplaySource`]. A history on which the sampler terminates is a leaf; one
//! on which the source runs dry is still live and is extended by one bit in
//! both directions. Shared prefixes are therefore replayed once per node, and
//! the cost is proportional to the size of the materialised tree rather than
//! to `2^depth`.

use std::collections::BTreeMap;

use crate::analysis::FlipDistribution;
use crate::bitsource::{Bit, BitSource, ReplaySource};
use crate::discrete::ProbabilityVector;
use crate::error::{Error, Result};
use crate::scalar::Mass;
use crate::uniform::{FairDie, Phase, RecyclerState, Snapshot, TraceSink};
use crate::Rational;

/// Which sampler to drive.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SamplerKind {
    Uniform(FairDie<u64>),
    Discrete(ProbabilityVector),
}

impl SamplerKind {
    pub fn uniform(n: u64) -> Result<Self> {
        FairDie::new(n).map(SamplerKind::Uniform)
    }

    pub fn discrete(p: ProbabilityVector) -> Self {
        SamplerKind::Discrete(p)
    }

    /// Number of outcomes.
    pub fn outcomes(&self) -> usize {
        match self {
            SamplerKind::Uniform(die) => die.sides() as usize,
            SamplerKind::Discrete(p) => p.len(),
        }
    }

    /// The target distribution as an exact probability vector.
    pub fn distribution(&self) -> ProbabilityVector {
        match self {
            SamplerKind::Uniform(die) => {
                ProbabilityVector::uniform(die.sides()).expect("die has sides")
            }
            SamplerKind::Discrete(p) => p.clone(),
        }
    }

    /// Runs the sampler once; states are widened to `u64` for the sink.
    pub fn run<S, T>(&self, source: &mut S, sink: &mut T) -> Result<(usize, u64)>
    where
        S: BitSource + ?Sized,
        T: TraceSink<u64>,
    {
        match self {
            SamplerKind::Uniform(die) => die
                .roll_with(source, sink)
                .map(|(x, flips)| (x as usize, flips)),
            SamplerKind::Discrete(p) => p.sample_with(source, &mut Widen(sink)),
        }
    }
}

struct Widen<'a, T>(&'a mut T);

impl<T: TraceSink<u64>> TraceSink<usize> for Widen<'_, T> {
    fn record(&mut self, s: Snapshot<usize>) {
        self.0.record(Snapshot {
            flips: s.flips,
            phase: s.phase,
            state: RecyclerState::new(s.state.x as u64, s.state.m as u64),
        });
    }
}

/// One node of the replay tree.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Visit {
    pub history: String,
    /// `Some` if the sampler terminated on the last bit of `history`.
    pub outcome: Option<usize>,
    /// State right after the last doubling (absent at the root).
    pub doubled: Option<RecyclerState<u64>>,
    /// State after the last bit was fully processed.
    pub state: RecyclerState<u64>,
}

/// Every node of the sampler's tree down to `depth`, in depth-first order.
pub fn explore(kind: &SamplerKind, depth: u32) -> Vec<Visit> {
    let mut visits = Vec::new();
    let mut stack = vec![String::new()];
    while let Some(history) = stack.pop() {
        let bits = Bit::parse_history(&history).expect("0/1 history");
        let len = bits.len() as u64;
        let mut trace: Vec<Snapshot<u64>> = Vec::new();
        let outcome = match kind.run(&mut ReplaySource::new(bits), &mut trace) {
            Ok((outcome, flips)) => {
                debug_assert_eq!(flips, len, "leaf reached before the end of {history:?}");
                Some(outcome)
            }
            Err(Error::SourceExhausted { .. }) => None,
            Err(e) => panic!("replay failed on {history:?}: {e}"),
        };
        let doubled = trace
            .iter()
            .find(|s| s.flips == len && s.phase == Phase::Doubled)
            .map(|s| s.state);
        let state = trace.last().expect("start state is always recorded").state;
        if outcome.is_none() && (history.len() as u32) < depth {
            stack.push(format!("{history}1"));
            stack.push(format!("{history}0"));
        }
        visits.push(Visit {
            history,
            outcome,
            doubled,
            state,
        });
    }
    visits
}

/// Exact tallies from exhaustive replay.
#[derive(Debug, Clone, PartialEq)]
pub struct EnumerationResult<M> {
    pub depth: u32,
    pub outcome_mass: BTreeMap<usize, M>,
    pub flip_mass: BTreeMap<u32, M>,
    /// Mass of histories of length `depth` that have not terminated.
    pub live_mass: M,
    /// Terminating history -> outcome.
    pub leaf_histories: BTreeMap<String, usize>,
    pub live_histories: Vec<String>,
}

impl<M: Mass> EnumerationResult<M> {
    pub fn flip_distribution(&self) -> FlipDistribution<M> {
        FlipDistribution::from_masses(self.flip_mass.clone())
    }

    pub fn outcome(&self, i: usize) -> M {
        self.outcome_mass.get(&i).cloned().unwrap_or_else(M::zero)
    }

    /// `E[min(N, depth)]`.
    pub fn expected_flips_capped(&self) -> M {
        self.flip_distribution().expectation_capped(self.depth)
    }
}

/// Exhaustive replay with masses in any [`Mass`] type.
pub fn enumerate_with<M: Mass>(kind: &SamplerKind, depth: u32) -> EnumerationResult<M> {
    let mut out = EnumerationResult {
        depth,
        outcome_mass: BTreeMap::new(),
        flip_mass: BTreeMap::new(),
        live_mass: M::zero(),
        leaf_histories: BTreeMap::new(),
        live_histories: Vec::new(),
    };
    for visit in explore(kind, depth) {
        let level = visit.history.len() as u32;
        let w = M::dyadic(level);
        match visit.outcome {
            Some(i) => {
                let o = out.outcome_mass.entry(i).or_insert_with(M::zero);
                *o = o.clone() + w.clone();
                let f = out.flip_mass.entry(level).or_insert_with(M::zero);
                *f = f.clone() + w;
                out.leaf_histories.insert(visit.history, i);
            }
            None if level == depth => {
                out.live_mass = out.live_mass.clone() + w;
                out.live_histories.push(visit.history);
            }
            None => {}
        }
    }
    out.live_histories.sort();
    out
}

/// Exhaustive replay with exact rational masses.
pub fn enumerate(kind: &SamplerKind, depth: u32) -> EnumerationResult<Rational> {
    enumerate_with(kind, depth)
}

/// State after each bit history (post accept/recycle), for every history
/// that is reachable without terminating earlier.
pub fn state_tree(kind: &SamplerKind, depth: u32) -> BTreeMap<String, RecyclerState<u64>> {
    explore(kind, depth)
        .into_iter()
        .map(|v| (v.history, v.state))
        .collect()
}

/// Sorted multiset of [`state_tree`] states at each depth `0..=depth`.
pub fn states_by_level(kind: &SamplerKind, depth: u32) -> Vec<Vec<(u64, u64)>> {
    let mut levels = vec![Vec::new(); depth as usize + 1];
    for (h, s) in state_tree(kind, depth) {
        levels[h.len()].push((s.x, s.m));
    }
    for level in &mut levels {
        level.sort_unstable();
    }
    levels
}

/// When states are grouped.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Stage {
    /// After `X <- X + B m`, `m <- 2m` (and the initial state at depth 0).
    Doubled,
    /// After the accept / recycle step.
    Resolved,
}

/// An `m`-group whose `X` values are not uniformly weighted on `1..=m`.
#[derive(Debug, Clone, PartialEq)]
pub struct UniformityViolation {
    pub depth: u32,
    pub stage: Stage,
    pub m: u64,
    pub masses: BTreeMap<u64, Rational>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct UniformityReport {
    /// Number of `(depth, stage, m)` groups examined.
    pub groups: usize,
    pub violations: Vec<UniformityViolation>,
}

impl UniformityReport {
    pub fn holds(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Checks that, among all histories of a given length, the states sharing
/// a value of `m` put equal exact mass on every `X` in `1..=m`.
pub fn check_conditional_uniformity(kind: &SamplerKind, depth: u32) -> UniformityReport {
    type Groups = BTreeMap<(u32, Stage, u64), BTreeMap<u64, Rational>>;
    let mut groups: Groups = BTreeMap::new();
    let mut add = |level: u32, stage: Stage, s: RecyclerState<u64>| {
        let g = groups.entry((level, stage, s.m)).or_default();
        *g.entry(s.x).or_default() += Rational::dyadic(level);
    };
    for v in explore(kind, depth) {
        let level = v.history.len() as u32;
        add(level, Stage::Doubled, v.doubled.unwrap_or(v.state));
        add(level, Stage::Resolved, v.state);
    }
    let mut violations = Vec::new();
    let count = groups.len();
    for ((level, stage, m), masses) in groups {
        let first = masses.values().next().cloned();
        let uniform = masses.len() as u64 == m
            && masses.keys().copied().eq(1..=m)
            && masses.values().all(|w| Some(w) == first.as_ref());
        if !uniform {
            violations.push(UniformityViolation {
                depth: level,
                stage,
                m,
                masses,
            });
        }
    }
    UniformityReport {
        groups: count,
        violations,
    }
}
