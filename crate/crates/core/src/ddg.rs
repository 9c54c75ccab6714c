//! Discrete distribution generating (DDG) trees.
//!
//! A tree is stored by position: every node is keyed by its bit history
//! from the root (`""` is the root, `"01"` is the right child of the left
//! child), with bit 0 taking the left branch. Trees that would be infinite
//! are cut at `depth_bound`; unresolved frontier nodes are kept as
//! [`Node::Pending`] and their mass is reported as residual.

use std::collections::BTreeMap;
use std::fmt::{self, Write as _};

use num_traits::Zero;

use crate::analysis::FlipDistribution;
use crate::bitsource::ReplaySource;
use crate::discrete::ProbabilityVector;
use crate::error::{Error, Result};
use crate::oracle::SamplerKind;
use crate::scalar::Mass;
use crate::Rational;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Node {
    Internal,
    /// Emits this outcome (1-indexed).
    Leaf(usize),
    /// Frontier node whose subtree was not materialised.
    Pending,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DdgTree {
    nodes: BTreeMap<String, Node>,
    depth_bound: u32,
}

impl DdgTree {
    /// Validates that the root exists, every internal node has both children,
    /// every other node hangs under an internal node, and no node lies
    /// below `depth_bound`.
    pub fn from_nodes(nodes: BTreeMap<String, Node>, depth_bound: u32) -> Result<Self> {
        if !nodes.contains_key("") {
            return Err(Error::MalformedTree("missing root".into()));
        }
        for (h, node) in &nodes {
            if h.chars().any(|c| c != '0' && c != '1') {
                return Err(Error::MalformedTree(format!("bad history {h:?}")));
            }
            if h.len() as u32 > depth_bound {
                return Err(Error::MalformedTree(format!(
                    "node {h:?} lies below depth bound {depth_bound}"
                )));
            }
            if let Some(parent) = h.get(..h.len().wrapping_sub(1)) {
                if nodes.get(parent) != Some(&Node::Internal) {
                    return Err(Error::MalformedTree(format!(
                        "node {h:?} has no internal parent"
                    )));
                }
            }
            match node {
                Node::Internal => {
                    for b in ['0', '1'] {
                        if !nodes.contains_key(&format!("{h}{b}")) {
                            return Err(Error::MalformedTree(format!(
                                "internal node {h:?} lacks child {b}"
                            )));
                        }
                    }
                }
                Node::Leaf(0) => {
                    return Err(Error::MalformedTree("outcomes are 1-indexed".into()));
                }
                _ => {}
            }
        }
        Ok(Self { nodes, depth_bound })
    }

    /// Builds a complete tree from its leaves; every proper prefix of a leaf
    /// history becomes an internal node.
    pub fn from_leaves<'a>(leaves: impl IntoIterator<Item = (&'a str, usize)>) -> Result<Self> {
        let mut nodes = BTreeMap::new();
        let mut depth = 0;
        for (h, outcome) in leaves {
            for cut in 0..h.len() {
                nodes.insert(h[..cut].to_string(), Node::Internal);
            }
            if nodes.insert(h.to_string(), Node::Leaf(outcome)).is_some() {
                return Err(Error::MalformedTree(format!("duplicate node {h:?}")));
            }
            depth = depth.max(h.len() as u32);
        }
        Self::from_nodes(nodes, depth)
    }

    pub fn depth_bound(&self) -> u32 {
        self.depth_bound
    }

    pub fn node(&self, history: &str) -> Option<Node> {
        self.nodes.get(history).copied()
    }

    pub fn nodes(&self) -> impl Iterator<Item = (&str, Node)> {
        self.nodes.iter().map(|(h, n)| (h.as_str(), *n))
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// `(history, outcome)` for every leaf.
    pub fn leaves(&self) -> impl Iterator<Item = (&str, usize)> {
        self.nodes().filter_map(|(h, n)| match n {
            Node::Leaf(i) => Some((h, i)),
            _ => None,
        })
    }

    pub fn pending(&self) -> impl Iterator<Item = &str> {
        self.nodes()
            .filter(|(_, n)| *n == Node::Pending)
            .map(|(h, _)| h)
    }

    /// True when no subtree was cut off.
    pub fn is_complete(&self) -> bool {
        self.pending().next().is_none()
    }

    pub fn census(&self) -> LevelCensus {
        let mut counts = BTreeMap::new();
        for (h, outcome) in self.leaves() {
            *counts.entry((h.len() as u32, outcome)).or_insert(0) += 1;
        }
        LevelCensus { counts }
    }

    pub fn flip_distribution<M: Mass>(&self) -> FlipDistribution<M> {
        FlipDistribution::from_leaf_counts(self.census().level_totals())
    }

    /// Total leaf mass of `outcome`.
    pub fn outcome_mass<M: Mass>(&self, outcome: usize) -> M {
        self.leaves()
            .filter(|&(_, i)| i == outcome)
            .fold(M::zero(), |acc, (h, _)| acc + M::dyadic(h.len() as u32))
    }

    /// Mass still unresolved at the depth bound.
    pub fn pending_mass<M: Mass>(&self) -> M {
        self.pending()
            .fold(M::zero(), |acc, h| acc + M::dyadic(h.len() as u32))
    }

    /// Replaces the leaf at `history` by an internal node with two leaves of
    /// the same outcome one level deeper. Outcome masses are unchanged.
    pub fn deepen_leaf(&self, history: &str) -> Result<Self> {
        let outcome = match self.node(history) {
            Some(Node::Leaf(i)) => i,
            _ => {
                return Err(Error::MalformedTree(format!(
                    "no leaf at {history:?}"
                )))
            }
        };
        let mut nodes = self.nodes.clone();
        nodes.insert(history.to_string(), Node::Internal);
        nodes.insert(format!("{history}0"), Node::Leaf(outcome));
        nodes.insert(format!("{history}1"), Node::Leaf(outcome));
        let depth_bound = self.depth_bound.max(history.len() as u32 + 1);
        Self::from_nodes(nodes, depth_bound)
    }

    /// Graphviz rendering. Node ids are `r` followed by the bit history;
    /// edges are labelled with the bit.
    pub fn to_dot(&self) -> String {
        let mut out = String::from("digraph ddg {\n");
        out.push_str("  node [shape=circle, label=\"\", width=0.2];\n");
        let mut ordered: Vec<_> = self.nodes().collect();
        ordered.sort_by(|(a, _), (b, _)| a.len().cmp(&b.len()).then(a.cmp(b)));
        for (h, node) in &ordered {
            match node {
                Node::Internal => writeln!(out, "  r{h};"),
                Node::Leaf(i) => writeln!(out, "  r{h} [shape=box, label=\"{i}\"];"),
                Node::Pending => writeln!(out, "  r{h} [style=dashed, label=\"...\"];"),
            }
            .expect("write to String");
        }
        for (h, _) in &ordered {
            if let Some(parent) = h.get(..h.len().wrapping_sub(1)) {
                let bit = &h[h.len() - 1..];
                writeln!(out, "  r{parent} -> r{h} [label=\"{bit}\"];").expect("write to String");
            }
        }
        out.push_str("}\n");
        out
    }
}

/// Leaf counts per `(level, outcome)`.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct LevelCensus {
    counts: BTreeMap<(u32, usize), u64>,
}

impl LevelCensus {
    pub fn get(&self, level: u32, outcome: usize) -> u64 {
        self.counts.get(&(level, outcome)).copied().unwrap_or(0)
    }

    /// Non-zero entries, ordered by level then outcome.
    pub fn iter(&self) -> impl Iterator<Item = ((u32, usize), u64)> + '_ {
        self.counts.iter().map(|(&k, &v)| (k, v))
    }

    /// Leaves per level, over all outcomes.
    pub fn level_totals(&self) -> BTreeMap<u32, u64> {
        let mut totals = BTreeMap::new();
        for (&(level, _), &c) in &self.counts {
            *totals.entry(level).or_insert(0) += c;
        }
        totals
    }

    pub fn max_count(&self) -> u64 {
        self.counts.values().copied().max().unwrap_or(0)
    }
}

/// Canonical Knuth–Yao tree: outcome `i` gets exactly `bit_j(p_i)` leaves at
/// level `j`. Leaves of a level take the leftmost free positions in
/// ascending outcome order; the remaining positions branch further.
pub fn build_canonical(p: &ProbabilityVector, depth_bound: u32) -> Result<DdgTree> {
    let mut nodes = BTreeMap::new();
    if let Some(i) = p.certain_outcome() {
        nodes.insert(String::new(), Node::Leaf(i));
        return DdgTree::from_nodes(nodes, depth_bound);
    }
    nodes.insert(String::new(), Node::Internal);
    let mut frontier = vec![String::new()];
    for level in 1..=depth_bound {
        let positions: Vec<String> = frontier
            .iter()
            .flat_map(|h| [format!("{h}0"), format!("{h}1")])
            .collect();
        let accept = p.acceptance_set(level);
        if accept.len() > positions.len() {
            return Err(Error::InvalidDistribution(format!(
                "level {level} needs {} leaves but has {} positions",
                accept.len(),
                positions.len()
            )));
        }
        let mut positions = positions.into_iter();
        for &i in &accept {
            let pos = positions.next().expect("length checked above");
            nodes.insert(pos, Node::Leaf(i));
        }
        frontier.clear();
        for pos in positions {
            let node = if level == depth_bound {
                Node::Pending
            } else {
                Node::Internal
            };
            nodes.insert(pos.clone(), node);
            frontier.push(pos);
        }
        if frontier.is_empty() {
            break;
        }
    }
    DdgTree::from_nodes(nodes, depth_bound)
}

/// The tree traced out by a sampler: the node at history `h` is a leaf iff
/// the sampler, fed exactly the bits of `h`, terminates on the last of them.
pub fn build_from_algorithm(kind: &SamplerKind, depth_bound: u32) -> DdgTree {
    let mut nodes = BTreeMap::new();
    let mut frontier = vec![String::new()];
    for level in 0..=depth_bound {
        let mut next = Vec::new();
        for h in frontier {
            let bits = crate::bitsource::Bit::parse_history(&h).expect("0/1 history");
            match kind.run(&mut ReplaySource::new(bits), &mut ()) {
                Ok((outcome, flips)) => {
                    debug_assert_eq!(flips, h.len() as u64);
                    nodes.insert(h, Node::Leaf(outcome));
                }
                Err(_) if level == depth_bound => {
                    nodes.insert(h, Node::Pending);
                }
                Err(_) => {
                    next.push(format!("{h}0"));
                    next.push(format!("{h}1"));
                    nodes.insert(h, Node::Internal);
                }
            }
        }
        frontier = next;
    }
    DdgTree::from_nodes(nodes, depth_bound).expect("sampler trees are full binary trees")
}

/// One way a tree departs from the optimal digit census.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violation {
    pub level: u32,
    pub outcome: usize,
    pub count: u64,
    /// Binary digit of `p_outcome` at `level`.
    pub expected: u64,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "outcome {} appears {} time(s) at level {} (optimal: {})",
            self.outcome, self.count, self.level, self.expected
        )
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Verdict {
    Optimal,
    Suboptimal(Vec<Violation>),
}

impl Verdict {
    pub fn is_optimal(&self) -> bool {
        matches!(self, Verdict::Optimal)
    }
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Verdict::Optimal => f.write_str("optimal"),
            Verdict::Suboptimal(v) => {
                f.write_str("not optimal: ")?;
                for (k, item) in v.iter().enumerate() {
                    if k > 0 {
                        f.write_str("; ")?;
                    }
                    write!(f, "{item}")?;
                }
                Ok(())
            }
        }
    }
}

/// Optimal iff every `(level, outcome)` leaf count equals the binary digit
/// of `p_outcome` at that level, for every materialised level. Digit
/// equality forces counts into `{0, 1}` and, because the digits are those of
/// the terminating expansion when there is one, also rules out an endless
/// run of leaves for one outcome.
///
/// Fails with [`Error::MassMismatch`] when the leaves do not reproduce `p`
/// (within the pending mass, for truncated trees).
pub fn check_optimal(tree: &DdgTree, p: &ProbabilityVector) -> Result<Verdict> {
    if let Some((h, i)) = tree.leaves().find(|&(_, i)| i > p.len()) {
        return Err(Error::MassMismatch(format!(
            "leaf {h:?} emits outcome {i} but the distribution has {} outcomes",
            p.len()
        )));
    }
    let pending: Rational = tree.pending_mass();
    let mut missing = Rational::zero();
    for i in 1..=p.len() {
        let have: Rational = tree.outcome_mass(i);
        let gap = p.prob(i) - &have;
        if gap < Rational::zero() || (tree.is_complete() && !gap.is_zero()) {
            return Err(Error::MassMismatch(format!(
                "outcome {i} has leaf mass {have}, target {}",
                p.prob(i)
            )));
        }
        missing += gap;
    }
    if missing != pending {
        return Err(Error::MassMismatch(format!(
            "unassigned mass {missing} differs from pending mass {pending}"
        )));
    }

    let census = tree.census();
    let mut violations = Vec::new();
    for level in 0..=tree.depth_bound() {
        for i in 1..=p.len() {
            let count = census.get(level, i);
            let expected = u64::from(p.bit(i, level));
            if count != expected {
                violations.push(Violation {
                    level,
                    outcome: i,
                    count,
                    expected,
                });
            }
        }
    }
    Ok(if violations.is_empty() {
        Verdict::Optimal
    } else {
        Verdict::Suboptimal(violations)
    })
}

/// Leaf masses per outcome as exact rationals, plus the pending mass.
pub fn outcome_masses(tree: &DdgTree, outcomes: usize) -> (Vec<Rational>, Rational) {
    let masses = (1..=outcomes).map(|i| tree.outcome_mass(i)).collect();
    (masses, tree.pending_mass())
}
