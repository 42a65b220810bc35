//! The production decision procedure: kinds compile to nondeterministic
//! finite automata over KTS steps, and requirements are decided by product
//! reachability.
//!
//! Existence and prohibition reduce to finding a reachable accepting
//! configuration of the product of the KTS with the kind automaton.
//! Constraints are language inclusion: the consequent automaton is
//! determinized on the fly by tracking subsets, and a counterexample is a
//! product configuration where the antecedent accepts but no consequent run
//! does. Subset tracking is capped; exhausting the cap yields an `Unknown`
//! verdict with a state-count diagnostic instead of a silent answer.

use std::collections::{HashMap, VecDeque};
use std::fmt;

use crate::ifl::{Arrow, Kind, LabeledRequirement, Requirement};
use crate::kts::Kts;
use crate::name::QualifiedName;

/// Subset-construction cap per constraint check.
const DETERMINIZATION_BOUND: usize = 1 << 14;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Outcome {
    Satisfied,
    Violated,
    Unknown(String),
}

/// One step of a witness or counterexample path.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WitnessStep {
    pub src: QualifiedName,
    pub op: String,
    pub dst: QualifiedName,
}

impl fmt::Display for WitnessStep {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} -[{}]-> {}", self.src, self.op, self.dst)
    }
}

/// Verdict for one labeled requirement.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Verdict {
    pub label: String,
    pub requirement: Requirement,
    pub outcome: Outcome,
    /// Existence witness, or the violating path for prohibitions and
    /// constraints.
    pub witness: Option<Vec<WitnessStep>>,
}

/// Nondeterministic automaton for one kind over the step alphabet of a KTS:
/// one state per segment boundary plus a self-loop state per multi-step
/// segment. A step advances a boundary when its node and operation
/// constraints hold; the final boundary accepts at end of path.
pub struct KindAutomaton<'a> {
    kts: &'a Kts,
    kind: &'a Kind,
}

impl<'a> KindAutomaton<'a> {
    pub fn new(kind: &'a Kind, kts: &'a Kts) -> Self {
        debug_assert!(kind.len() < 30, "kinds are expected to be small");
        KindAutomaton { kts, kind }
    }

    /// Initial state set: the first boundary.
    pub fn initial(&self) -> u64 {
        1
    }

    fn boundary(j: usize) -> u64 {
        1 << (2 * j)
    }

    fn mid(j: usize) -> u64 {
        1 << (2 * j + 1)
    }

    pub fn accepting(&self, mask: u64) -> bool {
        mask & Self::boundary(self.kind.len()) != 0
    }

    /// Advances a state set over one step `(src, op, dst)` of the KTS.
    pub fn step(&self, mask: u64, src: usize, op: &str, dst: usize) -> u64 {
        let segs = self.kind.segments();
        let last = segs.len() - 1;
        let mut next = 0u64;
        for (j, seg) in segs.iter().enumerate() {
            let advance = |next: &mut u64| {
                if j == last {
                    if self.kts.node_holds(dst, &seg.dst) {
                        *next |= Self::boundary(j + 1);
                    }
                } else {
                    *next |= Self::boundary(j + 1);
                }
            };
            if mask & Self::boundary(j) != 0
                && self.kts.node_holds(src, &seg.src)
                && seg.ops.contains(op)
            {
                advance(&mut next);
                if seg.arrow == Arrow::Multi {
                    next |= Self::mid(j);
                }
            }
            if mask & Self::mid(j) != 0 && seg.ops.contains(op) {
                advance(&mut next);
                next |= Self::mid(j);
            }
        }
        next
    }

    /// Acceptance of a concrete step sequence.
    pub fn accepts(&self, steps: &[WitnessStep]) -> bool {
        let mut mask = self.initial();
        for step in steps {
            let (Some(src), Some(dst)) =
                (self.kts.state_of(&step.src), self.kts.state_of(&step.dst))
            else {
                return false;
            };
            mask = self.step(mask, src, &step.op, dst);
            if mask == 0 {
                return false;
            }
        }
        !steps.is_empty() && self.accepting(mask)
    }
}

struct SearchLimits {
    visited_cap: usize,
}

/// Breadth-first product search parameterized over the tracked automaton
/// state sets. Returns the first accepting path found, `Ok(None)` when the
/// space is exhausted, or the visited count when the cap is hit.
fn product_search(
    kts: &Kts,
    advance: impl Fn(usize, &str, usize, &(u64, u64)) -> (u64, u64),
    accept: impl Fn(&(u64, u64)) -> bool,
    limits: SearchLimits,
) -> Result<Option<Vec<WitnessStep>>, usize> {
    type Key = (usize, (u64, u64));
    let mut parents: HashMap<Key, Option<(Key, WitnessStep)>> = HashMap::new();
    let mut queue: VecDeque<Key> = VecDeque::new();
    for state in 0..kts.len() {
        let key = (state, (1u64, 1u64));
        parents.entry(key).or_insert(None);
        queue.push_back(key);
    }
    while let Some((state, masks)) = queue.pop_front() {
        for (op, dst) in &kts.transitions[state] {
            let next_masks = advance(state, op, *dst, &masks);
            if next_masks.0 == 0 {
                continue;
            }
            let step = WitnessStep {
                src: kts.states[state].clone(),
                op: op.clone(),
                dst: kts.states[*dst].clone(),
            };
            let key = (*dst, next_masks);
            if parents.contains_key(&key) {
                continue;
            }
            parents.insert(key, Some(((state, masks), step.clone())));
            if accept(&next_masks) {
                // Reconstruct the path back to an initial configuration.
                let mut path = vec![step];
                let mut cursor = (state, masks);
                while let Some(Some((prev, prev_step))) = parents.get(&cursor) {
                    path.push(prev_step.clone());
                    cursor = *prev;
                }
                path.reverse();
                return Ok(Some(path));
            }
            if parents.len() > limits.visited_cap {
                return Err(parents.len());
            }
            queue.push_back(key);
        }
    }
    Ok(None)
}

/// Searches for a path of the given kind in the KTS.
pub fn find_kind_witness(kts: &Kts, kind: &Kind) -> Result<Option<Vec<WitnessStep>>, usize> {
    let auto = KindAutomaton::new(kind, kts);
    product_search(
        kts,
        |src, op, dst, masks| (auto.step(masks.0, src, op, dst), 0),
        |masks| auto.accepting(masks.0),
        SearchLimits { visited_cap: DETERMINIZATION_BOUND },
    )
}

/// Searches for a path of the antecedent kind that no consequent run
/// accepts.
fn find_constraint_counterexample(
    kts: &Kts,
    antecedent: &Kind,
    consequent: &Kind,
) -> Result<Option<Vec<WitnessStep>>, usize> {
    let ante = KindAutomaton::new(antecedent, kts);
    let cons = KindAutomaton::new(consequent, kts);
    product_search(
        kts,
        |src, op, dst, masks| {
            let a = ante.step(masks.0, src, op, dst);
            let c = cons.step(masks.1, src, op, dst);
            (a, c)
        },
        |masks| ante.accepting(masks.0) && !cons.accepting(masks.1),
        SearchLimits { visited_cap: DETERMINIZATION_BOUND },
    )
}

/// Decides one requirement against the KTS.
pub fn check(kts: &Kts, labeled: &LabeledRequirement) -> Verdict {
    let (outcome, witness) = match &labeled.requirement {
        Requirement::Exists(kind) => match find_kind_witness(kts, kind) {
            Ok(Some(path)) => (Outcome::Satisfied, Some(path)),
            Ok(None) => (Outcome::Violated, None),
            Err(n) => (unknown(n), None),
        },
        Requirement::Prohibit(kind) => match find_kind_witness(kts, kind) {
            Ok(Some(path)) => (Outcome::Violated, Some(path)),
            Ok(None) => (Outcome::Satisfied, None),
            Err(n) => (unknown(n), None),
        },
        Requirement::Constraint(p, q) => match find_constraint_counterexample(kts, p, q) {
            Ok(Some(path)) => (Outcome::Violated, Some(path)),
            Ok(None) => (Outcome::Satisfied, None),
            Err(n) => (unknown(n), None),
        },
    };
    Verdict {
        label: labeled.label.clone(),
        requirement: labeled.requirement.clone(),
        outcome,
        witness,
    }
}

fn unknown(states: usize) -> Outcome {
    Outcome::Unknown(format!(
        "search exceeded {DETERMINIZATION_BOUND} product states ({states} visited)"
    ))
}

/// Checks a whole requirement set in order.
pub fn check_all(kts: &Kts, reqs: &[LabeledRequirement]) -> Vec<Verdict> {
    reqs.iter().map(|r| check(kts, r)).collect()
}
