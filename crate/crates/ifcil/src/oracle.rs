//! The brute-force oracle: decides requirements directly from the
//! definitions of flow paths and configuration validity, independently of
//! the automaton machinery in `verify`.
//!
//! A path of the information flow diagram is a non-empty chained sequence of
//! flow arcs; whether it has a kind follows the clause set for the `has kind`
//! relation by structural recursion, tracked here as an incremental matcher
//! that consumes one arc at a time. Path enumeration explores arc sequences
//! with outcome-preserving deduplication: two prefixes ending at the same
//! node with the same matcher positions extend identically, so only the
//! first is pursued. The dedup makes the search exhaustive over the whole
//! (unbounded) path space rather than a length cutoff: any path with a given
//! matcher outcome is witnessed within the finite product space.

use std::collections::{BTreeSet, HashSet, VecDeque};

use crate::graph::Ifd;
use crate::ifl::{Arrow, Kind, NodeRef, Requirement};
use crate::name::QualifiedName;

/// One arc of a path in the information flow diagram.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PathArc {
    pub src: QualifiedName,
    pub ops: BTreeSet<String>,
    pub dst: QualifiedName,
}

/// Matcher positions while consuming a path against a kind: before segment
/// `j`, inside the multi-step segment `j`, or fully matched at path end.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
enum Pos {
    Fresh(usize),
    Mid(usize),
    Done,
}

fn node_ok(ifd: &Ifd, n: &QualifiedName, m: &NodeRef) -> bool {
    match m {
        // The wildcard stands for any node representing a type.
        NodeRef::Wildcard => ifd.types.contains(n),
        NodeRef::Named(q) => ifd.members(q).contains(n),
    }
}

/// Advances the matcher positions over one arc, per the clause set: a fresh
/// segment checks its source node and operations; a multi-step segment may
/// additionally stay open; the final segment checks its target node and
/// requires the path to end there.
fn advance(ifd: &Ifd, kind: &Kind, positions: &BTreeSet<Pos>, arc: &PathArc) -> BTreeSet<Pos> {
    let segs = kind.segments();
    let last = segs.len() - 1;
    let mut next = BTreeSet::new();
    let exit = |j: usize, out: &mut BTreeSet<Pos>| {
        if j == last {
            if node_ok(ifd, &arc.dst, &segs[j].dst) {
                out.insert(Pos::Done);
            }
        } else {
            out.insert(Pos::Fresh(j + 1));
        }
    };
    for pos in positions {
        match *pos {
            Pos::Fresh(j) => {
                let seg = &segs[j];
                if node_ok(ifd, &arc.src, &seg.src) && seg.ops.intersects(&arc.ops) {
                    exit(j, &mut next);
                    if seg.arrow == Arrow::Multi && ifd.types.contains(&arc.dst) {
                        next.insert(Pos::Mid(j));
                    }
                }
            }
            Pos::Mid(j) => {
                let seg = &segs[j];
                if seg.ops.intersects(&arc.ops) {
                    exit(j, &mut next);
                    if ifd.types.contains(&arc.dst) {
                        next.insert(Pos::Mid(j));
                    }
                }
            }
            // A fully matched run dies on a longer path: acceptance is at
            // the exact end of the path.
            Pos::Done => {}
        }
    }
    next
}

/// Whether a path has the given kind in the diagram.
pub fn path_has_kind(path: &[PathArc], kind: &Kind, ifd: &Ifd) -> bool {
    if path.is_empty() {
        return false;
    }
    // Paths must chain head to tail.
    debug_assert!(path.windows(2).all(|w| w[0].dst == w[1].src));
    let mut positions = BTreeSet::from([Pos::Fresh(0)]);
    for arc in path {
        positions = advance(ifd, kind, &positions, arc);
        if positions.is_empty() {
            return false;
        }
    }
    positions.contains(&Pos::Done)
}

fn type_arc_list(ifd: &Ifd) -> Vec<PathArc> {
    ifd.type_arcs()
        .map(|(s, ops, d)| PathArc { src: s.clone(), ops: ops.clone(), dst: d.clone() })
        .collect()
}

/// The single-operation refinements of the diagram's arcs. Each concrete
/// information transfer uses one operation, so validity quantifies over
/// these: a path whose step admits both a filtered and an unfiltered
/// operation still violates a constraint through the unfiltered one.
fn single_op_arcs(ifd: &Ifd) -> Vec<PathArc> {
    ifd.type_arcs()
        .flat_map(|(s, ops, d)| {
            ops.iter().map(|op| PathArc {
                src: s.clone(),
                ops: BTreeSet::from([op.clone()]),
                dst: d.clone(),
            })
        })
        .collect()
}

/// Enumerates paths by extending arc sequences, deduplicating on the
/// (end node, matcher positions) pairs of the kinds under test. Returns the
/// first path whose position vector satisfies `accept`.
fn search_paths(
    ifd: &Ifd,
    kinds: &[&Kind],
    accept: impl Fn(&[BTreeSet<Pos>]) -> bool,
) -> Option<Vec<PathArc>> {
    let arcs = single_op_arcs(ifd);
    let mut queue: VecDeque<(QualifiedName, Vec<BTreeSet<Pos>>, Vec<usize>)> = VecDeque::new();
    let mut seen: HashSet<(QualifiedName, Vec<BTreeSet<Pos>>)> = HashSet::new();
    let starts: BTreeSet<QualifiedName> = arcs.iter().map(|a| a.src.clone()).collect();
    for node in starts {
        let fresh: Vec<BTreeSet<Pos>> = kinds.iter().map(|_| BTreeSet::from([Pos::Fresh(0)])).collect();
        if seen.insert((node.clone(), fresh.clone())) {
            queue.push_back((node, fresh, Vec::new()));
        }
    }
    while let Some((node, positions, trail)) = queue.pop_front() {
        for (idx, arc) in arcs.iter().enumerate() {
            if arc.src != node {
                continue;
            }
            let next: Vec<BTreeSet<Pos>> =
                kinds.iter().zip(&positions).map(|(k, p)| advance(ifd, k, p, arc)).collect();
            let mut next_trail = trail.clone();
            next_trail.push(idx);
            if accept(&next) {
                return Some(next_trail.into_iter().map(|i| arcs[i].clone()).collect());
            }
            let key = (arc.dst.clone(), next.clone());
            if seen.insert(key) {
                queue.push_back((arc.dst.clone(), next, next_trail));
            }
        }
    }
    None
}

/// Finds a path of the given kind, if any.
pub fn find_path_of_kind(ifd: &Ifd, kind: &Kind) -> Option<Vec<PathArc>> {
    search_paths(ifd, &[kind], |positions| positions[0].contains(&Pos::Done))
}

/// Finds a path of the first kind that is not of the second kind, if any.
pub fn find_constraint_counterexample(
    ifd: &Ifd,
    antecedent: &Kind,
    consequent: &Kind,
) -> Option<Vec<PathArc>> {
    search_paths(ifd, &[antecedent, consequent], |positions| {
        positions[0].contains(&Pos::Done) && !positions[1].contains(&Pos::Done)
    })
}

/// Decides validity of the diagram with respect to one requirement,
/// directly from the definition.
pub fn oracle_holds(ifd: &Ifd, requirement: &Requirement) -> bool {
    match requirement {
        Requirement::Exists(kind) => find_path_of_kind(ifd, kind).is_some(),
        Requirement::Prohibit(kind) => find_path_of_kind(ifd, kind).is_none(),
        Requirement::Constraint(p, q) => find_constraint_counterexample(ifd, p, q).is_none(),
    }
}

/// Literal enumeration of every path up to a length bound, for desk-scale
/// cross-checks of the matcher against other routes.
pub fn enumerate_paths(ifd: &Ifd, max_len: usize) -> Vec<Vec<PathArc>> {
    let arcs = type_arc_list(ifd);
    let mut out = Vec::new();
    let mut frontier: Vec<Vec<usize>> = arcs.iter().enumerate().map(|(i, _)| vec![i]).collect();
    for _ in 0..max_len {
        let mut next_frontier = Vec::new();
        for trail in frontier {
            out.push(trail.iter().map(|&i| arcs[i].clone()).collect());
            let end = &arcs[*trail.last().expect("trails are non-empty")].dst;
            for (i, arc) in arcs.iter().enumerate() {
                if &arc.src == end {
                    let mut extended = trail.clone();
                    extended.push(i);
                    next_frontier.push(extended);
                }
            }
        }
        frontier = next_frontier;
    }
    out
}
