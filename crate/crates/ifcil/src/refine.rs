//! The requirement refinement preorder and the meet used when refinement
//! annotations are folded in during normalization.
//!
//! Kind refinement is decided by bounded proof search: both kinds are
//! segment sequences, and a derivation is a chain of parallel rewrite steps,
//! each step aligning consecutive chunks of the refined kind onto the
//! refining one. The chunk moves are the step rules of the refinement
//! relation: per-segment weakening, collapsing a chain into one multi-step
//! segment, and the two single/multi swap rules across a wildcard middle.
//! Chains are bounded by the total segment count plus two; exhausting the
//! search budget yields an explicit `Unknown`, never a silent `false`.
//!
//! Meets are computed by alignment enumeration: both operands are stretched
//! onto a common segment skeleton (bounded by the sum of the segment
//! counts), taking per-position node meets, operation-set intersections and
//! arrow meets. Candidates failing the refinement soundness check are
//! dropped, and a maximal survivor is chosen with deterministic tie-breaks.
//! Prohibitions and constraint antecedents dually use a least upper bound.

use std::collections::{BTreeSet, HashSet, VecDeque};

use crate::ifl::{Arrow, Kind, NodeRef, OpSet, Requirement, Segment};

/// Outcome of a refinement query. `Unknown` reports an exhausted search
/// budget and is distinct from `False`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Ternary {
    True,
    False,
    Unknown,
}

impl Ternary {
    fn and(self, other: Ternary) -> Ternary {
        match (self, other) {
            (Ternary::False, _) | (_, Ternary::False) => Ternary::False,
            (Ternary::Unknown, _) | (_, Ternary::Unknown) => Ternary::Unknown,
            _ => Ternary::True,
        }
    }

    pub fn is_true(self) -> bool {
        self == Ternary::True
    }
}

const SEARCH_BUDGET: usize = 4096;

fn node_refines(n: &NodeRef, m: &NodeRef) -> bool {
    m == &NodeRef::Wildcard || n == m
}

fn arrow_refines(a: Arrow, b: Arrow) -> bool {
    a == b || (a == Arrow::Single && b == Arrow::Multi)
}

fn seg_refines(p: &Segment, q: &Segment) -> bool {
    node_refines(&p.src, &q.src)
        && node_refines(&p.dst, &q.dst)
        && p.ops.subset_of(&q.ops)
        && arrow_refines(p.arrow, q.arrow)
}

/// One parallel derivation step: aligns all of `p` onto all of `q` using the
/// chunk moves. Memoized on the suffix pair indices.
fn align(p: &[Segment], q: &[Segment]) -> bool {
    fn go(
        p: &[Segment],
        q: &[Segment],
        i: usize,
        j: usize,
        memo: &mut Vec<Option<bool>>,
        qn: usize,
    ) -> bool {
        if i == p.len() && j == q.len() {
            return true;
        }
        if i == p.len() || j == q.len() {
            return false;
        }
        let key = i * (qn + 1) + j;
        if let Some(v) = memo[key] {
            return v;
        }
        memo[key] = Some(false);
        let mut ok = false;

        // Per-segment weakening.
        if seg_refines(&p[i], &q[j]) && go(p, q, i + 1, j + 1, memo, qn) {
            ok = true;
        }

        // Collapse a chain of k >= 2 segments into one multi-step segment.
        if !ok && q[j].arrow == Arrow::Multi {
            let max_k = p.len() - i - (q.len() - j - 1);
            let mut k = 2;
            while k <= max_k && !ok {
                let chunk = &p[i..i + k];
                if node_refines(&chunk[0].src, &q[j].src)
                    && node_refines(&chunk[k - 1].dst, &q[j].dst)
                    && chunk.iter().all(|s| s.ops.subset_of(&q[j].ops))
                    && go(p, q, i + k, j + 1, memo, qn)
                {
                    ok = true;
                }
                k += 1;
            }
        }

        // Swap moves across a wildcard middle on the refining side.
        if !ok && i + 2 <= p.len() && j + 2 <= q.len() {
            let (s1, s2) = (&p[i], &p[i + 1]);
            let (t1, t2) = (&q[j], &q[j + 1]);
            if t1.dst == NodeRef::Wildcard
                && node_refines(&s1.src, &t1.src)
                && node_refines(&s2.dst, &t2.dst)
            {
                // multi-single refines single-multi
                let p2 = s1.arrow == Arrow::Multi
                    && s2.arrow == Arrow::Single
                    && t1.arrow == Arrow::Single
                    && t2.arrow == Arrow::Multi
                    && s1.ops.subset_of(&t1.ops)
                    && s1.ops.subset_of(&t2.ops)
                    && s2.ops.subset_of(&t2.ops);
                // single-multi refines multi-single
                let p4 = s1.arrow == Arrow::Single
                    && s2.arrow == Arrow::Multi
                    && t1.arrow == Arrow::Multi
                    && t2.arrow == Arrow::Single
                    && s1.ops.subset_of(&t1.ops)
                    && s2.ops.subset_of(&t2.ops)
                    && s2.ops.subset_of(&t1.ops);
                if (p2 || p4) && go(p, q, i + 2, j + 2, memo, qn) {
                    ok = true;
                }
            }
        }

        memo[key] = Some(ok);
        ok
    }
    let mut memo = vec![None; (p.len() + 1) * (q.len() + 1)];
    let qn = q.len();
    go(p, q, 0, 0, &mut memo, qn)
}

fn make_kind(segments: Vec<Segment>) -> Kind {
    Kind::new(segments).expect("generated segment chain is well formed")
}

/// Successor kinds reachable in one derivation step, with canonically
/// minimal targets: larger operation sets or earlier wildcards never help a
/// later step.
fn successors(kind: &Kind) -> Vec<Kind> {
    let segs = kind.segments();
    let mut out = Vec::new();

    // Collapses of every window of length >= 2.
    for i in 0..segs.len() {
        for k in 2..=(segs.len() - i) {
            let window = &segs[i..i + k];
            let mut ops = window[0].ops.clone();
            for s in &window[1..] {
                ops = ops.union(&s.ops);
            }
            let merged = Segment {
                src: window[0].src.clone(),
                arrow: Arrow::Multi,
                ops,
                dst: window[k - 1].dst.clone(),
            };
            let mut new_segs = segs[..i].to_vec();
            new_segs.push(merged);
            new_segs.extend_from_slice(&segs[i + k..]);
            out.push(make_kind(new_segs));
        }
    }

    // Swaps of adjacent segments across a fresh wildcard middle.
    for i in 0..segs.len().saturating_sub(1) {
        let (s1, s2) = (&segs[i], &segs[i + 1]);
        let swapped = if s1.arrow == Arrow::Multi && s2.arrow == Arrow::Single {
            Some((
                Segment {
                    src: s1.src.clone(),
                    arrow: Arrow::Single,
                    ops: s1.ops.clone(),
                    dst: NodeRef::Wildcard,
                },
                Segment {
                    src: NodeRef::Wildcard,
                    arrow: Arrow::Multi,
                    ops: s1.ops.union(&s2.ops),
                    dst: s2.dst.clone(),
                },
            ))
        } else if s1.arrow == Arrow::Single && s2.arrow == Arrow::Multi {
            Some((
                Segment {
                    src: s1.src.clone(),
                    arrow: Arrow::Multi,
                    ops: s1.ops.union(&s2.ops),
                    dst: NodeRef::Wildcard,
                },
                Segment {
                    src: NodeRef::Wildcard,
                    arrow: Arrow::Single,
                    ops: s2.ops.clone(),
                    dst: s2.dst.clone(),
                },
            ))
        } else {
            None
        };
        if let Some((t1, t2)) = swapped {
            let mut new_segs = segs[..i].to_vec();
            new_segs.push(t1);
            new_segs.push(t2);
            new_segs.extend_from_slice(&segs[i + 2..]);
            out.push(make_kind(new_segs));
        }
    }

    out
}

/// Decides the kind refinement preorder: does `p` refine `q`?
pub fn kind_refines(p: &Kind, q: &Kind) -> Ternary {
    if p == q {
        return Ternary::True;
    }
    if p.len() < q.len() {
        return Ternary::False;
    }
    let depth_bound = p.len() + q.len() + 2;
    let mut visited: HashSet<Kind> = HashSet::new();
    let mut queue: VecDeque<(Kind, usize)> = VecDeque::new();
    visited.insert(p.clone());
    queue.push_back((p.clone(), 0));
    let mut explored = 0usize;
    while let Some((current, depth)) = queue.pop_front() {
        explored += 1;
        if explored > SEARCH_BUDGET {
            return Ternary::Unknown;
        }
        if align(current.segments(), q.segments()) {
            return Ternary::True;
        }
        if depth + 1 >= depth_bound {
            continue;
        }
        for next in successors(&current) {
            if next.len() >= q.len() && !visited.contains(&next) {
                visited.insert(next.clone());
                queue.push_back((next, depth + 1));
            }
        }
    }
    Ternary::False
}

/// Decides the requirement refinement preorder: does `r1` refine `r2`?
/// Prohibitions are contravariant and constraints are contravariant in the
/// antecedent.
pub fn refines(r1: &Requirement, r2: &Requirement) -> Ternary {
    match (r1, r2) {
        (Requirement::Exists(p), Requirement::Exists(q)) => kind_refines(p, q),
        (Requirement::Prohibit(p), Requirement::Prohibit(q)) => kind_refines(q, p),
        (Requirement::Constraint(p1, p2), Requirement::Constraint(q1, q2)) => {
            kind_refines(q1, p1).and(kind_refines(p2, q2))
        }
        _ => Ternary::False,
    }
}

/// Node demand at a skeleton boundary.
#[derive(Debug, Clone, PartialEq)]
enum NodeDemand {
    Free,
    Exact(NodeRef),
}

fn demand_meet(a: &NodeDemand, b: &NodeDemand) -> Option<NodeRef> {
    let named = |d: &NodeDemand| match d {
        NodeDemand::Exact(NodeRef::Named(n)) => Some(n.clone()),
        _ => None,
    };
    match (named(a), named(b)) {
        (Some(n), Some(m)) => {
            if n == m {
                Some(NodeRef::Named(n))
            } else {
                None
            }
        }
        (Some(n), None) | (None, Some(n)) => Some(NodeRef::Named(n)),
        (None, None) => Some(NodeRef::Wildcard),
    }
}

/// All ways of writing `total` as `parts` positive integers, in order.
fn compositions(total: usize, parts: usize) -> Vec<Vec<usize>> {
    if parts == 0 {
        return if total == 0 { vec![vec![]] } else { vec![] };
    }
    if parts == 1 {
        return if total >= 1 { vec![vec![total]] } else { vec![] };
    }
    let mut out = Vec::new();
    for first in 1..=(total + 1 - parts) {
        for rest in compositions(total - first, parts - 1) {
            let mut v = Vec::with_capacity(parts);
            v.push(first);
            v.extend(rest);
            out.push(v);
        }
    }
    out
}

/// Per-side demands for one operand stretched over the common skeleton.
struct SideDemands {
    /// Boundary node demands, length k + 1.
    boundaries: Vec<NodeDemand>,
    /// Per-position operation filters, length k.
    ops: Vec<OpSet>,
    /// Per-position arrow bound: `true` forces a single step.
    single_only: Vec<bool>,
}

/// Stretches a kind over `k` positions using one group-size composition.
/// `None` when a group of size >= 2 would cover a single-step segment.
fn stretch(kind: &Kind, sizes: &[usize], k: usize) -> Option<SideDemands> {
    let segs = kind.segments();
    let mut boundaries = vec![NodeDemand::Free; k + 1];
    let mut ops = Vec::with_capacity(k);
    let mut single_only = Vec::with_capacity(k);
    let mut pos = 0usize;
    for (seg, &size) in segs.iter().zip(sizes) {
        if size >= 2 && seg.arrow == Arrow::Single {
            return None;
        }
        boundaries[pos] = NodeDemand::Exact(seg.src.clone());
        boundaries[pos + size] = NodeDemand::Exact(seg.dst.clone());
        for _ in 0..size {
            ops.push(seg.ops.clone());
            single_only.push(size == 1 && seg.arrow == Arrow::Single);
        }
        pos += size;
    }
    Some(SideDemands { boundaries, ops, single_only })
}

fn candidate_from(a: &SideDemands, b: &SideDemands, k: usize) -> Option<Kind> {
    let mut nodes = Vec::with_capacity(k + 1);
    for i in 0..=k {
        nodes.push(demand_meet(&a.boundaries[i], &b.boundaries[i])?);
    }
    let mut segments = Vec::with_capacity(k);
    for i in 0..k {
        let ops = a.ops[i].intersect(&b.ops[i])?;
        let arrow = if a.single_only[i] || b.single_only[i] { Arrow::Single } else { Arrow::Multi };
        segments.push(Segment { src: nodes[i].clone(), arrow, ops, dst: nodes[i + 1].clone() });
    }
    Some(make_kind(segments))
}

/// Candidate greatest lower bounds via alignment enumeration.
fn meet_candidates(p: &Kind, q: &Kind) -> BTreeSet<Kind> {
    let (m, n) = (p.len(), q.len());
    let mut out = BTreeSet::new();
    for k in m.max(n)..=(m + n) {
        for psizes in compositions(k, m) {
            let Some(pd) = stretch(p, &psizes, k) else { continue };
            for qsizes in compositions(k, n) {
                let Some(qd) = stretch(q, &qsizes, k) else { continue };
                if let Some(c) = candidate_from(&pd, &qd, k) {
                    out.insert(c);
                }
            }
        }
    }
    out
}

/// Candidate least upper bounds: both operands' segments are absorbed into a
/// shorter common skeleton.
fn join_candidates(p: &Kind, q: &Kind) -> BTreeSet<Kind> {
    let (m, n) = (p.len(), q.len());
    let mut out = BTreeSet::new();
    for k in 1..=m.min(n) {
        for psizes in compositions(m, k) {
            for qsizes in compositions(n, k) {
                out.insert(join_candidate(p, &psizes, q, &qsizes, k));
            }
        }
    }
    out
}

fn join_candidate(p: &Kind, psizes: &[usize], q: &Kind, qsizes: &[usize], k: usize) -> Kind {
    let pnodes = group_edge_nodes(p, psizes);
    let qnodes = group_edge_nodes(q, qsizes);
    let mut nodes = Vec::with_capacity(k + 1);
    for i in 0..=k {
        let node = match (&pnodes[i], &qnodes[i]) {
            (NodeRef::Named(a), NodeRef::Named(b)) if a == b => NodeRef::Named(a.clone()),
            _ => NodeRef::Wildcard,
        };
        nodes.push(node);
    }
    let mut segments = Vec::with_capacity(k);
    let mut ppos = 0usize;
    let mut qpos = 0usize;
    for i in 0..k {
        let pgroup = &p.segments()[ppos..ppos + psizes[i]];
        let qgroup = &q.segments()[qpos..qpos + qsizes[i]];
        let mut ops = pgroup[0].ops.clone();
        for s in pgroup[1..].iter().chain(qgroup.iter()) {
            ops = ops.union(&s.ops);
        }
        let multi = psizes[i] >= 2
            || qsizes[i] >= 2
            || pgroup[0].arrow == Arrow::Multi
            || qgroup[0].arrow == Arrow::Multi;
        segments.push(Segment {
            src: nodes[i].clone(),
            arrow: if multi { Arrow::Multi } else { Arrow::Single },
            ops,
            dst: nodes[i + 1].clone(),
        });
        ppos += psizes[i];
        qpos += qsizes[i];
    }
    make_kind(segments)
}

fn group_edge_nodes(kind: &Kind, sizes: &[usize]) -> Vec<NodeRef> {
    let segs = kind.segments();
    let mut nodes = Vec::with_capacity(sizes.len() + 1);
    nodes.push(segs[0].src.clone());
    let mut pos = 0usize;
    for &size in sizes {
        pos += size;
        nodes.push(segs[pos - 1].dst.clone());
    }
    nodes
}

/// Outcome of a meet computation.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum MeetOutcome {
    Defined(Requirement),
    /// No candidate survived. `budget_hit` reports that some candidate was
    /// rejected only because the refinement search gave up.
    Undefined { budget_hit: bool },
}

struct Picked {
    kind: Option<Kind>,
    budget_hit: bool,
}

fn pick(candidates: BTreeSet<Kind>, valid: impl Fn(&Kind) -> Ternary, maximal: bool) -> Picked {
    let mut budget_hit = false;
    let mut surviving: Vec<Kind> = Vec::new();
    for c in candidates {
        match valid(&c) {
            Ternary::True => surviving.push(c),
            Ternary::Unknown => budget_hit = true,
            Ternary::False => {}
        }
    }
    let mut best: Vec<&Kind> = Vec::new();
    'outer: for c in &surviving {
        for other in &surviving {
            if other == c {
                continue;
            }
            let dominated = if maximal {
                kind_refines(c, other).is_true() && !kind_refines(other, c).is_true()
            } else {
                kind_refines(other, c).is_true() && !kind_refines(c, other).is_true()
            };
            if dominated {
                continue 'outer;
            }
        }
        best.push(c);
    }
    best.sort_by_key(|k| (k.len(), k.to_string()));
    Picked { kind: best.first().map(|k| (*k).clone()), budget_hit }
}

/// Greatest lower bound of two kinds, when the alignment search finds one.
pub fn kind_meet(p: &Kind, q: &Kind) -> Option<Kind> {
    kind_meet_inner(p, q).kind
}

fn kind_meet_inner(p: &Kind, q: &Kind) -> Picked {
    pick(meet_candidates(p, q), |c| kind_refines(c, p).and(kind_refines(c, q)), true)
}

/// Least upper bound of two kinds, when the alignment search finds one.
pub fn kind_join(p: &Kind, q: &Kind) -> Option<Kind> {
    kind_join_inner(p, q).kind
}

fn kind_join_inner(p: &Kind, q: &Kind) -> Picked {
    pick(join_candidates(p, q), |c| kind_refines(p, c).and(kind_refines(q, c)), false)
}

/// Meet of two requirements. Only same-variant meets are defined; the
/// normalizer turns `Undefined` into a configuration error.
pub fn meet(r1: &Requirement, r2: &Requirement) -> MeetOutcome {
    match (r1, r2) {
        (Requirement::Exists(p), Requirement::Exists(q)) => {
            let picked = kind_meet_inner(p, q);
            match picked.kind {
                Some(k) => MeetOutcome::Defined(Requirement::Exists(k)),
                None => MeetOutcome::Undefined { budget_hit: picked.budget_hit },
            }
        }
        (Requirement::Prohibit(p), Requirement::Prohibit(q)) => {
            let picked = kind_join_inner(p, q);
            match picked.kind {
                Some(k) => MeetOutcome::Defined(Requirement::Prohibit(k)),
                None => MeetOutcome::Undefined { budget_hit: picked.budget_hit },
            }
        }
        (Requirement::Constraint(p1, p2), Requirement::Constraint(q1, q2)) => {
            let ante = kind_join_inner(p1, q1);
            let cons = kind_meet_inner(p2, q2);
            match (ante.kind, cons.kind) {
                (Some(a), Some(c)) => MeetOutcome::Defined(Requirement::Constraint(a, c)),
                _ => MeetOutcome::Undefined { budget_hit: ante.budget_hit || cons.budget_hit },
            }
        }
        _ => MeetOutcome::Undefined { budget_hit: false },
    }
}
