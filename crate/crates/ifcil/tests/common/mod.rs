//! Shared generators for the differential and property suites: random
//! information flow diagrams, random requirements, and requirement pairs
//! that are derivably related by refinement.

// Each integration test binary uses its own subset of these helpers.
#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet};

use rand::prelude::*;

use ifcil::graph::Ifd;
use ifcil::ifl::{Arrow, Kind, NodeRef, OpSet, Requirement, Segment};
use ifcil::name::QualifiedName;

pub const OPS: [&str; 3] = ["op_a", "op_b", "op_c"];

pub fn q(text: &str) -> QualifiedName {
    QualifiedName::parse(text).unwrap()
}

/// A random diagram with up to `max_types` types, up to two attributes, and
/// up to `max_arcs` flow arcs between types.
pub fn gen_ifd(rng: &mut impl Rng, max_types: usize, max_arcs: usize) -> Ifd {
    let n_types = rng.gen_range(1..=max_types);
    let types: BTreeSet<QualifiedName> =
        (0..n_types).map(|i| q(&format!(".t{i}"))).collect();
    let type_list: Vec<QualifiedName> = types.iter().cloned().collect();

    let n_attrs = rng.gen_range(0..=2usize);
    let mut attrs = BTreeSet::new();
    let mut ta: BTreeMap<QualifiedName, BTreeSet<QualifiedName>> = BTreeMap::new();
    for t in &types {
        ta.insert(t.clone(), BTreeSet::from([t.clone()]));
    }
    for i in 0..n_attrs {
        let attr = q(&format!(".attr{i}"));
        let members: BTreeSet<QualifiedName> = type_list
            .iter()
            .filter(|_| rng.gen_bool(0.4))
            .cloned()
            .collect();
        ta.insert(attr.clone(), members);
        attrs.insert(attr);
    }

    let mut arcs: BTreeMap<(QualifiedName, QualifiedName), BTreeSet<String>> = BTreeMap::new();
    for _ in 0..rng.gen_range(0..=max_arcs) {
        let src = type_list.choose(rng).unwrap().clone();
        let dst = type_list.choose(rng).unwrap().clone();
        let ops: BTreeSet<String> = OPS
            .iter()
            .filter(|_| rng.gen_bool(0.5))
            .map(|s| s.to_string())
            .collect();
        if ops.is_empty() {
            continue;
        }
        arcs.entry((src, dst)).or_default().extend(ops);
    }

    Ifd { types, attrs, ta, arcs }
}

fn gen_node(rng: &mut impl Rng, ifd: &Ifd) -> NodeRef {
    if rng.gen_bool(0.25) {
        return NodeRef::Wildcard;
    }
    let nodes: Vec<&QualifiedName> = ifd.types.iter().chain(ifd.attrs.iter()).collect();
    match nodes.choose(rng) {
        Some(n) => NodeRef::Named((*n).clone()),
        None => NodeRef::Wildcard,
    }
}

fn gen_ops(rng: &mut impl Rng) -> OpSet {
    if rng.gen_bool(0.5) {
        OpSet::All
    } else {
        let ops: BTreeSet<String> = OPS
            .iter()
            .filter(|_| rng.gen_bool(0.5))
            .map(|s| s.to_string())
            .collect();
        if ops.is_empty() {
            OpSet::Ops(BTreeSet::from([OPS[rng.gen_range(0..OPS.len())].to_string()]))
        } else {
            OpSet::Ops(ops)
        }
    }
}

pub fn gen_kind(rng: &mut impl Rng, ifd: &Ifd, max_segs: usize) -> Kind {
    let n = rng.gen_range(1..=max_segs);
    let nodes: Vec<NodeRef> = (0..=n).map(|_| gen_node(rng, ifd)).collect();
    let segments = (0..n)
        .map(|i| Segment {
            src: nodes[i].clone(),
            arrow: if rng.gen_bool(0.5) { Arrow::Single } else { Arrow::Multi },
            ops: gen_ops(rng),
            dst: nodes[i + 1].clone(),
        })
        .collect();
    Kind::new(segments).unwrap()
}

pub fn gen_requirement(rng: &mut impl Rng, ifd: &Ifd, max_segs: usize) -> Requirement {
    match rng.gen_range(0..3) {
        0 => Requirement::Exists(gen_kind(rng, ifd, max_segs)),
        1 => Requirement::Prohibit(gen_kind(rng, ifd, max_segs)),
        _ => Requirement::Constraint(gen_kind(rng, ifd, max_segs), gen_kind(rng, ifd, max_segs)),
    }
}

fn subset_ops(rng: &mut impl Rng, ops: &OpSet) -> OpSet {
    let universe: Vec<String> = match ops {
        OpSet::All => OPS.iter().map(|s| s.to_string()).collect(),
        OpSet::Ops(o) => o.iter().cloned().collect(),
    };
    let chosen: BTreeSet<String> = universe.iter().filter(|_| rng.gen_bool(0.6)).cloned().collect();
    if chosen.is_empty() {
        OpSet::Ops(BTreeSet::from([universe.choose(rng).unwrap().clone()]))
    } else {
        OpSet::Ops(chosen)
    }
}

fn superset_ops(rng: &mut impl Rng, ops: &OpSet) -> OpSet {
    if rng.gen_bool(0.4) {
        return OpSet::All;
    }
    match ops {
        OpSet::All => OpSet::All,
        OpSet::Ops(o) => {
            let mut grown = o.clone();
            for op in OPS {
                if rng.gen_bool(0.3) {
                    grown.insert(op.to_string());
                }
            }
            OpSet::Ops(grown)
        }
    }
}

/// A kind derivably refining the given one: applies a few random step-rule
/// instances (operation shrinking, wildcard naming, arrow strengthening,
/// expansion of a multi segment into a chain, and the reverse swap rules).
pub fn refine_kind(rng: &mut impl Rng, kind: &Kind, ifd: &Ifd) -> Kind {
    let mut segs: Vec<Segment> = kind.segments().to_vec();
    for _ in 0..rng.gen_range(1..=3) {
        match rng.gen_range(0..5) {
            0 => {
                let i = rng.gen_range(0..segs.len());
                segs[i].ops = subset_ops(rng, &segs[i].ops);
            }
            1 => {
                // Name a wildcard boundary; adjacent segments share it.
                let b = rng.gen_range(0..=segs.len());
                let replacement = match gen_node(rng, ifd) {
                    NodeRef::Named(n) => NodeRef::Named(n),
                    NodeRef::Wildcard => continue,
                };
                set_boundary_if_wildcard(&mut segs, b, replacement);
            }
            2 => {
                let i = rng.gen_range(0..segs.len());
                segs[i].arrow = Arrow::Single;
            }
            3 => {
                // Expand a multi segment into a two-segment chain.
                let multis: Vec<usize> = segs
                    .iter()
                    .enumerate()
                    .filter(|(_, s)| s.arrow == Arrow::Multi)
                    .map(|(i, _)| i)
                    .collect();
                let Some(&i) = multis.choose(rng) else { continue };
                let seg = segs[i].clone();
                let mid = gen_node(rng, ifd);
                let first = Segment {
                    src: seg.src.clone(),
                    arrow: if rng.gen_bool(0.5) { Arrow::Single } else { Arrow::Multi },
                    ops: subset_ops(rng, &seg.ops),
                    dst: mid.clone(),
                };
                let second = Segment {
                    src: mid,
                    arrow: if rng.gen_bool(0.5) { Arrow::Single } else { Arrow::Multi },
                    ops: subset_ops(rng, &seg.ops),
                    dst: seg.dst.clone(),
                };
                segs.splice(i..=i, [first, second]);
            }
            _ => {
                // Reverse swap: single-multi across a wildcard middle becomes
                // multi-single (and dually).
                let candidates: Vec<usize> = (0..segs.len().saturating_sub(1))
                    .filter(|&i| segs[i].dst == NodeRef::Wildcard)
                    .collect();
                let Some(&i) = candidates.choose(rng) else { continue };
                let (t1, t2) = (segs[i].clone(), segs[i + 1].clone());
                if t1.arrow == Arrow::Single && t2.arrow == Arrow::Multi {
                    let Some(both) = t1.ops.intersect(&t2.ops) else { continue };
                    let o1 = subset_ops(rng, &both);
                    let o2 = subset_ops(rng, &t2.ops);
                    let mid = gen_node(rng, ifd);
                    segs[i] = Segment { src: t1.src, arrow: Arrow::Multi, ops: o1, dst: mid.clone() };
                    segs[i + 1] = Segment { src: mid, arrow: Arrow::Single, ops: o2, dst: t2.dst };
                } else if t1.arrow == Arrow::Multi && t2.arrow == Arrow::Single {
                    let Some(both) = t1.ops.intersect(&t2.ops) else { continue };
                    let o2 = subset_ops(rng, &both);
                    let o1 = subset_ops(rng, &t1.ops);
                    let mid = gen_node(rng, ifd);
                    segs[i] = Segment { src: t1.src, arrow: Arrow::Single, ops: o1, dst: mid.clone() };
                    segs[i + 1] = Segment { src: mid, arrow: Arrow::Multi, ops: o2, dst: t2.dst };
                }
            }
        }
    }
    Kind::new(segs).unwrap()
}

fn set_boundary_if_wildcard(segs: &mut [Segment], boundary: usize, node: NodeRef) {
    let is_wildcard = if boundary == 0 {
        segs[0].src == NodeRef::Wildcard
    } else {
        segs[boundary - 1].dst == NodeRef::Wildcard
    };
    if !is_wildcard {
        return;
    }
    if boundary > 0 {
        segs[boundary - 1].dst = node.clone();
    }
    if boundary < segs.len() {
        segs[boundary].src = node;
    }
}

/// A kind the given one derivably refines: the dual transformations.
pub fn generalize_kind(rng: &mut impl Rng, kind: &Kind) -> Kind {
    let mut segs: Vec<Segment> = kind.segments().to_vec();
    for _ in 0..rng.gen_range(1..=3) {
        match rng.gen_range(0..4) {
            0 => {
                let i = rng.gen_range(0..segs.len());
                segs[i].ops = superset_ops(rng, &segs[i].ops);
            }
            1 => {
                let b = rng.gen_range(0..=segs.len());
                if b > 0 {
                    segs[b - 1].dst = NodeRef::Wildcard;
                }
                if b < segs.len() {
                    segs[b].src = NodeRef::Wildcard;
                }
            }
            2 => {
                let i = rng.gen_range(0..segs.len());
                segs[i].arrow = Arrow::Multi;
            }
            _ => {
                if segs.len() < 2 {
                    continue;
                }
                let i = rng.gen_range(0..segs.len() - 1);
                let merged = Segment {
                    src: segs[i].src.clone(),
                    arrow: Arrow::Multi,
                    ops: superset_ops(rng, &segs[i].ops.union(&segs[i + 1].ops)),
                    dst: segs[i + 1].dst.clone(),
                };
                segs.splice(i..=i + 1, [merged]);
            }
        }
    }
    Kind::new(segs).unwrap()
}

/// A derivable pair `(refined, original)` with the refined requirement below
/// the original in the refinement preorder.
pub fn gen_derivable_pair(rng: &mut impl Rng, ifd: &Ifd, max_segs: usize) -> (Requirement, Requirement) {
    match rng.gen_range(0..3) {
        0 => {
            let original = gen_kind(rng, ifd, max_segs);
            let refined = refine_kind(rng, &original, ifd);
            (Requirement::Exists(refined), Requirement::Exists(original))
        }
        1 => {
            // Prohibitions are contravariant: prohibiting a more general
            // kind refines prohibiting a narrower one.
            let narrow = gen_kind(rng, ifd, max_segs);
            let general = generalize_kind(rng, &narrow);
            (Requirement::Prohibit(general), Requirement::Prohibit(narrow))
        }
        _ => {
            let ante = gen_kind(rng, ifd, max_segs);
            let cons = gen_kind(rng, ifd, max_segs);
            (
                Requirement::Constraint(generalize_kind(rng, &ante), refine_kind(rng, &cons, ifd)),
                Requirement::Constraint(ante, cons),
            )
        }
    }
}
