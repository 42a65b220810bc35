//! Abstract LTL syntax and the encoding of flow kinds, in the variant where
//! atomic propositions are node names and `(op)` propositions constrain the
//! next action.
//!
//! The plain encoding marks the end of the path with `!X(true)`; the sink
//! variant substitutes `X(sink)` so the formulas work on the sink-extended
//! system whose paths are all infinite.

use std::fmt;

use crate::ifl::{Arrow, Kind, NodeRef, OpSet};

/// LTL formulas over node propositions and action propositions.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Ltl {
    True,
    /// The distinguished sink state.
    Sink,
    /// A node proposition: the state is labeled with the node name (or is
    /// any type-representing state, for the wildcard).
    Node(NodeRef),
    /// The next action is one of the operations; the full set abbreviates
    /// the disjunction over all operations.
    OpIn(OpSet),
    Not(Box<Ltl>),
    And(Box<Ltl>, Box<Ltl>),
    Or(Box<Ltl>, Box<Ltl>),
    Next(Box<Ltl>),
    Until(Box<Ltl>, Box<Ltl>),
}

impl Ltl {
    fn and(parts: Vec<Ltl>) -> Ltl {
        let mut iter = parts.into_iter();
        let first = iter.next().expect("non-empty conjunction");
        iter.fold(first, |acc, p| Ltl::And(Box::new(acc), Box::new(p)))
    }
}

impl fmt::Display for Ltl {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Ltl::True => write!(f, "true"),
            Ltl::Sink => write!(f, "sink"),
            Ltl::Node(n) => write!(f, "{n}"),
            Ltl::OpIn(OpSet::All) => write!(f, "(any-op)"),
            Ltl::OpIn(OpSet::Ops(ops)) => {
                let parts: Vec<String> = ops.iter().map(|o| format!("({o})")).collect();
                write!(f, "{}", parts.join(" | "))
            }
            Ltl::Not(a) => write!(f, "!({a})"),
            Ltl::And(a, b) => write!(f, "({a} & {b})"),
            Ltl::Or(a, b) => write!(f, "({a} | {b})"),
            Ltl::Next(a) => write!(f, "X({a})"),
            Ltl::Until(a, b) => write!(f, "({a} U {b})"),
        }
    }
}

fn end_marker(sink: bool) -> Ltl {
    if sink {
        Ltl::Next(Box::new(Ltl::Sink))
    } else {
        Ltl::Not(Box::new(Ltl::Next(Box::new(Ltl::True))))
    }
}

fn encode_from(segs: &[crate::ifl::Segment], sink: bool) -> Ltl {
    let seg = &segs[0];
    let ops = Ltl::OpIn(seg.ops.clone());
    let tail = if segs.len() == 1 {
        // Final segment: the target node closes the path.
        let close = Ltl::And(Box::new(Ltl::Node(seg.dst.clone())), Box::new(end_marker(sink)));
        match seg.arrow {
            Arrow::Single => Ltl::Next(Box::new(close)),
            Arrow::Multi => Ltl::Next(Box::new(Ltl::Until(
                Box::new(Ltl::OpIn(seg.ops.clone())),
                Box::new(close),
            ))),
        }
    } else {
        let rest = encode_from(&segs[1..], sink);
        match seg.arrow {
            Arrow::Single => Ltl::Next(Box::new(rest)),
            Arrow::Multi => Ltl::Next(Box::new(Ltl::Until(
                Box::new(Ltl::OpIn(seg.ops.clone())),
                Box::new(rest),
            ))),
        }
    };
    Ltl::and(vec![Ltl::Node(seg.src.clone()), ops, tail])
}

/// Encoding of a flow kind for finite paths: the `!X(true)` end marker
/// asserts the path is complete.
pub fn encode_ltl(kind: &Kind) -> Ltl {
    encode_from(kind.segments(), false)
}

/// Sink-variant encoding for the sink-extended system: the end marker
/// becomes a step into the sink.
pub fn encode_ltl_iota(kind: &Kind) -> Ltl {
    encode_from(kind.segments(), true)
}
