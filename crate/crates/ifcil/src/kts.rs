//! Kripke transition system derived from an information flow diagram.
//!
//! States are the type nodes; typeattributes never become states, their
//! member types carry them as labels instead. Transitions split every flow
//! arc into one transition per operation.

use std::collections::{BTreeMap, BTreeSet};

use crate::graph::Ifd;
use crate::ifl::NodeRef;
use crate::name::QualifiedName;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Kts {
    /// Type nodes in sorted order; indices are state numbers.
    pub states: Vec<QualifiedName>,
    /// Every operation labeling some transition.
    pub ops: BTreeSet<String>,
    /// Adjacency per state, sorted by (target state, operation).
    pub transitions: Vec<Vec<(String, usize)>>,
    /// Names holding at each state: the state's own name plus every
    /// typeattribute containing it.
    pub labels: Vec<BTreeSet<QualifiedName>>,
    index: BTreeMap<QualifiedName, usize>,
}

/// Encodes an information flow diagram as a KTS.
pub fn build_kts(ifd: &Ifd) -> Kts {
    let states: Vec<QualifiedName> = ifd.types.iter().cloned().collect();
    let index: BTreeMap<QualifiedName, usize> =
        states.iter().enumerate().map(|(i, s)| (s.clone(), i)).collect();
    let mut transitions = vec![Vec::new(); states.len()];
    let mut ops = BTreeSet::new();
    for (src, arc_ops, dst) in ifd.type_arcs() {
        let (si, di) = (index[src], index[dst]);
        for op in arc_ops {
            ops.insert(op.clone());
            transitions[si].push((op.clone(), di));
        }
    }
    for adj in &mut transitions {
        adj.sort_by(|a, b| (a.1, &a.0).cmp(&(b.1, &b.0)));
        adj.dedup();
    }
    let mut labels = vec![BTreeSet::new(); states.len()];
    for (node, members) in &ifd.ta {
        for m in members {
            if let Some(&i) = index.get(m) {
                labels[i].insert(node.clone());
            }
        }
    }
    Kts { states, ops, transitions, labels, index }
}

impl Kts {
    pub fn state_of(&self, name: &QualifiedName) -> Option<usize> {
        self.index.get(name).copied()
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    /// Whether a kind node holds at a state: the wildcard holds at every
    /// state, a name holds where it is a label.
    pub fn node_holds(&self, state: usize, node: &NodeRef) -> bool {
        match node {
            NodeRef::Wildcard => true,
            NodeRef::Named(q) => self.labels[state].contains(q),
        }
    }
}
