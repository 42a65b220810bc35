//! Graph semantics of a normal-form configuration and the derived
//! information flow diagram.
//!
//! The graph holds the declared types and typeattributes, the membership map
//! (types are singleton members of themselves), and the permission arcs as
//! written: one aggregated arc per (source, target) pair with the per-class
//! operation sets merged and each operation remembering its classes for the
//! flow-table lookup. Macro bodies contribute nothing: the semantics ranges
//! over block and global namespaces only.
//!
//! Typeattribute memberships are evaluated bottom-up over the dependency
//! graph of their defining expressions. Cyclic dependencies never abort:
//! each attribute in a cycle is evaluated from its own root with re-entrant
//! references pruned to the empty set, and a warning names the cycle.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use thiserror::Error;

use crate::flow::{FlowDirection, FlowTable};
use crate::ifl::LabeledRequirement;
use crate::model::{AttrExpr, Rule, RuleSet};
use crate::name::QualifiedName;

#[derive(Debug, Error)]
pub enum GraphError {
    #[error("allow rule in `{ns}` references `{name}`, which is not a declared type or typeattribute")]
    UnknownAllowName { ns: String, name: String },
    #[error("requirement `{label}` references `{name}`, which is not a declared type or typeattribute")]
    UnknownRequirementName { label: String, name: String },
    #[error("no flow direction for operation `{class}.{op}` (strict mode)")]
    UnresolvedOperation { class: String, op: String },
}

/// Per-arc operation map: operation name to the classes granting it.
pub type OpClasses = BTreeMap<String, BTreeSet<String>>;

/// The graph semantics: nodes, membership, permission arcs.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Graph {
    pub types: BTreeSet<QualifiedName>,
    pub attrs: BTreeSet<QualifiedName>,
    /// Node to member types; a type maps to the singleton of itself.
    pub ta: BTreeMap<QualifiedName, BTreeSet<QualifiedName>>,
    /// Aggregated arcs keyed by (source, target).
    pub arcs: BTreeMap<(QualifiedName, QualifiedName), OpClasses>,
}

impl Graph {
    pub fn nodes(&self) -> impl Iterator<Item = &QualifiedName> {
        self.types.iter().chain(self.attrs.iter())
    }

    pub fn is_node(&self, name: &QualifiedName) -> bool {
        self.types.contains(name) || self.attrs.contains(name)
    }

    /// Membership closure of the arcs: every arc between typeattributes is
    /// mirrored between all their member types. Idempotent.
    pub fn close_attribute_arcs(&self) -> Graph {
        let mut closed = self.clone();
        for ((src, dst), ops) in &self.arcs {
            let empty = BTreeSet::new();
            let src_members = self.ta.get(src).unwrap_or(&empty);
            let dst_members = self.ta.get(dst).unwrap_or(&empty);
            for s in src_members {
                for d in dst_members {
                    let entry = closed.arcs.entry((s.clone(), d.clone())).or_default();
                    for (op, classes) in ops {
                        entry.entry(op.clone()).or_default().extend(classes.iter().cloned());
                    }
                }
            }
        }
        closed
    }
}

/// The information flow diagram: arcs oriented by the direction information
/// moves per operation.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Ifd {
    pub types: BTreeSet<QualifiedName>,
    pub attrs: BTreeSet<QualifiedName>,
    pub ta: BTreeMap<QualifiedName, BTreeSet<QualifiedName>>,
    /// Flow arcs keyed by (source, target) with their operation sets.
    pub arcs: BTreeMap<(QualifiedName, QualifiedName), BTreeSet<String>>,
}

impl Ifd {
    /// Flow arcs between concrete types; these are the paths requirements
    /// range over, since membership of a wildcard or named node is only
    /// defined for types.
    pub fn type_arcs(
        &self,
    ) -> impl Iterator<Item = (&QualifiedName, &BTreeSet<String>, &QualifiedName)> {
        self.arcs.iter().filter_map(|((s, d), ops)| {
            if self.types.contains(s) && self.types.contains(d) {
                Some((s, ops, d))
            } else {
                None
            }
        })
    }

    /// Members of a node reference: a type is its own singleton.
    pub fn members(&self, name: &QualifiedName) -> BTreeSet<QualifiedName> {
        self.ta.get(name).cloned().unwrap_or_default()
    }
}

fn semantic_rules<'a>(gamma: &'a RuleSet) -> impl Iterator<Item = &'a crate::model::LocatedRule> {
    let macro_nss = gamma.macro_namespaces();
    gamma.iter().filter(move |r| !gamma.inside_macro(&r.ns, &macro_nss))
}

/// Result of typeattribute resolution.
#[derive(Debug, Clone)]
pub struct TaResolution {
    /// Node to member types, including the singleton entries for types.
    pub ta: BTreeMap<QualifiedName, BTreeSet<QualifiedName>>,
    /// Attributes whose definitions participate in a dependency cycle; their
    /// memberships are pruned approximations.
    pub cyclic: BTreeSet<QualifiedName>,
    pub warnings: Vec<String>,
}

/// Resolves typeattribute memberships over the declared types.
pub fn resolve_typeattributes(gamma: &RuleSet) -> TaResolution {
    let mut types = BTreeSet::new();
    let mut attrs = BTreeSet::new();
    let mut set_rules: BTreeMap<QualifiedName, Vec<AttrExpr>> = BTreeMap::new();
    for located in semantic_rules(gamma) {
        match &located.rule {
            Rule::TypeDecl(n) => {
                types.insert(located.ns.child(n));
            }
            Rule::TypeAttrDecl(n) => {
                attrs.insert(located.ns.child(n));
            }
            _ => {}
        }
    }
    let mut warnings = Vec::new();
    for located in semantic_rules(gamma) {
        if let Rule::TypeAttributeSet { attr, expr } = &located.rule {
            if attrs.contains(attr) {
                set_rules.entry(attr.clone()).or_default().push(expr.clone());
            } else {
                warnings.push(format!(
                    "typeattributeset names `{attr}`, which is not a declared typeattribute; ignored"
                ));
            }
        }
    }

    // Dependency condensation: evaluate acyclic attributes bottom-up, prune
    // re-entrant references inside cycles.
    let attr_list: Vec<QualifiedName> = attrs.iter().cloned().collect();
    let index: HashMap<&QualifiedName, usize> =
        attr_list.iter().enumerate().map(|(i, a)| (a, i)).collect();
    let mut deps: Vec<BTreeSet<usize>> = vec![BTreeSet::new(); attr_list.len()];
    for (attr, exprs) in &set_rules {
        let i = index[attr];
        for expr in exprs {
            for leaf in expr.leaves() {
                if let Some(&j) = index.get(leaf) {
                    deps[i].insert(j);
                }
            }
        }
    }
    let sccs = tarjan_sccs(&deps);
    let mut scc_of = vec![0usize; attr_list.len()];
    for (s, scc) in sccs.iter().enumerate() {
        for &i in scc {
            scc_of[i] = s;
        }
    }

    let mut ta: BTreeMap<QualifiedName, BTreeSet<QualifiedName>> = BTreeMap::new();
    for t in &types {
        ta.insert(t.clone(), BTreeSet::from([t.clone()]));
    }
    let mut done: HashMap<usize, BTreeSet<QualifiedName>> = HashMap::new();
    let mut warned_leaves: BTreeSet<QualifiedName> = BTreeSet::new();
    let mut cyclic_attrs: BTreeSet<QualifiedName> = BTreeSet::new();

    // Tarjan emits components in reverse topological order, so dependencies
    // are computed before their dependents.
    for scc in &sccs {
        let cyclic = scc.len() > 1 || deps[scc[0]].contains(&scc[0]);
        if cyclic {
            let mut names: Vec<String> = scc.iter().map(|&i| attr_list[i].to_string()).collect();
            names.sort();
            cyclic_attrs.extend(scc.iter().map(|&i| attr_list[i].clone()));
            warnings.push(format!(
                "typeattribute definitions are cyclic ({}); memberships approximated by evaluating re-entrant references as empty",
                names.join(" -> ")
            ));
        }
        for &i in scc {
            let attr = &attr_list[i];
            let mut members = BTreeSet::new();
            let mut stack = vec![i];
            for t in &types {
                if eval_attr(
                    i,
                    t,
                    &set_rules,
                    &attr_list,
                    &index,
                    &done,
                    &types,
                    &mut stack,
                    &mut warned_leaves,
                    &mut warnings,
                ) {
                    members.insert(t.clone());
                }
            }
            ta.insert(attr.clone(), members.clone());
            done.insert(i, members);
        }
    }
    TaResolution { ta, cyclic: cyclic_attrs, warnings }
}

#[allow(clippy::too_many_arguments)]
fn eval_attr(
    i: usize,
    t: &QualifiedName,
    set_rules: &BTreeMap<QualifiedName, Vec<AttrExpr>>,
    attr_list: &[QualifiedName],
    index: &HashMap<&QualifiedName, usize>,
    done: &HashMap<usize, BTreeSet<QualifiedName>>,
    types: &BTreeSet<QualifiedName>,
    stack: &mut Vec<usize>,
    warned_leaves: &mut BTreeSet<QualifiedName>,
    warnings: &mut Vec<String>,
) -> bool {
    let Some(exprs) = set_rules.get(&attr_list[i]) else { return false };
    exprs.iter().any(|e| {
        eval_expr(e, t, attr_list, index, done, set_rules, types, stack, warned_leaves, warnings)
    })
}

#[allow(clippy::too_many_arguments)]
fn eval_expr(
    expr: &AttrExpr,
    t: &QualifiedName,
    attr_list: &[QualifiedName],
    index: &HashMap<&QualifiedName, usize>,
    done: &HashMap<usize, BTreeSet<QualifiedName>>,
    set_rules: &BTreeMap<QualifiedName, Vec<AttrExpr>>,
    types: &BTreeSet<QualifiedName>,
    stack: &mut Vec<usize>,
    warned_leaves: &mut BTreeSet<QualifiedName>,
    warnings: &mut Vec<String>,
) -> bool {
    match expr {
        AttrExpr::Name(q) => {
            if types.contains(q) {
                return q == t;
            }
            match index.get(q) {
                Some(&j) => {
                    if let Some(members) = done.get(&j) {
                        return members.contains(t);
                    }
                    if stack.contains(&j) {
                        // Re-entrant reference inside a cycle: prune.
                        return false;
                    }
                    stack.push(j);
                    let r = eval_attr(
                        j, t, set_rules, attr_list, index, done, types, stack, warned_leaves,
                        warnings,
                    );
                    stack.pop();
                    r
                }
                None => {
                    if warned_leaves.insert(q.clone()) {
                        warnings.push(format!(
                            "attribute expression references undeclared name `{q}`; treated as empty"
                        ));
                    }
                    false
                }
            }
        }
        AttrExpr::And(a, b) => {
            eval_expr(a, t, attr_list, index, done, set_rules, types, stack, warned_leaves, warnings)
                && eval_expr(b, t, attr_list, index, done, set_rules, types, stack, warned_leaves, warnings)
        }
        AttrExpr::Or(a, b) => {
            eval_expr(a, t, attr_list, index, done, set_rules, types, stack, warned_leaves, warnings)
                || eval_expr(b, t, attr_list, index, done, set_rules, types, stack, warned_leaves, warnings)
        }
        AttrExpr::Xor(a, b) => {
            eval_expr(a, t, attr_list, index, done, set_rules, types, stack, warned_leaves, warnings)
                != eval_expr(b, t, attr_list, index, done, set_rules, types, stack, warned_leaves, warnings)
        }
        AttrExpr::Not(a) => {
            !eval_expr(a, t, attr_list, index, done, set_rules, types, stack, warned_leaves, warnings)
        }
    }
}

/// Iterative Tarjan strongly connected components, emitted in reverse
/// topological order.
fn tarjan_sccs(deps: &[BTreeSet<usize>]) -> Vec<Vec<usize>> {
    let n = deps.len();
    let mut idx = vec![usize::MAX; n];
    let mut low = vec![0usize; n];
    let mut on_stack = vec![false; n];
    let mut stack = Vec::new();
    let mut sccs = Vec::new();
    let mut counter = 0usize;

    #[derive(Clone)]
    enum Frame {
        Enter(usize),
        Resume(usize, usize),
    }

    for start in 0..n {
        if idx[start] != usize::MAX {
            continue;
        }
        let mut work = vec![Frame::Enter(start)];
        while let Some(frame) = work.pop() {
            match frame {
                Frame::Enter(v) => {
                    idx[v] = counter;
                    low[v] = counter;
                    counter += 1;
                    stack.push(v);
                    on_stack[v] = true;
                    work.push(Frame::Resume(v, 0));
                }
                Frame::Resume(v, child_idx) => {
                    let children: Vec<usize> = deps[v].iter().copied().collect();
                    let mut next = child_idx;
                    let mut descended = false;
                    while next < children.len() {
                        let w = children[next];
                        if idx[w] == usize::MAX {
                            work.push(Frame::Resume(v, next + 1));
                            work.push(Frame::Enter(w));
                            descended = true;
                            break;
                        }
                        if on_stack[w] {
                            low[v] = low[v].min(idx[w]);
                        }
                        next += 1;
                    }
                    if descended {
                        continue;
                    }
                    if low[v] == idx[v] {
                        let mut scc = Vec::new();
                        while let Some(w) = stack.pop() {
                            on_stack[w] = false;
                            scc.push(w);
                            if w == v {
                                break;
                            }
                        }
                        scc.sort_unstable();
                        sccs.push(scc);
                    }
                    // Propagate the low link to the parent frame.
                    if let Some(Frame::Resume(parent, _)) = work.last().cloned() {
                        low[parent] = low[parent].min(low[v]);
                    }
                }
            }
        }
    }
    sccs
}

/// Builds the graph semantics from a normal-form configuration.
pub fn build_graph(gamma: &RuleSet) -> Result<(Graph, Vec<String>), GraphError> {
    let mut types = BTreeSet::new();
    let mut attrs = BTreeSet::new();
    for located in semantic_rules(gamma) {
        match &located.rule {
            Rule::TypeDecl(n) => {
                types.insert(located.ns.child(n));
            }
            Rule::TypeAttrDecl(n) => {
                attrs.insert(located.ns.child(n));
            }
            _ => {}
        }
    }
    let resolution = resolve_typeattributes(gamma);
    let (ta, warnings) = (resolution.ta, resolution.warnings);
    let mut arcs: BTreeMap<(QualifiedName, QualifiedName), OpClasses> = BTreeMap::new();
    for located in semantic_rules(gamma) {
        let Rule::Allow { src, dst, class, perms } = &located.rule else { continue };
        for name in [src, dst] {
            if !types.contains(name) && !attrs.contains(name) {
                return Err(GraphError::UnknownAllowName {
                    ns: located.ns.to_string(),
                    name: name.to_string(),
                });
            }
        }
        let entry = arcs.entry((src.clone(), dst.clone())).or_default();
        for op in perms {
            entry.entry(op.clone()).or_default().insert(class.clone());
        }
    }
    Ok((Graph { types, attrs, ta, arcs }, warnings))
}

/// Collects the requirement set of a normal-form configuration, in document
/// order. Labels are qualified by their namespace when not global.
pub fn collect_requirements(
    gamma: &RuleSet,
    graph: &Graph,
) -> Result<Vec<LabeledRequirement>, GraphError> {
    let mut out = Vec::new();
    for located in semantic_rules(gamma) {
        let Rule::IflRequirement(lr) = &located.rule else { continue };
        let label = if located.ns.is_global() {
            lr.label.clone()
        } else {
            format!("{}.{}", located.ns, lr.label)
        };
        for node in lr.requirement.named_nodes() {
            if !graph.is_node(node) {
                return Err(GraphError::UnknownRequirementName {
                    label,
                    name: node.to_string(),
                });
            }
        }
        out.push(LabeledRequirement { label, requirement: lr.requirement.clone() });
    }
    Ok(out)
}

/// Derives the information flow diagram by orienting every permission arc
/// according to the flow direction of its operations.
pub fn build_ifd(
    graph: &Graph,
    table: &FlowTable,
    strict: bool,
) -> Result<(Ifd, Vec<String>), GraphError> {
    let mut arcs: BTreeMap<(QualifiedName, QualifiedName), BTreeSet<String>> = BTreeMap::new();
    let mut warnings = Vec::new();
    let mut warned: BTreeSet<(String, String)> = BTreeSet::new();
    for ((src, dst), ops) in &graph.arcs {
        let mut forward = BTreeSet::new();
        let mut backward = BTreeSet::new();
        for (op, classes) in ops {
            for class in classes {
                match table.lookup(class, op) {
                    Some(FlowDirection::Forward) => {
                        forward.insert(op.clone());
                    }
                    Some(FlowDirection::Backward) => {
                        backward.insert(op.clone());
                    }
                    Some(FlowDirection::Both) => {
                        forward.insert(op.clone());
                        backward.insert(op.clone());
                    }
                    Some(FlowDirection::None) => {}
                    None => {
                        if strict {
                            return Err(GraphError::UnresolvedOperation {
                                class: class.clone(),
                                op: op.clone(),
                            });
                        }
                        if warned.insert((class.clone(), op.clone())) {
                            warnings.push(format!(
                                "no flow direction for `{class}.{op}`; treated as none"
                            ));
                        }
                    }
                }
            }
        }
        if !forward.is_empty() {
            arcs.entry((src.clone(), dst.clone())).or_default().extend(forward);
        }
        if !backward.is_empty() {
            arcs.entry((dst.clone(), src.clone())).or_default().extend(backward);
        }
    }
    Ok((
        Ifd {
            types: graph.types.clone(),
            attrs: graph.attrs.clone(),
            ta: graph.ta.clone(),
            arcs,
        },
        warnings,
    ))
}
