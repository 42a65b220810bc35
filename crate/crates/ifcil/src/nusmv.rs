//! Emission of the model-checker input format for a configuration, and
//! parsing of the checker's answers for cross-validation against the
//! internal verifier.
//!
//! The emitted system extends the KTS with a distinguished `sink` state that
//! every state can step into, adapting the finite-path semantics to a
//! checker that works on infinite paths. Requirement formulas use the
//! sink-absorbed rendering: reaching the final node can always be completed
//! by diving into the sink, so the end-of-path marker is dropped from the
//! emitted formulas.
//!
//! Dotted names are mangled deterministically (dots become underscores, the
//! leading dot is dropped); a table of changed names is emitted as comments
//! at the top of the file so counterexamples can be mapped back.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use thiserror::Error;

use crate::graph::TaResolution;
use crate::ifl::{Kind, LabeledRequirement, NodeRef, OpSet, Requirement};
use crate::kts::Kts;
use crate::ltl::{encode_ltl_iota, Ltl};
use crate::model::{AttrExpr, Rule, RuleSet};
use crate::name::QualifiedName;
use crate::verify::{Outcome, Verdict};

#[derive(Debug, Error)]
pub enum EmitError {
    #[error("type `{name}` mangles to the reserved state name `sink`; rename it or supply a rename map")]
    SinkCollision { name: String },
}

#[derive(Debug, Error)]
pub enum ResponseError {
    #[error("checker output has {got} specification results, expected {expected}")]
    CountMismatch { got: usize, expected: usize },
    #[error("checker output contains no specification results")]
    Empty,
}

/// The KTS extended with the distinguished sink state: every state,
/// including the sink, steps into the sink under every operation. Dropping
/// the sink recovers the original system.
#[derive(Debug, Clone)]
pub struct SinkKts {
    pub base: Kts,
}

/// Extends a KTS with the sink state.
pub fn add_sink(base: &Kts) -> SinkKts {
    SinkKts { base: base.clone() }
}

impl SinkKts {
    /// State names with the sink first, mangled for emission.
    pub fn state_names(&self) -> Vec<String> {
        let mut names = vec!["sink".to_owned()];
        names.extend(self.base.states.iter().map(mangle));
        names
    }
}

fn mangle(q: &QualifiedName) -> String {
    q.segments().join("_")
}

struct NameTable {
    map: BTreeMap<QualifiedName, String>,
    renamed: Vec<(QualifiedName, String)>,
}

/// Assigns emission names to all nodes, resolving post-mangling collisions
/// deterministically and rejecting the reserved `sink` name.
fn name_table<'a>(
    nodes: impl Iterator<Item = &'a QualifiedName>,
) -> Result<NameTable, EmitError> {
    let mut map = BTreeMap::new();
    let mut used: BTreeSet<String> = BTreeSet::new();
    let mut renamed = Vec::new();
    for node in nodes {
        let base = mangle(node);
        let mut chosen = base.clone();
        let mut k = 2usize;
        while used.contains(&chosen) {
            chosen = format!("{base}_{k}");
            k += 1;
        }
        if chosen == "sink" {
            return Err(EmitError::SinkCollision { name: node.to_string() });
        }
        used.insert(chosen.clone());
        // Dropping the leading dot of a plain name needs no comment; dots
        // turned into underscores or a collision suffix do.
        if node.segments().len() > 1 || chosen != base {
            renamed.push((node.clone(), chosen.clone()));
        }
        map.insert(node.clone(), chosen);
    }
    Ok(NameTable { map, renamed })
}

/// How a typeattribute is defined in the emitted file: symbolically by its
/// expression, or by its resolved membership when the definition is cyclic
/// or references undeclared names.
#[derive(Debug, Clone)]
pub enum AttrDefine {
    Expr(AttrExpr),
    Members(BTreeSet<QualifiedName>),
}

/// Gathers the define form of every declared typeattribute.
pub fn attr_defines(
    gamma: &RuleSet,
    resolution: &TaResolution,
) -> Vec<(QualifiedName, AttrDefine)> {
    let macro_nss = gamma.macro_namespaces();
    let mut attrs: BTreeSet<QualifiedName> = BTreeSet::new();
    let mut types: BTreeSet<QualifiedName> = BTreeSet::new();
    let mut exprs: BTreeMap<QualifiedName, Vec<AttrExpr>> = BTreeMap::new();
    for located in gamma.iter().filter(|r| !gamma.inside_macro(&r.ns, &macro_nss)) {
        match &located.rule {
            Rule::TypeAttrDecl(n) => {
                attrs.insert(located.ns.child(n));
            }
            Rule::TypeDecl(n) => {
                types.insert(located.ns.child(n));
            }
            Rule::TypeAttributeSet { attr, expr } => {
                exprs.entry(attr.clone()).or_default().push(expr.clone());
            }
            _ => {}
        }
    }
    attrs
        .into_iter()
        .map(|attr| {
            let declared_leaves = |es: &[AttrExpr]| {
                es.iter().all(|e| {
                    e.leaves().iter().all(|q| types.contains(q) || exprs.contains_key(*q) || attrs_contains(&resolution.ta, q))
                })
            };
            fn attrs_contains(
                ta: &BTreeMap<QualifiedName, BTreeSet<QualifiedName>>,
                q: &QualifiedName,
            ) -> bool {
                ta.contains_key(q)
            }
            let define = match exprs.get(&attr) {
                Some(es) if !resolution.cyclic.contains(&attr) && declared_leaves(es) => {
                    let mut iter = es.iter().cloned();
                    let first = iter.next().expect("non-empty expression list");
                    AttrDefine::Expr(iter.fold(first, |acc, e| {
                        AttrExpr::Or(Box::new(acc), Box::new(e))
                    }))
                }
                _ => AttrDefine::Members(
                    resolution.ta.get(&attr).cloned().unwrap_or_default(),
                ),
            };
            (attr, define)
        })
        .collect()
}

fn render_expr(expr: &AttrExpr, names: &NameTable, types: &BTreeSet<QualifiedName>) -> String {
    match expr {
        AttrExpr::Name(q) => {
            let mangled = names.map.get(q).cloned().unwrap_or_else(|| mangle(q));
            if types.contains(q) {
                format!("type={mangled}")
            } else {
                mangled
            }
        }
        AttrExpr::And(a, b) => {
            format!("({} & {})", render_expr(a, names, types), render_expr(b, names, types))
        }
        AttrExpr::Or(a, b) => {
            format!("({} | {})", render_expr(a, names, types), render_expr(b, names, types))
        }
        AttrExpr::Xor(a, b) => {
            format!("({} xor {})", render_expr(a, names, types), render_expr(b, names, types))
        }
        AttrExpr::Not(a) => format!("!({})", render_expr(a, names, types)),
    }
}

fn node_atom(node: &NodeRef, names: &NameTable, types: &BTreeSet<QualifiedName>) -> String {
    match node {
        NodeRef::Wildcard => "!(type=sink)".to_owned(),
        NodeRef::Named(q) => {
            let mangled = names.map.get(q).cloned().unwrap_or_else(|| mangle(q));
            if types.contains(q) {
                format!("type={mangled}")
            } else {
                mangled
            }
        }
    }
}

fn op_atom(ops: &OpSet) -> Option<String> {
    match ops {
        OpSet::All => None,
        OpSet::Ops(ops) => {
            let parts: Vec<String> = ops.iter().map(|o| format!("operation={o}")).collect();
            Some(if parts.len() == 1 {
                parts.into_iter().next().expect("one part")
            } else {
                format!("({})", parts.join(" | "))
            })
        }
    }
}

fn is_complex(s: &str) -> bool {
    s.contains(" & ") || s.contains(" | ")
}

/// Absorbs the sink marker of the sink-variant encoding: a dive into the
/// sink is always available after the final node, so `X(sink)` reduces to
/// true, and the disjunction over the full operation set is true as well.
fn absorb_sink(formula: &Ltl) -> Ltl {
    match formula {
        Ltl::Next(inner) if **inner == Ltl::Sink => Ltl::True,
        Ltl::OpIn(OpSet::All) => Ltl::True,
        Ltl::And(a, b) => {
            let (a, b) = (absorb_sink(a), absorb_sink(b));
            match (a, b) {
                (Ltl::True, x) | (x, Ltl::True) => x,
                (a, b) => Ltl::And(Box::new(a), Box::new(b)),
            }
        }
        Ltl::Or(a, b) => Ltl::Or(Box::new(absorb_sink(a)), Box::new(absorb_sink(b))),
        Ltl::Not(a) => Ltl::Not(Box::new(absorb_sink(a))),
        Ltl::Next(a) => Ltl::Next(Box::new(absorb_sink(a))),
        Ltl::Until(a, b) => Ltl::Until(Box::new(absorb_sink(a)), Box::new(absorb_sink(b))),
        leaf => leaf.clone(),
    }
}

fn render_smv(formula: &Ltl, names: &NameTable, types: &BTreeSet<QualifiedName>) -> String {
    match formula {
        Ltl::True => "TRUE".to_owned(),
        Ltl::Sink => "type=sink".to_owned(),
        Ltl::Node(node) => node_atom(node, names, types),
        Ltl::OpIn(ops) => op_atom(ops).unwrap_or_else(|| "TRUE".to_owned()),
        Ltl::Not(a) => format!("!({})", render_smv(a, names, types)),
        Ltl::And(_, _) => {
            // Flatten nested conjunctions into one `&` chain.
            fn parts(l: &Ltl, names: &NameTable, types: &BTreeSet<QualifiedName>, out: &mut Vec<String>) {
                match l {
                    Ltl::And(a, b) => {
                        parts(a, names, types, out);
                        parts(b, names, types, out);
                    }
                    other => out.push(render_smv(other, names, types)),
                }
            }
            let mut out = Vec::new();
            parts(formula, names, types, &mut out);
            out.join(" & ")
        }
        Ltl::Or(a, b) => {
            format!("{} | {}", render_smv(a, names, types), render_smv(b, names, types))
        }
        Ltl::Next(a) => format!("X({})", render_smv(a, names, types)),
        Ltl::Until(lhs, rhs) => {
            let tail = render_smv(rhs, names, types);
            match lhs.as_ref() {
                // `true U phi` is the eventuality.
                Ltl::True => {
                    if is_complex(&tail) {
                        format!("F({tail})")
                    } else {
                        format!("F {tail}")
                    }
                }
                other => {
                    let ops = render_smv(other, names, types);
                    if is_complex(&tail) {
                        format!("{ops} U ({tail})")
                    } else {
                        format!("{ops} U {tail}")
                    }
                }
            }
        }
    }
}

/// Rendering of a kind for the specification lines: the sink-variant
/// encoding with the end marker absorbed.
fn render_kind(kind: &Kind, names: &NameTable, types: &BTreeSet<QualifiedName>) -> String {
    render_smv(&absorb_sink(&encode_ltl_iota(kind)), names, types)
}

/// Emits the complete checker input: module, defines, variables, transition
/// relation and one specification line per requirement (in requirement
/// order). Existence requirements are emitted negated and their verdict read
/// from counterexample existence.
pub fn emit(
    sink: &SinkKts,
    defines: &[(QualifiedName, AttrDefine)],
    reqs: &[LabeledRequirement],
) -> Result<String, EmitError> {
    let kts = &sink.base;
    let types: BTreeSet<QualifiedName> = kts.states.iter().cloned().collect();
    let names = name_table(types.iter().chain(defines.iter().map(|(a, _)| a)))?;

    let mut out = String::new();
    for (original, mangled) in &names.renamed {
        writeln!(out, "-- {original} -> {mangled}").expect("write to string");
    }
    out.push_str("MODULE main\n\n");

    if !defines.is_empty() {
        out.push_str("DEFINE\n");
        for (attr, define) in defines {
            let mangled = &names.map[attr];
            let body = match define {
                AttrDefine::Expr(expr) => format!("({})", render_expr(expr, &names, &types)),
                AttrDefine::Members(members) => {
                    if members.is_empty() {
                        "(FALSE)".to_owned()
                    } else {
                        let parts: Vec<String> =
                            members.iter().map(|m| format!("type={}", names.map[m])).collect();
                        format!("({})", parts.join(" | "))
                    }
                }
            };
            writeln!(out, "  {mangled} := {body} & !(type=sink);").expect("write to string");
        }
    }

    out.push_str("VAR\n  type : { sink");
    for state in &kts.states {
        write!(out, ", {}", names.map[state]).expect("write to string");
    }
    out.push_str(" };\n\n");

    let mut ops: BTreeSet<String> = kts.ops.clone();
    for r in reqs {
        ops.extend(r.requirement.ops());
    }
    if !ops.is_empty() {
        out.push_str("IVAR\n  operation : { ");
        out.push_str(&ops.iter().cloned().collect::<Vec<_>>().join(", "));
        out.push_str(" };\n\n");
    }

    out.push_str("TRANS\n");
    for (i, state) in kts.states.iter().enumerate() {
        let mut disjuncts: Vec<String> = kts.transitions[i]
            .iter()
            .map(|(op, dst)| {
                format!("(operation={op} & next(type={}))", names.map[&kts.states[*dst]])
            })
            .collect();
        disjuncts.push("next(type=sink)".to_owned());
        writeln!(
            out,
            "  (type={} -> ({})) &",
            names.map[state],
            disjuncts.join(" | ")
        )
        .expect("write to string");
    }
    out.push_str("  (type=sink -> next(type=sink))\n\n");

    for labeled in reqs {
        let line = match &labeled.requirement {
            Requirement::Exists(p) | Requirement::Prohibit(p) => {
                format!("LTLSPEC !({})", render_kind(p, &names, &types))
            }
            Requirement::Constraint(p, q) => format!(
                "LTLSPEC (!({}) | ({}))",
                render_kind(p, &names, &types),
                render_kind(q, &names, &types)
            ),
        };
        out.push_str(&line);
        out.push('\n');
    }
    Ok(out)
}

/// Maps checker output back to verdicts: one `is true` / `is false` result
/// per specification, in emission order. Existence verdicts invert, since
/// their specification asserts the absence of the flow.
pub fn parse_response(
    text: &str,
    reqs: &[LabeledRequirement],
) -> Result<Vec<Verdict>, ResponseError> {
    let results: Vec<bool> = text
        .lines()
        .filter(|l| l.contains("specification"))
        .filter_map(|l| {
            if l.contains("is true") {
                Some(true)
            } else if l.contains("is false") {
                Some(false)
            } else {
                None
            }
        })
        .collect();
    if results.is_empty() {
        return Err(ResponseError::Empty);
    }
    if results.len() != reqs.len() {
        return Err(ResponseError::CountMismatch { got: results.len(), expected: reqs.len() });
    }
    Ok(reqs
        .iter()
        .zip(results)
        .map(|(labeled, spec_true)| {
            let satisfied = match labeled.requirement {
                // A false spec means a counterexample path of the kind
                // exists, which is what an existence requirement asks for.
                Requirement::Exists(_) => !spec_true,
                Requirement::Prohibit(_) | Requirement::Constraint(_, _) => spec_true,
            };
            Verdict {
                label: labeled.label.clone(),
                requirement: labeled.requirement.clone(),
                outcome: if satisfied { Outcome::Satisfied } else { Outcome::Violated },
                witness: None,
            }
        })
        .collect())
}
