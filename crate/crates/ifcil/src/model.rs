//! The abstract rule model: a configuration is a set of located rules
//! `(namespace, rule)` with a stable document order retained so rewriting is
//! deterministic. Nested block and macro bodies are mirrored as located
//! rules under their extended namespace.

use std::collections::{BTreeSet, HashMap, HashSet};
use std::fmt;

use crate::ifl::{LabeledRequirement, Refinement};
use crate::name::QualifiedName;

/// Boolean expression over types and typeattributes, as written in
/// `typeattributeset`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum AttrExpr {
    Name(QualifiedName),
    And(Box<AttrExpr>, Box<AttrExpr>),
    Or(Box<AttrExpr>, Box<AttrExpr>),
    Xor(Box<AttrExpr>, Box<AttrExpr>),
    Not(Box<AttrExpr>),
}

impl AttrExpr {
    pub fn leaves(&self) -> Vec<&QualifiedName> {
        let mut out = Vec::new();
        self.collect_leaves(&mut out);
        out
    }

    fn collect_leaves<'a>(&'a self, out: &mut Vec<&'a QualifiedName>) {
        match self {
            AttrExpr::Name(q) => out.push(q),
            AttrExpr::And(a, b) | AttrExpr::Or(a, b) | AttrExpr::Xor(a, b) => {
                a.collect_leaves(out);
                b.collect_leaves(out);
            }
            AttrExpr::Not(a) => a.collect_leaves(out),
        }
    }

    pub fn map_names(&self, f: &impl Fn(&QualifiedName) -> QualifiedName) -> AttrExpr {
        match self {
            AttrExpr::Name(q) => AttrExpr::Name(f(q)),
            AttrExpr::And(a, b) => AttrExpr::And(Box::new(a.map_names(f)), Box::new(b.map_names(f))),
            AttrExpr::Or(a, b) => AttrExpr::Or(Box::new(a.map_names(f)), Box::new(b.map_names(f))),
            AttrExpr::Xor(a, b) => AttrExpr::Xor(Box::new(a.map_names(f)), Box::new(b.map_names(f))),
            AttrExpr::Not(a) => AttrExpr::Not(Box::new(a.map_names(f))),
        }
    }
}

impl fmt::Display for AttrExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            AttrExpr::Name(q) => write!(f, "{q}"),
            AttrExpr::And(a, b) => write!(f, "(and {a} {b})"),
            AttrExpr::Or(a, b) => write!(f, "(or {a} {b})"),
            AttrExpr::Xor(a, b) => write!(f, "(xor {a} {b})"),
            AttrExpr::Not(a) => write!(f, "(not {a})"),
        }
    }
}

/// One configuration rule. Declarations carry only their name here; their
/// bodies are mirrored as located rules under the extended namespace.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Rule {
    BlockDecl(String),
    TypeDecl(String),
    TypeAttrDecl(String),
    /// Macro declaration; every parameter has kind `type`.
    MacroDecl(String, Vec<String>),
    Allow {
        src: QualifiedName,
        dst: QualifiedName,
        class: String,
        perms: BTreeSet<String>,
    },
    TypeAttributeSet {
        attr: QualifiedName,
        expr: AttrExpr,
    },
    Call {
        target: QualifiedName,
        args: Vec<QualifiedName>,
        refinements: Vec<Refinement>,
    },
    BlockInherit {
        block: QualifiedName,
        refinements: Vec<Refinement>,
    },
    IflRequirement(LabeledRequirement),
    /// A construct outside the supported fragment, kept verbatim and skipped.
    Unsupported(String),
}

impl Rule {
    /// Declared name, for declaration rules.
    pub fn decl_name(&self) -> Option<(&str, NameKind)> {
        match self {
            Rule::BlockDecl(n) => Some((n, NameKind::Block)),
            Rule::TypeDecl(n) => Some((n, NameKind::Type)),
            Rule::TypeAttrDecl(n) => Some((n, NameKind::TypeAttribute)),
            Rule::MacroDecl(n, _) => Some((n, NameKind::Macro)),
            _ => None,
        }
    }

    pub fn is_ifl(&self) -> bool {
        matches!(self, Rule::IflRequirement(_))
    }
}

/// Kind of named entity a resolution looks for.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum NameKind {
    Type,
    TypeAttribute,
    Block,
    Macro,
}

/// A rule together with the namespace it occurs in. Namespaces are always
/// anchored.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct LocatedRule {
    pub ns: QualifiedName,
    pub rule: Rule,
}

/// The configuration as an ordered set of located rules. Document order is
/// preserved; the set semantics is recovered by deduplicating on
/// `(namespace, rule)` equality.
#[derive(Debug, Clone, Default)]
pub struct RuleSet {
    rules: Vec<LocatedRule>,
    present: HashSet<LocatedRule>,
    decls: HashMap<(QualifiedName, NameKind), HashSet<String>>,
}

impl PartialEq for RuleSet {
    fn eq(&self, other: &Self) -> bool {
        self.rules == other.rules
    }
}

impl Eq for RuleSet {}

impl RuleSet {
    pub fn new() -> Self {
        RuleSet::default()
    }

    /// Inserts in document order; duplicates are a no-op. Returns whether the
    /// rule was new.
    pub fn insert(&mut self, ns: QualifiedName, rule: Rule) -> bool {
        let at = self.rules.len();
        self.insert_at(at, ns, rule)
    }

    /// Inserts at a document position (clamped to the end); duplicates are a
    /// no-op. Rewriting uses this to place copies where the copying rule
    /// stands.
    pub fn insert_at(&mut self, index: usize, ns: QualifiedName, rule: Rule) -> bool {
        let located = LocatedRule { ns, rule };
        if self.present.contains(&located) {
            return false;
        }
        if let Some((name, kind)) = located.rule.decl_name() {
            self.decls
                .entry((located.ns.clone(), kind))
                .or_default()
                .insert(name.to_owned());
        }
        self.present.insert(located.clone());
        self.rules.insert(index.min(self.rules.len()), located);
        true
    }

    /// Removes an exact located rule. Only non-declaration rules (calls,
    /// inherits) are ever removed by the pipeline.
    pub fn remove(&mut self, located: &LocatedRule) -> bool {
        debug_assert!(located.rule.decl_name().is_none());
        if self.present.remove(located) {
            self.rules.retain(|r| r != located);
            true
        } else {
            false
        }
    }

    /// Replaces a rule in place, keeping its document position.
    pub fn replace(&mut self, old: &LocatedRule, new_rule: Rule) -> bool {
        let new = LocatedRule { ns: old.ns.clone(), rule: new_rule };
        if &new == old || self.present.contains(&new) {
            // Replacement already present: drop the old rule.
            if &new != old {
                self.remove_any(old);
            }
            return false;
        }
        let Some(idx) = self.rules.iter().position(|r| r == old) else {
            return false;
        };
        self.present.remove(old);
        if let Some((name, kind)) = new.rule.decl_name() {
            self.decls.entry((new.ns.clone(), kind)).or_default().insert(name.to_owned());
        }
        self.present.insert(new.clone());
        self.rules[idx] = new;
        true
    }

    fn remove_any(&mut self, located: &LocatedRule) {
        if self.present.remove(located) {
            self.rules.retain(|r| r != located);
        }
    }

    pub fn contains(&self, ns: &QualifiedName, rule: &Rule) -> bool {
        self.present.contains(&LocatedRule { ns: ns.clone(), rule: rule.clone() })
    }

    /// Declaration lookup: is an entity of the given kind and name declared
    /// directly in the namespace?
    pub fn declares(&self, ns: &QualifiedName, kind: NameKind, name: &str) -> bool {
        self.decls
            .get(&(ns.clone(), kind))
            .map(|s| s.contains(name))
            .unwrap_or(false)
    }

    /// Whether any declaration of that name exists in the namespace,
    /// regardless of kind.
    pub fn declares_any_kind(&self, ns: &QualifiedName, name: &str) -> bool {
        [NameKind::Type, NameKind::TypeAttribute, NameKind::Block, NameKind::Macro]
            .into_iter()
            .any(|k| self.declares(ns, k, name))
    }

    /// Document-order position of a rule.
    pub fn position(&self, located: &LocatedRule) -> Option<usize> {
        self.rules.iter().position(|r| r == located)
    }

    pub fn iter(&self) -> impl Iterator<Item = &LocatedRule> {
        self.rules.iter()
    }

    pub fn len(&self) -> usize {
        self.rules.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rules.is_empty()
    }

    /// Namespaces of all declared macros, i.e. the namespaces their bodies
    /// live under.
    pub fn macro_namespaces(&self) -> BTreeSet<QualifiedName> {
        self.rules
            .iter()
            .filter_map(|r| match &r.rule {
                Rule::MacroDecl(n, _) => Some(r.ns.child(n)),
                _ => None,
            })
            .collect()
    }

    /// Whether a namespace lies inside some macro body.
    pub fn inside_macro(&self, ns: &QualifiedName, macro_namespaces: &BTreeSet<QualifiedName>) -> bool {
        macro_namespaces.iter().any(|m| m.is_prefix_of(ns))
    }

    /// The set view used by structural comparisons.
    pub fn as_set(&self) -> BTreeSet<&LocatedRule> {
        self.rules.iter().collect()
    }

    pub fn count_blocks(&self) -> usize {
        self.rules.iter().filter(|r| matches!(r.rule, Rule::BlockDecl(_))).count()
    }
}

impl FromIterator<LocatedRule> for RuleSet {
    fn from_iter<T: IntoIterator<Item = LocatedRule>>(iter: T) -> Self {
        let mut set = RuleSet::new();
        for r in iter {
            set.insert(r.ns, r.rule);
        }
        set
    }
}

fn fmt_island(f: &mut fmt::Formatter<'_>, indent: &str, body: &str) -> fmt::Result {
    writeln!(f, "{indent};IFL; {body} ;IFL;")
}

fn fmt_refinements(f: &mut fmt::Formatter<'_>, indent: &str, refinements: &[Refinement]) -> fmt::Result {
    for r in refinements {
        fmt_island(f, indent, &format!("({}:{}) {}", r.new_label, r.target, r.requirement))?;
    }
    Ok(())
}

impl RuleSet {
    fn fmt_namespace(
        &self,
        f: &mut fmt::Formatter<'_>,
        ns: &QualifiedName,
        depth: usize,
    ) -> fmt::Result {
        let indent = "    ".repeat(depth);
        for located in self.rules.iter().filter(|r| &r.ns == ns) {
            match &located.rule {
                Rule::BlockDecl(n) => {
                    writeln!(f, "{indent}(block {n}")?;
                    self.fmt_namespace(f, &ns.child(n), depth + 1)?;
                    writeln!(f, "{indent})")?;
                }
                Rule::MacroDecl(n, params) => {
                    let params = params
                        .iter()
                        .map(|p| format!("(type {p})"))
                        .collect::<Vec<_>>()
                        .join("");
                    writeln!(f, "{indent}(macro {n} ({params})")?;
                    self.fmt_namespace(f, &ns.child(n), depth + 1)?;
                    writeln!(f, "{indent})")?;
                }
                Rule::TypeDecl(n) => writeln!(f, "{indent}(type {n})")?,
                Rule::TypeAttrDecl(n) => writeln!(f, "{indent}(typeattribute {n})")?,
                Rule::Allow { src, dst, class, perms } => {
                    let perms = perms.iter().cloned().collect::<Vec<_>>().join(" ");
                    writeln!(f, "{indent}(allow {src} {dst} ({class} ({perms})))")?;
                }
                Rule::TypeAttributeSet { attr, expr } => {
                    writeln!(f, "{indent}(typeattributeset {attr} {expr})")?;
                }
                Rule::Call { target, args, refinements } => {
                    let args = args.iter().map(|a| a.to_string()).collect::<Vec<_>>().join(" ");
                    if refinements.is_empty() {
                        writeln!(f, "{indent}(call {target} ({args}))")?;
                    } else {
                        writeln!(f, "{indent}(call {target} ({args})")?;
                        fmt_refinements(f, &format!("{indent}    "), refinements)?;
                        writeln!(f, "{indent})")?;
                    }
                }
                Rule::BlockInherit { block, refinements } => {
                    if refinements.is_empty() {
                        writeln!(f, "{indent}(blockinherit {block})")?;
                    } else {
                        writeln!(f, "{indent}(blockinherit {block}")?;
                        fmt_refinements(f, &format!("{indent}    "), refinements)?;
                        writeln!(f, "{indent})")?;
                    }
                }
                Rule::IflRequirement(lr) => {
                    fmt_island(f, &indent, &format!("({}) {}", lr.label, lr.requirement))?;
                }
                Rule::Unsupported(raw) => writeln!(f, "{indent}{raw}")?,
            }
        }
        Ok(())
    }
}

/// Renders the configuration back to concrete CIL syntax, reconstructing
/// block and macro nesting from the namespaces. Rules added by rewriting
/// appear at the end of their namespace's body.
impl fmt::Display for RuleSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.fmt_namespace(f, &QualifiedName::global(), 0)
    }
}
