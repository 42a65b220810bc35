//! The IFL requirement language: flow kinds, requirements, labels and
//! refinement annotations, plus the island parser.
//!
//! Concrete syntax follows the annotation form exactly: `>` and `+>` arrows,
//! `[op1 op2]` operation filters, `~` for prohibition, `:` for constraints,
//! `*` as the type wildcard. An island interior is either `(label) R` (a
//! labeled requirement) or `(new:target) R` (a refinement attached to a call
//! or blockinherit).

use std::collections::BTreeMap;
use std::collections::BTreeSet;
use std::fmt;

use thiserror::Error;

use crate::name::QualifiedName;

/// A node position in a kind: a named type/typeattribute or the wildcard,
/// which stands for any node representing a type.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum NodeRef {
    Named(QualifiedName),
    Wildcard,
}

impl NodeRef {
    pub fn as_named(&self) -> Option<&QualifiedName> {
        match self {
            NodeRef::Named(q) => Some(q),
            NodeRef::Wildcard => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Arrow {
    /// `>`: exactly one step.
    Single,
    /// `+>`: one or more steps.
    Multi,
}

/// Operation filter on an arrow. `All` is the omitted-brackets form and
/// denotes the full operation set.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum OpSet {
    All,
    Ops(BTreeSet<String>),
}

impl OpSet {
    /// Non-empty intersection with a concrete arc label.
    pub fn intersects(&self, arc_ops: &BTreeSet<String>) -> bool {
        match self {
            OpSet::All => !arc_ops.is_empty(),
            OpSet::Ops(ops) => ops.iter().any(|o| arc_ops.contains(o)),
        }
    }

    /// Membership of a single operation.
    pub fn contains(&self, op: &str) -> bool {
        match self {
            OpSet::All => true,
            OpSet::Ops(ops) => ops.contains(op),
        }
    }

    /// Subset order with `All` as the top element.
    pub fn subset_of(&self, other: &OpSet) -> bool {
        match (self, other) {
            (_, OpSet::All) => true,
            (OpSet::All, OpSet::Ops(_)) => false,
            (OpSet::Ops(a), OpSet::Ops(b)) => a.is_subset(b),
        }
    }

    /// Intersection; `None` when empty.
    pub fn intersect(&self, other: &OpSet) -> Option<OpSet> {
        match (self, other) {
            (OpSet::All, o) | (o, OpSet::All) => Some(o.clone()),
            (OpSet::Ops(a), OpSet::Ops(b)) => {
                let i: BTreeSet<String> = a.intersection(b).cloned().collect();
                if i.is_empty() {
                    None
                } else {
                    Some(OpSet::Ops(i))
                }
            }
        }
    }

    /// Union, saturating at `All`.
    pub fn union(&self, other: &OpSet) -> OpSet {
        match (self, other) {
            (OpSet::All, _) | (_, OpSet::All) => OpSet::All,
            (OpSet::Ops(a), OpSet::Ops(b)) => OpSet::Ops(a.union(b).cloned().collect()),
        }
    }
}

/// One arrow of a kind. Adjacent segments of a kind share their boundary
/// node: `segments[i].dst == segments[i+1].src` by construction.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Segment {
    pub src: NodeRef,
    pub arrow: Arrow,
    pub ops: OpSet,
    pub dst: NodeRef,
}

/// A flow kind: a non-empty chain of arrow segments.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Kind {
    segments: Vec<Segment>,
}

impl Kind {
    /// Builds a kind from segments, checking the shared-node chain invariant.
    pub fn new(segments: Vec<Segment>) -> Result<Self, IflParseError> {
        if segments.is_empty() {
            return Err(IflParseError::EmptyKind);
        }
        for pair in segments.windows(2) {
            if pair[0].dst != pair[1].src {
                return Err(IflParseError::BrokenChain);
            }
        }
        Ok(Kind { segments })
    }

    pub fn segments(&self) -> &[Segment] {
        &self.segments
    }

    pub fn len(&self) -> usize {
        self.segments.len()
    }

    pub fn is_empty(&self) -> bool {
        self.segments.is_empty()
    }

    /// Every named node mentioned anywhere in the kind.
    pub fn named_nodes(&self) -> impl Iterator<Item = &QualifiedName> {
        self.segments
            .iter()
            .flat_map(|s| [&s.src, &s.dst])
            .filter_map(NodeRef::as_named)
    }

    /// Every operation identifier mentioned in a filter.
    pub fn ops(&self) -> BTreeSet<String> {
        let mut out = BTreeSet::new();
        for s in &self.segments {
            if let OpSet::Ops(ops) = &s.ops {
                out.extend(ops.iter().cloned());
            }
        }
        out
    }

    fn map_nodes(&self, f: &impl Fn(&NodeRef) -> NodeRef) -> Kind {
        let segments = self
            .segments
            .iter()
            .map(|s| Segment { src: f(&s.src), arrow: s.arrow, ops: s.ops.clone(), dst: f(&s.dst) })
            .collect();
        Kind { segments }
    }
}

/// An IFL requirement over the information flow diagram.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Requirement {
    /// Some path of the kind must exist.
    Exists(Kind),
    /// No path of the kind may exist.
    Prohibit(Kind),
    /// Every path of the first kind must also be of the second kind.
    Constraint(Kind, Kind),
}

impl Requirement {
    pub fn kinds(&self) -> Vec<&Kind> {
        match self {
            Requirement::Exists(p) | Requirement::Prohibit(p) => vec![p],
            Requirement::Constraint(p, q) => vec![p, q],
        }
    }

    pub fn named_nodes(&self) -> BTreeSet<&QualifiedName> {
        self.kinds().into_iter().flat_map(|k| k.named_nodes()).collect()
    }

    pub fn ops(&self) -> BTreeSet<String> {
        let mut out = BTreeSet::new();
        for k in self.kinds() {
            out.extend(k.ops());
        }
        out
    }

    fn map_kinds(&self, f: impl Fn(&Kind) -> Kind) -> Requirement {
        match self {
            Requirement::Exists(p) => Requirement::Exists(f(p)),
            Requirement::Prohibit(p) => Requirement::Prohibit(f(p)),
            Requirement::Constraint(p, q) => Requirement::Constraint(f(p), f(q)),
        }
    }
}

/// A requirement with its annotation label.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct LabeledRequirement {
    pub label: String,
    pub requirement: Requirement,
}

/// Reference to a requirement label, possibly qualified by the path of the
/// namespace holding it inside the inherited block (`rho.l`).
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct LabelRef {
    pub path: Vec<String>,
    pub label: String,
}

impl fmt::Display for LabelRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for seg in &self.path {
            write!(f, "{seg}.")?;
        }
        write!(f, "{}", self.label)
    }
}

/// A refinement annotation inside a call or blockinherit: strengthens the
/// targeted requirement to the meet of both.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Refinement {
    pub new_label: String,
    pub target: LabelRef,
    pub requirement: Requirement,
}

/// Result of parsing one `;IFL;` island interior.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum IflIsland {
    Requirement(LabeledRequirement),
    Refinement(Refinement),
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum IflParseError {
    #[error("IFL annotation must start with a parenthesized label")]
    MissingLabel,
    #[error("empty operation set `[]`")]
    EmptyOpSet,
    #[error("dangling arrow: expected a node after `{0}`")]
    DanglingArrow(String),
    #[error("expected a node, found `{0}`")]
    ExpectedNode(String),
    #[error("unexpected token `{0}`")]
    UnexpectedToken(String),
    #[error("unexpected end of annotation")]
    UnexpectedEnd,
    #[error("prohibition `~` cannot be combined with `:`")]
    ProhibitedConstraint,
    #[error("empty kind")]
    EmptyKind,
    #[error("adjacent kind segments do not share their boundary node")]
    BrokenChain,
    #[error("invalid name: {0}")]
    BadName(String),
    #[error("invalid label `{0}`")]
    BadLabel(String),
}

#[derive(Debug, Clone, PartialEq, Eq)]
enum Tok {
    LParen,
    RParen,
    LBracket,
    RBracket,
    Colon,
    Tilde,
    Star,
    Plus,
    Gt,
    Ident(String),
}

impl fmt::Display for Tok {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Tok::LParen => write!(f, "("),
            Tok::RParen => write!(f, ")"),
            Tok::LBracket => write!(f, "["),
            Tok::RBracket => write!(f, "]"),
            Tok::Colon => write!(f, ":"),
            Tok::Tilde => write!(f, "~"),
            Tok::Star => write!(f, "*"),
            Tok::Plus => write!(f, "+"),
            Tok::Gt => write!(f, ">"),
            Tok::Ident(s) => write!(f, "{s}"),
        }
    }
}

fn lex(text: &str) -> Result<Vec<Tok>, IflParseError> {
    let mut toks = Vec::new();
    let mut chars = text.chars().peekable();
    while let Some(&c) = chars.peek() {
        match c {
            c if c.is_whitespace() => {
                chars.next();
            }
            '(' => {
                chars.next();
                toks.push(Tok::LParen);
            }
            ')' => {
                chars.next();
                toks.push(Tok::RParen);
            }
            '[' => {
                chars.next();
                toks.push(Tok::LBracket);
            }
            ']' => {
                chars.next();
                toks.push(Tok::RBracket);
            }
            ':' => {
                chars.next();
                toks.push(Tok::Colon);
            }
            '~' => {
                chars.next();
                toks.push(Tok::Tilde);
            }
            '*' => {
                chars.next();
                toks.push(Tok::Star);
            }
            '+' => {
                chars.next();
                toks.push(Tok::Plus);
            }
            '>' => {
                chars.next();
                toks.push(Tok::Gt);
            }
            c if c.is_ascii_alphanumeric() || c == '_' || c == '.' || c == '-' => {
                let mut s = String::new();
                while let Some(&c) = chars.peek() {
                    if c.is_ascii_alphanumeric() || c == '_' || c == '.' || c == '-' {
                        s.push(c);
                        chars.next();
                    } else {
                        break;
                    }
                }
                toks.push(Tok::Ident(s));
            }
            other => return Err(IflParseError::UnexpectedToken(other.to_string())),
        }
    }
    Ok(toks)
}

struct Parser {
    toks: Vec<Tok>,
    pos: usize,
}

impl Parser {
    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.pos)
    }

    fn next(&mut self) -> Result<Tok, IflParseError> {
        let t = self.toks.get(self.pos).cloned().ok_or(IflParseError::UnexpectedEnd)?;
        self.pos += 1;
        Ok(t)
    }

    fn expect(&mut self, want: Tok) -> Result<(), IflParseError> {
        let got = self.next()?;
        if got == want {
            Ok(())
        } else {
            Err(IflParseError::UnexpectedToken(got.to_string()))
        }
    }

    fn ident(&mut self) -> Result<String, IflParseError> {
        match self.next()? {
            Tok::Ident(s) => Ok(s),
            other => Err(IflParseError::UnexpectedToken(other.to_string())),
        }
    }

    fn node(&mut self) -> Result<NodeRef, IflParseError> {
        match self.next()? {
            Tok::Star => Ok(NodeRef::Wildcard),
            Tok::Ident(s) => {
                let q = QualifiedName::parse(&s).map_err(IflParseError::BadName)?;
                Ok(NodeRef::Named(q))
            }
            other => Err(IflParseError::ExpectedNode(other.to_string())),
        }
    }

    /// Parses `>`, `+>`, `[ops]>` or `+[ops]>`.
    fn arrow(&mut self) -> Result<Option<(Arrow, OpSet)>, IflParseError> {
        let arrow = match self.peek() {
            Some(Tok::Plus) => {
                self.next()?;
                Arrow::Multi
            }
            Some(Tok::LBracket) | Some(Tok::Gt) => Arrow::Single,
            _ => return Ok(None),
        };
        let ops = match self.peek() {
            Some(Tok::LBracket) => {
                self.next()?;
                let mut ops = BTreeSet::new();
                loop {
                    match self.next()? {
                        Tok::RBracket => break,
                        Tok::Ident(op) => {
                            ops.insert(op);
                        }
                        other => return Err(IflParseError::UnexpectedToken(other.to_string())),
                    }
                }
                if ops.is_empty() {
                    return Err(IflParseError::EmptyOpSet);
                }
                OpSet::Ops(ops)
            }
            _ => OpSet::All,
        };
        self.expect(Tok::Gt)?;
        Ok(Some((arrow, ops)))
    }

    fn kind(&mut self) -> Result<Kind, IflParseError> {
        let mut segments = Vec::new();
        let mut src = self.node()?;
        loop {
            match self.arrow()? {
                Some((arrow, ops)) => {
                    let arrow_text = match arrow {
                        Arrow::Single => ">",
                        Arrow::Multi => "+>",
                    };
                    if self.peek().is_none() || matches!(self.peek(), Some(Tok::Colon)) {
                        return Err(IflParseError::DanglingArrow(arrow_text.to_owned()));
                    }
                    let dst = self.node()?;
                    segments.push(Segment { src: src.clone(), arrow, ops, dst: dst.clone() });
                    src = dst;
                }
                None => break,
            }
        }
        Kind::new(segments)
    }

    fn requirement(&mut self) -> Result<Requirement, IflParseError> {
        if matches!(self.peek(), Some(Tok::Tilde)) {
            self.next()?;
            let kind = self.kind()?;
            if self.peek().is_some() {
                if matches!(self.peek(), Some(Tok::Colon)) {
                    return Err(IflParseError::ProhibitedConstraint);
                }
                return Err(IflParseError::UnexpectedToken(self.next()?.to_string()));
            }
            return Ok(Requirement::Prohibit(kind));
        }
        let first = self.kind()?;
        match self.peek() {
            Some(Tok::Colon) => {
                self.next()?;
                let second = self.kind()?;
                if let Some(t) = self.peek() {
                    return Err(IflParseError::UnexpectedToken(t.to_string()));
                }
                Ok(Requirement::Constraint(first, second))
            }
            None => Ok(Requirement::Exists(first)),
            Some(t) => Err(IflParseError::UnexpectedToken(t.to_string())),
        }
    }
}

fn valid_label(s: &str) -> bool {
    !s.is_empty() && s.chars().all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-')
}

/// Parses the interior of one `;IFL;` island: `(l) R` or `(l':target) R`.
pub fn parse_ifl(text: &str) -> Result<IflIsland, IflParseError> {
    let toks = lex(text)?;
    let mut p = Parser { toks, pos: 0 };
    if !matches!(p.peek(), Some(Tok::LParen)) {
        return Err(IflParseError::MissingLabel);
    }
    p.next()?;
    let label = p.ident()?;
    if !valid_label(&label) {
        return Err(IflParseError::BadLabel(label));
    }
    let target = if matches!(p.peek(), Some(Tok::Colon)) {
        p.next()?;
        let raw = p.ident()?;
        let mut segs: Vec<&str> = raw.split('.').collect();
        if segs.iter().any(|s| s.is_empty()) {
            return Err(IflParseError::BadLabel(raw));
        }
        let l = segs.pop().expect("split yields at least one element").to_owned();
        Some(LabelRef { path: segs.into_iter().map(str::to_owned).collect(), label: l })
    } else {
        None
    };
    p.expect(Tok::RParen)?;
    let requirement = p.requirement()?;
    match target {
        Some(target) => Ok(IflIsland::Refinement(Refinement { new_label: label, target, requirement })),
        None => Ok(IflIsland::Requirement(LabeledRequirement { label, requirement })),
    }
}

/// Replaces every named node equal to a bound macro parameter. Wildcards and
/// non-parameter names are untouched.
pub fn substitute(req: &Requirement, binding: &BTreeMap<String, QualifiedName>) -> Requirement {
    req.map_kinds(|k| {
        k.map_nodes(&|n| match n {
            NodeRef::Named(q) if !q.is_anchored() && q.segments().len() == 1 => {
                match binding.get(q.last()) {
                    Some(actual) => NodeRef::Named(actual.clone()),
                    None => n.clone(),
                }
            }
            other => other.clone(),
        })
    })
}

/// Resolves every named node through a resolution function; used by the
/// normalizer. Nodes the function maps to `None` are kept as written.
pub fn map_requirement_nodes(
    req: &Requirement,
    f: &impl Fn(&QualifiedName) -> Option<QualifiedName>,
) -> Requirement {
    req.map_kinds(|k| {
        k.map_nodes(&|n| match n {
            NodeRef::Named(q) => match f(q) {
                Some(resolved) => NodeRef::Named(resolved),
                None => n.clone(),
            },
            NodeRef::Wildcard => NodeRef::Wildcard,
        })
    })
}

impl fmt::Display for NodeRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            NodeRef::Named(q) => write!(f, "{q}"),
            NodeRef::Wildcard => write!(f, "*"),
        }
    }
}

impl fmt::Display for Kind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.segments[0].src)?;
        for seg in &self.segments {
            match (&seg.arrow, &seg.ops) {
                (Arrow::Single, OpSet::All) => write!(f, " > ")?,
                (Arrow::Multi, OpSet::All) => write!(f, " +> ")?,
                (Arrow::Single, OpSet::Ops(ops)) => {
                    write!(f, " [{}]> ", ops.iter().cloned().collect::<Vec<_>>().join(" "))?
                }
                (Arrow::Multi, OpSet::Ops(ops)) => {
                    write!(f, " +[{}]> ", ops.iter().cloned().collect::<Vec<_>>().join(" "))?
                }
            }
            write!(f, "{}", seg.dst)?;
        }
        Ok(())
    }
}

impl fmt::Display for Requirement {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Requirement::Exists(p) => write!(f, "{p}"),
            Requirement::Prohibit(p) => write!(f, "~ {p}"),
            Requirement::Constraint(p, q) => write!(f, "{p} : {q}"),
        }
    }
}
