//! Concrete syntax: s-expressions interleaved with `;`-comments and
//! `;IFL; ... ;IFL;` annotation islands.
//!
//! Ordinary comments run to end of line and are discarded. Islands may span
//! lines, appear wherever a rule may appear, and also inside `call` and
//! `blockinherit` forms, where they are refinement slots rather than rules.
//! Constructs outside the type-enforcement fragment are kept verbatim as
//! [`Rule::Unsupported`] and reported as warnings.

use std::collections::HashSet;

use thiserror::Error;

use crate::ifl::{self, IflIsland, IflParseError};
use crate::model::{AttrExpr, Rule, RuleSet};
use crate::name::QualifiedName;

#[derive(Debug, Error)]
pub enum ParseError {
    #[error("line {line}: unbalanced parenthesis")]
    Unbalanced { line: usize },
    #[error("line {line}: unterminated ;IFL; annotation")]
    UnterminatedIsland { line: usize },
    #[error("line {line}: malformed IFL annotation: {source}")]
    Ifl {
        line: usize,
        #[source]
        source: IflParseError,
    },
    #[error("line {line}: refinement annotation `({label}:...)` is only allowed inside call or blockinherit")]
    RefinementOutsideCall { line: usize, label: String },
    #[error("line {line}: macro parameter must have kind `type`, found `{found}`")]
    BadMacroParam { line: usize, found: String },
    #[error("line {line}: duplicate declaration of `{name}` in namespace `{ns}`")]
    DuplicateDecl { line: usize, ns: String, name: String },
    #[error("line {line}: {msg}")]
    Malformed { line: usize, msg: String },
}

/// Parse result: the configuration plus warnings for skipped constructs.
#[derive(Debug)]
pub struct Parsed {
    pub gamma: RuleSet,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone)]
enum Form {
    List(Vec<Form>, Span),
    Atom(String, Span),
    Island(String, Span),
}

#[derive(Debug, Clone, Copy)]
struct Span {
    start: usize,
    end: usize,
    line: usize,
}

impl Form {
    fn span(&self) -> Span {
        match self {
            Form::List(_, s) | Form::Atom(_, s) | Form::Island(_, s) => *s,
        }
    }
}

const IFL_MARKER: &str = ";IFL;";

#[derive(Debug)]
enum Tok {
    LParen(Span),
    RParen(Span),
    Atom(String, Span),
    Island(String, Span),
}

fn tokenize(text: &str) -> Result<Vec<Tok>, ParseError> {
    let mut toks = Vec::new();
    let mut i = 0;
    let mut line = 1;
    while let Some(c) = text[i..].chars().next() {
        match c {
            '\n' => {
                line += 1;
                i += 1;
            }
            c if c.is_whitespace() => i += c.len_utf8(),
            '(' => {
                toks.push(Tok::LParen(Span { start: i, end: i + 1, line }));
                i += 1;
            }
            ')' => {
                toks.push(Tok::RParen(Span { start: i, end: i + 1, line }));
                i += 1;
            }
            ';' => {
                if text[i..].starts_with(IFL_MARKER) {
                    let start = i;
                    let start_line = line;
                    let body_start = i + IFL_MARKER.len();
                    match text[body_start..].find(IFL_MARKER) {
                        Some(off) => {
                            let body = &text[body_start..body_start + off];
                            line += body.matches('\n').count();
                            let end = body_start + off + IFL_MARKER.len();
                            toks.push(Tok::Island(
                                body.trim().to_owned(),
                                Span { start, end, line: start_line },
                            ));
                            i = end;
                        }
                        None => return Err(ParseError::UnterminatedIsland { line }),
                    }
                } else {
                    match text[i..].find('\n') {
                        Some(off) => i += off,
                        None => i = text.len(),
                    }
                }
            }
            _ => {
                let start = i;
                for c in text[i..].chars() {
                    if c.is_whitespace() || c == '(' || c == ')' || c == ';' {
                        break;
                    }
                    i += c.len_utf8();
                }
                toks.push(Tok::Atom(text[start..i].to_owned(), Span { start, end: i, line }));
            }
        }
    }
    Ok(toks)
}

fn read_forms(toks: &[Tok]) -> Result<Vec<Form>, ParseError> {
    let mut stack: Vec<(Vec<Form>, Span)> = Vec::new();
    let mut top = Vec::new();
    for tok in toks {
        match tok {
            Tok::LParen(span) => stack.push((Vec::new(), *span)),
            Tok::RParen(span) => {
                let (items, open) = stack
                    .pop()
                    .ok_or(ParseError::Unbalanced { line: span.line })?;
                let form = Form::List(items, Span { start: open.start, end: span.end, line: open.line });
                match stack.last_mut() {
                    Some((parent, _)) => parent.push(form),
                    None => top.push(form),
                }
            }
            Tok::Atom(text, span) => {
                let form = Form::Atom(text.clone(), *span);
                match stack.last_mut() {
                    Some((parent, _)) => parent.push(form),
                    None => top.push(form),
                }
            }
            Tok::Island(body, span) => {
                let form = Form::Island(body.clone(), *span);
                match stack.last_mut() {
                    Some((parent, _)) => parent.push(form),
                    None => top.push(form),
                }
            }
        }
    }
    if let Some((_, open)) = stack.last() {
        return Err(ParseError::Unbalanced { line: open.line });
    }
    Ok(top)
}

struct Builder<'a> {
    source: &'a str,
    gamma: RuleSet,
    warnings: Vec<String>,
    declared: HashSet<(QualifiedName, String)>,
}

impl<'a> Builder<'a> {
    fn raw(&self, span: Span) -> String {
        self.source[span.start..span.end].to_owned()
    }

    fn push_decl(&mut self, ns: &QualifiedName, name: &str, line: usize, rule: Rule) -> Result<(), ParseError> {
        if !self.declared.insert((ns.clone(), name.to_owned())) {
            return Err(ParseError::DuplicateDecl {
                line,
                ns: ns.to_string(),
                name: name.to_owned(),
            });
        }
        self.gamma.insert(ns.clone(), rule);
        Ok(())
    }

    fn plain_ident(form: &Form, what: &str) -> Result<String, ParseError> {
        match form {
            Form::Atom(text, span) => {
                if text.contains('.')
                    || text.is_empty()
                    || !text.chars().all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-')
                {
                    Err(ParseError::Malformed {
                        line: span.line,
                        msg: format!("invalid {what} name `{text}`"),
                    })
                } else {
                    Ok(text.clone())
                }
            }
            other => Err(ParseError::Malformed {
                line: other.span().line,
                msg: format!("expected {what} name"),
            }),
        }
    }

    fn qualified(form: &Form, what: &str) -> Result<QualifiedName, ParseError> {
        match form {
            Form::Atom(text, span) => QualifiedName::parse(text).map_err(|e| ParseError::Malformed {
                line: span.line,
                msg: format!("invalid {what}: {e}"),
            }),
            other => Err(ParseError::Malformed {
                line: other.span().line,
                msg: format!("expected {what}"),
            }),
        }
    }

    fn island(&self, body: &str, span: Span) -> Result<IflIsland, ParseError> {
        ifl::parse_ifl(body).map_err(|source| ParseError::Ifl { line: span.line, source })
    }

    fn refinements(&mut self, items: &[Form]) -> Result<Vec<ifl::Refinement>, ParseError> {
        let mut out = Vec::new();
        for item in items {
            match item {
                Form::Island(body, span) => match self.island(body, *span)? {
                    IflIsland::Refinement(r) => out.push(r),
                    IflIsland::Requirement(lr) => {
                        return Err(ParseError::Malformed {
                            line: span.line,
                            msg: format!(
                                "annotation `({})` inside call/blockinherit must be a refinement `(new:target)`",
                                lr.label
                            ),
                        })
                    }
                },
                other => {
                    return Err(ParseError::Malformed {
                        line: other.span().line,
                        msg: "unexpected item in call/blockinherit form".to_owned(),
                    })
                }
            }
        }
        Ok(out)
    }

    fn attr_expr(&mut self, form: &Form) -> Result<AttrExpr, ParseError> {
        match form {
            Form::Atom(..) => Ok(AttrExpr::Name(Self::qualified(form, "attribute expression name")?)),
            Form::List(items, span) => {
                // A parenthesized single name is a grouping, as in `(not (pet))`.
                if items.len() == 1 {
                    if let Form::Atom(..) = items[0] {
                        return self.attr_expr(&items[0]);
                    }
                }
                let head = match items.first() {
                    Some(Form::Atom(text, _)) => text.as_str(),
                    _ => {
                        return Err(ParseError::Malformed {
                            line: span.line,
                            msg: "malformed attribute expression".to_owned(),
                        })
                    }
                };
                let args = &items[1..];
                let fold = |this: &mut Self,
                            ctor: fn(Box<AttrExpr>, Box<AttrExpr>) -> AttrExpr|
                 -> Result<AttrExpr, ParseError> {
                    if args.len() < 2 {
                        return Err(ParseError::Malformed {
                            line: span.line,
                            msg: format!("`{head}` needs at least two operands"),
                        });
                    }
                    let mut parsed: Vec<AttrExpr> =
                        args.iter().map(|a| this.attr_expr(a)).collect::<Result<_, _>>()?;
                    let mut acc = parsed.pop().expect("at least two operands");
                    while let Some(prev) = parsed.pop() {
                        acc = ctor(Box::new(prev), Box::new(acc));
                    }
                    Ok(acc)
                };
                match head {
                    "and" => fold(self, AttrExpr::And),
                    "or" => fold(self, AttrExpr::Or),
                    "xor" => fold(self, AttrExpr::Xor),
                    "not" => {
                        if args.len() != 1 {
                            return Err(ParseError::Malformed {
                                line: span.line,
                                msg: "`not` takes exactly one operand".to_owned(),
                            });
                        }
                        Ok(AttrExpr::Not(Box::new(self.attr_expr(&args[0])?)))
                    }
                    other => Err(ParseError::Malformed {
                        line: span.line,
                        msg: format!("unknown attribute expression operator `{other}`"),
                    }),
                }
            }
            Form::Island(_, span) => Err(ParseError::Malformed {
                line: span.line,
                msg: "annotation not allowed inside attribute expression".to_owned(),
            }),
        }
    }

    fn rule(&mut self, ns: &QualifiedName, form: &Form) -> Result<(), ParseError> {
        match form {
            Form::Island(body, span) => match self.island(body, *span)? {
                IflIsland::Requirement(lr) => {
                    self.gamma.insert(ns.clone(), Rule::IflRequirement(lr));
                    Ok(())
                }
                IflIsland::Refinement(r) => Err(ParseError::RefinementOutsideCall {
                    line: span.line,
                    label: r.new_label,
                }),
            },
            Form::Atom(text, span) => {
                self.warnings.push(format!(
                    "line {}: skipping unsupported construct: stray atom `{text}`",
                    span.line
                ));
                self.gamma.insert(ns.clone(), Rule::Unsupported(self.raw(*span)));
                Ok(())
            }
            Form::List(items, span) => {
                let head = match items.first() {
                    Some(Form::Atom(text, _)) => text.clone(),
                    _ => {
                        self.warnings.push(format!(
                            "line {}: skipping unsupported construct: empty or headless form",
                            span.line
                        ));
                        self.gamma.insert(ns.clone(), Rule::Unsupported(self.raw(*span)));
                        return Ok(());
                    }
                };
                match head.as_str() {
                    "block" => self.block(ns, items, *span),
                    "type" => {
                        self.expect_arity(items, 2, *span, "(type name)")?;
                        let n = Self::plain_ident(&items[1], "type")?;
                        self.push_decl(ns, &n, span.line, Rule::TypeDecl(n.clone()))
                    }
                    "typeattribute" => {
                        self.expect_arity(items, 2, *span, "(typeattribute name)")?;
                        let n = Self::plain_ident(&items[1], "typeattribute")?;
                        self.push_decl(ns, &n, span.line, Rule::TypeAttrDecl(n.clone()))
                    }
                    "macro" => self.macro_decl(ns, items, *span),
                    "allow" => self.allow(ns, items, *span),
                    "typeattributeset" => {
                        self.expect_arity(items, 3, *span, "(typeattributeset name expr)")?;
                        let attr = Self::qualified(&items[1], "typeattribute name")?;
                        let expr = self.attr_expr(&items[2])?;
                        self.gamma.insert(ns.clone(), Rule::TypeAttributeSet { attr, expr });
                        Ok(())
                    }
                    "call" => self.call(ns, items, *span),
                    "blockinherit" => self.inherit(ns, items, *span),
                    other => {
                        self.warnings.push(format!(
                            "line {}: skipping unsupported construct `{other}`",
                            span.line
                        ));
                        self.gamma.insert(ns.clone(), Rule::Unsupported(self.raw(*span)));
                        Ok(())
                    }
                }
            }
        }
    }

    fn expect_arity(&self, items: &[Form], n: usize, span: Span, usage: &str) -> Result<(), ParseError> {
        if items.len() != n {
            Err(ParseError::Malformed { line: span.line, msg: format!("expected {usage}") })
        } else {
            Ok(())
        }
    }

    fn block(&mut self, ns: &QualifiedName, items: &[Form], span: Span) -> Result<(), ParseError> {
        if items.len() < 2 {
            return Err(ParseError::Malformed {
                line: span.line,
                msg: "expected (block name body...)".to_owned(),
            });
        }
        let n = Self::plain_ident(&items[1], "block")?;
        self.push_decl(ns, &n, span.line, Rule::BlockDecl(n.clone()))?;
        let inner = ns.child(&n);
        for item in &items[2..] {
            self.rule(&inner, item)?;
        }
        Ok(())
    }

    fn macro_decl(&mut self, ns: &QualifiedName, items: &[Form], span: Span) -> Result<(), ParseError> {
        if items.len() < 3 {
            return Err(ParseError::Malformed {
                line: span.line,
                msg: "expected (macro name (params) body...)".to_owned(),
            });
        }
        let n = Self::plain_ident(&items[1], "macro")?;
        let mut params = Vec::new();
        match &items[2] {
            Form::List(plist, pspan) => {
                for p in plist {
                    match p {
                        Form::List(pair, ps) => {
                            if pair.len() != 2 {
                                return Err(ParseError::Malformed {
                                    line: ps.line,
                                    msg: "expected (type param)".to_owned(),
                                });
                            }
                            let kind = Self::plain_ident(&pair[0], "parameter kind")?;
                            if kind != "type" {
                                return Err(ParseError::BadMacroParam { line: ps.line, found: kind });
                            }
                            let pname = Self::plain_ident(&pair[1], "parameter")?;
                            if params.contains(&pname) {
                                return Err(ParseError::Malformed {
                                    line: ps.line,
                                    msg: format!("duplicate macro parameter `{pname}`"),
                                });
                            }
                            params.push(pname);
                        }
                        other => {
                            return Err(ParseError::Malformed {
                                line: other.span().line,
                                msg: "expected (type param)".to_owned(),
                            })
                        }
                    }
                }
                let _ = pspan;
            }
            other => {
                return Err(ParseError::Malformed {
                    line: other.span().line,
                    msg: "expected macro parameter list".to_owned(),
                })
            }
        }
        self.push_decl(ns, &n, span.line, Rule::MacroDecl(n.clone(), params))?;
        let inner = ns.child(&n);
        for item in &items[3..] {
            self.rule(&inner, item)?;
        }
        Ok(())
    }

    fn allow(&mut self, ns: &QualifiedName, items: &[Form], span: Span) -> Result<(), ParseError> {
        if items.len() != 4 {
            self.warnings.push(format!(
                "line {}: skipping unsupported construct: allow without a literal (class (perms)) form",
                span.line
            ));
            self.gamma.insert(ns.clone(), Rule::Unsupported(self.raw(span)));
            return Ok(());
        }
        let src = Self::qualified(&items[1], "allow source")?;
        let dst = Self::qualified(&items[2], "allow target")?;
        match &items[3] {
            Form::List(cp, _) if cp.len() == 2 => {
                let class = match (&cp[0], &cp[1]) {
                    (Form::Atom(class, _), Form::List(perm_forms, _)) => {
                        let mut perms = std::collections::BTreeSet::new();
                        for p in perm_forms {
                            match p {
                                Form::Atom(perm, _) => {
                                    perms.insert(perm.clone());
                                }
                                other => {
                                    return Err(ParseError::Malformed {
                                        line: other.span().line,
                                        msg: "expected permission identifier".to_owned(),
                                    })
                                }
                            }
                        }
                        Some((class.clone(), perms))
                    }
                    _ => None,
                };
                match class {
                    Some((class, perms)) => {
                        self.gamma.insert(ns.clone(), Rule::Allow { src, dst, class, perms });
                        Ok(())
                    }
                    None => {
                        self.warnings.push(format!(
                            "line {}: skipping unsupported construct: allow without a literal (class (perms)) form",
                            span.line
                        ));
                        self.gamma.insert(ns.clone(), Rule::Unsupported(self.raw(span)));
                        Ok(())
                    }
                }
            }
            _ => {
                self.warnings.push(format!(
                    "line {}: skipping unsupported construct: allow without a literal (class (perms)) form",
                    span.line
                ));
                self.gamma.insert(ns.clone(), Rule::Unsupported(self.raw(span)));
                Ok(())
            }
        }
    }

    fn call(&mut self, ns: &QualifiedName, items: &[Form], span: Span) -> Result<(), ParseError> {
        if items.len() < 2 {
            return Err(ParseError::Malformed {
                line: span.line,
                msg: "expected (call macro (args) ...)".to_owned(),
            });
        }
        let target = Self::qualified(&items[1], "macro name")?;
        let mut args = Vec::new();
        let mut rest = &items[2..];
        if let Some(Form::List(arg_forms, _)) = rest.first() {
            for a in arg_forms {
                args.push(Self::qualified(a, "macro argument")?);
            }
            rest = &rest[1..];
        }
        let refinements = self.refinements(rest)?;
        self.gamma.insert(ns.clone(), Rule::Call { target, args, refinements });
        Ok(())
    }

    fn inherit(&mut self, ns: &QualifiedName, items: &[Form], span: Span) -> Result<(), ParseError> {
        if items.len() < 2 {
            return Err(ParseError::Malformed {
                line: span.line,
                msg: "expected (blockinherit block ...)".to_owned(),
            });
        }
        let block = Self::qualified(&items[1], "block name")?;
        let refinements = self.refinements(&items[2..])?;
        self.gamma.insert(ns.clone(), Rule::BlockInherit { block, refinements });
        Ok(())
    }
}

/// Parses a full configuration into located rules with document order
/// preserved.
pub fn parse_config(text: &str) -> Result<Parsed, ParseError> {
    let toks = tokenize(text)?;
    let forms = read_forms(&toks)?;
    let mut b = Builder {
        source: text,
        gamma: RuleSet::new(),
        warnings: Vec::new(),
        declared: HashSet::new(),
    };
    let global = QualifiedName::global();
    for form in &forms {
        b.rule(&global, form)?;
    }
    Ok(Parsed { gamma: b.gamma, warnings: b.warnings })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::NameKind;

    fn parse(text: &str) -> RuleSet {
        parse_config(text).unwrap().gamma
    }

    #[test]
    fn empty_input_is_empty_config() {
        assert!(parse("").is_empty());
        assert!(parse("; just a comment\n").is_empty());
    }

    #[test]
    fn single_nesting_extends_namespace() {
        let g = parse("(block A (type a))");
        let rules: Vec<_> = g.iter().cloned().collect();
        assert_eq!(rules.len(), 2);
        assert_eq!(rules[0].ns, QualifiedName::global());
        assert_eq!(rules[0].rule, Rule::BlockDecl("A".into()));
        assert_eq!(rules[1].ns, QualifiedName::anchored(["A"]));
        assert_eq!(rules[1].rule, Rule::TypeDecl("a".into()));
        assert!(g.declares(&QualifiedName::anchored(["A"]), NameKind::Type, "a"));
    }

    #[test]
    fn islands_become_rules_and_refinements() {
        let g = parse(
            "(type a)\n\
             ;IFL; (F) a +> a ;IFL;\n\
             (macro m ((type x)) (allow x x (file (read))))\n\
             (call m (a)\n  ;IFL; (FR:F) a [read]> a ;IFL;\n)",
        );
        let islands: Vec<_> = g
            .iter()
            .filter(|r| matches!(r.rule, Rule::IflRequirement(_)))
            .collect();
        assert_eq!(islands.len(), 1);
        let call = g
            .iter()
            .find_map(|r| match &r.rule {
                Rule::Call { refinements, .. } => Some(refinements.clone()),
                _ => None,
            })
            .unwrap();
        assert_eq!(call.len(), 1);
        assert_eq!(call[0].new_label, "FR");
    }

    #[test]
    fn unbalanced_and_unterminated_errors() {
        assert!(matches!(parse_config("(type a"), Err(ParseError::Unbalanced { .. })));
        assert!(matches!(parse_config("(type a))"), Err(ParseError::Unbalanced { .. })));
        assert!(matches!(
            parse_config(";IFL; (F) a > b"),
            Err(ParseError::UnterminatedIsland { .. })
        ));
    }

    #[test]
    fn duplicate_declaration_rejected() {
        assert!(matches!(
            parse_config("(type a) (type a)"),
            Err(ParseError::DuplicateDecl { .. })
        ));
        assert!(matches!(
            parse_config("(block A (type t) (typeattribute t))"),
            Err(ParseError::DuplicateDecl { .. })
        ));
    }

    #[test]
    fn macro_param_kind_checked() {
        assert!(matches!(
            parse_config("(macro m ((class x)) (allow x x (file (read))))"),
            Err(ParseError::BadMacroParam { .. })
        ));
    }

    #[test]
    fn unknown_constructs_warn_and_skip() {
        let parsed = parse_config("(boolean b true)\n(neverallow a b (file (read)))").unwrap();
        assert_eq!(parsed.warnings.len(), 2);
        assert!(parsed.gamma.iter().all(|r| matches!(r.rule, Rule::Unsupported(_))));
        // Raw text is preserved verbatim.
        let raw: Vec<_> = parsed
            .gamma
            .iter()
            .map(|r| match &r.rule {
                Rule::Unsupported(raw) => raw.clone(),
                _ => unreachable!(),
            })
            .collect();
        assert_eq!(raw[0], "(boolean b true)");
    }

    #[test]
    fn classmap_style_allow_is_unsupported() {
        let parsed = parse_config("(allow a b my_classpermission)").unwrap();
        assert_eq!(parsed.warnings.len(), 1);
        assert!(matches!(parsed.gamma.iter().next().unwrap().rule, Rule::Unsupported(_)));
    }

    #[test]
    fn renders_and_reparses_identically() {
        let text = "(type stranger)\n\
             (allow stranger inhouse.object (file (open)))\n\
             (block inhouse\n\
                 (type man)\n\
                 (type object)\n\
                 (allow man object (file (read)))\n\
                 (allow .stranger object (file (read)))\n\
                 (allow stranger object (file (write))))";
        let g = parse(text);
        let rendered = g.to_string();
        let g2 = parse(&rendered);
        assert_eq!(g, g2);
    }

    #[test]
    fn multiline_island_parses() {
        let g = parse("(type a)\n;IFL; (F)\n  a +> a\n;IFL;");
        assert_eq!(g.iter().filter(|r| r.rule.is_ifl()).count(), 1);
    }

    #[test]
    fn annotated_example_rule_counts() {
        // 21 located rules; the seven annotation islands split into four
        // standalone requirements and three refinement slots.
        let g = parse(include_str!("../tests/fixtures/webstore.cil"));
        assert_eq!(g.len(), 21);
        assert_eq!(g.iter().filter(|r| r.rule.is_ifl()).count(), 4);
        let refinement_slots: usize = g
            .iter()
            .map(|r| match &r.rule {
                Rule::Call { refinements, .. } | Rule::BlockInherit { refinements, .. } => {
                    refinements.len()
                }
                _ => 0,
            })
            .sum();
        assert_eq!(refinement_slots, 3);
    }

    #[test]
    fn annotated_example_round_trips() {
        let g = parse(include_str!("../tests/fixtures/webstore.cil"));
        let rendered = g.to_string();
        assert_eq!(parse(&rendered), g);
    }

    #[test]
    fn non_ascii_input_is_handled() {
        // Comments may carry arbitrary text.
        let g = parse("; コメント ｟非ASCII｠\n(type a)");
        assert_eq!(g.len(), 1);
        // Non-ASCII identifiers are a clean error, never a panic.
        assert!(parse_config("(type ゲスト)").is_err());
        assert!(parse_config("(allow ゲスト b (file (read)))").is_err());
    }
}
