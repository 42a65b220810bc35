//! The six-phase rewriting pipeline producing the normal form: inheritance
//! expanded, macro calls resolved, names fully qualified, and requirement
//! annotations copied, instantiated and refined via meets.
//!
//! Each phase iterates its rules to a fixed point. Within a pass all rule
//! instances fire against a snapshot of the configuration, so occurrences
//! advance together and the result does not depend on rule order. Phase five
//! is a sub-pipeline (resolve macro-body names, copy commands out of
//! innermost calls, drop resolved calls) repeated to a fixed point of the
//! whole sub-pipeline.

use std::collections::{BTreeMap, HashMap, HashSet};

use thiserror::Error;

use crate::ifl::{self, LabeledRequirement, Requirement};
use crate::model::{LocatedRule, NameKind, Rule, RuleSet};
use crate::name::QualifiedName;
use crate::refine::{self, MeetOutcome};
use crate::resolve::{eval, eval_bar, eval_or};

#[derive(Debug, Error)]
pub enum NormalizeError {
    #[error("cannot resolve block name `{name}` in namespace `{ns}`")]
    UnresolvableBlock { ns: String, name: String },
    #[error("cannot resolve macro name `{name}` in namespace `{ns}`")]
    UnresolvableMacro { ns: String, name: String },
    #[error("cannot resolve name `{name}` in namespace `{ns}`")]
    UnresolvableName { ns: String, name: String },
    #[error("cyclic blockinherit: expansion did not settle within {bound} passes")]
    CyclicInheritance { bound: usize },
    #[error("macro calls could not be resolved (cyclic calls?): first leftover is {first}")]
    UnresolvedCalls { first: String },
    #[error("call of `{target}` passes {given} argument(s), macro takes {expected}")]
    ArityMismatch { target: String, given: usize, expected: usize },
    #[error("refinement `({new_label}:{target})` has no defined meet with the targeted requirement{}", if *.budget_hit { " (refinement search budget exceeded)" } else { "" })]
    MeetUndefined { new_label: String, target: String, budget_hit: bool },
    #[error("refinement `({new_label}:{target})` targets no requirement label")]
    UnmatchedRefinement { new_label: String, target: String },
    #[error("declaration of `{name}` collides with an existing declaration in `{ns}`")]
    NameCollision { ns: String, name: String },
    #[error("call target `{target}` is not a declared macro")]
    MissingMacroDecl { target: String },
}

/// Pipeline output: the normal form plus diagnostics gathered on the way.
#[derive(Debug)]
pub struct Normalized {
    pub gamma: RuleSet,
    pub warnings: Vec<String>,
}

/// Working state threaded through the phases.
#[derive(Debug)]
pub struct PipelineState {
    pub gamma: RuleSet,
    pub warnings: Vec<String>,
}

type Resolver<'a> = dyn Fn(&QualifiedName, NameKind) -> Option<QualifiedName> + 'a;

/// Rewrites every name occurring in a command through the resolver; names it
/// maps to `None` stay as written.
fn rewrite_command(rule: &Rule, resolve: &Resolver) -> Rule {
    let name = |q: &QualifiedName, kind: NameKind| resolve(q, kind).unwrap_or_else(|| q.clone());
    match rule {
        Rule::Allow { src, dst, class, perms } => Rule::Allow {
            src: name(src, NameKind::Type),
            dst: name(dst, NameKind::Type),
            class: class.clone(),
            perms: perms.clone(),
        },
        Rule::TypeAttributeSet { attr, expr } => Rule::TypeAttributeSet {
            attr: name(attr, NameKind::TypeAttribute),
            expr: expr.map_names(&|q| name(q, NameKind::Type)),
        },
        Rule::Call { target, args, refinements } => Rule::Call {
            target: target.clone(),
            args: args.iter().map(|a| name(a, NameKind::Type)).collect(),
            refinements: refinements
                .iter()
                .map(|r| ifl::Refinement {
                    new_label: r.new_label.clone(),
                    target: r.target.clone(),
                    requirement: ifl::map_requirement_nodes(&r.requirement, &|q| {
                        resolve(q, NameKind::Type)
                    }),
                })
                .collect(),
        },
        Rule::IflRequirement(lr) => Rule::IflRequirement(LabeledRequirement {
            label: lr.label.clone(),
            requirement: ifl::map_requirement_nodes(&lr.requirement, &|q| resolve(q, NameKind::Type)),
        }),
        other => other.clone(),
    }
}

fn is_command(rule: &Rule) -> bool {
    matches!(
        rule,
        Rule::Allow { .. }
            | Rule::TypeAttributeSet { .. }
            | Rule::Call { .. }
            | Rule::BlockInherit { .. }
            | Rule::IflRequirement(_)
    )
}

/// Names occurring in a command, with the kind they resolve at.
fn command_names(rule: &Rule) -> Vec<(QualifiedName, NameKind)> {
    match rule {
        Rule::Allow { src, dst, .. } => {
            vec![(src.clone(), NameKind::Type), (dst.clone(), NameKind::Type)]
        }
        Rule::TypeAttributeSet { attr, expr } => {
            let mut v = vec![(attr.clone(), NameKind::TypeAttribute)];
            v.extend(expr.leaves().into_iter().map(|q| (q.clone(), NameKind::Type)));
            v
        }
        Rule::Call { args, .. } => args.iter().map(|a| (a.clone(), NameKind::Type)).collect(),
        Rule::IflRequirement(lr) => lr
            .requirement
            .named_nodes()
            .into_iter()
            .map(|q| (q.clone(), NameKind::Type))
            .collect(),
        _ => Vec::new(),
    }
}

/// Substitutes macro arguments for formal parameters in a copied command.
fn substitute_command(rule: &Rule, binding: &BTreeMap<String, QualifiedName>) -> Rule {
    let subst_name = |q: &QualifiedName| -> QualifiedName {
        if !q.is_anchored() && q.segments().len() == 1 {
            if let Some(actual) = binding.get(q.last()) {
                return actual.clone();
            }
        }
        q.clone()
    };
    match rule {
        Rule::Allow { src, dst, class, perms } => Rule::Allow {
            src: subst_name(src),
            dst: subst_name(dst),
            class: class.clone(),
            perms: perms.clone(),
        },
        Rule::TypeAttributeSet { attr, expr } => Rule::TypeAttributeSet {
            attr: subst_name(attr),
            expr: expr.map_names(&subst_name),
        },
        Rule::Call { target, args, refinements } => Rule::Call {
            target: target.clone(),
            args: args.iter().map(&subst_name).collect(),
            refinements: refinements
                .iter()
                .map(|r| ifl::Refinement {
                    new_label: r.new_label.clone(),
                    target: r.target.clone(),
                    requirement: ifl::substitute(&r.requirement, binding),
                })
                .collect(),
        },
        other => other.clone(),
    }
}

impl PipelineState {
    pub fn new(gamma: RuleSet) -> Self {
        PipelineState { gamma, warnings: Vec::new() }
    }

    /// Inserts a declaration or command copied by a rewrite rule, placing it
    /// at the cursor position. Identical re-copies are idempotent; a
    /// same-name declaration of different shape is a configuration error.
    fn insert_copy(
        &mut self,
        at: &mut usize,
        ns: QualifiedName,
        rule: Rule,
    ) -> Result<bool, NormalizeError> {
        if let Some((name, _)) = rule.decl_name() {
            if !self.gamma.contains(&ns, &rule) && self.gamma.declares_any_kind(&ns, name) {
                return Err(NormalizeError::NameCollision {
                    ns: ns.to_string(),
                    name: name.to_owned(),
                });
            }
        }
        let inserted = self.gamma.insert_at(*at, ns, rule);
        if inserted {
            *at += 1;
        }
        Ok(inserted)
    }

    /// Inserts a copied requirement under a label at the cursor position.
    /// A label already holding a different requirement in that namespace is
    /// disambiguated by probing `label_2`, `label_3`, ... for the first free
    /// or identical slot, with a warning.
    fn insert_requirement(
        &mut self,
        at: &mut usize,
        ns: QualifiedName,
        label: String,
        requirement: Requirement,
    ) -> bool {
        let exact = Rule::IflRequirement(LabeledRequirement {
            label: label.clone(),
            requirement: requirement.clone(),
        });
        if self.gamma.contains(&ns, &exact) {
            return false;
        }
        let taken = |gamma: &RuleSet, l: &str| {
            gamma
                .iter()
                .any(|r| r.ns == ns && matches!(&r.rule, Rule::IflRequirement(lr) if lr.label == l))
        };
        let mut chosen = label.clone();
        if taken(&self.gamma, &chosen) {
            let mut k = 2usize;
            loop {
                chosen = format!("{label}_{k}");
                if self.gamma.contains(
                    &ns,
                    &Rule::IflRequirement(LabeledRequirement {
                        label: chosen.clone(),
                        requirement: requirement.clone(),
                    }),
                ) {
                    // An earlier pass already copied this one.
                    return false;
                }
                if !taken(&self.gamma, &chosen) {
                    break;
                }
                k += 1;
            }
            self.warnings.push(format!(
                "requirement label `{label}` already taken in `{ns}`; copied as `{chosen}`"
            ));
        }
        let inserted = self.gamma.insert_at(
            *at,
            ns,
            Rule::IflRequirement(LabeledRequirement { label: chosen, requirement }),
        );
        if inserted {
            *at += 1;
        }
        inserted
    }

    /// Phase 1: anchor the block names of blockinherit rules, resolving
    /// locally or globally.
    pub fn phase1_resolve_inherit(&mut self) -> Result<(), NormalizeError> {
        let global = QualifiedName::global();
        loop {
            let mut changed = false;
            let snapshot: Vec<LocatedRule> = self.gamma.iter().cloned().collect();
            for located in snapshot {
                let Rule::BlockInherit { block, refinements } = &located.rule else { continue };
                match eval_or(&located.ns, &global, NameKind::Block, block, &self.gamma) {
                    Some(resolved) => {
                        if &resolved != block {
                            let new_rule = Rule::BlockInherit {
                                block: resolved,
                                refinements: refinements.clone(),
                            };
                            changed |= self.gamma.replace(&located, new_rule);
                        }
                    }
                    None => {
                        return Err(NormalizeError::UnresolvableBlock {
                            ns: located.ns.to_string(),
                            name: block.to_string(),
                        })
                    }
                }
            }
            if !changed {
                return Ok(());
            }
        }
    }

    /// Phase 2: expand blockinherit by copying the inherited block's located
    /// rules, folding refinement annotations into meets, then drop the
    /// inherit rules.
    pub fn phase2_expand_inherit(&mut self) -> Result<(), NormalizeError> {
        let bound = self.gamma.count_blocks() + 1;
        let mut matched: HashMap<LocatedRule, HashSet<usize>> = HashMap::new();
        let mut pass = 0usize;
        loop {
            let mut changed = false;
            let snapshot: Vec<LocatedRule> = self.gamma.iter().cloned().collect();
            for located in &snapshot {
                let Rule::BlockInherit { block, refinements } = &located.rule else { continue };
                debug_assert!(block.is_anchored());
                let mut cursor = self.gamma.position(located).unwrap_or(self.gamma.len());
                for source in &snapshot {
                    if source == located {
                        continue;
                    }
                    let Some(rho) = block.relative_remainder(&source.ns) else { continue };
                    let dest = QualifiedName::anchored(
                        located.ns.segments().iter().cloned().chain(rho.iter().cloned()),
                    );
                    match &source.rule {
                        Rule::IflRequirement(lr) => {
                            let matching: Vec<usize> = refinements
                                .iter()
                                .enumerate()
                                .filter(|(_, rf)| {
                                    rf.target.path == rho && rf.target.label == lr.label
                                })
                                .map(|(i, _)| i)
                                .collect();
                            if matching.is_empty() {
                                changed |= self.insert_requirement(
                                    &mut cursor,
                                    dest,
                                    lr.label.clone(),
                                    lr.requirement.clone(),
                                );
                            } else {
                                for idx in matching {
                                    let rf = &refinements[idx];
                                    match refine::meet(&lr.requirement, &rf.requirement) {
                                        MeetOutcome::Defined(met) => {
                                            changed |= self.insert_requirement(
                                                &mut cursor,
                                                dest.clone(),
                                                rf.new_label.clone(),
                                                met,
                                            );
                                            matched.entry(located.clone()).or_default().insert(idx);
                                        }
                                        MeetOutcome::Undefined { budget_hit } => {
                                            return Err(NormalizeError::MeetUndefined {
                                                new_label: rf.new_label.clone(),
                                                target: rf.target.to_string(),
                                                budget_hit,
                                            })
                                        }
                                    }
                                }
                            }
                        }
                        _ => changed |= self.insert_copy(&mut cursor, dest, source.rule.clone())?,
                    }
                }
            }
            if !changed {
                break;
            }
            pass += 1;
            if pass > bound {
                return Err(NormalizeError::CyclicInheritance { bound });
            }
        }
        // Every refinement slot must have fired against some copied label.
        let inherits: Vec<LocatedRule> = self
            .gamma
            .iter()
            .filter(|r| matches!(r.rule, Rule::BlockInherit { .. }))
            .cloned()
            .collect();
        for located in inherits {
            let Rule::BlockInherit { refinements, .. } = &located.rule else { unreachable!() };
            let seen = matched.get(&located);
            for (idx, rf) in refinements.iter().enumerate() {
                if !seen.map(|s| s.contains(&idx)).unwrap_or(false) {
                    return Err(NormalizeError::UnmatchedRefinement {
                        new_label: rf.new_label.clone(),
                        target: rf.target.to_string(),
                    });
                }
            }
            self.gamma.remove(&located);
        }
        Ok(())
    }

    /// Phase 3: anchor the macro names of call rules, resolving locally or
    /// globally.
    pub fn phase3_resolve_call(&mut self) -> Result<(), NormalizeError> {
        let global = QualifiedName::global();
        loop {
            let mut changed = false;
            let snapshot: Vec<LocatedRule> = self.gamma.iter().cloned().collect();
            for located in snapshot {
                let Rule::Call { target, args, refinements } = &located.rule else { continue };
                match eval_or(&located.ns, &global, NameKind::Macro, target, &self.gamma) {
                    Some(resolved) => {
                        if &resolved != target {
                            let new_rule = Rule::Call {
                                target: resolved,
                                args: args.clone(),
                                refinements: refinements.clone(),
                            };
                            changed |= self.gamma.replace(&located, new_rule);
                        }
                    }
                    None => {
                        return Err(NormalizeError::UnresolvableMacro {
                            ns: located.ns.to_string(),
                            name: target.to_string(),
                        })
                    }
                }
            }
            if !changed {
                return Ok(());
            }
        }
    }

    /// Phase 4: copy type and typeattribute declarations out of called
    /// macros into the calling namespaces.
    pub fn phase4_copy_decls(&mut self) -> Result<(), NormalizeError> {
        loop {
            let mut changed = false;
            let snapshot: Vec<LocatedRule> = self.gamma.iter().cloned().collect();
            for located in &snapshot {
                let Rule::Call { target, .. } = &located.rule else { continue };
                let mut cursor = self.gamma.position(located).unwrap_or(self.gamma.len());
                for source in &snapshot {
                    if source.ns != *target {
                        continue;
                    }
                    if matches!(source.rule, Rule::TypeDecl(_) | Rule::TypeAttrDecl(_)) {
                        changed |=
                            self.insert_copy(&mut cursor, located.ns.clone(), source.rule.clone())?;
                    }
                }
            }
            if !changed {
                return Ok(());
            }
        }
    }

    /// Phase 5: the sub-pipeline around macro call resolution.
    pub fn phase5_resolve_calls(&mut self) -> Result<(), NormalizeError> {
        let mut matched: HashMap<LocatedRule, HashSet<usize>> = HashMap::new();
        loop {
            let mut changed = false;
            changed |= self.phase5a_resolve_macro_names()?;
            changed |= self.phase5b_copy_commands(&mut matched)?;
            changed |= self.phase5c_remove_calls(&matched)?;
            if !changed {
                break;
            }
        }
        if let Some(left) = self.gamma.iter().find(|r| matches!(r.rule, Rule::Call { .. })) {
            let Rule::Call { target, .. } = &left.rule else { unreachable!() };
            return Err(NormalizeError::UnresolvedCalls {
                first: format!("(call {target} ...) in `{}`", left.ns),
            });
        }
        Ok(())
    }

    /// Phase 5a: inside macro bodies, resolve names that are not local to
    /// the macro but resolve in its enclosing namespaces.
    fn phase5a_resolve_macro_names(&mut self) -> Result<bool, NormalizeError> {
        let macro_nss = self.gamma.macro_namespaces();
        let mut any = false;
        loop {
            let mut changed = false;
            let snapshot: Vec<LocatedRule> = self.gamma.iter().cloned().collect();
            for located in snapshot {
                if !macro_nss.contains(&located.ns) || !is_command(&located.rule) {
                    continue;
                }
                let m = located.ns.clone();
                let gamma = &self.gamma;
                let rewritten = rewrite_command(&located.rule, &|name, kind| {
                    if eval(&m, kind, name, gamma).is_none() {
                        eval_bar(&m, kind, name, gamma)
                    } else {
                        None
                    }
                });
                if rewritten != located.rule {
                    changed |= self.gamma.replace(&located, rewritten);
                }
            }
            any |= changed;
            if !changed {
                return Ok(any);
            }
        }
    }

    /// Phase 5b: copy the commands of innermost called macros into callers,
    /// substituting arguments for parameters; requirement annotations are
    /// instantiated and met against matching refinements.
    fn phase5b_copy_commands(
        &mut self,
        matched: &mut HashMap<LocatedRule, HashSet<usize>>,
    ) -> Result<bool, NormalizeError> {
        let mut any = false;
        loop {
            let mut changed = false;
            let snapshot: Vec<LocatedRule> = self.gamma.iter().cloned().collect();
            for located in &snapshot {
                let Rule::Call { target, args, refinements } = &located.rule else { continue };
                let innermost = !snapshot
                    .iter()
                    .any(|r| r.ns == *target && matches!(r.rule, Rule::Call { .. }));
                if !innermost {
                    continue;
                }
                let params = self.macro_params(target)?;
                if params.len() != args.len() {
                    return Err(NormalizeError::ArityMismatch {
                        target: target.to_string(),
                        given: args.len(),
                        expected: params.len(),
                    });
                }
                let binding: BTreeMap<String, QualifiedName> =
                    params.iter().cloned().zip(args.iter().cloned()).collect();
                let mut cursor = self.gamma.position(located).unwrap_or(self.gamma.len());
                for source in &snapshot {
                    if source.ns != *target || !is_command(&source.rule) {
                        continue;
                    }
                    match &source.rule {
                        Rule::IflRequirement(lr) => {
                            let matching: Vec<usize> = refinements
                                .iter()
                                .enumerate()
                                .filter(|(_, rf)| {
                                    rf.target.path.is_empty() && rf.target.label == lr.label
                                })
                                .map(|(i, _)| i)
                                .collect();
                            if matching.is_empty() {
                                changed |= self.insert_requirement(
                                    &mut cursor,
                                    located.ns.clone(),
                                    lr.label.clone(),
                                    ifl::substitute(&lr.requirement, &binding),
                                );
                            } else {
                                for idx in matching {
                                    let rf = &refinements[idx];
                                    // The meet is taken after instantiating
                                    // both operands, so parameter names align
                                    // with the names written at the call site.
                                    let body = ifl::substitute(&lr.requirement, &binding);
                                    let refinement = ifl::substitute(&rf.requirement, &binding);
                                    match refine::meet(&body, &refinement) {
                                        MeetOutcome::Defined(met) => {
                                            changed |= self.insert_requirement(
                                                &mut cursor,
                                                located.ns.clone(),
                                                rf.new_label.clone(),
                                                met,
                                            );
                                            matched.entry(located.clone()).or_default().insert(idx);
                                        }
                                        MeetOutcome::Undefined { budget_hit } => {
                                            return Err(NormalizeError::MeetUndefined {
                                                new_label: rf.new_label.clone(),
                                                target: rf.target.to_string(),
                                                budget_hit,
                                            })
                                        }
                                    }
                                }
                            }
                        }
                        _ => {
                            let copied = substitute_command(&source.rule, &binding);
                            changed |= self.insert_copy(&mut cursor, located.ns.clone(), copied)?;
                        }
                    }
                }
            }
            any |= changed;
            if !changed {
                return Ok(any);
            }
        }
    }

    /// Phase 5c: remove calls whose macro body contains no further call.
    fn phase5c_remove_calls(
        &mut self,
        matched: &HashMap<LocatedRule, HashSet<usize>>,
    ) -> Result<bool, NormalizeError> {
        let snapshot: Vec<LocatedRule> = self.gamma.iter().cloned().collect();
        let mut changed = false;
        for located in &snapshot {
            let Rule::Call { target, refinements, .. } = &located.rule else { continue };
            let innermost = !snapshot
                .iter()
                .any(|r| r.ns == *target && matches!(r.rule, Rule::Call { .. }));
            if !innermost {
                continue;
            }
            let seen = matched.get(located);
            for (idx, rf) in refinements.iter().enumerate() {
                if !seen.map(|s| s.contains(&idx)).unwrap_or(false) {
                    return Err(NormalizeError::UnmatchedRefinement {
                        new_label: rf.new_label.clone(),
                        target: rf.target.to_string(),
                    });
                }
            }
            changed |= self.gamma.remove(located);
        }
        Ok(changed)
    }

    fn macro_params(&self, target: &QualifiedName) -> Result<Vec<String>, NormalizeError> {
        let holder = target.prefix();
        let name = target.last();
        self.gamma
            .iter()
            .find_map(|r| match &r.rule {
                Rule::MacroDecl(n, params) if r.ns == holder && n == name => Some(params.clone()),
                _ => None,
            })
            .ok_or_else(|| NormalizeError::MissingMacroDecl { target: target.to_string() })
    }

    /// Phase 6: anchor the remaining names of commands under blocks and the
    /// global namespace, resolving locally or globally.
    pub fn phase6_resolve_block_names(&mut self) -> Result<(), NormalizeError> {
        let macro_nss = self.gamma.macro_namespaces();
        let global = QualifiedName::global();
        loop {
            let mut changed = false;
            let snapshot: Vec<LocatedRule> = self.gamma.iter().cloned().collect();
            for located in snapshot {
                if self.gamma.inside_macro(&located.ns, &macro_nss) || !is_command(&located.rule) {
                    continue;
                }
                let ns = located.ns.clone();
                let gamma = &self.gamma;
                let rewritten = rewrite_command(&located.rule, &|name, kind| {
                    if name.is_anchored() {
                        None
                    } else {
                        eval_or(&ns, &global, kind, name, gamma)
                    }
                });
                if rewritten != located.rule {
                    changed |= self.gamma.replace(&located, rewritten);
                }
            }
            if !changed {
                break;
            }
        }
        // Every name under a block or global namespace must now be anchored.
        for located in self.gamma.iter() {
            if self.gamma.inside_macro(&located.ns, &macro_nss) {
                continue;
            }
            for (name, _) in command_names(&located.rule) {
                if !name.is_anchored() {
                    return Err(NormalizeError::UnresolvableName {
                        ns: located.ns.to_string(),
                        name: name.to_string(),
                    });
                }
            }
        }
        Ok(())
    }
}

/// Runs the whole pipeline on a parsed configuration.
pub fn normalize(gamma: &RuleSet) -> Result<Normalized, NormalizeError> {
    let mut state = PipelineState::new(gamma.clone());
    state.phase1_resolve_inherit()?;
    state.phase2_expand_inherit()?;
    state.phase3_resolve_call()?;
    state.phase4_copy_decls()?;
    state.phase5_resolve_calls()?;
    state.phase6_resolve_block_names()?;
    Ok(Normalized { gamma: state.gamma, warnings: state.warnings })
}

/// Removes every requirement annotation: requirement rules are dropped and
/// refinement slots cleared. All other rules are preserved.
pub fn strip_ifl(gamma: &RuleSet) -> RuleSet {
    gamma
        .iter()
        .filter(|r| !r.rule.is_ifl())
        .map(|r| {
            let rule = match &r.rule {
                Rule::Call { target, args, .. } => Rule::Call {
                    target: target.clone(),
                    args: args.clone(),
                    refinements: Vec::new(),
                },
                Rule::BlockInherit { block, .. } => Rule::BlockInherit {
                    block: block.clone(),
                    refinements: Vec::new(),
                },
                other => other.clone(),
            };
            LocatedRule { ns: r.ns.clone(), rule }
        })
        .collect()
}
