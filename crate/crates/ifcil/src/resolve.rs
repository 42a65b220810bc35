//! Name resolution over a rule set.
//!
//! `eval` resolves a name directly under one namespace: anchored names are
//! fixed points, relative names succeed when the namespace declares an entity
//! of the requested kind. `eval_bar` retries in parent namespaces, stopping
//! once the immediate children of the global namespace are exhausted; the
//! global namespace itself is only consulted by `eval_or`, which realizes the
//! "resolved locally, if possible, or globally otherwise" reading used by the
//! normalization phases.
//!
//! When resolving a type, a typeattribute of the same name is accepted as a
//! fallback, since typeattributes are treated as types wherever a type may
//! occur.

use crate::model::{NameKind, RuleSet};
use crate::name::QualifiedName;

fn declares_with_fallback(gamma: &RuleSet, ns: &QualifiedName, kind: NameKind, name: &str) -> bool {
    if gamma.declares(ns, kind, name) {
        return true;
    }
    kind == NameKind::Type && gamma.declares(ns, NameKind::TypeAttribute, name)
}

/// Resolves `p` in namespace `sigma`. Anchored names are returned unchanged;
/// a relative `rho.n` resolves to `sigma.rho.n` when `sigma.rho` declares an
/// entity of kind `k` named `n`, and to `None` otherwise.
pub fn eval(
    sigma: &QualifiedName,
    kind: NameKind,
    p: &QualifiedName,
    gamma: &RuleSet,
) -> Option<QualifiedName> {
    debug_assert!(sigma.is_anchored());
    if p.is_anchored() {
        return Some(p.clone());
    }
    let holder = sigma.join(&p.prefix());
    if declares_with_fallback(gamma, &holder, kind, p.last()) {
        Some(sigma.join(p))
    } else {
        None
    }
}

/// Resolves `p` in `sigma` or, failing that, in its parent namespaces.
/// The walk ends at depth one: the global namespace is not consulted.
pub fn eval_bar(
    sigma: &QualifiedName,
    kind: NameKind,
    p: &QualifiedName,
    gamma: &RuleSet,
) -> Option<QualifiedName> {
    let mut ns = sigma.clone();
    loop {
        if let Some(resolved) = eval(&ns, kind, p, gamma) {
            return Some(resolved);
        }
        match ns.parent() {
            Some(parent) if !parent.is_global() => ns = parent,
            _ => return None,
        }
    }
}

/// Resolves `p` in `sigma` (with the parent walk) and falls back to
/// `sigma_alt` on failure. The phases invoke this with the global namespace
/// as the fallback.
pub fn eval_or(
    sigma: &QualifiedName,
    sigma_alt: &QualifiedName,
    kind: NameKind,
    p: &QualifiedName,
    gamma: &RuleSet,
) -> Option<QualifiedName> {
    eval_bar(sigma, kind, p, gamma).or_else(|| eval_bar(sigma_alt, kind, p, gamma))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::parser::parse_config;

    fn gamma(text: &str) -> RuleSet {
        parse_config(text).unwrap().gamma
    }

    fn q(text: &str) -> QualifiedName {
        QualifiedName::parse(text).unwrap()
    }

    #[test]
    fn anchored_names_are_fixed_points() {
        let g = RuleSet::new();
        let out = eval(&q(".A"), NameKind::Type, &q(".a"), &g);
        assert_eq!(out, Some(q(".a")));
        // Every sigma and kind gives the same answer for an anchored name.
        assert_eq!(eval(&QualifiedName::global(), NameKind::Block, &q(".a"), &g), Some(q(".a")));
    }

    #[test]
    fn resolves_through_nested_blocks() {
        let g = gamma(
            "(block tree\n  (block nest\n     (type egg))\n  (type bird)\n  (allow bird nest.egg (file (write))))",
        );
        assert_eq!(
            eval(&q(".tree"), NameKind::Type, &q("nest.egg"), &g),
            Some(q(".tree.nest.egg"))
        );
    }

    #[test]
    fn missing_declaration_gives_bottom() {
        let g = gamma("(block inhouse (type object))");
        assert_eq!(eval(&q(".inhouse"), NameKind::Type, &q("man"), &g), None);
    }

    #[test]
    fn parent_walk_finds_enclosing_declaration() {
        let g = gamma("(block house (type man) (block inner (type chair)))");
        assert_eq!(
            eval_bar(&q(".house.inner"), NameKind::Type, &q("man"), &g),
            Some(q(".house.man"))
        );
    }

    #[test]
    fn parent_walk_stops_before_global_namespace() {
        // Per the resolution definition the walk exhausts the immediate
        // children of the global namespace; a global declaration is only
        // reachable through the explicit global fallback.
        let g = gamma(
            "(type stranger)\n(block inhouse\n  (type man)\n  (type object))",
        );
        assert_eq!(eval_bar(&q(".inhouse"), NameKind::Type, &q("stranger"), &g), None);
        assert_eq!(
            eval_or(&q(".inhouse"), &QualifiedName::global(), NameKind::Type, &q("stranger"), &g),
            Some(q(".stranger"))
        );
    }

    #[test]
    fn nothing_declared_gives_bottom() {
        let g = RuleSet::new();
        assert_eq!(eval_bar(&QualifiedName::global(), NameKind::Block, &q("Z"), &g), None);
    }

    #[test]
    fn local_or_global_resolution() {
        // The macro/type layout of the inheritance-ordering configuration.
        let g = gamma(
            "(type a)\n(macro m((type x))\n  (type b)\n  (allow x b (file (read))))\n(block A\n  (call m(a)))\n(block B\n  (type a)\n  (blockinherit A))",
        );
        let global = QualifiedName::global();
        assert_eq!(eval_or(&q(".A"), &global, NameKind::Macro, &q("m"), &g), Some(q(".m")));
        assert_eq!(eval_or(&q(".B"), &global, NameKind::Type, &q("a"), &g), Some(q(".B.a")));
        assert_eq!(eval_or(&q(".A"), &global, NameKind::Type, &q("a"), &g), Some(q(".a")));
    }

    #[test]
    fn typeattribute_fallback_for_type_lookups() {
        let g = gamma("(typeattribute other)");
        let global = QualifiedName::global();
        assert_eq!(eval(&global, NameKind::Type, &q("other"), &g), Some(q(".other")));
        assert_eq!(eval(&global, NameKind::TypeAttribute, &q("other"), &g), Some(q(".other")));
        assert_eq!(eval(&global, NameKind::Block, &q("other"), &g), None);
    }
}
