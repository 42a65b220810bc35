//! Property suites: syntax round-trips, the refinement preorder laws, the
//! agreement between the definitional matcher and the automaton route, and
//! a small normalizer fuzz over generated configurations.

mod common;

use std::collections::BTreeSet;

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use common::{gen_ifd, gen_kind, gen_requirement, refine_kind};
use ifcil::graph::{build_graph, resolve_typeattributes};
use ifcil::ifl::{parse_ifl, Arrow, IflIsland, Kind, NodeRef, OpSet, Requirement, Segment};
use ifcil::kts::build_kts;
use ifcil::model::Rule;
use ifcil::normalize::{normalize, strip_ifl};
use ifcil::oracle::{enumerate_paths, path_has_kind};
use ifcil::parser::parse_config;
use ifcil::refine::{kind_refines, refines, Ternary};
use ifcil::verify::{KindAutomaton, WitnessStep};

fn ident_strategy() -> impl Strategy<Value = String> {
    "[a-z][a-z0-9_]{0,6}"
}

fn node_strategy() -> impl Strategy<Value = NodeRef> {
    prop_oneof![
        3 => ident_strategy().prop_map(|s| NodeRef::Named(
            ifcil::QualifiedName::parse(&s).unwrap()
        )),
        2 => ident_strategy().prop_map(|s| NodeRef::Named(
            ifcil::QualifiedName::parse(&format!(".{s}")).unwrap()
        )),
        1 => Just(NodeRef::Wildcard),
    ]
}

fn ops_strategy() -> impl Strategy<Value = OpSet> {
    prop_oneof![
        Just(OpSet::All),
        proptest::collection::btree_set("[a-z]{1,5}", 1..4).prop_map(OpSet::Ops),
    ]
}

fn kind_strategy() -> impl Strategy<Value = Kind> {
    (
        proptest::collection::vec(node_strategy(), 2..5),
        proptest::collection::vec((any::<bool>(), ops_strategy()), 1..4),
    )
        .prop_filter_map("segment count fits nodes", |(nodes, arrows)| {
            let n = arrows.len().min(nodes.len() - 1);
            let segments: Vec<Segment> = (0..n)
                .map(|i| Segment {
                    src: nodes[i].clone(),
                    arrow: if arrows[i].0 { Arrow::Multi } else { Arrow::Single },
                    ops: arrows[i].1.clone(),
                    dst: nodes[i + 1].clone(),
                })
                .collect();
            Kind::new(segments).ok()
        })
}

fn requirement_strategy() -> impl Strategy<Value = Requirement> {
    prop_oneof![
        kind_strategy().prop_map(Requirement::Exists),
        kind_strategy().prop_map(Requirement::Prohibit),
        (kind_strategy(), kind_strategy())
            .prop_map(|(p, q)| Requirement::Constraint(p, q)),
    ]
}

proptest! {
    #[test]
    fn annotation_round_trip(req in requirement_strategy()) {
        let rendered = format!("(L) {req}");
        let parsed = match parse_ifl(&rendered) {
            Ok(IflIsland::Requirement(lr)) => lr.requirement,
            other => panic!("{rendered}: {other:?}"),
        };
        prop_assert_eq!(parsed, req);
    }

    #[test]
    fn refinement_is_reflexive(req in requirement_strategy()) {
        prop_assert_eq!(refines(&req, &req), Ternary::True);
    }

    #[test]
    fn qualified_name_round_trip(anchored in any::<bool>(), segs in proptest::collection::vec("[a-z][a-z0-9_]{0,5}", 1..4)) {
        let text = format!("{}{}", if anchored { "." } else { "" }, segs.join("."));
        let name = ifcil::QualifiedName::parse(&text).unwrap();
        prop_assert_eq!(name.to_string(), text);
    }
}

#[test]
fn refinement_is_transitive_on_derived_chains() {
    let mut rng = ChaCha8Rng::seed_from_u64(0x7a15);
    for _ in 0..300 {
        let ifd = gen_ifd(&mut rng, 4, 8);
        let c = gen_kind(&mut rng, &ifd, 2);
        let b = refine_kind(&mut rng, &c, &ifd);
        let a = refine_kind(&mut rng, &b, &ifd);
        assert_eq!(kind_refines(&b, &c), Ternary::True, "{b}  vs  {c}");
        assert_eq!(kind_refines(&a, &b), Ternary::True, "{a}  vs  {b}");
        assert_eq!(kind_refines(&a, &c), Ternary::True, "transitivity: {a}  vs  {c}");
    }
}

/// The matcher on operation-set paths agrees with the automaton on their
/// single-operation refinements: a path has a kind exactly when some
/// refinement is accepted.
#[test]
fn matcher_and_automaton_agree_on_enumerated_paths() {
    let mut rng = ChaCha8Rng::seed_from_u64(0x11a3);
    for _ in 0..60 {
        let ifd = gen_ifd(&mut rng, 4, 6);
        let kts = build_kts(&ifd);
        let kind = gen_kind(&mut rng, &ifd, 3);
        let auto = KindAutomaton::new(&kind, &kts);
        for path in enumerate_paths(&ifd, 4) {
            let by_definition = path_has_kind(&path, &kind, &ifd);
            // Enumerate every single-operation refinement of the path.
            let mut accepted = false;
            let op_lists: Vec<Vec<String>> =
                path.iter().map(|arc| arc.ops.iter().cloned().collect()).collect();
            let mut choice = vec![0usize; path.len()];
            'refinements: loop {
                let steps: Vec<WitnessStep> = path
                    .iter()
                    .zip(&choice)
                    .map(|(arc, &c)| WitnessStep {
                        src: arc.src.clone(),
                        op: op_lists[path.iter().position(|a| std::ptr::eq(a, arc)).unwrap()][c]
                            .clone(),
                        dst: arc.dst.clone(),
                    })
                    .collect();
                if auto.accepts(&steps) {
                    accepted = true;
                    break;
                }
                // Advance the mixed-radix counter over operation choices.
                for i in 0..choice.len() {
                    choice[i] += 1;
                    if choice[i] < op_lists[i].len() {
                        continue 'refinements;
                    }
                    choice[i] = 0;
                }
                break;
            }
            assert_eq!(by_definition, accepted, "path {path:?} kind {kind}");
        }
    }
}

/// Stripping the annotation islands from the concrete text leaves a plain
/// configuration whose rules are the stripped rules of the annotated one.
#[test]
fn backward_compatibility_of_annotations() {
    let text = include_str!("fixtures/webstore.cil");
    let mut stripped_text = String::new();
    let mut rest = text;
    while let Some(start) = rest.find(";IFL;") {
        stripped_text.push_str(&rest[..start]);
        let after = &rest[start + 5..];
        let end = after.find(";IFL;").expect("island closes");
        rest = &after[end + 5..];
    }
    stripped_text.push_str(rest);

    let plain = parse_config(&stripped_text).unwrap().gamma;
    let full = parse_config(text).unwrap().gamma;
    assert_eq!(plain.as_set(), strip_ifl(&full).as_set());
}

/// Generates small random configurations (nested blocks, types, attributes,
/// allows, inherits and calls over declared names) and checks the pipeline
/// invariants on them.
fn gen_config(rng: &mut impl Rng) -> String {
    let mut out = String::new();
    let n_types = rng.gen_range(1..=4usize);
    for i in 0..n_types {
        out.push_str(&format!("(type g{i})\n"));
    }
    let n_blocks = rng.gen_range(1..=3usize);
    for b in 0..n_blocks {
        out.push_str(&format!("(block b{b}\n"));
        let inner_types = rng.gen_range(1..=3usize);
        for i in 0..inner_types {
            out.push_str(&format!("  (type t{i})\n"));
        }
        if rng.gen_bool(0.5) {
            out.push_str(&format!(
                "  (allow t0 {} (file (read)))\n",
                if rng.gen_bool(0.5) { "g0" } else { "t0" }
            ));
        }
        if b > 0 && rng.gen_bool(0.6) {
            out.push_str(&format!("  (blockinherit b{})\n", rng.gen_range(0..b)));
        }
        if rng.gen_bool(0.4) {
            out.push_str(&format!("  ;IFL; (P{b}) t0 +> {} ;IFL;\n", if rng.gen_bool(0.5) { "t0" } else { "g0" }));
        }
        out.push_str(")\n");
    }
    out.push_str("(macro m ((type x))\n  (type inner)\n  (allow x inner (file (write)))\n  ;IFL; (M) x +> inner ;IFL;\n)\n");
    if rng.gen_bool(0.8) {
        out.push_str(&format!("(call m (g{}))\n", rng.gen_range(0..n_types)));
    }
    if rng.gen_bool(0.5) {
        out.push_str("(typeattribute everything)\n(typeattributeset everything (not nobody))\n(typeattribute nobody)\n");
    }
    for _ in 0..rng.gen_range(0..=3usize) {
        let ops: Vec<&str> = ["read", "write", "getattr"]
            .iter()
            .filter(|_| rng.gen_bool(0.5))
            .copied()
            .collect();
        if ops.is_empty() {
            continue;
        }
        out.push_str(&format!(
            "(allow g{} g{} (file ({})))\n",
            rng.gen_range(0..n_types),
            rng.gen_range(0..n_types),
            ops.join(" ")
        ));
    }
    out
}

#[test]
fn pipeline_invariants_on_generated_configurations() {
    let mut rng = ChaCha8Rng::seed_from_u64(0xc0f1);
    for i in 0..150 {
        let text = gen_config(&mut rng);
        let parsed = parse_config(&text).unwrap_or_else(|e| panic!("case {i}: {e}\n{text}"));
        let normalized =
            normalize(&parsed.gamma).unwrap_or_else(|e| panic!("case {i}: {e}\n{text}"));
        let gamma = normalized.gamma;

        // Post-normal shape: no inherits, no calls; semantic names anchored.
        let macro_nss = gamma.macro_namespaces();
        for rule in gamma.iter() {
            assert!(!matches!(rule.rule, Rule::BlockInherit { .. } | Rule::Call { .. }));
            if gamma.inside_macro(&rule.ns, &macro_nss) {
                continue;
            }
            if let Rule::Allow { src, dst, .. } = &rule.rule {
                assert!(src.is_anchored() && dst.is_anchored(), "case {i}\n{text}");
            }
        }

        // Idempotence.
        let again = normalize(&gamma).unwrap().gamma;
        assert_eq!(gamma, again, "case {i}\n{text}");

        // Stripping commutes with normalization.
        let a = strip_ifl(&normalize(&parsed.gamma).unwrap().gamma);
        let b = normalize(&strip_ifl(&parsed.gamma)).unwrap().gamma;
        assert_eq!(a.as_set(), b.as_set(), "case {i}\n{text}");

        // Membership: every type is the singleton member of itself.
        let (graph, _) = build_graph(&gamma).unwrap();
        for t in &graph.types {
            assert_eq!(graph.ta[t], BTreeSet::from([t.clone()]));
        }
        let resolution = resolve_typeattributes(&gamma);
        assert_eq!(resolution.ta, graph.ta);

        // The membership closure of the arcs is idempotent.
        let closed = graph.close_attribute_arcs();
        assert_eq!(closed, closed.close_attribute_arcs());
    }
}

/// Adding types never shrinks an acyclic attribute's membership.
#[test]
fn attribute_membership_monotone_under_type_addition() {
    let mut rng = ChaCha8Rng::seed_from_u64(0x3010);
    for _ in 0..50 {
        let extra = rng.gen_range(1..=3usize);
        let base: String = (0..3).map(|i| format!("(type t{i})\n")).collect();
        let attrs = "(typeattribute neg)\n(typeattributeset neg (not t0))\n(typeattribute pos)\n(typeattributeset pos (or t1 t2))\n";
        let small = format!("{base}{attrs}");
        let grown: String = (0..3 + extra).map(|i| format!("(type t{i})\n")).collect();
        let large = format!("{grown}{attrs}");
        let small_ta = resolve_typeattributes(&normalize(&parse_config(&small).unwrap().gamma).unwrap().gamma).ta;
        let large_ta = resolve_typeattributes(&normalize(&parse_config(&large).unwrap().gamma).unwrap().gamma).ta;
        for attr in [".neg", ".pos"] {
            let attr = ifcil::QualifiedName::parse(attr).unwrap();
            assert!(small_ta[&attr].is_subset(&large_ta[&attr]));
        }
    }
}

#[test]
fn oracle_and_checker_agree_on_attribute_heavy_instances() {
    // Focused differential slice: requirements naming attributes, where
    // label membership matters most. Reported witnesses must also satisfy
    // the definitional matcher exactly as their verdict claims.
    let mut rng = ChaCha8Rng::seed_from_u64(0xab0e);
    for i in 0..300 {
        let ifd = gen_ifd(&mut rng, 5, 10);
        if ifd.attrs.is_empty() {
            continue;
        }
        let req = gen_requirement(&mut rng, &ifd, 3);
        let kts = build_kts(&ifd);
        let labeled = ifcil::ifl::LabeledRequirement {
            label: format!("r{i}"),
            requirement: req.clone(),
        };
        let verdict = ifcil::verify::check(&kts, &labeled);
        let expect = ifcil::oracle::oracle_holds(&ifd, &req);
        let agree = matches!(
            (&verdict.outcome, expect),
            (ifcil::verify::Outcome::Satisfied, true) | (ifcil::verify::Outcome::Violated, false)
        );
        assert!(agree, "instance {i}: {req}");

        if let Some(witness) = &verdict.witness {
            let path: Vec<ifcil::oracle::PathArc> = witness
                .iter()
                .map(|s| ifcil::oracle::PathArc {
                    src: s.src.clone(),
                    ops: BTreeSet::from([s.op.clone()]),
                    dst: s.dst.clone(),
                })
                .collect();
            match (&req, &verdict.outcome) {
                (Requirement::Exists(p), ifcil::verify::Outcome::Satisfied)
                | (Requirement::Prohibit(p), ifcil::verify::Outcome::Violated) => {
                    assert!(path_has_kind(&path, p, &ifd), "instance {i}: witness invalid");
                }
                (Requirement::Constraint(p, q), ifcil::verify::Outcome::Violated) => {
                    assert!(path_has_kind(&path, p, &ifd), "instance {i}: counterexample not of antecedent kind");
                    assert!(!path_has_kind(&path, q, &ifd), "instance {i}: counterexample has consequent kind");
                }
                _ => {}
            }
        }
    }
}

/// Non-bottom resolution results are anchored and, for relative inputs,
/// name a declared entity of the requested kind.
#[test]
fn resolution_results_are_anchored_and_declared() {
    let gamma = parse_config(include_str!("fixtures/webstore.cil")).unwrap().gamma;
    let global = ifcil::QualifiedName::global();
    let namespaces: Vec<ifcil::QualifiedName> = {
        let mut all: Vec<_> = gamma.iter().map(|r| r.ns.clone()).collect();
        all.sort();
        all.dedup();
        all
    };
    for rule in gamma.iter() {
        let names: Vec<(ifcil::QualifiedName, ifcil::model::NameKind)> = match &rule.rule {
            Rule::Allow { src, dst, .. } => vec![
                (src.clone(), ifcil::model::NameKind::Type),
                (dst.clone(), ifcil::model::NameKind::Type),
            ],
            Rule::Call { target, args, .. } => {
                let mut v = vec![(target.clone(), ifcil::model::NameKind::Macro)];
                v.extend(args.iter().map(|a| (a.clone(), ifcil::model::NameKind::Type)));
                v
            }
            _ => continue,
        };
        for sigma in &namespaces {
            for (name, kind) in &names {
                if let Some(resolved) = ifcil::resolve::eval_or(sigma, &global, *kind, name, &gamma)
                {
                    assert!(resolved.is_anchored());
                    if !name.is_anchored() {
                        let fallback = *kind == ifcil::model::NameKind::Type
                            && gamma.declares(
                                &resolved.prefix(),
                                ifcil::model::NameKind::TypeAttribute,
                                resolved.last(),
                            );
                        assert!(
                            gamma.declares(&resolved.prefix(), *kind, resolved.last()) || fallback,
                            "{resolved} not declared as {kind:?}"
                        );
                    }
                }
            }
        }
    }
}
