mod support;

use proptest::prelude::*;
use rml_core::lang::{
    collect_thresholds, parse_program, validate, Atom, ChannelDecl, CmpOp, Domain, Literal,
    Program, Rule, TargetDecl, Violation,
};

#[test]
fn listing_parses_with_expected_structure() {
    let p = support::listing1();
    let tokens: Vec<&str> = p.sources.iter().map(|s| s.token.as_str()).collect();
    assert_eq!(
        tokens,
        [
            "/over/park",
            "/distance/primary",
            "/over/water",
            "/distance/hospital",
            "/distance/vessel",
            "/distance/uas"
        ]
    );
    let heads: Vec<String> = p.derived_heads().iter().map(|a| a.to_string()).collect();
    assert_eq!(
        heads,
        ["permitted", "building_safety", "agent_safety", "landscape"]
    );
    assert_eq!(p.target.atom, Atom::new("landscape"));
    assert_eq!(p.target.token, "/landscape");
    assert_eq!(p.rules_for(&Atom::new("permitted")).count(), 4);
}

#[test]
fn listing_validates_cleanly() {
    assert!(validate(&support::listing1()).is_ok());
}

#[test]
fn listing_thresholds() {
    let cuts = collect_thresholds(&support::listing1());
    assert_eq!(cuts["/distance/primary"], vec![15.0, 35.0]);
    assert_eq!(cuts["/distance/hospital"], vec![200.0]);
    assert_eq!(cuts["/distance/vessel"], vec![100.0]);
    assert_eq!(cuts["/distance/uas"], vec![100.0]);
    assert_eq!(cuts.len(), 4);
}

#[test]
fn each_single_mutation_is_reported() {
    let base = support::listing1();
    type Mutation = (&'static str, Box<dyn Fn(&mut Program)>);
    let mutations: Vec<Mutation> = vec![
        (
            "self loop",
            Box::new(|p| {
                p.rules.push(Rule {
                    head: Atom::new("permitted"),
                    body: vec![Literal::Atom(Atom::new("permitted"))],
                })
            }),
        ),
        (
            "two-step cycle",
            Box::new(|p| {
                p.rules.push(Rule {
                    head: Atom::new("permitted"),
                    body: vec![Literal::Atom(Atom::new("landscape"))],
                })
            }),
        ),
        (
            "comparison on probability channel",
            Box::new(|p| {
                p.rules[0].body[0] = Literal::Compare {
                    atom: Atom::with_arg("over", "water"),
                    op: CmpOp::Lt,
                    value: 3.0,
                }
            }),
        ),
        (
            "bare density atom",
            Box::new(|p| p.rules[0].body[0] = Literal::Atom(Atom::with_arg("distance", "uas"))),
        ),
        (
            "unknown atom",
            Box::new(|p| p.rules[0].body.push(Literal::Atom(Atom::new("ghost")))),
        ),
        (
            "unreachable target",
            Box::new(|p| p.target.atom = Atom::new("nowhere")),
        ),
        (
            "source as head",
            Box::new(|p| {
                p.rules.push(Rule {
                    head: Atom::with_arg("over", "park"),
                    body: vec![Literal::Atom(Atom::with_arg("over", "water"))],
                })
            }),
        ),
        (
            "duplicate channel",
            Box::new(|p| {
                p.sources.push(ChannelDecl {
                    atom: Atom::new("extra"),
                    token: "/over/park".into(),
                    domain: Domain::Probability,
                })
            }),
        ),
        ("empty body", Box::new(|p| p.rules[0].body.clear())),
    ];
    for (name, mutate) in mutations {
        let mut p = base.clone();
        mutate(&mut p);
        let report = validate(&p);
        assert!(!report.is_ok(), "mutation {name:?} not detected");
    }
}

#[test]
fn two_step_cycle_lists_its_atoms() {
    let p = parse_program(
        r#"s <- source("/s", Probability). a if b. b if a. a if s. a -> target("/t")."#,
    )
    .unwrap();
    let report = validate(&p);
    assert!(report
        .violations
        .iter()
        .any(|v| matches!(v, Violation::CyclicDefinition { cycle } if cycle.len() == 3)));
}

fn ident() -> impl Strategy<Value = String> {
    "[a-z][a-z0-9_]{0,5}".prop_filter("keywords", |s| {
        !matches!(s.as_str(), "if" | "and" | "or" | "not")
    })
}

fn atom() -> impl Strategy<Value = Atom> {
    (ident(), proptest::option::of(ident())).prop_map(|(name, arg)| Atom { name, arg })
}

fn constant() -> impl Strategy<Value = f64> {
    prop_oneof![(-1000i32..1000).prop_map(f64::from), -1e4f64..1e4]
}

fn op() -> impl Strategy<Value = CmpOp> {
    prop_oneof![
        Just(CmpOp::Lt),
        Just(CmpOp::Gt),
        Just(CmpOp::Le),
        Just(CmpOp::Ge)
    ]
}

/// Structurally valid programs: sources with distinct atoms and tokens,
/// rules whose bodies only mention sources or earlier heads.
fn program() -> impl Strategy<Value = Program> {
    (
        proptest::collection::btree_set(atom(), 1..5),
        proptest::collection::vec(any::<bool>(), 5),
        proptest::collection::vec(
            (proptest::collection::vec(
                (
                    any::<prop::sample::Index>(),
                    op(),
                    constant(),
                    any::<bool>(),
                ),
                1..4,
            ),),
            0..5,
        ),
        "[a-z/]{1,8}",
    )
        .prop_map(|(source_atoms, densities, rule_specs, target_token)| {
            let sources: Vec<ChannelDecl> = source_atoms
                .into_iter()
                .enumerate()
                .map(|(i, atom)| ChannelDecl {
                    token: format!("/c{i}/{}", atom.name),
                    domain: if densities[i % densities.len()] {
                        Domain::Density
                    } else {
                        Domain::Probability
                    },
                    atom: Atom {
                        name: format!("src_{}", atom.name),
                        arg: atom.arg,
                    },
                })
                .collect();
            let mut rules = Vec::new();
            for (r, (body_spec,)) in rule_specs.into_iter().enumerate() {
                let body = body_spec
                    .into_iter()
                    .map(|(idx, op, value, use_head)| {
                        if use_head && r > 0 {
                            Literal::Atom(Atom::new(format!("head{}", idx.index(r))))
                        } else {
                            let s = idx.get(&sources);
                            match s.domain {
                                Domain::Density => Literal::Compare {
                                    atom: s.atom.clone(),
                                    op,
                                    value,
                                },
                                Domain::Probability => Literal::Atom(s.atom.clone()),
                            }
                        }
                    })
                    .collect();
                rules.push(Rule {
                    head: Atom::new(format!("head{r}")),
                    body,
                });
            }
            let target_atom = rules
                .last()
                .map(|r| r.head.clone())
                .unwrap_or_else(|| sources[0].atom.clone());
            Program {
                sources,
                rules,
                target: TargetDecl {
                    atom: target_atom,
                    token: target_token,
                },
            }
        })
}

proptest! {
    #[test]
    fn print_parse_round_trip(p in program()) {
        let printed = p.to_string();
        let reparsed = parse_program(&printed).expect("printed program parses");
        prop_assert_eq!(&reparsed, &p);
        prop_assert_eq!(parse_program(&reparsed.to_string()).unwrap(), reparsed);
    }

    #[test]
    fn thresholds_strictly_ascending(p in program()) {
        for cuts in collect_thresholds(&p).values() {
            prop_assert!(cuts.windows(2).all(|w| w[0] < w[1]));
        }
    }
}

#[test]
fn listing_round_trips_through_printer() {
    let p = support::listing1();
    assert_eq!(parse_program(&p.to_string()).unwrap(), p);
}
