use super::*;
use crate::compiler::{compile_wmc, evaluate, WeightAssignment};
use crate::lang::parse_program;

const LISTING: &str = include_str!("../../tests/fixtures/listing1.resin");

fn clusters(pairs: &[(&str, usize)]) -> BTreeMap<String, usize> {
    pairs.iter().map(|(k, v)| (k.to_string(), *v)).collect()
}

fn dynamic_clusters() -> BTreeMap<String, usize> {
    clusters(&[("/distance/uas", 4), ("/distance/vessel", 1)])
}

fn listing_weights() -> Vec<(&'static str, Vec<f64>)> {
    vec![
        ("/over/park", vec![0.9, 0.1]),
        ("/distance/primary", vec![0.3, 0.4, 0.3]),
        ("/over/water", vec![0.8, 0.2]),
        ("/distance/hospital", vec![0.05, 0.95]),
        ("/distance/vessel", vec![0.01, 0.99]),
        ("/distance/uas", vec![0.02, 0.98]),
    ]
}

fn broadcast(v: &[f64], cells: usize) -> Vec<f64> {
    v.iter().copied().cycle().take(v.len() * cells).collect()
}

fn ready(text: &str, clusters: &BTreeMap<String, usize>, cells: usize) -> ReactiveCircuit {
    let wmc = compile_wmc(&parse_program(text).unwrap()).unwrap();
    let mut rc = partition(&wmc, clusters, ClusterConfig::default(), cells);
    for v in rc.wmc().variables().to_vec() {
        let uniform = vec![1.0 / v.arity() as f64; v.arity()];
        rc.apply_update(&v.channel, WeightUpdate::Full(&broadcast(&uniform, cells)))
            .unwrap();
    }
    rc
}

#[test]
fn single_cluster_is_one_formula_node() {
    let rc = ready(LISTING, &BTreeMap::new(), 1);
    assert_eq!(rc.formula_nodes().len(), 1);
    for v in rc.wmc().variables() {
        assert_eq!(rc.dep(&v.channel).unwrap(), &[0]);
    }
    assert_eq!(rc.omega(), rc.wmc().omega());
}

#[test]
fn listing_with_dynamic_agents_isolates_the_agent_cone() {
    let mut rc = ready(LISTING, &dynamic_clusters(), 4);
    let all = rc.formula_nodes().len();
    assert!(all > 1);
    let dep_uas = rc.dep("/distance/uas").unwrap().to_vec();
    assert!(dep_uas.len() < all);
    assert!(rc.dep_omega("/distance/uas").unwrap() < rc.omega());
    // Static relations never sit in the agents' cones.
    for static_channel in [
        "/over/park",
        "/over/water",
        "/distance/primary",
        "/distance/hospital",
    ] {
        let v = rc.wmc().variable_for_channel(static_channel).unwrap().id;
        for &f in &dep_uas {
            assert!(
                !rc.formula_nodes()[f].sources.contains(&v),
                "{static_channel} read by f{f}"
            );
        }
    }
    rc.reset_touches();
    let r = rc
        .apply_update(
            "/distance/uas",
            WeightUpdate::Cells {
                cells: &[2],
                values: &[0.7, 0.3],
            },
        )
        .unwrap();
    assert_eq!(r.recomputed, dep_uas);
    assert_eq!(r.cells, vec![2]);
    for (f, &t) in rc.touches().iter().enumerate() {
        assert_eq!(t > 0, dep_uas.contains(&f));
        assert!(rc.memo_valid(f));
    }
}

#[test]
fn matches_compiler_evaluate() {
    let mut rc = ready(LISTING, &dynamic_clusters(), 3);
    for (channel, v) in listing_weights() {
        rc.apply_update(channel, WeightUpdate::Full(&broadcast(&v, 3)))
            .unwrap();
    }
    let wmc = rc.wmc().clone();
    let assignment = WeightAssignment::new(
        wmc.variables()
            .iter()
            .map(|v| {
                listing_weights()
                    .into_iter()
                    .find(|(c, _)| *c == v.channel)
                    .unwrap()
                    .1
            })
            .collect(),
    );
    let grid = crate::compiler::WeightGrid::broadcast(wmc.variables(), &assignment, 3).unwrap();
    let expected = evaluate(&wmc, &grid).unwrap();
    assert_eq!(rc.root_grid(), expected);
    assert_eq!(rc.full_evaluate().unwrap(), expected);
    assert!((expected[0] - 0.72260496).abs() < 1e-12);
}

#[test]
fn unchanged_update_is_skipped() {
    let mut rc = ready(LISTING, &dynamic_clusters(), 2);
    rc.full_evaluate().unwrap();
    let r = rc
        .apply_update("/distance/uas", WeightUpdate::Full(&[0.5, 0.5, 0.5, 0.5]))
        .unwrap();
    assert!(r.skipped);
    assert_eq!(r.ops, 0);
    let r = rc
        .apply_update(
            "/distance/uas",
            WeightUpdate::Full(&[0.502, 0.498, 0.5, 0.5]),
        )
        .unwrap();
    assert!(r.skipped);
    let r = rc
        .apply_update("/distance/uas", WeightUpdate::Full(&[0.51, 0.49, 0.5, 0.5]))
        .unwrap();
    assert!(!r.skipped);
    assert_eq!(r.cells, vec![0]);
}

#[test]
fn full_evaluate_needs_every_source() {
    let wmc = compile_wmc(&parse_program(LISTING).unwrap()).unwrap();
    let mut rc = partition(&wmc, &BTreeMap::new(), ClusterConfig::default(), 1);
    assert!(matches!(
        rc.full_evaluate(),
        Err(CircuitError::UninitializedSource(_))
    ));
    let r = rc
        .apply_update("/over/park", WeightUpdate::Full(&[0.5, 0.5]))
        .unwrap();
    assert_eq!(r.ops, 0);
    assert!(!rc.is_evaluated());
}

#[test]
fn errors_on_unknown_channel_and_bad_shape() {
    let mut rc = ready(LISTING, &BTreeMap::new(), 2);
    assert!(matches!(
        rc.apply_update("/nope", WeightUpdate::Full(&[1.0])),
        Err(CircuitError::UnknownChannel(_))
    ));
    assert!(matches!(
        rc.apply_update("/over/park", WeightUpdate::Full(&[0.5, 0.5])),
        Err(CircuitError::ShapeMismatch(_))
    ));
    assert!(matches!(
        rc.apply_update(
            "/over/park",
            WeightUpdate::Cells {
                cells: &[5],
                values: &[0.5, 0.5]
            }
        ),
        Err(CircuitError::ShapeMismatch(_))
    ));
    assert!(matches!(
        rc.apply_update("/over/park", WeightUpdate::Full(&[0.5, 0.6, 0.5, 0.5])),
        Err(CircuitError::Compile(_))
    ));
}

#[test]
fn gain_substitution() {
    assert_eq!(
        rho_gain(100, [("a", 1.0, 10), ("b", 0.0, 100)]).unwrap(),
        10.0
    );
    assert_eq!(rho_gain(7, [("a", 3.0, 7)]).unwrap(), 1.0);
    assert!(matches!(
        rho_gain(7, [("a", 0.0, 7)]),
        Err(CircuitError::AllRatesZero)
    ));
    assert!(matches!(
        rho_gain(7, [("a", -1.0, 7)]),
        Err(CircuitError::InvalidRate { .. })
    ));
    assert_eq!(rho_gain(7, [("a", 1.0, 0)]).unwrap(), f64::INFINITY);
}

#[test]
fn gain_of_a_single_source_circuit_is_one() {
    let rc = ready(
        r#"a <- source("/a", Probability). t if a. t -> target("/t")."#,
        &BTreeMap::new(),
        1,
    );
    let rates = [("/a".to_string(), 2.0)].into_iter().collect();
    let report = rc.gain(&rates).unwrap();
    assert_eq!(report.rho, 1.0);
}

#[test]
fn repartition_with_same_clusters_carries_everything() {
    let mut rc = ready(LISTING, &dynamic_clusters(), 4);
    for (channel, v) in listing_weights() {
        rc.apply_update(channel, WeightUpdate::Full(&broadcast(&v, 4)))
            .unwrap();
    }
    let (same, stats) = rc.repartition(&dynamic_clusters());
    assert_eq!(stats.recomputed, 0);
    assert_eq!(stats.carried, rc.formula_nodes().len());
    assert_eq!(same.formula_nodes(), rc.formula_nodes());
    assert_eq!(same.root_grid(), rc.root_grid());

    let (flat, stats) = rc.repartition(&BTreeMap::new());
    assert!(stats.recomputed >= 1);
    assert!((flat.root_grid()[0] - rc.root_grid()[0]).abs() < 1e-12);
}

#[test]
fn dump_lists_every_channel() {
    let rc = ready(LISTING, &dynamic_clusters(), 1);
    let dump = rc.dump_partition();
    for (channel, _) in listing_weights() {
        assert!(
            dump.lines().any(|l| l.starts_with(channel)),
            "{channel} missing:\n{dump}"
        );
    }
    assert!(dump.contains("root f"));
}
