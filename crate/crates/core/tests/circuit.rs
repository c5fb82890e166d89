mod support;

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rml_core::circuit::{partition, ReactiveCircuit, WeightUpdate};
use rml_core::compiler::{compile_wmc, evaluate, WeightGrid, WmcCircuit};
use rml_core::lang::parse_program;
use rml_core::signals::ClusterConfig;

fn random_slice<R: Rng>(rng: &mut R, arity: usize, cells: usize) -> Vec<f64> {
    (0..cells)
        .flat_map(|_| support::random_vector(rng, arity))
        .collect()
}

fn random_clusters<R: Rng>(rng: &mut R, wmc: &WmcCircuit, max: usize) -> BTreeMap<String, usize> {
    wmc.variables()
        .iter()
        .map(|v| (v.channel.clone(), rng.random_range(0..=max)))
        .collect()
}

/// A partitioned circuit with random weights everywhere, fully evaluated.
fn random_ready<R: Rng>(
    rng: &mut R,
    wmc: &WmcCircuit,
    cells: usize,
    max_cluster: usize,
) -> ReactiveCircuit {
    let clusters = random_clusters(rng, wmc, max_cluster);
    let mut rc = partition(wmc, &clusters, ClusterConfig::default(), cells);
    rc.set_epsilon(0.0);
    for v in wmc.variables() {
        let slice = random_slice(rng, v.arity(), cells);
        rc.apply_update(&v.channel, WeightUpdate::Full(&slice))
            .unwrap();
    }
    assert!(rc.is_evaluated());
    rc
}

fn scratch(rc: &ReactiveCircuit) -> Vec<f64> {
    evaluate(rc.wmc(), rc.weights()).unwrap()
}

fn assert_close(a: &[f64], b: &[f64], tol: f64) {
    assert_eq!(a.len(), b.len());
    for (x, y) in a.iter().zip(b) {
        assert!((x - y).abs() <= tol, "{x} vs {y}");
    }
}

#[test]
fn partitioned_equals_unpartitioned_on_random_grids() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    for _ in 0..20 {
        let program = parse_program(&support::random_program(&mut rng, 6)).unwrap();
        let wmc = compile_wmc(&program).unwrap();
        let clusters = random_clusters(&mut rng, &wmc, 3);
        let mut rc = partition(&wmc, &clusters, ClusterConfig::default(), 6);
        for _ in 0..100 {
            let mut grid = WeightGrid::uniform(wmc.variables(), 6);
            for v in wmc.variables() {
                let slice = random_slice(&mut rng, v.arity(), 6);
                grid.set(v.id, slice.clone()).unwrap();
                rc.apply_update(&v.channel, WeightUpdate::Full(&slice))
                    .unwrap();
            }
            let got = rc.full_evaluate().unwrap();
            assert_close(&got, &evaluate(&wmc, &grid).unwrap(), 1e-12);
        }
    }
}

#[test]
fn incremental_equals_scratch_with_repartitions() {
    let mut rng = ChaCha8Rng::seed_from_u64(22);
    for _ in 0..40 {
        let program = parse_program(&support::random_program(&mut rng, 6)).unwrap();
        let wmc = compile_wmc(&program).unwrap();
        let cells = 8;
        let mut rc = random_ready(&mut rng, &wmc, cells, 3);
        for step in 0..50 {
            if step % 17 == 16 {
                let clusters = random_clusters(&mut rng, &wmc, 3);
                rc = rc.repartition(&clusters).0;
                assert_close(&rc.root_grid(), &scratch(&rc), 1e-12);
                continue;
            }
            let v = &wmc.variables()[rng.random_range(0..wmc.variables().len())];
            let n = rng.random_range(1..=cells);
            let mut listed: Vec<usize> = (0..cells).collect();
            for i in 0..n {
                let j = rng.random_range(i..cells);
                listed.swap(i, j);
            }
            listed.truncate(n);
            let values = random_slice(&mut rng, v.arity(), n);
            rc.reset_touches();
            let r = rc
                .apply_update(
                    &v.channel,
                    WeightUpdate::Cells {
                        cells: &listed,
                        values: &values,
                    },
                )
                .unwrap();
            let dep = rc.dep(&v.channel).unwrap().to_vec();
            for (f, &t) in rc.touches().iter().enumerate() {
                assert!(t == 0 || dep.contains(&f), "touched f{f} outside Dep");
            }
            assert_eq!(r.recomputed, dep);
            assert_close(&rc.root_grid(), &scratch(&rc), 1e-12);
        }
    }
}

#[test]
fn reported_ops_match_dep_accounting() {
    let mut rng = ChaCha8Rng::seed_from_u64(23);
    let program = support::listing1();
    let wmc = compile_wmc(&program).unwrap();
    let clusters: BTreeMap<String, usize> = [
        ("/distance/uas".to_string(), 4),
        ("/distance/vessel".to_string(), 1),
    ]
    .into_iter()
    .collect();
    let cells = 25;
    let mut rc = partition(&wmc, &clusters, ClusterConfig::default(), cells);
    for v in wmc.variables() {
        rc.apply_update(
            &v.channel,
            WeightUpdate::Full(&random_slice(&mut rng, v.arity(), cells)),
        )
        .unwrap();
    }
    let mut total = 0;
    let mut predicted = 0;
    for _ in 0..200 {
        let channel = if rng.random_bool(0.8) {
            "/distance/uas"
        } else {
            "/distance/vessel"
        };
        let n = rng.random_range(1..5);
        let listed: Vec<usize> = (0..n).map(|_| rng.random_range(0..cells)).collect();
        let values = random_slice(&mut rng, 2, n);
        let r = rc
            .apply_update(
                channel,
                WeightUpdate::Cells {
                    cells: &listed,
                    values: &values,
                },
            )
            .unwrap();
        total += r.ops;
        if !r.skipped {
            predicted += rc.dep_omega(channel).unwrap() * r.cells.len() as u64;
        }
    }
    assert_eq!(total, predicted);
    assert!(total > 0);
}

#[test]
fn faster_sources_get_cheaper_cones_with_two_clusters() {
    let mut rng = ChaCha8Rng::seed_from_u64(24);
    for _ in 0..200 {
        let program = parse_program(&support::random_program(&mut rng, 6)).unwrap();
        let wmc = compile_wmc(&program).unwrap();
        let clusters = random_clusters(&mut rng, &wmc, 1);
        let rc = partition(&wmc, &clusters, ClusterConfig::default(), 1);
        let cost: Vec<(usize, u64)> = wmc
            .variables()
            .iter()
            .filter(|v| !rc.dep(&v.channel).unwrap().is_empty())
            .map(|v| (clusters[&v.channel], rc.dep_omega(&v.channel).unwrap()))
            .collect();
        for &(ka, ca) in &cost {
            for &(kb, cb) in &cost {
                if ka > kb {
                    assert!(ca <= cb, "cluster {ka} costs {ca}, cluster {kb} costs {cb}");
                }
            }
        }
    }
}

#[test]
fn promoting_a_source_never_grows_its_share_of_the_circuit() {
    let mut rng = ChaCha8Rng::seed_from_u64(25);
    for _ in 0..200 {
        let program = parse_program(&support::random_program(&mut rng, 6)).unwrap();
        let wmc = compile_wmc(&program).unwrap();
        let mut clusters = random_clusters(&mut rng, &wmc, 1);
        let v = &wmc.variables()[rng.random_range(0..wmc.variables().len())];
        clusters.insert(v.channel.clone(), 0);
        let before = partition(&wmc, &clusters, ClusterConfig::default(), 1);
        clusters.insert(v.channel.clone(), 2);
        let (after, _) = before.repartition(&clusters);
        let (b, a) = (
            before.dep_omega(&v.channel).unwrap(),
            after.dep_omega(&v.channel).unwrap(),
        );
        if before.dep(&v.channel).unwrap().is_empty() {
            continue;
        }
        // The new decision order can make the whole circuit larger, so only
        // the cone's share of Ω is guaranteed not to grow. The absolute cost
        // may grow only when the cone already spanned everything.
        assert!(
            a * before.omega() <= b * after.omega(),
            "share grew: {b}/{} -> {a}/{}",
            before.omega(),
            after.omega()
        );
        assert!(a <= b || b == before.omega(), "{b} -> {a}");
    }
}

#[test]
fn sub_threshold_stream_recomputes_nothing() {
    let mut rng = ChaCha8Rng::seed_from_u64(26);
    let wmc = compile_wmc(&support::listing1()).unwrap();
    let cells = 16;
    let mut rc = random_ready(&mut rng, &wmc, cells, 2);
    rc.set_epsilon(0.003);
    let base = rc
        .weights()
        .slice(wmc.variable_for_channel("/distance/uas").unwrap().id)
        .to_vec();
    rc.reset_touches();
    for _ in 0..100 {
        let jitter: Vec<f64> = base
            .chunks(2)
            .flat_map(|v| {
                let d = (rng.random::<f64>() - 0.5) * 0.005;
                let p = (v[1] + d).clamp(0.0, 1.0);
                [1.0 - p, p]
            })
            .collect();
        let r = rc
            .apply_update("/distance/uas", WeightUpdate::Full(&jitter))
            .unwrap();
        assert!(r.skipped);
        assert_eq!(r.ops, 0);
    }
    assert!(rc.touches().iter().all(|&t| t == 0));
}
