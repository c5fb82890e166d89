//! Test-only helpers: a brute-force model-counting oracle that works from the
//! parsed rules directly, a generator of random definite programs, and a
//! small on-disk desk scenario.
#![allow(dead_code)]

pub mod desk;

use std::collections::{BTreeMap, HashSet};

use rand::Rng;
use rml_core::lang::{self, Atom, Domain, Literal, Program};

pub const LISTING1: &str = include_str!("../fixtures/listing1.resin");

pub fn listing1() -> Program {
    lang::parse_program(LISTING1).expect("listing parses")
}

/// One source's weight vector in the oracle's own terms: Bernoulli sources
/// give `[P(false), P(true)]`, Density sources one mass per interval.
pub type OracleWeights = BTreeMap<String, Vec<f64>>;

/// Representative point of interval `k` cut by ascending `cuts`.
fn representative(cuts: &[f64], k: usize) -> f64 {
    match (k, cuts.len()) {
        (_, 0) => 0.0,
        (0, _) => cuts[0] - 1.0,
        (k, n) if k == n => cuts[n - 1] + 1.0,
        (k, _) => 0.5 * (cuts[k - 1] + cuts[k]),
    }
}

/// Least model of the rules under one world, computed by naive iteration.
fn least_model(program: &Program, world: &BTreeMap<&Atom, WorldValue>) -> HashSet<Atom> {
    let holds = |lit: &Literal, model: &HashSet<Atom>| -> bool {
        match lit {
            Literal::Atom(a) => match world.get(a) {
                Some(WorldValue::Bool(b)) => *b,
                Some(WorldValue::Real(_)) => false,
                None => model.contains(a),
            },
            Literal::Compare { atom, op, value } => match world.get(atom) {
                Some(WorldValue::Real(x)) => match op {
                    lang::CmpOp::Lt | lang::CmpOp::Le => x < value,
                    lang::CmpOp::Gt | lang::CmpOp::Ge => x > value,
                },
                _ => false,
            },
        }
    };
    let mut model: HashSet<Atom> = world
        .iter()
        .filter(|(_, v)| matches!(v, WorldValue::Bool(true)))
        .map(|(a, _)| (*a).clone())
        .collect();
    loop {
        let mut changed = false;
        for rule in &program.rules {
            if !model.contains(&rule.head) && rule.body.iter().all(|l| holds(l, &model)) {
                model.insert(rule.head.clone());
                changed = true;
            }
        }
        if !changed {
            return model;
        }
    }
}

#[derive(Clone, Copy)]
enum WorldValue {
    Bool(bool),
    Real(f64),
}

/// Σ over every joint assignment where the target holds of Π source weights.
pub fn brute_force(program: &Program, weights: &OracleWeights) -> f64 {
    let cuts = lang::collect_thresholds(program);
    let arities: Vec<usize> = program
        .sources
        .iter()
        .map(|s| match s.domain {
            Domain::Probability => 2,
            Domain::Density => cuts[&s.token].len() + 1,
        })
        .collect();
    let mut index = vec![0usize; arities.len()];
    let mut total = 0.0;
    loop {
        let mut world = BTreeMap::new();
        let mut weight = 1.0;
        for (i, s) in program.sources.iter().enumerate() {
            let v = match s.domain {
                Domain::Probability => WorldValue::Bool(index[i] == 1),
                Domain::Density => WorldValue::Real(representative(&cuts[&s.token], index[i])),
            };
            world.insert(&s.atom, v);
            weight *= weights[&s.token][index[i]];
        }
        if least_model(program, &world).contains(&program.target.atom) {
            total += weight;
        }
        // Odometer increment.
        let mut i = 0;
        loop {
            if i == index.len() {
                return total;
            }
            index[i] += 1;
            if index[i] < arities[i] {
                break;
            }
            index[i] = 0;
            i += 1;
        }
    }
}

/// Number of values each source takes, keyed by channel token.
pub fn arities(program: &Program) -> BTreeMap<String, usize> {
    let cuts = lang::collect_thresholds(program);
    program
        .sources
        .iter()
        .map(|s| {
            let a = match s.domain {
                Domain::Probability => 2,
                Domain::Density => cuts[&s.token].len() + 1,
            };
            (s.token.clone(), a)
        })
        .collect()
}

pub fn random_vector<R: Rng>(rng: &mut R, arity: usize) -> Vec<f64> {
    if arity == 2 {
        let p: f64 = rng.random();
        return vec![1.0 - p, p];
    }
    let raw: Vec<f64> = (0..arity).map(|_| rng.random::<f64>() + 1e-3).collect();
    let sum: f64 = raw.iter().sum();
    raw.iter().map(|x| x / sum).collect()
}

pub fn random_weights<R: Rng>(rng: &mut R, program: &Program) -> OracleWeights {
    arities(program)
        .into_iter()
        .map(|(token, a)| (token, random_vector(rng, a)))
        .collect()
}

/// Random valid definite program with at most `max_vars` sources. Every
/// Density source is compared at least once so each one is a real variable.
pub fn random_program<R: Rng>(rng: &mut R, max_vars: usize) -> String {
    let n_sources = rng.random_range(1..=max_vars);
    let mut text = String::new();
    let mut kinds = Vec::new();
    for i in 0..n_sources {
        let density = rng.random_bool(0.5);
        let domain = if density { "Density" } else { "Probability" };
        text.push_str(&format!("s{i} <- source(\"/s{i}\", {domain}).\n"));
        kinds.push(density);
    }
    let cut_pool = [5.0, 10.0, 15.0, 20.0];
    let literal = |rng: &mut R, i: usize| -> String {
        if kinds[i] {
            let op = if rng.random_bool(0.5) { "<" } else { ">" };
            format!(
                "s{i} {op} {}",
                cut_pool[rng.random_range(0..cut_pool.len())]
            )
        } else {
            format!("s{i}")
        }
    };
    let n_derived = rng.random_range(1..=4);
    for d in 0..n_derived {
        let n_rules = rng.random_range(1..=3);
        for _ in 0..n_rules {
            let n_body = rng.random_range(1..=3);
            let mut body = Vec::new();
            for _ in 0..n_body {
                if d > 0 && rng.random_bool(0.3) {
                    body.push(format!("h{}", rng.random_range(0..d)));
                } else {
                    let i = rng.random_range(0..n_sources);
                    body.push(literal(rng, i));
                }
            }
            text.push_str(&format!("h{d} if {}.\n", body.join(" and ")));
        }
    }
    // Make sure every density source appears in some comparison.
    for (i, &density) in kinds.iter().enumerate() {
        if density {
            text.push_str(&format!("h{} if {}.\n", n_derived - 1, literal(rng, i)));
        }
    }
    text.push_str(&format!("h{} -> target(\"/t\").\n", n_derived - 1));
    text
}

/// Oracle weights reordered into the circuit's variable order.
pub fn to_assignment(
    variables: &[rml_core::compiler::WorldVariable],
    weights: &OracleWeights,
) -> rml_core::compiler::WeightAssignment {
    rml_core::compiler::WeightAssignment::new(
        variables
            .iter()
            .map(|v| weights[&v.channel].clone())
            .collect(),
    )
}
