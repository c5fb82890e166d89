//! Exact weighted model counting: a program's target is compiled into an
//! arithmetic circuit over indicator leaves, one per (variable, value).
//!
//! Compilation is a Shannon decomposition in a chosen variable order.
//! Variables in faster-changing clusters are tested nearest the root, so the
//! sub-circuits below only depend on slower signals and can be memoized by
//! [`crate::circuit`]. Structurally equal sub-circuits are shared.

mod semantics;
mod weights;

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;
use std::sync::Arc;

use rayon::prelude::*;

use crate::lang::{Atom, Program, ValidationReport};

pub use semantics::{boolean_semantics, BooleanSemantics, Expr, ExprArena, ExprId, ValueSet};
pub(crate) use weights::check_vectors;
pub use weights::{bernoulli, WeightAssignment, WeightGrid};

pub type VarId = usize;
pub type NodeId = usize;

/// Default cap on the number of joint worlds, Π arity.
pub const DEFAULT_WORLD_CAP: u128 = 1 << 20;

#[derive(Debug, thiserror::Error)]
pub enum CompileError {
    #[error("program is invalid:\n{0}")]
    Invalid(ValidationReport),
    #[error("program has {worlds} joint worlds, above the cap of {cap}")]
    VariableBudgetExceeded { worlds: u128, cap: u128 },
    #[error("channel {channel} has {count} thresholds; at most 127 are supported")]
    TooManyThresholds { channel: String, count: usize },
    #[error("weight shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("invalid weights for {channel} at cell {cell}: {message}")]
    InvalidWeights {
        channel: String,
        cell: usize,
        message: String,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub enum VarOrigin {
    /// Probability channel; value 1 is "true".
    Bernoulli,
    /// Density channel cut into `cuts.len() + 1` intervals:
    /// `(-inf, c0), [c0, c1), ..., [c_last, +inf)`.
    Categorical { cuts: Vec<f64> },
}

#[derive(Debug, Clone, PartialEq)]
pub struct WorldVariable {
    pub id: VarId,
    pub channel: String,
    pub atom: Atom,
    pub origin: VarOrigin,
}

impl WorldVariable {
    pub fn arity(&self) -> usize {
        match &self.origin {
            VarOrigin::Bernoulli => 2,
            VarOrigin::Categorical { cuts } => cuts.len() + 1,
        }
    }

    pub fn cuts(&self) -> &[f64] {
        match &self.origin {
            VarOrigin::Bernoulli => &[],
            VarOrigin::Categorical { cuts } => cuts,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Node {
    Sum(Vec<NodeId>),
    Product(Vec<NodeId>),
    /// P(var = value) in the current cell.
    Indicator {
        var: VarId,
        value: usize,
    },
    Constant(bool),
}

impl Node {
    pub fn children(&self) -> &[NodeId] {
        match self {
            Node::Sum(cs) | Node::Product(cs) => cs,
            _ => &[],
        }
    }

    /// Scalar adds or multiplies needed to evaluate this node once.
    pub fn omega(&self) -> u64 {
        match self {
            Node::Sum(cs) | Node::Product(cs) => cs.len().saturating_sub(1) as u64,
            Node::Indicator { .. } | Node::Constant(_) => 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct CompileOptions {
    pub world_cap: u128,
    /// Cluster index per channel token; missing channels count as cluster 0.
    pub clusters: BTreeMap<String, usize>,
}

impl Default for CompileOptions {
    fn default() -> Self {
        CompileOptions {
            world_cap: DEFAULT_WORLD_CAP,
            clusters: BTreeMap::new(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct WmcCircuit {
    semantics: Arc<BooleanSemantics>,
    order: Vec<VarId>,
    nodes: Vec<Node>,
    root: NodeId,
}

/// Decision order, root first: higher cluster index first, ties broken by
/// channel token.
pub fn decision_order(
    variables: &[WorldVariable],
    clusters: &BTreeMap<String, usize>,
) -> Vec<VarId> {
    let mut order: Vec<VarId> = variables.iter().map(|v| v.id).collect();
    order.sort_by(|&a, &b| {
        let ca = clusters.get(&variables[a].channel).copied().unwrap_or(0);
        let cb = clusters.get(&variables[b].channel).copied().unwrap_or(0);
        cb.cmp(&ca)
            .then_with(|| variables[a].channel.cmp(&variables[b].channel))
    });
    order
}

pub fn compile_wmc(program: &Program) -> Result<WmcCircuit, CompileError> {
    compile_wmc_with(program, &CompileOptions::default())
}

pub fn compile_wmc_with(
    program: &Program,
    opts: &CompileOptions,
) -> Result<WmcCircuit, CompileError> {
    let semantics = boolean_semantics(program)?;
    let worlds = semantics
        .variables
        .iter()
        .fold(1u128, |acc, v| acc.saturating_mul(v.arity() as u128));
    if worlds > opts.world_cap {
        return Err(CompileError::VariableBudgetExceeded {
            worlds,
            cap: opts.world_cap,
        });
    }
    let order = decision_order(&semantics.variables, &opts.clusters);
    Ok(build(Arc::new(semantics), order))
}

#[derive(Clone, Copy, PartialEq, Eq, Hash, Debug)]
enum Sub {
    False,
    True,
    Node(NodeId),
}

struct Builder {
    semantics: BooleanSemantics,
    order: Vec<VarId>,
    nodes: Vec<Node>,
    unique: HashMap<Node, NodeId>,
    memo: HashMap<ExprId, Sub>,
    cofactor_memo: HashMap<(VarId, usize), HashMap<ExprId, ExprId>>,
}

impl Builder {
    fn node(&mut self, n: Node) -> NodeId {
        if let Some(&id) = self.unique.get(&n) {
            return id;
        }
        let id = self.nodes.len();
        self.nodes.push(n.clone());
        self.unique.insert(n, id);
        id
    }

    /// Decision structure of `f`, testing variables from `order[level]` on.
    /// Cofactoring removes the tested variable, so `f` alone keys the memo.
    fn decide(&mut self, f: ExprId, level: usize) -> Sub {
        if f == semantics::FALSE {
            return Sub::False;
        }
        if f == semantics::TRUE {
            return Sub::True;
        }
        if let Some(&s) = self.memo.get(&f) {
            return s;
        }
        let var = self.order[level];
        let arity = self.semantics.variables[var].arity();
        let mut branches = Vec::with_capacity(arity);
        for value in 0..arity {
            let memo = self.cofactor_memo.entry((var, value)).or_default();
            let g = self.semantics.arena.cofactor(f, var, value, memo);
            branches.push(self.decide(g, level + 1));
        }
        let result = if branches.iter().all(|b| *b == branches[0]) {
            branches[0]
        } else {
            self.decision(var, &branches)
        };
        self.memo.insert(f, result);
        result
    }

    /// Σ over branch groups of (Σ indicators of the group) × branch.
    fn decision(&mut self, var: VarId, branches: &[Sub]) -> Sub {
        let mut groups: Vec<(Sub, Vec<usize>)> = Vec::new();
        for (value, b) in branches.iter().enumerate() {
            if *b == Sub::False {
                continue;
            }
            match groups.iter_mut().find(|(g, _)| g == b) {
                Some((_, values)) => values.push(value),
                None => groups.push((*b, vec![value])),
            }
        }
        let mut terms = Vec::with_capacity(groups.len());
        for (branch, values) in groups {
            let indicators: Vec<NodeId> = values
                .iter()
                .map(|&value| self.node(Node::Indicator { var, value }))
                .collect();
            let weight = if indicators.len() == 1 {
                indicators[0]
            } else {
                self.node(Node::Sum(indicators))
            };
            let term = match branch {
                Sub::True => weight,
                Sub::Node(child) => self.node(Node::Product(vec![weight, child])),
                Sub::False => unreachable!(),
            };
            terms.push(term);
        }
        Sub::Node(if terms.len() == 1 {
            terms[0]
        } else {
            self.node(Node::Sum(terms))
        })
    }
}

fn build(semantics: Arc<BooleanSemantics>, order: Vec<VarId>) -> WmcCircuit {
    let mut b = Builder {
        semantics: (*semantics).clone(),
        order,
        nodes: Vec::new(),
        unique: HashMap::new(),
        memo: HashMap::new(),
        cofactor_memo: HashMap::new(),
    };
    let target = b.semantics.target;
    let root = match b.decide(target, 0) {
        Sub::Node(id) => id,
        Sub::True => b.node(Node::Constant(true)),
        Sub::False => b.node(Node::Constant(false)),
    };
    WmcCircuit {
        semantics,
        order: b.order,
        nodes: b.nodes,
        root,
    }
}

impl WmcCircuit {
    pub fn variables(&self) -> &[WorldVariable] {
        &self.semantics.variables
    }

    pub fn semantics(&self) -> &BooleanSemantics {
        &self.semantics
    }

    /// Nodes in topological order: every child id is smaller than its parent's.
    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn root(&self) -> NodeId {
        self.root
    }

    /// Variable decision order, root first.
    pub fn order(&self) -> &[VarId] {
        &self.order
    }

    pub fn variable_for_channel(&self, token: &str) -> Option<&WorldVariable> {
        self.semantics.variable_for_channel(token)
    }

    /// Same semantics compiled in the decision order implied by `clusters`.
    pub fn recompile(&self, clusters: &BTreeMap<String, usize>) -> WmcCircuit {
        let order = decision_order(&self.semantics.variables, clusters);
        if order == self.order {
            return self.clone();
        }
        build(Arc::clone(&self.semantics), order)
    }

    /// Total scalar operations Ω for one full evaluation of one cell.
    pub fn omega(&self) -> u64 {
        self.nodes.iter().map(Node::omega).sum()
    }

    /// Value of every node for one cell, written into `scratch`.
    pub(crate) fn eval_nodes(&self, weights: &WeightGrid, cell: usize, scratch: &mut Vec<f64>) {
        scratch.clear();
        for node in &self.nodes {
            let v = match node {
                Node::Sum(cs) => {
                    let mut acc = scratch[cs[0]];
                    for &c in &cs[1..] {
                        acc += scratch[c];
                    }
                    acc
                }
                Node::Product(cs) => {
                    let mut acc = scratch[cs[0]];
                    for &c in &cs[1..] {
                        acc *= scratch[c];
                    }
                    acc
                }
                Node::Indicator { var, value } => weights.value(*var, cell, *value),
                Node::Constant(b) => f64::from(u8::from(*b)),
            };
            scratch.push(v);
        }
    }

    /// Checks that `weights` carries one vector per variable of matching arity.
    pub fn check_shape(&self, weights: &WeightGrid) -> Result<(), CompileError> {
        let vars = self.variables();
        if weights.arities().len() != vars.len() {
            return Err(CompileError::ShapeMismatch(format!(
                "circuit has {} variables, weights have {}",
                vars.len(),
                weights.arities().len()
            )));
        }
        for (v, &a) in vars.iter().zip(weights.arities()) {
            if v.arity() != a {
                return Err(CompileError::ShapeMismatch(format!(
                    "{} has arity {}, weights have {a}",
                    v.channel,
                    v.arity()
                )));
            }
        }
        Ok(())
    }

    /// Plain-text listing, one node per line: `id kind children omega`.
    pub fn dump(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "# variables");
        for v in self.variables() {
            match &v.origin {
                VarOrigin::Bernoulli => {
                    let _ = writeln!(out, "v{} {} {} bernoulli", v.id, v.channel, v.atom);
                }
                VarOrigin::Categorical { cuts } => {
                    let cuts: Vec<String> = cuts.iter().map(|c| c.to_string()).collect();
                    let _ = writeln!(
                        out,
                        "v{} {} {} categorical cuts=[{}]",
                        v.id,
                        v.channel,
                        v.atom,
                        cuts.join(",")
                    );
                }
            }
        }
        let order: Vec<String> = self.order.iter().map(|v| format!("v{v}")).collect();
        let _ = writeln!(out, "order {}", order.join(","));
        let _ = writeln!(out, "# nodes: id kind children omega");
        for (id, node) in self.nodes.iter().enumerate() {
            let (kind, detail) = match node {
                Node::Sum(_) => ("sum", String::new()),
                Node::Product(_) => ("product", String::new()),
                Node::Indicator { var, value } => ("indicator", format!(" v{var}={value}")),
                Node::Constant(b) => ("constant", format!(" {}", u8::from(*b))),
            };
            let children: Vec<String> = node.children().iter().map(|c| format!("n{c}")).collect();
            let children = if children.is_empty() {
                "-".to_string()
            } else {
                children.join(",")
            };
            let _ = writeln!(out, "n{id} {kind}{detail} {children} {}", node.omega());
        }
        let _ = writeln!(out, "root n{}", self.root);
        let _ = writeln!(out, "omega {}", self.omega());
        out
    }
}

/// Per-cell probability of the target. Cells are independent, so the grid is
/// split across threads; each cell is computed in a fixed order and the
/// result matches a sequential pass bit for bit.
pub fn evaluate(circuit: &WmcCircuit, weights: &WeightGrid) -> Result<Vec<f64>, CompileError> {
    circuit.check_shape(weights)?;
    let root = circuit.root();
    Ok((0..weights.cells())
        .into_par_iter()
        .map_init(Vec::new, |scratch, cell| {
            circuit.eval_nodes(weights, cell, scratch);
            scratch[root]
        })
        .collect())
}

/// Ω and the per-node ω_i.
pub fn opcount(circuit: &WmcCircuit) -> (u64, Vec<u64>) {
    let per_node: Vec<u64> = circuit.nodes().iter().map(Node::omega).collect();
    (per_node.iter().sum(), per_node)
}
