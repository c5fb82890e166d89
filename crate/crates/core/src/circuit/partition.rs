use std::collections::{BTreeMap, BTreeSet, HashMap};

use super::{partition, FormulaNode, Kernel, Operand, ReactiveCircuit, Step};
use crate::compiler::{Node, NodeId, VarId, WmcCircuit};

pub(super) struct Cut {
    pub formula: Vec<FormulaNode>,
    pub kernels: Vec<Kernel>,
    pub root: (usize, usize),
    pub dep: Vec<Vec<usize>>,
}

fn find(parent: &mut [usize], mut x: usize) -> usize {
    while parent[x] != x {
        parent[x] = parent[parent[x]];
        x = parent[x];
    }
    x
}

pub(super) fn cut(wmc: &WmcCircuit, cluster_of_var: &[usize]) -> Cut {
    let nodes = wmc.nodes();
    let root = wmc.root();
    let mut level = vec![0usize; nodes.len()];
    for (id, node) in nodes.iter().enumerate() {
        level[id] = match node {
            Node::Indicator { var, .. } => cluster_of_var[*var],
            Node::Constant(_) => 0,
            Node::Sum(cs) | Node::Product(cs) => cs.iter().map(|&c| level[c]).max().unwrap_or(0),
        };
    }
    // Indicators are read straight from the weights unless one is the root.
    let inner = |id: NodeId| id == root || !matches!(nodes[id], Node::Indicator { .. });

    let mut uf: Vec<usize> = (0..nodes.len()).collect();
    for (id, node) in nodes.iter().enumerate() {
        for &c in node.children() {
            if inner(c) && level[c] == level[id] {
                let (a, b) = (find(&mut uf, id), find(&mut uf, c));
                uf[a] = b;
            }
        }
    }
    let mut groups: BTreeMap<usize, Vec<NodeId>> = BTreeMap::new();
    for id in (0..nodes.len()).filter(|&id| inner(id)) {
        let r = find(&mut uf, id);
        groups.entry(r).or_default().push(id);
    }
    let mut groups: Vec<Vec<NodeId>> = groups.into_values().collect();
    // Children live on strictly lower levels, so this order is topological.
    groups.sort_by_key(|g| (level[g[0]], g[0]));

    let mut comp_of = vec![usize::MAX; nodes.len()];
    for (i, g) in groups.iter().enumerate() {
        for &id in g {
            comp_of[id] = i;
        }
    }
    let mut is_output = vec![false; nodes.len()];
    is_output[root] = true;
    for (id, node) in nodes.iter().enumerate() {
        if !inner(id) {
            continue;
        }
        for &c in node.children() {
            if inner(c) && comp_of[c] != comp_of[id] {
                is_output[c] = true;
            }
        }
    }
    let mut out_index = vec![usize::MAX; nodes.len()];
    let mut formula = Vec::with_capacity(groups.len());
    let mut kernels = Vec::with_capacity(groups.len());
    for (i, g) in groups.iter().enumerate() {
        let outputs: Vec<NodeId> = g.iter().copied().filter(|&id| is_output[id]).collect();
        for (k, &id) in outputs.iter().enumerate() {
            out_index[id] = k;
        }
        let local: HashMap<NodeId, usize> = g.iter().enumerate().map(|(k, &id)| (id, k)).collect();
        let mut sources = BTreeSet::new();
        let mut children = BTreeSet::new();
        let mut operand = |c: NodeId| -> Operand {
            match &nodes[c] {
                Node::Indicator { var, value } if !inner(c) => {
                    sources.insert(*var);
                    Operand::Weight {
                        var: *var,
                        value: *value,
                    }
                }
                _ if comp_of[c] == i => Operand::Local(local[&c]),
                _ => {
                    children.insert(comp_of[c]);
                    Operand::Memo {
                        node: comp_of[c],
                        out: out_index[c],
                    }
                }
            }
        };
        let mut steps = Vec::with_capacity(g.len());
        for &id in g {
            steps.push(match &nodes[id] {
                Node::Sum(cs) => Step::Sum(cs.iter().map(|&c| operand(c)).collect()),
                Node::Product(cs) => Step::Product(cs.iter().map(|&c| operand(c)).collect()),
                Node::Indicator { var, value } => Step::Leaf(Operand::Weight {
                    var: *var,
                    value: *value,
                }),
                Node::Constant(b) => Step::Constant(f64::from(u8::from(*b))),
            });
        }
        for &id in g {
            if let Node::Indicator { var, .. } = nodes[id] {
                sources.insert(var);
            }
        }
        kernels.push(Kernel {
            steps,
            outputs: outputs.iter().map(|id| local[id]).collect(),
        });
        formula.push(FormulaNode {
            level: level[g[0]],
            nodes: g.clone(),
            outputs,
            omega: g.iter().map(|&id| nodes[id].omega()).sum(),
            sources: sources.into_iter().collect(),
            children: children.into_iter().collect(),
        });
    }

    let mut parents: Vec<Vec<usize>> = vec![Vec::new(); formula.len()];
    for (i, f) in formula.iter().enumerate() {
        for &c in &f.children {
            parents[c].push(i);
        }
    }
    let dep = (0..wmc.variables().len())
        .map(|var: VarId| {
            let mut set = BTreeSet::new();
            let mut stack: Vec<usize> = (0..formula.len())
                .filter(|&i| formula[i].sources.contains(&var))
                .collect();
            while let Some(f) = stack.pop() {
                if set.insert(f) {
                    stack.extend(&parents[f]);
                }
            }
            set.into_iter().collect()
        })
        .collect();

    Cut {
        formula,
        kernels,
        root: (comp_of[root], out_index[root]),
        dep,
    }
}

/// Interns circuit nodes by structure, so equal sub-circuits of two
/// different compilations get the same id.
#[derive(Default)]
struct Canon {
    ids: HashMap<Node, usize>,
}

impl Canon {
    fn ids(&mut self, wmc: &WmcCircuit) -> Vec<usize> {
        let mut out: Vec<usize> = Vec::with_capacity(wmc.nodes().len());
        for node in wmc.nodes() {
            let key = match node {
                Node::Sum(cs) => Node::Sum(cs.iter().map(|&c| out[c]).collect()),
                Node::Product(cs) => Node::Product(cs.iter().map(|&c| out[c]).collect()),
                leaf => leaf.clone(),
            };
            let next = self.ids.len();
            out.push(*self.ids.entry(key).or_insert(next));
        }
        out
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct RepartitionStats {
    /// Formula nodes whose memos were carried over.
    pub carried: usize,
    /// Formula nodes that had to be evaluated from scratch.
    pub recomputed: usize,
    /// Scalar operations spent on them.
    pub ops: u64,
}

impl ReactiveCircuit {
    /// The same circuit cut for new cluster indices. Weights carry over, and
    /// so does every memo whose outputs are structurally unchanged; the rest
    /// is evaluated once, so the result is ready for updates.
    pub fn repartition(
        &self,
        clusters: &BTreeMap<String, usize>,
    ) -> (ReactiveCircuit, RepartitionStats) {
        let mut next = partition(&self.wmc, clusters, self.config, self.cells());
        next.epsilon = self.epsilon;
        next.weights = self.weights.clone();
        next.initialized = self.initialized.clone();
        let mut stats = RepartitionStats::default();
        if !self.evaluated {
            return (next, stats);
        }
        let mut canon = Canon::default();
        let old_ids = canon.ids(&self.wmc);
        let new_ids = canon.ids(&next.wmc);
        let mut held: HashMap<usize, (usize, usize)> = HashMap::new();
        for (i, f) in self.formula.iter().enumerate() {
            if self.valid[i] {
                for (k, &id) in f.outputs.iter().enumerate() {
                    held.entry(old_ids[id]).or_insert((i, k));
                }
            }
        }
        let cells = self.cells();
        for i in 0..next.formula.len() {
            let sources: Option<Vec<(usize, usize)>> = next.formula[i]
                .outputs
                .iter()
                .map(|&id| held.get(&new_ids[id]).copied())
                .collect();
            match sources {
                Some(sources) => {
                    let width = sources.len();
                    let memo = &mut next.memos[i];
                    for (k, &(old, old_k)) in sources.iter().enumerate() {
                        let old_width = self.formula[old].outputs.len();
                        for c in 0..cells {
                            memo[c * width + k] = self.memos[old][c * old_width + old_k];
                        }
                    }
                    next.valid[i] = true;
                    stats.carried += 1;
                }
                None => {
                    next.recompute_all(i);
                    stats.recomputed += 1;
                    stats.ops += next.formula[i].omega * cells as u64;
                }
            }
        }
        next.evaluated = true;
        next.reset_touches();
        (next, stats)
    }
}
