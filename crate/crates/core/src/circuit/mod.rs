//! Reactive circuits: a WMC circuit cut into memoized formula nodes by the
//! update frequency of its sources, so that an update only recomputes the
//! formula nodes that depend on the changed source, and only in the cells it
//! touched.
//!
//! Every circuit node gets a level, the highest cluster index among the
//! variables below it. Connected groups of same-level nodes become formula
//! nodes. Since faster variables are decided nearer the root, a formula node
//! only reads memos of strictly lower levels.

mod partition;

use std::collections::BTreeMap;
use std::fmt::Write as _;

use rayon::prelude::*;

use crate::compiler::{CompileError, NodeId, VarId, WeightGrid, WmcCircuit};
use crate::signals::{max_abs_diff, ClusterConfig, DEFAULT_EPSILON};

pub use partition::RepartitionStats;

#[derive(Debug, thiserror::Error)]
pub enum CircuitError {
    #[error("unknown channel {0}")]
    UnknownChannel(String),
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("source {0} has never been set")]
    UninitializedSource(String),
    #[error("every rate is zero")]
    AllRatesZero,
    #[error("rate {rate} for {channel} is not a non-negative number")]
    InvalidRate { channel: String, rate: f64 },
    #[error(transparent)]
    Compile(#[from] CompileError),
}

/// One memoized piece of the circuit.
#[derive(Debug, Clone, PartialEq)]
pub struct FormulaNode {
    pub level: usize,
    /// Circuit nodes evaluated by this formula node, in topological order.
    pub nodes: Vec<NodeId>,
    /// Circuit nodes whose per-cell values are memoized.
    pub outputs: Vec<NodeId>,
    /// Σ ω over `nodes`.
    pub omega: u64,
    /// Variables whose weights are read directly.
    pub sources: Vec<VarId>,
    /// Formula nodes whose memos are read.
    pub children: Vec<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Operand {
    Local(usize),
    Weight { var: VarId, value: usize },
    Memo { node: usize, out: usize },
}

#[derive(Debug, Clone, PartialEq)]
enum Step {
    Sum(Vec<Operand>),
    Product(Vec<Operand>),
    Leaf(Operand),
    Constant(f64),
}

#[derive(Debug, Clone, PartialEq)]
struct Kernel {
    steps: Vec<Step>,
    /// Local index of each output.
    outputs: Vec<usize>,
}

/// New weights for one source.
#[derive(Debug, Clone, Copy)]
pub enum WeightUpdate<'a> {
    /// One vector per grid cell, cell-major.
    Full(&'a [f64]),
    /// One vector per listed cell.
    Cells {
        cells: &'a [usize],
        values: &'a [f64],
    },
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct UpdateResult {
    /// True when φ found no meaningful change; nothing was stored.
    pub skipped: bool,
    /// Cells that were recomputed.
    pub cells: Vec<usize>,
    /// Formula nodes that were recomputed.
    pub recomputed: Vec<usize>,
    /// Scalar operations spent.
    pub ops: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GainReport {
    pub rates: BTreeMap<String, f64>,
    pub omega: u64,
    /// Σ_{i ∈ Dep(s)} ω_i per source.
    pub dep_omega: BTreeMap<String, u64>,
    pub rho: f64,
    /// Seconds over which the rates were estimated, when known.
    pub window: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct ReactiveCircuit {
    wmc: WmcCircuit,
    clusters: BTreeMap<String, usize>,
    config: ClusterConfig,
    epsilon: f64,
    formula: Vec<FormulaNode>,
    kernels: Vec<Kernel>,
    /// Formula node and output index holding the root value.
    root: (usize, usize),
    /// Dep per variable, ascending (a topological order).
    dep: Vec<Vec<usize>>,
    weights: WeightGrid,
    initialized: Vec<bool>,
    evaluated: bool,
    memos: Vec<Vec<f64>>,
    valid: Vec<bool>,
    touches: Vec<u64>,
}

/// Cuts `wmc` by the given cluster indices. The circuit is recompiled in the
/// matching decision order first; missing channels count as cluster 0.
pub fn partition(
    wmc: &WmcCircuit,
    clusters: &BTreeMap<String, usize>,
    config: ClusterConfig,
    cells: usize,
) -> ReactiveCircuit {
    let wmc = wmc.recompile(clusters);
    let cluster_of_var: Vec<usize> = wmc
        .variables()
        .iter()
        .map(|v| clusters.get(&v.channel).copied().unwrap_or(0))
        .collect();
    let cut = partition::cut(&wmc, &cluster_of_var);
    let n = cut.formula.len();
    ReactiveCircuit {
        weights: WeightGrid::uniform(wmc.variables(), cells),
        initialized: vec![false; wmc.variables().len()],
        evaluated: false,
        memos: cut
            .formula
            .iter()
            .map(|f| vec![0.0; cells * f.outputs.len()])
            .collect(),
        valid: vec![false; n],
        touches: vec![0; n],
        formula: cut.formula,
        kernels: cut.kernels,
        root: cut.root,
        dep: cut.dep,
        wmc,
        clusters: clusters.clone(),
        config,
        epsilon: DEFAULT_EPSILON,
    }
}

impl ReactiveCircuit {
    pub fn wmc(&self) -> &WmcCircuit {
        &self.wmc
    }

    pub fn clusters(&self) -> &BTreeMap<String, usize> {
        &self.clusters
    }

    pub fn config(&self) -> ClusterConfig {
        self.config
    }

    pub fn cells(&self) -> usize {
        self.weights.cells()
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    /// φ threshold applied by [`ReactiveCircuit::apply_update`]; 0 lets any
    /// change through.
    pub fn set_epsilon(&mut self, epsilon: f64) {
        self.epsilon = epsilon;
    }

    pub fn formula_nodes(&self) -> &[FormulaNode] {
        &self.formula
    }

    pub fn root_formula_node(&self) -> usize {
        self.root.0
    }

    pub fn omega(&self) -> u64 {
        self.formula.iter().map(|f| f.omega).sum()
    }

    pub fn weights(&self) -> &WeightGrid {
        &self.weights
    }

    pub fn is_evaluated(&self) -> bool {
        self.evaluated
    }

    fn var(&self, channel: &str) -> Result<VarId, CircuitError> {
        self.wmc
            .variable_for_channel(channel)
            .map(|v| v.id)
            .ok_or_else(|| CircuitError::UnknownChannel(channel.to_string()))
    }

    pub fn dep(&self, channel: &str) -> Result<&[usize], CircuitError> {
        Ok(&self.dep[self.var(channel)?])
    }

    pub fn dep_omega(&self, channel: &str) -> Result<u64, CircuitError> {
        Ok(self
            .dep(channel)?
            .iter()
            .map(|&f| self.formula[f].omega)
            .sum())
    }

    pub fn memo_valid(&self, formula_node: usize) -> bool {
        self.valid[formula_node]
    }

    /// How often each formula node has been recomputed.
    pub fn touches(&self) -> &[u64] {
        &self.touches
    }

    pub fn reset_touches(&mut self) {
        self.touches.iter_mut().for_each(|t| *t = 0);
    }

    /// Current landscape, read from the root memo.
    pub fn root_grid(&self) -> Vec<f64> {
        let (f, out) = self.root;
        let width = self.formula[f].outputs.len();
        (0..self.cells())
            .map(|c| self.memos[f][c * width + out])
            .collect()
    }

    /// Value of one formula node's outputs in one cell.
    fn run(&self, f: usize, cell: usize, scratch: &mut Vec<f64>, out: &mut [f64]) {
        let read = |op: &Operand, scratch: &[f64]| -> f64 {
            match *op {
                Operand::Local(i) => scratch[i],
                Operand::Weight { var, value } => self.weights.value(var, cell, value),
                Operand::Memo { node, out } => {
                    self.memos[node][cell * self.formula[node].outputs.len() + out]
                }
            }
        };
        let kernel = &self.kernels[f];
        scratch.clear();
        for step in &kernel.steps {
            let v = match step {
                Step::Sum(ops) => {
                    let mut acc = read(&ops[0], scratch);
                    for op in &ops[1..] {
                        acc += read(op, scratch);
                    }
                    acc
                }
                Step::Product(ops) => {
                    let mut acc = read(&ops[0], scratch);
                    for op in &ops[1..] {
                        acc *= read(op, scratch);
                    }
                    acc
                }
                Step::Leaf(op) => read(op, scratch),
                Step::Constant(c) => *c,
            };
            scratch.push(v);
        }
        for (o, &i) in out.iter_mut().zip(&kernel.outputs) {
            *o = scratch[i];
        }
    }

    /// Recomputes formula node `f` in every cell.
    fn recompute_all(&mut self, f: usize) {
        let width = self.formula[f].outputs.len();
        let mut memo = std::mem::take(&mut self.memos[f]);
        memo.par_chunks_mut(width.max(1))
            .enumerate()
            .for_each_init(Vec::new, |scratch, (cell, out)| {
                self.run(f, cell, scratch, out)
            });
        self.memos[f] = memo;
        self.valid[f] = true;
        self.touches[f] += 1;
    }

    /// Recomputes formula node `f` in the listed cells only.
    fn recompute_cells(&mut self, f: usize, cells: &[usize]) {
        let width = self.formula[f].outputs.len();
        let mut fresh = vec![0.0; cells.len() * width];
        if cells.len() < 512 {
            let mut scratch = Vec::new();
            for (i, &cell) in cells.iter().enumerate() {
                self.run(
                    f,
                    cell,
                    &mut scratch,
                    &mut fresh[i * width..(i + 1) * width],
                );
            }
        } else {
            fresh
                .par_chunks_mut(width.max(1))
                .zip(cells.par_iter())
                .for_each_init(Vec::new, |scratch, (out, &cell)| {
                    self.run(f, cell, scratch, out)
                });
        }
        let memo = &mut self.memos[f];
        for (i, &cell) in cells.iter().enumerate() {
            memo[cell * width..(cell + 1) * width]
                .copy_from_slice(&fresh[i * width..(i + 1) * width]);
        }
        self.touches[f] += 1;
    }

    /// Recomputes every formula node and returns the landscape.
    pub fn full_evaluate(&mut self) -> Result<Vec<f64>, CircuitError> {
        if let Some(v) = self.initialized.iter().position(|i| !i) {
            return Err(CircuitError::UninitializedSource(
                self.wmc.variables()[v].channel.clone(),
            ));
        }
        for f in 0..self.formula.len() {
            self.recompute_all(f);
        }
        self.evaluated = true;
        Ok(self.root_grid())
    }

    /// Full-evaluation cost of the whole grid, Ω × cells.
    pub fn full_ops(&self) -> u64 {
        self.omega() * self.cells() as u64
    }

    /// Stores new weights for one source and recomputes Dep(source) in the
    /// cells whose weights changed. Updates whose largest change is at most
    /// ε are dropped whole. Before every source has been set, weights are
    /// only stored; the update that sets the last one triggers a full
    /// evaluation.
    pub fn apply_update(
        &mut self,
        channel: &str,
        update: WeightUpdate<'_>,
    ) -> Result<UpdateResult, CircuitError> {
        let var = self.var(channel)?;
        let arity = self.weights.arities()[var];
        let cells = self.cells();
        let (listed, values): (Vec<usize>, &[f64]) = match update {
            WeightUpdate::Full(values) => {
                if values.len() != cells * arity {
                    return Err(CircuitError::ShapeMismatch(format!(
                        "{channel} expects {} values, got {}",
                        cells * arity,
                        values.len()
                    )));
                }
                ((0..cells).collect(), values)
            }
            WeightUpdate::Cells {
                cells: listed,
                values,
            } => {
                if values.len() != listed.len() * arity {
                    return Err(CircuitError::ShapeMismatch(format!(
                        "{channel} patch of {} cells needs {} values, got {}",
                        listed.len(),
                        listed.len() * arity,
                        values.len()
                    )));
                }
                if let Some(&bad) = listed.iter().find(|&&c| c >= cells) {
                    return Err(CircuitError::ShapeMismatch(format!(
                        "cell {bad} outside grid of {cells} cells"
                    )));
                }
                (listed.to_vec(), values)
            }
        };
        crate::compiler::check_vectors(channel, arity, values)?;

        if !self.initialized[var] {
            self.weights.set_cells(var, &listed, values)?;
            if listed.len() < cells {
                // A partial first update leaves the rest at the uniform
                // default; the source counts as set either way.
                log::debug!(
                    "{channel}: first update covers {} of {cells} cells",
                    listed.len()
                );
            }
            self.initialized[var] = true;
            if !self.evaluated && self.initialized.iter().all(|&i| i) {
                self.full_evaluate()?;
                return Ok(UpdateResult {
                    skipped: false,
                    cells: (0..cells).collect(),
                    recomputed: (0..self.formula.len()).collect(),
                    ops: self.full_ops(),
                });
            }
            if !self.evaluated {
                return Ok(UpdateResult::default());
            }
        }

        let slice = self.weights.slice(var);
        let mut changed = Vec::new();
        let mut largest = 0.0f64;
        for (i, &cell) in listed.iter().enumerate() {
            let d = max_abs_diff(
                &slice[cell * arity..(cell + 1) * arity],
                &values[i * arity..(i + 1) * arity],
            );
            largest = largest.max(d);
            if d > 0.0 {
                changed.push(i);
            }
        }
        if largest <= self.epsilon {
            return Ok(UpdateResult {
                skipped: true,
                ..UpdateResult::default()
            });
        }
        let mut cells_changed: Vec<usize> = changed.iter().map(|&i| listed[i]).collect();
        let patch: Vec<f64> = changed
            .iter()
            .flat_map(|&i| values[i * arity..(i + 1) * arity].iter().copied())
            .collect();
        self.weights.set_cells(var, &cells_changed, &patch)?;
        cells_changed.sort_unstable();
        cells_changed.dedup();
        if !self.evaluated {
            return Ok(UpdateResult {
                cells: cells_changed,
                ..UpdateResult::default()
            });
        }
        let dep = self.dep[var].clone();
        let mut ops = 0;
        for &f in &dep {
            self.recompute_cells(f, &cells_changed);
            ops += self.formula[f].omega * cells_changed.len() as u64;
        }
        Ok(UpdateResult {
            skipped: false,
            cells: cells_changed,
            recomputed: dep,
            ops,
        })
    }

    /// Gain for the given per-channel rates; see [`rho_gain`].
    pub fn gain(&self, rates: &BTreeMap<String, f64>) -> Result<GainReport, CircuitError> {
        let omega = self.omega();
        let mut dep_omega = BTreeMap::new();
        for channel in rates.keys() {
            dep_omega.insert(channel.clone(), self.dep_omega(channel)?);
        }
        let rho = rho_gain(
            omega,
            rates.iter().map(|(c, &r)| (c.as_str(), r, dep_omega[c])),
        )?;
        Ok(GainReport {
            rates: rates.clone(),
            omega,
            dep_omega,
            rho,
            window: None,
        })
    }

    /// Plain-text listing of the formula nodes and every source's Dep.
    pub fn dump_partition(&self) -> String {
        let mut out = String::new();
        let vars = self.wmc.variables();
        let _ = writeln!(
            out,
            "# formula nodes: id level omega nodes outputs sources children"
        );
        for (i, f) in self.formula.iter().enumerate() {
            let list = |xs: &[usize], prefix: &str| -> String {
                if xs.is_empty() {
                    "-".to_string()
                } else {
                    xs.iter()
                        .map(|x| format!("{prefix}{x}"))
                        .collect::<Vec<_>>()
                        .join(",")
                }
            };
            let sources: Vec<String> = f.sources.iter().map(|&v| vars[v].channel.clone()).collect();
            let _ = writeln!(
                out,
                "f{i} {} {} {} {} {} {}",
                f.level,
                f.omega,
                list(&f.nodes, "n"),
                list(&f.outputs, "n"),
                if sources.is_empty() {
                    "-".to_string()
                } else {
                    sources.join(",")
                },
                list(&f.children, "f"),
            );
        }
        let _ = writeln!(out, "root f{}", self.root.0);
        let _ = writeln!(out, "# dep: channel cluster dep_omega formula_nodes");
        let mut by_channel: Vec<&crate::compiler::WorldVariable> = vars.iter().collect();
        by_channel.sort_by(|a, b| a.channel.cmp(&b.channel));
        for v in by_channel {
            let dep: Vec<String> = self.dep[v.id].iter().map(|f| format!("f{f}")).collect();
            let _ = writeln!(
                out,
                "{} {} {} {}",
                v.channel,
                self.clusters.get(&v.channel).copied().unwrap_or(0),
                self.dep[v.id]
                    .iter()
                    .map(|&f| self.formula[f].omega)
                    .sum::<u64>(),
                if dep.is_empty() {
                    "-".to_string()
                } else {
                    dep.join(",")
                }
            );
        }
        let _ = writeln!(out, "omega {}", self.omega());
        out
    }
}

/// ρ_GAIN = Σ λ·Ω / Σ λ·Σ_{Dep} ω over `(channel, λ, Σ_{Dep} ω)`. Sources
/// with an empty Dep (their variable folded out of the circuit) cost
/// nothing, so if only such sources are active the ratio is infinite.
pub fn rho_gain<'a>(
    omega: u64,
    sources: impl IntoIterator<Item = (&'a str, f64, u64)>,
) -> Result<f64, CircuitError> {
    let mut num = 0.0;
    let mut den = 0.0;
    let mut any = false;
    for (channel, rate, dep_omega) in sources {
        if !(rate >= 0.0) || !rate.is_finite() {
            return Err(CircuitError::InvalidRate {
                channel: channel.to_string(),
                rate,
            });
        }
        any |= rate > 0.0;
        num += rate * omega as f64;
        den += rate * dep_omega as f64;
    }
    if !any {
        return Err(CircuitError::AllRatesZero);
    }
    Ok(if den > 0.0 {
        num / den
    } else if num > 0.0 {
        f64::INFINITY
    } else {
        1.0
    })
}

#[cfg(test)]
mod tests;
