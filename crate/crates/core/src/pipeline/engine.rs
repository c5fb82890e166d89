use std::collections::BTreeMap;

use crate::circuit::{partition, ReactiveCircuit, WeightUpdate};
use crate::compiler::{check_vectors, evaluate, WeightGrid, WmcCircuit};
use crate::signals::ClusterConfig;

use super::PipelineError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Reactive,
    /// Re-evaluates the whole circuit on every cell after each accepted
    /// update; the baseline.
    Full,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Applied {
    pub skipped: bool,
    pub cells: usize,
    pub ops: u64,
}

#[derive(Debug, Clone)]
struct FullEngine {
    wmc: WmcCircuit,
    weights: WeightGrid,
    epsilon: f64,
    root: Vec<f64>,
}

impl FullEngine {
    fn apply(
        &mut self,
        channel: &str,
        cells: &[usize],
        values: &[f64],
    ) -> Result<Applied, PipelineError> {
        let var = self
            .wmc
            .variable_for_channel(channel)
            .ok_or_else(|| PipelineError::Scenario(format!("unknown channel {channel}")))?
            .id;
        let arity = self.weights.arities()[var];
        check_vectors(channel, arity, values)?;
        let slice = self.weights.slice(var);
        let mut changed = Vec::new();
        let mut largest = 0.0f64;
        for (i, &cell) in cells.iter().enumerate() {
            let d = slice[cell * arity..(cell + 1) * arity]
                .iter()
                .zip(&values[i * arity..(i + 1) * arity])
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max);
            largest = largest.max(d);
            if d > 0.0 {
                changed.push(i);
            }
        }
        if largest <= self.epsilon {
            return Ok(Applied {
                skipped: true,
                ..Applied::default()
            });
        }
        let listed: Vec<usize> = changed.iter().map(|&i| cells[i]).collect();
        let patch: Vec<f64> = changed
            .iter()
            .flat_map(|&i| values[i * arity..(i + 1) * arity].iter().copied())
            .collect();
        self.weights.set_cells(var, &listed, &patch)?;
        self.root = evaluate(&self.wmc, &self.weights)?;
        Ok(Applied {
            skipped: false,
            cells: self.weights.cells(),
            ops: self.wmc.omega() * self.weights.cells() as u64,
        })
    }
}

/// The landscape under streaming updates, maintained either reactively or
/// by full re-evaluation. Both accept and drop the same updates.
#[derive(Debug, Clone)]
pub struct Engine {
    inner: Inner,
    /// Ops spent on the first evaluation.
    initial_ops: u64,
}

#[derive(Debug, Clone)]
enum Inner {
    Reactive(Box<ReactiveCircuit>),
    Full(Box<FullEngine>),
}

impl Engine {
    /// Loads the initial weights and evaluates once.
    pub fn new(
        mode: Mode,
        wmc: &WmcCircuit,
        initial: &BTreeMap<String, Vec<f64>>,
        clusters: &BTreeMap<String, usize>,
        config: ClusterConfig,
        cells: usize,
        epsilon: f64,
    ) -> Result<Self, PipelineError> {
        match mode {
            Mode::Reactive => {
                let mut rc = partition(wmc, clusters, config, cells);
                rc.set_epsilon(epsilon);
                let mut initial_ops = 0;
                for v in wmc.variables() {
                    let w = initial.get(&v.channel).ok_or_else(|| {
                        PipelineError::Scenario(format!("no initial weights for {}", v.channel))
                    })?;
                    initial_ops += rc.apply_update(&v.channel, WeightUpdate::Full(w))?.ops;
                }
                if !rc.is_evaluated() {
                    // A program without sources.
                    rc.full_evaluate()?;
                    initial_ops = rc.full_ops();
                }
                Ok(Engine {
                    inner: Inner::Reactive(Box::new(rc)),
                    initial_ops,
                })
            }
            Mode::Full => {
                let mut weights = WeightGrid::uniform(wmc.variables(), cells);
                for v in wmc.variables() {
                    let w = initial.get(&v.channel).ok_or_else(|| {
                        PipelineError::Scenario(format!("no initial weights for {}", v.channel))
                    })?;
                    weights.set(v.id, w.clone())?;
                }
                let root = evaluate(wmc, &weights)?;
                Ok(Engine {
                    initial_ops: wmc.omega() * cells as u64,
                    inner: Inner::Full(Box::new(FullEngine {
                        wmc: wmc.clone(),
                        weights,
                        epsilon,
                        root,
                    })),
                })
            }
        }
    }

    pub fn mode(&self) -> Mode {
        match self.inner {
            Inner::Reactive(_) => Mode::Reactive,
            Inner::Full(_) => Mode::Full,
        }
    }

    pub fn initial_ops(&self) -> u64 {
        self.initial_ops
    }

    /// New weights for the listed cells of one channel, one vector per cell.
    pub fn apply(
        &mut self,
        channel: &str,
        cells: &[usize],
        values: &[f64],
    ) -> Result<Applied, PipelineError> {
        match &mut self.inner {
            Inner::Reactive(rc) => {
                let r = rc.apply_update(channel, WeightUpdate::Cells { cells, values })?;
                Ok(Applied {
                    skipped: r.skipped,
                    cells: r.cells.len(),
                    ops: r.ops,
                })
            }
            Inner::Full(f) => f.apply(channel, cells, values),
        }
    }

    /// Re-cuts the reactive circuit; returns the ops spent. The full engine
    /// has nothing to do.
    pub fn recluster(&mut self, clusters: &BTreeMap<String, usize>) -> u64 {
        match &mut self.inner {
            Inner::Reactive(rc) => {
                let (next, stats) = rc.repartition(clusters);
                **rc = next;
                stats.ops
            }
            Inner::Full(_) => 0,
        }
    }

    pub fn root(&self) -> Vec<f64> {
        match &self.inner {
            Inner::Reactive(rc) => rc.root_grid(),
            Inner::Full(f) => f.root.clone(),
        }
    }

    pub fn reactive(&self) -> Option<&ReactiveCircuit> {
        match &self.inner {
            Inner::Reactive(rc) => Some(rc),
            Inner::Full(_) => None,
        }
    }
}
