//! End-to-end wiring: scenario files, static field precomputation, the
//! streaming update loop, snapshots and benchmarks.

mod engine;
mod run;

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::circuit::CircuitError;
use crate::compiler::{compile_wmc, CompileError, VarOrigin, WmcCircuit};
use crate::lang::{self, LangError, Program, ValidationReport};
use crate::signals::{ClusterConfig, SignalError, DEFAULT_EPSILON};
use crate::sim::{load_tracks, ReplayConfig, SimError, Tracks, UasSimConfig};
use crate::starmap::{
    distance_field, occupancy_field, DynamicDistance, FeatureSet, FieldOptions, GridSpec,
    RelationField, StarmapError,
};

pub use engine::{Applied, Engine, Mode};
pub use run::{
    bench, collect_updates, record_steps, run, simulate, BenchReport, ClockMode, Frontend,
    ModeStats, RunOptions, RunSummary, Step,
};

#[derive(Debug, thiserror::Error)]
pub enum PipelineError {
    #[error("scenario: {0}")]
    Scenario(String),
    #[error(transparent)]
    Lang(#[from] LangError),
    #[error("program is invalid:\n{0}")]
    Invalid(ValidationReport),
    #[error(transparent)]
    Compile(#[from] CompileError),
    #[error(transparent)]
    Starmap(#[from] StarmapError),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Circuit(#[from] CircuitError),
    #[error(transparent)]
    Signal(#[from] SignalError),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
}

impl PipelineError {
    /// 1 for anything wrong with the inputs, 2 for failures while running.
    pub fn exit_code(&self) -> i32 {
        match self {
            PipelineError::Scenario(_)
            | PipelineError::Lang(_)
            | PipelineError::Invalid(_)
            | PipelineError::Compile(_)
            | PipelineError::Starmap(
                StarmapError::InvalidGrid(_) | StarmapError::InvalidFeature(_),
            )
            | PipelineError::Starmap(StarmapError::GeoJson(_))
            | PipelineError::Sim(SimError::Config(_)) => 1,
            _ => 2,
        }
    }
}

pub(crate) fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> PipelineError + '_ {
    move |source| PipelineError::Io {
        path: path.to_path_buf(),
        source,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SnapshotFormat {
    #[default]
    Csv,
    Pgm,
    Both,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClusterSettings {
    /// Partition width h, Hz.
    #[serde(default = "default_width")]
    pub partition_width: f64,
    #[serde(default = "default_max_clusters")]
    pub max_clusters: usize,
    /// Minimum time between two repartitions, seconds.
    #[serde(default = "default_dwell")]
    pub dwell_s: f64,
}

impl Default for ClusterSettings {
    fn default() -> Self {
        ClusterSettings {
            partition_width: default_width(),
            max_clusters: default_max_clusters(),
            dwell_s: default_dwell(),
        }
    }
}

impl ClusterSettings {
    pub fn config(&self) -> ClusterConfig {
        ClusterConfig {
            h: self.partition_width,
            max_clusters: self.max_clusters,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FieldSettings {
    /// Monte Carlo samples per static relation.
    #[serde(default = "default_samples")]
    pub samples: usize,
    /// Map translation noise per feature class, meters.
    #[serde(default)]
    pub sigma_map: BTreeMap<String, f64>,
    /// Noise for classes missing from `sigma_map`.
    #[serde(default = "default_sigma_map")]
    pub default_sigma_map: f64,
    /// Support radius for dynamic distances; three times the largest cut
    /// when absent.
    #[serde(default)]
    pub support_radius: Option<f64>,
}

impl Default for FieldSettings {
    fn default() -> Self {
        FieldSettings {
            samples: default_samples(),
            sigma_map: BTreeMap::new(),
            default_sigma_map: default_sigma_map(),
            support_radius: None,
        }
    }
}

fn default_width() -> f64 {
    0.5
}
fn default_max_clusters() -> usize {
    16
}
fn default_dwell() -> f64 {
    5.0
}
fn default_samples() -> usize {
    32
}
fn default_sigma_map() -> f64 {
    5.0
}
fn default_duration() -> f64 {
    60.0
}
fn default_cadence() -> f64 {
    1.0
}
fn default_epsilon() -> f64 {
    DEFAULT_EPSILON
}
fn default_out() -> PathBuf {
    PathBuf::from("out")
}

/// Everything a run needs. Relative paths are resolved against the
/// directory of the scenario file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub program: PathBuf,
    pub features: Option<PathBuf>,
    #[serde(default = "default_out")]
    pub out: PathBuf,
    #[serde(default = "default_duration")]
    pub duration_s: f64,
    #[serde(default = "default_cadence")]
    pub snapshot_every_s: f64,
    #[serde(default)]
    pub snapshot_format: SnapshotFormat,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_epsilon")]
    pub epsilon: f64,
    pub grid: GridSpec,
    #[serde(default)]
    pub clusters: ClusterSettings,
    #[serde(default)]
    pub fields: FieldSettings,
    pub uas: Option<UasSimConfig>,
    pub ais: Option<ReplayConfig>,
}

impl Scenario {
    pub fn from_toml(text: &str, base: &Path) -> Result<Self, PipelineError> {
        let mut s: Scenario =
            toml::from_str(text).map_err(|e| PipelineError::Scenario(e.to_string()))?;
        let resolve = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        resolve(&mut s.program);
        if let Some(f) = &mut s.features {
            resolve(f);
        }
        resolve(&mut s.out);
        if let Some(ais) = &mut s.ais {
            resolve(&mut ais.path);
        }
        s.validate()?;
        Ok(s)
    }

    pub fn load(path: &Path) -> Result<Self, PipelineError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| PipelineError::Scenario(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text, path.parent().unwrap_or(Path::new(".")))
    }

    pub fn validate(&self) -> Result<(), PipelineError> {
        let bad = |m: &str| Err(PipelineError::Scenario(m.to_string()));
        if !(self.duration_s >= 0.0) {
            return bad("duration_s must be non-negative");
        }
        if !(self.snapshot_every_s > 0.0) {
            return bad("snapshot_every_s must be positive");
        }
        if !(self.epsilon >= 0.0) {
            return bad("epsilon must be non-negative");
        }
        if !(self.clusters.partition_width > 0.0) {
            return bad("partition_width must be positive");
        }
        if self.fields.samples < 2 {
            return bad("fields.samples must be at least 2");
        }
        self.grid.validate()?;
        for p in [
            Some(&self.program),
            self.features.as_ref(),
            self.ais.as_ref().map(|a| &a.path),
        ]
        .into_iter()
        .flatten()
        {
            if !p.is_file() {
                return Err(PipelineError::Scenario(format!(
                    "{} does not exist",
                    p.display()
                )));
            }
        }
        if let (Some(u), Some(a)) = (&self.uas, &self.ais) {
            if u.channel == a.channel {
                return bad("uas and ais feed the same channel");
            }
        }
        Ok(())
    }

    /// Overrides the seeds used for fields and for the fleet.
    pub fn set_seed(&mut self, seed: u64) {
        self.seed = seed;
        if let Some(u) = &mut self.uas {
            u.seed = seed;
        }
    }
}

/// Where a channel's weights come from.
#[derive(Debug, Clone, PartialEq)]
pub enum Binding {
    Occupancy {
        class: String,
    },
    Distance {
        class: String,
    },
    /// Distance to entities reported on the channel.
    Dynamic,
}

/// Reads and validates a program file.
pub fn load_program(path: &Path) -> Result<Program, PipelineError> {
    let text = std::fs::read_to_string(path).map_err(io_err(path))?;
    let program = lang::parse_program(&text)?;
    let report = lang::validate(&program);
    if !report.is_ok() {
        return Err(PipelineError::Invalid(report));
    }
    Ok(program)
}

/// `over(X)` Probability channels read occupancy of class X, `distance(X)`
/// Density channels the distance to class X. Channels fed by the fleet or
/// the replay, and distances to classes without features, are dynamic.
pub fn bind_channels(
    wmc: &WmcCircuit,
    scenario: &Scenario,
    features: &FeatureSet,
) -> Result<BTreeMap<String, Binding>, PipelineError> {
    let producers: Vec<&str> = scenario
        .uas
        .iter()
        .map(|u| u.channel.as_str())
        .chain(scenario.ais.iter().map(|a| a.channel.as_str()))
        .collect();
    let mut out = BTreeMap::new();
    for v in wmc.variables() {
        let density = matches!(v.origin, VarOrigin::Categorical { .. });
        let class = v.atom.arg.clone().unwrap_or_default();
        let binding = if producers.contains(&v.channel.as_str()) {
            if !density {
                return Err(PipelineError::Scenario(format!(
                    "{} is fed with entity reports but is not a Density channel",
                    v.channel
                )));
            }
            Binding::Dynamic
        } else {
            match (v.atom.name.as_str(), density) {
                ("over", false) if !class.is_empty() => Binding::Occupancy { class },
                ("distance", true) if !class.is_empty() => {
                    if features.class(&class).is_empty() {
                        log::warn!(
                            "{}: no {class} features and no producer; treated as dynamic",
                            v.channel
                        );
                        Binding::Dynamic
                    } else {
                        Binding::Distance { class }
                    }
                }
                _ => {
                    return Err(PipelineError::Scenario(format!(
                        "cannot tell where {} ({}) gets its data",
                        v.channel, v.atom
                    )))
                }
            }
        };
        out.insert(v.channel.clone(), binding);
    }
    Ok(out)
}

/// A scenario with its program compiled and static fields computed.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub scenario: Scenario,
    pub program: Program,
    pub wmc: WmcCircuit,
    pub features: FeatureSet,
    pub bindings: BTreeMap<String, Binding>,
    pub static_fields: BTreeMap<String, RelationField>,
    /// Full weight slices for every channel at time zero.
    pub initial: BTreeMap<String, Vec<f64>>,
    /// Dynamic distance state per channel, already set for no entities.
    pub dynamic: BTreeMap<String, DynamicDistance>,
    pub tracks: Option<Tracks>,
}

impl Prepared {
    pub fn dynamic_channels(&self) -> impl Iterator<Item = &str> {
        self.dynamic.keys().map(String::as_str)
    }
}

fn field_seed(seed: u64, var: usize) -> u64 {
    seed ^ (var as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15)
}

pub fn prepare(scenario: &Scenario) -> Result<Prepared, PipelineError> {
    let program = load_program(&scenario.program)?;
    let wmc = compile_wmc(&program)?;
    let grid = scenario.grid;
    let features = match &scenario.features {
        Some(path) => FeatureSet::load(path, &grid)?,
        None => FeatureSet::new(),
    };
    let bindings = bind_channels(&wmc, scenario, &features)?;
    let mut static_fields = BTreeMap::new();
    let mut initial = BTreeMap::new();
    let mut dynamic = BTreeMap::new();
    for v in wmc.variables() {
        let opts = |class: &str| FieldOptions {
            samples: scenario.fields.samples,
            sigma_map: scenario
                .fields
                .sigma_map
                .get(class)
                .copied()
                .unwrap_or(scenario.fields.default_sigma_map),
            seed: field_seed(scenario.seed, v.id),
        };
        match &bindings[&v.channel] {
            Binding::Occupancy { class } => {
                let f = occupancy_field(&grid, &features, class, &opts(class))?;
                initial.insert(v.channel.clone(), f.weights(&[]));
                static_fields.insert(v.channel.clone(), f);
            }
            Binding::Distance { class } => {
                let f = distance_field(&grid, &features, class, &opts(class))?;
                initial.insert(v.channel.clone(), f.weights(v.cuts()));
                static_fields.insert(v.channel.clone(), f);
            }
            Binding::Dynamic => {
                let mut d = DynamicDistance::new(
                    grid,
                    v.cuts().to_vec(),
                    scenario.fields.support_radius,
                    scenario.epsilon,
                );
                let patch = d.update(&[]);
                initial.insert(v.channel.clone(), patch.weights);
                dynamic.insert(v.channel.clone(), d);
            }
        }
    }
    let tracks = match &scenario.ais {
        Some(ais) => {
            let file = std::fs::File::open(&ais.path).map_err(io_err(&ais.path))?;
            let t = load_tracks(std::io::BufReader::new(file), &grid)?;
            if t.malformed > 0 {
                log::warn!(
                    "{}: {} malformed rows skipped",
                    ais.path.display(),
                    t.malformed
                );
            }
            Some(t)
        }
        None => None,
    };
    Ok(Prepared {
        scenario: scenario.clone(),
        program,
        wmc,
        features,
        bindings,
        static_fields,
        initial,
        dynamic,
        tracks,
    })
}
