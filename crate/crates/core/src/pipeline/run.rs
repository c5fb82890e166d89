use std::collections::{BTreeMap, HashMap};
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use serde::Serialize;

use super::engine::{Engine, Mode};
use super::{io_err, PipelineError, Prepared, SnapshotFormat};
use crate::signals::{
    meaningful, write_record, ClusterConfig, FocEstimator, Payload, RateParams, SignalUpdate,
    UpdateQueue,
};
use crate::sim::{Clock, Replay, UasFleet, VirtualClock, WallClock};
use crate::starmap::{write_csv, write_pgm, DynamicDistance, Entity, GridSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ClockMode {
    /// Producers run as fast as possible and are merged by timestamp.
    Virtual,
    /// Producers sleep until each timestamp; updates are consumed as they
    /// arrive.
    Wall,
}

/// One thing the engine has to do.
#[derive(Debug, Clone, PartialEq)]
pub enum Step {
    Patch {
        t: f64,
        channel: String,
        cells: Vec<usize>,
        weights: Vec<f64>,
    },
    Recluster {
        t: f64,
        clusters: BTreeMap<String, usize>,
    },
}

#[derive(Debug, Clone)]
struct DynChannel {
    field: DynamicDistance,
    entities: BTreeMap<String, Entity>,
    accepted: HashMap<String, Payload>,
}

/// Turns raw updates into weight patches and cluster changes: φ per entity,
/// FoC tracking, dynamic distance fields and dwell-limited reclustering.
#[derive(Debug, Clone)]
pub struct Frontend {
    channels: Vec<String>,
    dynamic: BTreeMap<String, DynChannel>,
    last_field: HashMap<String, Payload>,
    foc: FocEstimator,
    config: ClusterConfig,
    dwell: f64,
    epsilon: f64,
    min_displacement: f64,
    cells: usize,
    clusters: BTreeMap<String, usize>,
    last_change: f64,
    received: u64,
    meaningful: u64,
    ignored: u64,
}

impl Frontend {
    pub fn new(prepared: &Prepared) -> Self {
        let s = &prepared.scenario;
        let config = s.clusters.config();
        let (dx, dy) = s.grid.resolution();
        let channels: Vec<String> = prepared
            .wmc
            .variables()
            .iter()
            .map(|v| v.channel.clone())
            .collect();
        Frontend {
            clusters: channels.iter().map(|c| (c.clone(), 0)).collect(),
            channels,
            dynamic: prepared
                .dynamic
                .iter()
                .map(|(c, field)| {
                    (
                        c.clone(),
                        DynChannel {
                            field: field.clone(),
                            entities: BTreeMap::new(),
                            accepted: HashMap::new(),
                        },
                    )
                })
                .collect(),
            last_field: HashMap::new(),
            foc: FocEstimator::new(RateParams {
                h: config.h,
                ..RateParams::default()
            }),
            config,
            dwell: s.clusters.dwell_s,
            epsilon: s.epsilon,
            min_displacement: 0.5 * dx.min(dy),
            cells: s.grid.cells(),
            last_change: 0.0,
            received: 0,
            meaningful: 0,
            ignored: 0,
        }
    }

    pub fn clusters(&self) -> &BTreeMap<String, usize> {
        &self.clusters
    }

    /// λ̂ for every program channel.
    pub fn rates(&self) -> BTreeMap<String, f64> {
        self.channels
            .iter()
            .map(|c| (c.clone(), self.foc.rate(c)))
            .collect()
    }

    pub fn received(&self) -> u64 {
        self.received
    }

    pub fn meaningful(&self) -> u64 {
        self.meaningful
    }

    /// Updates on channels the program does not use.
    pub fn ignored(&self) -> u64 {
        self.ignored
    }

    pub fn ingest(&mut self, u: &SignalUpdate) -> Result<Vec<Step>, PipelineError> {
        if !self.channels.contains(&u.channel) {
            if self.ignored == 0 {
                log::warn!(
                    "ignoring updates on {}, which the program does not read",
                    u.channel
                );
            }
            self.ignored += 1;
            return Ok(Vec::new());
        }
        self.received += 1;
        let mut steps = Vec::new();
        let patch = match &u.payload {
            Payload::EntityReport {
                entity,
                easting,
                northing,
                std,
            } => {
                let ch = self.dynamic.get_mut(&u.channel).ok_or_else(|| {
                    PipelineError::Scenario(format!(
                        "entity report on {}, which is not dynamic",
                        u.channel
                    ))
                })?;
                let m = meaningful(
                    ch.accepted.get(entity),
                    &u.payload,
                    self.epsilon,
                    self.min_displacement,
                )?;
                if m {
                    ch.accepted.insert(entity.clone(), u.payload.clone());
                    ch.entities.insert(
                        entity.clone(),
                        Entity {
                            id: entity.clone(),
                            position: [*easting, *northing],
                            std: std.unwrap_or(0.0),
                        },
                    );
                }
                m.then_some(None)
            }
            Payload::EntityExpired { entity } => {
                let ch = self.dynamic.get_mut(&u.channel).ok_or_else(|| {
                    PipelineError::Scenario(format!(
                        "entity expiry on {}, which is not dynamic",
                        u.channel
                    ))
                })?;
                ch.accepted.remove(entity);
                ch.entities.remove(entity).is_some().then_some(None)
            }
            Payload::FullField { values } => {
                let m = meaningful(
                    self.last_field.get(&u.channel),
                    &u.payload,
                    self.epsilon,
                    0.0,
                )?;
                self.last_field.insert(u.channel.clone(), u.payload.clone());
                m.then(|| Some(((0..self.cells).collect::<Vec<_>>(), values.clone())))
            }
            Payload::Patch { cells, values } => {
                let m = meaningful(
                    self.last_field.get(&u.channel),
                    &u.payload,
                    self.epsilon,
                    0.0,
                )?;
                self.last_field.insert(u.channel.clone(), u.payload.clone());
                m.then(|| Some((cells.clone(), values.clone())))
            }
        };
        let is_meaningful = patch.is_some();
        self.foc.observe(&u.channel, u.timestamp, is_meaningful)?;
        match patch {
            Some(Some((cells, weights))) => steps.push(Step::Patch {
                t: u.timestamp,
                channel: u.channel.clone(),
                cells,
                weights,
            }),
            Some(None) => {
                let ch = self.dynamic.get_mut(&u.channel).expect("checked above");
                let entities: Vec<Entity> = ch.entities.values().cloned().collect();
                let p = ch.field.update(&entities);
                if !p.is_empty() {
                    steps.push(Step::Patch {
                        t: u.timestamp,
                        channel: u.channel.clone(),
                        cells: p.cells,
                        weights: p.weights,
                    });
                }
            }
            None => {}
        }
        if is_meaningful {
            self.meaningful += 1;
        }
        steps.extend(self.advance(u.timestamp));
        Ok(steps)
    }

    /// Moves the silence checks to `now` and reclusters when the FoC
    /// clusters changed and the last change is at least `dwell` old.
    pub fn advance(&mut self, now: f64) -> Option<Step> {
        self.foc.tick(now);
        let desired: BTreeMap<String, usize> = self
            .channels
            .iter()
            .map(|c| (c.clone(), self.config.cluster_of(self.foc.rate(c))))
            .collect();
        if desired == self.clusters || now - self.last_change < self.dwell {
            return None;
        }
        self.clusters = desired.clone();
        self.last_change = now;
        Some(Step::Recluster {
            t: now,
            clusters: desired,
        })
    }
}

enum Source {
    Uas(Box<UasFleet>),
    Replay(Box<Replay>),
}

impl Source {
    fn step(&mut self, now: f64) -> Vec<SignalUpdate> {
        match self {
            Source::Uas(f) => f.step(now),
            Source::Replay(r) => r.step(now),
        }
    }
}

fn sources(prepared: &Prepared) -> Result<Vec<Source>, PipelineError> {
    let s = &prepared.scenario;
    let mut out = Vec::new();
    if let Some(u) = &s.uas {
        out.push(Source::Uas(Box::new(UasFleet::new(u.clone(), s.grid)?)));
    }
    if let (Some(a), Some(t)) = (&s.ais, &prepared.tracks) {
        out.push(Source::Replay(Box::new(Replay::new(a.clone(), t.clone())?)));
    }
    Ok(out)
}

fn drive(
    mut source: Source,
    clock: &dyn Clock,
    duration: f64,
    send: impl Fn(SignalUpdate) -> bool,
) {
    for u in source.step(duration) {
        clock.wait_until(u.timestamp);
        if !send(u) {
            return;
        }
    }
}

/// Runs the producers on their own threads and hands every update up to
/// `duration` to `f`. A virtual clock gives a deterministic merge; a wall
/// clock paces the producers and delivers in arrival order.
fn stream<E>(
    prepared: &Prepared,
    clock: Arc<dyn Clock>,
    duration: f64,
    mut f: impl FnMut(SignalUpdate) -> Result<(), E>,
) -> Result<(), E>
where
    E: From<PipelineError>,
{
    let sources = sources(prepared)?;
    std::thread::scope(|scope| {
        if clock.is_virtual() {
            let mut queue = UpdateQueue::new();
            for src in sources {
                let p = queue.producer();
                let clock = clock.clone();
                scope.spawn(move || drive(src, clock.as_ref(), duration, |u| p.send(u)));
            }
            for u in queue {
                f(u)?;
            }
        } else {
            let (tx, rx) = crossbeam_channel::unbounded();
            for src in sources {
                let tx = tx.clone();
                let clock = clock.clone();
                scope.spawn(move || drive(src, clock.as_ref(), duration, |u| tx.send(u).is_ok()));
            }
            drop(tx);
            for u in rx {
                f(u)?;
            }
        }
        Ok(())
    })
}

fn make_clock(mode: ClockMode) -> Arc<dyn Clock> {
    match mode {
        ClockMode::Virtual => Arc::new(VirtualClock),
        ClockMode::Wall => Arc::new(WallClock::start()),
    }
}

/// Every update of the scenario in merged order, under a virtual clock.
pub fn collect_updates(prepared: &Prepared) -> Result<Vec<SignalUpdate>, PipelineError> {
    let mut out = Vec::new();
    stream(
        prepared,
        make_clock(ClockMode::Virtual),
        prepared.scenario.duration_s,
        |u| {
            out.push(u);
            Ok::<_, PipelineError>(())
        },
    )?;
    Ok(out)
}

/// The engine work a stream of updates turns into, ending with a final
/// silence check at the end of the scenario.
pub fn record_steps(
    prepared: &Prepared,
    updates: &[SignalUpdate],
) -> Result<(Vec<Step>, Frontend), PipelineError> {
    let mut frontend = Frontend::new(prepared);
    let mut steps = Vec::new();
    for u in updates {
        steps.extend(frontend.ingest(u)?);
    }
    steps.extend(frontend.advance(prepared.scenario.duration_s));
    Ok((steps, frontend))
}

/// Writes the updates a scenario produces as NDJSON; returns the count per
/// channel.
pub fn simulate(
    prepared: &Prepared,
    clock: ClockMode,
    out: &Path,
) -> Result<BTreeMap<String, u64>, PipelineError> {
    let file = File::create(out).map_err(io_err(out))?;
    let mut w = BufWriter::new(file);
    let mut counts = BTreeMap::new();
    stream(
        prepared,
        make_clock(clock),
        prepared.scenario.duration_s,
        |u| {
            write_record(&mut w, &u)?;
            *counts.entry(u.channel).or_insert(0) += 1;
            Ok::<_, PipelineError>(())
        },
    )?;
    w.flush().map_err(io_err(out))?;
    Ok(counts)
}

#[derive(Debug, Clone)]
pub struct RunOptions {
    pub mode: Mode,
    pub clock: ClockMode,
    /// Output directory; the scenario's when `None`.
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Serialize)]
pub struct RunSummary {
    pub mode: String,
    pub clock: String,
    pub duration_s: f64,
    pub cells: usize,
    pub omega: u64,
    pub updates_received: u64,
    pub updates_meaningful: u64,
    pub updates_ignored: u64,
    pub patches: u64,
    pub patches_skipped: u64,
    pub reclusters: u64,
    /// Landscape computations: the initial evaluation plus every patch that
    /// was not dropped.
    pub computations: u64,
    pub initial_ops: u64,
    pub update_ops: u64,
    pub recluster_ops: u64,
    pub snapshots: usize,
    pub wall_s: f64,
    pub rates: BTreeMap<String, f64>,
    pub clusters: BTreeMap<String, usize>,
    pub rho_gain: Option<f64>,
    pub out: PathBuf,
}

fn create(path: &Path) -> Result<BufWriter<File>, PipelineError> {
    Ok(BufWriter::new(File::create(path).map_err(io_err(path))?))
}

pub fn write_snapshot(
    dir: &Path,
    index: usize,
    grid: &GridSpec,
    values: &[f64],
    format: SnapshotFormat,
) -> Result<(), PipelineError> {
    let stem = dir.join(format!("landscape_{index:05}"));
    if matches!(format, SnapshotFormat::Csv | SnapshotFormat::Both) {
        let path = stem.with_extension("csv");
        let mut w = create(&path)?;
        write_csv(&mut w, grid, values).map_err(io_err(&path))?;
        w.flush().map_err(io_err(&path))?;
    }
    if matches!(format, SnapshotFormat::Pgm | SnapshotFormat::Both) {
        let path = stem.with_extension("pgm");
        let mut w = create(&path)?;
        write_pgm(&mut w, grid, values).map_err(io_err(&path))?;
        w.flush().map_err(io_err(&path))?;
    }
    Ok(())
}

struct Logs {
    rates: BufWriter<File>,
    gain: BufWriter<File>,
    timing: BufWriter<File>,
    clusters: BufWriter<File>,
    dir: PathBuf,
}

impl Logs {
    fn open(dir: &Path) -> Result<Self, PipelineError> {
        let mut logs = Logs {
            rates: create(&dir.join("rates.csv"))?,
            gain: create(&dir.join("gain.csv"))?,
            timing: create(&dir.join("timing.csv"))?,
            clusters: create(&dir.join("clusters.log"))?,
            dir: dir.to_path_buf(),
        };
        let dir = logs.dir.clone();
        writeln!(logs.rates, "t,channel,rate_hz,cluster").map_err(io_err(&dir))?;
        writeln!(logs.gain, "t,rho_gain").map_err(io_err(&dir))?;
        writeln!(logs.timing, "t,event,channel,cells,ops,micros,skipped").map_err(io_err(&dir))?;
        Ok(logs)
    }

    fn flush(&mut self) -> Result<(), PipelineError> {
        for w in [
            &mut self.rates,
            &mut self.gain,
            &mut self.timing,
            &mut self.clusters,
        ] {
            w.flush().map_err(io_err(&self.dir))?;
        }
        Ok(())
    }
}

struct Runner<'a> {
    prepared: &'a Prepared,
    engine: Engine,
    frontend: Frontend,
    clock: Arc<dyn Clock>,
    logs: Logs,
    snapshot_dir: PathBuf,
    next_snapshot: usize,
    last_snapshot: usize,
    summary: RunSummary,
}

impl Runner<'_> {
    /// Writes every snapshot due strictly before `t`.
    fn snapshots_before(&mut self, t: f64) -> Result<(), PipelineError> {
        let cadence = self.prepared.scenario.snapshot_every_s;
        while self.next_snapshot <= self.last_snapshot && (self.next_snapshot as f64 * cadence) < t
        {
            let ts = self.next_snapshot as f64 * cadence;
            self.clock.wait_until(ts);
            if let Some(step) = self.frontend.advance(ts) {
                self.step(step)?;
            }
            write_snapshot(
                &self.snapshot_dir,
                self.next_snapshot,
                &self.prepared.scenario.grid,
                &self.engine.root(),
                self.prepared.scenario.snapshot_format,
            )?;
            let dir = self.logs.dir.clone();
            let clusters = self.frontend.clusters().clone();
            for (c, r) in self.frontend.rates() {
                writeln!(self.logs.rates, "{ts},{c},{r},{}", clusters[&c]).map_err(io_err(&dir))?;
            }
            let rho = self.rho_gain();
            writeln!(
                self.logs.gain,
                "{ts},{}",
                rho.map_or("undefined".to_string(), |r| r.to_string())
            )
            .map_err(io_err(&dir))?;
            self.next_snapshot += 1;
            self.summary.snapshots += 1;
        }
        Ok(())
    }

    fn rho_gain(&self) -> Option<f64> {
        let rc = self.engine.reactive()?;
        rc.gain(&self.frontend.rates()).ok().map(|g| g.rho)
    }

    fn step(&mut self, step: Step) -> Result<(), PipelineError> {
        let dir = self.logs.dir.clone();
        match step {
            Step::Patch {
                t,
                channel,
                cells,
                weights,
            } => {
                let start = Instant::now();
                let applied = self.engine.apply(&channel, &cells, &weights)?;
                let micros = start.elapsed().as_secs_f64() * 1e6;
                self.summary.patches += 1;
                if applied.skipped {
                    self.summary.patches_skipped += 1;
                } else {
                    self.summary.computations += 1;
                }
                self.summary.update_ops += applied.ops;
                writeln!(
                    self.logs.timing,
                    "{t},patch,{channel},{},{},{micros:.1},{}",
                    applied.cells, applied.ops, applied.skipped
                )
                .map_err(io_err(&dir))?;
            }
            Step::Recluster { t, clusters } => {
                let start = Instant::now();
                let ops = self.engine.recluster(&clusters);
                let micros = start.elapsed().as_secs_f64() * 1e6;
                self.summary.reclusters += 1;
                self.summary.recluster_ops += ops;
                writeln!(self.logs.timing, "{t},recluster,,,{ops},{micros:.1},false")
                    .map_err(io_err(&dir))?;
                let list: Vec<String> = clusters.iter().map(|(c, k)| format!("{c}={k}")).collect();
                writeln!(self.logs.clusters, "t={t} {}", list.join(" ")).map_err(io_err(&dir))?;
            }
        }
        Ok(())
    }
}

/// Streams a scenario through the engine, writing snapshots and logs under
/// the output directory.
pub fn run(prepared: &Prepared, options: &RunOptions) -> Result<RunSummary, PipelineError> {
    let s = &prepared.scenario;
    let out = options.out.clone().unwrap_or_else(|| s.out.clone());
    let snapshot_dir = out.join("snapshots");
    std::fs::create_dir_all(&snapshot_dir).map_err(io_err(&snapshot_dir))?;
    let started = Instant::now();
    let frontend = Frontend::new(prepared);
    let engine = Engine::new(
        options.mode,
        &prepared.wmc,
        &prepared.initial,
        frontend.clusters(),
        s.clusters.config(),
        s.grid.cells(),
        s.epsilon,
    )?;
    let summary = RunSummary {
        mode: match options.mode {
            Mode::Reactive => "reactive",
            Mode::Full => "full",
        }
        .into(),
        clock: match options.clock {
            ClockMode::Virtual => "virtual",
            ClockMode::Wall => "wall",
        }
        .into(),
        duration_s: s.duration_s,
        cells: s.grid.cells(),
        omega: prepared.wmc.omega(),
        updates_received: 0,
        updates_meaningful: 0,
        updates_ignored: 0,
        patches: 0,
        patches_skipped: 0,
        reclusters: 0,
        computations: 1,
        initial_ops: engine.initial_ops(),
        update_ops: 0,
        recluster_ops: 0,
        snapshots: 0,
        wall_s: 0.0,
        rates: BTreeMap::new(),
        clusters: BTreeMap::new(),
        rho_gain: None,
        out: out.clone(),
    };
    let clock = make_clock(options.clock);
    let mut runner = Runner {
        prepared,
        engine,
        frontend,
        clock: clock.clone(),
        logs: Logs::open(&out)?,
        snapshot_dir,
        next_snapshot: 0,
        last_snapshot: (s.duration_s / s.snapshot_every_s + 1e-9).floor() as usize,
        summary,
    };
    stream(prepared, clock, s.duration_s, |u| {
        runner.snapshots_before(u.timestamp)?;
        for step in runner.frontend.ingest(&u)? {
            runner.step(step)?;
        }
        Ok::<_, PipelineError>(())
    })?;
    runner.snapshots_before(f64::INFINITY)?;
    runner.logs.flush()?;

    let mut summary = runner.summary.clone();
    summary.updates_received = runner.frontend.received();
    summary.updates_meaningful = runner.frontend.meaningful();
    summary.updates_ignored = runner.frontend.ignored();
    summary.rates = runner.frontend.rates();
    summary.clusters = runner.frontend.clusters().clone();
    summary.rho_gain = runner.rho_gain();
    summary.wall_s = started.elapsed().as_secs_f64();
    let path = out.join("summary.json");
    let mut w = create(&path)?;
    serde_json::to_writer_pretty(&mut w, &summary).map_err(|e| io_err(&path)(e.into()))?;
    writeln!(w).and_then(|_| w.flush()).map_err(io_err(&path))?;
    Ok(summary)
}

#[derive(Debug, Clone, Default, Serialize)]
pub struct ModeStats {
    /// Patches applied.
    pub updates: usize,
    pub mean_us: f64,
    pub std_us: f64,
    /// Ops over all patches and reclusters.
    pub total_ops: u64,
    pub mean_ops: f64,
    /// Seconds spent in the engine over the whole stream.
    pub engine_s: f64,
    pub initial_ops: u64,
}

#[derive(Debug, Clone, Serialize)]
pub struct BenchReport {
    pub duration_s: f64,
    pub cells: usize,
    pub omega: u64,
    pub updates_received: u64,
    pub updates_meaningful: u64,
    pub reclusters: usize,
    pub reactive: ModeStats,
    pub full: ModeStats,
    /// Full over reactive; `None` when the reactive side did no work.
    pub ops_speedup: Option<f64>,
    pub time_speedup: Option<f64>,
    /// Largest landscape difference between the engines at any checkpoint.
    pub max_root_diff: f64,
    pub rates: BTreeMap<String, f64>,
    pub rho_gain: Option<f64>,
}

fn measure(
    prepared: &Prepared,
    mode: Mode,
    steps: &[Step],
    checkpoints: usize,
) -> Result<(ModeStats, Vec<Vec<f64>>, Engine), PipelineError> {
    let s = &prepared.scenario;
    let zero: BTreeMap<String, usize> = prepared
        .wmc
        .variables()
        .iter()
        .map(|v| (v.channel.clone(), 0))
        .collect();
    let mut engine = Engine::new(
        mode,
        &prepared.wmc,
        &prepared.initial,
        &zero,
        s.clusters.config(),
        s.grid.cells(),
        s.epsilon,
    )?;
    let mut stats = ModeStats {
        initial_ops: engine.initial_ops(),
        ..ModeStats::default()
    };
    let mut times = Vec::new();
    let mut roots = Vec::new();
    let every = steps.len().div_ceil(checkpoints.max(1)).max(1);
    for (i, step) in steps.iter().enumerate() {
        let start = Instant::now();
        match step {
            Step::Patch {
                channel,
                cells,
                weights,
                ..
            } => {
                let a = engine.apply(channel, cells, weights)?;
                let dt = start.elapsed().as_secs_f64();
                times.push(dt * 1e6);
                stats.engine_s += dt;
                stats.total_ops += a.ops;
            }
            Step::Recluster { clusters, .. } => {
                stats.total_ops += engine.recluster(clusters);
                stats.engine_s += start.elapsed().as_secs_f64();
            }
        }
        if (i + 1) % every == 0 {
            roots.push(engine.root());
        }
    }
    roots.push(engine.root());
    stats.updates = times.len();
    if !times.is_empty() {
        let n = times.len() as f64;
        stats.mean_us = times.iter().sum::<f64>() / n;
        stats.std_us = if times.len() > 1 {
            (times
                .iter()
                .map(|t| (t - stats.mean_us).powi(2))
                .sum::<f64>()
                / (n - 1.0))
                .sqrt()
        } else {
            0.0
        };
        stats.mean_ops = stats.total_ops as f64 / n;
    }
    Ok((stats, roots, engine))
}

/// Replays one recorded stream of engine work through both engines and
/// compares their cost and their landscapes. Only engine time is measured;
/// producing the stream is done once, up front.
pub fn bench(prepared: &Prepared) -> Result<BenchReport, PipelineError> {
    let updates = collect_updates(prepared)?;
    let (steps, frontend) = record_steps(prepared, &updates)?;
    let (reactive, r_roots, engine) = measure(prepared, Mode::Reactive, &steps, 20)?;
    let (full, f_roots, _) = measure(prepared, Mode::Full, &steps, 20)?;
    let max_root_diff = r_roots
        .iter()
        .zip(&f_roots)
        .flat_map(|(a, b)| a.iter().zip(b).map(|(x, y)| (x - y).abs()))
        .fold(0.0, f64::max);
    let rates = frontend.rates();
    let rho_gain = engine
        .reactive()
        .and_then(|rc| rc.gain(&rates).ok())
        .map(|g| g.rho);
    let ratio = |a: f64, b: f64| (reactive.updates > 0 && b > 0.0).then(|| a / b);
    Ok(BenchReport {
        duration_s: prepared.scenario.duration_s,
        cells: prepared.scenario.grid.cells(),
        omega: prepared.wmc.omega(),
        updates_received: frontend.received(),
        updates_meaningful: frontend.meaningful(),
        reclusters: steps
            .iter()
            .filter(|s| matches!(s, Step::Recluster { .. }))
            .count(),
        ops_speedup: ratio(full.total_ops as f64, reactive.total_ops as f64),
        time_speedup: ratio(full.engine_s, reactive.engine_s),
        reactive,
        full,
        max_root_diff,
        rates,
        rho_gain,
    })
}
