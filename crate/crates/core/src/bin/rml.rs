use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use rml_core::circuit::partition;
use rml_core::compiler::compile_wmc;
use rml_core::pipeline::{
    self, load_program, prepare, BenchReport, ClockMode, Mode, PipelineError, RunOptions, Scenario,
    SnapshotFormat,
};
use rml_core::signals::ClusterConfig;
use rml_core::starmap::{write_csv, write_pgm, FieldValues};

#[derive(Parser)]
#[command(name = "rml", version, about = "Reactive mission landscapes")]
struct Cli {
    #[command(flatten)]
    global: Global,
    /// More log output; repeat for more.
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Global {
    /// Seed for field sampling and the UAS fleet.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Run producers as fast as possible, merged by timestamp.
    #[arg(long, global = true)]
    virtual_clock: bool,
    /// FoC partition width h, Hz.
    #[arg(long, global = true)]
    partition_width: Option<f64>,
    /// Re-evaluate the whole circuit on every update.
    #[arg(long, global = true)]
    no_reactive: bool,
    /// Output directory (or file, for `simulate`).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Minimum seconds between repartitions.
    #[arg(long, global = true)]
    dwell: Option<f64>,
}

#[derive(Subcommand)]
enum Command {
    /// Parse and validate a program.
    Check { program: PathBuf },
    /// Compile a program and print circuit statistics.
    Compile {
        program: PathBuf,
        #[arg(long)]
        dump_circuit: bool,
        #[arg(long)]
        dump_partition: bool,
        /// Cluster indices for the partition dump, as `channel=k`.
        #[arg(long, value_delimiter = ',')]
        clusters: Vec<String>,
    },
    /// Write the static relation fields and the initial landscape.
    Fields {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long, value_enum, default_value = "csv")]
        format: Format,
    },
    /// Write the scenario's signal updates as NDJSON.
    Simulate {
        #[arg(long)]
        scenario: PathBuf,
    },
    /// Stream a scenario and write landscape snapshots.
    Run {
        #[arg(long)]
        scenario: PathBuf,
    },
    /// Compare reactive and full re-evaluation on one scenario.
    Bench {
        #[arg(long)]
        scenario: PathBuf,
        /// Override the scenario duration, seconds.
        #[arg(long)]
        duration: Option<f64>,
    },
}

#[derive(Clone, Copy, clap::ValueEnum)]
enum Format {
    Csv,
    Pgm,
    Both,
}

impl From<Format> for SnapshotFormat {
    fn from(f: Format) -> Self {
        match f {
            Format::Csv => SnapshotFormat::Csv,
            Format::Pgm => SnapshotFormat::Pgm,
            Format::Both => SnapshotFormat::Both,
        }
    }
}

fn scenario(path: &Path, g: &Global) -> Result<Scenario, PipelineError> {
    let mut s = Scenario::load(path)?;
    if let Some(seed) = g.seed {
        s.set_seed(seed);
    }
    if let Some(h) = g.partition_width {
        s.clusters.partition_width = h;
    }
    if let Some(d) = g.dwell {
        s.clusters.dwell_s = d;
    }
    if let Some(out) = &g.out {
        s.out = out.clone();
    }
    s.validate()?;
    Ok(s)
}

fn io(path: &Path) -> impl FnOnce(std::io::Error) -> PipelineError + '_ {
    move |source| PipelineError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn write_grid(
    path: &Path,
    grid: &rml_core::starmap::GridSpec,
    values: &[f64],
    format: SnapshotFormat,
) -> Result<(), PipelineError> {
    if matches!(format, SnapshotFormat::Csv | SnapshotFormat::Both) {
        let p = path.with_extension("csv");
        let mut w = std::io::BufWriter::new(std::fs::File::create(&p).map_err(io(&p))?);
        write_csv(&mut w, grid, values)
            .and_then(|_| w.flush())
            .map_err(io(&p))?;
    }
    if matches!(format, SnapshotFormat::Pgm | SnapshotFormat::Both) {
        let p = path.with_extension("pgm");
        let mut w = std::io::BufWriter::new(std::fs::File::create(&p).map_err(io(&p))?);
        write_pgm(&mut w, grid, values)
            .and_then(|_| w.flush())
            .map_err(io(&p))?;
    }
    Ok(())
}

fn file_stem(channel: &str) -> String {
    channel.trim_matches('/').replace('/', "_")
}

fn print_bench(r: &BenchReport) {
    let speedup = |s: Option<f64>| s.map_or("undefined".to_string(), |x| format!("{x:.1}x"));
    println!(
        "{} s of traffic, {} cells, omega {}: {} updates received, {} meaningful, {} reclusters",
        r.duration_s, r.cells, r.omega, r.updates_received, r.updates_meaningful, r.reclusters
    );
    for (name, m) in [("reactive", &r.reactive), ("full", &r.full)] {
        println!(
            "{name:>8}: {} updates, {:.1} +- {:.1} us, {:.0} ops/update, {} ops, {:.3} s",
            m.updates, m.mean_us, m.std_us, m.mean_ops, m.total_ops, m.engine_s
        );
    }
    println!(
        "speedup: {} ops, {} time; max landscape difference {:.2e}",
        speedup(r.ops_speedup),
        speedup(r.time_speedup),
        r.max_root_diff
    );
    println!(
        "rho_gain: {}",
        r.rho_gain
            .map_or("undefined".to_string(), |g| format!("{g:.2}"))
    );
}

fn parse_clusters(items: &[String]) -> Result<BTreeMap<String, usize>, PipelineError> {
    items
        .iter()
        .map(|s| {
            let (c, k) = s
                .rsplit_once('=')
                .ok_or_else(|| PipelineError::Scenario(format!("expected channel=k, got {s}")))?;
            let k = k
                .parse()
                .map_err(|_| PipelineError::Scenario(format!("bad cluster index in {s}")))?;
            Ok((c.to_string(), k))
        })
        .collect()
}

fn execute(cli: &Cli) -> Result<(), PipelineError> {
    let g = &cli.global;
    match &cli.command {
        Command::Check { program } => {
            let p = load_program(program)?;
            println!(
                "{}: ok, {} sources, {} rules, target {}",
                program.display(),
                p.sources.len(),
                p.rules.len(),
                p.target.atom
            );
        }
        Command::Compile {
            program,
            dump_circuit,
            dump_partition,
            clusters,
        } => {
            let p = load_program(program)?;
            let wmc = compile_wmc(&p)?;
            println!("variables: {}", wmc.variables().len());
            for v in wmc.variables() {
                println!("  {} {} arity {}", v.channel, v.atom, v.arity());
            }
            println!("omega: {}", wmc.omega());
            if *dump_circuit {
                print!("{}", wmc.dump());
            }
            if *dump_partition {
                let config = ClusterConfig {
                    h: g.partition_width.unwrap_or(0.5),
                    ..ClusterConfig::default()
                };
                let rc = partition(&wmc, &parse_clusters(clusters)?, config, 1);
                print!("{}", rc.dump_partition());
            }
        }
        Command::Fields {
            scenario: path,
            format,
        } => {
            let s = scenario(path, g)?;
            let prepared = prepare(&s)?;
            let dir = g.out.clone().unwrap_or_else(|| s.out.join("fields"));
            std::fs::create_dir_all(&dir).map_err(io(&dir))?;
            let format = SnapshotFormat::from(*format);
            for (channel, field) in &prepared.static_fields {
                let stem = dir.join(file_stem(channel));
                match &field.values {
                    FieldValues::Probability(p) => write_grid(&stem, &s.grid, p, format)?,
                    FieldValues::Density { mu, sigma } => {
                        write_grid(
                            &stem.with_file_name(format!("{}_mu", file_stem(channel))),
                            &s.grid,
                            mu,
                            format,
                        )?;
                        write_grid(
                            &stem.with_file_name(format!("{}_sigma", file_stem(channel))),
                            &s.grid,
                            sigma,
                            format,
                        )?;
                    }
                }
                println!("{channel}: {}", field.relation);
            }
            let engine = pipeline::Engine::new(
                Mode::Full,
                &prepared.wmc,
                &prepared.initial,
                &BTreeMap::new(),
                s.clusters.config(),
                s.grid.cells(),
                s.epsilon,
            )?;
            write_grid(&dir.join("landscape"), &s.grid, &engine.root(), format)?;
            println!("wrote {}", dir.display());
        }
        Command::Simulate { scenario: path } => {
            let s = scenario(path, g)?;
            let prepared = prepare(&s)?;
            let out = g
                .out
                .clone()
                .unwrap_or_else(|| s.out.join("updates.ndjson"));
            if let Some(parent) = out.parent() {
                std::fs::create_dir_all(parent).map_err(io(parent))?;
            }
            let clock = if g.virtual_clock {
                ClockMode::Virtual
            } else {
                ClockMode::Wall
            };
            let counts = pipeline::simulate(&prepared, clock, &out)?;
            for (c, n) in &counts {
                println!("{c}: {n} updates");
            }
            println!("wrote {}", out.display());
        }
        Command::Run { scenario: path } => {
            let s = scenario(path, g)?;
            let prepared = prepare(&s)?;
            let options = RunOptions {
                mode: if g.no_reactive {
                    Mode::Full
                } else {
                    Mode::Reactive
                },
                clock: if g.virtual_clock {
                    ClockMode::Virtual
                } else {
                    ClockMode::Wall
                },
                out: None,
            };
            let r = pipeline::run(&prepared, &options)?;
            println!(
                "{} run over {} s: {} updates, {} patches ({} dropped), {} reclusters, {} snapshots in {:.2} s",
                r.mode,
                r.duration_s,
                r.updates_received,
                r.patches,
                r.patches_skipped,
                r.reclusters,
                r.snapshots,
                r.wall_s
            );
            println!(
                "ops: {} initial, {} updates, {} reclusters; rho_gain {}",
                r.initial_ops,
                r.update_ops,
                r.recluster_ops,
                r.rho_gain
                    .map_or("undefined".to_string(), |g| format!("{g:.2}"))
            );
            println!("wrote {}", r.out.display());
        }
        Command::Bench {
            scenario: path,
            duration,
        } => {
            let mut s = scenario(path, g)?;
            if let Some(d) = duration {
                s.duration_s = *d;
                s.validate()?;
            }
            let prepared = prepare(&s)?;
            let report = pipeline::bench(&prepared)?;
            print_bench(&report);
            std::fs::create_dir_all(&s.out).map_err(io(&s.out))?;
            let path = s.out.join("bench.json");
            let text = serde_json::to_string_pretty(&report).expect("plain data");
            std::fs::write(&path, text + "\n").map_err(io(&path))?;
            println!("wrote {}", path.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match execute(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
