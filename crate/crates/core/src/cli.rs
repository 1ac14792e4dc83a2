//! Run configuration, single runs, seed sweeps and the command-line front end.

use std::fs;
use std::io::{self, BufWriter};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::{Args, Parser, Subcommand, ValueEnum};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::balancer::{ProcedureKind, ProcedureParams};
use crate::engine::{EngineConfig, EngineError, World};
use crate::metrics::{self, FinalWindow};
use crate::netgraph::{validate, NetworkGraph};
use crate::scenarios::{self, Scenario};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_INVARIANT: i32 = 3;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("io error: {0}")]
    Io(#[from] io::Error),
    #[error("runtime invariant violated: {0}")]
    Engine(#[from] EngineError),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => EXIT_CONFIG,
            CliError::Io(_) => 1,
            CliError::Engine(e) if e.is_invariant_violation() => EXIT_INVARIANT,
            CliError::Engine(_) => EXIT_CONFIG,
        }
    }
}

fn config_err(msg: impl Into<String>) -> CliError {
    CliError::Config(msg.into())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum TopologyKind {
    Grid,
    Hypercube,
    Mesh,
}

/// A scenario given by name (sized for the topology) or in full.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ScenarioSpec {
    Name(String),
    Full(Scenario),
}

impl Default for ScenarioSpec {
    fn default() -> Self {
        ScenarioSpec::Name("independent_tasks".into())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub topology: TopologyKind,
    pub nodes: Option<usize>,
    pub rows: Option<usize>,
    pub cols: Option<usize>,
    pub scenario: ScenarioSpec,
    pub procedure: ProcedureKind,
    pub seed: u64,
    /// Post-gate samples to record.
    pub samples: usize,
    pub sample_interval: u64,
    pub migration_cadence: u64,
    pub gossip_cadence: u64,
    pub smooth_window: usize,
    /// Trailing samples averaged into run summaries.
    pub final_window: usize,
    pub history_capacity: usize,
    pub queue_soft_limit: Option<usize>,
    /// Rounds allowed for setup before the run is declared stuck.
    pub max_setup_rounds: u64,
    pub coalesce_control: bool,
    pub params: ProcedureParams,
}

impl Default for RunConfig {
    fn default() -> Self {
        let e = EngineConfig::default();
        RunConfig {
            topology: TopologyKind::Grid,
            nodes: None,
            rows: None,
            cols: None,
            scenario: ScenarioSpec::default(),
            procedure: e.procedure,
            seed: e.seed,
            samples: 1000,
            sample_interval: e.sample_interval,
            migration_cadence: e.migration_cadence,
            gossip_cadence: e.gossip_cadence,
            smooth_window: 5,
            final_window: 100,
            history_capacity: e.history_capacity,
            queue_soft_limit: None,
            max_setup_rounds: 2_000_000,
            coalesce_control: e.coalesce_control,
            params: ProcedureParams::default(),
        }
    }
}

/// Rows and columns for a grid of `n` nodes: the most square factorisation
/// with rows not above columns.
pub fn grid_dims(n: usize) -> (usize, usize) {
    let mut rows = (n as f64).sqrt() as usize;
    while rows > 1 && n % rows != 0 {
        rows -= 1;
    }
    (rows.max(1), n / rows.max(1))
}

impl RunConfig {
    /// Reads a config file. A run manifest is accepted too.
    pub fn from_toml(text: &str) -> Result<RunConfig, CliError> {
        let value: toml::Table = toml::from_str(text).map_err(|e| config_err(e.to_string()))?;
        let body = match value.get("config") {
            Some(toml::Value::Table(t)) if value.contains_key("version") => t.clone(),
            _ => value,
        };
        body.try_into().map_err(|e: toml::de::Error| config_err(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<RunConfig, CliError> {
        let text = fs::read_to_string(path)
            .map_err(|e| config_err(format!("cannot read {}: {e}", path.display())))?;
        RunConfig::from_toml(&text)
    }

    pub fn build_graph(&self) -> Result<NetworkGraph, CliError> {
        let g = match self.topology {
            TopologyKind::Grid => {
                let (rows, cols) = match (self.rows, self.cols, self.nodes) {
                    (Some(r), Some(c), n) => {
                        if n.is_some_and(|n| n != r * c) {
                            return Err(config_err(format!(
                                "grid {r}x{c} does not have {} nodes",
                                n.unwrap()
                            )));
                        }
                        (r, c)
                    }
                    (None, None, n) => grid_dims(n.unwrap_or(32)),
                    _ => return Err(config_err("grid needs both rows and cols")),
                };
                if rows == 0 || cols == 0 {
                    return Err(config_err("grid dimensions must be positive"));
                }
                NetworkGraph::grid(rows, cols)
            }
            TopologyKind::Hypercube => {
                let n = self.node_count_flag()?;
                if !n.is_power_of_two() {
                    return Err(config_err(format!(
                        "hypercube needs a power-of-two node count, got {n}"
                    )));
                }
                NetworkGraph::hypercube(n.trailing_zeros())
            }
            TopologyKind::Mesh => NetworkGraph::full_mesh(self.node_count_flag()?),
        };
        validate(&g).map_err(|v| config_err(v.to_string()))?;
        Ok(g)
    }

    fn node_count_flag(&self) -> Result<usize, CliError> {
        if self.rows.is_some() || self.cols.is_some() {
            return Err(config_err("rows and cols only apply to grids"));
        }
        match self.nodes.unwrap_or(32) {
            0 => Err(config_err("node count must be positive")),
            n => Ok(n),
        }
    }

    /// The scenario with every size filled in.
    pub fn resolve_scenario(&self, node_count: usize) -> Result<Scenario, CliError> {
        let s = match &self.scenario {
            ScenarioSpec::Full(s) => s.clone(),
            ScenarioSpec::Name(name) => match name.as_str() {
                "independent_tasks" => scenarios::independent_tasks(200),
                "star" => scenarios::star(node_count, 5),
                "ring" => scenarios::ring(128),
                "chord_dht" | "chord" => scenarios::chord_dht(128, 7),
                "chord_probe" => Scenario::ChordProbe {
                    objects: 128,
                    bits: 7,
                },
                other => {
                    return Err(config_err(format!(
                        "unknown scenario {other:?}, expected independent_tasks, star, ring, chord_dht or chord_probe"
                    )))
                }
            },
        };
        s.check().map_err(CliError::Config)?;
        Ok(s)
    }

    pub fn engine_config(&self) -> Result<EngineConfig, CliError> {
        if self.sample_interval == 0 || self.migration_cadence == 0 || self.gossip_cadence == 0 {
            return Err(config_err("intervals and cadences must be positive"));
        }
        if self.smooth_window == 0 || self.final_window == 0 {
            return Err(config_err("windows must be positive"));
        }
        Ok(EngineConfig {
            seed: self.seed,
            procedure: self.procedure,
            params: self.params,
            sample_interval: self.sample_interval,
            migration_cadence: self.migration_cadence,
            gossip_cadence: self.gossip_cadence,
            history_capacity: self.history_capacity,
            startup_node: 0,
            queue_soft_limit: self.queue_soft_limit,
            record_app_log: false,
            coalesce_control: self.coalesce_control,
        })
    }

    /// Fully resolved copy, as written to manifests.
    pub fn resolved(&self) -> Result<RunConfig, CliError> {
        let g = self.build_graph()?;
        let mut c = self.clone();
        c.scenario = ScenarioSpec::Full(self.resolve_scenario(g.node_count())?);
        if c.topology != TopologyKind::Grid {
            c.nodes = Some(g.node_count());
        }
        Ok(c)
    }
}

#[derive(Debug, Clone, Serialize)]
struct Manifest<'a> {
    version: &'static str,
    config: &'a RunConfig,
}

/// What a finished run reports besides its files.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunReport {
    pub seed: u64,
    pub gate_round: u64,
    pub rounds: u64,
    pub transitions: u64,
    pub migrations: u64,
    pub final_window: FinalWindow,
    pub mean_total_distance: f64,
}

/// Built world after setup, before any samples are recorded.
pub fn prepare(cfg: &RunConfig) -> Result<World, CliError> {
    let graph = Arc::new(cfg.build_graph()?);
    let scenario = cfg.resolve_scenario(graph.node_count())?;
    let mut world = World::new(graph, &scenario, cfg.engine_config()?)?;
    if world.run_until_gate(cfg.max_setup_rounds)?.is_none() {
        return Err(EngineError::Stalled(world.round_count()).into());
    }
    Ok(world)
}

/// Runs one configuration and writes its outputs to `out`, if given.
pub fn run(cfg: &RunConfig, out: Option<&Path>, trace: Option<&Path>) -> Result<RunReport, CliError> {
    let graph = Arc::new(cfg.build_graph()?);
    let scenario = cfg.resolve_scenario(graph.node_count())?;
    let mut world = World::new(Arc::clone(&graph), &scenario, cfg.engine_config()?)?;
    if let Some(path) = trace {
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            fs::create_dir_all(dir)?;
        }
        world.set_trace(Box::new(BufWriter::new(fs::File::create(path)?)));
    }
    if world.run_until_gate(cfg.max_setup_rounds)?.is_none() {
        return Err(EngineError::Stalled(world.round_count()).into());
    }
    world.run_samples(cfg.samples)?;
    world.audit()?;

    let rows = metrics::aggregate(world.samples());
    let comm = scenario.comm_graph(world.objects());
    let totals = metrics::total_distances(&graph, &world.placement(), &comm);
    let report = RunReport {
        seed: cfg.seed,
        gate_round: world.gate().map_or(0, |g| g.round),
        rounds: world.round_count(),
        transitions: world.transitions(),
        migrations: world.counters().migrations,
        final_window: metrics::final_window(&rows, cfg.final_window),
        mean_total_distance: metrics::mean_total_distance(&totals),
    };

    if let Some(dir) = out {
        fs::create_dir_all(dir)?;
        let samples = world.samples();
        metrics::write_load_csv(&dir.join("load.csv"), samples)?;
        metrics::write_messages_csv(&dir.join("messages.csv"), samples)?;
        metrics::write_latency_csv(&dir.join("latency.csv"), &metrics::latency_histogram(samples))?;
        metrics::write_distances_csv(&dir.join("distances.csv"), &metrics::distance_histogram(&totals))?;
        metrics::write_migrations_csv(&dir.join("migrations.csv"), samples)?;
        metrics::write_smoothed_csv(&dir.join("smoothed.csv"), &rows, cfg.smooth_window)?;
        write_manifest(&dir.join("manifest.toml"), cfg)?;
    }
    Ok(report)
}

pub fn write_manifest(path: &Path, cfg: &RunConfig) -> Result<(), CliError> {
    let resolved = cfg.resolved()?;
    let text = toml::to_string(&Manifest {
        version: env!("CARGO_PKG_VERSION"),
        config: &resolved,
    })
    .map_err(|e| config_err(e.to_string()))?;
    fs::write(path, text)?;
    Ok(())
}

/// Outcome of one seed in a sweep.
pub type SeedResult = (u64, Result<RunReport, CliError>);

/// Runs `cfg` once per seed in parallel, into `out/seed-N`, and writes
/// `out/summary.csv`. Failing seeds do not stop the others.
pub fn sweep(cfg: &RunConfig, seeds: &[u64], out: &Path) -> Result<Vec<SeedResult>, CliError> {
    if seeds.is_empty() {
        return Err(config_err("sweep needs at least one seed"));
    }
    cfg.resolved()?;
    fs::create_dir_all(out)?;
    let results: Vec<SeedResult> = seeds
        .par_iter()
        .map(|&seed| {
            let mut c = cfg.clone();
            c.seed = seed;
            let dir = out.join(format!("seed-{seed}"));
            (seed, run(&c, Some(&dir), None))
        })
        .collect();
    write_summary(&out.join("summary.csv"), &results)?;
    Ok(results)
}

fn write_summary(path: &Path, results: &[SeedResult]) -> Result<(), CliError> {
    let mut w = csv::Writer::from_path(path).map_err(|e| CliError::Io(e.into()))?;
    let header = ["seed", "max_load", "load_std", "msg_avg", "msg_std", "mean_distance", "migrations"];
    w.write_record(header).map_err(|e| CliError::Io(e.into()))?;
    let ok: Vec<&RunReport> = results.iter().filter_map(|(_, r)| r.as_ref().ok()).collect();
    let row = |label: String, f: &FinalWindow, d: f64, m: f64| {
        vec![
            label,
            metrics::fmt_f(f.max_load),
            metrics::fmt_f(f.load_std),
            metrics::fmt_f(f.msg_avg),
            metrics::fmt_f(f.msg_std),
            metrics::fmt_f(d),
            metrics::fmt_f(m),
        ]
    };
    for r in &ok {
        w.write_record(row(r.seed.to_string(), &r.final_window, r.mean_total_distance, r.migrations as f64))
            .map_err(|e| CliError::Io(e.into()))?;
    }
    if !ok.is_empty() {
        let col = |f: fn(&RunReport) -> f64| metrics::mean(&ok.iter().map(|r| f(r)).collect::<Vec<_>>());
        let mean = FinalWindow {
            samples: ok[0].final_window.samples,
            max_load: col(|r| r.final_window.max_load),
            load_std: col(|r| r.final_window.load_std),
            msg_avg: col(|r| r.final_window.msg_avg),
            msg_std: col(|r| r.final_window.msg_std),
        };
        w.write_record(row(
            "mean".into(),
            &mean,
            col(|r| r.mean_total_distance),
            col(|r| r.migrations as f64),
        ))
        .map_err(|e| CliError::Io(e.into()))?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Parser)]
#[command(name = "absnet-sim", version, about = "Deterministic simulator of object migration over location-independent routing")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run one simulation and write its CSV outputs.
    Run {
        #[command(flatten)]
        opts: RunOpts,
        /// Event trace file, one line per rule application.
        #[arg(long)]
        trace: Option<PathBuf>,
    },
    /// Run the same configuration over several seeds in parallel.
    Sweep {
        #[command(flatten)]
        opts: RunOpts,
        /// Comma-separated seed list.
        #[arg(long, value_delimiter = ',', num_args = 1..)]
        seeds: Vec<u64>,
    },
    /// Print the topology dump of the configured graph.
    Topology {
        #[command(flatten)]
        opts: RunOpts,
    },
}

#[derive(Debug, Args)]
pub struct RunOpts {
    /// TOML config file; flags override its values.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub topology: Option<TopologyKind>,
    #[arg(long)]
    pub nodes: Option<usize>,
    #[arg(long)]
    pub rows: Option<usize>,
    #[arg(long)]
    pub cols: Option<usize>,
    #[arg(long)]
    pub scenario: Option<String>,
    #[arg(long)]
    pub procedure: Option<String>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub samples: Option<usize>,
    #[arg(long)]
    pub sample_interval: Option<u64>,
    #[arg(long)]
    pub migration_cadence: Option<u64>,
    #[arg(long)]
    pub gossip_cadence: Option<u64>,
    #[arg(long)]
    pub smooth_window: Option<usize>,
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
}

impl RunOpts {
    pub fn config(&self) -> Result<RunConfig, CliError> {
        let mut c = match &self.config {
            Some(p) => RunConfig::load(p)?,
            None => RunConfig::default(),
        };
        if let Some(t) = self.topology {
            c.topology = t;
        }
        if self.nodes.is_some() || self.rows.is_some() || self.cols.is_some() {
            c.nodes = self.nodes;
            c.rows = self.rows;
            c.cols = self.cols;
        }
        if let Some(s) = &self.scenario {
            c.scenario = ScenarioSpec::Name(s.clone());
        }
        if let Some(p) = &self.procedure {
            c.procedure = p.parse().map_err(CliError::Config)?;
        }
        macro_rules! set {
            ($($f:ident),*) => { $( if let Some(v) = self.$f { c.$f = v; } )* };
        }
        set!(seed, samples, sample_interval, migration_cadence, gossip_cadence, smooth_window);
        Ok(c)
    }
}

/// Executes a parsed command line and returns the process exit code.
pub fn main_with(cli: Cli) -> i32 {
    let result = match cli.command {
        Command::Run { opts, trace } => opts
            .config()
            .and_then(|c| run(&c, Some(&opts.out), trace.as_deref()))
            .map(|r| {
                println!(
                    "seed {} rounds {} transitions {} migrations {} msg_avg {:.3} load_std {:.3}",
                    r.seed,
                    r.rounds,
                    r.transitions,
                    r.migrations,
                    r.final_window.msg_avg,
                    r.final_window.load_std
                );
            }),
        Command::Sweep { opts, seeds } => opts.config().and_then(|c| {
            let results = sweep(&c, &seeds, &opts.out)?;
            let mut worst: Option<CliError> = None;
            for (seed, r) in results {
                match r {
                    Ok(r) => println!("seed {seed} ok msg_avg {:.3}", r.final_window.msg_avg),
                    Err(e) => {
                        eprintln!("seed {seed} failed: {e}");
                        if worst.as_ref().map_or(true, |w| e.exit_code() > w.exit_code()) {
                            worst = Some(e);
                        }
                    }
                }
            }
            worst.map_or(Ok(()), Err)
        }),
        Command::Topology { opts } => opts.config().and_then(|c| {
            print!("{}", c.build_graph()?.dump());
            Ok(())
        }),
    };
    match result {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
