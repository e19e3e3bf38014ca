use std::fs::File;
use std::io::BufWriter;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde_json::json;

use mapd_core::bench::{self, BenchConfig, BenchError};
use mapd_core::maps;
use mapd_core::sim::{self, Algorithm, RunOptions, SimError};
use mapd_core::world::World;

/// Multi-agent pickup and delivery simulator.
#[derive(Parser)]
#[command(name = "mapd", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one instance and print its metrics as JSON.
    Run {
        /// Built-in map name (env1..env4) or map file.
        #[arg(long)]
        map: String,
        /// pibt, pibttp, pibttp-ta or tp.
        #[arg(long)]
        policy: String,
        #[arg(long)]
        agents: usize,
        #[arg(long, default_value_t = 50)]
        tasks: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Write a JSON-lines trace here.
        #[arg(long)]
        trace: Option<PathBuf>,
    },
    /// Run a makespan sweep and write rows.csv and aggregate.csv.
    Bench {
        /// Key-value config file; defaults cover env1..env4, n = 5..40.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        trials: Option<u64>,
        #[arg(long)]
        workers: Option<usize>,
    },
    /// Check that a map can be decomposed and used.
    ValidateMap {
        /// Built-in map name or map file.
        map: String,
    },
}

enum Failure {
    /// Bad arguments, config or map.
    Input(String),
    /// A run collided, deadlocked or hit the timestep cap.
    Runtime(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Input(_) => 2,
            Failure::Runtime(_) => 1,
        }
    }
}

impl From<SimError> for Failure {
    fn from(e: SimError) -> Self {
        if e.is_runtime_failure() {
            Failure::Runtime(e.to_string())
        } else {
            Failure::Input(e.to_string())
        }
    }
}

impl From<BenchError> for Failure {
    fn from(e: BenchError) -> Self {
        if e.is_runtime_failure() {
            Failure::Runtime(e.to_string())
        } else {
            Failure::Input(e.to_string())
        }
    }
}

fn input<E: ToString>(e: E) -> Failure {
    Failure::Input(e.to_string())
}

fn run(
    map: &str,
    policy: &str,
    agents: usize,
    task_count: usize,
    seed: u64,
    trace: Option<PathBuf>,
) -> Result<(), Failure> {
    let env = maps::load(map).map_err(input)?;
    let name = env.name().to_string();
    let world = World::new(env).map_err(|e| Failure::Input(format!("map `{name}`: {e}")))?;
    let algorithm: Algorithm = policy.parse()?;
    let opts = RunOptions {
        trace: trace.is_some(),
        ..RunOptions::default()
    };
    let out = sim::run_seeded(&world, agents, task_count, algorithm, seed, &opts)?;
    if let Some(path) = trace {
        let file =
            File::create(&path).map_err(|e| Failure::Input(format!("{}: {e}", path.display())))?;
        sim::write_jsonl(&out.trace, BufWriter::new(file))
            .map_err(|e| Failure::Input(format!("{}: {e}", path.display())))?;
    }
    let m = &out.metrics;
    let report = json!({
        "map": name,
        "policy": algorithm.name(),
        "agents": agents,
        "tasks": task_count,
        "seed": m.seed,
        "makespan": m.makespan,
        "violations": m.violations,
        "timesteps": m.timesteps,
    });
    println!("{report}");
    Ok(())
}

fn bench(
    config: Option<PathBuf>,
    out: Option<PathBuf>,
    trials: Option<u64>,
    workers: Option<usize>,
) -> Result<(), Failure> {
    let mut cfg = match config {
        Some(path) => BenchConfig::from_file(&path)?,
        None => BenchConfig::default(),
    };
    if let Some(t) = trials {
        cfg.trials = t;
    }
    if workers.is_some() {
        cfg.workers = workers;
    }
    let dir = out.or_else(|| cfg.out.clone()).ok_or_else(|| {
        Failure::Input("no output directory: pass --out or set `out` in the config".into())
    })?;
    let rows = bench::run_benchmark(&cfg)?;
    let (rows_path, agg_path) = bench::write_outputs(&dir, &rows).map_err(input)?;
    println!("{} instances", rows.len());
    println!("rows: {}", rows_path.display());
    println!("aggregate: {}", agg_path.display());
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run {
            map,
            policy,
            agents,
            tasks,
            seed,
            trace,
        } => run(&map, &policy, agents, tasks, seed, trace),
        Command::Bench {
            config,
            out,
            trials,
            workers,
        } => bench(config, out, trials, workers),
        Command::ValidateMap { map } => bench::validate_map(&map)
            .map(|r| println!("{r}"))
            .map_err(Failure::from),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            let (Failure::Input(msg) | Failure::Runtime(msg)) = &f;
            eprintln!("error: {msg}");
            ExitCode::from(f.code())
        }
    }
}
