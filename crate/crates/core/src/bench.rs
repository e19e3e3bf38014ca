//! Makespan sweeps over maps, policies and agent counts, plus a map checker.

use std::fmt;
use std::io;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::maps::{self, MapLoadError};
use crate::sim::{generate_tasks, run_instance, Algorithm, RunOptions, SimError};
use crate::world::{World, WorldError};

pub const ROWS_HEADER: &str = "# mapd-bench rows v1";
pub const AGGREGATE_HEADER: &str = "# mapd-bench aggregate v1";

#[derive(Debug, Error)]
pub enum BenchError {
    #[error("config: {0}")]
    Config(#[from] toml::de::Error),
    #[error("config: {0}")]
    Invalid(String),
    #[error(transparent)]
    Map(#[from] MapLoadError),
    #[error("map `{name}`: {source}")]
    World { name: String, source: WorldError },
    #[error("map `{name}` rejected: {reason}")]
    Assumption { name: String, reason: String },
    #[error("instance map={map} policy={policy} agents={agents} trial={trial} seed={seed} failed: {source}")]
    Instance {
        map: String,
        policy: Algorithm,
        agents: usize,
        trial: u64,
        seed: u64,
        source: SimError,
    },
    #[error("writing results: {0}")]
    Io(#[from] io::Error),
    #[error("writing results: {0}")]
    Csv(#[from] csv::Error),
}

impl BenchError {
    /// The run itself failed (collision, deadlock, cap) rather than its input.
    pub fn is_runtime_failure(&self) -> bool {
        matches!(self, BenchError::Instance { source, .. } if source.is_runtime_failure())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct BenchConfig {
    /// Built-in map names or map file paths.
    pub maps: Vec<String>,
    pub policies: Vec<Algorithm>,
    pub agent_counts: Vec<usize>,
    pub trials: u64,
    pub seed_base: u64,
    pub tasks: usize,
    pub out: Option<PathBuf>,
    /// Worker threads; `None` uses the global pool.
    pub workers: Option<usize>,
}

impl Default for BenchConfig {
    fn default() -> Self {
        BenchConfig {
            maps: maps::builtin_names().map(String::from).collect(),
            policies: vec![
                Algorithm::Pibttp,
                Algorithm::PibttpTa,
                Algorithm::TokenPassing,
            ],
            agent_counts: (5..=40).step_by(5).collect(),
            trials: 20,
            seed_base: 0,
            tasks: 50,
            out: None,
            workers: None,
        }
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    maps: Option<Vec<String>>,
    policies: Option<Vec<String>>,
    agent_counts: Option<Vec<usize>>,
    trials: Option<u64>,
    seed_base: Option<u64>,
    tasks: Option<usize>,
    out: Option<PathBuf>,
    workers: Option<usize>,
}

impl BenchConfig {
    /// Parses `key = value` lines; missing keys keep their defaults.
    pub fn parse(text: &str) -> Result<Self, BenchError> {
        let raw: RawConfig = toml::from_str(text)?;
        let mut cfg = BenchConfig::default();
        if let Some(m) = raw.maps {
            cfg.maps = m;
        }
        if let Some(p) = raw.policies {
            cfg.policies = p
                .iter()
                .map(|s| {
                    s.parse()
                        .map_err(|e: SimError| BenchError::Invalid(e.to_string()))
                })
                .collect::<Result<_, _>>()?;
        }
        if let Some(n) = raw.agent_counts {
            cfg.agent_counts = n;
        }
        cfg.trials = raw.trials.unwrap_or(cfg.trials);
        cfg.seed_base = raw.seed_base.unwrap_or(cfg.seed_base);
        cfg.tasks = raw.tasks.unwrap_or(cfg.tasks);
        cfg.out = raw.out;
        cfg.workers = raw.workers;
        cfg.check()?;
        Ok(cfg)
    }

    pub fn from_file(path: &Path) -> Result<Self, BenchError> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    fn check(&self) -> Result<(), BenchError> {
        let bad = |msg: &str| Err(BenchError::Invalid(msg.to_string()));
        if self.trials == 0 {
            return bad("trials must be at least 1");
        }
        if self.maps.is_empty() || self.policies.is_empty() || self.agent_counts.is_empty() {
            return bad("maps, policies and agent_counts must be non-empty");
        }
        if self.agent_counts.contains(&0) {
            return bad("agent counts must be positive");
        }
        if self.workers == Some(0) {
            return bad("workers must be positive");
        }
        Ok(())
    }
}

/// One finished instance.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct BenchRow {
    pub map: String,
    pub policy: String,
    pub agents: usize,
    pub trial: u64,
    pub seed: u64,
    pub makespan: u64,
    pub violations: usize,
}

/// Makespan statistics of one (map, policy, agents) cell.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Aggregate {
    pub map: String,
    pub policy: String,
    pub agents: usize,
    pub trials: usize,
    pub mean_makespan: f64,
    /// Sample standard deviation; 0 for a single trial.
    pub std_makespan: f64,
}

fn load_world(name: &str) -> Result<World, BenchError> {
    let env = maps::load(name)?;
    let name = env.name().to_string();
    World::new(env).map_err(|source| BenchError::World { name, source })
}

/// Runs every (map, policy, agents, trial) instance with seed
/// `seed_base + trial` and returns the rows sorted by that tuple.
pub fn run_benchmark(cfg: &BenchConfig) -> Result<Vec<BenchRow>, BenchError> {
    cfg.check()?;
    let worlds: Vec<World> = cfg
        .maps
        .iter()
        .map(|m| load_world(m))
        .collect::<Result<_, _>>()?;
    for w in &worlds {
        let limit = max_agents(w);
        if let Some(&n) = cfg.agent_counts.iter().find(|&&n| n > limit) {
            return Err(BenchError::Assumption {
                name: w.env().name().to_string(),
                reason: format!("{n} agents requested, at most {limit} fit"),
            });
        }
    }

    let mut jobs = Vec::new();
    for (m, _) in worlds.iter().enumerate() {
        for &policy in &cfg.policies {
            for &n in &cfg.agent_counts {
                for trial in 0..cfg.trials {
                    jobs.push((m, policy, n, trial));
                }
            }
        }
    }
    let run = |&(m, policy, n, trial): &(usize, Algorithm, usize, u64)| {
        let world = &worlds[m];
        let seed = cfg.seed_base + trial;
        let map = world.env().name().to_string();
        let result = generate_tasks(world, cfg.tasks, seed)
            .and_then(|tasks| run_instance(world, n, tasks, policy, seed, &RunOptions::default()));
        match result {
            Ok(out) => Ok(BenchRow {
                map,
                policy: policy.name().to_string(),
                agents: n,
                trial,
                seed,
                makespan: out.metrics.makespan,
                violations: out.metrics.violations,
            }),
            Err(source) => Err(BenchError::Instance {
                map,
                policy,
                agents: n,
                trial,
                seed,
                source,
            }),
        }
    };
    let results: Vec<Result<BenchRow, BenchError>> = match cfg.workers {
        Some(k) => rayon::ThreadPoolBuilder::new()
            .num_threads(k)
            .build()
            .map_err(|e| BenchError::Invalid(e.to_string()))?
            .install(|| jobs.par_iter().map(run).collect()),
        None => jobs.par_iter().map(run).collect(),
    };
    // Jobs are already in (map, policy, agents, trial) order and the parallel
    // collect keeps that order, so the first error is the same on every run.
    results.into_iter().collect()
}

/// Largest agent count the map accepts: fewer agents than main-area nodes
/// and no more than there are parking nodes.
pub fn max_agents(world: &World) -> usize {
    let main = world.decomposition().main_nodes().len();
    world
        .env()
        .parking_nodes()
        .len()
        .min(main.saturating_sub(1))
}

pub fn aggregate(rows: &[BenchRow]) -> Vec<Aggregate> {
    let mut out: Vec<Aggregate> = Vec::new();
    let mut start = 0;
    while start < rows.len() {
        let key = (&rows[start].map, &rows[start].policy, rows[start].agents);
        let end = start
            + rows[start..]
                .iter()
                .take_while(|r| (&r.map, &r.policy, r.agents) == key)
                .count();
        let values: Vec<f64> = rows[start..end].iter().map(|r| r.makespan as f64).collect();
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let std = if values.len() > 1 {
            (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
        } else {
            0.0
        };
        out.push(Aggregate {
            map: key.0.clone(),
            policy: key.1.clone(),
            agents: key.2,
            trials: values.len(),
            mean_makespan: mean,
            std_makespan: std,
        });
        start = end;
    }
    out
}

fn to_csv<T: Serialize>(header: &str, records: &[T]) -> Result<String, BenchError> {
    let mut buf = format!("{header}\n").into_bytes();
    {
        let mut w = csv::Writer::from_writer(&mut buf);
        for r in records {
            w.serialize(r)?;
        }
        w.flush()?;
    }
    Ok(String::from_utf8(buf).expect("csv output is utf-8"))
}

pub fn rows_csv(rows: &[BenchRow]) -> Result<String, BenchError> {
    to_csv(ROWS_HEADER, rows)
}

pub fn aggregate_csv(aggs: &[Aggregate]) -> Result<String, BenchError> {
    to_csv(AGGREGATE_HEADER, aggs)
}

/// Writes `rows.csv` and `aggregate.csv` into `dir`.
pub fn write_outputs(dir: &Path, rows: &[BenchRow]) -> Result<(PathBuf, PathBuf), BenchError> {
    std::fs::create_dir_all(dir)?;
    let rows_path = dir.join("rows.csv");
    let agg_path = dir.join("aggregate.csv");
    std::fs::write(&rows_path, rows_csv(rows)?)?;
    std::fs::write(&agg_path, aggregate_csv(&aggregate(rows))?)?;
    Ok((rows_path, agg_path))
}

/// Summary of a map that passed every structural check.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MapReport {
    pub name: String,
    pub nodes: usize,
    pub edges: usize,
    pub main_nodes: usize,
    /// (connecting node x, y, nodes below it) per tree.
    pub trees: Vec<(u32, u32, usize)>,
    pub pickups: usize,
    pub deliveries: usize,
    pub parking: usize,
    pub max_agents: usize,
}

impl fmt::Display for MapReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let plural = if self.trees.len() == 1 { "" } else { "s" };
        writeln!(
            f,
            "OK: main bi-connected, {} tree{plural}",
            self.trees.len()
        )?;
        writeln!(
            f,
            "map {}: {} nodes, {} edges",
            self.name, self.nodes, self.edges
        )?;
        writeln!(f, "main area: {} nodes", self.main_nodes)?;
        for (i, (x, y, size)) in self.trees.iter().enumerate() {
            writeln!(f, "tree {i}: {size} nodes, connected at ({x}, {y})")?;
        }
        writeln!(
            f,
            "pickup {}, delivery {}, parking {}",
            self.pickups, self.deliveries, self.parking
        )?;
        write!(f, "agents: at most {}", self.max_agents)
    }
}

/// Parses and decomposes a map and checks that it can host agents and tasks.
pub fn validate_map(name_or_path: &str) -> Result<MapReport, BenchError> {
    let world = load_world(name_or_path)?;
    let env = world.env();
    let d = world.decomposition();
    let reject = |reason: String| {
        Err(BenchError::Assumption {
            name: env.name().to_string(),
            reason,
        })
    };
    if env.parking_nodes().is_empty() {
        return reject("no parking nodes".into());
    }
    if max_agents(&world) == 0 {
        return reject("main area too small for a single agent".into());
    }
    if env.pickup_nodes().is_empty() || env.delivery_nodes().is_empty() {
        return reject("needs at least one pickup and one delivery node".into());
    }
    if let Err(e) = generate_tasks(&world, 1, 0) {
        return reject(e.to_string());
    }
    Ok(MapReport {
        name: env.name().to_string(),
        nodes: env.node_count(),
        edges: env.edge_count(),
        main_nodes: d.main_nodes().len(),
        trees: d
            .trees()
            .iter()
            .map(|t| {
                let (x, y) = env.coord(t.connecting);
                (x, y, t.proper.len())
            })
            .collect(),
        pickups: env.pickup_nodes().len(),
        deliveries: env.delivery_nodes().len(),
        parking: env.parking_nodes().len(),
        max_agents: max_agents(&world),
    })
}
