//! Instance runner: task lifecycle, per-step validation, metrics and traces.

pub mod audit;
pub mod rng;
pub mod trace;
pub mod validate;

use std::collections::{HashMap, VecDeque};
use std::fmt;
use std::str::FromStr;

use serde::Serialize;
use thiserror::Error;

use crate::baseline_tp::{TokenPassing, TpError};
use crate::engine::{
    check_agents, compute_priorities, plan_step, sanitize_tas, AgentId, AgentState, EngineError,
    Phase, Policy, StepContext, TaskId,
};
use crate::world::{NodeId, World};
use rng::{SeedStream, STREAM_EPSILON, STREAM_SELECTION, STREAM_TASKSET};
pub use trace::{to_jsonl, write_jsonl, AgentRecord, SimEvent, TraceRecord};
pub use validate::{validate_transition, Violation};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum TaskStatus {
    Pending,
    Claimed(AgentId),
    PickedUp(AgentId),
    Done(u64),
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Task {
    pub id: TaskId,
    pub pickup: NodeId,
    pub delivery: NodeId,
    pub status: TaskStatus,
}

impl Task {
    pub fn new(id: TaskId, pickup: NodeId, delivery: NodeId) -> Self {
        Task {
            id,
            pickup,
            delivery,
            status: TaskStatus::Pending,
        }
    }
}

/// Planner driving the agents of an instance.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub enum Algorithm {
    NaivePibt,
    Pibttp,
    PibttpTa,
    TokenPassing,
}

impl Algorithm {
    pub const ALL: [Algorithm; 4] = [
        Algorithm::NaivePibt,
        Algorithm::Pibttp,
        Algorithm::PibttpTa,
        Algorithm::TokenPassing,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Algorithm::NaivePibt => "pibt",
            Algorithm::Pibttp => "pibttp",
            Algorithm::PibttpTa => "pibttp-ta",
            Algorithm::TokenPassing => "tp",
        }
    }

    pub fn policy(self) -> Option<Policy> {
        match self {
            Algorithm::NaivePibt => Some(Policy::NaivePibt),
            Algorithm::Pibttp => Some(Policy::Pibttp),
            Algorithm::PibttpTa => Some(Policy::PibttpTa),
            Algorithm::TokenPassing => None,
        }
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Algorithm {
    type Err = SimError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Algorithm::ALL
            .into_iter()
            .find(|a| a.name() == s)
            .ok_or_else(|| SimError::UnknownAlgorithm(s.to_string()))
    }
}

#[derive(Debug, Error)]
pub enum SimError {
    #[error("unknown policy `{0}` (expected pibt, pibttp, pibttp-ta or tp)")]
    UnknownAlgorithm(String),
    #[error(
        "{agents} agents do not fit: main area has {main} nodes, map has {parking} parking nodes"
    )]
    TooManyAgents {
        agents: usize,
        main: usize,
        parking: usize,
    },
    #[error("no pickup/delivery pair lies outside a common tree")]
    NoFeasibleTask,
    #[error("task {id}: {reason}")]
    InvalidTask { id: TaskId, reason: &'static str },
    #[error("timestep cap {cap} reached with {done}/{total} tasks done")]
    CapExceeded { cap: u64, done: usize, total: usize },
    #[error("no progress: state at t={t} repeats the state at t={since}")]
    NoProgress { t: u64, since: u64 },
    #[error("t={t}: {} collision(s), first {:?}", violations.len(), violations.first())]
    Violation { t: u64, violations: Vec<Violation> },
    #[error(transparent)]
    Engine(#[from] EngineError),
    #[error(transparent)]
    Token(#[from] TpError),
}

impl SimError {
    /// Failure of the run itself rather than of its inputs.
    pub fn is_runtime_failure(&self) -> bool {
        matches!(
            self,
            SimError::CapExceeded { .. }
                | SimError::NoProgress { .. }
                | SimError::Violation { .. }
                | SimError::Token(_)
        )
    }
}

/// Uniform random tasks over pickup x delivery nodes, rejecting pairs that
/// share a tree or a node. Drawn from the taskset stream of `seed`.
pub fn generate_tasks(world: &World, count: usize, seed: u64) -> Result<Vec<Task>, SimError> {
    let env = world.env();
    let d = world.decomposition();
    let ok =
        |p: NodeId, q: NodeId| p != q && (d.tree_of(p).is_none() || d.tree_of(p) != d.tree_of(q));
    let feasible = env
        .pickup_nodes()
        .iter()
        .any(|&p| env.delivery_nodes().iter().any(|&q| ok(p, q)));
    if count > 0 && !feasible {
        return Err(SimError::NoFeasibleTask);
    }
    let mut rng = SeedStream::new(seed, STREAM_TASKSET);
    let mut tasks = Vec::with_capacity(count);
    while tasks.len() < count {
        let p = env.pickup_nodes()[rng.index(env.pickup_nodes().len())];
        let q = env.delivery_nodes()[rng.index(env.delivery_nodes().len())];
        if ok(p, q) {
            tasks.push(Task::new(tasks.len(), p, q));
        }
    }
    Ok(tasks)
}

/// Checks that every task is well-formed for `world`.
pub fn validate_tasks(world: &World, tasks: &[Task]) -> Result<(), SimError> {
    let env = world.env();
    let d = world.decomposition();
    for (i, k) in tasks.iter().enumerate() {
        let bad = |reason| Err(SimError::InvalidTask { id: k.id, reason });
        if k.id != i {
            return bad("ids must be 0..n in order");
        }
        if !env.contains(k.pickup) || !env.roles(k.pickup).pickup {
            return bad("pickup is not a pickup node");
        }
        if !env.contains(k.delivery) || !env.roles(k.delivery).delivery {
            return bad("delivery is not a delivery node");
        }
        if k.pickup == k.delivery {
            return bad("pickup and delivery coincide");
        }
        if d.tree_of(k.pickup).is_some() && d.tree_of(k.pickup) == d.tree_of(k.delivery) {
            return bad("pickup and delivery are in the same tree");
        }
        if k.status != TaskStatus::Pending {
            return bad("task is not pending");
        }
    }
    Ok(())
}

/// Outcome of task selection for an agent without a task.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Assignment {
    Task(TaskId),
    /// Only tasks picked up in the agent's current tree remain; leave it first.
    ExitTree(NodeId),
    /// Nothing left to do.
    Return,
}

/// Uniform choice among pending tasks, skipping those whose pickup lies in
/// the tree the agent stands in.
pub fn assign_task(
    world: &World,
    agent: &AgentState,
    tasks: &[Task],
    rng: &mut SeedStream,
) -> Assignment {
    let d = world.decomposition();
    let here = d.tree_of(agent.position);
    let mut pending = false;
    let eligible: Vec<TaskId> = tasks
        .iter()
        .filter(|k| k.status == TaskStatus::Pending)
        .inspect(|_| pending = true)
        .filter(|k| here.is_none() || d.tree_of(k.pickup) != here)
        .map(|k| k.id)
        .collect();
    if !eligible.is_empty() {
        Assignment::Task(eligible[rng.index(eligible.len())])
    } else if pending {
        let k = here.expect("only an agent inside a tree can be excluded from every task");
        Assignment::ExitTree(d.trees()[k].connecting)
    } else {
        Assignment::Return
    }
}

/// `100 * |T| * diameter`.
pub fn timestep_cap(world: &World, tasks: usize) -> u64 {
    100 * tasks as u64 * world.diameter() as u64
}

#[derive(Clone, Debug, Default)]
pub struct RunOptions {
    /// Keep a per-timestep trace.
    pub trace: bool,
    /// After the last delivery keep going until no agent is inside a tree
    /// and every token-passing path has run out, so that traces do not end
    /// in the middle of an escape.
    pub drain: bool,
    /// Override for the timestep cap.
    pub cap: Option<u64>,
    /// Check the whole token for conflicts every step (token passing).
    pub check_token: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Metrics {
    pub makespan: u64,
    pub violations: usize,
    pub timesteps: u64,
    pub seed: u64,
    #[serde(skip)]
    pub completed: usize,
    /// Time from assignment to delivery, per task.
    #[serde(skip)]
    pub service_times: Vec<u64>,
}

#[derive(Clone, Debug)]
pub struct RunOutput {
    pub metrics: Metrics,
    pub trace: Vec<TraceRecord>,
}

/// Step-by-step simulation of one instance.
pub struct Simulation<'w> {
    world: &'w World,
    algorithm: Algorithm,
    opts: RunOptions,
    seed: u64,
    cap: u64,
    agents: Vec<AgentState>,
    tasks: Vec<Task>,
    assigned_at: Vec<u64>,
    selection: SeedStream,
    tp: Option<TokenPassing>,
    t: u64,
    seen: HashMap<Vec<u32>, u64>,
    seen_order: VecDeque<(u64, Vec<u32>)>,
    trace: Vec<TraceRecord>,
    finished: bool,
}

/// Draws pairwise distinct ε values in (0, 1).
pub fn draw_epsilons(n: usize, seed: u64) -> Vec<f64> {
    let mut rng = SeedStream::new(seed, STREAM_EPSILON);
    let mut out: Vec<f64> = Vec::with_capacity(n);
    while out.len() < n {
        let e = rng.unit_open();
        if !out.contains(&e) {
            out.push(e);
        }
    }
    out
}

/// Runs one instance: `n` agents start on the first `n` parking nodes and
/// work through `tasks` under `algorithm`.
pub fn run_instance(
    world: &World,
    n: usize,
    tasks: Vec<Task>,
    algorithm: Algorithm,
    seed: u64,
    opts: &RunOptions,
) -> Result<RunOutput, SimError> {
    Simulation::new(world, n, tasks, algorithm, seed, opts.clone())?.run()
}

impl<'w> Simulation<'w> {
    pub fn new(
        world: &'w World,
        n: usize,
        tasks: Vec<Task>,
        algorithm: Algorithm,
        seed: u64,
        opts: RunOptions,
    ) -> Result<Self, SimError> {
        let env = world.env();
        let main = world.decomposition().main_nodes().len();
        let parking = env.parking_nodes().len();
        if n >= main || n > parking {
            return Err(SimError::TooManyAgents {
                agents: n,
                main,
                parking,
            });
        }
        validate_tasks(world, &tasks)?;
        let eps = draw_epsilons(n, seed);
        let agents: Vec<AgentState> = (0..n)
            .map(|i| AgentState::new(i, env.parking_nodes()[i], eps[i]))
            .collect();
        check_agents(&agents)?;
        let tp = (algorithm == Algorithm::TokenPassing).then(|| TokenPassing::new(0, &agents));
        Ok(Simulation {
            world,
            algorithm,
            cap: opts.cap.unwrap_or_else(|| timestep_cap(world, tasks.len())),
            opts,
            seed,
            agents,
            assigned_at: vec![0; tasks.len()],
            tasks,
            selection: SeedStream::new(seed, STREAM_SELECTION),
            tp,
            t: 0,
            seen: HashMap::new(),
            seen_order: VecDeque::new(),
            trace: Vec::new(),
            finished: false,
        })
    }

    pub fn t(&self) -> u64 {
        self.t
    }

    pub fn agents(&self) -> &[AgentState] {
        &self.agents
    }

    pub fn tasks(&self) -> &[Task] {
        &self.tasks
    }

    pub fn trace(&self) -> &[TraceRecord] {
        &self.trace
    }

    pub fn token_passing(&self) -> Option<&TokenPassing> {
        self.tp.as_ref()
    }

    pub fn is_finished(&self) -> bool {
        self.finished
    }

    pub fn run(mut self) -> Result<RunOutput, SimError> {
        while !self.step()? {}
        Ok(self.finish())
    }

    /// Advances one timestep. Returns `true` once the instance is over.
    pub fn step(&mut self) -> Result<bool, SimError> {
        if self.finished {
            return Ok(true);
        }
        let world = self.world;
        let env = world.env();
        let t = self.t;
        let mut events = Vec::new();
        self.arrivals(t, &mut events);
        self.assign(t, &mut events);
        self.arrivals(t, &mut events);

        let done = self
            .tasks
            .iter()
            .filter(|k| matches!(k.status, TaskStatus::Done(_)))
            .count();
        let all_done = done == self.tasks.len();
        if all_done && (!self.opts.drain || self.settled()) {
            if self.opts.trace {
                let rec = self.record(t, events, false);
                self.trace.push(rec);
            }
            self.finished = true;
            return Ok(true);
        }
        if t >= self.cap {
            return Err(SimError::CapExceeded {
                cap: self.cap,
                done,
                total: self.tasks.len(),
            });
        }

        let positions: Vec<NodeId> = self.agents.iter().map(|a| a.position).collect();
        let next = match self.algorithm.policy() {
            Some(policy) => {
                let mut engine_events = Vec::new();
                sanitize_tas(&mut self.agents, world, &mut engine_events);
                compute_priorities(&mut self.agents, world, policy);
                events.extend(
                    engine_events
                        .into_iter()
                        .map(|e| SimEvent::from_engine(e, env)),
                );
                self.watch_progress(t, &events)?;

                let record = self.opts.trace.then(|| self.record(t, Vec::new(), true));
                let mut ctx = StepContext::new(t, world, &self.agents);
                let next = plan_step(&mut self.agents, &mut ctx, world, policy);
                events.extend(
                    ctx.events
                        .into_iter()
                        .map(|e| SimEvent::from_engine(e, env)),
                );
                if let Some(mut rec) = record {
                    rec.events = events;
                    self.trace.push(rec);
                }
                next
            }
            None => {
                let tp = self.tp.as_ref().expect("token passing state");
                if self.opts.check_token {
                    tp.token().check(env, t)?;
                }
                let next = tp.advance(t);
                if self.opts.trace {
                    let rec = self.record(t, events, false);
                    self.trace.push(rec);
                }
                next
            }
        };

        let violations = validate_transition(&positions, &next, env);
        if !violations.is_empty() {
            return Err(SimError::Violation { t, violations });
        }
        for (a, v) in self.agents.iter_mut().zip(next) {
            a.position = v;
        }
        self.t += 1;
        Ok(false)
    }

    fn settled(&self) -> bool {
        let d = self.world.decomposition();
        let paths_done = self
            .tp
            .as_ref()
            .is_none_or(|tp| tp.token().paths().iter().all(|p| p.end_time() <= self.t));
        paths_done && self.agents.iter().all(|a| d.is_main(a.position))
    }

    /// Fails when the joint state repeats without any task progress in
    /// between; the planner is deterministic, so such a state loops forever.
    fn watch_progress(&mut self, t: u64, events: &[SimEvent]) -> Result<(), SimError> {
        if events.iter().any(SimEvent::is_progress) {
            self.seen.clear();
            self.seen_order.clear();
        }
        let key = self.state_key();
        if let Some(&since) = self.seen.get(&key) {
            return Err(SimError::NoProgress { t, since });
        }
        self.seen.insert(key.clone(), t);
        self.seen_order.push_back((t, key));
        let window = 2 * self.world.env().node_count() as u64;
        while let Some(&(old, _)) = self.seen_order.front() {
            if old + window >= t {
                break;
            }
            let (old, key) = self.seen_order.pop_front().expect("front exists");
            if self.seen.get(&key) == Some(&old) {
                self.seen.remove(&key);
            }
        }
        Ok(())
    }

    fn finish(self) -> RunOutput {
        let makespan = self
            .tasks
            .iter()
            .filter_map(|k| match k.status {
                TaskStatus::Done(at) => Some(at),
                _ => None,
            })
            .max()
            .unwrap_or(0);
        let service_times = self
            .tasks
            .iter()
            .map(|k| match k.status {
                TaskStatus::Done(at) => at - self.assigned_at[k.id],
                _ => 0,
            })
            .collect();
        RunOutput {
            metrics: Metrics {
                makespan,
                violations: 0,
                timesteps: self.t,
                seed: self.seed,
                completed: self.tasks.len(),
                service_times,
            },
            trace: self.trace,
        }
    }

    /// Pickups, deliveries and homecomings at time `t`.
    fn arrivals(&mut self, t: u64, events: &mut Vec<SimEvent>) {
        for a in self.agents.iter_mut() {
            if let Some(k) = a.task {
                let task = &mut self.tasks[k];
                if matches!(task.status, TaskStatus::Claimed(_)) && a.position == task.pickup {
                    task.status = TaskStatus::PickedUp(a.id);
                    a.phase = Phase::ToDelivery;
                    a.destination = Some(task.delivery);
                    events.push(SimEvent::Pickup {
                        agent: a.id,
                        task: k,
                    });
                }
                if matches!(task.status, TaskStatus::PickedUp(_)) && a.position == task.delivery {
                    task.status = TaskStatus::Done(t);
                    a.task = None;
                    a.phase = Phase::Returning;
                    a.destination = Some(a.home);
                    events.push(SimEvent::Delivery {
                        agent: a.id,
                        task: k,
                    });
                    if let Some(tp) = self.tp.as_mut() {
                        tp.release(a.id);
                    }
                }
            }
            if a.task.is_none() && a.phase == Phase::Returning && a.position == a.home {
                a.phase = Phase::Idle;
                a.destination = None;
            }
        }
    }

    fn assign(&mut self, t: u64, events: &mut Vec<SimEvent>) {
        let before = events.len();
        if let Some(tp) = self.tp.as_mut() {
            tp.assign(t, self.world, &mut self.agents, &mut self.tasks, events);
        } else {
            for i in 0..self.agents.len() {
                if self.agents[i].task.is_some() {
                    continue;
                }
                let choice = assign_task(
                    self.world,
                    &self.agents[i],
                    &self.tasks,
                    &mut self.selection,
                );
                let a = &mut self.agents[i];
                match choice {
                    Assignment::Task(k) => {
                        self.tasks[k].status = TaskStatus::Claimed(i);
                        a.task = Some(k);
                        a.phase = Phase::ToPickup;
                        a.destination = Some(self.tasks[k].pickup);
                        events.push(SimEvent::Assign { agent: i, task: k });
                    }
                    Assignment::ExitTree(c) => {
                        a.phase = Phase::Exiting;
                        a.destination = Some(c);
                    }
                    Assignment::Return if a.position == a.home => {
                        a.phase = Phase::Idle;
                        a.destination = None;
                    }
                    Assignment::Return => {
                        a.phase = Phase::Returning;
                        a.destination = Some(a.home);
                    }
                }
            }
        }
        for e in &events[before..] {
            if let SimEvent::Assign { task, .. } = e {
                self.assigned_at[*task] = t;
            }
        }
    }

    fn state_key(&self) -> Vec<u32> {
        let mut key = Vec::with_capacity(self.agents.len() * 4);
        for a in &self.agents {
            key.push(a.position.0);
            key.push(a.goal().0);
            key.push(a.reserved_node.map_or(u32::MAX, |v| v.0));
            key.push(u32::from(a.phase.code()) << 1 | u32::from(a.tas));
        }
        key
    }

    fn record(&self, t: u64, events: Vec<SimEvent>, with_priority: bool) -> TraceRecord {
        let env = self.world.env();
        let agents = self
            .agents
            .iter()
            .map(|a| {
                let (x, y) = env.coord(a.position);
                AgentRecord {
                    id: a.id,
                    x,
                    y,
                    p: with_priority.then_some(a.priority),
                    tas: a.tas,
                    task: a.task,
                    node: a.position,
                    goal: a.goal(),
                    phase: a.phase,
                }
            })
            .collect();
        TraceRecord { t, agents, events }
    }
}

/// Generates the taskset for `seed` and runs the instance.
pub fn run_seeded(
    world: &World,
    n: usize,
    task_count: usize,
    algorithm: Algorithm,
    seed: u64,
    opts: &RunOptions,
) -> Result<RunOutput, SimError> {
    let tasks = generate_tasks(world, task_count, seed)?;
    run_instance(world, n, tasks, algorithm, seed, opts)
}
