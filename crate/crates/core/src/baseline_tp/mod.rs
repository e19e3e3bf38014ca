//! Token Passing baseline.
//!
//! All agents share a token holding every committed timed path. An agent
//! whose path has run out takes the token, picks the nearest task whose
//! endpoints no other agent is using, and plans a conflict-free route through
//! pickup and delivery with space-time A*. Paths are treated as parked at
//! their last node forever once they end.

use std::cmp::Reverse;
use std::collections::{BinaryHeap, HashMap, HashSet};

use thiserror::Error;

use crate::engine::{AgentId, AgentState, Phase, TaskId};
use crate::sim::{SimEvent, Task, TaskStatus};
use crate::world::{DistanceField, Environment, NodeId, World};

/// Node sequence starting at `start_time`; entry `i` is the position at
/// `start_time + i`. After the last entry the agent stays put.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TimedPath {
    pub start_time: u64,
    pub nodes: Vec<NodeId>,
}

impl TimedPath {
    pub fn stay(t: u64, v: NodeId) -> Self {
        TimedPath {
            start_time: t,
            nodes: vec![v],
        }
    }

    pub fn end_time(&self) -> u64 {
        self.start_time + self.nodes.len() as u64 - 1
    }

    pub fn last(&self) -> NodeId {
        *self.nodes.last().expect("paths are non-empty")
    }

    /// Position at time `t` (`t >= start_time`).
    pub fn at(&self, t: u64) -> NodeId {
        let i = t.saturating_sub(self.start_time) as usize;
        self.nodes[i.min(self.nodes.len() - 1)]
    }

    pub fn arrival_time(&self) -> u64 {
        self.end_time()
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum TpError {
    #[error("agents {a} and {b} both occupy node {node} at t={t}")]
    VertexConflict {
        a: AgentId,
        b: AgentId,
        node: NodeId,
        t: u64,
    },
    #[error("agents {a} and {b} swap across an edge at t={t}")]
    SwapConflict { a: AgentId, b: AgentId, t: u64 },
    #[error("path of agent {agent} jumps between non-adjacent nodes at t={t}")]
    Jump { agent: AgentId, t: u64 },
}

/// Shared record of committed paths and claimed tasks.
#[derive(Clone, Debug)]
pub struct Token {
    paths: Vec<TimedPath>,
    claims: Vec<Option<TaskId>>,
    // (node, time) -> agent for every non-final path entry.
    table: HashMap<(NodeId, u64), AgentId>,
    // node -> (agent, time from which it is parked there)
    parked: HashMap<NodeId, (AgentId, u64)>,
}

impl Token {
    pub fn new(t: u64, positions: &[NodeId]) -> Self {
        let mut token = Token {
            paths: Vec::with_capacity(positions.len()),
            claims: vec![None; positions.len()],
            table: HashMap::new(),
            parked: HashMap::new(),
        };
        for (i, &v) in positions.iter().enumerate() {
            token.paths.push(TimedPath::stay(t, v));
            token.parked.insert(v, (i, t));
        }
        token
    }

    pub fn path(&self, a: AgentId) -> &TimedPath {
        &self.paths[a]
    }

    pub fn paths(&self) -> &[TimedPath] {
        &self.paths
    }

    pub fn claim_of(&self, a: AgentId) -> Option<TaskId> {
        self.claims[a]
    }

    /// Replaces the path of agent `a`.
    pub fn set_path(&mut self, a: AgentId, path: TimedPath) {
        let old = std::mem::replace(&mut self.paths[a], path);
        for (i, &v) in old.nodes.iter().enumerate().take(old.nodes.len() - 1) {
            self.table.remove(&(v, old.start_time + i as u64));
        }
        if self.parked.get(&old.last()).map(|p| p.0) == Some(a) {
            self.parked.remove(&old.last());
        }
        let new = &self.paths[a];
        for (i, &v) in new.nodes.iter().enumerate().take(new.nodes.len() - 1) {
            self.table.insert((v, new.start_time + i as u64), a);
        }
        self.parked.insert(new.last(), (a, new.end_time()));
    }

    /// Agent occupying `v` at time `t`, if any.
    pub fn occupant(&self, v: NodeId, t: u64) -> Option<AgentId> {
        if let Some(&a) = self.table.get(&(v, t)) {
            return Some(a);
        }
        match self.parked.get(&v) {
            Some(&(a, from)) if from <= t => Some(a),
            _ => None,
        }
    }

    /// Latest time another agent passes through `v`, or `None` when no one
    /// does. `Some(u64::MAX)` means someone is parked there.
    fn last_use(&self, v: NodeId, me: AgentId) -> Option<u64> {
        if let Some(&(a, _)) = self.parked.get(&v) {
            if a != me {
                return Some(u64::MAX);
            }
        }
        self.paths
            .iter()
            .enumerate()
            .filter(|&(a, _)| a != me)
            .flat_map(|(_, p)| {
                p.nodes
                    .iter()
                    .enumerate()
                    .filter(move |&(_, &u)| u == v)
                    .map(move |(i, _)| p.start_time + i as u64)
            })
            .max()
    }

    /// Pickup and delivery nodes in use by agents other than `me`: ends of
    /// their paths and endpoints of tasks they have claimed.
    pub fn endpoints(&self, tasks: &[Task], me: AgentId) -> HashSet<NodeId> {
        let mut e = HashSet::new();
        for (a, p) in self.paths.iter().enumerate() {
            if a == me {
                continue;
            }
            e.insert(p.last());
            if let Some(k) = self.claims[a] {
                e.insert(tasks[k].pickup);
                e.insert(tasks[k].delivery);
            }
        }
        e
    }

    /// Full pairwise conflict check over all committed paths from `t` on.
    pub fn check(&self, env: &Environment, t: u64) -> Result<(), TpError> {
        let horizon = self
            .paths
            .iter()
            .map(|p| p.end_time())
            .max()
            .unwrap_or(t)
            .max(t)
            + 1;
        for (a, p) in self.paths.iter().enumerate() {
            for w in p.nodes.windows(2) {
                if w[0] != w[1] && !env.are_adjacent(w[0], w[1]) {
                    return Err(TpError::Jump {
                        agent: a,
                        t: p.start_time,
                    });
                }
            }
        }
        for time in t..=horizon {
            for a in 0..self.paths.len() {
                for b in a + 1..self.paths.len() {
                    let (pa, pb) = (&self.paths[a], &self.paths[b]);
                    if pa.at(time) == pb.at(time) {
                        return Err(TpError::VertexConflict {
                            a,
                            b,
                            node: pa.at(time),
                            t: time,
                        });
                    }
                    if time > t
                        && pa.at(time) == pb.at(time - 1)
                        && pb.at(time) == pa.at(time - 1)
                        && pa.at(time) != pa.at(time - 1)
                    {
                        return Err(TpError::SwapConflict { a, b, t: time });
                    }
                }
            }
        }
        Ok(())
    }
}

/// How a search treats its goal.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum GoalMode {
    /// Reach the goal; the path continues afterwards.
    Pass,
    /// Reach the goal and stay there forever.
    Park,
}

/// Earliest-arrival path from `(start, t0)` to `goal` that respects every
/// other agent's committed path. Gives up after `4 |V|` timesteps.
///
/// `field` is the distance field of the goal and doubles as the heuristic.
pub fn space_time_astar(
    env: &Environment,
    field: &DistanceField,
    token: &Token,
    me: AgentId,
    start: NodeId,
    t0: u64,
    mode: GoalMode,
) -> Option<TimedPath> {
    let goal = field.goal();
    let horizon = t0 + 4 * env.node_count() as u64;
    let earliest_park = match mode {
        GoalMode::Pass => 0,
        GoalMode::Park => match token.last_use(goal, me) {
            Some(u64::MAX) => return None,
            Some(t) => t + 1,
            None => 0,
        },
    };
    let blocked = |v: NodeId, t: u64| matches!(token.occupant(v, t), Some(a) if a != me);
    let swap = |u: NodeId, v: NodeId, t: u64| match token.occupant(v, t) {
        Some(a) if a != me => token.occupant(u, t + 1) == Some(a),
        _ => false,
    };
    if blocked(start, t0) {
        return None;
    }

    // Heap entries: (f, Reverse(g) -> prefer deeper, node, time)
    let mut open = BinaryHeap::new();
    let mut parent: HashMap<(NodeId, u64), (NodeId, u64)> = HashMap::new();
    let mut closed: HashSet<(NodeId, u64)> = HashSet::new();
    open.push(Reverse((t0 + field.get(start) as u64, Reverse(t0), start)));
    while let Some(Reverse((_, Reverse(t), v))) = open.pop() {
        if !closed.insert((v, t)) {
            continue;
        }
        if v == goal && t >= earliest_park {
            let mut nodes = vec![v];
            let mut cur = (v, t);
            while let Some(&prev) = parent.get(&cur) {
                nodes.push(prev.0);
                cur = prev;
            }
            nodes.reverse();
            return Some(TimedPath {
                start_time: t0,
                nodes,
            });
        }
        if t >= horizon {
            continue;
        }
        let nt = t + 1;
        let moves = env.neighbors(v).iter().copied().chain(std::iter::once(v));
        for u in moves {
            if closed.contains(&(u, nt)) || blocked(u, nt) || (u != v && swap(v, u, t)) {
                continue;
            }
            let key = (u, nt);
            if let std::collections::hash_map::Entry::Vacant(e) = parent.entry(key) {
                e.insert((v, t));
                open.push(Reverse((nt + field.get(u) as u64, Reverse(nt), u)));
            }
        }
    }
    None
}

/// Nearest pending task (by distance to its pickup, then lowest id) whose
/// endpoints are not in use by other agents.
pub fn select_task_tp(
    world: &World,
    agent: &AgentState,
    tasks: &[Task],
    token: &Token,
) -> Option<TaskId> {
    let busy = token.endpoints(tasks, agent.id);
    tasks
        .iter()
        .filter(|k| k.status == TaskStatus::Pending)
        .filter(|k| !busy.contains(&k.pickup) && !busy.contains(&k.delivery))
        .min_by_key(|k| (world.dist(agent.position, k.pickup), k.id))
        .map(|k| k.id)
}

/// Token Passing planner state.
#[derive(Clone, Debug)]
pub struct TokenPassing {
    token: Token,
}

impl TokenPassing {
    pub fn new(t: u64, agents: &[AgentState]) -> Self {
        let positions: Vec<NodeId> = agents.iter().map(|a| a.position).collect();
        TokenPassing {
            token: Token::new(t, &positions),
        }
    }

    pub fn token(&self) -> &Token {
        &self.token
    }

    /// Lets agents without work take the token (in id order) and plan.
    pub fn assign(
        &mut self,
        t: u64,
        world: &World,
        agents: &mut [AgentState],
        tasks: &mut [Task],
        events: &mut Vec<SimEvent>,
    ) {
        for i in 0..agents.len() {
            let a = &agents[i];
            let path_done = self.token.path(i).end_time() <= t;
            let free = a.task.is_none() && (path_done || a.phase == Phase::Returning);
            if !free {
                continue;
            }
            if let Some(k) = select_task_tp(world, a, tasks, &self.token) {
                if let Some(path) = self.plan_task(world, i, a.position, t, &tasks[k]) {
                    self.token.set_path(i, path);
                    self.token.claims[i] = Some(k);
                    tasks[k].status = TaskStatus::Claimed(i);
                    let a = &mut agents[i];
                    a.task = Some(k);
                    a.phase = Phase::ToPickup;
                    a.destination = Some(tasks[k].pickup);
                    events.push(SimEvent::Assign { agent: i, task: k });
                    continue;
                }
            }
            let a = &mut agents[i];
            if a.position == a.home && path_done {
                continue;
            }
            if path_done && self.token.path(i).last() != a.home {
                if let Some(path) = space_time_astar(
                    world.env(),
                    world.field(a.home),
                    &self.token,
                    i,
                    a.position,
                    t,
                    GoalMode::Park,
                ) {
                    self.token.set_path(i, path);
                }
            }
            a.phase = Phase::Returning;
            a.destination = Some(a.home);
        }
    }

    fn plan_task(
        &self,
        world: &World,
        me: AgentId,
        from: NodeId,
        t: u64,
        task: &Task,
    ) -> Option<TimedPath> {
        let env = world.env();
        let first = space_time_astar(
            env,
            world.field(task.pickup),
            &self.token,
            me,
            from,
            t,
            GoalMode::Pass,
        )?;
        let second = space_time_astar(
            env,
            world.field(task.delivery),
            &self.token,
            me,
            task.pickup,
            first.end_time(),
            GoalMode::Park,
        )?;
        let mut nodes = first.nodes;
        nodes.extend_from_slice(&second.nodes[1..]);
        Some(TimedPath {
            start_time: t,
            nodes,
        })
    }

    /// Marks the claim of `agent` finished once its task is delivered.
    pub fn release(&mut self, agent: AgentId) {
        self.token.claims[agent] = None;
    }

    /// Positions at `t + 1` along the committed paths.
    pub fn advance(&self, t: u64) -> Vec<NodeId> {
        self.token.paths.iter().map(|p| p.at(t + 1)).collect()
    }
}

#[cfg(test)]
mod tests;
