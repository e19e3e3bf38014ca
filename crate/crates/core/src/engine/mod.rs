//! PIBT-family one-step planner.
//!
//! Each timestep agents are ordered by priority and the highest undecided one
//! runs priority inheritance with backtracking: it claims its best candidate
//! node, pushing (and lending its priority to) whoever stands there, and the
//! pushed agent either finds somewhere to go or reports failure so the pusher
//! tries its next candidate.
//!
//! [`Policy::Pibttp`] adds temporary priorities and region filters so agents
//! never get stuck in dead-end trees; [`Policy::PibttpTa`] further lets pushed
//! agents dodge into side branches while holding a reservation on the path
//! node they must return to.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::world::{NodeId, World};

pub type AgentId = usize;
pub type TaskId = usize;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Policy {
    NaivePibt,
    Pibttp,
    PibttpTa,
}

impl Policy {
    pub fn name(self) -> &'static str {
        match self {
            Policy::NaivePibt => "pibt",
            Policy::Pibttp => "pibttp",
            Policy::PibttpTa => "pibttp-ta",
        }
    }
}

impl fmt::Display for Policy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
#[error("unknown planner policy `{0}`")]
pub struct UnknownPolicy(pub String);

impl FromStr for Policy {
    type Err = UnknownPolicy;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "pibt" => Ok(Policy::NaivePibt),
            "pibttp" => Ok(Policy::Pibttp),
            "pibttp-ta" => Ok(Policy::PibttpTa),
            other => Err(UnknownPolicy(other.to_string())),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Phase {
    /// Parked at home with nothing to do.
    Idle,
    ToPickup,
    ToDelivery,
    /// Heading home because no task is left to take.
    Returning,
    /// Leaving a tree before taking a task there is no other choice for.
    Exiting,
}

impl Phase {
    pub fn code(self) -> u8 {
        match self {
            Phase::Idle => 0,
            Phase::ToPickup => 1,
            Phase::ToDelivery => 2,
            Phase::Returning => 3,
            Phase::Exiting => 4,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct AgentState {
    pub id: AgentId,
    pub position: NodeId,
    /// Parking node the agent starts on and returns to.
    pub home: NodeId,
    pub epsilon: f64,
    pub priority: f64,
    /// `None` exactly when the agent is idle at home.
    pub destination: Option<NodeId>,
    pub task: Option<TaskId>,
    pub phase: Phase,
    pub tas: bool,
    pub reserved_node: Option<NodeId>,
    tas_goal: Option<NodeId>,
}

impl AgentState {
    pub fn new(id: AgentId, home: NodeId, epsilon: f64) -> Self {
        AgentState {
            id,
            position: home,
            home,
            epsilon,
            priority: epsilon,
            destination: None,
            task: None,
            phase: Phase::Idle,
            tas: false,
            reserved_node: None,
            tas_goal: None,
        }
    }

    /// Node the agent is heading for; idle agents hold their home node.
    pub fn goal(&self) -> NodeId {
        self.destination.unwrap_or(self.home)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum EngineEvent {
    Reserve { agent: AgentId, node: NodeId },
    Revert { agent: AgentId, node: NodeId },
}

/// Per-step planner state.
#[derive(Clone, Debug)]
pub struct StepContext {
    pub t: u64,
    undecided: Vec<bool>,
    claimed: Vec<bool>,
    reserved: Vec<u32>,
    tas_nodes: Vec<bool>,
    next: Vec<Option<NodeId>>,
    occupant: Vec<Option<AgentId>>,
    pub events: Vec<EngineEvent>,
    pub expibt_calls: usize,
}

impl StepContext {
    pub fn new(t: u64, world: &World, agents: &[AgentState]) -> Self {
        let v = world.env().node_count();
        let mut ctx = StepContext {
            t,
            undecided: vec![true; agents.len()],
            claimed: vec![false; v],
            reserved: vec![0; v],
            tas_nodes: vec![false; v],
            next: vec![None; agents.len()],
            occupant: vec![None; v],
            events: Vec::new(),
            expibt_calls: 0,
        };
        for a in agents {
            ctx.occupant[a.position.index()] = Some(a.id);
            if a.tas {
                ctx.tas_nodes[a.position.index()] = true;
                if let Some(r) = a.reserved_node {
                    ctx.reserved[r.index()] += 1;
                }
            }
        }
        ctx
    }

    pub fn is_claimed(&self, v: NodeId) -> bool {
        self.claimed[v.index()]
    }

    pub fn is_reserved(&self, v: NodeId) -> bool {
        self.reserved[v.index()] > 0
    }

    pub fn reservers(&self, v: NodeId) -> u32 {
        self.reserved[v.index()]
    }

    pub fn is_tas_node(&self, v: NodeId) -> bool {
        self.tas_nodes[v.index()]
    }

    pub fn next_of(&self, a: AgentId) -> Option<NodeId> {
        self.next[a]
    }

    /// Claims `v` for agent `a` directly (used by tests to set up scenarios).
    pub fn claim(&mut self, v: NodeId) {
        self.claimed[v.index()] = true;
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum EngineError {
    #[error("agents {a} and {b} share epsilon value {eps}")]
    DuplicateEpsilon { a: AgentId, b: AgentId, eps: f64 },
    #[error("agent {agent}: epsilon {eps} is outside (0, 1)")]
    EpsilonRange { agent: AgentId, eps: f64 },
    #[error("agent {agent} has a destination but phase {phase:?}")]
    PhaseMismatch { agent: AgentId, phase: Phase },
}

/// Checks the agent invariants the planner relies on.
pub fn check_agents(agents: &[AgentState]) -> Result<(), EngineError> {
    for a in agents {
        if !(a.epsilon > 0.0 && a.epsilon < 1.0) {
            return Err(EngineError::EpsilonRange {
                agent: a.id,
                eps: a.epsilon,
            });
        }
        if a.destination.is_none() != (a.phase == Phase::Idle) {
            return Err(EngineError::PhaseMismatch {
                agent: a.id,
                phase: a.phase,
            });
        }
    }
    let mut eps: Vec<(f64, AgentId)> = agents.iter().map(|a| (a.epsilon, a.id)).collect();
    eps.sort_by(|x, y| x.0.total_cmp(&y.0));
    for w in eps.windows(2) {
        if w[0].0 == w[1].0 {
            return Err(EngineError::DuplicateEpsilon {
                a: w[0].1,
                b: w[1].1,
                eps: w[0].0,
            });
        }
    }
    Ok(())
}

/// Whether the agent stands on a proper node of the tree that holds its goal.
fn in_goal_tree(world: &World, a: &AgentState) -> bool {
    let d = world.decomposition();
    matches!((d.tree_of(a.position), d.tree_of(a.goal())), (Some(x), Some(y)) if x == y)
}

/// Recomputes every agent's priority for the coming step.
///
/// Agents without a task head for their parking node and rank below every
/// agent with a task; parked agents rank below returning ones. Otherwise an
/// agent sitting on its goal could never be pushed aside.
pub fn compute_priorities(agents: &mut [AgentState], world: &World, policy: Policy) {
    let d = world.decomposition();
    let floor = world.env().node_count() as f64;
    for a in agents.iter_mut() {
        let mut normal = -(world.dist(a.position, a.goal()) as f64) + a.epsilon;
        match a.phase {
            Phase::Returning => normal -= floor,
            Phase::Idle => normal -= 2.0 * floor,
            _ => {}
        }
        a.priority = match policy {
            Policy::NaivePibt => normal,
            Policy::Pibttp | Policy::PibttpTa => {
                let in_tree = d.tree_of(a.position).is_some();
                if in_tree && !in_goal_tree(world, a) {
                    1.0 + a.epsilon
                } else if policy == Policy::PibttpTa && a.tas && in_goal_tree(world, a) {
                    a.epsilon
                } else {
                    normal
                }
            }
        };
    }
}

/// Drops TAS state that no longer fits the agent (new goal, or out of the
/// goal's tree) before a step begins.
pub fn sanitize_tas(agents: &mut [AgentState], world: &World, events: &mut Vec<EngineEvent>) {
    for a in agents.iter_mut() {
        if a.tas && (a.tas_goal != a.destination || !in_goal_tree(world, a)) {
            let node = a
                .reserved_node
                .take()
                .expect("TAS agent holds a reservation");
            a.tas = false;
            a.tas_goal = None;
            events.push(EngineEvent::Revert { agent: a.id, node });
        }
    }
}

/// Ordered candidate nodes for `agent`, best first.
pub fn candidate_set(
    agent: &AgentState,
    pusher: Option<&AgentState>,
    ctx: &StepContext,
    world: &World,
    policy: Policy,
) -> Vec<NodeId> {
    let env = world.env();
    let d = world.decomposition();
    let here = agent.position;
    let goal = agent.goal();
    let goal_tree = d.tree_of(goal);
    let mut c: Vec<NodeId> = env.neighbors(here).to_vec();
    c.push(here);
    c.retain(|&v| !ctx.is_claimed(v) && Some(v) != pusher.map(|p| p.position));
    let in_tree = d.tree_of(here).is_some();
    match policy {
        Policy::NaivePibt => {}
        Policy::Pibttp | Policy::PibttpTa if !in_tree => {
            c.retain(|&v| d.is_main(v) || (goal_tree.is_some() && d.tree_of(v) == goal_tree));
        }
        Policy::PibttpTa if pusher.is_some() => {
            // Reservations never block the way back to the main area, or an
            // agent pushed out by a temporary-priority agent could be stuck.
            let out = d.toward_connecting(here);
            c.retain(|&v| Some(v) == out || (!ctx.is_reserved(v) && !ctx.is_tas_node(v)));
        }
        Policy::Pibttp | Policy::PibttpTa => {
            c.retain(|&v| d.in_k(here, goal, v));
        }
    }
    let field = world.field(goal);
    // Pushed agents inside their goal tree prefer ducking into a side branch
    // over being driven back along the trunk.
    let dodge = policy == Policy::PibttpTa && pusher.is_some() && in_goal_tree(world, agent);
    c.sort_by_key(|&v| {
        let trunk = dodge && d.on_trunk(goal, v);
        (field.get(v), trunk, v)
    });
    c
}

struct Frame {
    agent: AgentId,
    candidates: Vec<NodeId>,
    cursor: usize,
    trying: Option<NodeId>,
}

/// Plans one timestep for all agents and returns their next positions.
///
/// `agents` must carry priorities from [`compute_priorities`]. TAS state
/// (PIBTTP-TA) is updated in place and reported through `ctx.events`.
pub fn plan_step(
    agents: &mut [AgentState],
    ctx: &mut StepContext,
    world: &World,
    policy: Policy,
) -> Vec<NodeId> {
    let mut order: Vec<AgentId> = (0..agents.len()).collect();
    order.sort_by(|&a, &b| {
        agents[b]
            .priority
            .total_cmp(&agents[a].priority)
            .then(a.cmp(&b))
    });
    for root in order {
        if ctx.undecided[root] {
            ex_pibt(root, agents, ctx, world, policy);
        }
    }
    ctx.next
        .iter()
        .map(|v| v.expect("every agent decided"))
        .collect()
}

/// Priority inheritance with backtracking from `root`, without a pusher.
/// Returns whether `root` found a node to move to (or stay on) validly.
pub fn ex_pibt(
    root: AgentId,
    agents: &mut [AgentState],
    ctx: &mut StepContext,
    world: &World,
    policy: Policy,
) -> bool {
    let mut stack: Vec<Frame> = Vec::new();
    let open_frame = |agent: AgentId,
                      pusher: Option<AgentId>,
                      agents: &mut [AgentState],
                      ctx: &mut StepContext| {
        ctx.undecided[agent] = false;
        ctx.expibt_calls += 1;
        if let Some(p) = pusher {
            agents[agent].priority = agents[p].priority;
        }
        let candidates = candidate_set(
            &agents[agent],
            pusher.map(|p| &agents[p]),
            ctx,
            world,
            policy,
        );
        Frame {
            agent,
            candidates,
            cursor: 0,
            trying: None,
        }
    };
    stack.push(open_frame(root, None, agents, ctx));
    let mut child_result: Option<bool> = None;
    loop {
        let frame = stack.last_mut().expect("non-empty stack");
        let a = frame.agent;
        if let Some(ok) = child_result.take() {
            let v = frame.trying.take().expect("pending push");
            if ok {
                ctx.next[a] = Some(v);
                stack.pop();
                if stack.is_empty() {
                    return true;
                }
                child_result = Some(true);
                continue;
            }
        }
        let mut chosen = None;
        while frame.cursor < frame.candidates.len() {
            let v = frame.candidates[frame.cursor];
            frame.cursor += 1;
            if !ctx.is_claimed(v) {
                chosen = Some(v);
                break;
            }
        }
        let Some(v) = chosen else {
            // Nowhere to go: stay and tell the pusher.
            let here = agents[a].position;
            ctx.next[a] = Some(here);
            ctx.claimed[here.index()] = true;
            stack.pop();
            if stack.is_empty() {
                return false;
            }
            child_result = Some(false);
            continue;
        };
        ctx.claimed[v.index()] = true;
        match ctx.occupant[v.index()] {
            Some(k) if k != a && ctx.undecided[k] => {
                frame.trying = Some(v);
                let child = open_frame(k, Some(a), agents, ctx);
                assert!(
                    stack.len() < agents.len(),
                    "push chain longer than the agent count"
                );
                stack.push(child);
            }
            _ => {
                ctx.next[a] = Some(v);
                if policy == Policy::PibttpTa {
                    tas_transition(&mut agents[a], v, ctx, world);
                }
                stack.pop();
                if stack.is_empty() {
                    return true;
                }
                child_result = Some(true);
            }
        }
    }
}

/// Enters, keeps or leaves the temporary avoiding state after `agent`
/// committed to `next` on a free node.
pub fn tas_transition(agent: &mut AgentState, next: NodeId, ctx: &mut StepContext, world: &World) {
    let d = world.decomposition();
    let goal = agent.goal();
    if in_goal_tree(world, agent) && !d.on_trunk(goal, next) {
        if !agent.tas {
            let field = world.field(goal);
            let here = agent.position;
            // Pushed off its own goal, the agent must come back to it.
            let ahead = world
                .env()
                .neighbors(here)
                .iter()
                .copied()
                .filter(|&u| field.get(u) + 1 == field.get(here))
                .min()
                .unwrap_or(here);
            agent.tas = true;
            agent.tas_goal = agent.destination;
            agent.reserved_node = Some(ahead);
            ctx.reserved[ahead.index()] += 1;
            ctx.events.push(EngineEvent::Reserve {
                agent: agent.id,
                node: ahead,
            });
        } else {
            ctx.tas_nodes[agent.position.index()] = false;
        }
        ctx.tas_nodes[next.index()] = true;
    } else if agent.tas {
        let node = agent
            .reserved_node
            .take()
            .expect("TAS agent holds a reservation");
        agent.tas = false;
        agent.tas_goal = None;
        ctx.tas_nodes[agent.position.index()] = false;
        ctx.reserved[node.index()] -= 1;
        ctx.events.push(EngineEvent::Revert {
            agent: agent.id,
            node,
        });
    }
}
