//! Trace post-processing checks.

use std::fmt;

use super::TraceRecord;
use crate::engine::AgentId;
use crate::world::World;

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum AuditFinding {
    /// An agent with temporary priority inside a tree never got out of it
    /// nor reached its destination there before the trace ended.
    StuckInTree { agent: AgentId, since: u64 },
    /// An agent with temporary priority moved further from its goal.
    Regressed { agent: AgentId, t: u64 },
    /// An agent in a tree stepped off its allowed path.
    OffPath { agent: AgentId, t: u64 },
    /// An agent entered a tree that does not hold its goal.
    WrongTree { agent: AgentId, t: u64 },
}

impl fmt::Display for AuditFinding {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            AuditFinding::StuckInTree { agent, since } => {
                write!(f, "agent {agent} has temporary priority in a tree from t={since} and never leaves")
            }
            AuditFinding::Regressed { agent, t } => {
                write!(f, "agent {agent} moves away from its goal at t={t}")
            }
            AuditFinding::OffPath { agent, t } => {
                write!(f, "agent {agent} steps off its tree path at t={t}")
            }
            AuditFinding::WrongTree { agent, t } => {
                write!(f, "agent {agent} enters a foreign tree at t={t}")
            }
        }
    }
}

/// Every agent that holds temporary priority (p > 1) inside a tree must later
/// reach the main area or its destination inside the tree. With
/// `monotone`, the distance to the goal must also never grow while the
/// agent holds temporary priority.
pub fn push_back_findings(
    world: &World,
    trace: &[TraceRecord],
    monotone: bool,
) -> Vec<AuditFinding> {
    let d = world.decomposition();
    let n = trace.first().map_or(0, |r| r.agents.len());
    let mut out = Vec::new();
    for agent in 0..n {
        let mut open: Option<u64> = None;
        for (i, rec) in trace.iter().enumerate() {
            let a = &rec.agents[agent];
            if open.is_some() && (d.is_main(a.node) || a.node == a.goal) {
                open = None;
            }
            let temporary = a.p.is_some_and(|p| p > 1.0) && d.tree_of(a.node).is_some();
            if temporary {
                open.get_or_insert(rec.t);
                if monotone {
                    if let Some(next) = trace.get(i + 1) {
                        let b = &next.agents[agent];
                        if world.dist(b.node, a.goal) > world.dist(a.node, a.goal) {
                            out.push(AuditFinding::Regressed { agent, t: rec.t });
                        }
                    }
                }
            }
        }
        if let Some(since) = open {
            out.push(AuditFinding::StuckInTree { agent, since });
        }
    }
    out
}

/// Region discipline: agents never enter a tree that does not hold their
/// goal and, with `path_only`, agents in a tree only move along their
/// allowed path towards the goal.
pub fn region_findings(world: &World, trace: &[TraceRecord], path_only: bool) -> Vec<AuditFinding> {
    let d = world.decomposition();
    let mut out = Vec::new();
    for w in trace.windows(2) {
        for (a, b) in w[0].agents.iter().zip(&w[1].agents) {
            let (u, v) = (a.node, b.node);
            if u == v {
                continue;
            }
            if d.is_main(u) {
                if let Some(k) = d.tree_of(v) {
                    if d.tree_of(a.goal) != Some(k) {
                        out.push(AuditFinding::WrongTree {
                            agent: a.id,
                            t: w[0].t,
                        });
                    }
                }
            } else if path_only && !d.in_k(u, a.goal, v) {
                out.push(AuditFinding::OffPath {
                    agent: a.id,
                    t: w[0].t,
                });
            }
        }
    }
    out
}
