use std::io::{self, Write};

use serde::Serialize;

use crate::engine::{AgentId, EngineEvent, Phase, TaskId};
use crate::world::{Environment, NodeId};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SimEvent {
    Assign {
        agent: AgentId,
        task: TaskId,
    },
    Pickup {
        agent: AgentId,
        task: TaskId,
    },
    Delivery {
        agent: AgentId,
        task: TaskId,
    },
    Reserve {
        agent: AgentId,
        x: u32,
        y: u32,
        #[serde(skip)]
        node: NodeId,
    },
    Revert {
        agent: AgentId,
        x: u32,
        y: u32,
        #[serde(skip)]
        node: NodeId,
    },
}

impl SimEvent {
    pub fn from_engine(e: EngineEvent, env: &Environment) -> Self {
        match e {
            EngineEvent::Reserve { agent, node } => {
                let (x, y) = env.coord(node);
                SimEvent::Reserve { agent, x, y, node }
            }
            EngineEvent::Revert { agent, node } => {
                let (x, y) = env.coord(node);
                SimEvent::Revert { agent, x, y, node }
            }
        }
    }

    /// Task lifecycle events count as progress.
    pub fn is_progress(&self) -> bool {
        matches!(
            self,
            SimEvent::Assign { .. } | SimEvent::Pickup { .. } | SimEvent::Delivery { .. }
        )
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AgentRecord {
    pub id: AgentId,
    pub x: u32,
    pub y: u32,
    /// Priority at the start of the step; absent for token passing.
    pub p: Option<f64>,
    pub tas: bool,
    pub task: Option<TaskId>,
    #[serde(skip)]
    pub node: NodeId,
    #[serde(skip)]
    pub goal: NodeId,
    #[serde(skip)]
    pub phase: Phase,
}

/// State at the start of timestep `t`, after task bookkeeping and before
/// the move to `t + 1`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TraceRecord {
    pub t: u64,
    pub agents: Vec<AgentRecord>,
    pub events: Vec<SimEvent>,
}

/// Writes one JSON object per line.
pub fn write_jsonl<W: Write>(trace: &[TraceRecord], mut out: W) -> io::Result<()> {
    for rec in trace {
        serde_json::to_writer(&mut out, rec)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

pub fn to_jsonl(trace: &[TraceRecord]) -> String {
    let mut buf = Vec::new();
    write_jsonl(trace, &mut buf).expect("writing to memory");
    String::from_utf8(buf).expect("json is utf-8")
}
