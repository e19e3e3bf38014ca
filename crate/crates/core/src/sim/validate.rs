use serde::Serialize;

use crate::engine::AgentId;
use crate::world::{Environment, NodeId};

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Violation {
    /// Two agents end the step on the same node.
    Vertex {
        a: AgentId,
        b: AgentId,
        node: NodeId,
    },
    /// Two agents traverse the same edge in opposite directions.
    Swap { a: AgentId, b: AgentId },
    /// A move between nodes that are not adjacent.
    Jump {
        agent: AgentId,
        from: NodeId,
        to: NodeId,
    },
}

/// Checks one joint move. Rotations along cycles are allowed.
pub fn validate_transition(now: &[NodeId], next: &[NodeId], env: &Environment) -> Vec<Violation> {
    assert_eq!(
        now.len(),
        next.len(),
        "position vectors cover different agents"
    );
    let mut out = Vec::new();
    for (i, (&u, &v)) in now.iter().zip(next).enumerate() {
        if u != v && !env.are_adjacent(u, v) {
            out.push(Violation::Jump {
                agent: i,
                from: u,
                to: v,
            });
        }
    }
    let mut by_next = vec![None; env.node_count()];
    for (i, &v) in next.iter().enumerate() {
        match by_next[v.index()] {
            Some(j) => out.push(Violation::Vertex {
                a: j,
                b: i,
                node: v,
            }),
            None => by_next[v.index()] = Some(i),
        }
    }
    let mut by_now = vec![None; env.node_count()];
    for (i, &u) in now.iter().enumerate() {
        by_now[u.index()] = Some(i);
    }
    for (i, (&u, &v)) in now.iter().zip(next).enumerate() {
        if u == v {
            continue;
        }
        if let Some(j) = by_now[v.index()] {
            if j > i && next[j] == u {
                out.push(Violation::Swap { a: i, b: j });
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn env() -> Environment {
        Environment::from_rows(&["...", ".@.", "..."]).unwrap()
    }

    fn n(e: &Environment, x: usize, y: usize) -> NodeId {
        e.node_at(x, y).unwrap()
    }

    #[test]
    fn swap_is_reported() {
        let e = env();
        let now = [n(&e, 0, 0), n(&e, 1, 0)];
        let next = [n(&e, 1, 0), n(&e, 0, 0)];
        assert_eq!(
            validate_transition(&now, &next, &e),
            vec![Violation::Swap { a: 0, b: 1 }]
        );
    }

    #[test]
    fn rotation_around_a_cycle_is_fine() {
        let e = env();
        let ring = [
            (0, 0),
            (1, 0),
            (2, 0),
            (2, 1),
            (2, 2),
            (1, 2),
            (0, 2),
            (0, 1),
        ];
        let now: Vec<NodeId> = ring.iter().map(|&(x, y)| n(&e, x, y)).collect();
        let mut next = now.clone();
        next.rotate_left(1);
        assert!(validate_transition(&now, &next, &e).is_empty());
    }

    #[test]
    fn full_block_rotation() {
        // Grids have no triangles; the shortest cycle is a 2x2 block.
        let e = Environment::from_rows(&["..", ".."]).unwrap();
        let now = [n(&e, 0, 0), n(&e, 1, 0), n(&e, 1, 1), n(&e, 0, 1)];
        let next = [n(&e, 1, 0), n(&e, 1, 1), n(&e, 0, 1), n(&e, 0, 0)];
        assert!(validate_transition(&now, &next, &e).is_empty());
    }

    #[test]
    fn jump_and_vertex() {
        let e = env();
        let now = [n(&e, 0, 0), n(&e, 2, 0)];
        let next = [n(&e, 2, 0), n(&e, 2, 0)];
        let v = validate_transition(&now, &next, &e);
        assert!(v.contains(&Violation::Jump {
            agent: 0,
            from: n(&e, 0, 0),
            to: n(&e, 2, 0)
        }));
        assert!(v.contains(&Violation::Vertex {
            a: 0,
            b: 1,
            node: n(&e, 2, 0)
        }));
    }

    #[test]
    fn following_is_fine() {
        let e = env();
        let now = [n(&e, 0, 0), n(&e, 1, 0)];
        let next = [n(&e, 1, 0), n(&e, 2, 0)];
        assert!(validate_transition(&now, &next, &e).is_empty());
    }
}
