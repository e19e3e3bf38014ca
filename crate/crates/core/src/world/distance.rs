use std::collections::VecDeque;

use super::{Environment, NodeId, WorldError};

pub const UNREACHABLE: u32 = u32::MAX;

/// Hop distances from every node to a fixed goal.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DistanceField {
    goal: NodeId,
    dist: Vec<u32>,
}

impl DistanceField {
    pub fn goal(&self) -> NodeId {
        self.goal
    }

    #[inline]
    pub fn get(&self, v: NodeId) -> u32 {
        self.dist[v.index()]
    }

    pub fn as_slice(&self) -> &[u32] {
        &self.dist
    }

    /// Largest finite distance in the field.
    pub fn max_finite(&self) -> u32 {
        self.dist
            .iter()
            .copied()
            .filter(|&d| d != UNREACHABLE)
            .max()
            .unwrap_or(0)
    }
}

/// Breadth-first distances to `goal` over the whole graph.
pub fn distance_field(env: &Environment, goal: NodeId) -> Result<DistanceField, WorldError> {
    if !env.contains(goal) {
        return Err(WorldError::UnknownNode(goal));
    }
    let mut dist = vec![UNREACHABLE; env.node_count()];
    let mut queue = VecDeque::new();
    dist[goal.index()] = 0;
    queue.push_back(goal);
    while let Some(v) = queue.pop_front() {
        let next = dist[v.index()] + 1;
        for &u in env.neighbors(v) {
            if dist[u.index()] == UNREACHABLE {
                dist[u.index()] = next;
                queue.push_back(u);
            }
        }
    }
    Ok(DistanceField { goal, dist })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::rng::SeedStream;
    use crate::world::generate::random_grid;
    use proptest::prelude::*;

    fn corridor_with_room() -> Environment {
        Environment::from_rows(&["....", ".@..", "...."]).unwrap()
    }

    #[test]
    fn goal_is_zero_and_neighbours_one() {
        let env = corridor_with_room();
        for goal in env.nodes() {
            let f = distance_field(&env, goal).unwrap();
            assert_eq!(f.get(goal), 0);
            for &u in env.neighbors(goal) {
                assert_eq!(f.get(u), 1);
            }
        }
    }

    #[test]
    fn unknown_goal() {
        let env = corridor_with_room();
        assert_eq!(
            distance_field(&env, NodeId(99)).unwrap_err(),
            WorldError::UnknownNode(NodeId(99))
        );
    }

    fn floyd_warshall(env: &Environment) -> Vec<Vec<u32>> {
        let n = env.node_count();
        let inf = u32::MAX / 4;
        let mut d = vec![vec![inf; n]; n];
        for v in env.nodes() {
            d[v.index()][v.index()] = 0;
            for &u in env.neighbors(v) {
                d[v.index()][u.index()] = 1;
            }
        }
        for k in 0..n {
            for i in 0..n {
                for j in 0..n {
                    let via = d[i][k] + d[k][j];
                    if via < d[i][j] {
                        d[i][j] = via;
                    }
                }
            }
        }
        d
    }

    #[test]
    fn matches_all_pairs_oracle_on_random_maps() {
        for seed in 0..10u64 {
            let mut rng = SeedStream::new(seed, 100);
            let env = random_grid(&mut rng, 8, 8, 0.25);
            let oracle = floyd_warshall(&env);
            for goal in env.nodes() {
                let f = distance_field(&env, goal).unwrap();
                for v in env.nodes() {
                    assert_eq!(f.get(v), oracle[v.index()][goal.index()], "seed {seed}");
                }
            }
        }
    }

    proptest! {
        #[test]
        fn edge_triangle_property(seed in any::<u64>(), density in 0.0f64..0.35) {
            let mut rng = SeedStream::new(seed, 100);
            let env = random_grid(&mut rng, 7, 6, density);
            for goal in env.nodes() {
                let f = distance_field(&env, goal).unwrap();
                for v in env.nodes() {
                    for &u in env.neighbors(v) {
                        prop_assert!(f.get(v).abs_diff(f.get(u)) <= 1);
                    }
                }
            }
        }
    }
}
