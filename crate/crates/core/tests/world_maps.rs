use std::collections::{HashSet, VecDeque};

use mapd_core::maps;
use mapd_core::world::{Environment, NodeId, World, WorldError};

// name, nodes, edges, main, trees, pickups, deliveries, parking
const SHIPPED: [(&str, usize, usize, usize, usize, usize, usize, usize); 4] = [
    ("env1", 256, 388, 160, 2, 16, 16, 40),
    ("env2", 224, 356, 160, 2, 12, 5, 40),
    ("env3", 272, 418, 176, 6, 16, 16, 40),
    ("env4", 229, 303, 148, 5, 32, 7, 40),
];

fn connected(nodes: &HashSet<NodeId>, env: &Environment) -> bool {
    let Some(&start) = nodes.iter().next() else {
        return true;
    };
    let mut seen = HashSet::from([start]);
    let mut queue = VecDeque::from([start]);
    while let Some(u) = queue.pop_front() {
        for &v in env.neighbors(u) {
            if nodes.contains(&v) && seen.insert(v) {
                queue.push_back(v);
            }
        }
    }
    seen.len() == nodes.len()
}

#[test]
fn shipped_map_counts() {
    for (name, nodes, edges, main, trees, p, d, parking) in SHIPPED {
        let world = World::new(maps::builtin(name).unwrap()).unwrap();
        let env = world.env();
        let dec = world.decomposition();
        let got = (
            env.node_count(),
            env.edge_count(),
            dec.main_nodes().len(),
            dec.tree_count(),
            env.pickup_nodes().len(),
            env.delivery_nodes().len(),
            env.parking_nodes().len(),
        );
        assert_eq!(got, (nodes, edges, main, trees, p, d, parking), "{name}");
    }
}

#[test]
fn shipped_main_areas_survive_any_single_deletion() {
    for (name, ..) in SHIPPED {
        let world = World::new(maps::builtin(name).unwrap()).unwrap();
        let main: HashSet<NodeId> = world.decomposition().main_nodes().iter().copied().collect();
        assert!(connected(&main, world.env()), "{name}");
        for &v in &main {
            let mut rest = main.clone();
            rest.remove(&v);
            assert!(
                connected(&rest, world.env()),
                "{name}: {:?}",
                world.env().coord(v)
            );
        }
    }
}

#[test]
fn parking_is_in_main_and_trees_hang_off_it() {
    for (name, ..) in SHIPPED {
        let world = World::new(maps::builtin(name).unwrap()).unwrap();
        let dec = world.decomposition();
        for &v in world.env().parking_nodes() {
            assert!(
                dec.is_main(v),
                "{name}: parking {:?} outside the main area",
                world.env().coord(v)
            );
        }
        for t in dec.trees() {
            assert!(dec.is_main(t.connecting), "{name}: tree {}", t.id);
            assert!(
                t.proper.iter().all(|&v| dec.tree_of(v) == Some(t.id)),
                "{name}: tree {}",
                t.id
            );
        }
    }
}

#[test]
fn map_text_round_trips() {
    for name in maps::builtin_names() {
        let env = maps::builtin(name).unwrap();
        let again = mapd_core::world::parse_map(&env.to_map_text()).unwrap();
        assert_eq!(env.to_map_text(), again.to_map_text(), "{name}");
    }
}

#[test]
fn cycle_with_a_pinch_point_is_rejected() {
    let env = Environment::from_rows(&["...@..", "......", "...@.."]).unwrap();
    assert!(matches!(
        World::new(env),
        Err(WorldError::NotBiconnected { .. })
    ));
}
