use super::*;
use crate::sim::rng::SeedStream;
use crate::sim::{generate_tasks, Algorithm, RunOptions, Simulation};
use crate::world::distance_field;

// Three dead-ends on each side of a ring-shaped main area.
const COMB: [&str; 6] = ["p@p@p", ".@.@.", "i...i", "i.@.i", "i...i", "d@d@d"];

fn world(rows: &[&str]) -> World {
    World::new(Environment::from_rows(rows).unwrap()).unwrap()
}

fn at(env: &Environment, x: usize, y: usize) -> NodeId {
    env.node_at(x, y).unwrap()
}

fn corridor(len: usize) -> Environment {
    Environment::from_rows(&[".".repeat(len)]).unwrap()
}

fn path(t: u64, env: &Environment, xs: &[(usize, usize)]) -> TimedPath {
    TimedPath {
        start_time: t,
        nodes: xs.iter().map(|&(x, y)| at(env, x, y)).collect(),
    }
}

#[test]
fn timed_path_holds_its_last_node() {
    let env = corridor(4);
    let p = path(3, &env, &[(0, 0), (1, 0), (2, 0)]);
    assert_eq!(p.end_time(), 5);
    assert_eq!(p.at(3), at(&env, 0, 0));
    assert_eq!(p.at(5), at(&env, 2, 0));
    assert_eq!(p.at(50), at(&env, 2, 0));
}

#[test]
fn astar_without_reservations_is_bfs() {
    let w = world(&COMB);
    let env = w.env();
    let token = Token::new(7, &[at(env, 0, 2)]);
    for goal in env.nodes() {
        for mode in [GoalMode::Pass, GoalMode::Park] {
            let p =
                space_time_astar(env, w.field(goal), &token, 0, at(env, 0, 2), 7, mode).unwrap();
            assert_eq!(p.arrival_time(), 7 + u64::from(w.dist(at(env, 0, 2), goal)));
            assert_eq!(p.last(), goal);
        }
    }
}

#[test]
fn astar_from_the_goal_is_a_single_node() {
    let env = corridor(5);
    let v = at(&env, 2, 0);
    let token = Token::new(0, &[v]);
    let field = distance_field(&env, v).unwrap();
    let p = space_time_astar(&env, &field, &token, 0, v, 4, GoalMode::Pass).unwrap();
    assert_eq!(p, TimedPath::stay(4, v));
}

#[test]
fn parked_agent_on_a_corridor_blocks_everything_behind_it() {
    let env = corridor(5);
    let token = Token::new(0, &[at(&env, 0, 0), at(&env, 2, 0)]);
    let field = distance_field(&env, at(&env, 4, 0)).unwrap();
    for mode in [GoalMode::Pass, GoalMode::Park] {
        assert_eq!(
            space_time_astar(&env, &field, &token, 0, at(&env, 0, 0), 0, mode),
            None
        );
    }
    // Parking on a node another agent is parked on is never possible either.
    let field = distance_field(&env, at(&env, 2, 0)).unwrap();
    assert_eq!(
        space_time_astar(&env, &field, &token, 0, at(&env, 0, 0), 0, GoalMode::Park),
        None
    );
}

#[test]
fn parking_waits_for_the_last_passer() {
    // Agent 1 walks across x=3 at t=5; agent 0 may park there only after.
    let env = corridor(6);
    let mut token = Token::new(0, &[at(&env, 0, 0), at(&env, 5, 0)]);
    token.set_path(
        1,
        path(
            0,
            &env,
            &[
                (5, 0),
                (5, 0),
                (5, 0),
                (5, 0),
                (4, 0),
                (3, 0),
                (4, 0),
                (5, 0),
            ],
        ),
    );
    let field = distance_field(&env, at(&env, 2, 0)).unwrap();
    let pass =
        space_time_astar(&env, &field, &token, 0, at(&env, 0, 0), 0, GoalMode::Pass).unwrap();
    assert_eq!(pass.arrival_time(), 2);
    let field = distance_field(&env, at(&env, 3, 0)).unwrap();
    let park =
        space_time_astar(&env, &field, &token, 0, at(&env, 0, 0), 0, GoalMode::Park).unwrap();
    assert_eq!(park.arrival_time(), 6);
}

/// Earliest arrival by breadth-first search over the time-expanded graph,
/// using nothing but the other agents' paths.
fn brute_force_arrival(
    env: &Environment,
    others: &[TimedPath],
    start: NodeId,
    goal: NodeId,
    t0: u64,
    mode: GoalMode,
) -> Option<u64> {
    let horizon = t0 + 4 * env.node_count() as u64;
    let last_end = others.iter().map(TimedPath::end_time).max().unwrap_or(0);
    let occupied = |v: NodeId, t: u64| others.iter().any(|p| p.at(t) == v);
    let swapped =
        |u: NodeId, v: NodeId, t: u64| others.iter().any(|p| p.at(t) == v && p.at(t + 1) == u);
    let goal_free_from = |t: u64| (t..=last_end.max(t) + 1).all(|s| !occupied(goal, s));
    if occupied(start, t0) {
        return None;
    }
    let mut layer: HashSet<NodeId> = HashSet::from([start]);
    for t in t0..=horizon {
        if layer.contains(&goal) && (mode == GoalMode::Pass || goal_free_from(t)) {
            return Some(t);
        }
        let mut next = HashSet::new();
        for &u in &layer {
            for &v in env.neighbors(u).iter().chain(std::iter::once(&u)) {
                if !occupied(v, t + 1) && (u == v || !swapped(u, v, t)) {
                    next.insert(v);
                }
            }
        }
        layer = next;
    }
    None
}

fn conflict_free(paths: &[TimedPath], until: u64) -> bool {
    for t in 0..=until {
        for (i, a) in paths.iter().enumerate() {
            for b in &paths[i + 1..] {
                if a.at(t) == b.at(t)
                    || (a.at(t) == b.at(t + 1) && a.at(t + 1) == b.at(t) && a.at(t) != a.at(t + 1))
                {
                    return false;
                }
            }
        }
    }
    true
}

#[test]
fn astar_matches_time_expanded_brute_force_on_corridors() {
    let mut rng = SeedStream::new(77, 200);
    let mut solved = 0;
    for case in 0..20 {
        // A corridor, optionally with a one-cell pocket below it.
        let len = 5 + rng.index(5);
        let mut rows = vec![".".repeat(len)];
        if case % 2 == 1 {
            let pocket = 1 + rng.index(len - 2);
            rows.push(
                (0..len)
                    .map(|x| if x == pocket { '.' } else { '@' })
                    .collect(),
            );
        }
        let env = Environment::from_rows(&rows).unwrap();
        let nodes: Vec<NodeId> = env.nodes().collect();

        let others_n = 1 + rng.index(2);
        let mut others: Vec<TimedPath> = Vec::new();
        while others.len() < others_n {
            let mut v = nodes[rng.index(nodes.len())];
            let mut p = vec![v];
            for _ in 0..rng.index(7) {
                let nb = env.neighbors(v);
                if rng.chance(0.7) {
                    v = nb[rng.index(nb.len())];
                }
                p.push(v);
            }
            let mut cand = others.clone();
            cand.push(TimedPath {
                start_time: 0,
                nodes: p,
            });
            if conflict_free(&cand, 20) {
                others = cand;
            }
        }
        let free: Vec<NodeId> = nodes
            .iter()
            .copied()
            .filter(|&v| others.iter().all(|p| p.at(0) != v))
            .collect();
        let start = free[rng.index(free.len())];
        let goal = nodes[rng.index(nodes.len())];
        let mode = if rng.chance(0.5) {
            GoalMode::Pass
        } else {
            GoalMode::Park
        };

        let mut positions = vec![start];
        positions.extend(others.iter().map(|p| p.nodes[0]));
        let mut token = Token::new(0, &positions);
        for (i, p) in others.iter().enumerate() {
            token.set_path(i + 1, p.clone());
        }
        let field = distance_field(&env, goal).unwrap();
        let got = space_time_astar(&env, &field, &token, 0, start, 0, mode);
        let want = brute_force_arrival(&env, &others, start, goal, 0, mode);
        assert_eq!(
            got.as_ref().map(TimedPath::arrival_time),
            want,
            "case {case}: {rows:?} {others:?} {mode:?}"
        );
        if let Some(p) = got {
            solved += 1;
            let mut all = others.clone();
            all.push(p.clone());
            assert!(conflict_free(&all, p.end_time() + 10), "case {case}");
            assert!(p
                .nodes
                .windows(2)
                .all(|w| w[0] == w[1] || env.are_adjacent(w[0], w[1])));
        }
    }
    assert!(
        solved >= 5,
        "too few solvable instances ({solved}) to be meaningful"
    );
}

#[test]
fn token_check_finds_conflicts() {
    let env = corridor(4);
    let mut token = Token::new(0, &[at(&env, 0, 0), at(&env, 3, 0)]);
    token.check(&env, 0).unwrap();
    token.set_path(0, path(0, &env, &[(0, 0), (1, 0), (2, 0)]));
    token.set_path(1, path(0, &env, &[(3, 0), (3, 0), (2, 0)]));
    assert!(matches!(
        token.check(&env, 0),
        Err(TpError::VertexConflict {
            a: 0,
            b: 1,
            t: 2,
            ..
        })
    ));
    token.set_path(1, path(0, &env, &[(3, 0), (2, 0), (1, 0)]));
    assert!(matches!(
        token.check(&env, 0),
        Err(TpError::SwapConflict { a: 0, b: 1, t: 2 })
    ));
    token.set_path(0, path(0, &env, &[(0, 0), (2, 0)]));
    assert!(matches!(
        token.check(&env, 0),
        Err(TpError::Jump { agent: 0, .. })
    ));
}

#[test]
fn nearest_free_task_is_selected() {
    let w = world(&COMB);
    let env = w.env();
    let agent = AgentState::new(0, at(env, 0, 2), 0.5);
    let token = Token::new(0, &[at(env, 0, 2), at(env, 4, 4)]);
    let tasks = vec![
        Task::new(0, at(env, 2, 0), at(env, 0, 5)),
        Task::new(1, at(env, 0, 0), at(env, 4, 5)),
        Task::new(2, at(env, 4, 0), at(env, 2, 5)),
    ];
    // (0,2) -> (2,0) is 4 moves, (0,2) -> (0,0) is 2, (0,2) -> (4,0) is 6.
    assert_eq!(w.dist(agent.position, tasks[0].pickup), 4);
    assert_eq!(w.dist(agent.position, tasks[1].pickup), 2);
    assert_eq!(w.dist(agent.position, tasks[2].pickup), 6);
    assert_eq!(select_task_tp(&w, &agent, &tasks, &token), Some(1));

    // Same pickup twice: the lower id wins.
    let twins = vec![
        Task::new(0, at(env, 2, 0), at(env, 0, 5)),
        Task::new(1, at(env, 2, 0), at(env, 4, 5)),
    ];
    assert_eq!(select_task_tp(&w, &agent, &twins, &token), Some(0));
}

#[test]
fn busy_endpoints_rule_tasks_out() {
    let w = world(&COMB);
    let env = w.env();
    let agent = AgentState::new(0, at(env, 0, 2), 0.5);
    let mut token = Token::new(0, &[at(env, 0, 2), at(env, 4, 4)]);
    token.set_path(1, path(0, env, &[(4, 4), (4, 5)]));
    let tasks = vec![Task::new(0, at(env, 0, 0), at(env, 4, 5))];
    assert_eq!(select_task_tp(&w, &agent, &tasks, &token), None);
    // The agent's own path end does not count.
    let mine = Token::new(0, &[at(env, 4, 5), at(env, 4, 4)]);
    assert_eq!(select_task_tp(&w, &agent, &tasks, &mine), Some(0));
    // Claimed or finished tasks are not offered.
    let mut done = tasks.clone();
    done[0].status = TaskStatus::Claimed(1);
    assert_eq!(select_task_tp(&w, &agent, &done, &mine), None);
}

#[test]
fn env2_never_has_more_claims_than_delivery_nodes() {
    let w = World::new(crate::maps::builtin("env2").unwrap()).unwrap();
    assert_eq!(w.env().delivery_nodes().len(), 5);
    let tasks = generate_tasks(&w, 30, 6).unwrap();
    let opts = RunOptions {
        check_token: true,
        ..RunOptions::default()
    };
    let mut sim = Simulation::new(&w, 10, tasks, Algorithm::TokenPassing, 6, opts).unwrap();
    let mut peak = 0;
    while !sim.step().unwrap() {
        let tp = sim.token_passing().unwrap();
        let claims: Vec<TaskId> = (0..10).filter_map(|a| tp.token().claim_of(a)).collect();
        let deliveries: HashSet<NodeId> = claims.iter().map(|&k| sim.tasks()[k].delivery).collect();
        assert_eq!(
            deliveries.len(),
            claims.len(),
            "two claims share a delivery node at t={}",
            sim.t()
        );
        peak = peak.max(claims.len());
    }
    assert!(peak <= 5);
    assert!(peak >= 2, "agents should work in parallel");
}
