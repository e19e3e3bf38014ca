//! Random map generators for property tests and fuzzing.

use super::Environment;
use crate::sim::rng::SeedStream;

const DIRS: [(i64, i64); 4] = [(0, -1), (-1, 0), (1, 0), (0, 1)];

/// Random obstacle grid reduced to its largest 4-connected component.
pub fn random_grid(
    rng: &mut SeedStream,
    width: usize,
    height: usize,
    obstacle_density: f64,
) -> Environment {
    let mut open: Vec<bool> = (0..width * height)
        .map(|_| !rng.chance(obstacle_density))
        .collect();
    if !open.iter().any(|&o| o) {
        open[0] = true;
    }
    // Keep the largest component.
    let mut label = vec![usize::MAX; open.len()];
    let mut best = (0, 0);
    let mut next_label = 0;
    for start in 0..open.len() {
        if !open[start] || label[start] != usize::MAX {
            continue;
        }
        let mut stack = vec![start];
        label[start] = next_label;
        let mut size = 0;
        while let Some(c) = stack.pop() {
            size += 1;
            let (x, y) = ((c % width) as i64, (c / width) as i64);
            for (dx, dy) in DIRS {
                let (nx, ny) = (x + dx, y + dy);
                if nx < 0 || ny < 0 || nx >= width as i64 || ny >= height as i64 {
                    continue;
                }
                let nc = ny as usize * width + nx as usize;
                if open[nc] && label[nc] == usize::MAX {
                    label[nc] = next_label;
                    stack.push(nc);
                }
            }
        }
        if size > best.1 {
            best = (next_label, size);
        }
        next_label += 1;
    }
    let rows: Vec<String> = (0..height)
        .map(|y| {
            (0..width)
                .map(|x| {
                    if label[y * width + x] == best.0 {
                        '.'
                    } else {
                        '@'
                    }
                })
                .collect()
        })
        .collect();
    Environment::from_rows(&rows)
        .expect("largest component is connected")
        .with_name("random-grid")
}

/// Random map made of a rectangular main area with trees grown off its
/// border. Tree leaves carry pickup or delivery roles, main-area cells may
/// carry roles too, and up to ten main-area cells are parking nodes.
/// The result has at most `max_nodes` nodes and always admits a task whose
/// pickup and delivery are not in the same tree.
pub fn random_tree_map(rng: &mut SeedStream, max_nodes: usize) -> Environment {
    assert!(max_nodes >= 16, "too small for a tree-decorated map");
    loop {
        if let Some(env) = try_tree_map(rng, max_nodes) {
            return env;
        }
    }
}

fn try_tree_map(rng: &mut SeedStream, max_nodes: usize) -> Option<Environment> {
    const MARGIN: usize = 5;
    let mw = 3 + rng.index(4);
    let mh = 3 + rng.index(3);
    let width = mw + 2 * MARGIN;
    let height = mh + 2 * MARGIN;
    let mut grid = vec![b'@'; width * height];
    let at = |x: usize, y: usize| y * width + x;
    for y in MARGIN..MARGIN + mh {
        for x in MARGIN..MARGIN + mw {
            grid[at(x, y)] = b'.';
        }
    }
    // A hole in the middle keeps the main area bi-connected (it becomes a ring).
    if mw >= 3 && mh >= 3 && rng.chance(0.5) {
        grid[at(
            MARGIN + 1 + rng.index(mw - 2),
            MARGIN + 1 + rng.index(mh - 2),
        )] = b'@';
    }
    let main_count = grid.iter().filter(|&&c| c == b'.').count();
    let mut total = main_count;

    let open = |grid: &[u8], x: i64, y: i64| -> bool {
        x >= 0
            && y >= 0
            && (x as usize) < width
            && (y as usize) < height
            && grid[y as usize * width + x as usize] != b'@'
    };
    let mut tree_cells: Vec<Vec<(usize, usize)>> = Vec::new();
    let tree_target = 1 + rng.index(4);
    for _ in 0..tree_target * 4 {
        if tree_cells.len() == tree_target || total + 2 > max_nodes {
            break;
        }
        // Root cell just outside a random border cell.
        let side = rng.index(4);
        let (x, y) = match side {
            0 => (MARGIN + rng.index(mw), MARGIN - 1),
            1 => (MARGIN + rng.index(mw), MARGIN + mh),
            2 => (MARGIN - 1, MARGIN + rng.index(mh)),
            _ => (MARGIN + mw, MARGIN + rng.index(mh)),
        };
        if grid[at(x, y)] != b'@' || count_open_neighbours(&open, &grid, x, y) != 1 {
            continue;
        }
        grid[at(x, y)] = b'.';
        total += 1;
        let mut cells = vec![(x, y)];
        let size = 1 + rng.index(8);
        let mut attempts = 0;
        while cells.len() < size && total < max_nodes && attempts < 40 {
            attempts += 1;
            let (px, py) = cells[rng.index(cells.len())];
            let (dx, dy) = DIRS[rng.index(4)];
            let (nx, ny) = (px as i64 + dx, py as i64 + dy);
            if nx < 0 || ny < 0 || nx as usize >= width || ny as usize >= height {
                continue;
            }
            let (nx, ny) = (nx as usize, ny as usize);
            if grid[at(nx, ny)] != b'@' || count_open_neighbours(&open, &grid, nx, ny) != 1 {
                continue;
            }
            grid[at(nx, ny)] = b'.';
            total += 1;
            cells.push((nx, ny));
        }
        tree_cells.push(cells);
    }
    if tree_cells.is_empty() {
        return None;
    }

    // Roles on tree leaves (cells with one open neighbour) and a few main cells.
    let mut pickups = 0;
    let mut deliveries = 0;
    let mut trees_with_roles = 0;
    for cells in &tree_cells {
        let mut any = false;
        for &(x, y) in cells {
            if count_open_neighbours(&open, &grid, x, y) == 1 {
                let role = if rng.chance(0.5) { b'p' } else { b'd' };
                if role == b'p' {
                    pickups += 1;
                } else {
                    deliveries += 1;
                }
                grid[at(x, y)] = role;
                any = true;
            }
        }
        trees_with_roles += usize::from(any);
    }
    let mut main_cells: Vec<(usize, usize)> = Vec::new();
    for y in MARGIN..MARGIN + mh {
        for x in MARGIN..MARGIN + mw {
            if grid[at(x, y)] == b'.' {
                main_cells.push((x, y));
            }
        }
    }
    let main_roles = rng.index(3);
    for _ in 0..main_roles {
        let (x, y) = main_cells.swap_remove(rng.index(main_cells.len()));
        if rng.chance(0.5) {
            grid[at(x, y)] = b'p';
            pickups += 1;
        } else {
            grid[at(x, y)] = b'd';
            deliveries += 1;
        }
    }
    // Need a pickup and a delivery in different regions.
    let feasible = pickups > 0 && deliveries > 0 && (trees_with_roles > 1 || main_roles > 0);
    if !feasible {
        return None;
    }
    let parking = main_cells.len().min(10).min(main_count - 1);
    if parking < 2 {
        return None;
    }
    for _ in 0..parking {
        let (x, y) = main_cells.swap_remove(rng.index(main_cells.len()));
        grid[at(x, y)] = b'i';
    }

    let rows: Vec<String> = grid
        .chunks(width)
        .map(|r| String::from_utf8(r.to_vec()).expect("ascii"))
        .collect();
    let env = Environment::from_rows(&rows)
        .ok()?
        .with_name("random-tree-map");
    (env.node_count() <= max_nodes).then_some(env)
}

fn count_open_neighbours(
    open: &impl Fn(&[u8], i64, i64) -> bool,
    grid: &[u8],
    x: usize,
    y: usize,
) -> usize {
    DIRS.iter()
        .filter(|(dx, dy)| open(grid, x as i64 + dx, y as i64 + dy))
        .count()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::world::decompose;

    #[test]
    fn tree_maps_respect_bounds_and_decompose() {
        for seed in 0..100 {
            let mut rng = SeedStream::new(seed, 7);
            let env = random_tree_map(&mut rng, 80);
            assert!(env.node_count() <= 80);
            let d = decompose(&env).unwrap();
            assert!(d.tree_count() >= 1);
            assert!(!env.pickup_nodes().is_empty());
            assert!(!env.delivery_nodes().is_empty());
            assert!(env.parking_nodes().len() >= 2);
            assert!(env.parking_nodes().len() < d.main_nodes().len());
            // Some task satisfies the different-tree rule.
            let ok = env.pickup_nodes().iter().any(|&p| {
                env.delivery_nodes()
                    .iter()
                    .any(|&q| d.tree_of(p).is_none() || d.tree_of(p) != d.tree_of(q))
            });
            assert!(ok, "seed {seed}");
        }
    }

    #[test]
    fn random_grid_is_connected() {
        for seed in 0..20 {
            let mut rng = SeedStream::new(seed, 8);
            let env = random_grid(&mut rng, 8, 8, 0.3);
            assert!(env.node_count() >= 1);
        }
    }
}
