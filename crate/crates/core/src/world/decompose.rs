use std::collections::VecDeque;

use super::{Environment, NodeId, WorldError};

pub type TreeId = usize;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Region {
    Main,
    Tree(TreeId),
}

/// One dead-end tree hanging off the main area.
#[derive(Clone, Debug)]
pub struct Tree {
    pub id: TreeId,
    pub connecting: NodeId,
    /// All nodes including the connecting node, sorted.
    pub nodes: Vec<NodeId>,
    /// Nodes without the connecting node, sorted.
    pub proper: Vec<NodeId>,
}

/// Main area plus trees. Connecting nodes belong to the main area.
#[derive(Clone, Debug)]
pub struct Decomposition {
    region: Vec<Region>,
    main: Vec<NodeId>,
    trees: Vec<Tree>,
    // Rooted-tree data for proper tree nodes (root = connecting node).
    parent: Vec<Option<NodeId>>,
    depth: Vec<u32>,
    tin: Vec<u32>,
    tout: Vec<u32>,
}

/// Splits `env` into its bi-connected main area and the trees hanging off it.
///
/// Degree-one nodes are stripped repeatedly; what remains must be a single
/// bi-connected area. Each stripped fragment, together with the one main node
/// it touches, becomes a tree.
pub fn decompose(env: &Environment) -> Result<Decomposition, WorldError> {
    let n = env.node_count();
    let mut degree: Vec<usize> = env.nodes().map(|v| env.neighbors(v).len()).collect();
    let mut removed = vec![false; n];
    let mut queue: VecDeque<NodeId> = env.nodes().filter(|v| degree[v.index()] <= 1).collect();
    while let Some(v) = queue.pop_front() {
        if removed[v.index()] {
            continue;
        }
        removed[v.index()] = true;
        for &u in env.neighbors(v) {
            if !removed[u.index()] {
                degree[u.index()] -= 1;
                if degree[u.index()] == 1 {
                    queue.push_back(u);
                }
            }
        }
    }

    let main: Vec<NodeId> = env.nodes().filter(|v| !removed[v.index()]).collect();
    if main.len() < 3 {
        return Err(WorldError::NoMainArea { size: main.len() });
    }
    if let Some(cut) = articulation_point(env, &removed) {
        let (x, y) = env.coord(cut);
        return Err(WorldError::NotBiconnected { x, y });
    }

    let mut region = vec![Region::Main; n];
    let mut parent = vec![None; n];
    let mut depth = vec![0u32; n];
    let mut tin = vec![0u32; n];
    let mut tout = vec![0u32; n];
    let mut trees = Vec::new();
    let mut seen = vec![false; n];
    for start in env.nodes() {
        if !removed[start.index()] || seen[start.index()] {
            continue;
        }
        // Collect the fragment and the main nodes it touches.
        let mut fragment = vec![start];
        let mut attachments = Vec::new();
        seen[start.index()] = true;
        let mut i = 0;
        while i < fragment.len() {
            let v = fragment[i];
            i += 1;
            for &u in env.neighbors(v) {
                if !removed[u.index()] {
                    if !attachments.contains(&u) {
                        attachments.push(u);
                    }
                } else if !seen[u.index()] {
                    seen[u.index()] = true;
                    fragment.push(u);
                }
            }
        }
        if attachments.len() != 1 {
            let (x, y) = env.coord(start);
            return Err(WorldError::MultipleAttachments {
                x,
                y,
                attachments: attachments.len(),
            });
        }
        let id = trees.len();
        let connecting = attachments[0];
        for &v in &fragment {
            region[v.index()] = Region::Tree(id);
        }

        // Iterative DFS from the connecting node over fragment nodes.
        let mut clock = 0u32;
        let mut stack: Vec<(NodeId, usize)> = Vec::new();
        for &child in env.neighbors(connecting) {
            if region[child.index()] == Region::Tree(id) {
                parent[child.index()] = None;
                depth[child.index()] = 1;
                stack.push((child, 0));
                tin[child.index()] = clock;
                clock += 1;
                while let Some(&mut (v, ref mut next)) = stack.last_mut() {
                    let nbrs = env.neighbors(v);
                    if *next < nbrs.len() {
                        let u = nbrs[*next];
                        *next += 1;
                        let is_parent = parent[v.index()] == Some(u);
                        if region[u.index()] == Region::Tree(id) && !is_parent && u != child {
                            parent[u.index()] = Some(v);
                            depth[u.index()] = depth[v.index()] + 1;
                            tin[u.index()] = clock;
                            clock += 1;
                            stack.push((u, 0));
                        }
                    } else {
                        tout[v.index()] = clock;
                        clock += 1;
                        stack.pop();
                    }
                }
            }
        }

        let mut proper = fragment;
        proper.sort();
        let mut nodes = proper.clone();
        nodes.push(connecting);
        nodes.sort();
        trees.push(Tree {
            id,
            connecting,
            nodes,
            proper,
        });
    }

    Ok(Decomposition {
        region,
        main,
        trees,
        parent,
        depth,
        tin,
        tout,
    })
}

/// Some articulation point of the subgraph induced by non-removed nodes.
fn articulation_point(env: &Environment, removed: &[bool]) -> Option<NodeId> {
    let n = env.node_count();
    let root = env.nodes().find(|v| !removed[v.index()])?;
    let mut disc = vec![u32::MAX; n];
    let mut low = vec![0u32; n];
    let mut parent: Vec<Option<NodeId>> = vec![None; n];
    let mut clock = 0;
    let mut root_children = 0;
    let mut stack: Vec<(NodeId, usize)> = vec![(root, 0)];
    disc[root.index()] = clock;
    low[root.index()] = clock;
    clock += 1;
    while let Some(&mut (v, ref mut next)) = stack.last_mut() {
        let nbrs = env.neighbors(v);
        if *next < nbrs.len() {
            let u = nbrs[*next];
            *next += 1;
            if removed[u.index()] {
                continue;
            }
            if disc[u.index()] == u32::MAX {
                parent[u.index()] = Some(v);
                disc[u.index()] = clock;
                low[u.index()] = clock;
                clock += 1;
                if v == root {
                    root_children += 1;
                }
                stack.push((u, 0));
            } else if parent[v.index()] != Some(u) {
                low[v.index()] = low[v.index()].min(disc[u.index()]);
            }
        } else {
            stack.pop();
            if let Some(p) = parent[v.index()] {
                low[p.index()] = low[p.index()].min(low[v.index()]);
                if p != root && low[v.index()] >= disc[p.index()] {
                    return Some(p);
                }
            }
        }
    }
    if root_children > 1 {
        return Some(root);
    }
    // Residual is connected by construction, but make sure.
    env.nodes()
        .find(|v| !removed[v.index()] && disc[v.index()] == u32::MAX)
}

impl Decomposition {
    pub fn region(&self, v: NodeId) -> Region {
        self.region[v.index()]
    }

    pub fn is_main(&self, v: NodeId) -> bool {
        self.region[v.index()] == Region::Main
    }

    /// Tree whose proper node set contains `v`.
    pub fn tree_of(&self, v: NodeId) -> Option<TreeId> {
        match self.region[v.index()] {
            Region::Tree(k) => Some(k),
            Region::Main => None,
        }
    }

    pub fn main_nodes(&self) -> &[NodeId] {
        &self.main
    }

    pub fn trees(&self) -> &[Tree] {
        &self.trees
    }

    pub fn tree(&self, k: TreeId) -> Result<&Tree, WorldError> {
        self.trees.get(k).ok_or(WorldError::UnknownTree(k))
    }

    pub fn tree_count(&self) -> usize {
        self.trees.len()
    }

    /// Depth below the connecting node (0 for main nodes).
    pub fn depth(&self, v: NodeId) -> u32 {
        self.depth[v.index()]
    }

    /// Next node towards the connecting node, for proper tree nodes.
    pub fn toward_connecting(&self, v: NodeId) -> Option<NodeId> {
        let k = self.tree_of(v)?;
        Some(self.parent[v.index()].unwrap_or(self.trees[k].connecting))
    }

    fn in_tree(&self, k: TreeId, v: NodeId) -> bool {
        self.region[v.index()] == Region::Tree(k) || self.trees[k].connecting == v
    }

    /// `a` is `b` or lies between `b` and the connecting node of tree `k`.
    fn is_ancestor(&self, k: TreeId, a: NodeId, b: NodeId) -> bool {
        if a == self.trees[k].connecting {
            return true;
        }
        if b == self.trees[k].connecting {
            return false;
        }
        self.tin[a.index()] <= self.tin[b.index()] && self.tout[b.index()] <= self.tout[a.index()]
    }

    /// Whether `u` lies on the unique path between `a` and `b`, all of which
    /// must belong to tree `k` (connecting node included).
    pub fn on_tree_path(&self, k: TreeId, a: NodeId, b: NodeId, u: NodeId) -> bool {
        if !(self.in_tree(k, a) && self.in_tree(k, b) && self.in_tree(k, u)) {
            return false;
        }
        if !(self.is_ancestor(k, u, a) || self.is_ancestor(k, u, b)) {
            return false;
        }
        // u must also sit at or below the meeting point of a and b.
        let mut x = a;
        let mut y = b;
        while x != y {
            if self.depth_in(k, x) >= self.depth_in(k, y) {
                x = self.step_up(k, x);
            } else {
                y = self.step_up(k, y);
            }
        }
        self.is_ancestor(k, x, u)
    }

    fn depth_in(&self, k: TreeId, v: NodeId) -> u32 {
        if v == self.trees[k].connecting {
            0
        } else {
            self.depth[v.index()]
        }
    }

    fn step_up(&self, k: TreeId, v: NodeId) -> NodeId {
        self.parent[v.index()].unwrap_or(self.trees[k].connecting)
    }

    /// Node the path inside a tree leads to when heading for `dest`: `dest`
    /// itself if it belongs to the tree, otherwise the connecting node.
    pub fn tree_target(&self, k: TreeId, dest: NodeId) -> NodeId {
        if self.in_tree(k, dest) {
            dest
        } else {
            self.trees[k].connecting
        }
    }

    /// Unique path inside tree `k` from `from` towards `dest`.
    pub fn tree_path(
        &self,
        k: TreeId,
        from: NodeId,
        dest: NodeId,
    ) -> Result<Vec<NodeId>, WorldError> {
        let tree = self.tree(k)?;
        if !self.in_tree(k, from) {
            return Err(WorldError::UnknownNode(from));
        }
        let target = self.tree_target(k, dest);
        let mut up = vec![from];
        let mut down = vec![target];
        let (mut x, mut y) = (from, target);
        while x != y {
            if self.depth_in(k, x) >= self.depth_in(k, y) {
                x = self.step_up(k, x);
                up.push(x);
            } else {
                y = self.step_up(k, y);
                down.push(y);
            }
        }
        down.pop();
        up.extend(down.into_iter().rev());
        debug_assert!(up.iter().all(|&v| self.in_tree(tree.id, v)));
        Ok(up)
    }

    /// Membership in the allowed path set of an agent at `at` inside a tree
    /// heading for `dest`: the path from `at` to its tree target plus the
    /// path from the connecting node to that target.
    pub fn in_k(&self, at: NodeId, dest: NodeId, u: NodeId) -> bool {
        let Some(k) = self.tree_of(at) else {
            return false;
        };
        let target = self.tree_target(k, dest);
        self.on_tree_path(k, at, target, u)
            || self.on_tree_path(k, self.trees[k].connecting, target, u)
    }

    /// Whether `u` lies on the path from the connecting node of `dest`'s tree
    /// to `dest`. False when `dest` is in the main area.
    pub fn on_trunk(&self, dest: NodeId, u: NodeId) -> bool {
        match self.tree_of(dest) {
            Some(k) => self.on_tree_path(k, self.trees[k].connecting, dest, u),
            None => false,
        }
    }
}
