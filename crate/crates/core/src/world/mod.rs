//! Static environment model.
//!
//! An [`Environment`] is the 4-connected graph of walkable cells of a grid
//! map, together with the pickup, delivery and parking roles of its nodes.
//! A [`Decomposition`] splits it into a bi-connected main area and the
//! trees hanging off it, and [`DistanceField`]s give hop distances to a goal.
//! [`World`] bundles all three so they can be shared read-only between
//! concurrently running instances.

mod decompose;
mod distance;
pub mod generate;

use std::fmt;
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use decompose::{decompose, Decomposition, Region, Tree, TreeId};
pub use distance::{distance_field, DistanceField, UNREACHABLE};

/// Dense node index. Nodes are numbered in row-major cell order, so comparing
/// ids compares cell positions.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct NodeId(pub u32);

impl NodeId {
    #[inline]
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "n{}", self.0)
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum WorldError {
    #[error("line {line}: expected `{expected}`")]
    Header { line: usize, expected: &'static str },
    #[error("line {line}: duplicate header key `{key}`")]
    DuplicateKey { line: usize, key: String },
    #[error("line {line}: invalid value for `{key}`")]
    BadValue { line: usize, key: String },
    #[error("line {line}: carriage return or trailing whitespace")]
    Whitespace { line: usize },
    #[error("expected {expected} map rows, found {found}")]
    RowCount { expected: usize, found: usize },
    #[error("row {row}: expected {expected} cells, found {found}")]
    RaggedRow {
        row: usize,
        expected: usize,
        found: usize,
    },
    #[error("cell (x={x}, y={y}): unknown character {ch:?}")]
    UnknownCell { x: usize, y: usize, ch: char },
    #[error("map has no walkable cells")]
    Empty,
    #[error("walkable region is disconnected: cell (x={x}, y={y}) cannot be reached from (x={from_x}, y={from_y})")]
    Disconnected {
        x: u32,
        y: u32,
        from_x: u32,
        from_y: u32,
    },
    #[error("main area is not bi-connected: removing cell (x={x}, y={y}) disconnects it")]
    NotBiconnected { x: u32, y: u32 },
    #[error("pruned region containing cell (x={x}, y={y}) attaches to the main area at {attachments} nodes")]
    MultipleAttachments { x: u32, y: u32, attachments: usize },
    #[error("main area is empty or too small ({size} nodes) after pruning dead ends")]
    NoMainArea { size: usize },
    #[error("node {0} is not part of the environment")]
    UnknownNode(NodeId),
    #[error("tree {0} does not exist")]
    UnknownTree(usize),
}

/// Role flags of a walkable cell.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct Roles {
    pub pickup: bool,
    pub delivery: bool,
    pub parking: bool,
}

impl Roles {
    fn from_char(ch: char) -> Option<Option<Roles>> {
        let r = |pickup, delivery, parking| {
            Some(Some(Roles {
                pickup,
                delivery,
                parking,
            }))
        };
        match ch {
            '@' => Some(None),
            '.' => r(false, false, false),
            'p' => r(true, false, false),
            'd' => r(false, true, false),
            'b' => r(true, true, false),
            'i' => r(false, false, true),
            _ => None,
        }
    }

    fn to_char(self) -> char {
        match (self.pickup, self.delivery, self.parking) {
            (true, true, _) => 'b',
            (true, false, _) => 'p',
            (false, true, _) => 'd',
            (false, false, true) => 'i',
            _ => '.',
        }
    }
}

/// Undirected unit-edge graph embedded in a grid.
#[derive(Clone, Debug)]
pub struct Environment {
    name: String,
    width: usize,
    height: usize,
    cells: Vec<Option<NodeId>>,
    coords: Vec<(u32, u32)>,
    roles: Vec<Roles>,
    adjacency: Vec<Vec<NodeId>>,
    pickup: Vec<NodeId>,
    delivery: Vec<NodeId>,
    parking: Vec<NodeId>,
    edge_count: usize,
}

pub const MAP_MAGIC: &str = "mapd-map v1";

/// Parses the ASCII map format.
///
/// ```text
/// mapd-map v1
/// height H
/// width W
/// <H rows of W cells>
/// ```
pub fn parse_map(text: &str) -> Result<Environment, WorldError> {
    let mut lines: Vec<&str> = text.split('\n').collect();
    if lines.last() == Some(&"") {
        lines.pop();
    }
    for (i, line) in lines.iter().enumerate() {
        if line.ends_with(|c: char| c.is_whitespace()) {
            return Err(WorldError::Whitespace { line: i + 1 });
        }
    }
    if lines.first() != Some(&MAP_MAGIC) {
        return Err(WorldError::Header {
            line: 1,
            expected: MAP_MAGIC,
        });
    }
    let mut height = None;
    let mut width = None;
    for line_no in [2usize, 3] {
        let line = lines.get(line_no - 1).copied().unwrap_or("");
        let (key, value) = line.split_once(' ').ok_or(WorldError::Header {
            line: line_no,
            expected: "height H / width W",
        })?;
        let slot = match key {
            "height" => &mut height,
            "width" => &mut width,
            _ => {
                return Err(WorldError::Header {
                    line: line_no,
                    expected: "height H / width W",
                })
            }
        };
        if slot.is_some() {
            return Err(WorldError::DuplicateKey {
                line: line_no,
                key: key.to_string(),
            });
        }
        let parsed: usize = value.parse().map_err(|_| WorldError::BadValue {
            line: line_no,
            key: key.to_string(),
        })?;
        *slot = Some(parsed);
    }
    let (height, width) = (height.unwrap(), width.unwrap());
    let rows = &lines[3..];
    if rows.len() != height {
        return Err(WorldError::RowCount {
            expected: height,
            found: rows.len(),
        });
    }
    for (row, line) in rows.iter().enumerate() {
        let found = line.chars().count();
        if found != width {
            return Err(WorldError::RaggedRow {
                row,
                expected: width,
                found,
            });
        }
    }
    Environment::from_rows(rows)
}

impl Environment {
    /// Builds an environment from grid rows using the map cell legend.
    pub fn from_rows<S: AsRef<str>>(rows: &[S]) -> Result<Self, WorldError> {
        let height = rows.len();
        let width = rows
            .first()
            .map(|r| r.as_ref().chars().count())
            .unwrap_or(0);
        let mut cells = vec![None; width * height];
        let mut coords = Vec::new();
        let mut roles = Vec::new();
        for (y, row) in rows.iter().enumerate() {
            let row = row.as_ref();
            let found = row.chars().count();
            if found != width {
                return Err(WorldError::RaggedRow {
                    row: y,
                    expected: width,
                    found,
                });
            }
            for (x, ch) in row.chars().enumerate() {
                let cell = Roles::from_char(ch).ok_or(WorldError::UnknownCell { x, y, ch })?;
                if let Some(role) = cell {
                    cells[y * width + x] = Some(NodeId(coords.len() as u32));
                    coords.push((x as u32, y as u32));
                    roles.push(role);
                }
            }
        }
        if coords.is_empty() {
            return Err(WorldError::Empty);
        }

        let mut adjacency = vec![Vec::new(); coords.len()];
        let mut edge_count = 0;
        for (i, &(x, y)) in coords.iter().enumerate() {
            let (x, y) = (x as usize, y as usize);
            // Row-major neighbour order keeps adjacency lists sorted by id.
            let mut push = |nx: usize, ny: usize| {
                if let Some(n) = cells[ny * width + nx] {
                    adjacency[i].push(n);
                }
            };
            if y > 0 {
                push(x, y - 1);
            }
            if x > 0 {
                push(x - 1, y);
            }
            if x + 1 < width {
                push(x + 1, y);
            }
            if y + 1 < height {
                push(x, y + 1);
            }
            edge_count += adjacency[i].len();
        }
        edge_count /= 2;

        let pick = |f: fn(&Roles) -> bool| -> Vec<NodeId> {
            roles
                .iter()
                .enumerate()
                .filter(|(_, r)| f(r))
                .map(|(i, _)| NodeId(i as u32))
                .collect()
        };
        let env = Environment {
            name: "unnamed".to_string(),
            width,
            height,
            pickup: pick(|r| r.pickup),
            delivery: pick(|r| r.delivery),
            parking: pick(|r| r.parking),
            cells,
            coords,
            roles,
            adjacency,
            edge_count,
        };
        env.check_connected()?;
        Ok(env)
    }

    fn check_connected(&self) -> Result<(), WorldError> {
        let field = distance_field(self, NodeId(0)).expect("node 0 exists");
        if let Some(v) = self.nodes().find(|&v| field.get(v) == UNREACHABLE) {
            let (x, y) = self.coord(v);
            let (from_x, from_y) = self.coord(NodeId(0));
            return Err(WorldError::Disconnected {
                x,
                y,
                from_x,
                from_y,
            });
        }
        Ok(())
    }

    pub fn with_name(mut self, name: impl Into<String>) -> Self {
        self.name = name.into();
        self
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn node_count(&self) -> usize {
        self.coords.len()
    }

    pub fn edge_count(&self) -> usize {
        self.edge_count
    }

    pub fn nodes(&self) -> impl Iterator<Item = NodeId> + '_ {
        (0..self.coords.len() as u32).map(NodeId)
    }

    pub fn contains(&self, v: NodeId) -> bool {
        v.index() < self.coords.len()
    }

    /// Neighbours of `v`, sorted by id.
    pub fn neighbors(&self, v: NodeId) -> &[NodeId] {
        &self.adjacency[v.index()]
    }

    pub fn are_adjacent(&self, a: NodeId, b: NodeId) -> bool {
        self.adjacency[a.index()].binary_search(&b).is_ok()
    }

    /// `(x, y)` = `(column, row)` of the cell.
    pub fn coord(&self, v: NodeId) -> (u32, u32) {
        self.coords[v.index()]
    }

    pub fn node_at(&self, x: usize, y: usize) -> Option<NodeId> {
        if x < self.width && y < self.height {
            self.cells[y * self.width + x]
        } else {
            None
        }
    }

    pub fn roles(&self, v: NodeId) -> Roles {
        self.roles[v.index()]
    }

    pub fn pickup_nodes(&self) -> &[NodeId] {
        &self.pickup
    }

    pub fn delivery_nodes(&self) -> &[NodeId] {
        &self.delivery
    }

    /// Parking (initial) nodes in row-major order.
    pub fn parking_nodes(&self) -> &[NodeId] {
        &self.parking
    }

    /// Renders the environment back into the map format.
    pub fn to_map_text(&self) -> String {
        let mut out = format!(
            "{MAP_MAGIC}\nheight {}\nwidth {}\n",
            self.height, self.width
        );
        for y in 0..self.height {
            for x in 0..self.width {
                out.push(match self.cells[y * self.width + x] {
                    Some(v) => self.roles[v.index()].to_char(),
                    None => '@',
                });
            }
            out.push('\n');
        }
        out
    }
}

/// Environment, decomposition and lazily computed distance fields, shared
/// read-only by every instance run on the map.
#[derive(Debug)]
pub struct World {
    env: Environment,
    decomp: Decomposition,
    fields: Vec<OnceLock<DistanceField>>,
    diameter: u32,
}

impl World {
    pub fn new(env: Environment) -> Result<Self, WorldError> {
        let decomp = decompose(&env)?;
        let fields = (0..env.node_count()).map(|_| OnceLock::new()).collect();
        let mut world = World {
            env,
            decomp,
            fields,
            diameter: 0,
        };
        world.diameter = world
            .env
            .nodes()
            .map(|v| world.field(v).max_finite())
            .max()
            .unwrap_or(0);
        Ok(world)
    }

    pub fn env(&self) -> &Environment {
        &self.env
    }

    pub fn decomposition(&self) -> &Decomposition {
        &self.decomp
    }

    /// Distance field towards `goal`, computed on first use.
    pub fn field(&self, goal: NodeId) -> &DistanceField {
        self.fields[goal.index()]
            .get_or_init(|| distance_field(&self.env, goal).expect("goal is a node"))
    }

    pub fn try_field(&self, goal: NodeId) -> Result<&DistanceField, WorldError> {
        if self.env.contains(goal) {
            Ok(self.field(goal))
        } else {
            Err(WorldError::UnknownNode(goal))
        }
    }

    pub fn dist(&self, from: NodeId, goal: NodeId) -> u32 {
        self.field(goal).get(from)
    }

    /// Longest shortest path between any two nodes.
    pub fn diameter(&self) -> u32 {
        self.diameter
    }
}
