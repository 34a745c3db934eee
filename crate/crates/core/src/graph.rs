//! Planning graph with per-vertex cost-to-go and Bellman value iteration.

use std::collections::HashMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dynamics::{plan_metric, WeightMatrix};
use crate::world::{Configuration, RobotKind};

pub const TREE_FORMAT: u32 = 1;

/// Undirected weighted graph over configurations rooted at a goal vertex.
/// Every edge is stored in both directions with an identical cost.
#[derive(Clone, Debug, PartialEq)]
pub struct PlanningGraph {
    vertices: Vec<Configuration>,
    adjacency: Vec<Vec<(usize, f64)>>,
    values: Vec<f64>,
    goal_index: usize,
    weights: WeightMatrix,
    lookup: HashMap<[u64; 3], usize>,
}

/// Outcome of one `value_iterate` call.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct SweepReport {
    /// Full sweeps run, including the final one that changed nothing.
    pub sweeps: usize,
    /// Whether a sweep without changes was reached within the cap.
    pub converged: bool,
}

fn key(q: &Configuration) -> [u64; 3] {
    // +0.0 and -0.0 are the same configuration.
    let bits = |v: f64| if v == 0.0 { 0 } else { v.to_bits() };
    [bits(q.x), bits(q.y), q.theta.map_or(u64::MAX, bits)]
}

impl PlanningGraph {
    /// A graph holding only the goal, with value zero.
    pub fn new(goal: Configuration, weights: WeightMatrix) -> Self {
        let mut lookup = HashMap::new();
        lookup.insert(key(&goal), 0);
        Self {
            vertices: vec![goal],
            adjacency: vec![Vec::new()],
            values: vec![0.0],
            goal_index: 0,
            weights,
            lookup,
        }
    }

    pub fn len(&self) -> usize {
        self.vertices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vertices.is_empty()
    }

    pub fn vertices(&self) -> &[Configuration] {
        &self.vertices
    }

    pub fn vertex(&self, i: usize) -> &Configuration {
        &self.vertices[i]
    }

    pub fn neighbors(&self, i: usize) -> &[(usize, f64)] {
        &self.adjacency[i]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn value(&self, i: usize) -> f64 {
        self.values[i]
    }

    pub fn goal_index(&self) -> usize {
        self.goal_index
    }

    pub fn weights(&self) -> &WeightMatrix {
        &self.weights
    }

    pub fn find(&self, q: &Configuration) -> Option<usize> {
        self.lookup.get(&key(q)).copied()
    }

    /// Each undirected edge once, as `(i, j, cost)` with `i < j`.
    pub fn edges(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        self.adjacency
            .iter()
            .enumerate()
            .flat_map(|(i, adj)| adj.iter().filter(move |(j, _)| i < *j).map(move |&(j, c)| (i, j, c)))
    }

    pub fn edge_count(&self) -> usize {
        self.adjacency.iter().map(Vec::len).sum::<usize>() / 2
    }

    /// Overwrites one value. Used to seed stale estimates in tests and when
    /// restoring a persisted tree.
    pub fn set_value(&mut self, i: usize, v: f64) {
        self.values[i] = v;
    }

    /// Adds `q` with value ∞ and bidirectional edges to `neighbors`. An exact
    /// duplicate of an existing vertex is not added; its index is returned.
    pub fn insert_vertex(&mut self, q: Configuration, neighbors: &[usize]) -> usize {
        if let Some(i) = self.find(&q) {
            return i;
        }
        let idx = self.vertices.len();
        self.vertices.push(q);
        self.values.push(f64::INFINITY);
        self.adjacency.push(Vec::with_capacity(neighbors.len()));
        self.lookup.insert(key(&q), idx);
        for &n in neighbors {
            self.add_edge(idx, n);
        }
        idx
    }

    /// Adds the undirected edge `{i, j}` unless it exists or `i == j`.
    pub fn add_edge(&mut self, i: usize, j: usize) {
        assert!(i < self.len() && j < self.len(), "edge endpoint out of range");
        if i == j || self.adjacency[i].iter().any(|(n, _)| *n == j) {
            return;
        }
        let c = plan_metric(&self.vertices[i], &self.vertices[j], &self.weights);
        self.adjacency[i].push((j, c));
        self.adjacency[j].push((i, c));
    }

    /// `min_{s'} ĉ(v, s') + V(s')` over the out-neighbours of `v`.
    pub fn bellman_backup(&self, v: usize) -> f64 {
        self.adjacency[v]
            .iter()
            .map(|&(n, c)| c + self.values[n])
            .fold(f64::INFINITY, f64::min)
    }

    /// Gauss–Seidel sweeps of Bellman backups in index order until a sweep
    /// changes nothing, capped at `|vertices| + 1` sweeps. Stored values must
    /// be upper bounds on the true cost-to-go (∞ for fresh vertices or
    /// values of a previous fixed point before edges were added); values
    /// then only decrease and the sweep count stays within the cap.
    pub fn value_iterate(&mut self) -> SweepReport {
        self.values[self.goal_index] = 0.0;
        let cap = self.len() + 1;
        let mut report = SweepReport::default();
        while report.sweeps < cap {
            report.sweeps += 1;
            let mut changed = false;
            for v in 0..self.len() {
                if v == self.goal_index {
                    continue;
                }
                let b = self.bellman_backup(v);
                if b != self.values[v] {
                    self.values[v] = b;
                    changed = true;
                }
            }
            if !changed {
                report.converged = true;
                break;
            }
        }
        report
    }

    /// Largest `|V(v) − backup(v)|` over non-goal vertices; ∞ when a vertex
    /// disagrees on finiteness.
    pub fn max_residual(&self) -> f64 {
        let mut worst: f64 = if self.values[self.goal_index] == 0.0 { 0.0 } else { f64::INFINITY };
        for v in 0..self.len() {
            if v == self.goal_index {
                continue;
            }
            let (b, cur) = (self.bellman_backup(v), self.values[v]);
            let r = if b == cur { 0.0 } else { (b - cur).abs() };
            worst = worst.max(if r.is_nan() { f64::INFINITY } else { r });
        }
        worst
    }

    /// Structural invariants: symmetric adjacency with identical costs equal
    /// to the metric, and a zero-valued goal.
    pub fn check_invariants(&self) -> Result<(), String> {
        if self.values[self.goal_index] != 0.0 {
            return Err("goal value is not zero".into());
        }
        for (i, adj) in self.adjacency.iter().enumerate() {
            for &(j, c) in adj {
                if c != plan_metric(&self.vertices[i], &self.vertices[j], &self.weights) {
                    return Err(format!("edge {i}-{j} cost differs from the metric"));
                }
                if !self.adjacency[j].iter().any(|&(k, c2)| k == i && c2 == c) {
                    return Err(format!("edge {i}->{j} has no matching reverse edge"));
                }
            }
        }
        if self.values.iter().any(|v| v.is_nan() || *v < 0.0) {
            return Err("negative or NaN value".into());
        }
        Ok(())
    }
}

#[derive(Debug, thiserror::Error)]
pub enum TreeFileError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed tree file: {0}")]
    Json(#[from] serde_json::Error),
    #[error("unsupported tree format {0} (expected {TREE_FORMAT})")]
    Format(u32),
    #[error("inconsistent tree file: {0}")]
    Invalid(String),
}

/// A persisted planning tree together with the metadata needed to reuse it.
#[derive(Clone, Debug, PartialEq)]
pub struct TreeFile {
    pub env_name: String,
    pub robot: RobotKind,
    pub graph: PlanningGraph,
    pub start_index: Option<usize>,
    pub rng_seed: u64,
}

/// `[i, j]`, optionally `[i, j, cost]`.
#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum EdgeDoc {
    Pair(usize, usize),
    Costed(usize, usize, f64),
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TreeDoc {
    format: u32,
    env_name: String,
    robot: RobotKind,
    weights: WeightMatrix,
    vertices: Vec<Configuration>,
    edges: Vec<EdgeDoc>,
    /// `null` encodes an infinite value.
    values: Vec<Option<f64>>,
    goal_index: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    start_index: Option<usize>,
    rng_seed: u64,
}

const EDGE_TOLERANCE: f64 = 1e-9;

impl TreeFile {
    pub fn to_json(&self) -> String {
        let g = &self.graph;
        let doc = TreeDoc {
            format: TREE_FORMAT,
            env_name: self.env_name.clone(),
            robot: self.robot,
            weights: g.weights,
            vertices: g.vertices.clone(),
            edges: g.edges().map(|(i, j, _)| EdgeDoc::Pair(i, j)).collect(),
            values: g.values.iter().map(|v| v.is_finite().then_some(*v)).collect(),
            goal_index: g.goal_index,
            start_index: self.start_index,
            rng_seed: self.rng_seed,
        };
        serde_json::to_string(&doc).expect("tree serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, TreeFileError> {
        let doc: TreeDoc = serde_json::from_str(text)?;
        if doc.format != TREE_FORMAT {
            return Err(TreeFileError::Format(doc.format));
        }
        let n = doc.vertices.len();
        let bad = |m: String| Err(TreeFileError::Invalid(m));
        if n == 0 || doc.goal_index >= n || doc.values.len() != n {
            return bad(format!("{n} vertices, {} values, goal {}", doc.values.len(), doc.goal_index));
        }
        let dim = match doc.robot {
            RobotKind::Point => 2,
            RobotKind::Stick => 3,
        };
        if doc.vertices.iter().any(|q| q.dim() != dim) {
            return bad(format!("vertex dimension does not match robot {}", doc.robot));
        }
        if doc.start_index.is_some_and(|s| s >= n) {
            return bad("start index out of range".into());
        }
        let mut graph = PlanningGraph {
            vertices: Vec::with_capacity(n),
            adjacency: vec![Vec::new(); n],
            values: doc.values.iter().map(|v| v.unwrap_or(f64::INFINITY)).collect(),
            goal_index: doc.goal_index,
            weights: doc.weights,
            lookup: HashMap::with_capacity(n),
        };
        for (i, q) in doc.vertices.into_iter().enumerate() {
            if graph.lookup.insert(key(&q), i).is_some() {
                return bad(format!("vertex {i} duplicates an earlier vertex"));
            }
            graph.vertices.push(q);
        }
        for e in &doc.edges {
            let (i, j, stored) = match *e {
                EdgeDoc::Pair(i, j) => (i, j, None),
                EdgeDoc::Costed(i, j, c) => (i, j, Some(c)),
            };
            if i >= n || j >= n || i == j {
                return bad(format!("edge [{i}, {j}] has invalid endpoints"));
            }
            graph.add_edge(i, j);
            if let Some(stored) = stored {
                let c = plan_metric(&graph.vertices[i], &graph.vertices[j], &graph.weights);
                if (stored - c).abs() > EDGE_TOLERANCE {
                    return bad(format!("edge {i}-{j} cost {stored} differs from metric {c}"));
                }
            }
        }
        if graph.values[graph.goal_index] != 0.0 {
            return bad("goal value is not zero".into());
        }
        // Values must be the fixed point of the stored edges.
        for v in 0..n {
            if v == graph.goal_index {
                continue;
            }
            let (b, cur) = (graph.bellman_backup(v), graph.values[v]);
            let ok = if b.is_finite() && cur.is_finite() {
                (b - cur).abs() <= EDGE_TOLERANCE * b.max(1.0)
            } else {
                b == cur
            };
            if !ok {
                return bad(format!("value at vertex {v} ({cur}) is inconsistent with its edges ({b})"));
            }
        }
        Ok(TreeFile {
            env_name: doc.env_name,
            robot: doc.robot,
            graph,
            start_index: doc.start_index,
            rng_seed: doc.rng_seed,
        })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, TreeFileError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| TreeFileError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_json(&text)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), TreeFileError> {
        let path = path.as_ref();
        std::fs::write(path, self.to_json()).map_err(|source| TreeFileError::Io {
            path: path.display().to_string(),
            source,
        })
    }
}
