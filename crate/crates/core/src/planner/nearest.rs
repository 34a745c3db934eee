//! Nearest-neighbour queries under the planning metric.
//!
//! `nearest` is the exhaustive reference scan. `NeighborIndex` buckets
//! positions in a uniform grid and filters radius queries with the
//! translational lower bound `ĉ(a, b) ≥ sqrt(min(w_x, w_y)) · ‖Δxy‖`; it
//! evaluates the exact metric on every surviving candidate, so its results
//! are identical to the scan.

use std::collections::HashMap;

use crate::dynamics::{plan_metric, WeightMatrix};
use crate::world::Configuration;

/// The up-to-`limit` points of `points` nearest to `q`, excluding any
/// farther than `radius`, as `(index, distance)` sorted by distance then
/// index. `None` means unbounded.
pub fn nearest(
    q: &Configuration,
    points: &[Configuration],
    w: &WeightMatrix,
    limit: Option<usize>,
    radius: Option<f64>,
) -> Vec<(usize, f64)> {
    let r = radius.unwrap_or(f64::INFINITY);
    let mut hits: Vec<(usize, f64)> = points
        .iter()
        .enumerate()
        .map(|(i, p)| (i, plan_metric(q, p, w)))
        .filter(|(_, d)| *d <= r)
        .collect();
    sort_hits(&mut hits);
    if let Some(l) = limit {
        hits.truncate(l);
    }
    hits
}

/// The single nearest point (lowest index on ties).
pub fn nearest_one(q: &Configuration, points: &[Configuration], w: &WeightMatrix) -> Option<(usize, f64)> {
    let mut best: Option<(usize, f64)> = None;
    for (i, p) in points.iter().enumerate() {
        let d = plan_metric(q, p, w);
        if best.is_none_or(|(_, b)| d < b) {
            best = Some((i, d));
        }
    }
    best
}

fn sort_hits(hits: &mut [(usize, f64)]) {
    hits.sort_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
}

/// Grid index over a set of configurations, each tagged with an external id.
#[derive(Clone, Debug)]
pub struct NeighborIndex {
    cell: f64,
    weights: WeightMatrix,
    scale: f64,
    cells: HashMap<(i64, i64), Vec<usize>>,
    points: Vec<(usize, Configuration)>,
}

impl NeighborIndex {
    pub fn new(cell: f64, weights: WeightMatrix) -> Self {
        assert!(cell > 0.0);
        Self {
            cell,
            weights,
            scale: weights.min_translational().sqrt(),
            cells: HashMap::new(),
            points: Vec::new(),
        }
    }

    /// Index of the given `(id, configuration)` pairs.
    pub fn build(cell: f64, weights: WeightMatrix, items: impl IntoIterator<Item = (usize, Configuration)>) -> Self {
        let mut idx = Self::new(cell, weights);
        for (id, q) in items {
            idx.insert(id, q);
        }
        idx
    }

    fn cell_of(&self, x: f64, y: f64) -> (i64, i64) {
        ((x / self.cell).floor() as i64, (y / self.cell).floor() as i64)
    }

    pub fn insert(&mut self, id: usize, q: Configuration) {
        let slot = self.points.len();
        self.points.push((id, q));
        let c = self.cell_of(q.x, q.y);
        self.cells.entry(c).or_default().push(slot);
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Calls `f(id, distance)` for every indexed point within `radius`, in
    /// no particular order.
    pub fn for_each_within(&self, q: &Configuration, radius: f64, mut f: impl FnMut(usize, f64)) {
        if !radius.is_finite() {
            for (id, p) in &self.points {
                f(*id, plan_metric(q, p, &self.weights));
            }
            return;
        }
        // Pad so rounding in the bound never drops a point the scan keeps.
        let reach = radius / self.scale * (1.0 + 1e-9) + 1e-9;
        let (x0, y0) = self.cell_of(q.x - reach, q.y - reach);
        let (x1, y1) = self.cell_of(q.x + reach, q.y + reach);
        let span = (x1 - x0 + 1) as u128 * (y1 - y0 + 1) as u128;
        if span > 4 * self.cells.len() as u128 {
            for (id, p) in &self.points {
                let d = plan_metric(q, p, &self.weights);
                if d <= radius {
                    f(*id, d);
                }
            }
            return;
        }
        for cx in x0..=x1 {
            for cy in y0..=y1 {
                if let Some(slots) = self.cells.get(&(cx, cy)) {
                    for &s in slots {
                        let (id, p) = &self.points[s];
                        let d = plan_metric(q, p, &self.weights);
                        if d <= radius {
                            f(*id, d);
                        }
                    }
                }
            }
        }
    }

    /// Same contract as [`nearest`] with ids in place of positions.
    pub fn within(&self, q: &Configuration, limit: Option<usize>, radius: Option<f64>) -> Vec<(usize, f64)> {
        let mut hits = Vec::new();
        self.for_each_within(q, radius.unwrap_or(f64::INFINITY), |id, d| hits.push((id, d)));
        sort_hits(&mut hits);
        if let Some(l) = limit {
            hits.truncate(l);
        }
        hits
    }
}
