//! Independent reference implementations used by the integration tests.
#![allow(dead_code)]

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use rrt_mppi::dynamics::{model_step, plan_metric, step_cost, Control, DynamicsParams, SimState, WeightMatrix};
use rrt_mppi::graph::PlanningGraph;
use rrt_mppi::rng::{derive, StreamKey};
use rrt_mppi::world::{Configuration, DynamicObstacle, Environment, RobotModel};

#[derive(PartialEq)]
struct Item(f64, usize);

impl Eq for Item {}

impl Ord for Item {
    fn cmp(&self, o: &Self) -> Ordering {
        o.0.total_cmp(&self.0).then(o.1.cmp(&self.1))
    }
}

impl PartialOrd for Item {
    fn partial_cmp(&self, o: &Self) -> Option<Ordering> {
        Some(self.cmp(o))
    }
}

/// Shortest-path distances to the goal by Dijkstra over the graph's edges.
pub fn dijkstra(g: &PlanningGraph) -> Vec<f64> {
    let mut dist = vec![f64::INFINITY; g.len()];
    let mut heap = BinaryHeap::new();
    dist[g.goal_index()] = 0.0;
    heap.push(Item(0.0, g.goal_index()));
    while let Some(Item(d, u)) = heap.pop() {
        if d > dist[u] {
            continue;
        }
        for &(v, c) in g.neighbors(u) {
            let nd = d + c;
            if nd < dist[v] {
                dist[v] = nd;
                heap.push(Item(nd, v));
            }
        }
    }
    dist
}

/// Random points in a 10×10 square, each joined to earlier points within
/// `radius`, with values iterated to convergence.
pub fn random_radius_graph(seed: u64, n: usize, radius: f64) -> PlanningGraph {
    let mut r = derive(seed, &StreamKey::new("radius-graph", &[]));
    let w = WeightMatrix::identity();
    let mut g = PlanningGraph::new(Configuration::planar(r.uniform_in(0.0, 10.0), r.uniform_in(0.0, 10.0)), w);
    while g.len() < n {
        let q = Configuration::planar(r.uniform_in(0.0, 10.0), r.uniform_in(0.0, 10.0));
        let near: Vec<usize> = (0..g.len()).filter(|&i| plan_metric(&q, g.vertex(i), &w) <= radius).collect();
        g.insert_vertex(q, &near);
    }
    g.value_iterate();
    g
}

/// Terminal cost by a linear scan of `subset`.
pub fn brute_terminal(g: &PlanningGraph, subset: &[usize], q: &Configuration, radius: f64) -> (f64, Option<usize>) {
    let mut best = (f64::INFINITY, None);
    for &i in subset {
        let d = plan_metric(q, g.vertex(i), g.weights());
        if d > radius {
            continue;
        }
        let c = d + g.value(i);
        match best.1 {
            Some(b) if !(c < best.0 || (c == best.0 && i < b)) => {}
            _ => best = (c, Some(i)),
        }
    }
    best
}

/// Rollout cost: summed step costs plus the scanned terminal cost.
#[allow(clippy::too_many_arguments)]
pub fn brute_rollout(
    s: &SimState,
    controls: &[Control],
    g: &PlanningGraph,
    subset: &[usize],
    radius: f64,
    env: &Environment,
    robot: &RobotModel,
    p: &DynamicsParams,
    obs: &[DynamicObstacle],
) -> f64 {
    let w = g.weights();
    let mut state = *s;
    let mut total = 0.0;
    for a in controls {
        let c = step_cost(env, robot, &state, a, w, obs);
        if c.is_infinite() {
            return f64::INFINITY;
        }
        total += c;
        state = model_step(&state, a, p, w);
    }
    total + brute_terminal(g, subset, &state.q, radius).0
}
