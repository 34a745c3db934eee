//! RRT# grown backwards from the goal, with whole-graph value iteration
//! after every insertion.

mod nearest;

pub use nearest::{nearest, nearest_one, NeighborIndex};

use serde::{Deserialize, Serialize};

use crate::dynamics::{plan_metric, Control, WeightMatrix};
use crate::graph::PlanningGraph;
use crate::rng::Stream;
use crate::world::{collides, sample_config, Configuration, Environment, RobotModel};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PlannerParams {
    /// Steering radius for a near-empty tree.
    pub steer_radius_max: f64,
    /// Floor of the shrinking steering radius.
    pub steer_radius_min: f64,
    /// New vertices connect to every vertex within this multiple of the
    /// current steering radius.
    pub search_radius_factor: f64,
    pub start_bias: f64,
    pub max_iterations: usize,
    pub rng_seed: u64,
}

impl Default for PlannerParams {
    fn default() -> Self {
        Self {
            steer_radius_max: 2.0,
            steer_radius_min: 0.5,
            search_radius_factor: 1.0,
            start_bias: 0.05,
            max_iterations: 20_000,
            rng_seed: 0,
        }
    }
}

impl PlannerParams {
    pub fn validate(&self) -> Result<(), String> {
        if !(self.steer_radius_min > 0.0 && self.steer_radius_max >= self.steer_radius_min) {
            return Err("steering radii must satisfy 0 < min <= max".into());
        }
        if !(self.search_radius_factor >= 1.0) {
            return Err("search_radius_factor must be at least 1".into());
        }
        if !(self.start_bias > 0.0 && self.start_bias < 1.0) {
            return Err("start_bias must lie in (0, 1)".into());
        }
        if self.max_iterations == 0 {
            return Err("max_iterations must be positive".into());
        }
        Ok(())
    }

    /// Steering radius once the tree holds `n` vertices: the RRT*-style
    /// shrinking ball `M₀ (ln(n+1)/(n+1))^{1/d}`, floored at `steer_radius_min`.
    pub fn steer_radius(&self, n: usize, dim: usize) -> f64 {
        let n1 = (n + 1) as f64;
        let shrink = (n1.ln() / n1).powf(1.0 / dim as f64);
        (self.steer_radius_max * shrink).max(self.steer_radius_min)
    }
}

/// Projects `q_sample` onto the metric ball of radius `m` around `q_near`.
pub fn steer(q_sample: &Configuration, q_near: &Configuration, w: &WeightMatrix, m: f64) -> Configuration {
    let d = plan_metric(q_sample, q_near, w);
    if d <= m {
        return *q_sample;
    }
    Control::between(q_near, q_sample).scale(m / d).apply_to(q_near)
}

/// Emitted after each accepted insertion and value-iteration pass.
#[derive(Clone, Copy, Debug)]
pub struct InsertEvent {
    pub iteration: usize,
    pub vertex: usize,
    pub steer_radius: f64,
    pub sweeps: usize,
}

#[derive(Clone, Debug)]
pub struct Plan {
    pub graph: PlanningGraph,
    pub start_index: usize,
    pub iterations: usize,
}

#[derive(Clone, Debug, thiserror::Error)]
#[error("start not connected after {iterations} iterations ({vertices} vertices)")]
pub struct PlanFailure {
    pub iterations: usize,
    pub vertices: usize,
    pub graph: PlanningGraph,
}

/// Runs RRT# from the goal until the start configuration joins the tree with
/// a finite value.
pub fn rrt_sharp(
    env: &Environment,
    robot: &RobotModel,
    w: &WeightMatrix,
    params: &PlannerParams,
    rng: &mut Stream,
) -> Result<Plan, PlanFailure> {
    rrt_sharp_observed(env, robot, w, params, rng, |_, _| {})
}

/// [`rrt_sharp`] with a callback after every insertion.
pub fn rrt_sharp_observed(
    env: &Environment,
    robot: &RobotModel,
    w: &WeightMatrix,
    params: &PlannerParams,
    rng: &mut Stream,
    mut observer: impl FnMut(&PlanningGraph, &InsertEvent),
) -> Result<Plan, PlanFailure> {
    let start = env.start_for(robot);
    let goal = env.goal_for(robot);
    let dim = robot.dim();
    let mut graph = PlanningGraph::new(goal, *w);
    let mut index = NeighborIndex::new(params.steer_radius_min, *w);
    index.insert(graph.goal_index(), goal);

    for iteration in 1..=params.max_iterations {
        let sample = sample_config(env, robot, rng, params.start_bias);
        let (near, _) = nearest_one(&sample, graph.vertices(), w).expect("graph always holds the goal");
        let m = params.steer_radius(graph.len(), dim);
        let s = steer(&sample, graph.vertex(near), w, m);
        if collides(env, robot, &s, &[]) || graph.find(&s).is_some() {
            continue;
        }
        let mut neighbors: Vec<usize> = index
            .within(&s, None, Some(m * params.search_radius_factor))
            .into_iter()
            .map(|(i, _)| i)
            .collect();
        // Rounding in steer can put the steered point an ulp past M.
        if !neighbors.contains(&near) {
            neighbors.push(near);
        }
        let v = graph.insert_vertex(s, &neighbors);
        index.insert(v, s);
        let report = graph.value_iterate();
        debug_assert!(report.converged);
        observer(
            &graph,
            &InsertEvent {
                iteration,
                vertex: v,
                steer_radius: m,
                sweeps: report.sweeps,
            },
        );
        if s == start && graph.value(v).is_finite() {
            return Ok(Plan {
                graph,
                start_index: v,
                iterations: iteration,
            });
        }
    }
    Err(PlanFailure {
        iterations: params.max_iterations,
        vertices: graph.len(),
        graph,
    })
}

#[derive(Clone, Debug, PartialEq, thiserror::Error)]
pub enum PathError {
    #[error("vertex {0} has no finite path to the goal")]
    Unreachable(usize),
    #[error("value descent did not reach the goal from vertex {0}")]
    Stuck(usize),
}

/// Greedy value descent from `start` to the goal: at each vertex move to the
/// neighbour minimising `ĉ + V` (lowest index on ties).
pub fn extract_min_path(g: &PlanningGraph, start: usize) -> Result<Vec<usize>, PathError> {
    if !g.value(start).is_finite() {
        return Err(PathError::Unreachable(start));
    }
    let mut path = vec![start];
    let mut v = start;
    while v != g.goal_index() {
        if path.len() > g.len() {
            return Err(PathError::Stuck(start));
        }
        let mut best: Option<(usize, f64)> = None;
        for &(n, c) in g.neighbors(v) {
            let total = c + g.value(n);
            let better = match best {
                None => true,
                Some((bn, bt)) => total < bt || (total == bt && n < bn),
            };
            if better {
                best = Some((n, total));
            }
        }
        match best {
            Some((n, _)) if g.value(n) < g.value(v) => {
                path.push(n);
                v = n;
            }
            _ => return Err(PathError::Stuck(start)),
        }
    }
    Ok(path)
}
