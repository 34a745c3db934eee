//! Scores a control sequence by its rollout cost plus a terminal cost read off
//! the planning tree.
//!
//! The rollout's final configuration is treated as if it were temporarily
//! added to the tree: it connects to every tree vertex within the search
//! radius `R`, and its value is the cheapest `ĉ(s_H, s') + V(s')` over those
//! vertices. The connecting segment is not collision-checked. When no vertex
//! lies within `R`, the terminal cost (and so the rollout) is infinite.

use serde::{Deserialize, Serialize};

use crate::dynamics::{model_step, step_cost, Control, DynamicsParams, SimState, WeightMatrix};
use crate::graph::PlanningGraph;
use crate::planner::NeighborIndex;
use crate::world::{Configuration, DynamicObstacle, Environment, RobotModel};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TreeSubset {
    Full,
    MinPathOnly,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ValueQueryParams {
    pub search_radius: f64,
    pub tree_subset: TreeSubset,
    /// Segment-check the terminal connection against static obstacles and
    /// report crossings in the diagnostics. Does not change the value.
    pub check_terminal_segment: bool,
}

impl Default for ValueQueryParams {
    fn default() -> Self {
        Self {
            search_radius: 0.75,
            tree_subset: TreeSubset::Full,
            check_terminal_segment: false,
        }
    }
}

/// The vertex set visible to terminal-cost queries.
pub fn subset_indices(g: &PlanningGraph, mode: TreeSubset, min_path: &[usize]) -> Vec<usize> {
    match mode {
        TreeSubset::Full => (0..g.len()).collect(),
        TreeSubset::MinPathOnly => min_path.to_vec(),
    }
}

/// Read-only terminal-cost oracle over a frozen graph and vertex subset.
#[derive(Clone, Debug)]
pub struct TerminalValue<'g> {
    graph: &'g PlanningGraph,
    index: NeighborIndex,
    radius: f64,
}

/// Breakdown of one rollout evaluation.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RolloutValue {
    pub total: f64,
    pub step_cost: f64,
    pub terminal_cost: f64,
    /// Tree vertex attaining the terminal cost.
    pub terminal_node: Option<usize>,
    pub terminal_state: SimState,
    /// Whether the terminal connection crosses a static obstacle; only set
    /// when segment checking is enabled and a terminal node exists.
    pub terminal_segment_blocked: Option<bool>,
}

impl<'g> TerminalValue<'g> {
    pub fn new(graph: &'g PlanningGraph, subset: &[usize], radius: f64) -> Self {
        let cell = radius.max(1e-3);
        let index = NeighborIndex::build(cell, *graph.weights(), subset.iter().map(|&i| (i, *graph.vertex(i))));
        Self { graph, index, radius }
    }

    pub fn graph(&self) -> &'g PlanningGraph {
        self.graph
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    /// `min_{s' ∈ N} ĉ(q, s') + V(s')` over subset vertices within `R`, with
    /// the attaining vertex (lowest index on ties).
    pub fn terminal_cost(&self, q: &Configuration) -> (f64, Option<usize>) {
        let mut best: (f64, Option<usize>) = (f64::INFINITY, None);
        self.index.for_each_within(q, self.radius, |id, d| {
            let c = d + self.graph.value(id);
            let better = match best.1 {
                None => true,
                Some(b) => c < best.0 || (c == best.0 && id < b),
            };
            if better {
                best = (c, Some(id));
            }
        });
        best
    }
}

/// Rolls `s` forward under the nominal model, summing step costs, and adds
/// the tree terminal cost at the final configuration. Moving obstacles are
/// held at their current positions for the whole rollout.
#[allow(clippy::too_many_arguments)]
pub fn rollout_value(
    s: &SimState,
    controls: &[Control],
    tree: &TerminalValue<'_>,
    env: &Environment,
    robot: &RobotModel,
    w: &WeightMatrix,
    dyn_params: &DynamicsParams,
    dyn_obs: &[DynamicObstacle],
    check_segment: bool,
) -> RolloutValue {
    let mut state = *s;
    let mut c_step = 0.0;
    for a in controls {
        c_step += step_cost(env, robot, &state, a, w, dyn_obs);
        if c_step == f64::INFINITY {
            return RolloutValue {
                total: f64::INFINITY,
                step_cost: f64::INFINITY,
                terminal_cost: f64::INFINITY,
                terminal_node: None,
                terminal_state: state,
                terminal_segment_blocked: None,
            };
        }
        state = model_step(&state, a, dyn_params, w);
    }
    let (c_term, node) = tree.terminal_cost(&state.q);
    let blocked = match (check_segment, node) {
        (true, Some(n)) => {
            let (a, b) = (state.q.position(), tree.graph.vertex(n).position());
            Some(env.obstacles.iter().any(|o| o.intersects_segment(a, b)))
        }
        _ => None,
    };
    RolloutValue {
        total: c_step + c_term,
        step_cost: c_step,
        terminal_cost: c_term,
        terminal_node: node,
        terminal_state: state,
        terminal_segment_blocked: blocked,
    }
}
