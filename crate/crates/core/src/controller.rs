//! Closed-loop controllers: MPPI scored by the tree terminal value, and a
//! waypoint follower along the minimum-cost path.

use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dynamics::{clamp_action, plan_metric, step_cost, true_step, Control, DynamicsParams, Order, SimState, WeightMatrix};
use crate::rng::{derive, Stream, StreamKey};
use crate::terminal_value::{rollout_value, TerminalValue};
use crate::world::{
    collides, in_goal, spawn_dynamic_obstacles, step_dynamic_obstacles, Configuration, DynamicObstacle, DynamicSpec,
    Environment, RobotModel,
};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MppiParams {
    pub horizon: usize,
    pub num_samples: usize,
    pub temperature: f64,
    /// Diagonal of the per-control sampling covariance. A single entry
    /// applies to every control dimension.
    pub covariance_diag: Vec<f64>,
    pub max_steps: usize,
    /// Consecutive all-infinite updates after which the trial is lost.
    pub lost_window: usize,
}

impl Default for MppiParams {
    fn default() -> Self {
        Self {
            horizon: 20,
            num_samples: 256,
            temperature: 0.2,
            covariance_diag: vec![0.05 * 0.05],
            max_steps: 800,
            lost_window: 25,
        }
    }
}

impl MppiParams {
    pub fn validate(&self) -> Result<(), String> {
        if self.horizon == 0 || self.num_samples == 0 {
            return Err("horizon and num_samples must be at least 1".into());
        }
        if !(self.temperature > 0.0) {
            return Err("temperature must be positive".into());
        }
        if self.covariance_diag.is_empty() || self.covariance_diag.iter().any(|v| !(*v > 0.0)) {
            return Err("covariance diagonal must be positive".into());
        }
        if self.lost_window == 0 {
            return Err("lost_window must be at least 1".into());
        }
        Ok(())
    }

    fn std_dev(&self, dim: usize) -> f64 {
        self.covariance_diag.get(dim).or(self.covariance_diag.last()).copied().unwrap_or(0.0).sqrt()
    }
}

/// Normalised exponentiated-cost weights `exp(-(c - c_min)/λ) / Σ`. Infinite
/// costs get weight zero; `None` when every cost is infinite.
pub fn softmax_weights(costs: &[f64], temperature: f64) -> Option<Vec<f64>> {
    let c_min = costs.iter().copied().filter(|c| c.is_finite()).fold(f64::INFINITY, f64::min);
    if !c_min.is_finite() {
        return None;
    }
    let raw: Vec<f64> = costs
        .iter()
        .map(|&c| if c.is_finite() { (-(c - c_min) / temperature).exp() } else { 0.0 })
        .collect();
    let total: f64 = raw.iter().sum();
    Some(raw.into_iter().map(|w| w / total).collect())
}

/// Weighted average of control sequences, summed in sample order.
pub fn weighted_mean(samples: &[Vec<Control>], weights: &[f64]) -> Vec<Control> {
    let h = samples.first().map_or(0, Vec::len);
    (0..h)
        .map(|t| {
            let mut acc = samples[0][t].scale(0.0);
            for (seq, &w) in samples.iter().zip(weights) {
                if w > 0.0 {
                    acc = acc.add(&seq[t].scale(w));
                }
            }
            acc
        })
        .collect()
}

/// Effective sample size `1 / Σ wᵢ²` of normalised weights.
pub fn effective_sample_size(weights: &[f64]) -> f64 {
    1.0 / weights.iter().map(|w| w * w).sum::<f64>()
}

/// Everything a rollout needs besides the sampled controls.
#[derive(Clone, Copy)]
pub struct RolloutContext<'a> {
    pub env: &'a Environment,
    pub robot: &'a RobotModel,
    pub weights: &'a WeightMatrix,
    pub dynamics: &'a DynamicsParams,
    pub tree: &'a TerminalValue<'a>,
    pub check_terminal_segment: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct MppiDiagnostics {
    pub best_cost: f64,
    /// Value of the updated nominal sequence.
    pub nominal_cost: f64,
    /// Tree vertex giving the nominal sequence its terminal value.
    pub terminal_node: Option<usize>,
    pub effective_sample_size: f64,
    pub finite_samples: usize,
    pub terminal_segment_blocked: Option<bool>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct MppiUpdate {
    pub mean: Vec<Control>,
    pub diagnostics: MppiDiagnostics,
}

/// Every sampled rollout had infinite cost.
#[derive(Clone, Copy, Debug, PartialEq, Eq, thiserror::Error)]
#[error("all sampled rollouts have infinite cost")]
pub struct AllInfinite;

/// Random stream for sample `i` of control step `step`.
pub fn sample_stream(seed: u64, step: u64, i: u64) -> Stream {
    derive(seed, &StreamKey::new("mppi-sample", &[step, i]))
}

/// One MPPI iteration: sample `Q` perturbed sequences around `mean`, score
/// each with the tree value, and return the exponentially weighted average.
/// Sample `i` draws from its own stream, so results do not depend on how
/// the rollouts are scheduled.
pub fn mppi_update(
    ctx: &RolloutContext<'_>,
    s: &SimState,
    mean: &[Control],
    params: &MppiParams,
    dyn_obs: &[DynamicObstacle],
    seed: u64,
    step: u64,
) -> Result<MppiUpdate, AllInfinite> {
    let eps = ctx.dynamics.epsilon;
    let stds = [params.std_dev(0), params.std_dev(1), params.std_dev(2)];
    let scored: Vec<(Vec<Control>, f64)> = (0..params.num_samples)
        .into_par_iter()
        .map(|i| {
            let mut rng = sample_stream(seed, step, i as u64);
            let seq: Vec<Control> = mean
                .iter()
                .map(|m| {
                    let mut a = *m;
                    a.x += stds[0] * rng.gaussian();
                    a.y += stds[1] * rng.gaussian();
                    if let Some(t) = a.theta.as_mut() {
                        *t += stds[2] * rng.gaussian();
                    }
                    clamp_action(&a, ctx.weights, eps)
                })
                .collect();
            let v = rollout_value(s, &seq, ctx.tree, ctx.env, ctx.robot, ctx.weights, ctx.dynamics, dyn_obs, false);
            (seq, v.total)
        })
        .collect();
    let (samples, costs): (Vec<_>, Vec<_>) = scored.into_iter().unzip();
    let weights = softmax_weights(&costs, params.temperature).ok_or(AllInfinite)?;
    let new_mean: Vec<Control> = weighted_mean(&samples, &weights)
        .iter()
        .map(|a| clamp_action(a, ctx.weights, eps))
        .collect();
    let nominal = rollout_value(
        s,
        &new_mean,
        ctx.tree,
        ctx.env,
        ctx.robot,
        ctx.weights,
        ctx.dynamics,
        dyn_obs,
        ctx.check_terminal_segment,
    );
    Ok(MppiUpdate {
        diagnostics: MppiDiagnostics {
            best_cost: costs.iter().copied().fold(f64::INFINITY, f64::min),
            nominal_cost: nominal.total,
            terminal_node: nominal.terminal_node,
            effective_sample_size: effective_sample_size(&weights),
            finite_samples: costs.iter().filter(|c| c.is_finite()).count(),
            terminal_segment_blocked: nominal.terminal_segment_blocked,
        },
        mean: new_mean,
    })
}

/// Follows a waypoint list with straight, clamped steps.
#[derive(Clone, Debug)]
pub struct NaiveFollower {
    waypoints: Vec<Configuration>,
    target: usize,
    tolerance: f64,
}

impl NaiveFollower {
    pub const DEFAULT_TOLERANCE: f64 = 0.1;

    pub fn new(waypoints: Vec<Configuration>, tolerance: f64) -> Self {
        assert!(!waypoints.is_empty(), "naive follower needs at least one waypoint");
        Self {
            waypoints,
            target: 0,
            tolerance,
        }
    }

    pub fn target(&self) -> usize {
        self.target
    }

    /// Advances past reached waypoints and returns the clamped step toward the
    /// current one.
    pub fn step(&mut self, q: &Configuration, w: &WeightMatrix, epsilon: f64) -> Control {
        while self.target + 1 < self.waypoints.len() && plan_metric(q, &self.waypoints[self.target], w) <= self.tolerance {
            self.target += 1;
        }
        clamp_action(&Control::between(q, &self.waypoints[self.target]), w, epsilon)
    }
}

/// What happens when the executed state touches an obstacle.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CollisionPolicy {
    /// End the trial immediately with outcome `Collision`.
    Terminate,
    /// Flag the collision and keep executing; a flagged trial that still
    /// reaches the goal is classified `Collision`.
    #[default]
    Continue,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome {
    Success,
    Collision,
    Failure,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FailureReason {
    StepBudget,
    Lost,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub outcome: Outcome,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub failure: Option<FailureReason>,
    pub reached_goal: bool,
    pub collided: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub first_collision_step: Option<usize>,
    /// Indicator plus action-norm cost over executed steps.
    pub true_cost: f64,
    pub indicator_cost: f64,
    pub action_cost: f64,
    pub steps: usize,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub trajectory: Vec<SimState>,
}

/// One line of the per-step controller trace.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub step: usize,
    pub position: [f64; 2],
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub best_cost: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub nominal_cost: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub terminal_node: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ess: Option<f64>,
    pub all_infinite: bool,
    pub collided: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub terminal_segment_blocked: Option<bool>,
}

/// A trial record together with its non-deterministic side outputs.
#[derive(Clone, Debug)]
pub struct TrialRun {
    pub record: TrialRecord,
    pub trace: Vec<TraceRecord>,
    /// Wall-clock time spent choosing each action, in milliseconds.
    pub iteration_ms: Vec<f64>,
}

#[derive(Clone, Debug)]
pub enum ControllerKind<'a> {
    Mppi {
        tree: &'a TerminalValue<'a>,
        params: &'a MppiParams,
        check_terminal_segment: bool,
    },
    Naive {
        waypoints: Vec<Configuration>,
        tolerance: f64,
    },
}

#[derive(Clone, Debug)]
pub struct TrialSetup<'a> {
    pub env: &'a Environment,
    pub robot: &'a RobotModel,
    pub weights: &'a WeightMatrix,
    pub dynamics: &'a DynamicsParams,
    /// Moving obstacles to spawn, if any.
    pub obstacles: Option<DynamicSpec>,
    pub collision_policy: CollisionPolicy,
    pub max_steps: usize,
    pub seed: u64,
    pub trace: bool,
    pub keep_trajectory: bool,
}

#[derive(Clone, Debug, PartialEq, Eq, thiserror::Error)]
pub enum TrialError {
    #[error("the naive controller supports only first-order dynamics without moving obstacles")]
    NaiveUnsupported,
    #[error("invalid trial parameters: {0}")]
    Invalid(String),
}

/// Runs MPPI with the tree terminal value from the environment start.
pub fn mppi_run(setup: &TrialSetup<'_>, tree: &TerminalValue<'_>, params: &MppiParams) -> Result<TrialRun, TrialError> {
    run_trial(
        setup,
        ControllerKind::Mppi {
            tree,
            params,
            check_terminal_segment: false,
        },
    )
}

/// Closed-loop execution until the goal, a terminating collision, the step
/// budget, or loss of the tree.
pub fn run_trial(setup: &TrialSetup<'_>, controller: ControllerKind<'_>) -> Result<TrialRun, TrialError> {
    let TrialSetup { env, robot, weights, dynamics, .. } = *setup;
    dynamics.validate().map_err(TrialError::Invalid)?;
    let env_for_obstacles = match setup.obstacles {
        Some(spec) => Environment {
            dynamic: Some(spec),
            ..env.clone()
        },
        None => env.clone(),
    };
    if matches!(controller, ControllerKind::Naive { .. })
        && (dynamics.order != Order::First || setup.obstacles.is_some_and(|o| o.count > 0))
    {
        return Err(TrialError::NaiveUnsupported);
    }
    let (mut mppi, mut naive) = (None, None);
    match controller {
        ControllerKind::Mppi {
            tree,
            params,
            check_terminal_segment,
        } => {
            params.validate().map_err(TrialError::Invalid)?;
            let ctx = RolloutContext {
                env,
                robot,
                weights,
                dynamics,
                tree,
                check_terminal_segment,
            };
            mppi = Some((ctx, params));
        }
        ControllerKind::Naive { waypoints, tolerance } => naive = Some(NaiveFollower::new(waypoints, tolerance)),
    }

    let mut noise = derive(setup.seed, &StreamKey::new("noise", &[]));
    let mut obstacle_rng = derive(setup.seed, &StreamKey::new("obstacles", &[]));
    let mut obstacles = match &setup.obstacles {
        Some(spec) if spec.count > 0 => spawn_dynamic_obstacles(env, spec, &mut obstacle_rng),
        _ => Vec::new(),
    };

    let mut state = SimState::at_rest(env.start_for(robot), dynamics.order);
    let horizon = mppi.as_ref().map_or(0, |(_, p)| p.horizon);
    let mut mean = vec![Control::zero_like(&state.q); horizon];
    let mut record = TrialRecord {
        outcome: Outcome::Failure,
        failure: None,
        reached_goal: false,
        collided: false,
        first_collision_step: None,
        true_cost: 0.0,
        indicator_cost: 0.0,
        action_cost: 0.0,
        steps: 0,
        trajectory: Vec::new(),
    };
    let mut trace = Vec::new();
    let mut iteration_ms = Vec::new();
    let mut lost_streak = 0usize;
    if setup.keep_trajectory {
        record.trajectory.push(state);
    }
    let flag_collision = |record: &mut TrialRecord, step: usize| {
        record.collided = true;
        record.first_collision_step.get_or_insert(step);
    };
    if collides(env, robot, &state.q, &obstacles) {
        flag_collision(&mut record, 0);
        if setup.collision_policy == CollisionPolicy::Terminate {
            record.outcome = Outcome::Collision;
            return Ok(TrialRun { record, trace, iteration_ms });
        }
    }

    loop {
        if in_goal(env, &state.q, weights) {
            record.reached_goal = true;
            record.outcome = if record.collided { Outcome::Collision } else { Outcome::Success };
            break;
        }
        if record.steps >= setup.max_steps {
            record.failure = Some(FailureReason::StepBudget);
            break;
        }
        let step = record.steps;
        let clock = Instant::now();
        let mut line = TraceRecord {
            step,
            position: [state.q.x, state.q.y],
            best_cost: None,
            nominal_cost: None,
            terminal_node: None,
            ess: None,
            all_infinite: false,
            collided: false,
            terminal_segment_blocked: None,
        };
        let action = if let Some((ctx, params)) = &mppi {
            match mppi_update(ctx, &state, &mean, params, &obstacles, setup.seed, step as u64) {
                Ok(u) => {
                    lost_streak = 0;
                    line.best_cost = Some(u.diagnostics.best_cost);
                    line.nominal_cost = u.diagnostics.nominal_cost.is_finite().then_some(u.diagnostics.nominal_cost);
                    line.terminal_node = u.diagnostics.terminal_node;
                    line.ess = Some(u.diagnostics.effective_sample_size);
                    line.terminal_segment_blocked = u.diagnostics.terminal_segment_blocked;
                    mean = u.mean;
                }
                Err(AllInfinite) => {
                    lost_streak += 1;
                    line.all_infinite = true;
                }
            }
            if lost_streak >= params.lost_window {
                iteration_ms.push(clock.elapsed().as_secs_f64() * 1e3);
                record.failure = Some(FailureReason::Lost);
                if setup.trace {
                    trace.push(line);
                }
                break;
            }
            mean[0]
        } else {
            naive
                .as_mut()
                .expect("one controller is configured")
                .step(&state.q, weights, dynamics.epsilon)
        };
        iteration_ms.push(clock.elapsed().as_secs_f64() * 1e3);

        let c = step_cost(env, robot, &state, &action, weights, &[]);
        debug_assert!(c.is_finite() || record.collided);
        let indicator = if in_goal(env, &state.q, weights) { 0.0 } else { 1.0 };
        let norm = action.weighted_norm(weights);
        record.indicator_cost += indicator;
        record.action_cost += norm;
        record.true_cost += indicator + norm;

        state = true_step(&state, &action, dynamics, weights, &mut noise);
        if !obstacles.is_empty() {
            obstacles = step_dynamic_obstacles(&obstacles, &env_for_obstacles, &mut obstacle_rng);
        }
        if mppi.is_some() {
            mean.rotate_left(1);
            *mean.last_mut().expect("horizon is at least 1") = Control::zero_like(&state.q);
        }
        record.steps += 1;
        if setup.keep_trajectory {
            record.trajectory.push(state);
        }
        if collides(env, robot, &state.q, &obstacles) {
            line.collided = true;
            let step = record.steps;
            flag_collision(&mut record, step);
        }
        if setup.trace {
            trace.push(line);
        }
        if record.collided && setup.collision_policy == CollisionPolicy::Terminate {
            record.outcome = Outcome::Collision;
            break;
        }
    }
    Ok(TrialRun { record, trace, iteration_ms })
}
