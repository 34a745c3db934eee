//! Robot dynamics, action limits, the per-step MPC cost and the kinematic
//! planning metric.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::geometry::wrap_angle;
use crate::rng::Stream;
use crate::world::{collides, in_goal, Configuration, DynamicObstacle, Environment, RobotKind, RobotModel};

/// Diagonal positive-definite weights over `(x, y, theta)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(into = "Vec<f64>", try_from = "Vec<f64>")]
pub struct WeightMatrix {
    pub x: f64,
    pub y: f64,
    /// Heading weight; ignored for point robots.
    pub theta: Option<f64>,
}

impl WeightMatrix {
    pub fn identity() -> Self {
        Self {
            x: 1.0,
            y: 1.0,
            theta: Some(1.0),
        }
    }

    /// Unit translation weights; a half turn of the stick costs as much as
    /// 2 m of translation.
    pub fn default_for(kind: RobotKind) -> Self {
        match kind {
            RobotKind::Point => Self {
                x: 1.0,
                y: 1.0,
                theta: None,
            },
            RobotKind::Stick => Self {
                x: 1.0,
                y: 1.0,
                theta: Some((2.0 / PI).powi(2)),
            },
        }
    }

    fn theta_weight(&self) -> f64 {
        self.theta.unwrap_or(1.0)
    }

    /// Smallest diagonal entry over the translational axes.
    pub fn min_translational(&self) -> f64 {
        self.x.min(self.y)
    }
}

impl From<WeightMatrix> for Vec<f64> {
    fn from(w: WeightMatrix) -> Self {
        match w.theta {
            Some(t) => vec![w.x, w.y, t],
            None => vec![w.x, w.y],
        }
    }
}

impl TryFrom<Vec<f64>> for WeightMatrix {
    type Error = String;
    fn try_from(v: Vec<f64>) -> Result<Self, String> {
        if v.iter().any(|w| !(*w > 0.0 && w.is_finite())) {
            return Err(format!("weights must be positive and finite: {v:?}"));
        }
        match v.as_slice() {
            [x, y] => Ok(Self {
                x: *x,
                y: *y,
                theta: None,
            }),
            [x, y, t] => Ok(Self {
                x: *x,
                y: *y,
                theta: Some(*t),
            }),
            _ => Err(format!("weights need 2 or 3 entries, got {}", v.len())),
        }
    }
}

/// A configuration-space increment: a displacement (first order), a change
/// of velocity (second order), or a velocity itself.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(into = "Vec<f64>", try_from = "Vec<f64>")]
pub struct Control {
    pub x: f64,
    pub y: f64,
    pub theta: Option<f64>,
}

impl From<Control> for Vec<f64> {
    fn from(c: Control) -> Self {
        match c.theta {
            Some(t) => vec![c.x, c.y, t],
            None => vec![c.x, c.y],
        }
    }
}

impl TryFrom<Vec<f64>> for Control {
    type Error = String;
    fn try_from(v: Vec<f64>) -> Result<Self, String> {
        match v.as_slice() {
            [x, y] => Ok(Control::planar(*x, *y)),
            [x, y, t] => Ok(Control::posed(*x, *y, *t)),
            _ => Err(format!("control needs 2 or 3 entries, got {}", v.len())),
        }
    }
}

impl Control {
    pub fn planar(x: f64, y: f64) -> Self {
        Self { x, y, theta: None }
    }

    pub fn posed(x: f64, y: f64, theta: f64) -> Self {
        Self { x, y, theta: Some(theta) }
    }

    /// The zero increment matching the shape of `q`.
    pub fn zero_like(q: &Configuration) -> Self {
        Self {
            x: 0.0,
            y: 0.0,
            theta: q.theta.map(|_| 0.0),
        }
    }

    pub fn dim(&self) -> usize {
        if self.theta.is_some() {
            3
        } else {
            2
        }
    }

    /// `(aᵀWa)^{1/2}`.
    pub fn weighted_norm(&self, w: &WeightMatrix) -> f64 {
        let th = self.theta.map_or(0.0, |t| w.theta_weight() * t * t);
        (w.x * self.x * self.x + w.y * self.y * self.y + th).sqrt()
    }

    pub fn scale(&self, k: f64) -> Self {
        Self {
            x: self.x * k,
            y: self.y * k,
            theta: self.theta.map(|t| t * k),
        }
    }

    pub fn add(&self, o: &Control) -> Self {
        Self {
            x: self.x + o.x,
            y: self.y + o.y,
            theta: match (self.theta, o.theta) {
                (Some(a), Some(b)) => Some(a + b),
                (a, b) => a.or(b),
            },
        }
    }

    /// Configuration difference `to - from` with the heading wrapped.
    pub fn between(from: &Configuration, to: &Configuration) -> Self {
        Self {
            x: to.x - from.x,
            y: to.y - from.y,
            theta: match (from.theta, to.theta) {
                (Some(a), Some(b)) => Some(wrap_angle(b - a)),
                _ => None,
            },
        }
    }

    /// `q + self`, heading re-wrapped.
    pub fn apply_to(&self, q: &Configuration) -> Configuration {
        Configuration {
            x: q.x + self.x,
            y: q.y + self.y,
            theta: q.theta.map(|t| wrap_angle(t + self.theta.unwrap_or(0.0))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub enum Order {
    First,
    Second,
}

impl TryFrom<u8> for Order {
    type Error = String;
    fn try_from(v: u8) -> Result<Self, String> {
        match v {
            1 => Ok(Order::First),
            2 => Ok(Order::Second),
            _ => Err(format!("dynamics order must be 1 or 2, got {v}")),
        }
    }
}

impl From<Order> for u8 {
    fn from(o: Order) -> u8 {
        match o {
            Order::First => 1,
            Order::Second => 2,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DynamicsParams {
    pub order: Order,
    /// Bound on the weighted norm of actions (and of velocity, second order).
    pub epsilon: f64,
    pub dt: f64,
    /// Standard deviation of the Gaussian action perturbation, per component.
    pub noise_std: f64,
}

impl Default for DynamicsParams {
    fn default() -> Self {
        Self {
            order: Order::First,
            epsilon: 0.15,
            dt: 1.0,
            noise_std: 0.03,
        }
    }
}

impl DynamicsParams {
    pub fn validate(&self) -> Result<(), String> {
        if !(self.epsilon > 0.0 && self.dt > 0.0 && self.noise_std >= 0.0) {
            return Err(format!("invalid dynamics parameters {self:?}"));
        }
        Ok(())
    }
}

/// Full simulation state. `v` is present only under second-order dynamics.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimState {
    pub q: Configuration,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub v: Option<Control>,
}

impl SimState {
    /// At rest at `q`.
    pub fn at_rest(q: Configuration, order: Order) -> Self {
        Self {
            q,
            v: match order {
                Order::First => None,
                Order::Second => Some(Control::zero_like(&q)),
            },
        }
    }
}

/// Rescales `a` onto the weighted ball of radius `epsilon` when it lies
/// outside. Idempotent bit-for-bit.
pub fn clamp_action(a: &Control, w: &WeightMatrix, epsilon: f64) -> Control {
    let n = a.weighted_norm(w);
    if n <= epsilon {
        return *a;
    }
    let mut k = epsilon / n;
    let mut out = a.scale(k);
    // Rounding can leave the rescaled norm an ulp above epsilon.
    while out.weighted_norm(w) > epsilon {
        k = k.next_down();
        out = a.scale(k);
    }
    out
}

/// The nominal model `f̂`. Expects an already-clamped action.
pub fn model_step(s: &SimState, a: &Control, params: &DynamicsParams, w: &WeightMatrix) -> SimState {
    match params.order {
        Order::First => SimState {
            q: a.apply_to(&s.q),
            v: None,
        },
        Order::Second => {
            let v = s.v.unwrap_or_else(|| Control::zero_like(&s.q));
            let q = v.scale(params.dt).apply_to(&s.q);
            let v = clamp_action(&v.add(a), w, params.epsilon);
            SimState { q, v: Some(v) }
        }
    }
}

/// The true system: the nominal model driven by a Gaussian-perturbed,
/// re-clamped action.
pub fn true_step(s: &SimState, a: &Control, params: &DynamicsParams, w: &WeightMatrix, rng: &mut Stream) -> SimState {
    let mut a = *a;
    if params.noise_std > 0.0 {
        a.x += params.noise_std * rng.gaussian();
        a.y += params.noise_std * rng.gaussian();
        if let Some(t) = a.theta.as_mut() {
            *t += params.noise_std * rng.gaussian();
        }
    }
    let a = clamp_action(&a, w, params.epsilon);
    model_step(s, &a, params, w)
}

/// Per-step MPC cost: infinite in collision, otherwise the goal indicator
/// plus the weighted action norm.
pub fn step_cost(
    env: &Environment,
    robot: &RobotModel,
    s: &SimState,
    a: &Control,
    w: &WeightMatrix,
    dyn_obs: &[DynamicObstacle],
) -> f64 {
    if collides(env, robot, &s.q, dyn_obs) {
        return f64::INFINITY;
    }
    let indicator = if in_goal(env, &s.q, w) { 0.0 } else { 1.0 };
    indicator + a.weighted_norm(w)
}

/// Kinematic planning cost `ĉ(q1, q2)`.
pub fn plan_metric(q1: &Configuration, q2: &Configuration, w: &WeightMatrix) -> f64 {
    debug_assert_eq!(q1.theta.is_some(), q2.theta.is_some(), "mixed configuration kinds");
    let dx = q2.x - q1.x;
    let dy = q2.y - q1.y;
    let th = match (q1.theta, q2.theta) {
        (Some(a), Some(b)) => {
            let d = wrap_angle(b - a);
            w.theta_weight() * d * d
        }
        _ => 0.0,
    };
    (w.x * dx * dx + w.y * dy * dy + th).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{Aabb, Circle, Vec2};
    use crate::rng::{derive, StreamKey};
    use crate::world::StaticObstacle;
    use proptest::prelude::*;

    fn env() -> Environment {
        Environment {
            name: "t".into(),
            bounds: Aabb {
                min: Vec2::new(0.0, 0.0),
                max: Vec2::new(10.0, 10.0),
            },
            obstacles: vec![StaticObstacle::Circle(Circle::new(Vec2::new(5.0, 5.0), 1.0).unwrap())],
            start: Configuration::planar(1.0, 1.0),
            goal: Configuration::planar(9.0, 9.0),
            goal_radius: 0.3,
            dynamic: None,
        }
    }

    #[test]
    fn clamp_examples() {
        let id = WeightMatrix::identity();
        assert_eq!(clamp_action(&Control::planar(0.0, 0.0), &id, 1.0), Control::planar(0.0, 0.0));
        let c = clamp_action(&Control::planar(3.0, 4.0), &id, 1.0);
        assert!((c.x - 0.6).abs() < 1e-15 && (c.y - 0.8).abs() < 1e-15);
        // weighted norm of (1, 0) under diag(4, 1) is 2
        let w = WeightMatrix {
            x: 4.0,
            y: 1.0,
            theta: None,
        };
        assert_eq!(Control::planar(1.0, 0.0).weighted_norm(&w), 2.0);
        assert_eq!(clamp_action(&Control::planar(1.0, 0.0), &w, 1.0), Control::planar(0.5, 0.0));
    }

    #[test]
    fn model_step_examples() {
        let id = WeightMatrix::identity();
        let first = DynamicsParams::default();
        let s = SimState::at_rest(Configuration::planar(0.0, 0.0), Order::First);
        assert_eq!(model_step(&s, &Control::planar(1.0, 2.0), &first, &id).q, Configuration::planar(1.0, 2.0));

        let second = DynamicsParams {
            order: Order::Second,
            epsilon: 1.0,
            dt: 1.0,
            noise_std: 0.0,
        };
        let s = SimState {
            q: Configuration::planar(0.0, 0.0),
            v: Some(Control::planar(1.0, 0.0)),
        };
        let n = model_step(&s, &Control::planar(0.0, 0.0), &second, &id);
        assert_eq!(n.q, Configuration::planar(1.0, 0.0));
        assert_eq!(n.v, Some(Control::planar(1.0, 0.0)));

        let s = SimState {
            q: Configuration::planar(0.0, 0.0),
            v: Some(Control::planar(0.9, 0.0)),
        };
        let n = model_step(&s, &Control::planar(0.9, 0.0), &second, &id);
        assert_eq!(n.v, Some(Control::planar(1.0, 0.0)));
        assert!((n.q.x - 0.9).abs() < 1e-15);
    }

    #[test]
    fn noiseless_true_step_is_model_step() {
        let w = WeightMatrix::default_for(RobotKind::Stick);
        let p = DynamicsParams {
            noise_std: 0.0,
            ..Default::default()
        };
        let mut rng = derive(0, &StreamKey::new("n", &[]));
        let s = SimState::at_rest(Configuration::posed(1.0, 2.0, 3.0), Order::First);
        let a = clamp_action(&Control::posed(0.1, -0.05, 0.2), &w, p.epsilon);
        assert_eq!(true_step(&s, &a, &p, &w, &mut rng), model_step(&s, &a, &p, &w));
    }

    #[test]
    fn true_step_noise_has_zero_mean() {
        let w = WeightMatrix::default_for(RobotKind::Point);
        let p = DynamicsParams::default();
        let mut rng = derive(3, &StreamKey::new("noise", &[]));
        let n = 10_000;
        let s0 = SimState::at_rest(Configuration::planar(5.0, 5.0), Order::First);
        let (mut sx, mut sy) = (0.0, 0.0);
        for _ in 0..n {
            let s1 = true_step(&s0, &Control::planar(0.0, 0.0), &p, &w, &mut rng);
            sx += s1.q.x - s0.q.x;
            sy += s1.q.y - s0.q.y;
        }
        let tol = 3.0 * p.noise_std / (n as f64).sqrt();
        assert!((sx / n as f64).abs() < tol);
        assert!((sy / n as f64).abs() < tol);
    }

    #[test]
    fn true_step_is_reproducible() {
        let w = WeightMatrix::default_for(RobotKind::Point);
        let p = DynamicsParams {
            noise_std: 0.01,
            ..Default::default()
        };
        let run = || {
            let mut rng = derive(11, &StreamKey::new("noise", &[]));
            let mut s = SimState::at_rest(Configuration::planar(1.0, 1.0), Order::First);
            (0..200)
                .map(|_| {
                    s = true_step(&s, &Control::planar(0.1, 0.05), &p, &w, &mut rng);
                    s
                })
                .collect::<Vec<_>>()
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn step_cost_examples() {
        let e = env();
        let w = WeightMatrix::identity();
        let in_goal = SimState::at_rest(Configuration::planar(9.0, 9.0), Order::First);
        assert_eq!(step_cost(&e, &RobotModel::Point, &in_goal, &Control::planar(0.0, 0.0), &w, &[]), 0.0);
        let free = SimState::at_rest(Configuration::planar(2.0, 2.0), Order::First);
        assert_eq!(step_cost(&e, &RobotModel::Point, &free, &Control::planar(0.3, 0.4), &w, &[]), 1.5);
        let hit = SimState::at_rest(Configuration::planar(5.0, 5.0), Order::First);
        assert_eq!(
            step_cost(&e, &RobotModel::Point, &hit, &Control::planar(0.0, 0.0), &w, &[]),
            f64::INFINITY
        );
    }

    #[test]
    fn metric_examples() {
        let id = WeightMatrix::identity();
        let a = Configuration::posed(0.0, 0.0, 0.0);
        assert_eq!(plan_metric(&a, &a, &id), 0.0);
        assert_eq!(plan_metric(&a, &Configuration::posed(3.0, 4.0, 0.0), &id), 5.0);
        let m = plan_metric(&Configuration::posed(0.0, 0.0, 3.0), &Configuration::posed(0.0, 0.0, -3.0), &id);
        assert!((m - (2.0 * PI - 6.0)).abs() < 1e-15, "{m}");
        assert!((m - 0.283_185_307_179_586_2).abs() < 1e-15);
    }

    fn config() -> impl Strategy<Value = Configuration> {
        (-10.0..10.0f64, -10.0..10.0f64, -PI..PI).prop_map(|(x, y, t)| Configuration::posed(x, y, t))
    }

    fn control() -> impl Strategy<Value = Control> {
        (-1.0..1.0f64, -1.0..1.0f64, -1.0..1.0f64).prop_map(|(x, y, t)| Control::posed(x, y, t))
    }

    fn weights() -> impl Strategy<Value = WeightMatrix> {
        (0.1..4.0f64, 0.1..4.0f64, 0.1..4.0f64).prop_map(|(x, y, t)| WeightMatrix { x, y, theta: Some(t) })
    }

    proptest! {
        #[test]
        fn metric_is_symmetric_and_triangular(a in config(), b in config(), c in config(), w in weights()) {
            prop_assert_eq!(plan_metric(&a, &b, &w), plan_metric(&b, &a, &w));
            prop_assert!(plan_metric(&a, &c, &w) <= plan_metric(&a, &b, &w) + plan_metric(&b, &c, &w) + 1e-9);
        }

        #[test]
        fn clamp_is_idempotent(a in control(), w in weights(), eps in 0.01..1.0f64) {
            let c = clamp_action(&a, &w, eps);
            prop_assert!(c.weighted_norm(&w) <= eps);
            prop_assert_eq!(clamp_action(&c, &w, eps), c);
        }

        #[test]
        fn second_order_velocity_stays_bounded(v in control(), a in control(), w in weights()) {
            let p = DynamicsParams { order: Order::Second, epsilon: 0.15, dt: 1.0, noise_std: 0.05 };
            let s = SimState { q: Configuration::posed(0.0, 0.0, 0.0), v: Some(clamp_action(&v, &w, p.epsilon)) };
            let a = clamp_action(&a, &w, p.epsilon);
            let n = model_step(&s, &a, &p, &w);
            prop_assert!(n.v.unwrap().weighted_norm(&w) <= p.epsilon);
            let mut rng = derive(0, &StreamKey::new("p", &[]));
            let n = true_step(&s, &a, &p, &w, &mut rng);
            prop_assert!(n.v.unwrap().weighted_norm(&w) <= p.epsilon);
        }
    }
}
