//! Environments, robot bodies, collision checking, configuration sampling and
//! moving obstacles.

use std::f64::consts::PI;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dynamics::{plan_metric, WeightMatrix};
use crate::geometry::{wrap_angle, Aabb, Circle, ConvexPolygon, ShapeError, Vec2};
use crate::rng::Stream;

pub const ENV_FORMAT: u32 = 1;

/// A point in configuration space. `theta` is present only for robots with
/// a rotational degree of freedom and is kept in `[-π, π)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(into = "Vec<f64>", try_from = "Vec<f64>")]
pub struct Configuration {
    pub x: f64,
    pub y: f64,
    pub theta: Option<f64>,
}

impl Configuration {
    pub fn planar(x: f64, y: f64) -> Self {
        Self { x, y, theta: None }
    }

    pub fn posed(x: f64, y: f64, theta: f64) -> Self {
        Self {
            x,
            y,
            theta: Some(wrap_angle(theta)),
        }
    }

    pub fn position(&self) -> Vec2 {
        Vec2::new(self.x, self.y)
    }

    /// Number of coordinates.
    pub fn dim(&self) -> usize {
        if self.theta.is_some() {
            3
        } else {
            2
        }
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.theta.is_none_or(f64::is_finite)
    }
}

impl From<Configuration> for Vec<f64> {
    fn from(q: Configuration) -> Self {
        match q.theta {
            Some(t) => vec![q.x, q.y, t],
            None => vec![q.x, q.y],
        }
    }
}

impl TryFrom<Vec<f64>> for Configuration {
    type Error = String;
    fn try_from(v: Vec<f64>) -> Result<Self, String> {
        let q = match v.as_slice() {
            [x, y] => Configuration::planar(*x, *y),
            [x, y, t] => Configuration::posed(*x, *y, *t),
            _ => return Err(format!("configuration needs 2 or 3 coordinates, got {}", v.len())),
        };
        if !q.is_finite() {
            return Err("configuration has a non-finite coordinate".into());
        }
        Ok(q)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RobotKind {
    Point,
    Stick,
}

impl std::str::FromStr for RobotKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "point" => Ok(RobotKind::Point),
            "stick" => Ok(RobotKind::Stick),
            _ => Err(format!("unknown robot `{s}` (expected point or stick)")),
        }
    }
}

impl std::fmt::Display for RobotKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            RobotKind::Point => "point",
            RobotKind::Stick => "stick",
        })
    }
}

/// Robot body geometry.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum RobotModel {
    Point,
    /// A segment of length `2 * half_length` centred at the configuration
    /// position and aligned with its heading.
    Stick { half_length: f64 },
}

impl RobotModel {
    pub const DEFAULT_STICK_HALF_LENGTH: f64 = 0.25;

    pub fn of_kind(kind: RobotKind) -> Self {
        match kind {
            RobotKind::Point => RobotModel::Point,
            RobotKind::Stick => RobotModel::Stick {
                half_length: Self::DEFAULT_STICK_HALF_LENGTH,
            },
        }
    }

    pub fn kind(&self) -> RobotKind {
        match self {
            RobotModel::Point => RobotKind::Point,
            RobotModel::Stick { .. } => RobotKind::Stick,
        }
    }

    /// Coerces a configuration to this robot's coordinates: the heading is
    /// dropped for a point robot and defaults to zero for a stick.
    pub fn project(&self, q: Configuration) -> Configuration {
        match self {
            RobotModel::Point => Configuration::planar(q.x, q.y),
            RobotModel::Stick { .. } => Configuration::posed(q.x, q.y, q.theta.unwrap_or(0.0)),
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            RobotModel::Point => 2,
            RobotModel::Stick { .. } => 3,
        }
    }

    /// Endpoints of the stick body at `q`.
    pub fn stick_endpoints(half_length: f64, q: &Configuration) -> (Vec2, Vec2) {
        let th = q.theta.unwrap_or(0.0);
        let u = Vec2::new(th.cos(), th.sin()) * half_length;
        let p = q.position();
        (p - u, p + u)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum StaticObstacle {
    Polygon(ConvexPolygon),
    Circle(Circle),
}

impl StaticObstacle {
    pub fn contains(&self, p: Vec2) -> bool {
        match self {
            StaticObstacle::Polygon(poly) => poly.contains(p),
            StaticObstacle::Circle(c) => c.contains(p),
        }
    }

    pub fn intersects_segment(&self, a: Vec2, b: Vec2) -> bool {
        match self {
            StaticObstacle::Polygon(poly) => poly.intersects_segment(a, b),
            StaticObstacle::Circle(c) => c.intersects_segment(a, b),
        }
    }
}

/// A moving disc. Velocities are in meters per control step.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DynamicObstacle {
    pub center: Vec2,
    pub radius: f64,
    pub velocity: Vec2,
    pub max_speed: f64,
}

impl DynamicObstacle {
    fn circle(&self) -> Circle {
        Circle {
            center: self.center,
            radius: self.radius,
        }
    }
}

/// How many moving obstacles an environment spawns and how they move.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DynamicSpec {
    pub count: usize,
    pub radius: f64,
    pub max_speed: f64,
    /// Half-width of the uniform per-step velocity perturbation.
    pub perturb: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Environment {
    pub name: String,
    pub bounds: Aabb,
    pub obstacles: Vec<StaticObstacle>,
    pub start: Configuration,
    pub goal: Configuration,
    pub goal_radius: f64,
    pub dynamic: Option<DynamicSpec>,
}

#[derive(Debug, thiserror::Error)]
pub enum WorldError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed environment: {0}")]
    Json(#[from] serde_json::Error),
    #[error("unsupported environment format {0} (expected {ENV_FORMAT})")]
    Format(u32),
    #[error("obstacle {index}: {source}")]
    Shape {
        index: usize,
        #[source]
        source: ShapeError,
    },
    #[error("invalid environment: {0}")]
    Invalid(String),
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase", deny_unknown_fields)]
enum ObstacleFile {
    Polygon { vertices: Vec<[f64; 2]> },
    Circle { center: [f64; 2], radius: f64 },
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct EnvFile {
    format: u32,
    name: String,
    bounds: [f64; 4],
    obstacles: Vec<ObstacleFile>,
    start: Configuration,
    goal: Configuration,
    goal_radius: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    dynamic: Option<DynamicSpec>,
}

const BUILTIN_ENVS: [(&str, &str); 4] = [
    ("gate", include_str!("../envs/gate.json")),
    ("bugtrap", include_str!("../envs/bugtrap.json")),
    ("forest", include_str!("../envs/forest.json")),
    ("blob", include_str!("../envs/blob.json")),
];

impl Environment {
    pub fn from_json(text: &str) -> Result<Self, WorldError> {
        let file: EnvFile = serde_json::from_str(text)?;
        if file.format != ENV_FORMAT {
            return Err(WorldError::Format(file.format));
        }
        let [xmin, ymin, xmax, ymax] = file.bounds;
        if !(xmin < xmax && ymin < ymax) || file.bounds.iter().any(|v| !v.is_finite()) {
            return Err(WorldError::Invalid(format!("bad bounds {:?}", file.bounds)));
        }
        let obstacles = file
            .obstacles
            .into_iter()
            .enumerate()
            .map(|(index, o)| {
                match o {
                    ObstacleFile::Polygon { vertices } => {
                        ConvexPolygon::new(vertices.into_iter().map(|[x, y]| Vec2::new(x, y)).collect())
                            .map(StaticObstacle::Polygon)
                    }
                    ObstacleFile::Circle { center, radius } => {
                        Circle::new(Vec2::new(center[0], center[1]), radius).map(StaticObstacle::Circle)
                    }
                }
                .map_err(|source| WorldError::Shape { index, source })
            })
            .collect::<Result<Vec<_>, _>>()?;
        if !(file.goal_radius > 0.0 && file.goal_radius.is_finite()) {
            return Err(WorldError::Invalid(format!("goal_radius must be positive, got {}", file.goal_radius)));
        }
        if let Some(d) = &file.dynamic {
            if !(d.radius > 0.0 && d.max_speed >= 0.0 && d.perturb >= 0.0) {
                return Err(WorldError::Invalid("dynamic obstacle parameters out of range".into()));
            }
        }
        Ok(Environment {
            name: file.name,
            bounds: Aabb {
                min: Vec2::new(xmin, ymin),
                max: Vec2::new(xmax, ymax),
            },
            obstacles,
            start: file.start,
            goal: file.goal,
            goal_radius: file.goal_radius,
            dynamic: file.dynamic,
        })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, WorldError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| WorldError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        let file = EnvFile {
            format: ENV_FORMAT,
            name: self.name.clone(),
            bounds: [self.bounds.min.x, self.bounds.min.y, self.bounds.max.x, self.bounds.max.y],
            obstacles: self
                .obstacles
                .iter()
                .map(|o| match o {
                    StaticObstacle::Polygon(p) => ObstacleFile::Polygon {
                        vertices: p.vertices().iter().map(|v| [v.x, v.y]).collect(),
                    },
                    StaticObstacle::Circle(c) => ObstacleFile::Circle {
                        center: [c.center.x, c.center.y],
                        radius: c.radius,
                    },
                })
                .collect(),
            start: self.start,
            goal: self.goal,
            goal_radius: self.goal_radius,
            dynamic: self.dynamic,
        };
        serde_json::to_string_pretty(&file).expect("environment serializes")
    }

    /// One of the bundled layouts: `gate`, `bugtrap`, `forest`, `blob`.
    pub fn builtin(name: &str) -> Option<Self> {
        BUILTIN_ENVS
            .iter()
            .find(|(n, _)| *n == name)
            .map(|(_, text)| Self::from_json(text).expect("bundled environment is valid"))
    }

    pub fn builtin_names() -> impl Iterator<Item = &'static str> {
        BUILTIN_ENVS.iter().map(|(n, _)| *n)
    }

    pub fn start_for(&self, robot: &RobotModel) -> Configuration {
        robot.project(self.start)
    }

    pub fn goal_for(&self, robot: &RobotModel) -> Configuration {
        robot.project(self.goal)
    }

    /// Checks the start/goal requirements that depend on the robot body.
    pub fn validate_for(&self, robot: &RobotModel, weights: &WeightMatrix) -> Result<(), WorldError> {
        let (start, goal) = (self.start_for(robot), self.goal_for(robot));
        if collides(self, robot, &start, &[]) {
            return Err(WorldError::Invalid(format!("{}: start is in collision", self.name)));
        }
        if collides(self, robot, &goal, &[]) {
            return Err(WorldError::Invalid(format!("{}: goal is in collision", self.name)));
        }
        if in_goal(self, &start, weights) {
            return Err(WorldError::Invalid(format!("{}: start lies inside the goal region", self.name)));
        }
        Ok(())
    }
}

/// True iff the robot body at `q` touches a static obstacle, a moving
/// obstacle, or the environment boundary.
pub fn collides(env: &Environment, robot: &RobotModel, q: &Configuration, dyn_obs: &[DynamicObstacle]) -> bool {
    match *robot {
        RobotModel::Point => {
            let p = q.position();
            !env.bounds.contains_strictly(p)
                || env.obstacles.iter().any(|o| o.contains(p))
                || dyn_obs.iter().any(|d| d.circle().contains(p))
        }
        RobotModel::Stick { half_length } => {
            let (a, b) = RobotModel::stick_endpoints(half_length, q);
            !env.bounds.contains_strictly(a)
                || !env.bounds.contains_strictly(b)
                || env.obstacles.iter().any(|o| o.intersects_segment(a, b))
                || dyn_obs.iter().any(|d| d.circle().intersects_segment(a, b))
        }
    }
}

/// Goal-region membership; the boundary counts as inside.
pub fn in_goal(env: &Environment, q: &Configuration, weights: &WeightMatrix) -> bool {
    let goal = match q.theta {
        Some(_) => Configuration::posed(env.goal.x, env.goal.y, env.goal.theta.unwrap_or(0.0)),
        None => Configuration::planar(env.goal.x, env.goal.y),
    };
    plan_metric(q, &goal, weights) <= env.goal_radius
}

/// Draws the start configuration with probability `start_bias`, otherwise a
/// configuration uniform over the bounds (and heading, for a stick).
pub fn sample_config(env: &Environment, robot: &RobotModel, rng: &mut Stream, start_bias: f64) -> Configuration {
    if rng.chance(start_bias) {
        return env.start_for(robot);
    }
    let x = rng.uniform_in(env.bounds.min.x, env.bounds.max.x);
    let y = rng.uniform_in(env.bounds.min.y, env.bounds.max.y);
    match robot {
        RobotModel::Point => Configuration::planar(x, y),
        RobotModel::Stick { .. } => Configuration::posed(x, y, rng.uniform_in(-PI, PI)),
    }
}

fn clamp_speed(v: Vec2, max_speed: f64) -> Vec2 {
    let n = v.norm();
    if n > max_speed {
        if max_speed > 0.0 {
            v * (max_speed / n)
        } else {
            Vec2::ZERO
        }
    } else {
        v
    }
}

/// Places `spec.count` moving obstacles uniformly in the bounds, keeping them
/// clear of the start and goal positions.
pub fn spawn_dynamic_obstacles(env: &Environment, spec: &DynamicSpec, rng: &mut Stream) -> Vec<DynamicObstacle> {
    let clearance = spec.radius + 1.0;
    let (start, goal) = (env.start.position(), env.goal.position());
    (0..spec.count)
        .map(|_| {
            let mut center = Vec2::ZERO;
            for _ in 0..1000 {
                center = Vec2::new(
                    rng.uniform_in(env.bounds.min.x, env.bounds.max.x),
                    rng.uniform_in(env.bounds.min.y, env.bounds.max.y),
                );
                if (center - start).norm() > clearance && (center - goal).norm() > clearance {
                    break;
                }
            }
            let velocity = clamp_speed(
                Vec2::new(
                    rng.uniform_in(-spec.max_speed, spec.max_speed),
                    rng.uniform_in(-spec.max_speed, spec.max_speed),
                ),
                spec.max_speed,
            );
            DynamicObstacle {
                center,
                radius: spec.radius,
                velocity,
                max_speed: spec.max_speed,
            }
        })
        .collect()
}

fn reflect(pos: &mut f64, vel: &mut f64, lo: f64, hi: f64) {
    if *pos < lo {
        *pos = 2.0 * lo - *pos;
        *vel = -*vel;
    } else if *pos > hi {
        *pos = 2.0 * hi - *pos;
        *vel = -*vel;
    }
    *pos = pos.clamp(lo, hi);
}

/// Advances moving obstacles by one control step: uniform velocity
/// perturbation, speed clamp, position update, reflection at the bounds.
pub fn step_dynamic_obstacles(obs: &[DynamicObstacle], env: &Environment, rng: &mut Stream) -> Vec<DynamicObstacle> {
    let h = env.dynamic.map_or(0.0, |d| d.perturb);
    obs.iter()
        .map(|o| {
            let mut v = o.velocity;
            if h > 0.0 {
                v.x += rng.uniform_in(-h, h);
                v.y += rng.uniform_in(-h, h);
            }
            let mut v = clamp_speed(v, o.max_speed);
            let mut c = o.center + v;
            reflect(&mut c.x, &mut v.x, env.bounds.min.x, env.bounds.max.x);
            reflect(&mut c.y, &mut v.y, env.bounds.min.y, env.bounds.max.y);
            DynamicObstacle { center: c, velocity: v, ..*o }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{derive, StreamKey};

    fn open_env() -> Environment {
        Environment {
            name: "open".into(),
            bounds: Aabb {
                min: Vec2::new(0.0, 0.0),
                max: Vec2::new(10.0, 10.0),
            },
            obstacles: vec![
                StaticObstacle::Circle(Circle::new(Vec2::new(3.0, 3.0), 0.5).unwrap()),
                // thin vertical wall
                StaticObstacle::Polygon(
                    ConvexPolygon::rect(Vec2::new(6.0, 2.0), Vec2::new(6.05, 8.0)).unwrap(),
                ),
            ],
            start: Configuration::planar(1.0, 5.0),
            goal: Configuration::planar(9.0, 5.0),
            goal_radius: 0.3,
            dynamic: Some(DynamicSpec {
                count: 3,
                radius: 0.3,
                max_speed: 0.05,
                perturb: 0.01,
            }),
        }
    }

    fn dense_stick_oracle(env: &Environment, half: f64, q: &Configuration) -> bool {
        let (a, b) = RobotModel::stick_endpoints(half, q);
        (0..1000).any(|i| {
            let t = i as f64 / 999.0;
            let p = a + (b - a) * t;
            !env.bounds.contains_strictly(p) || env.obstacles.iter().any(|o| o.contains(p))
        })
    }

    #[test]
    fn point_robot_basic_collisions() {
        let env = open_env();
        assert!(collides(&env, &RobotModel::Point, &Configuration::planar(3.0, 3.0), &[]));
        assert!(!collides(&env, &RobotModel::Point, &Configuration::planar(1.0, 8.0), &[]));
        // boundary contact collides
        assert!(collides(&env, &RobotModel::Point, &Configuration::planar(0.0, 5.0), &[]));
        assert!(collides(&env, &RobotModel::Point, &Configuration::planar(-1.0, 5.0), &[]));
    }

    #[test]
    fn stick_crossing_thin_wall() {
        let env = open_env();
        let stick = RobotModel::Stick { half_length: 0.25 };
        let q = Configuration::posed(6.02, 5.0, 0.0);
        // centre is inside the wall here; shift so the centre is free too
        let q2 = Configuration::posed(5.9, 5.0, 0.0);
        let (a, b) = RobotModel::stick_endpoints(0.25, &q2);
        assert!(!env.obstacles[1].contains(a) && !env.obstacles[1].contains(b));
        assert!(!env.obstacles[1].contains(q2.position()));
        assert!(collides(&env, &stick, &q2, &[]));
        assert!(dense_stick_oracle(&env, 0.25, &q2));
        assert!(collides(&env, &stick, &q, &[]));
        // vertical orientation next to the wall is free
        let q3 = Configuration::posed(5.9, 5.0, PI / 2.0);
        assert!(!collides(&env, &stick, &q3, &[]));
    }

    #[test]
    fn stick_matches_dense_sampling() {
        let env = open_env();
        let stick = RobotModel::Stick { half_length: 0.25 };
        let mut rng = derive(5, &StreamKey::new("stick-oracle", &[]));
        let mut disagreements = 0;
        let n = 20_000;
        for _ in 0..n {
            let q = sample_config(&env, &stick, &mut rng, 1e-9);
            if collides(&env, &stick, &q, &[]) != dense_stick_oracle(&env, 0.25, &q) {
                disagreements += 1;
            }
        }
        assert!(disagreements as f64 <= 0.001 * n as f64, "{disagreements}");
    }

    #[test]
    fn adding_obstacles_is_monotone() {
        let mut env = open_env();
        let mut rng = derive(6, &StreamKey::new("mono", &[]));
        let qs: Vec<_> = (0..2000).map(|_| sample_config(&env, &RobotModel::Point, &mut rng, 1e-9)).collect();
        let before: Vec<bool> = qs.iter().map(|q| collides(&env, &RobotModel::Point, q, &[])).collect();
        env.obstacles
            .push(StaticObstacle::Circle(Circle::new(Vec2::new(8.0, 8.0), 1.0).unwrap()));
        for (q, b) in qs.iter().zip(before) {
            if b {
                assert!(collides(&env, &RobotModel::Point, q, &[]));
            }
        }
    }

    #[test]
    fn dynamic_obstacles_collide() {
        let env = open_env();
        let d = DynamicObstacle {
            center: Vec2::new(2.0, 8.0),
            radius: 0.3,
            velocity: Vec2::ZERO,
            max_speed: 0.1,
        };
        let q = Configuration::planar(2.1, 8.0);
        assert!(!collides(&env, &RobotModel::Point, &q, &[]));
        assert!(collides(&env, &RobotModel::Point, &q, &[d]));
    }

    #[test]
    fn goal_region_is_inclusive() {
        let env = open_env();
        let w = WeightMatrix::identity();
        assert!(in_goal(&env, &env.goal, &w));
        assert!(in_goal(&env, &Configuration::planar(9.0, 5.25), &w));
        assert!(in_goal(&env, &Configuration::planar(9.0, 5.0 + 0.25), &w));
        assert!(!in_goal(&env, &Configuration::planar(9.0, 5.6), &w));
        // exact boundary with a representable distance
        let mut e2 = env.clone();
        e2.goal_radius = 0.5;
        assert!(in_goal(&e2, &Configuration::planar(9.5, 5.0), &w));
        assert!(!in_goal(&e2, &Configuration::planar(10.0, 5.0), &w));
    }

    #[test]
    fn start_bias_frequency() {
        let env = open_env();
        let mut rng = derive(7, &StreamKey::new("bias", &[]));
        let n = 100_000;
        let hits = (0..n)
            .filter(|_| sample_config(&env, &RobotModel::Point, &mut rng, 0.05) == env.start)
            .count();
        let f = hits as f64 / n as f64;
        assert!((f - 0.05).abs() < 0.01, "{f}");
        let sigma = (0.05f64 * 0.95 / n as f64).sqrt();
        assert!((f - 0.05).abs() < 3.0 * sigma, "{f}");
        assert!((0..100).all(|_| sample_config(&env, &RobotModel::Point, &mut rng, 1.0) == env.start));
    }

    #[test]
    fn uniform_samples_in_bounds() {
        let env = open_env();
        let stick = RobotModel::Stick { half_length: 0.25 };
        let mut rng = derive(8, &StreamKey::new("uni", &[]));
        for _ in 0..10_000 {
            let q = sample_config(&env, &stick, &mut rng, 1e-12);
            assert!(q.x >= 0.0 && q.x < 10.0 && q.y >= 0.0 && q.y < 10.0);
            let t = q.theta.unwrap();
            assert!((-PI..PI).contains(&t));
        }
    }

    #[test]
    fn obstacle_speed_clamp_and_rest() {
        let mut env = open_env();
        env.dynamic = Some(DynamicSpec {
            count: 1,
            radius: 0.3,
            max_speed: 2.5,
            perturb: 0.0,
        });
        let mut rng = derive(1, &StreamKey::new("obs", &[]));
        let o = DynamicObstacle {
            center: Vec2::new(5.0, 5.0),
            radius: 0.3,
            velocity: Vec2::new(3.0, 4.0),
            max_speed: 2.5,
        };
        let next = step_dynamic_obstacles(&[o], &env, &mut rng);
        assert!((next[0].velocity.x - 1.5).abs() < 1e-15);
        assert!((next[0].velocity.y - 2.0).abs() < 1e-15);
        assert_eq!(next[0].center, Vec2::new(6.5, 7.0));

        let still = DynamicObstacle {
            max_speed: 0.0,
            velocity: Vec2::ZERO,
            ..o
        };
        env.dynamic.as_mut().unwrap().perturb = 0.3;
        let next = step_dynamic_obstacles(&[still], &env, &mut rng);
        assert_eq!(next[0].center, still.center);
    }

    #[test]
    fn obstacles_stay_in_bounds() {
        let env = open_env();
        let spec = env.dynamic.unwrap();
        let spec = DynamicSpec { max_speed: 0.4, perturb: 0.2, ..spec };
        let mut env = env;
        env.dynamic = Some(spec);
        let mut rng = derive(2, &StreamKey::new("sweep", &[]));
        let mut obs = spawn_dynamic_obstacles(&env, &spec, &mut rng);
        for _ in 0..10_000 {
            obs = step_dynamic_obstacles(&obs, &env, &mut rng);
            for o in &obs {
                assert!(o.velocity.norm() <= o.max_speed + 1e-12);
                assert!(o.center.x >= 0.0 && o.center.x <= 10.0);
                assert!(o.center.y >= 0.0 && o.center.y <= 10.0);
            }
        }
    }

    #[test]
    fn env_file_round_trip_and_errors() {
        let env = open_env();
        let back = Environment::from_json(&env.to_json()).unwrap();
        assert_eq!(back, env);
        let bad = env.to_json().replace("\"format\": 1", "\"format\": 2");
        assert!(matches!(Environment::from_json(&bad), Err(WorldError::Format(2))));
        let text = r#"{"format":1,"name":"x","bounds":[0,0,1,1],"obstacles":[{"type":"polygon","vertices":[[0,0],[0,1],[1,0]]}],"start":[0.1,0.1],"goal":[0.9,0.9],"goal_radius":0.1}"#;
        assert!(matches!(Environment::from_json(text), Err(WorldError::Shape { index: 0, .. })));
    }

    #[test]
    fn builtins_are_valid() {
        let w = WeightMatrix::default_for(RobotKind::Stick);
        for name in Environment::builtin_names() {
            let env = Environment::builtin(name).unwrap();
            assert_eq!(env.name, name);
            for robot in [RobotModel::Point, RobotModel::of_kind(RobotKind::Stick)] {
                env.validate_for(&robot, &w).unwrap();
            }
        }
    }
}
