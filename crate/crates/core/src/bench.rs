//! Experiment orchestration: plan trees per environment, run controller
//! trials, and aggregate failure, collision and normalized-cost statistics.
//!
//! Every seed is derived from the master seed by labelled hashing, trials
//! are independent given their seeds and frozen trees, and aggregation is a
//! fold in (environment, robot, tree, controller, trial) order, so the raw
//! archive is byte-identical across reruns however trials are scheduled.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::controller::{run_trial, CollisionPolicy, ControllerKind, MppiParams, NaiveFollower, Outcome, TrialRecord};
use crate::dynamics::{DynamicsParams, Order, WeightMatrix};
use crate::graph::TreeFile;
use crate::planner::{extract_min_path, rrt_sharp, PlannerParams};
use crate::rng::{derive, derive_seed, StreamKey};
use crate::terminal_value::{subset_indices, TerminalValue, TreeSubset, ValueQueryParams};
use crate::world::{DynamicSpec, Environment, RobotKind, RobotModel, WorldError};

/// Controller selection.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ControllerName {
    Naive,
    Min,
    Full,
}

impl ControllerName {
    pub fn as_str(&self) -> &'static str {
        match self {
            ControllerName::Naive => "naive",
            ControllerName::Min => "min",
            ControllerName::Full => "full",
        }
    }

    fn seed_index(&self) -> u64 {
        match self {
            ControllerName::Naive => 0,
            ControllerName::Min => 1,
            ControllerName::Full => 2,
        }
    }
}

impl std::str::FromStr for ControllerName {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "naive" => Ok(ControllerName::Naive),
            "min" => Ok(ControllerName::Min),
            "full" => Ok(ControllerName::Full),
            _ => Err(format!("unknown controller `{s}` (expected full, min or naive)")),
        }
    }
}

impl std::fmt::Display for ControllerName {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BenchConfig {
    /// Bundled environment names or paths to environment files.
    pub environments: Vec<String>,
    pub robots: Vec<RobotKind>,
    pub trees_per_env: usize,
    pub trials_per_tree: usize,
    pub controllers: Vec<ControllerName>,
    pub dynamics: DynamicsParams,
    /// Overrides the per-robot default weights.
    pub weights: Option<WeightMatrix>,
    pub dynamic_obstacles: bool,
    /// Used for environments that do not define moving obstacles.
    pub default_dynamic: DynamicSpec,
    pub planner: PlannerParams,
    pub mppi: MppiParams,
    pub query: ValueQueryParams,
    pub naive_tolerance: f64,
    pub collision_policy: CollisionPolicy,
    pub master_seed: u64,
    pub parallel: bool,
}

impl Default for BenchConfig {
    fn default() -> Self {
        Self {
            environments: Environment::builtin_names().map(String::from).collect(),
            robots: vec![RobotKind::Point],
            trees_per_env: 10,
            trials_per_tree: 5,
            controllers: vec![ControllerName::Naive, ControllerName::Min, ControllerName::Full],
            dynamics: DynamicsParams::default(),
            weights: None,
            dynamic_obstacles: false,
            default_dynamic: DynamicSpec {
                count: 6,
                radius: 0.35,
                max_speed: 0.06,
                perturb: 0.02,
            },
            planner: PlannerParams::default(),
            mppi: MppiParams::default(),
            query: ValueQueryParams::default(),
            naive_tolerance: NaiveFollower::DEFAULT_TOLERANCE,
            collision_policy: CollisionPolicy::Continue,
            master_seed: 0,
            parallel: true,
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum BenchError {
    #[error("invalid benchmark config: {0}")]
    Config(String),
    #[error(transparent)]
    World(#[from] WorldError),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed file: {0}")]
    Json(#[from] serde_json::Error),
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> BenchError + '_ {
    move |source| BenchError::Io {
        path: path.display().to_string(),
        source,
    }
}

impl BenchConfig {
    /// The full protocol: 50 trees per environment, 5 trials per tree.
    pub fn full_scale(mut self) -> Self {
        self.trees_per_env = 50;
        self.trials_per_tree = 5;
        self
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, BenchError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(io_err(path))?;
        Ok(serde_json::from_str(&text)?)
    }

    pub fn validate(&self) -> Result<(), BenchError> {
        let bad = |m: &str| Err(BenchError::Config(m.to_string()));
        if self.environments.is_empty() || self.robots.is_empty() || self.controllers.is_empty() {
            return bad("environments, robots and controllers must be non-empty");
        }
        if self.trees_per_env == 0 || self.trials_per_tree == 0 {
            return bad("trees_per_env and trials_per_tree must be at least 1");
        }
        if self.controllers.contains(&ControllerName::Naive)
            && (self.dynamics.order != Order::First || self.dynamic_obstacles)
        {
            return bad("the naive controller supports only first-order dynamics without moving obstacles");
        }
        self.dynamics.validate().map_err(BenchError::Config)?;
        self.planner.validate().map_err(BenchError::Config)?;
        self.mppi.validate().map_err(BenchError::Config)?;
        let m_final = self.planner.steer_radius_min * self.planner.search_radius_factor;
        if !(self.query.search_radius > m_final) {
            return bad("search radius must exceed the final planner connection radius");
        }
        Ok(())
    }

    /// Hex digest of the canonical JSON form, embedded in archive records.
    pub fn hash(&self) -> String {
        let json = serde_json::to_string(self).expect("config serializes");
        let digest = Sha256::digest(json.as_bytes());
        digest[..8].iter().fold(String::new(), |mut s, b| {
            let _ = write!(s, "{b:02x}");
            s
        })
    }

    pub fn weights_for(&self, kind: RobotKind) -> WeightMatrix {
        self.weights.unwrap_or_else(|| WeightMatrix::default_for(kind))
    }

    fn resolve_environments(&self) -> Result<Vec<Environment>, BenchError> {
        self.environments
            .iter()
            .map(|e| match Environment::builtin(e) {
                Some(env) if !Path::new(e).exists() => Ok(env),
                _ => Ok(Environment::load(e)?),
            })
            .collect()
    }
}

/// One archived trial.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ArchiveRecord {
    pub config_hash: String,
    pub env: String,
    pub robot: RobotKind,
    pub tree: usize,
    pub controller: ControllerName,
    pub trial: usize,
    pub seed: u64,
    #[serde(flatten)]
    pub record: TrialRecord,
}

/// A planning run that failed to connect the start.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlannerFailureRecord {
    pub env: String,
    pub robot: RobotKind,
    pub tree: usize,
    pub seed: u64,
    pub iterations: usize,
}

/// Per-tree normalized costs for one controller.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct NormalizedCost {
    pub ratios: Vec<f64>,
    pub mean: Option<f64>,
    pub std: Option<f64>,
    pub trees_included: usize,
    pub trees_excluded: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AggregateStats {
    pub robot: RobotKind,
    pub controller: ControllerName,
    pub trials: usize,
    pub failures: usize,
    pub failure_pct: f64,
    /// Collided trials among those that did not fail.
    pub collisions: usize,
    pub collision_pct: f64,
    pub normalized_cost_mean: Option<f64>,
    pub normalized_cost_std: Option<f64>,
    pub trees_included: usize,
    pub trees_excluded: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ControllerTiming {
    pub controller: ControllerName,
    pub iterations: usize,
    pub mean_ms: f64,
    pub p95_ms: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TimingReport {
    pub controllers: Vec<ControllerTiming>,
    /// Mean iteration time of `full` over `min`, when both ran.
    pub full_over_min: Option<f64>,
}

#[derive(Clone, Debug)]
pub struct BenchResult {
    pub records: Vec<ArchiveRecord>,
    pub planner_failures: Vec<PlannerFailureRecord>,
    pub stats: Vec<AggregateStats>,
    pub timing: TimingReport,
}

/// Minimum successful collision-free trials for a tree to count toward a
/// controller's normalized cost.
pub const MIN_CLEAN_TRIALS: usize = 3;

/// Normalized cost per controller: per tree, the mean cost of successful,
/// collision-free trials divided by the same mean for `min`. Trees where a
/// controller has fewer than three such trials are excluded for it; trees
/// where `min` is excluded count for no controller.
pub fn normalized_cost(records: &[ArchiveRecord]) -> BTreeMap<(RobotKind, ControllerName), NormalizedCost> {
    type TreeKey = (String, RobotKind, usize);
    let mut per_tree: BTreeMap<TreeKey, BTreeMap<ControllerName, Vec<f64>>> = BTreeMap::new();
    for r in records {
        let entry = per_tree.entry((r.env.clone(), r.robot, r.tree)).or_default();
        let costs = entry.entry(r.controller).or_default();
        if r.record.outcome == Outcome::Success {
            costs.push(r.record.true_cost);
        }
    }
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    let mut out: BTreeMap<(RobotKind, ControllerName), NormalizedCost> = BTreeMap::new();
    for ((_, robot, _), by_ctrl) in &per_tree {
        let min_mean = by_ctrl
            .get(&ControllerName::Min)
            .filter(|c| c.len() >= MIN_CLEAN_TRIALS)
            .map(|c| mean(c));
        for (ctrl, costs) in by_ctrl {
            let nc = out.entry((*robot, *ctrl)).or_default();
            match min_mean {
                Some(m) if costs.len() >= MIN_CLEAN_TRIALS => {
                    nc.ratios.push(mean(costs) / m);
                    nc.trees_included += 1;
                }
                _ => nc.trees_excluded += 1,
            }
        }
    }
    for nc in out.values_mut() {
        let n = nc.ratios.len();
        if n > 0 {
            let m = mean(&nc.ratios);
            let var = if n > 1 {
                nc.ratios.iter().map(|r| (r - m).powi(2)).sum::<f64>() / (n - 1) as f64
            } else {
                0.0
            };
            nc.mean = Some(m);
            nc.std = Some(var.sqrt());
        }
    }
    out
}

/// Failure, collision and normalized-cost statistics; a pure function of the
/// archive records.
pub fn aggregate(records: &[ArchiveRecord]) -> Vec<AggregateStats> {
    let mut groups: BTreeMap<(RobotKind, ControllerName), Vec<&ArchiveRecord>> = BTreeMap::new();
    for r in records {
        groups.entry((r.robot, r.controller)).or_default().push(r);
    }
    let norm = normalized_cost(records);
    groups
        .into_iter()
        .map(|((robot, controller), rs)| {
            let trials = rs.len();
            let failures = rs.iter().filter(|r| r.record.outcome == Outcome::Failure).count();
            let arrived = trials - failures;
            let collisions = rs.iter().filter(|r| r.record.outcome == Outcome::Collision).count();
            let pct = |k: usize, n: usize| if n == 0 { 0.0 } else { 100.0 * k as f64 / n as f64 };
            let nc = norm.get(&(robot, controller)).cloned().unwrap_or_default();
            AggregateStats {
                robot,
                controller,
                trials,
                failures,
                failure_pct: pct(failures, trials),
                collisions,
                collision_pct: pct(collisions, arrived),
                normalized_cost_mean: nc.mean,
                normalized_cost_std: nc.std,
                trees_included: nc.trees_included,
                trees_excluded: nc.trees_excluded,
            }
        })
        .collect()
}

/// Mean and 95th-percentile iteration latency per controller.
pub fn timing_report(samples: &BTreeMap<ControllerName, Vec<f64>>) -> TimingReport {
    let controllers: Vec<ControllerTiming> = samples
        .iter()
        .filter(|(_, v)| !v.is_empty())
        .map(|(c, v)| {
            let mut sorted = v.clone();
            sorted.sort_by(f64::total_cmp);
            let p95_idx = ((sorted.len() as f64 * 0.95).ceil() as usize).clamp(1, sorted.len()) - 1;
            ControllerTiming {
                controller: *c,
                iterations: v.len(),
                mean_ms: v.iter().sum::<f64>() / v.len() as f64,
                p95_ms: sorted[p95_idx],
            }
        })
        .collect();
    let mean_of = |name| controllers.iter().find(|t| t.controller == name).map(|t| t.mean_ms);
    let full_over_min = match (mean_of(ControllerName::Full), mean_of(ControllerName::Min)) {
        (Some(f), Some(m)) if m > 0.0 => Some(f / m),
        _ => None,
    };
    TimingReport {
        controllers,
        full_over_min,
    }
}

struct TreeJob {
    env_idx: usize,
    robot: RobotKind,
    tree: usize,
}

struct PlannedTree {
    file: TreeFile,
    min_path: Vec<usize>,
}

fn plan_tree(cfg: &BenchConfig, envs: &[Environment], job: &TreeJob) -> Result<PlannedTree, PlannerFailureRecord> {
    let env = &envs[job.env_idx];
    let robot = RobotModel::of_kind(job.robot);
    let w = cfg.weights_for(job.robot);
    let key = StreamKey::new(format!("plan:{}:{}", env.name, job.robot), &[job.env_idx as u64, job.tree as u64]);
    let seed = derive_seed(cfg.master_seed, &key);
    let params = PlannerParams {
        rng_seed: seed,
        ..cfg.planner
    };
    let mut rng = derive(seed, &StreamKey::new("planner", &[]));
    match rrt_sharp(env, &robot, &w, &params, &mut rng) {
        Ok(plan) => {
            let min_path = extract_min_path(&plan.graph, plan.start_index).expect("start has a finite value");
            Ok(PlannedTree {
                file: TreeFile {
                    env_name: env.name.clone(),
                    robot: job.robot,
                    graph: plan.graph,
                    start_index: Some(plan.start_index),
                    rng_seed: seed,
                },
                min_path,
            })
        }
        Err(f) => Err(PlannerFailureRecord {
            env: env.name.clone(),
            robot: job.robot,
            tree: job.tree,
            seed,
            iterations: f.iterations,
        }),
    }
}

/// Plans every tree, runs every trial and aggregates. When `out_dir` is
/// given, trees, the raw archive and the summaries are written there.
pub fn run_benchmark(cfg: &BenchConfig, out_dir: Option<&Path>) -> Result<BenchResult, BenchError> {
    cfg.validate()?;
    let envs = cfg.resolve_environments()?;
    for env in &envs {
        for &kind in &cfg.robots {
            env.validate_for(&RobotModel::of_kind(kind), &cfg.weights_for(kind))?;
        }
    }
    let config_hash = cfg.hash();
    let jobs: Vec<TreeJob> = (0..envs.len())
        .flat_map(|env_idx| {
            cfg.robots.iter().flat_map(move |&robot| {
                (0..cfg.trees_per_env).map(move |tree| TreeJob { env_idx, robot, tree })
            })
        })
        .collect();

    let run_job = |job: &TreeJob| -> Result<(Vec<ArchiveRecord>, Vec<(ControllerName, Vec<f64>)>, TreeFile), PlannerFailureRecord> {
        let planned = plan_tree(cfg, &envs, job)?;
        let env = &envs[job.env_idx];
        let robot = RobotModel::of_kind(job.robot);
        let w = cfg.weights_for(job.robot);
        let g = &planned.file.graph;
        let full_set = subset_indices(g, TreeSubset::Full, &planned.min_path);
        let min_set = subset_indices(g, TreeSubset::MinPathOnly, &planned.min_path);
        let full_tree = TerminalValue::new(g, &full_set, cfg.query.search_radius);
        let min_tree = TerminalValue::new(g, &min_set, cfg.query.search_radius);
        let waypoints: Vec<_> = planned.min_path.iter().map(|&i| *g.vertex(i)).collect();
        let obstacles = cfg
            .dynamic_obstacles
            .then(|| env.dynamic.unwrap_or(cfg.default_dynamic));

        let trials: Vec<(ControllerName, usize)> = cfg
            .controllers
            .iter()
            .flat_map(|&c| (0..cfg.trials_per_tree).map(move |t| (c, t)))
            .collect();
        let run_one = |&(ctrl, trial): &(ControllerName, usize)| {
            let key = StreamKey::new(
                format!("trial:{}:{}", env.name, job.robot),
                &[job.env_idx as u64, job.tree as u64, ctrl.seed_index(), trial as u64],
            );
            let seed = derive_seed(cfg.master_seed, &key);
            let setup = crate::controller::TrialSetup {
                env,
                robot: &robot,
                weights: &w,
                dynamics: &cfg.dynamics,
                obstacles,
                collision_policy: cfg.collision_policy,
                max_steps: cfg.mppi.max_steps,
                seed,
                trace: false,
                keep_trajectory: false,
            };
            let kind = match ctrl {
                ControllerName::Naive => ControllerKind::Naive {
                    waypoints: waypoints.clone(),
                    tolerance: cfg.naive_tolerance,
                },
                ControllerName::Min => ControllerKind::Mppi {
                    tree: &min_tree,
                    params: &cfg.mppi,
                    check_terminal_segment: false,
                },
                ControllerName::Full => ControllerKind::Mppi {
                    tree: &full_tree,
                    params: &cfg.mppi,
                    check_terminal_segment: false,
                },
            };
            let run = run_trial(&setup, kind).expect("config validated against controller limits");
            (
                ArchiveRecord {
                    config_hash: config_hash.clone(),
                    env: env.name.clone(),
                    robot: job.robot,
                    tree: job.tree,
                    controller: ctrl,
                    trial,
                    seed,
                    record: run.record,
                },
                (ctrl, run.iteration_ms),
            )
        };
        let results: Vec<_> = if cfg.parallel {
            trials.par_iter().map(run_one).collect()
        } else {
            trials.iter().map(run_one).collect()
        };
        let (records, timings) = results.into_iter().unzip();
        Ok((records, timings, planned.file))
    };

    let per_tree: Vec<_> = if cfg.parallel {
        jobs.par_iter().map(run_job).collect()
    } else {
        jobs.iter().map(run_job).collect()
    };

    let mut records = Vec::new();
    let mut planner_failures = Vec::new();
    let mut timing_samples: BTreeMap<ControllerName, Vec<f64>> = BTreeMap::new();
    let mut trees = Vec::new();
    for r in per_tree {
        match r {
            Ok((recs, timings, tree)) => {
                records.extend(recs);
                for (c, ms) in timings {
                    timing_samples.entry(c).or_default().extend(ms);
                }
                trees.push(tree);
            }
            Err(f) => planner_failures.push(f),
        }
    }
    let stats = aggregate(&records);
    let timing = timing_report(&timing_samples);
    let result = BenchResult {
        records,
        planner_failures,
        stats,
        timing,
    };
    if let Some(dir) = out_dir {
        write_outputs(dir, cfg, &result, &trees)?;
    }
    Ok(result)
}

pub const ARCHIVE_FILE: &str = "trials.jsonl";

/// One JSON object per line, in aggregation order.
pub fn archive_to_string(records: &[ArchiveRecord]) -> String {
    records.iter().fold(String::new(), |mut s, r| {
        s.push_str(&serde_json::to_string(r).expect("record serializes"));
        s.push('\n');
        s
    })
}

pub fn read_archive(path: impl AsRef<Path>) -> Result<Vec<ArchiveRecord>, BenchError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(io_err(path))?;
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| serde_json::from_str(l).map_err(BenchError::from))
        .collect()
}

fn fmt_opt(v: Option<f64>, digits: usize) -> String {
    v.map_or_else(|| "-".to_string(), |x| format!("{x:.digits$}"))
}

/// Plain-text summary table.
pub fn stats_table(stats: &[AggregateStats], timing: &TimingReport, failures: &[PlannerFailureRecord]) -> String {
    let mut s = String::new();
    let _ = writeln!(
        s,
        "{:<6} {:<6} {:>7} {:>9} {:>11} {:>17} {:>9}",
        "robot", "ctrl", "trials", "failure%", "collision%", "normalized cost", "trees"
    );
    for a in stats {
        let nc = match (a.normalized_cost_mean, a.normalized_cost_std) {
            (Some(m), Some(sd)) => format!("{m:.3} ± {sd:.3}"),
            _ => "-".into(),
        };
        let _ = writeln!(
            s,
            "{:<6} {:<6} {:>7} {:>9.1} {:>11.1} {:>17} {:>4}/{:<4}",
            a.robot.to_string(),
            a.controller.as_str(),
            a.trials,
            a.failure_pct,
            a.collision_pct,
            nc,
            a.trees_included,
            a.trees_included + a.trees_excluded
        );
    }
    for t in &timing.controllers {
        let _ = writeln!(
            s,
            "timing {:<6} mean {:.3} ms  p95 {:.3} ms  ({} iterations)",
            t.controller.as_str(),
            t.mean_ms,
            t.p95_ms,
            t.iterations
        );
    }
    let _ = writeln!(s, "full/min iteration time ratio: {}", fmt_opt(timing.full_over_min, 2));
    if !failures.is_empty() {
        let _ = writeln!(s, "planner failures: {}", failures.len());
    }
    s
}

fn write_outputs(dir: &Path, cfg: &BenchConfig, result: &BenchResult, trees: &[TreeFile]) -> Result<(), BenchError> {
    let tree_dir: PathBuf = dir.join("trees");
    std::fs::create_dir_all(&tree_dir).map_err(io_err(&tree_dir))?;
    let mut index_per_key: BTreeMap<(String, RobotKind), usize> = BTreeMap::new();
    for t in trees {
        let k = index_per_key.entry((t.env_name.clone(), t.robot)).or_default();
        let p = tree_dir.join(format!("{}-{}-{:03}.json", t.env_name, t.robot, *k));
        *k += 1;
        std::fs::write(&p, t.to_json()).map_err(io_err(&p))?;
    }
    let write = |name: &str, body: String| -> Result<(), BenchError> {
        let p = dir.join(name);
        std::fs::write(&p, body).map_err(io_err(&p))
    };
    write(ARCHIVE_FILE, archive_to_string(&result.records))?;
    write(
        "planner_failures.jsonl",
        result.planner_failures.iter().fold(String::new(), |mut s, f| {
            s.push_str(&serde_json::to_string(f).expect("serializes"));
            s.push('\n');
            s
        }),
    )?;
    write("config.json", serde_json::to_string_pretty(cfg)?)?;
    write("stats.json", serde_json::to_string_pretty(&result.stats)?)?;
    write("timing.json", serde_json::to_string_pretty(&result.timing)?)?;
    write("stats.txt", stats_table(&result.stats, &result.timing, &result.planner_failures))?;
    Ok(())
}
