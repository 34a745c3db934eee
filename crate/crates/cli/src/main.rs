mod render;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use rrt_mppi::bench::{run_benchmark, stats_table, BenchConfig, ControllerName};
use rrt_mppi::controller::{run_trial, CollisionPolicy, ControllerKind, TraceRecord, TrialRecord, TrialSetup};
use rrt_mppi::dynamics::Order;
use rrt_mppi::graph::TreeFile;
use rrt_mppi::planner::{extract_min_path, rrt_sharp};
use rrt_mppi::rng::{derive, StreamKey};
use rrt_mppi::terminal_value::{subset_indices, TerminalValue, TreeSubset};
use rrt_mppi::world::{Environment, RobotKind, RobotModel};

#[derive(Parser)]
#[command(name = "rrt-mppi", version, about = "Plan with RRT#, track with MPPI, benchmark both")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Grow a planning tree and write it to a file.
    Plan(PlanArgs),
    /// Execute one closed-loop trial on a saved tree.
    Run(RunArgs),
    /// Run a benchmark described by a config file.
    Bench(BenchArgs),
    /// Draw an environment, tree and trial as SVG.
    Render(RenderArgs),
}

#[derive(Args)]
struct PlanArgs {
    /// Environment file or bundled environment name.
    #[arg(long)]
    env: String,
    #[arg(long, default_value = "point")]
    robot: RobotKind,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
    /// Benchmark config whose planner block provides defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    max_iterations: Option<usize>,
    #[arg(long)]
    steer_radius_max: Option<f64>,
    #[arg(long)]
    steer_radius_min: Option<f64>,
    #[arg(long)]
    search_radius_factor: Option<f64>,
    #[arg(long)]
    start_bias: Option<f64>,
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    tree: PathBuf,
    #[arg(long)]
    controller: ControllerName,
    #[arg(long, default_value_t = 1, value_parser = clap::value_parser!(u8).range(1..=2))]
    order: u8,
    /// Number of moving obstacles (0 disables them).
    #[arg(long, default_value_t = 0)]
    dynamic: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Print one JSON record per control step and keep it in the output file.
    #[arg(long)]
    trace: bool,
    /// Environment file or bundled name; defaults to the tree's environment.
    #[arg(long)]
    env: Option<String>,
    /// Where to write the trial file.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Benchmark config whose parameter blocks provide defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    max_steps: Option<usize>,
    #[arg(long)]
    samples: Option<usize>,
    #[arg(long)]
    horizon: Option<usize>,
    #[arg(long)]
    temperature: Option<f64>,
    #[arg(long)]
    noise_std: Option<f64>,
    #[arg(long)]
    search_radius: Option<f64>,
    #[arg(long)]
    collision_policy: Option<String>,
}

#[derive(Args)]
struct BenchArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Use 50 trees per environment and 5 trials per tree.
    #[arg(long)]
    full_scale: bool,
    #[arg(long)]
    master_seed: Option<u64>,
    /// Run trials one after another.
    #[arg(long)]
    serial: bool,
}

#[derive(Args)]
struct RenderArgs {
    #[arg(long)]
    env: String,
    #[arg(long)]
    tree: Option<PathBuf>,
    #[arg(long)]
    trial: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

/// A saved trial: the record plus enough context to render it.
#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrialFile {
    pub env: String,
    pub robot: RobotKind,
    pub controller: ControllerName,
    pub seed: u64,
    pub record: TrialRecord,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub trace: Vec<TraceRecord>,
}

enum Failure {
    Domain(String),
    Usage(String),
}

impl Failure {
    fn usage(e: impl std::fmt::Display) -> Self {
        Failure::Usage(e.to_string())
    }
}

fn load_env(spec: &str) -> Result<Environment, Failure> {
    if !Path::new(spec).exists() {
        if let Some(env) = Environment::builtin(spec) {
            return Ok(env);
        }
        return Err(Failure::Usage(format!("{spec}: no such environment file or bundled environment")));
    }
    Environment::load(spec).map_err(Failure::usage)
}

fn load_config(path: &Option<PathBuf>) -> Result<BenchConfig, Failure> {
    match path {
        Some(p) => BenchConfig::load(p).map_err(Failure::usage),
        None => Ok(BenchConfig::default()),
    }
}

fn write_file(path: &Path, body: &str) -> Result<(), Failure> {
    std::fs::write(path, body).map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))
}

fn cmd_plan(a: PlanArgs) -> Result<(), Failure> {
    let env = load_env(&a.env)?;
    let cfg = load_config(&a.config)?;
    let mut params = cfg.planner;
    params.rng_seed = a.seed;
    if let Some(v) = a.max_iterations {
        params.max_iterations = v;
    }
    if let Some(v) = a.steer_radius_max {
        params.steer_radius_max = v;
    }
    if let Some(v) = a.steer_radius_min {
        params.steer_radius_min = v;
    }
    if let Some(v) = a.search_radius_factor {
        params.search_radius_factor = v;
    }
    if let Some(v) = a.start_bias {
        params.start_bias = v;
    }
    params.validate().map_err(Failure::Usage)?;
    let robot = RobotModel::of_kind(a.robot);
    let w = cfg.weights_for(a.robot);
    env.validate_for(&robot, &w).map_err(Failure::usage)?;
    let mut rng = derive(a.seed, &StreamKey::new("planner", &[]));
    let plan = rrt_sharp(&env, &robot, &w, &params, &mut rng).map_err(|e| Failure::Domain(e.to_string()))?;
    let file = TreeFile {
        env_name: env.name.clone(),
        robot: a.robot,
        graph: plan.graph,
        start_index: Some(plan.start_index),
        rng_seed: a.seed,
    };
    write_file(&a.out, &file.to_json())?;
    println!(
        "vertices {}  edges {}  V(start) {:.6}  iterations {}",
        file.graph.len(),
        file.graph.edge_count(),
        file.graph.value(plan.start_index),
        plan.iterations
    );
    Ok(())
}

fn cmd_run(a: RunArgs) -> Result<(), Failure> {
    let tree = TreeFile::load(&a.tree).map_err(Failure::usage)?;
    let env = load_env(a.env.as_deref().unwrap_or(&tree.env_name))?;
    let cfg = load_config(&a.config)?;
    let start = tree
        .start_index
        .ok_or_else(|| Failure::Usage(format!("{}: tree has no start vertex", a.tree.display())))?;
    let min_path = extract_min_path(&tree.graph, start).map_err(|e| Failure::Domain(e.to_string()))?;

    let mut dynamics = cfg.dynamics;
    dynamics.order = if a.order == 2 { Order::Second } else { Order::First };
    if let Some(v) = a.noise_std {
        dynamics.noise_std = v;
    }
    let mut mppi = cfg.mppi.clone();
    if let Some(v) = a.samples {
        mppi.num_samples = v;
    }
    if let Some(v) = a.horizon {
        mppi.horizon = v;
    }
    if let Some(v) = a.temperature {
        mppi.temperature = v;
    }
    if let Some(v) = a.max_steps {
        mppi.max_steps = v;
    }
    mppi.validate().map_err(Failure::Usage)?;
    let radius = a.search_radius.unwrap_or(cfg.query.search_radius);
    let collision_policy = match a.collision_policy.as_deref() {
        None => cfg.collision_policy,
        Some("continue") => CollisionPolicy::Continue,
        Some("terminate") => CollisionPolicy::Terminate,
        Some(other) => return Err(Failure::Usage(format!("unknown collision policy `{other}`"))),
    };
    let obstacles = (a.dynamic > 0).then(|| {
        let mut spec = env.dynamic.unwrap_or(cfg.default_dynamic);
        spec.count = a.dynamic;
        spec
    });

    let robot = RobotModel::of_kind(tree.robot);
    let w = *tree.graph.weights();
    let subset = match a.controller {
        ControllerName::Min => TreeSubset::MinPathOnly,
        _ => TreeSubset::Full,
    };
    let ids = subset_indices(&tree.graph, subset, &min_path);
    let tv = TerminalValue::new(&tree.graph, &ids, radius);
    let setup = TrialSetup {
        env: &env,
        robot: &robot,
        weights: &w,
        dynamics: &dynamics,
        obstacles,
        collision_policy,
        max_steps: mppi.max_steps,
        seed: a.seed,
        trace: a.trace,
        keep_trajectory: true,
    };
    let kind = match a.controller {
        ControllerName::Naive => ControllerKind::Naive {
            waypoints: min_path.iter().map(|&i| *tree.graph.vertex(i)).collect(),
            tolerance: cfg.naive_tolerance,
        },
        _ => ControllerKind::Mppi {
            tree: &tv,
            params: &mppi,
            check_terminal_segment: cfg.query.check_terminal_segment,
        },
    };
    let run = run_trial(&setup, kind).map_err(|e| Failure::Domain(e.to_string()))?;
    if a.trace {
        for line in &run.trace {
            println!("{}", serde_json::to_string(line).expect("trace serializes"));
        }
    }
    let r = &run.record;
    println!(
        "outcome {:?}  cost {:.6}  steps {}{}",
        r.outcome,
        r.true_cost,
        r.steps,
        r.failure.map(|f| format!("  failure {f:?}")).unwrap_or_default()
    );
    if let Some(out) = &a.out {
        let file = TrialFile {
            env: env.name.clone(),
            robot: tree.robot,
            controller: a.controller,
            seed: a.seed,
            record: run.record,
            trace: run.trace,
        };
        write_file(out, &serde_json::to_string(&file).expect("trial serializes"))?;
    }
    Ok(())
}

fn cmd_bench(a: BenchArgs) -> Result<(), Failure> {
    let mut cfg = BenchConfig::load(&a.config).map_err(Failure::usage)?;
    if a.full_scale {
        cfg = cfg.full_scale();
    }
    if let Some(s) = a.master_seed {
        cfg.master_seed = s;
    }
    if a.serial {
        cfg.parallel = false;
    }
    std::fs::create_dir_all(&a.out).map_err(|e| Failure::Usage(format!("{}: {e}", a.out.display())))?;
    let result = run_benchmark(&cfg, Some(&a.out)).map_err(|e| match e {
        rrt_mppi::bench::BenchError::Config(m) => Failure::Usage(m),
        other => Failure::usage(other),
    })?;
    print!("{}", stats_table(&result.stats, &result.timing, &result.planner_failures));
    Ok(())
}

fn cmd_render(a: RenderArgs) -> Result<(), Failure> {
    let env = load_env(&a.env)?;
    let tree = a.tree.as_ref().map(TreeFile::load).transpose().map_err(Failure::usage)?;
    let trial: Option<TrialFile> = match &a.trial {
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| Failure::Usage(format!("{}: {e}", p.display())))?;
            Some(serde_json::from_str(&text).map_err(|e| Failure::Usage(format!("{}: {e}", p.display())))?)
        }
        None => None,
    };
    let svg = render::svg(&env, tree.as_ref(), trial.as_ref().map(|t| (&t.record, t.trace.as_slice())))
        .map_err(Failure::Usage)?;
    write_file(&a.out, &svg)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Plan(a) => cmd_plan(a),
        Command::Run(a) => cmd_run(a),
        Command::Bench(a) => cmd_bench(a),
        Command::Render(a) => cmd_render(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Domain(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(1)
        }
        Err(Failure::Usage(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(2)
        }
    }
}
