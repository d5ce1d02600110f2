//! `ingrasp`: plan, simulate, evaluate and gradient-check in-grasp
//! manipulation trajectories.
//!
//! Exit codes: 0 success, 1 input error, 2 planner did not converge,
//! 3 gradient audit failed.

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use ingrasp::costs::{load_grasp_file, CostWeights, GraspSpec, PlanMode};
use ingrasp::eval::{evaluate_batch, BatchSpec};
use ingrasp::feedback::FeedbackConfig;
use ingrasp::fixtures;
use ingrasp::geometry::load_scene_file;
use ingrasp::gradcheck::{run_gradcheck, GradcheckConfig};
use ingrasp::kinematics::{load_hand_model_file, HandModel};
use ingrasp::planner::{load_plan_file, plan, PlanResult, PlannerConfig};
use ingrasp::pose::Pose;
use ingrasp::simulator::{simulate, DisturbanceModel, SimulationSummary};

#[derive(Parser)]
#[command(name = "ingrasp", version, about = "In-grasp manipulation trajectory planning")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Plan a trajectory moving the grasped object to a goal pose.
    Plan(PlanArgs),
    /// Execute a plan in the kinematic simulator.
    Simulate(SimulateArgs),
    /// Plan and simulate a batch of goals, writing a metrics table.
    Evaluate(EvaluateArgs),
    /// Compare analytic cost gradients against finite differences.
    Gradcheck(GradcheckArgs),
}

/// Hand and grasp files. Both default to the bundled synthetic fixtures.
#[derive(Args)]
struct GraspArgs {
    /// Hand model document.
    #[arg(long)]
    hand: Option<PathBuf>,
    /// Grasp document; its hand_model path is used when --hand is absent.
    #[arg(long)]
    grasp: Option<PathBuf>,
}

#[derive(Args)]
struct PlanArgs {
    #[command(flatten)]
    files: GraspArgs,
    /// Goal object pose "x y z roll pitch yaw" in the palm frame (m, rad).
    #[arg(long, allow_hyphen_values = true)]
    goal: String,
    /// Interpret --goal as an offset from the initial object pose.
    #[arg(long)]
    relative: bool,
    /// Convex obstacle scene document.
    #[arg(long)]
    scene: Option<PathBuf>,
    #[arg(long, default_value = "waypoint-interp")]
    mode: PlanMode,
    /// Full planner configuration document; --mode and --scene override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, default_value = "plan.json")]
    out: PathBuf,
}

#[derive(Args)]
struct SimulateArgs {
    /// Plan document written by `plan`.
    #[arg(long)]
    plan: PathBuf,
    #[command(flatten)]
    files: GraspArgs,
    /// Correct the thumb from the observed object pose.
    #[arg(long)]
    feedback: bool,
    /// Feedback gain.
    #[arg(long, requires = "feedback")]
    gain: Option<f64>,
    /// Disturbance seed.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Run without lag, noise or slip.
    #[arg(long, conflicts_with = "disturbance")]
    noiseless: bool,
    /// Disturbance model document.
    #[arg(long)]
    disturbance: Option<PathBuf>,
    /// Output directory for trace.csv and metrics.json.
    #[arg(long, default_value = ".")]
    out: PathBuf,
}

#[derive(Args)]
struct EvaluateArgs {
    /// Batch document; relative paths inside resolve against its directory.
    #[arg(long)]
    batch: PathBuf,
    /// Table output; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct GradcheckArgs {
    #[command(flatten)]
    files: GraspArgs,
    /// Scene for the collision term; the bundled near-contact scene by default.
    #[arg(long)]
    scene: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Random instances per term.
    #[arg(long, default_value_t = 100)]
    samples: usize,
    /// JSON report output.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Corrupt one term's analytic gradient (self-test of the audit).
    #[arg(long, hide = true)]
    inject_fault: Option<String>,
}

/// Failures that carry their own exit code.
#[derive(Debug)]
enum Outcome {
    NotConverged(String),
    AuditFailed(String),
}

impl std::fmt::Display for Outcome {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Outcome::NotConverged(m) => write!(f, "planner did not converge: {m}"),
            Outcome::AuditFailed(m) => write!(f, "{m}"),
        }
    }
}

impl std::error::Error for Outcome {}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Plan(a) => cmd_plan(a),
        Command::Simulate(a) => cmd_simulate(a),
        Command::Evaluate(a) => cmd_evaluate(a),
        Command::Gradcheck(a) => cmd_gradcheck(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            match e.downcast_ref::<Outcome>() {
                Some(Outcome::NotConverged(_)) => ExitCode::from(2),
                Some(Outcome::AuditFailed(_)) => ExitCode::from(3),
                None => ExitCode::from(1),
            }
        }
    }
}

fn load_hand(path: Option<&Path>) -> Result<Option<Arc<HandModel>>> {
    path.map(|p| load_hand_model_file(p).map(Arc::new).with_context(|| format!("loading hand {}", p.display())))
        .transpose()
}

/// Resolved grasp plus the hand path recorded in output documents.
fn load_grasp(files: &GraspArgs) -> Result<(GraspSpec, String)> {
    let hand = load_hand(files.hand.as_deref())?;
    let label = files.hand.as_ref().map(|p| p.display().to_string());
    match &files.grasp {
        Some(path) => {
            let grasp = load_grasp_file(path, hand).with_context(|| format!("loading grasp {}", path.display()))?;
            let label = match label {
                Some(l) => l,
                None => ingrasp::costs::GraspDoc::parse(&std::fs::read_to_string(path)?)?.hand_model,
            };
            Ok((grasp, label))
        }
        None => {
            let doc = ingrasp::costs::GraspDoc::parse(fixtures::GRASP_JSON)?;
            let hand = hand.unwrap_or_else(fixtures::synthetic_hand);
            Ok((doc.build(hand)?, label.unwrap_or(doc.hand_model)))
        }
    }
}

fn parse_goal(text: &str) -> Result<([f64; 3], [f64; 3])> {
    let v: Vec<f64> = text
        .split(|c: char| c.is_whitespace() || c == ',')
        .filter(|s| !s.is_empty())
        .map(|s| s.parse::<f64>().with_context(|| format!("goal entry '{s}' is not a number")))
        .collect::<Result<_>>()?;
    if v.len() != 6 {
        bail!("--goal needs 6 numbers (x y z roll pitch yaw), got {}", v.len());
    }
    Ok(([v[0], v[1], v[2]], [v[3], v[4], v[5]]))
}

fn write_file(path: &Path, contents: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    std::fs::write(path, contents).with_context(|| format!("writing {}", path.display()))
}

fn cmd_plan(args: PlanArgs) -> Result<()> {
    let (grasp, hand_label) = load_grasp(&args.files)?;
    let (xyz, rpy) = parse_goal(&args.goal)?;
    let goal = if args.relative {
        let x0 = grasp.object_pose();
        // Translation in the palm frame, rotation applied on the palm side.
        let offset = Pose::from_xyz_rpy(xyz, rpy);
        Pose::new(x0.position + offset.position, offset.orientation * x0.orientation)
    } else {
        Pose::from_xyz_rpy(xyz, rpy)
    };
    let mut config = match &args.config {
        Some(p) => {
            let text = std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            serde_json::from_str::<PlannerConfig>(&text).with_context(|| format!("parsing planner config {}", p.display()))?
        }
        None => PlannerConfig::default(),
    };
    config.mode = args.mode;
    if let Some(p) = &args.scene {
        config.scene = Some(load_scene_file(p).with_context(|| format!("loading scene {}", p.display()))?);
    }
    let result = plan(&grasp, &goal, &config)?;
    let doc = result.to_doc(&grasp, &hand_label);
    write_file(&args.out, &serde_json::to_string_pretty(&doc)?)?;
    print_plan_summary(&result, &args.out);
    if !result.report.converged {
        return Err(Outcome::NotConverged(result.report.message.clone()).into());
    }
    Ok(())
}

fn print_plan_summary(r: &PlanResult, out: &Path) {
    let rep = &r.report;
    println!("converged: {}", rep.converged);
    println!("iterations: {} ({} outer)", rep.iterations, rep.outer_iterations);
    println!("cost: {:.6e} -> {:.6e}", rep.initial_cost, rep.final_cost);
    println!("max violation: {:.3e}", rep.max_violation);
    println!("final position error: {:.3} mm", 1000.0 * r.final_position_error);
    println!("final orientation error: {:.3} %", r.final_orientation_error);
    if let Some(sd) = r.min_signed_distance {
        println!("min signed distance: {sd:.6} m");
    }
    if r.collision_audit_failed {
        println!("warning: dense path penetrates an obstacle");
    }
    println!("time: {:.3} s", rep.wall_time_s);
    println!("wrote {}", out.display());
}

fn cmd_simulate(args: SimulateArgs) -> Result<()> {
    let doc = load_plan_file(&args.plan).with_context(|| format!("loading plan {}", args.plan.display()))?;
    let grasp = if args.files.grasp.is_some() {
        load_grasp(&args.files)?.0
    } else {
        let hand = load_hand(args.files.hand.as_deref())?.unwrap_or_else(fixtures::synthetic_hand);
        doc.grasp.build(hand)?
    };
    let result = PlanResult::from_doc(&doc, &grasp)?;
    let disturbance = if args.noiseless {
        DisturbanceModel::none()
    } else if let Some(p) = &args.disturbance {
        let text = std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
        serde_json::from_str(&text).with_context(|| format!("parsing disturbance {}", p.display()))?
    } else {
        DisturbanceModel::default()
    }
    .with_seed(args.seed);
    let feedback = args.feedback.then(|| FeedbackConfig {
        gain: args.gain.unwrap_or(FeedbackConfig::default().gain),
        ..FeedbackConfig::default()
    });
    let trace = simulate(&result, &grasp, &disturbance, feedback.as_ref())?;
    let summary = SimulationSummary::new(&result, &grasp, &trace, &disturbance, feedback.as_ref())?;
    let trace_path = args.out.join("trace.csv");
    let metrics_path = args.out.join("metrics.json");
    write_file(&trace_path, &trace.to_csv()?)?;
    write_file(&metrics_path, &serde_json::to_string_pretty(&summary)?)?;
    let pct = |v: Option<f64>| v.map_or("n/a".to_string(), |x| format!("{x:.2} %"));
    println!(
        "predicted: {:.4} cm ({}), orientation {:.3} %",
        summary.predicted.position_error_cm,
        pct(summary.predicted.position_error_pct),
        summary.predicted.orientation_error_pct
    );
    println!(
        "realized:  {:.4} cm ({}), orientation {:.3} %",
        summary.realized.position_error_cm,
        pct(summary.realized.position_error_pct),
        summary.realized.orientation_error_pct
    );
    println!("wrote {} and {}", trace_path.display(), metrics_path.display());
    Ok(())
}

fn cmd_evaluate(args: EvaluateArgs) -> Result<()> {
    let spec = BatchSpec::load(&args.batch)?;
    let base = args.batch.parent().unwrap_or(Path::new("."));
    let batch = spec.resolve(base)?;
    let table = evaluate_batch(&batch)?.to_table();
    match &args.out {
        Some(p) => {
            write_file(p, &table)?;
            eprintln!("wrote {}", p.display());
        }
        None => print!("{table}"),
    }
    Ok(())
}

fn cmd_gradcheck(args: GradcheckArgs) -> Result<()> {
    let (grasp, _) = load_grasp(&args.files)?;
    let scene = match &args.scene {
        Some(p) => load_scene_file(p).with_context(|| format!("loading scene {}", p.display()))?,
        None => fixtures::gradcheck_scene(),
    };
    let config = GradcheckConfig {
        samples: args.samples,
        seed: args.seed,
        inject_fault: args.inject_fault,
        ..GradcheckConfig::default()
    };
    let report = run_gradcheck(&grasp, &scene, &CostWeights::default(), &config)?;
    for t in &report.terms {
        println!(
            "{:<22} {} max rel err {:.3e} over {} samples ({} draws skipped), worst seed {}",
            t.term,
            if t.passed { "ok  " } else { "FAIL" },
            t.max_relative_error,
            t.samples,
            t.skipped,
            t.worst_seed
        );
    }
    println!("time: {:.2} s", report.wall_time_s);
    if let Some(p) = &args.out {
        write_file(p, &serde_json::to_string_pretty(&report)?)?;
    }
    let failed: Vec<String> = report
        .failures()
        .map(|t| format!("{} (seed {})", t.term, t.worst_seed))
        .collect();
    if !failed.is_empty() {
        return Err(Outcome::AuditFailed(format!("gradient check failed: {}", failed.join(", "))).into());
    }
    Ok(())
}
