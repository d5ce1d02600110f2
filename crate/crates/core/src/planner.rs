//! Builds and solves the trajectory problem for a grasp and goal. The solved
//! coarse trajectory is upsampled for execution and mapped to the predicted
//! object path.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::costs::{cost_breakdown, obstacle_clearances, total_cost, CostBreakdown, CostWeights, GraspSpec, PlanMode, PlanProblem};
use crate::error::{Error, Result};
use crate::geometry::{scene_min_signed_distance, ConvexScene};
use crate::optimizer::{
    max_violation, solve, solve_constrained, JointLimits, SolveReport, SolverConfig, StepConstraints, Trajectory,
};
use crate::pose::{Pose, PoseDoc};
use crate::simulator::orientation_error_percent;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PlannerConfig {
    /// Number of coarse intervals `T`.
    pub steps: usize,
    /// Coarse timestep, seconds.
    pub dt: f64,
    /// Joint velocity bound, rad/s.
    pub v_max: f64,
    pub weights: CostWeights,
    pub mode: PlanMode,
    pub scene: Option<ConvexScene>,
    /// Number of configurations in the dense trajectory.
    pub resolution: usize,
    pub solver: SolverConfig,
}

impl Default for PlannerConfig {
    fn default() -> Self {
        Self {
            steps: 10,
            dt: 0.167,
            v_max: 0.6,
            weights: CostWeights::default(),
            mode: PlanMode::WaypointInterp,
            scene: None,
            resolution: 100,
            solver: SolverConfig::default(),
        }
    }
}

impl PlannerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.steps < 2 {
            return Err(Error::InvalidInput(format!("T must be >= 2, got {}", self.steps)));
        }
        if !(self.dt > 0.0) || !(self.v_max > 0.0) {
            return Err(Error::InvalidInput("dt and v_max must be > 0".into()));
        }
        if self.resolution < self.steps + 1 {
            return Err(Error::InvalidInput(format!(
                "resolution {} is below T + 1 = {}",
                self.resolution,
                self.steps + 1
            )));
        }
        self.weights.validate()?;
        self.solver.validate()
    }
}

#[derive(Clone, Debug)]
pub struct PlanResult {
    pub goal: Pose,
    pub coarse: Trajectory,
    pub dense: Trajectory,
    /// Object pose at every dense step.
    pub predicted_path: Vec<Pose>,
    pub report: SolveReport,
    pub cost: CostBreakdown,
    /// Distance between the predicted final object position and the goal, meters.
    pub final_position_error: f64,
    /// Orientation error of the predicted final object pose, percent.
    pub final_orientation_error: f64,
    /// Smallest scene signed distance along the dense path, when a scene is present.
    pub min_signed_distance: Option<f64>,
    /// The dense path penetrates an obstacle even though the coarse steps may not.
    pub collision_audit_failed: bool,
    pub config: PlannerConfig,
}

/// Plans a trajectory moving the grasped object from its initial pose to `goal`
/// (palm frame).
pub fn plan(grasp: &GraspSpec, goal: &Pose, config: &PlannerConfig) -> Result<PlanResult> {
    config.validate()?;
    if !goal.is_finite() {
        return Err(Error::InvalidInput("goal pose is not finite".into()));
    }
    let problem = PlanProblem::new(
        grasp.clone(),
        *goal,
        config.weights,
        config.mode,
        config.scene.clone(),
        config.steps,
    )?;
    let limits = JointLimits::from_model(grasp.hand());
    let initial = Trajectory::constant(grasp.theta0(), config.steps, config.dt)?;
    let (coarse, mut report) = match (&problem.scene, problem.weights.alpha2 > 0.0) {
        (Some(scene), true) => {
            // The truncated penalty is exact: with alpha2 above the optimal
            // multiplier its minimizer keeps SD >= beta, so the solver gets
            // that as a constraint and the smooth remainder as objective. The
            // small margin keeps the solver's feasibility slack out of the band.
            let smooth = PlanProblem {
                scene: None,
                ..problem.clone()
            };
            let objective = |traj: &Trajectory| total_cost(traj, &smooth);
            let clearance = ClearanceConstraints {
                grasp,
                scene,
                beta: problem.weights.beta + CLEARANCE_MARGIN,
            };
            solve_constrained(&initial, &objective, &clearance, &limits, config.v_max, &config.solver)?
        }
        _ => {
            let objective = |traj: &Trajectory| total_cost(traj, &problem);
            solve(&initial, &objective, &limits, config.v_max, &config.solver)?
        }
    };
    let cost = cost_breakdown(&coarse, &problem)?;
    report.final_cost = cost.total();
    report.initial_cost = cost_breakdown(&initial, &problem)?.total();

    let dense = upsample(&coarse, config.resolution)?;
    let predicted_path = predicted_object_path(&dense, grasp)?;
    let last = predicted_path.last().expect("dense trajectory is non-empty");
    let final_position_error = (last.position - goal.position).norm();
    let final_orientation_error = orientation_error_percent(&goal.orientation, &last.orientation);

    let mut min_signed_distance = None;
    if let Some(scene) = &config.scene {
        let mut min = f64::INFINITY;
        for pose in &predicted_path {
            for d in scene_min_signed_distance(scene, pose)? {
                min = min.min(d);
            }
        }
        min_signed_distance = Some(min);
    }
    let collision_audit_failed = min_signed_distance.is_some_and(|d| d < 0.0);

    Ok(PlanResult {
        goal: *goal,
        coarse,
        dense,
        predicted_path,
        report,
        cost,
        final_position_error,
        final_orientation_error,
        min_signed_distance,
        collision_audit_failed,
        config: config.clone(),
    })
}

/// Extra clearance, meters, demanded by the solver beyond the truncation distance.
pub const CLEARANCE_MARGIN: f64 = 1e-5;

/// `beta - SD_w <= 0` for every obstacle.
struct ClearanceConstraints<'a> {
    grasp: &'a GraspSpec,
    scene: &'a ConvexScene,
    beta: f64,
}

impl StepConstraints for ClearanceConstraints<'_> {
    fn evaluate(&self, _t: usize, q: &[f64]) -> Result<Vec<(f64, nalgebra::DVector<f64>)>> {
        Ok(obstacle_clearances(q, self.grasp, self.scene, f64::INFINITY)?
            .into_iter()
            .map(|(sd, g)| (self.beta - sd, -g))
            .collect())
    }
}

/// Piecewise-linear resampling to `resolution` configurations spanning the
/// same duration. Endpoints are reproduced exactly.
pub fn upsample(traj: &Trajectory, resolution: usize) -> Result<Trajectory> {
    let horizon = traj.horizon();
    if resolution < horizon + 1 {
        return Err(Error::InvalidInput(format!(
            "resolution {resolution} is below the trajectory length {}",
            horizon + 1
        )));
    }
    let n = traj.dof();
    let intervals = (resolution - 1) as f64;
    let mut flat = Vec::with_capacity(n * resolution);
    for k in 0..resolution {
        let s = k as f64 * horizon as f64 / intervals;
        let i = (s.floor() as usize).min(horizon - 1);
        let frac = s - i as f64;
        let (a, b) = (traj.step(i), traj.step(i + 1));
        if frac == 0.0 {
            flat.extend_from_slice(a);
        } else {
            flat.extend(a.iter().zip(b).map(|(x, y)| (1.0 - frac) * x + frac * y));
        }
    }
    let dt = traj.dt() * horizon as f64 / intervals;
    Trajectory::from_matrix(nalgebra::DMatrix::from_vec(n, resolution, flat), dt)
}

/// Object pose at every step, by rigid attachment to the thumb tip.
pub fn predicted_object_path(traj: &Trajectory, grasp: &GraspSpec) -> Result<Vec<Pose>> {
    (0..traj.len()).map(|t| grasp.object_pose_at(traj.step(t))).collect()
}

/// Re-checks joint limits and velocity bounds of the coarse trajectory.
pub fn audit_feasibility(result: &PlanResult, grasp: &GraspSpec) -> f64 {
    max_violation(&result.coarse, &JointLimits::from_model(grasp.hand()), result.config.v_max)
}

// ---------------------------------------------------------------------------
// Plan document

/// Object pose with its orientation stored as a quaternion so the path
/// round-trips exactly.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PoseRecord {
    pub xyz: [f64; 3],
    pub wxyz: [f64; 4],
}

impl From<&Pose> for PoseRecord {
    fn from(p: &Pose) -> Self {
        Self {
            xyz: p.position.into(),
            wxyz: p.wxyz(),
        }
    }
}

impl TryFrom<&PoseRecord> for Pose {
    type Error = Error;

    fn try_from(r: &PoseRecord) -> Result<Self> {
        Pose::from_position_wxyz(r.xyz, r.wxyz)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlanDoc {
    pub hand: String,
    pub grasp: crate::costs::GraspDoc,
    pub goal: PoseDoc,
    pub goal_pose: PoseRecord,
    pub config: PlannerConfig,
    pub coarse_dt: f64,
    pub coarse: Vec<Vec<f64>>,
    pub dense_dt: f64,
    pub dense: Vec<Vec<f64>>,
    pub predicted_path: Vec<PoseRecord>,
    pub report: SolveReport,
    pub cost: CostBreakdown,
    pub final_position_error_m: f64,
    pub final_orientation_error_pct: f64,
    pub min_signed_distance: Option<f64>,
    pub collision_audit_failed: bool,
}

impl PlanResult {
    /// `hand_model` is the path recorded for the hand model in the grasp echo.
    pub fn to_doc(&self, grasp: &GraspSpec, hand_model: &str) -> PlanDoc {
        PlanDoc {
            hand: grasp.hand().name().to_string(),
            grasp: grasp.to_doc(hand_model),
            goal: PoseDoc::from(&self.goal),
            goal_pose: PoseRecord::from(&self.goal),
            config: self.config.clone(),
            coarse_dt: self.coarse.dt(),
            coarse: self.coarse.to_steps(),
            dense_dt: self.dense.dt(),
            dense: self.dense.to_steps(),
            predicted_path: self.predicted_path.iter().map(PoseRecord::from).collect(),
            report: self.report.clone(),
            cost: self.cost,
            final_position_error_m: self.final_position_error,
            final_orientation_error_pct: self.final_orientation_error,
            min_signed_distance: self.min_signed_distance,
            collision_audit_failed: self.collision_audit_failed,
        }
    }

    /// Rebuilds a plan from its document; the grasp must use the same hand.
    pub fn from_doc(doc: &PlanDoc, grasp: &GraspSpec) -> Result<Self> {
        if doc.hand != grasp.hand().name() {
            return Err(Error::InvalidInput(format!(
                "plan was made for hand `{}`, grasp uses `{}`",
                doc.hand,
                grasp.hand().name()
            )));
        }
        let coarse = Trajectory::from_steps(&doc.coarse, doc.coarse_dt)?;
        let dense = Trajectory::from_steps(&doc.dense, doc.dense_dt)?;
        let n = grasp.hand().dof();
        if coarse.dof() != n || dense.dof() != n {
            return Err(Error::DofMismatch {
                expected: n,
                got: dense.dof(),
            });
        }
        let predicted_path = doc
            .predicted_path
            .iter()
            .map(Pose::try_from)
            .collect::<Result<Vec<_>>>()?;
        if predicted_path.len() != dense.len() {
            return Err(Error::parse("plan", "predicted_path and dense lengths differ"));
        }
        Ok(Self {
            goal: Pose::try_from(&doc.goal_pose)?,
            coarse,
            dense,
            predicted_path,
            report: doc.report.clone(),
            cost: doc.cost,
            final_position_error: doc.final_position_error_m,
            final_orientation_error: doc.final_orientation_error_pct,
            min_signed_distance: doc.min_signed_distance,
            collision_audit_failed: doc.collision_audit_failed,
            config: doc.config.clone(),
        })
    }
}

pub fn load_plan_file(path: impl AsRef<Path>) -> Result<PlanDoc> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Error::from_json("plan", &text)
}
