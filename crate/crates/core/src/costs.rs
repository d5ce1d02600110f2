//! Cost terms of the in-grasp trajectory objective and their analytic gradients.
//!
//! Per-timestep terms take a full joint configuration and return the value
//! together with a gradient over that configuration. [`total_cost`] stacks them
//! over the whole trajectory.

use std::path::Path;
use std::sync::Arc;

use nalgebra::{DVector, Vector3, Vector6};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::ConvexScene;
use crate::kinematics::{
    load_hand_model_file, relative_position_jacobian, relative_rpy_jacobian, HandModel, JointConfig,
};
use crate::optimizer::Trajectory;
use crate::pose::{rpy_from_matrix, rpy_rate_map, wrap_angle, Pose};

/// Joint-space step used for the penetration-depth finite differences.
pub const PENETRATION_FD_STEP: f64 = 1e-5;

/// Initial grasp: configuration, designated thumb, grasping fingers and the
/// object pose, plus the rigid thumb-to-object transform and initial
/// inter-finger relations derived from them.
#[derive(Clone, Debug)]
pub struct GraspSpec {
    hand: Arc<HandModel>,
    theta0: JointConfig,
    thumb: String,
    thumb_index: usize,
    grasp_fingers: Vec<String>,
    finger_indices: Vec<usize>,
    object_pose: Pose,
    thumb_to_object: Pose,
    initial_relative_positions: Vec<Vector3<f64>>,
    initial_relative_rpy: Vec<Vector3<f64>>,
}

impl GraspSpec {
    pub fn new(
        hand: Arc<HandModel>,
        theta0: JointConfig,
        thumb: &str,
        grasp_fingers: &[String],
        object_pose: Pose,
    ) -> Result<Self> {
        hand.check_config(&theta0)?;
        let lower = hand.lower_limits();
        let upper = hand.upper_limits();
        for (k, q) in theta0.iter().enumerate() {
            if !q.is_finite() || *q < lower[k] || *q > upper[k] {
                return Err(Error::InvalidInput(format!(
                    "theta0[{k}] = {q} is outside the joint limits [{}, {}]",
                    lower[k], upper[k]
                )));
            }
        }
        let thumb_index = hand.finger_index(thumb)?;
        let mut finger_indices = Vec::with_capacity(grasp_fingers.len());
        for f in grasp_fingers {
            let idx = hand.finger_index(f)?;
            if idx == thumb_index {
                return Err(Error::InvalidInput(format!("grasp finger `{f}` is the thumb")));
            }
            if finger_indices.contains(&idx) {
                return Err(Error::InvalidInput(format!("grasp finger `{f}` listed twice")));
            }
            finger_indices.push(idx);
        }
        let thumb_pose = hand.chain_frames(thumb_index, &theta0)?.tip_pose();
        let thumb_to_object = thumb_pose.inverse().compose(&object_pose);
        let mut initial_relative_positions = Vec::new();
        let mut initial_relative_rpy = Vec::new();
        for &f in &finger_indices {
            initial_relative_positions.push(relative_position_jacobian(&hand, thumb_index, f, &theta0)?.0);
            initial_relative_rpy.push(relative_rpy_jacobian(&hand, thumb_index, f, &theta0)?.0);
        }
        Ok(Self {
            hand,
            theta0,
            thumb: thumb.to_string(),
            thumb_index,
            grasp_fingers: grasp_fingers.to_vec(),
            finger_indices,
            object_pose,
            thumb_to_object,
            initial_relative_positions,
            initial_relative_rpy,
        })
    }

    pub fn hand(&self) -> &HandModel {
        &self.hand
    }

    pub fn hand_arc(&self) -> Arc<HandModel> {
        Arc::clone(&self.hand)
    }

    pub fn theta0(&self) -> &JointConfig {
        &self.theta0
    }

    pub fn thumb(&self) -> &str {
        &self.thumb
    }

    pub fn thumb_index(&self) -> usize {
        self.thumb_index
    }

    pub fn grasp_fingers(&self) -> &[String] {
        &self.grasp_fingers
    }

    pub fn finger_indices(&self) -> &[usize] {
        &self.finger_indices
    }

    /// Initial object pose `X0` in the palm frame.
    pub fn object_pose(&self) -> &Pose {
        &self.object_pose
    }

    /// Object pose in the thumb-tip frame; constant under the rigid-thumb model.
    pub fn thumb_to_object(&self) -> &Pose {
        &self.thumb_to_object
    }

    pub fn initial_relative_positions(&self) -> &[Vector3<f64>] {
        &self.initial_relative_positions
    }

    pub fn initial_relative_rpy(&self) -> &[Vector3<f64>] {
        &self.initial_relative_rpy
    }

    pub fn thumb_pose(&self, q: &[f64]) -> Result<Pose> {
        Ok(self.hand.chain_frames(self.thumb_index, q)?.tip_pose())
    }

    /// Object pose predicted by rigid attachment to the thumb tip.
    pub fn object_pose_at(&self, q: &[f64]) -> Result<Pose> {
        Ok(self.thumb_pose(q)?.compose(&self.thumb_to_object))
    }

    /// Thumb-tip pose that places the object at `object_target`.
    pub fn desired_thumb_pose(&self, object_target: &Pose) -> Pose {
        object_target.compose(&self.thumb_to_object.inverse())
    }

    pub fn to_doc(&self, hand_model: impl Into<String>) -> GraspDoc {
        let d = crate::pose::PoseDoc::from(&self.object_pose);
        GraspDoc {
            hand_model: hand_model.into(),
            theta0: self.theta0.0.clone(),
            thumb: self.thumb.clone(),
            grasp_fingers: self.grasp_fingers.clone(),
            object_pose_xyz: d.xyz,
            object_pose_rpy: d.rpy,
        }
    }
}

/// On-disk grasp description (JSON). `hand_model` is a path, resolved relative
/// to the grasp file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GraspDoc {
    pub hand_model: String,
    pub theta0: Vec<f64>,
    pub thumb: String,
    pub grasp_fingers: Vec<String>,
    pub object_pose_xyz: [f64; 3],
    pub object_pose_rpy: [f64; 3],
}

impl GraspDoc {
    pub fn parse(document: &str) -> Result<Self> {
        Error::from_json("grasp", document)
    }

    pub fn build(&self, hand: Arc<HandModel>) -> Result<GraspSpec> {
        GraspSpec::new(
            hand,
            JointConfig(self.theta0.clone()),
            &self.thumb,
            &self.grasp_fingers,
            Pose::from_xyz_rpy(self.object_pose_xyz, self.object_pose_rpy),
        )
        .map_err(|e| Error::parse("grasp", e.to_string()))
    }
}

/// Loads a grasp file. If `hand` is `None` the file's `hand_model` path is loaded.
pub fn load_grasp_file(path: impl AsRef<Path>, hand: Option<Arc<HandModel>>) -> Result<GraspSpec> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let doc = GraspDoc::parse(&text)?;
    let hand = match hand {
        Some(h) => h,
        None => {
            let base = path.parent().unwrap_or_else(|| Path::new("."));
            Arc::new(load_hand_model_file(base.join(&doc.hand_model))?)
        }
    };
    doc.build(hand)
}

/// Weights of the objective terms.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CostWeights {
    pub k1: f64,
    pub k2: f64,
    pub k3: f64,
    pub psi: [f64; 3],
    pub alpha1: f64,
    pub alpha2: f64,
    /// Truncation distance of the collision cost, meters.
    pub beta: f64,
    /// Meters per radian when differencing poses.
    pub orientation_scale: f64,
}

impl Default for CostWeights {
    fn default() -> Self {
        Self {
            k1: 0.09,
            k2: 100.0,
            k3: 1.0,
            psi: [0.0, 1.0, 0.0],
            alpha1: 0.01,
            alpha2: 1000.0,
            beta: 0.005,
            orientation_scale: 1.0,
        }
    }
}

impl CostWeights {
    pub fn validate(&self) -> Result<()> {
        let all = [
            self.k1,
            self.k2,
            self.k3,
            self.psi[0],
            self.psi[1],
            self.psi[2],
            self.alpha1,
            self.alpha2,
            self.orientation_scale,
        ];
        if all.iter().any(|w| !(*w >= 0.0) || !w.is_finite()) {
            return Err(Error::InvalidInput("cost weights must be finite and >= 0".into()));
        }
        if !(self.beta > 0.0) || !self.beta.is_finite() {
            return Err(Error::InvalidInput("beta must be > 0".into()));
        }
        Ok(())
    }

    pub fn zero() -> Self {
        Self {
            k1: 0.0,
            k2: 0.0,
            k3: 0.0,
            psi: [0.0; 3],
            alpha1: 0.0,
            alpha2: 0.0,
            beta: 0.005,
            orientation_scale: 1.0,
        }
    }
}

/// Position difference followed by the scaled RPY of `b^-1 * a`.
pub fn pose_difference(a: &Pose, b: &Pose, orientation_scale: f64) -> Vector6<f64> {
    let dp = a.position - b.position;
    let rel = b.orientation.inverse() * a.orientation;
    let rpy = rpy_from_matrix(rel.to_rotation_matrix().matrix()) * orientation_scale;
    Vector6::new(dp.x, dp.y, dp.z, rpy.x, rpy.y, rpy.z)
}

/// `||pose_difference(FK(q, thumb), target * xT_i)||^2` with its gradient.
/// Only thumb joints receive non-zero gradient entries.
pub fn object_pose_cost(
    q: &[f64],
    object_target: &Pose,
    grasp: &GraspSpec,
    orientation_scale: f64,
) -> Result<(f64, DVector<f64>)> {
    let target = grasp.desired_thumb_pose(object_target);
    thumb_pose_cost(q, &target, grasp, orientation_scale)
}

pub(crate) fn thumb_pose_cost(
    q: &[f64],
    thumb_target: &Pose,
    grasp: &GraspSpec,
    w_or: f64,
) -> Result<(f64, DVector<f64>)> {
    let hand = grasp.hand();
    let frames = hand.chain_frames(grasp.thumb_index, q)?;
    let pose = frames.tip_pose();
    let err = pose_difference(&pose, thumb_target, w_or);
    let value = err.norm_squared();

    let dp = err.fixed_rows::<3>(0).into_owned();
    let rpy = err.fixed_rows::<3>(3).into_owned() / if w_or != 0.0 { w_or } else { 1.0 };
    let rot_map = rpy_rate_map(&rpy) * thumb_target.orientation.inverse().to_rotation_matrix().matrix();
    let ang_weight = rot_map.transpose() * (err.fixed_rows::<3>(3) * w_or);

    let jac = frames.jacobian();
    let mut grad = DVector::zeros(hand.dof());
    for (k, col) in hand.joint_range(grasp.thumb_index).enumerate() {
        let lin = jac.fixed_view::<3, 1>(0, k);
        let ang = jac.fixed_view::<3, 1>(3, k);
        grad[col] = 2.0 * (dp.dot(&lin) + ang_weight.dot(&ang));
    }
    Ok((value, grad))
}

/// Interior waypoints `W_1 .. W_{T-1}` between `x0` and `xg`: linear in
/// position, spherical-linear in orientation.
pub fn waypoint_schedule(x0: &Pose, xg: &Pose, steps: usize) -> Result<Vec<Pose>> {
    if steps < 2 {
        return Err(Error::InvalidInput(format!("waypoint schedule needs T >= 2, got {steps}")));
    }
    Ok((1..steps)
        .map(|t| {
            let s = t as f64 / steps as f64;
            let position = x0.position + (xg.position - x0.position) * s;
            let orientation = x0
                .orientation
                .try_slerp(&xg.orientation, s, 1e-12)
                .unwrap_or(x0.orientation);
            Pose::new(position, orientation)
        })
        .collect())
}

/// Sum over grasp fingers of the squared drift of the fingertip position in the
/// thumb frame from its initial value.
pub fn relative_position_cost(q: &[f64], grasp: &GraspSpec) -> Result<(f64, DVector<f64>)> {
    let hand = grasp.hand();
    let mut value = 0.0;
    let mut grad = DVector::zeros(hand.dof());
    for (f, p0) in grasp.finger_indices.iter().zip(&grasp.initial_relative_positions) {
        let (p, jac) = relative_position_jacobian(hand, grasp.thumb_index, *f, q)?;
        let r = p - p0;
        value += r.norm_squared();
        grad += jac.transpose() * (r * 2.0);
    }
    Ok((value, grad))
}

/// Sum over grasp fingers of the psi-weighted squared change of the inter-tip
/// direction angles. The angle difference is wrapped before weighting.
pub fn relative_orientation_cost(
    q: &[f64],
    grasp: &GraspSpec,
    psi: &[f64; 3],
) -> Result<(f64, DVector<f64>)> {
    let hand = grasp.hand();
    let psi = Vector3::from(*psi);
    let mut value = 0.0;
    let mut grad = DVector::zeros(hand.dof());
    for (f, c0) in grasp.finger_indices.iter().zip(&grasp.initial_relative_rpy) {
        let (rpy, jac) = relative_rpy_jacobian(hand, grasp.thumb_index, *f, q)?;
        let diff = (rpy - c0).map(wrap_angle);
        let weighted = diff.component_mul(&psi);
        value += weighted.norm_squared();
        grad += jac.transpose() * (weighted.component_mul(&psi) * 2.0);
    }
    Ok((value, grad))
}

/// `alpha1 * sum_{t=0}^{T+1} ||q[t-2] - 2 q[t-1] + q[t]||^2` with
/// `q[-2] = q[-1] = q[0]` and `q[T+1] = q[T]`. Gradient has the trajectory's
/// flat layout.
pub fn joint_acceleration_cost(traj: &Trajectory, alpha1: f64) -> (f64, DVector<f64>) {
    let n = traj.dof();
    let last = traj.horizon() as isize;
    let idx = |t: isize| t.clamp(0, last) as usize;
    let mut value = 0.0;
    let mut grad = DVector::zeros(traj.flat().len());
    for t in 0..=(last + 1) {
        let ids = [idx(t - 2), idx(t - 1), idx(t)];
        let coef = [1.0, -2.0, 1.0];
        for j in 0..n {
            let r: f64 = ids
                .iter()
                .zip(coef)
                .map(|(&s, c)| c * traj.step(s)[j])
                .sum();
            value += r * r;
            for (&s, c) in ids.iter().zip(coef) {
                grad[s * n + j] += 2.0 * alpha1 * c * r;
            }
        }
    }
    (alpha1 * value, grad)
}

/// Sum of squared second differences (with the same boundary padding), unweighted.
pub fn acceleration_sum(traj: &Trajectory) -> f64 {
    joint_acceleration_cost(traj, 1.0).0
}

/// Truncated signed-distance penalty `alpha2 * sum_w (beta - min(beta, SD_w))`.
///
/// Gradient: separated pairs use the witness normal; overlapping pairs use
/// central differences over the thumb joints.
pub fn collision_cost(
    q: &[f64],
    grasp: &GraspSpec,
    scene: &ConvexScene,
    alpha2: f64,
    beta: f64,
) -> Result<(f64, DVector<f64>)> {
    let mut grad = DVector::zeros(grasp.hand().dof());
    if alpha2 == 0.0 {
        return Ok((0.0, grad));
    }
    let mut value = 0.0;
    for (distance, dsd) in obstacle_clearances(q, grasp, scene, beta)? {
        if distance >= beta {
            continue;
        }
        value += alpha2 * (beta - distance);
        grad.axpy(-alpha2, &dsd, 1.0);
    }
    Ok((value, grad))
}

/// Signed distance to each obstacle and its gradient over all joints (only
/// thumb entries are nonzero). Gradients of obstacles at or beyond `cutoff`
/// are left at zero.
pub fn obstacle_clearances(
    q: &[f64],
    grasp: &GraspSpec,
    scene: &ConvexScene,
    cutoff: f64,
) -> Result<Vec<(f64, DVector<f64>)>> {
    let hand = grasp.hand();
    let frames = hand.chain_frames(grasp.thumb_index, q)?;
    let object = frames.tip_pose().compose(&grasp.thumb_to_object);
    let closest = scene.closest_per_obstacle(&object)?;
    let thumb_cols: Vec<usize> = hand.joint_range(grasp.thumb_index).collect();
    let mut out = Vec::with_capacity(closest.len());
    for (w, prox) in closest.iter().enumerate() {
        let mut grad = DVector::zeros(hand.dof());
        if prox.distance < cutoff {
            if prox.from_witness && prox.distance > 0.0 {
                for (k, &col) in thumb_cols.iter().enumerate() {
                    let axis = frames.joint_axes[k];
                    let vel = axis.cross(&(prox.witness_a - frames.joint_positions[k]));
                    grad[col] = prox.normal.dot(&vel);
                }
            } else {
                let mut qp = q.to_vec();
                for &col in &thumb_cols {
                    let orig = qp[col];
                    qp[col] = orig + PENETRATION_FD_STEP;
                    let up = obstacle_distance(&qp, grasp, scene, w)?;
                    qp[col] = orig - PENETRATION_FD_STEP;
                    let dn = obstacle_distance(&qp, grasp, scene, w)?;
                    qp[col] = orig;
                    grad[col] = (up - dn) / (2.0 * PENETRATION_FD_STEP);
                }
            }
        }
        out.push((prox.distance, grad));
    }
    Ok(out)
}

fn obstacle_distance(q: &[f64], grasp: &GraspSpec, scene: &ConvexScene, obstacle: usize) -> Result<f64> {
    let object = grasp.object_pose_at(q)?;
    let obs = &scene.obstacles[obstacle];
    let mut best = f64::INFINITY;
    for piece in &scene.object_pieces {
        best = best.min(crate::geometry::signed_distance(&piece.placed(&object), obs)?);
    }
    Ok(best)
}

/// Which term shapes the path between start and goal.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum PlanMode {
    /// Attract intermediate steps to interpolated object poses.
    #[default]
    WaypointInterp,
    /// Penalize joint accelerations instead.
    JointAcc,
}

impl std::str::FromStr for PlanMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "waypoint-interp" => Ok(PlanMode::WaypointInterp),
            "joint-acc" => Ok(PlanMode::JointAcc),
            other => Err(Error::InvalidInput(format!(
                "unknown mode `{other}` (expected waypoint-interp or joint-acc)"
            ))),
        }
    }
}

impl std::fmt::Display for PlanMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            PlanMode::WaypointInterp => "waypoint-interp",
            PlanMode::JointAcc => "joint-acc",
        })
    }
}

/// Everything [`total_cost`] needs: the grasp, goal, weights and optional scene.
#[derive(Clone, Debug)]
pub struct PlanProblem {
    pub grasp: GraspSpec,
    pub goal: Pose,
    pub weights: CostWeights,
    pub mode: PlanMode,
    pub scene: Option<ConvexScene>,
    /// `W_0 .. W_{T-1}`, with `W_0 = X0`.
    pub waypoints: Vec<Pose>,
    pub steps: usize,
}

impl PlanProblem {
    pub fn new(
        grasp: GraspSpec,
        goal: Pose,
        weights: CostWeights,
        mode: PlanMode,
        scene: Option<ConvexScene>,
        steps: usize,
    ) -> Result<Self> {
        weights.validate()?;
        let mut waypoints = vec![*grasp.object_pose()];
        waypoints.extend(waypoint_schedule(grasp.object_pose(), &goal, steps)?);
        Ok(Self {
            grasp,
            goal,
            weights,
            mode,
            scene,
            waypoints,
            steps,
        })
    }
}

/// Value of each objective term, already weighted.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct CostBreakdown {
    pub goal: f64,
    pub waypoints: f64,
    pub acceleration: f64,
    pub relative_position: f64,
    pub relative_orientation: f64,
    pub collision: f64,
}

impl CostBreakdown {
    pub fn total(&self) -> f64 {
        self.goal
            + self.waypoints
            + self.acceleration
            + self.relative_position
            + self.relative_orientation
            + self.collision
    }
}

/// Full objective over the trajectory, with the gradient in the trajectory's
/// flat (timestep-major) layout.
pub fn total_cost(traj: &Trajectory, problem: &PlanProblem) -> Result<(f64, DVector<f64>)> {
    let (parts, grad) = evaluate_terms(traj, problem)?;
    Ok((parts.total(), grad))
}

pub fn cost_breakdown(traj: &Trajectory, problem: &PlanProblem) -> Result<CostBreakdown> {
    Ok(evaluate_terms(traj, problem)?.0)
}

fn evaluate_terms(traj: &Trajectory, problem: &PlanProblem) -> Result<(CostBreakdown, DVector<f64>)> {
    let grasp = &problem.grasp;
    let w = &problem.weights;
    let n = grasp.hand().dof();
    if traj.dof() != n {
        return Err(Error::DofMismatch {
            expected: n,
            got: traj.dof(),
        });
    }
    if traj.horizon() != problem.steps {
        return Err(Error::InvalidInput(format!(
            "trajectory has {} steps, problem expects {}",
            traj.horizon(),
            problem.steps
        )));
    }
    let last = traj.horizon();
    let mut parts = CostBreakdown::default();
    let mut grad = DVector::zeros(n * (last + 1));
    let goal_thumb = grasp.desired_thumb_pose(&problem.goal);

    for t in 0..=last {
        let q = traj.step(t);
        let mut g = grad.rows_mut(t * n, n);
        if t == last {
            let (v, d) = thumb_pose_cost(q, &goal_thumb, grasp, w.orientation_scale)?;
            parts.goal += v;
            g += d;
        } else if problem.mode == PlanMode::WaypointInterp && w.k1 != 0.0 {
            let target = grasp.desired_thumb_pose(&problem.waypoints[t]);
            let (v, d) = thumb_pose_cost(q, &target, grasp, w.orientation_scale)?;
            parts.waypoints += w.k1 * v;
            g += d * w.k1;
        }
        if w.k2 != 0.0 {
            let (v, d) = relative_position_cost(q, grasp)?;
            parts.relative_position += w.k2 * v;
            g += d * w.k2;
        }
        if w.k3 != 0.0 && w.psi.iter().any(|p| *p != 0.0) {
            let (v, d) = relative_orientation_cost(q, grasp, &w.psi)?;
            parts.relative_orientation += w.k3 * v;
            g += d * w.k3;
        }
        if let Some(scene) = &problem.scene {
            let (v, d) = collision_cost(q, grasp, scene, w.alpha2, w.beta)?;
            parts.collision += v;
            g += d;
        }
    }
    if problem.mode == PlanMode::JointAcc && w.alpha1 != 0.0 {
        let (v, d) = joint_acceleration_cost(traj, w.alpha1);
        parts.acceleration = v;
        grad += d;
    }
    Ok((parts, grad))
}
