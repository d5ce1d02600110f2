//! Object-pose feedback on the thumb: the planned configuration is corrected
//! by a Jacobian-transpose step toward the thumb pose that would put the
//! observed object where the plan wants it.

use nalgebra::{DMatrix, Vector6};
use serde::{Deserialize, Serialize};

use crate::costs::{pose_difference, GraspSpec};
use crate::error::{Error, Result};
use crate::kinematics::JointConfig;
use crate::pose::{rpy_rate_map, Pose};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FeedbackConfig {
    pub gain: f64,
    /// Meters per radian in the pose error. Kept well below the planner's
    /// scale so the angular rows do not overshoot at the default gain.
    pub orientation_weight: f64,
    /// Evaluate the Jacobian at the measured configuration instead of the planned one.
    pub jacobian_at_measured: bool,
}

impl Default for FeedbackConfig {
    fn default() -> Self {
        Self {
            gain: 50.0,
            orientation_weight: 0.05,
            jacobian_at_measured: true,
        }
    }
}

impl FeedbackConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.gain >= 0.0) || !(self.orientation_weight >= 0.0) {
            return Err(Error::InvalidInput("feedback gain and orientation weight must be >= 0".into()));
        }
        Ok(())
    }
}

/// Thumb pose that places the object at `x_d_next`, given the observed
/// object-to-thumb transform.
pub fn predicted_contact_pose(x_d_next: &Pose, object_to_thumb: &Pose) -> Pose {
    x_d_next.compose(object_to_thumb)
}

/// Observed object-to-thumb transform from a tracked object pose and the
/// measured thumb pose.
pub fn observed_contact_transform(observed_object: &Pose, measured_thumb: &Pose) -> Pose {
    observed_object.inverse().compose(measured_thumb)
}

/// Derivative of `pose_difference(FK(q), target, w)` with respect to the
/// thumb joints, with the kinematic Jacobian taken at `at`.
fn pose_error_jacobian(
    grasp: &GraspSpec,
    at: &[f64],
    error: &Vector6<f64>,
    target: &Pose,
    w: f64,
) -> Result<DMatrix<f64>> {
    let frames = grasp.hand().chain_frames(grasp.thumb_index(), at)?;
    let jac = frames.jacobian();
    let rpy = if w != 0.0 {
        error.fixed_rows::<3>(3) / w
    } else {
        nalgebra::Vector3::zeros()
    };
    let map = rpy_rate_map(&rpy) * target.rotation_matrix().transpose() * w;
    let mut out = DMatrix::zeros(6, jac.ncols());
    out.view_mut((0, 0), (3, jac.ncols())).copy_from(&jac.rows(0, 3));
    out.view_mut((3, 0), (3, jac.ncols())).copy_from(&(map * jac.rows(3, 3)));
    Ok(out)
}

/// Command `U = theta_d_next + gain * (-J^T e)` where `e` is the difference
/// between the planned thumb pose and the predicted contact pose. Only thumb
/// joints change; the result is clamped to the joint limits.
pub fn feedback_command(
    theta_d_next: &[f64],
    x_d_next: &Pose,
    object_to_thumb: &Pose,
    measured: &[f64],
    grasp: &GraspSpec,
    cfg: &FeedbackConfig,
) -> Result<JointConfig> {
    let hand = grasp.hand();
    hand.check_config(theta_d_next)?;
    hand.check_config(measured)?;
    let mut command = theta_d_next.to_vec();
    if cfg.gain == 0.0 {
        return Ok(JointConfig(command));
    }
    let target = predicted_contact_pose(x_d_next, object_to_thumb);
    let planned = grasp.thumb_pose(theta_d_next)?;
    let error = pose_difference(&planned, &target, cfg.orientation_weight);
    if error.iter().all(|e| *e == 0.0) {
        return Ok(JointConfig(command));
    }
    let at = if cfg.jacobian_at_measured { measured } else { theta_d_next };
    let jac = pose_error_jacobian(grasp, at, &error, &target, cfg.orientation_weight)?;
    let rate = -(jac.transpose() * error);
    for (k, col) in hand.joint_range(grasp.thumb_index()).enumerate() {
        command[col] += cfg.gain * rate[k];
    }
    hand.clamp(&mut command);
    Ok(JointConfig(command))
}
