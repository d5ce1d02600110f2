//! Kinematic execution of a plan with joint tracking lag, joint noise and
//! object slip, plus the final-pose error metrics.

use nalgebra::{UnitQuaternion, Vector3};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::costs::GraspSpec;
use crate::error::{Error, Result};
use crate::feedback::{feedback_command, observed_contact_transform, FeedbackConfig};
use crate::planner::PlanResult;
use crate::pose::Pose;

/// Execution disturbances. Every standard deviation is per control step.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DisturbanceModel {
    /// Fraction of the previous realized configuration retained each step, in `[0, 1)`.
    pub lag: f64,
    /// Joint noise, radians.
    pub joint_noise: f64,
    /// Random-walk translation of the object in the thumb frame, meters.
    pub slip_position: f64,
    /// Random-walk rotation of the object in the thumb frame, radians.
    pub slip_orientation: f64,
    /// Tracker noise on the observed object position, meters. Only the
    /// feedback controller sees it.
    pub observation_position: f64,
    /// Tracker noise on the observed object orientation, radians.
    pub observation_orientation: f64,
    pub seed: u64,
}

impl Default for DisturbanceModel {
    fn default() -> Self {
        Self {
            lag: 0.3,
            joint_noise: 0.002,
            slip_position: 0.0005,
            slip_orientation: 0.005,
            observation_position: 0.0,
            observation_orientation: 0.0,
            seed: 0,
        }
    }
}

impl DisturbanceModel {
    /// No lag, no noise, no slip.
    pub fn none() -> Self {
        Self {
            lag: 0.0,
            joint_noise: 0.0,
            slip_position: 0.0,
            slip_orientation: 0.0,
            observation_position: 0.0,
            observation_orientation: 0.0,
            seed: 0,
        }
    }

    pub fn with_seed(self, seed: u64) -> Self {
        Self { seed, ..self }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.lag) {
            return Err(Error::InvalidInput(format!("lag must be in [0, 1), got {}", self.lag)));
        }
        for (name, v) in [
            ("joint_noise", self.joint_noise),
            ("slip_position", self.slip_position),
            ("slip_orientation", self.slip_orientation),
            ("observation_position", self.observation_position),
            ("observation_orientation", self.observation_orientation),
        ] {
            if !(v >= 0.0) || !v.is_finite() {
                return Err(Error::InvalidInput(format!("{name} must be >= 0, got {v}")));
            }
        }
        Ok(())
    }
}

/// One entry per control step.
#[derive(Clone, Debug, PartialEq)]
pub struct ExecutionTrace {
    pub dt: f64,
    pub commanded: Vec<Vec<f64>>,
    pub realized: Vec<Vec<f64>>,
    pub object_poses: Vec<Pose>,
    /// Always false: the simulation is kinematic and cannot lose the object.
    pub dropped: bool,
}

impl ExecutionTrace {
    pub fn len(&self) -> usize {
        self.object_poses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.object_poses.is_empty()
    }

    /// One CSV row per step: time, commanded and realized joints, object pose.
    pub fn to_csv(&self) -> Result<String> {
        let n = self.commanded.first().map_or(0, Vec::len);
        let mut w = csv::Writer::from_writer(Vec::new());
        let mut header = vec!["step".to_string(), "time".to_string()];
        header.extend((0..n).map(|j| format!("cmd_{j}")));
        header.extend((0..n).map(|j| format!("real_{j}")));
        header.extend(["x", "y", "z", "qw", "qx", "qy", "qz"].map(String::from));
        let csv_err = |e: csv::Error| Error::InvalidInput(format!("writing trace: {e}"));
        w.write_record(&header).map_err(csv_err)?;
        for k in 0..self.len() {
            let mut row = vec![k.to_string(), (k as f64 * self.dt).to_string()];
            row.extend(self.commanded[k].iter().map(f64::to_string));
            row.extend(self.realized[k].iter().map(f64::to_string));
            let p = &self.object_poses[k];
            row.extend(p.position.iter().map(f64::to_string));
            row.extend(p.wxyz().iter().map(f64::to_string));
            w.write_record(&row).map_err(csv_err)?;
        }
        let bytes = w.into_inner().map_err(|e| Error::InvalidInput(format!("writing trace: {e}")))?;
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }
}

/// Executes the dense trajectory of `plan`. With `feedback`, thumb commands
/// are corrected from the observed object pose every step.
pub fn simulate(
    plan: &PlanResult,
    grasp: &GraspSpec,
    disturbance: &DisturbanceModel,
    feedback: Option<&FeedbackConfig>,
) -> Result<ExecutionTrace> {
    disturbance.validate()?;
    if let Some(cfg) = feedback {
        cfg.validate()?;
    }
    let hand = grasp.hand();
    let n = hand.dof();
    if plan.dense.dof() != n {
        return Err(Error::DofMismatch {
            expected: n,
            got: plan.dense.dof(),
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(disturbance.seed);
    let joint = Normal::new(0.0, disturbance.joint_noise).map_err(|e| Error::InvalidInput(e.to_string()))?;
    let slip_p = Normal::new(0.0, disturbance.slip_position).map_err(|e| Error::InvalidInput(e.to_string()))?;
    let slip_r = Normal::new(0.0, disturbance.slip_orientation).map_err(|e| Error::InvalidInput(e.to_string()))?;
    let obs_p = Normal::new(0.0, disturbance.observation_position).map_err(|e| Error::InvalidInput(e.to_string()))?;
    let obs_r = Normal::new(0.0, disturbance.observation_orientation).map_err(|e| Error::InvalidInput(e.to_string()))?;
    let observed_noise = disturbance.observation_position > 0.0 || disturbance.observation_orientation > 0.0;

    let steps = plan.dense.len();
    let mut trace = ExecutionTrace {
        dt: plan.dense.dt(),
        commanded: Vec::with_capacity(steps),
        realized: Vec::with_capacity(steps),
        object_poses: Vec::with_capacity(steps),
        dropped: false,
    };
    let mut thumb_to_object = *grasp.thumb_to_object();
    let mut prev: Vec<f64> = grasp.theta0().to_vec();
    let mut prev_object = *grasp.object_pose();

    for k in 0..steps {
        let planned = plan.dense.step(k);
        let command = match feedback {
            Some(cfg) => {
                // The tracker sees the current object pose and the measured thumb.
                let measured_thumb = grasp.thumb_pose(&prev)?;
                let seen = if observed_noise {
                    Pose::new(
                        prev_object.position + Vector3::from_fn(|_, _| obs_p.sample(&mut rng)),
                        UnitQuaternion::from_scaled_axis(Vector3::from_fn(|_, _| obs_r.sample(&mut rng)))
                            * prev_object.orientation,
                    )
                } else {
                    prev_object
                };
                let observed = observed_contact_transform(&seen, &measured_thumb);
                feedback_command(planned, &plan.predicted_path[k], &observed, &prev, grasp, cfg)?.0
            }
            None => planned.to_vec(),
        };

        let slip = Pose::new(
            Vector3::from_fn(|_, _| slip_p.sample(&mut rng)),
            UnitQuaternion::from_scaled_axis(Vector3::from_fn(|_, _| slip_r.sample(&mut rng))),
        );
        if disturbance.slip_position > 0.0 || disturbance.slip_orientation > 0.0 {
            thumb_to_object = slip.compose(&thumb_to_object);
        }

        let mut realized: Vec<f64> = prev
            .iter()
            .zip(&command)
            .map(|(p, c)| {
                let noise = joint.sample(&mut rng);
                disturbance.lag * p + (1.0 - disturbance.lag) * c + noise
            })
            .collect();
        hand.clamp(&mut realized);

        let object = grasp.thumb_pose(&realized)?.compose(&thumb_to_object);
        trace.commanded.push(command);
        trace.realized.push(realized.clone());
        trace.object_poses.push(object);
        prev = realized;
        prev_object = object;
    }
    Ok(trace)
}

/// Final-pose error of an execution.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub position_error_cm: f64,
    /// Position error relative to the initial distance to the goal; absent
    /// when the goal position equals the initial one.
    pub position_error_pct: Option<f64>,
    pub orientation_error_pct: f64,
}

/// `100 * min(|qd - q|, |qd + q|) / sqrt(2)` over `(w, x, y, z)`; in `[0, 100]`.
pub fn orientation_error_percent(desired: &UnitQuaternion<f64>, actual: &UnitQuaternion<f64>) -> f64 {
    let a = desired.as_ref().coords;
    let b = actual.as_ref().coords;
    let d = (a - b).norm().min((a + b).norm());
    (100.0 * d / std::f64::consts::SQRT_2).min(100.0)
}

pub fn metrics_for_pose(reached: &Pose, initial: &Pose, goal: &Pose) -> Metrics {
    let err = (reached.position - goal.position).norm();
    let span = (initial.position - goal.position).norm();
    Metrics {
        position_error_cm: 100.0 * err,
        position_error_pct: (span >= 1e-9).then(|| 100.0 * err / span),
        orientation_error_pct: orientation_error_percent(&goal.orientation, &reached.orientation),
    }
}

pub fn compute_metrics(trace: &ExecutionTrace, initial: &Pose, goal: &Pose) -> Result<Metrics> {
    let reached = trace
        .object_poses
        .last()
        .ok_or_else(|| Error::InvalidInput("empty execution trace".into()))?;
    Ok(metrics_for_pose(reached, initial, goal))
}

/// Metrics document written next to a trace.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimulationSummary {
    /// Errors of the plan's own prediction (open loop, no disturbance).
    pub predicted: Metrics,
    /// Errors of the simulated execution.
    pub realized: Metrics,
    pub disturbance: DisturbanceModel,
    pub feedback: Option<FeedbackConfig>,
    pub steps: usize,
    pub dropped: bool,
}

impl SimulationSummary {
    pub fn new(
        plan: &PlanResult,
        grasp: &GraspSpec,
        trace: &ExecutionTrace,
        disturbance: &DisturbanceModel,
        feedback: Option<&FeedbackConfig>,
    ) -> Result<Self> {
        let last = plan
            .predicted_path
            .last()
            .ok_or_else(|| Error::InvalidInput("plan has no predicted path".into()))?;
        Ok(Self {
            predicted: metrics_for_pose(last, grasp.object_pose(), &plan.goal),
            realized: compute_metrics(trace, grasp.object_pose(), &plan.goal)?,
            disturbance: *disturbance,
            feedback: feedback.copied(),
            steps: trace.len(),
            dropped: trace.dropped,
        })
    }
}
