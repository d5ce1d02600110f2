//! Finite-difference audit of every analytic cost gradient.

use std::time::Instant;

use nalgebra::{DVector, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::costs::{
    collision_cost, joint_acceleration_cost, object_pose_cost, obstacle_clearances, pose_difference,
    relative_orientation_cost, relative_position_cost, total_cost, CostWeights, GraspSpec, PlanMode, PlanProblem,
};
use crate::error::{Error, Result};
use crate::geometry::ConvexScene;
use crate::kinematics::relative_rpy_jacobian;
use crate::optimizer::Trajectory;
use crate::pose::{wrap_angle, Pose};

/// Audited terms, in report order.
pub const TERMS: [&str; 7] = [
    "object_pose",
    "relative_position",
    "relative_orientation",
    "joint_acceleration",
    "collision",
    "total_waypoint_interp",
    "total_joint_acc",
];

/// Samples closer than this to an RPY branch cut or gimbal singularity are skipped.
const BRANCH_MARGIN: f64 = 1e-3;
/// Samples whose signed distance is this close to the truncation kink are skipped.
const KINK_MARGIN: f64 = 1e-5;
const MAX_DRAWS_PER_SAMPLE: usize = 1000;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GradcheckConfig {
    /// Accepted samples per term.
    pub samples: usize,
    pub seed: u64,
    /// Central-difference step, radians.
    pub step: f64,
    pub tolerance: f64,
    /// Largest joint perturbation from the grasp configuration, radians.
    pub spread: f64,
    /// Test hook: corrupt the analytic gradient of this term.
    pub inject_fault: Option<String>,
}

impl Default for GradcheckConfig {
    fn default() -> Self {
        Self {
            samples: 100,
            seed: 0,
            step: 1e-6,
            tolerance: 1e-5,
            spread: 0.15,
            inject_fault: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TermReport {
    pub term: String,
    pub samples: usize,
    pub skipped: usize,
    pub max_relative_error: f64,
    /// Seed of the sample with the largest error; re-create it with [`sample_seed`].
    pub worst_seed: u64,
    pub passed: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GradcheckReport {
    pub terms: Vec<TermReport>,
    pub wall_time_s: f64,
}

impl GradcheckReport {
    pub fn passed(&self) -> bool {
        self.terms.iter().all(|t| t.passed)
    }

    pub fn failures(&self) -> impl Iterator<Item = &TermReport> {
        self.terms.iter().filter(|t| !t.passed)
    }
}

/// `||a - b|| / max(||a||, ||b||)`, zero when both vanish.
pub fn relative_error(analytic: &DVector<f64>, numeric: &DVector<f64>) -> f64 {
    let scale = analytic.norm().max(numeric.norm());
    if scale < 1e-12 {
        return 0.0;
    }
    (analytic - numeric).norm() / scale
}

/// Central differences of `f` at `x` over every coordinate.
pub fn central_difference<F>(x: &[f64], step: f64, mut f: F) -> Result<DVector<f64>>
where
    F: FnMut(&[f64]) -> Result<f64>,
{
    let mut probe = x.to_vec();
    let mut out = DVector::zeros(x.len());
    for i in 0..x.len() {
        let orig = probe[i];
        probe[i] = orig + step;
        let up = f(&probe)?;
        probe[i] = orig - step;
        let dn = f(&probe)?;
        probe[i] = orig;
        out[i] = (up - dn) / (2.0 * step);
    }
    Ok(out)
}

/// Seed of sample `k` of term `term` under base seed `seed`.
pub fn sample_seed(seed: u64, term: usize, k: usize) -> u64 {
    seed.wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ ((term as u64) << 40) ^ k as u64
}

fn near_branch_cut(rpy: &Vector3<f64>) -> bool {
    rpy.iter().any(|a| a.abs() > std::f64::consts::PI - BRANCH_MARGIN)
        || rpy.y.abs() > std::f64::consts::FRAC_PI_2 - BRANCH_MARGIN
}

struct Sampler<'a> {
    grasp: &'a GraspSpec,
    lower: Vec<f64>,
    upper: Vec<f64>,
    spread: f64,
    margin: f64,
}

impl Sampler<'_> {
    fn config(&self, rng: &mut ChaCha8Rng) -> Vec<f64> {
        self.grasp
            .theta0()
            .iter()
            .enumerate()
            .map(|(j, q)| {
                let v = q + rng.random_range(-self.spread..=self.spread);
                v.clamp(self.lower[j] + self.margin, self.upper[j] - self.margin)
            })
            .collect()
    }

    fn trajectory(&self, rng: &mut ChaCha8Rng, steps: usize) -> Result<Trajectory> {
        let flat: Vec<f64> = (0..=steps).flat_map(|_| self.config(rng)).collect();
        Trajectory::from_steps(&flat.chunks(self.lower.len()).map(<[f64]>::to_vec).collect::<Vec<_>>(), 0.167)
    }

    fn goal(&self, rng: &mut ChaCha8Rng) -> Pose {
        let x0 = self.grasp.object_pose();
        let dp = Vector3::from_fn(|_, _| rng.random_range(-0.02..=0.02));
        let rpy: [f64; 3] = std::array::from_fn(|_| rng.random_range(-0.3..=0.3));
        x0.compose(&Pose::from_xyz_rpy([0.0; 3], rpy)).compose(&Pose::new(dp, Default::default()))
    }
}

/// Evaluates one sample. `None` means the sample sits too close to a
/// non-differentiable point and is skipped.
type SampleOutcome = Option<(DVector<f64>, DVector<f64>)>;

fn branch_safe_pose(grasp: &GraspSpec, q: &[f64], target: &Pose, w: &CostWeights) -> Result<bool> {
    let thumb = grasp.thumb_pose(q)?;
    let diff = pose_difference(&thumb, &grasp.desired_thumb_pose(target), 1.0);
    Ok(!near_branch_cut(&diff.fixed_rows::<3>(3).into_owned()) || w.orientation_scale == 0.0)
}

fn branch_safe_fingers(grasp: &GraspSpec, q: &[f64]) -> Result<bool> {
    for (f, c0) in grasp.finger_indices().iter().zip(grasp.initial_relative_rpy()) {
        let (rpy, _) = relative_rpy_jacobian(grasp.hand(), grasp.thumb_index(), *f, q)?;
        let diff = (rpy - c0).map(wrap_angle);
        if near_branch_cut(&rpy) || near_branch_cut(&diff) {
            return Ok(false);
        }
    }
    Ok(true)
}

/// Every step away from the truncation kink, and at least one obstacle within it when `need_active`.
fn kink_safe(grasp: &GraspSpec, scene: &ConvexScene, beta: f64, q: &[f64], need_active: bool) -> Result<bool> {
    let mut active = false;
    for (sd, _) in obstacle_clearances(q, grasp, scene, f64::NEG_INFINITY)? {
        if (sd - beta).abs() < KINK_MARGIN || sd.abs() < KINK_MARGIN {
            return Ok(false);
        }
        active |= sd < beta;
    }
    Ok(active || !need_active)
}

fn run_sample(
    term: &str,
    rng: &mut ChaCha8Rng,
    sampler: &Sampler,
    scene: &ConvexScene,
    weights: &CostWeights,
    step: f64,
) -> Result<SampleOutcome> {
    let grasp = sampler.grasp;
    let steps = 10;
    let total = |mode: PlanMode, rng: &mut ChaCha8Rng| -> Result<SampleOutcome> {
        let traj = sampler.trajectory(rng, steps)?;
        let goal = sampler.goal(rng);
        let problem = PlanProblem::new(grasp.clone(), goal, *weights, mode, Some(scene.clone()), steps)?;
        for t in 0..=steps {
            let q = traj.step(t);
            let target = if t == steps { goal } else { problem.waypoints[t] };
            if !branch_safe_pose(grasp, q, &target, weights)?
                || !branch_safe_fingers(grasp, q)?
                || !kink_safe(grasp, scene, weights.beta, q, false)?
            {
                return Ok(None);
            }
        }
        let (_, analytic) = total_cost(&traj, &problem)?;
        let numeric = central_difference(traj.flat(), step, |x| {
            let mut probe = traj.clone();
            probe.flat_mut().copy_from_slice(x);
            Ok(total_cost(&probe, &problem)?.0)
        })?;
        Ok(Some((analytic, numeric)))
    };

    match term {
        "object_pose" => {
            let q = sampler.config(rng);
            let goal = sampler.goal(rng);
            if !branch_safe_pose(grasp, &q, &goal, weights)? {
                return Ok(None);
            }
            let w = weights.orientation_scale;
            let (_, analytic) = object_pose_cost(&q, &goal, grasp, w)?;
            let numeric = central_difference(&q, step, |x| Ok(object_pose_cost(x, &goal, grasp, w)?.0))?;
            Ok(Some((analytic, numeric)))
        }
        "relative_position" => {
            let q = sampler.config(rng);
            let (_, analytic) = relative_position_cost(&q, grasp)?;
            let numeric = central_difference(&q, step, |x| Ok(relative_position_cost(x, grasp)?.0))?;
            Ok(Some((analytic, numeric)))
        }
        "relative_orientation" => {
            let q = sampler.config(rng);
            if !branch_safe_fingers(grasp, &q)? {
                return Ok(None);
            }
            let psi = weights.psi;
            let (_, analytic) = relative_orientation_cost(&q, grasp, &psi)?;
            let numeric = central_difference(&q, step, |x| Ok(relative_orientation_cost(x, grasp, &psi)?.0))?;
            Ok(Some((analytic, numeric)))
        }
        "joint_acceleration" => {
            let traj = sampler.trajectory(rng, steps)?;
            let alpha1 = weights.alpha1;
            let (_, analytic) = joint_acceleration_cost(&traj, alpha1);
            let numeric = central_difference(traj.flat(), step, |x| {
                let mut probe = traj.clone();
                probe.flat_mut().copy_from_slice(x);
                Ok(joint_acceleration_cost(&probe, alpha1).0)
            })?;
            Ok(Some((analytic, numeric)))
        }
        "collision" => {
            let q = sampler.config(rng);
            if !kink_safe(grasp, scene, weights.beta, &q, true)? {
                return Ok(None);
            }
            let (a2, beta) = (weights.alpha2, weights.beta);
            let (_, analytic) = collision_cost(&q, grasp, scene, a2, beta)?;
            let numeric = central_difference(&q, step, |x| Ok(collision_cost(x, grasp, scene, a2, beta)?.0))?;
            Ok(Some((analytic, numeric)))
        }
        "total_waypoint_interp" => total(PlanMode::WaypointInterp, rng),
        "total_joint_acc" => total(PlanMode::JointAcc, rng),
        other => Err(Error::InvalidInput(format!("unknown gradient-check term '{other}'"))),
    }
}

/// Audits each term in [`TERMS`] on `config.samples` seeded random instances.
pub fn run_gradcheck(
    grasp: &GraspSpec,
    scene: &ConvexScene,
    weights: &CostWeights,
    config: &GradcheckConfig,
) -> Result<GradcheckReport> {
    weights.validate()?;
    if config.samples == 0 || !(config.step > 0.0) || !(config.tolerance > 0.0) || !(config.spread >= 0.0) {
        return Err(Error::InvalidInput("gradient check needs samples >= 1, step > 0, tolerance > 0, spread >= 0".into()));
    }
    if let Some(fault) = &config.inject_fault {
        if !TERMS.contains(&fault.as_str()) {
            return Err(Error::InvalidInput(format!("unknown gradient-check term '{fault}'")));
        }
    }
    let start = Instant::now();
    let hand = grasp.hand();
    let sampler = Sampler {
        grasp,
        lower: hand.lower_limits(),
        upper: hand.upper_limits(),
        spread: config.spread,
        margin: 10.0 * config.step,
    };
    let mut terms = Vec::with_capacity(TERMS.len());
    for (ti, term) in TERMS.iter().enumerate() {
        let mut report = TermReport {
            term: term.to_string(),
            samples: 0,
            skipped: 0,
            max_relative_error: 0.0,
            worst_seed: sample_seed(config.seed, ti, 0),
            passed: true,
        };
        let mut k = 0;
        while report.samples < config.samples {
            if k >= config.samples * MAX_DRAWS_PER_SAMPLE {
                return Err(Error::Numerical(format!(
                    "gradient check of '{term}' found only {} usable samples",
                    report.samples
                )));
            }
            let seed = sample_seed(config.seed, ti, k);
            k += 1;
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let Some((mut analytic, numeric)) = run_sample(term, &mut rng, &sampler, scene, weights, config.step)? else {
                report.skipped += 1;
                continue;
            };
            if config.inject_fault.as_deref() == Some(*term) {
                let i = analytic.iamax();
                analytic[i] = analytic[i] * 1.01 + 1e-3;
            }
            report.samples += 1;
            let err = relative_error(&analytic, &numeric);
            if err > report.max_relative_error || !err.is_finite() {
                report.max_relative_error = err;
                report.worst_seed = seed;
            }
            if !(err < config.tolerance) {
                report.passed = false;
            }
        }
        terms.push(report);
    }
    Ok(GradcheckReport {
        terms,
        wall_time_s: start.elapsed().as_secs_f64(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn relative_error_examples() {
        let a = DVector::from_vec(vec![1.0, 0.0]);
        let b = DVector::from_vec(vec![1.0, 1e-6]);
        assert!((relative_error(&a, &b) - 1e-6).abs() < 1e-12);
        assert_eq!(relative_error(&DVector::zeros(2), &DVector::zeros(2)), 0.0);
    }

    #[test]
    fn central_difference_of_quadratic_is_exact() {
        let g = central_difference(&[1.0, -2.0], 1e-3, |x| Ok(x[0] * x[0] + 3.0 * x[1])).unwrap();
        assert!((g[0] - 2.0).abs() < 1e-9);
        assert!((g[1] - 3.0).abs() < 1e-9);
    }
}
