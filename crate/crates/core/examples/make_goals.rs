//! Regenerates `fixtures/goals.json`.
//!
//! Goal 0 is a pure 2 cm translation along the palm normal. The others come
//! from seeded random thumb motions. A goal is kept only if the grasping
//! fingers can follow the thumb exactly, i.e. damped least-squares IK puts
//! every fingertip back at its initial position in the thumb frame without
//! leaving the joint limits.

use ingrasp::costs::GraspSpec;
use ingrasp::fixtures::{synthetic_grasp, GoalSet};
use ingrasp::kinematics::HandModel;
use ingrasp::pose::{Pose, PoseDoc};
use nalgebra::{DMatrix, DVector, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const LIMIT_MARGIN: f64 = 0.05;

fn within_limits(hand: &HandModel, q: &[f64], cols: std::ops::Range<usize>) -> bool {
    let (lo, hi) = (hand.lower_limits(), hand.upper_limits());
    cols.into_iter()
        .all(|c| q[c] >= lo[c] + LIMIT_MARGIN && q[c] <= hi[c] - LIMIT_MARGIN)
}

/// Damped least squares on the joints of `finger`; `residual` returns the
/// task error and its Jacobian over those joints.
fn dls<F>(q: &mut [f64], cols: std::ops::Range<usize>, mut residual: F) -> f64
where
    F: FnMut(&[f64]) -> (DVector<f64>, DMatrix<f64>),
{
    let mut err = f64::INFINITY;
    for _ in 0..500 {
        let (e, j) = residual(q);
        err = e.norm();
        if err < 1e-12 {
            break;
        }
        let jjt = &j * j.transpose() + DMatrix::identity(j.nrows(), j.nrows()) * 1e-10;
        let step = j.transpose() * jjt.lu().solve(&e).expect("damped system is regular");
        for (k, c) in cols.clone().enumerate() {
            q[c] -= step[k];
        }
    }
    err
}

fn follow_fingers(grasp: &GraspSpec, q: &mut [f64]) -> bool {
    let hand = grasp.hand();
    let thumb = grasp.thumb_pose(q).unwrap();
    for (&f, rel0) in grasp.finger_indices().iter().zip(grasp.initial_relative_positions()) {
        let target = thumb.transform_point(rel0);
        let cols = hand.joint_range(f);
        let err = dls(q, cols.clone(), |q| {
            let frames = hand.chain_frames(f, q).unwrap();
            let e = frames.tip.translation.vector - target;
            (DVector::from_column_slice(e.as_slice()), frames.jacobian().rows(0, 3).into_owned())
        });
        if err > 1e-9 || !within_limits(hand, q, cols) {
            return false;
        }
    }
    true
}

fn translated_thumb(grasp: &GraspSpec, offset: Vector3<f64>) -> Option<Vec<f64>> {
    let hand = grasp.hand();
    let mut q = grasp.theta0().to_vec();
    let target = Pose::new(grasp.object_pose().position + offset, grasp.object_pose().orientation);
    let thumb_target = grasp.desired_thumb_pose(&target);
    let cols = hand.joint_range(grasp.thumb_index());
    let err = dls(&mut q, cols.clone(), |q| {
        let frames = hand.chain_frames(grasp.thumb_index(), q).unwrap();
        let e = ingrasp::costs::pose_difference(&frames.tip_pose(), &thumb_target, 1.0);
        // angular error is expressed in the target frame; the Jacobian in the palm frame
        let ang = thumb_target.rotation_matrix() * e.fixed_rows::<3>(3);
        let e = DVector::from_vec(vec![e[0], e[1], e[2], ang.x, ang.y, ang.z]);
        (e, frames.jacobian())
    });
    (err < 1e-9 && within_limits(hand, &q, cols)).then_some(q)
}

fn main() {
    let grasp = synthetic_grasp();
    let hand = grasp.hand();
    let x0 = *grasp.object_pose();
    let mut goals = Vec::new();

    let mut q = translated_thumb(&grasp, Vector3::new(0.02, 0.0, 0.0)).expect("x translation is reachable");
    assert!(follow_fingers(&grasp, &mut q), "fingers follow the x translation");
    goals.push(grasp.object_pose_at(&q).unwrap());

    let mut rng = ChaCha8Rng::seed_from_u64(20170924);
    let thumb_cols = hand.joint_range(grasp.thumb_index());
    let mut tries = 0;
    while goals.len() < 10 {
        tries += 1;
        assert!(tries < 100_000, "could not find enough goals");
        let mut q = grasp.theta0().to_vec();
        for c in thumb_cols.clone() {
            q[c] += rng.random_range(-0.35..0.35);
        }
        if !within_limits(hand, &q, thumb_cols.clone()) {
            continue;
        }
        let goal = grasp.object_pose_at(&q).unwrap();
        let shift = (goal.position - x0.position).norm();
        let angle = x0.orientation.angle_to(&goal.orientation);
        if !(0.01..=0.03).contains(&shift) || angle > 20f64.to_radians() {
            continue;
        }
        if follow_fingers(&grasp, &mut q) {
            eprintln!(
                "goal {}: shift {:.4} m, rotation {:.2} deg",
                goals.len(),
                shift,
                angle.to_degrees()
            );
            goals.push(goal);
        }
    }
    let set = GoalSet {
        goals: goals.iter().map(PoseDoc::from).collect(),
    };
    println!("{}", serde_json::to_string_pretty(&set).unwrap());
}
