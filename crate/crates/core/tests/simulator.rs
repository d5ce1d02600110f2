mod common;

use std::f64::consts::SQRT_2;

use approx::assert_relative_eq;
use ingrasp::fixtures::{regression_goals, synthetic_grasp};
use ingrasp::optimizer::Trajectory;
use ingrasp::planner::{plan, PlanResult, PlannerConfig};
use ingrasp::simulator::{compute_metrics, orientation_error_percent, simulate, DisturbanceModel};
use ingrasp::feedback::FeedbackConfig;
use nalgebra::{Quaternion, UnitQuaternion, Vector3, Vector4};
use proptest::prelude::*;

fn fixture_plan() -> PlanResult {
    let g = synthetic_grasp();
    plan(&g, &regression_goals()[0], &PlannerConfig::default()).unwrap()
}

// Quaternion distance written out over raw (w, x, y, z) tuples.
fn quat_distance_oracle(a: [f64; 4], b: [f64; 4]) -> f64 {
    let (a, b) = (Vector4::from(a), Vector4::from(b));
    100.0 * (a - b).norm().min((a + b).norm()) / SQRT_2
}

fn unit(w: f64, x: f64, y: f64, z: f64) -> UnitQuaternion<f64> {
    UnitQuaternion::from_quaternion(Quaternion::new(w, x, y, z))
}

fn wxyz(q: &UnitQuaternion<f64>) -> [f64; 4] {
    [q.w, q.i, q.j, q.k]
}

#[test]
fn noiseless_execution_reproduces_the_prediction() {
    let g = synthetic_grasp();
    let p = fixture_plan();
    let trace = simulate(&p, &g, &DisturbanceModel::none(), None).unwrap();
    assert_eq!(trace.len(), p.dense.len());
    for k in 0..trace.len() {
        assert_eq!(trace.commanded[k], trace.realized[k]);
        assert_eq!(&trace.commanded[k][..], p.dense.step(k));
        let (a, b) = (&trace.object_poses[k], &p.predicted_path[k]);
        assert!((a.position - b.position).norm() < 1e-12);
        assert!(a.orientation.angle_to(&b.orientation) < 1e-12);
    }
    let m = compute_metrics(&trace, g.object_pose(), &p.goal).unwrap();
    assert_relative_eq!(m.position_error_cm, 100.0 * p.final_position_error, epsilon = 1e-10);
    assert!(!trace.dropped);
}

#[test]
fn lag_converges_geometrically() {
    let g = synthetic_grasp();
    let mut p = fixture_plan();
    let target = p.coarse.last().to_vec();
    p.dense = Trajectory::constant(&target, 29, p.dense.dt()).unwrap();
    let d = DisturbanceModel {
        lag: 0.5,
        ..DisturbanceModel::none()
    };
    let trace = simulate(&p, &g, &d, None).unwrap();
    for (k, realized) in trace.realized.iter().enumerate() {
        let factor = 0.5f64.powi(k as i32 + 1);
        for j in 0..target.len() {
            let expected = target[j] + factor * (g.theta0()[j] - target[j]);
            assert_relative_eq!(realized[j], expected, epsilon = 1e-14);
        }
    }
}

#[test]
fn fixed_seed_is_bit_identical() {
    let g = synthetic_grasp();
    let p = fixture_plan();
    let d = DisturbanceModel::default().with_seed(99);
    let fb = FeedbackConfig::default();
    let a = simulate(&p, &g, &d, Some(&fb)).unwrap();
    let b = simulate(&p, &g, &d, Some(&fb)).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.to_csv().unwrap(), b.to_csv().unwrap());
    let c = simulate(&p, &g, &d.with_seed(100), Some(&fb)).unwrap();
    assert_ne!(a.realized, c.realized);
}

#[test]
fn streams_have_equal_length_and_csv_one_row_per_step() {
    let g = synthetic_grasp();
    let p = fixture_plan();
    let trace = simulate(&p, &g, &DisturbanceModel::default(), None).unwrap();
    assert_eq!(trace.commanded.len(), trace.len());
    assert_eq!(trace.realized.len(), trace.len());
    let csv = trace.to_csv().unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines.len(), trace.len() + 1);
    let width = 2 + 2 * 16 + 7;
    for line in &lines {
        assert_eq!(line.split(',').count(), width);
    }
    assert!(lines[0].starts_with("step,time,cmd_0"));
}

#[test]
fn tracker_noise_only_reaches_the_feedback_loop() {
    let g = synthetic_grasp();
    let p = fixture_plan();
    let base = DisturbanceModel::default().with_seed(4);
    let noisy = DisturbanceModel {
        observation_position: 0.002,
        observation_orientation: 0.02,
        ..base
    };
    let open_a = simulate(&p, &g, &base, None).unwrap();
    let open_b = simulate(&p, &g, &noisy, None).unwrap();
    assert_eq!(open_a, open_b);
    let fb = FeedbackConfig::default();
    let closed_a = simulate(&p, &g, &base, Some(&fb)).unwrap();
    let closed_b = simulate(&p, &g, &noisy, Some(&fb)).unwrap();
    assert_ne!(closed_a.commanded, closed_b.commanded);
}

#[test]
fn invalid_disturbance_is_rejected() {
    let g = synthetic_grasp();
    let p = fixture_plan();
    let d = DisturbanceModel {
        lag: -0.1,
        ..DisturbanceModel::none()
    };
    assert!(simulate(&p, &g, &d, None).is_err());
}

#[test]
fn reached_goal_has_zero_error() {
    let g = synthetic_grasp();
    let goal = regression_goals()[2];
    let mut p = fixture_plan();
    p.goal = goal;
    let mut trace = simulate(&p, &g, &DisturbanceModel::none(), None).unwrap();
    *trace.object_poses.last_mut().unwrap() = goal;
    let m = compute_metrics(&trace, g.object_pose(), &goal).unwrap();
    assert_eq!(m.position_error_cm, 0.0);
    assert_eq!(m.position_error_pct, Some(0.0));
    assert_eq!(m.orientation_error_pct, 0.0);
}

#[test]
fn orientation_error_spot_values() {
    let id = UnitQuaternion::identity();
    let half = UnitQuaternion::from_axis_angle(&Vector3::z_axis(), std::f64::consts::PI);
    assert_relative_eq!(orientation_error_percent(&id, &half), 100.0, epsilon = 1e-12);
    let quarter = UnitQuaternion::from_axis_angle(&Vector3::z_axis(), std::f64::consts::FRAC_PI_2);
    let expected = quat_distance_oracle(wxyz(&id), wxyz(&quarter));
    assert_relative_eq!(orientation_error_percent(&id, &quarter), expected, epsilon = 1e-12);
    assert_relative_eq!(expected, 54.12, epsilon = 5e-3);
}

fn quat() -> impl Strategy<Value = UnitQuaternion<f64>> {
    (-1.0..1.0f64, -1.0..1.0f64, -1.0..1.0f64, -1.0..1.0f64)
        .prop_filter("non-degenerate", |(w, x, y, z)| w * w + x * x + y * y + z * z > 1e-3)
        .prop_map(|(w, x, y, z)| unit(w, x, y, z))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(512))]

    #[test]
    fn quat_distance_matches_oracle_and_is_symmetric(a in quat(), b in quat()) {
        let e = orientation_error_percent(&a, &b);
        prop_assert!((e - quat_distance_oracle(wxyz(&a), wxyz(&b))).abs() < 1e-10);
        prop_assert!((e - orientation_error_percent(&b, &a)).abs() < 1e-12);
        prop_assert!((0.0..=100.0).contains(&e));
    }

    #[test]
    fn quat_distance_ignores_the_double_cover(a in quat(), b in quat()) {
        let neg = unit(-b.w, -b.i, -b.j, -b.k);
        let diff = orientation_error_percent(&a, &b) - orientation_error_percent(&a, &neg);
        prop_assert!(diff.abs() < 1e-12);
    }

    #[test]
    fn quat_distance_is_zero_only_for_the_same_rotation(a in quat(), b in quat()) {
        prop_assert!(orientation_error_percent(&a, &a) < 1e-12);
        let angle = a.angle_to(&b);
        if angle > 1e-6 {
            prop_assert!(orientation_error_percent(&a, &b) > 0.0);
        }
    }
}
