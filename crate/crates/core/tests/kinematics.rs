mod common;

use std::f64::consts::{FRAC_PI_2, PI};

use approx::assert_relative_eq;
use common::{axis_angle, chain_oracle, matrix_rpy, numeric_jacobian, rel_err};
use ingrasp::fixtures::{synthetic_hand, HAND_JSON};
use ingrasp::kinematics::{
    fk_pose, fk_position, jacobian, load_hand_model, relative_unit_vector_rpy, HandModel,
};
use nalgebra::{DVector, Matrix3, Vector3};
use proptest::prelude::*;

fn finger_json(name: &str, axes: &[[f64; 3]], link: [f64; 3], tip: [f64; 3]) -> String {
    let joints: Vec<String> = axes
        .iter()
        .enumerate()
        .map(|(i, a)| {
            let origin = if i == 0 { [0.0; 3] } else { link };
            format!(
                r#"{{"origin_xyz": {origin:?}, "origin_rpy": [0,0,0], "axis": {a:?}, "limit_lower": -3.0, "limit_upper": 3.0}}"#
            )
        })
        .collect();
    format!(
        r#"{{"name": "{name}", "joints": [{}], "tip_xyz": {tip:?}, "tip_rpy": [0,0,0]}}"#,
        joints.join(",")
    )
}

fn model(fingers: &[String]) -> HandModel {
    load_hand_model(&format!(r#"{{"name": "test", "fingers": [{}]}}"#, fingers.join(","))).unwrap()
}

fn one_joint() -> HandModel {
    model(&[finger_json("f", &[[0.0, 0.0, 1.0]], [0.0; 3], [0.05, 0.0, 0.0])])
}

#[test]
fn single_joint_zero_configuration() {
    let m = one_joint();
    assert_eq!(m.dof(), 1);
    let p = fk_pose(&m, "f", &[0.0]).unwrap();
    assert_relative_eq!(p.position, Vector3::new(0.05, 0.0, 0.0), epsilon = 1e-15);
    assert_relative_eq!(p.orientation.angle(), 0.0, epsilon = 1e-15);
}

#[test]
fn single_joint_quarter_turn() {
    let m = one_joint();
    let p = fk_pose(&m, "f", &[FRAC_PI_2]).unwrap();
    assert_relative_eq!(p.position, Vector3::new(0.0, 0.05, 0.0), epsilon = 1e-15);
    assert_relative_eq!(p.orientation.scaled_axis(), Vector3::new(0.0, 0.0, FRAC_PI_2), epsilon = 1e-15);
    assert_eq!(fk_position(&m, "f", &[FRAC_PI_2]).unwrap(), p.position);
}

#[test]
fn single_joint_jacobian() {
    let j = jacobian(&one_joint(), "f", &[0.0]).unwrap();
    assert_eq!(j.shape(), (6, 1));
    assert_relative_eq!(j.column(0).into_owned(), DVector::from_vec(vec![0.0, 0.05, 0.0, 0.0, 0.0, 1.0]), epsilon = 1e-15);
}

#[test]
fn unknown_finger_is_an_error() {
    let m = one_joint();
    assert!(fk_pose(&m, "pinky", &[0.0]).is_err());
    assert!(jacobian(&m, "pinky", &[0.0]).is_err());
}

#[test]
fn zero_axis_names_the_problem() {
    let bad = format!(
        r#"{{"name": "x", "fingers": [{}]}}"#,
        finger_json("f", &[[0.0, 0.0, 0.0]], [0.0; 3], [0.05, 0.0, 0.0])
    );
    let err = load_hand_model(&bad).unwrap_err().to_string();
    assert!(err.contains("zero-norm axis"), "{err}");
}

#[test]
fn fixture_has_sixteen_dof_and_round_trips() {
    let hand = synthetic_hand();
    assert_eq!(hand.dof(), 16);
    assert_eq!(hand.fingers().len(), 4);
    let again = load_hand_model(&hand.to_json()).unwrap();
    assert_eq!(again.dof(), 16);
    let q: Vec<f64> = (0..16).map(|i| 0.05 * i as f64 - 0.3).collect();
    for f in hand.finger_names() {
        assert_eq!(fk_pose(&hand, f, &q).unwrap(), fk_pose(&again, f, &q).unwrap());
    }
}

#[test]
fn planar_chain_has_rank_two_linear_block() {
    let z = [0.0, 0.0, 1.0];
    let m = model(&[finger_json("f", &[z, z, z], [0.04, 0.0, 0.0], [0.03, 0.0, 0.0])]);
    let j = jacobian(&m, "f", &[0.0; 3]).unwrap();
    let lin = j.rows(0, 3).into_owned();
    let sv = lin.singular_values();
    let rank = sv.iter().filter(|s| **s > 1e-12 * sv.max()).count();
    assert!(rank <= 2, "rank {rank}");
}

fn two_finger(tip: [f64; 3]) -> HandModel {
    model(&[
        finger_json("thumb", &[[0.0, 0.0, 1.0]], [0.0; 3], [0.0; 3]),
        finger_json("other", &[[0.0, 0.0, 1.0]], [0.0; 3], tip),
    ])
}

#[test]
fn relative_direction_along_x_is_zero() {
    let rpy = relative_unit_vector_rpy(&two_finger([0.1, 0.0, 0.0]), "thumb", "other", &[0.0, 0.0]).unwrap();
    assert_relative_eq!(rpy, Vector3::zeros(), epsilon = 1e-15);
}

#[test]
fn relative_direction_along_y_is_quarter_yaw() {
    let rpy = relative_unit_vector_rpy(&two_finger([0.0, 0.1, 0.0]), "thumb", "other", &[0.0, 0.0]).unwrap();
    assert_relative_eq!(rpy, Vector3::new(0.0, 0.0, FRAC_PI_2), epsilon = 1e-15);
}

#[test]
fn relative_direction_needs_separated_tips() {
    let m = two_finger([0.0, 0.0, 0.0]);
    assert!(relative_unit_vector_rpy(&m, "thumb", "other", &[0.0, 0.0]).is_err());
    assert!(relative_unit_vector_rpy(&m, "thumb", "thumb", &[0.0, 0.0]).is_err());
}

#[test]
fn relative_direction_ignores_separation_length() {
    let dir = [0.03, -0.02, 0.05];
    let a = relative_unit_vector_rpy(&two_finger(dir), "thumb", "other", &[0.3, -0.2]).unwrap();
    let b = relative_unit_vector_rpy(&two_finger(dir.map(|v| v * 3.0)), "thumb", "other", &[0.3, -0.2]).unwrap();
    assert_relative_eq!(a, b, epsilon = 1e-14);
}

fn arb_config() -> impl Strategy<Value = Vec<f64>> {
    let hand = synthetic_hand();
    let (lo, hi) = (hand.lower_limits(), hand.upper_limits());
    lo.into_iter()
        .zip(hi)
        .map(|(l, h)| l..h)
        .collect::<Vec<_>>()
}

fn finger_slice<'a>(hand: &HandModel, finger: &str, q: &'a [f64]) -> &'a [f64] {
    &q[hand.joint_range(hand.finger_index(finger).unwrap())]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn fk_matches_matrix_chain(q in arb_config()) {
        let hand = synthetic_hand();
        for f in ["index", "middle", "ring", "thumb"] {
            let h = chain_oracle(HAND_JSON, f, finger_slice(&hand, f, &q));
            let p = fk_pose(&hand, f, &q).unwrap();
            let r = p.orientation.to_rotation_matrix().into_inner();
            prop_assert!((p.position - h.fixed_view::<3, 1>(0, 3)).norm() < 1e-10);
            prop_assert!((r - h.fixed_view::<3, 3>(0, 0)).norm() < 1e-10);
        }
    }

    #[test]
    fn jacobian_matches_finite_differences(q in arb_config()) {
        let hand = synthetic_hand();
        for f in ["index", "thumb"] {
            let range = hand.joint_range(hand.finger_index(f).unwrap());
            let analytic = jacobian(&hand, f, &q).unwrap();
            let own: Vec<f64> = q[range.clone()].to_vec();
            let eval = |x: &[f64]| {
                let mut full = q.clone();
                full[range.clone()].copy_from_slice(x);
                fk_pose(&hand, f, &full).unwrap()
            };
            let lin = numeric_jacobian(&own, 1e-6, |x| {
                DVector::from_column_slice(eval(x).position.as_slice())
            });
            // angular velocity from the skew part of dR/dq * R^T
            let r0 = eval(&own).orientation.to_rotation_matrix().into_inner();
            let ang = numeric_jacobian(&own, 1e-6, |x| {
                let r: Matrix3<f64> = eval(x).orientation.to_rotation_matrix().into_inner();
                let w = r * r0.transpose();
                DVector::from_vec(vec![w[(2, 1)], w[(0, 2)], w[(1, 0)]])
            });
            prop_assert!(rel_err(&analytic.rows(0, 3).into_owned(), &lin) < 1e-5);
            prop_assert!(rel_err(&analytic.rows(3, 3).into_owned(), &ang) < 1e-5);
        }
    }

    #[test]
    fn relative_direction_matches_axis_angle_oracle(q in arb_config()) {
        let hand = synthetic_hand();
        let thumb = fk_pose(&hand, "thumb", &q).unwrap();
        for f in ["index", "middle"] {
            let tip = fk_position(&hand, f, &q).unwrap();
            let u = (thumb.orientation.inverse() * (tip - thumb.position)).normalize();
            let x = Vector3::x();
            let axis = x.cross(&u);
            let rot = if axis.norm() < 1e-12 {
                Matrix3::identity()
            } else {
                axis_angle(axis.normalize(), x.dot(&u).clamp(-1.0, 1.0).acos())
            };
            let expected = matrix_rpy(&rot);
            let got = relative_unit_vector_rpy(&hand, "thumb", f, &q).unwrap();
            prop_assert!((got - expected).norm() < 1e-9, "{got} vs {expected}");
            prop_assert!(got.iter().all(|a| *a > -PI && *a <= PI));
        }
    }

    #[test]
    fn fk_is_deterministic(q in arb_config()) {
        let hand = synthetic_hand();
        prop_assert_eq!(fk_pose(&hand, "thumb", &q).unwrap(), fk_pose(&hand, "thumb", &q).unwrap());
    }
}
