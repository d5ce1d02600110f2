//! Independent reference implementations shared by the integration tests.
#![allow(dead_code)]

use nalgebra::{Matrix3, Matrix4, Vector3};
use serde_json::Value;

/// `Rz(yaw) * Ry(pitch) * Rx(roll)` written out element by element.
pub fn rpy_matrix(r: f64, p: f64, y: f64) -> Matrix3<f64> {
    let (sr, cr) = r.sin_cos();
    let (sp, cp) = p.sin_cos();
    let (sy, cy) = y.sin_cos();
    Matrix3::new(
        cy * cp,
        cy * sp * sr - sy * cr,
        cy * sp * cr + sy * sr,
        sy * cp,
        sy * sp * sr + cy * cr,
        sy * sp * cr - cy * sr,
        -sp,
        cp * sr,
        cp * cr,
    )
}

/// Rodrigues' formula for a unit axis.
pub fn axis_angle(axis: Vector3<f64>, angle: f64) -> Matrix3<f64> {
    let k = Matrix3::new(0.0, -axis.z, axis.y, axis.z, 0.0, -axis.x, -axis.y, axis.x, 0.0);
    Matrix3::identity() + k * angle.sin() + k * k * (1.0 - angle.cos())
}

/// `(roll, pitch, yaw)` of a rotation matrix away from gimbal lock.
pub fn matrix_rpy(m: &Matrix3<f64>) -> Vector3<f64> {
    Vector3::new(m[(2, 1)].atan2(m[(2, 2)]), (-m[(2, 0)]).asin(), m[(1, 0)].atan2(m[(0, 0)]))
}

pub fn homogeneous(r: Matrix3<f64>, t: Vector3<f64>) -> Matrix4<f64> {
    let mut h = Matrix4::identity();
    h.fixed_view_mut::<3, 3>(0, 0).copy_from(&r);
    h.fixed_view_mut::<3, 1>(0, 3).copy_from(&t);
    h
}

fn vec3(v: &Value) -> Vector3<f64> {
    Vector3::new(v[0].as_f64().unwrap(), v[1].as_f64().unwrap(), v[2].as_f64().unwrap())
}

/// Tip transform of `finger` by multiplying 4x4 matrices read straight from
/// the hand document. `q` holds the finger's own joint angles.
pub fn chain_oracle(hand_json: &str, finger: &str, q: &[f64]) -> Matrix4<f64> {
    let doc: Value = serde_json::from_str(hand_json).unwrap();
    let f = doc["fingers"]
        .as_array()
        .unwrap()
        .iter()
        .find(|f| f["name"] == finger)
        .expect("finger present");
    let mut h = Matrix4::<f64>::identity();
    for (j, joint) in f["joints"].as_array().unwrap().iter().enumerate() {
        let rpy = vec3(&joint["origin_rpy"]);
        h *= homogeneous(rpy_matrix(rpy.x, rpy.y, rpy.z), vec3(&joint["origin_xyz"]));
        h *= homogeneous(axis_angle(vec3(&joint["axis"]).normalize(), q[j]), Vector3::zeros());
    }
    let rpy = vec3(&f["tip_rpy"]);
    h * homogeneous(rpy_matrix(rpy.x, rpy.y, rpy.z), vec3(&f["tip_xyz"]))
}

/// Central differences of a vector function.
pub fn numeric_jacobian<F>(x: &[f64], h: f64, f: F) -> nalgebra::DMatrix<f64>
where
    F: Fn(&[f64]) -> nalgebra::DVector<f64>,
{
    let m = f(x).len();
    let mut out = nalgebra::DMatrix::zeros(m, x.len());
    let mut p = x.to_vec();
    for i in 0..x.len() {
        p[i] = x[i] + h;
        let up = f(&p);
        p[i] = x[i] - h;
        let dn = f(&p);
        p[i] = x[i];
        out.set_column(i, &((up - dn) / (2.0 * h)));
    }
    out
}

pub fn rel_err(a: &nalgebra::DMatrix<f64>, b: &nalgebra::DMatrix<f64>) -> f64 {
    let s = a.norm().max(b.norm());
    if s < 1e-12 {
        0.0
    } else {
        (a - b).norm() / s
    }
}
