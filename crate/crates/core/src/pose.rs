//! Rigid-body poses, homogeneous transforms and the roll/pitch/yaw convention
//! used throughout the crate.
//!
//! RPY angles are extrinsic X-Y-Z: roll about x, then pitch about y, then yaw
//! about z, so `R = Rz(yaw) * Ry(pitch) * Rx(roll)`.

use std::f64::consts::PI;
use std::ops::Mul;

use nalgebra::{Isometry3, Matrix3, Matrix4, Quaternion, Translation3, UnitQuaternion, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Wraps an angle into `(-pi, pi]`.
pub fn wrap_angle(angle: f64) -> f64 {
    let wrapped = (angle + PI).rem_euclid(2.0 * PI) - PI;
    if wrapped <= -PI {
        wrapped + 2.0 * PI
    } else {
        wrapped
    }
}

pub fn wrap_rpy(rpy: Vector3<f64>) -> Vector3<f64> {
    rpy.map(wrap_angle)
}

/// Rotation matrix for extrinsic X-Y-Z angles.
pub fn rotation_from_rpy(rpy: Vector3<f64>) -> UnitQuaternion<f64> {
    UnitQuaternion::from_euler_angles(rpy.x, rpy.y, rpy.z)
}

/// Extracts extrinsic X-Y-Z angles from a rotation matrix. Each angle lies in
/// `(-pi, pi]`; pitch lies in `[-pi/2, pi/2]`.
pub fn rpy_from_matrix(r: &Matrix3<f64>) -> Vector3<f64> {
    let roll = r[(2, 1)].atan2(r[(2, 2)]);
    let pitch = (-r[(2, 0)]).atan2((r[(2, 1)] * r[(2, 1)] + r[(2, 2)] * r[(2, 2)]).sqrt());
    let yaw = r[(1, 0)].atan2(r[(0, 0)]);
    wrap_rpy(Vector3::new(roll, pitch, yaw))
}

/// Maps a spatial angular velocity to RPY rates at the given angles.
///
/// Singular at `|pitch| = pi/2`.
pub fn rpy_rate_map(rpy: &Vector3<f64>) -> Matrix3<f64> {
    let (sp, cp) = rpy.y.sin_cos();
    let (sy, cy) = rpy.z.sin_cos();
    Matrix3::new(
        cy / cp,
        sy / cp,
        0.0,
        -sy,
        cy,
        0.0,
        cy * sp / cp,
        sy * sp / cp,
        1.0,
    )
}

/// Rigid-body pose: position in meters and a unit quaternion orientation.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Pose {
    pub position: Vector3<f64>,
    pub orientation: UnitQuaternion<f64>,
}

impl Default for Pose {
    fn default() -> Self {
        Self::identity()
    }
}

impl Pose {
    pub fn identity() -> Self {
        Self {
            position: Vector3::zeros(),
            orientation: UnitQuaternion::identity(),
        }
    }

    pub fn new(position: Vector3<f64>, orientation: UnitQuaternion<f64>) -> Self {
        Self {
            position,
            orientation: renormalize(orientation),
        }
    }

    pub fn from_xyz_rpy(xyz: [f64; 3], rpy: [f64; 3]) -> Self {
        Self::new(Vector3::from(xyz), rotation_from_rpy(Vector3::from(rpy)))
    }

    /// Builds a pose from a `(w, x, y, z)` quaternion, normalizing it.
    pub fn from_position_wxyz(position: [f64; 3], wxyz: [f64; 4]) -> Result<Self> {
        let q = Quaternion::new(wxyz[0], wxyz[1], wxyz[2], wxyz[3]);
        let norm = q.norm();
        if !norm.is_finite() || norm < 1e-12 {
            return Err(Error::InvalidInput(format!(
                "quaternion {wxyz:?} cannot be normalized"
            )));
        }
        Ok(Self::new(
            Vector3::from(position),
            UnitQuaternion::new_unchecked(q / norm),
        ))
    }

    /// Quaternion components in `(w, x, y, z)` order.
    pub fn wxyz(&self) -> [f64; 4] {
        let q = self.orientation.quaternion();
        [q.w, q.i, q.j, q.k]
    }

    pub fn rpy(&self) -> Vector3<f64> {
        rpy_from_matrix(self.orientation.to_rotation_matrix().matrix())
    }

    pub fn rotation_matrix(&self) -> Matrix3<f64> {
        *self.orientation.to_rotation_matrix().matrix()
    }

    /// `self * other`: express `other` (given in this pose's frame) in the parent frame.
    pub fn compose(&self, other: &Pose) -> Pose {
        Pose::new(
            self.position + self.orientation * other.position,
            self.orientation * other.orientation,
        )
    }

    pub fn inverse(&self) -> Pose {
        let inv = self.orientation.inverse();
        Pose::new(-(inv * self.position), inv)
    }

    pub fn transform_point(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.position + self.orientation * p
    }

    pub fn to_isometry(&self) -> Isometry3<f64> {
        Isometry3::from_parts(Translation3::from(self.position), self.orientation)
    }

    pub fn from_isometry(iso: &Isometry3<f64>) -> Pose {
        Pose::new(iso.translation.vector, iso.rotation)
    }

    pub fn to_transform(&self) -> Transform {
        Transform(self.to_isometry().to_homogeneous())
    }

    pub fn is_finite(&self) -> bool {
        self.position.iter().all(|v| v.is_finite())
            && self.orientation.coords.iter().all(|v| v.is_finite())
    }
}

impl Mul for Pose {
    type Output = Pose;

    fn mul(self, rhs: Pose) -> Pose {
        self.compose(&rhs)
    }
}

impl Mul<&Pose> for &Pose {
    type Output = Pose;

    fn mul(self, rhs: &Pose) -> Pose {
        self.compose(rhs)
    }
}

fn renormalize(q: UnitQuaternion<f64>) -> UnitQuaternion<f64> {
    let raw = q.into_inner();
    let norm = raw.norm();
    if norm == 1.0 {
        UnitQuaternion::new_unchecked(raw)
    } else {
        UnitQuaternion::new_unchecked(raw / norm)
    }
}

/// 4x4 homogeneous transform with an orthonormal rotation block.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Transform(Matrix4<f64>);

impl Transform {
    /// Validates that the rotation block is a proper rotation (to 1e-9) and the
    /// bottom row is `(0, 0, 0, 1)`.
    pub fn new(matrix: Matrix4<f64>) -> Result<Self> {
        let r: Matrix3<f64> = matrix.fixed_view::<3, 3>(0, 0).into_owned();
        let ortho = (r * r.transpose() - Matrix3::identity()).abs().max();
        let det = r.determinant();
        let bottom_ok = matrix[(3, 0)] == 0.0
            && matrix[(3, 1)] == 0.0
            && matrix[(3, 2)] == 0.0
            && matrix[(3, 3)] == 1.0;
        if ortho > 1e-9 || (det - 1.0).abs() > 1e-9 || !bottom_ok {
            return Err(Error::InvalidInput(format!(
                "not a rigid transform (orthonormality error {ortho:e}, det {det})"
            )));
        }
        Ok(Self(matrix))
    }

    pub fn identity() -> Self {
        Self(Matrix4::identity())
    }

    pub fn matrix(&self) -> &Matrix4<f64> {
        &self.0
    }

    pub fn rotation(&self) -> Matrix3<f64> {
        self.0.fixed_view::<3, 3>(0, 0).into_owned()
    }

    pub fn translation(&self) -> Vector3<f64> {
        self.0.fixed_view::<3, 1>(0, 3).into_owned()
    }

    pub fn to_pose(&self) -> Pose {
        let rot = nalgebra::Rotation3::from_matrix_unchecked(self.rotation());
        Pose::new(self.translation(), UnitQuaternion::from_rotation_matrix(&rot))
    }

    pub fn compose(&self, other: &Transform) -> Transform {
        Transform(self.0 * other.0)
    }
}

impl Mul for Transform {
    type Output = Transform;

    fn mul(self, rhs: Transform) -> Transform {
        self.compose(&rhs)
    }
}

/// Serialized pose used by the JSON documents: position plus RPY angles.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PoseDoc {
    pub xyz: [f64; 3],
    pub rpy: [f64; 3],
}

impl From<&Pose> for PoseDoc {
    fn from(p: &Pose) -> Self {
        let rpy = p.rpy();
        PoseDoc {
            xyz: [p.position.x, p.position.y, p.position.z],
            rpy: [rpy.x, rpy.y, rpy.z],
        }
    }
}

impl From<PoseDoc> for Pose {
    fn from(d: PoseDoc) -> Self {
        Pose::from_xyz_rpy(d.xyz, d.rpy)
    }
}
