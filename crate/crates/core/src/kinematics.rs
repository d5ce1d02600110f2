//! Serial-chain hand model with forward kinematics and analytic Jacobians.
//!
//! Every finger is a chain of revolute joints rooted at the palm frame. Joint
//! angles are stored finger-major in a single [`JointConfig`].

use std::collections::HashSet;
use std::ops::{Deref, DerefMut};
use std::path::Path;

use nalgebra::{DMatrix, DVector, Isometry3, Matrix3, Matrix3xX, Translation3, Unit, UnitQuaternion, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pose::{rotation_from_rpy, wrap_angle, Pose};

/// Flat vector of joint angles in radians, ordered finger-major.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct JointConfig(pub Vec<f64>);

impl JointConfig {
    pub fn zeros(n: usize) -> Self {
        JointConfig(vec![0.0; n])
    }

    pub fn as_dvector(&self) -> DVector<f64> {
        DVector::from_column_slice(&self.0)
    }
}

impl From<Vec<f64>> for JointConfig {
    fn from(v: Vec<f64>) -> Self {
        JointConfig(v)
    }
}

impl Deref for JointConfig {
    type Target = [f64];

    fn deref(&self) -> &[f64] {
        &self.0
    }
}

impl DerefMut for JointConfig {
    fn deref_mut(&mut self) -> &mut [f64] {
        &mut self.0
    }
}

#[derive(Clone, Debug)]
pub struct Joint {
    pub name: String,
    pub origin: Isometry3<f64>,
    pub axis: Unit<Vector3<f64>>,
    pub lower: f64,
    pub upper: f64,
}

#[derive(Clone, Debug)]
pub struct Finger {
    pub name: String,
    pub joints: Vec<Joint>,
    pub tip: Isometry3<f64>,
}

/// Kinematic model of a multi-finger hand.
#[derive(Clone, Debug)]
pub struct HandModel {
    name: String,
    fingers: Vec<Finger>,
    offsets: Vec<usize>,
    dof: usize,
    doc: HandModelDoc,
}

/// Joint positions, world axes and tip frame of one finger at a configuration.
#[derive(Clone, Debug)]
pub struct ChainFrames {
    pub joint_positions: Vec<Vector3<f64>>,
    pub joint_axes: Vec<Vector3<f64>>,
    pub tip: Isometry3<f64>,
}

impl ChainFrames {
    /// Geometric Jacobian (6 x n_f) of the tip frame.
    pub fn jacobian(&self) -> DMatrix<f64> {
        self.point_jacobian_6(&self.tip.translation.vector)
    }

    /// Geometric Jacobian of a point rigidly attached to the tip.
    pub fn point_jacobian_6(&self, point: &Vector3<f64>) -> DMatrix<f64> {
        let n = self.joint_axes.len();
        let mut j = DMatrix::zeros(6, n);
        for (k, (axis, origin)) in self.joint_axes.iter().zip(&self.joint_positions).enumerate() {
            let lin = axis.cross(&(point - origin));
            j.fixed_view_mut::<3, 1>(0, k).copy_from(&lin);
            j.fixed_view_mut::<3, 1>(3, k).copy_from(axis);
        }
        j
    }

    pub fn tip_pose(&self) -> Pose {
        Pose::from_isometry(&self.tip)
    }
}

impl HandModel {
    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn fingers(&self) -> &[Finger] {
        &self.fingers
    }

    pub fn dof(&self) -> usize {
        self.dof
    }

    pub fn finger_names(&self) -> impl Iterator<Item = &str> {
        self.fingers.iter().map(|f| f.name.as_str())
    }

    pub fn finger_index(&self, name: &str) -> Result<usize> {
        self.fingers
            .iter()
            .position(|f| f.name == name)
            .ok_or_else(|| Error::UnknownFinger(name.to_string()))
    }

    /// Range of `JointConfig` indices owned by a finger.
    pub fn joint_range(&self, finger: usize) -> std::ops::Range<usize> {
        let start = self.offsets[finger];
        start..start + self.fingers[finger].joints.len()
    }

    pub fn lower_limits(&self) -> Vec<f64> {
        self.fingers
            .iter()
            .flat_map(|f| f.joints.iter().map(|j| j.lower))
            .collect()
    }

    pub fn upper_limits(&self) -> Vec<f64> {
        self.fingers
            .iter()
            .flat_map(|f| f.joints.iter().map(|j| j.upper))
            .collect()
    }

    pub fn check_config(&self, q: &[f64]) -> Result<()> {
        if q.len() != self.dof {
            return Err(Error::DofMismatch {
                expected: self.dof,
                got: q.len(),
            });
        }
        Ok(())
    }

    /// Clamps every joint into its limits.
    pub fn clamp(&self, q: &mut [f64]) {
        for (k, (lo, hi)) in self.lower_limits().into_iter().zip(self.upper_limits()).enumerate() {
            q[k] = q[k].clamp(lo, hi);
        }
    }

    pub fn chain_frames(&self, finger: usize, q: &[f64]) -> Result<ChainFrames> {
        self.check_config(q)?;
        let f = &self.fingers[finger];
        let qf = &q[self.joint_range(finger)];
        let mut frame = Isometry3::identity();
        let mut joint_positions = Vec::with_capacity(qf.len());
        let mut joint_axes = Vec::with_capacity(qf.len());
        for (joint, &theta) in f.joints.iter().zip(qf) {
            frame *= joint.origin;
            joint_positions.push(frame.translation.vector);
            joint_axes.push(frame.rotation * joint.axis.into_inner());
            frame *= Isometry3::from_parts(
                Translation3::identity(),
                UnitQuaternion::from_axis_angle(&joint.axis, theta),
            );
        }
        frame *= f.tip;
        Ok(ChainFrames {
            joint_positions,
            joint_axes,
            tip: frame,
        })
    }

    pub fn serialize(&self) -> HandModelDoc {
        self.doc.clone()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.doc).expect("hand model serializes")
    }
}

/// Fingertip pose of `finger` in the palm frame.
pub fn fk_pose(model: &HandModel, finger: &str, q: &[f64]) -> Result<Pose> {
    let idx = model.finger_index(finger)?;
    Ok(model.chain_frames(idx, q)?.tip_pose())
}

pub fn fk_position(model: &HandModel, finger: &str, q: &[f64]) -> Result<Vector3<f64>> {
    let idx = model.finger_index(finger)?;
    Ok(model.chain_frames(idx, q)?.tip.translation.vector)
}

/// Geometric Jacobian of the fingertip frame (6 x joints-of-finger), linear rows first.
pub fn jacobian(model: &HandModel, finger: &str, q: &[f64]) -> Result<DMatrix<f64>> {
    let idx = model.finger_index(finger)?;
    Ok(model.chain_frames(idx, q)?.jacobian())
}

/// Position of the finger tip expressed in the thumb-tip frame, together with
/// its derivative (3 x dof) over the whole configuration.
pub fn relative_position_jacobian(
    model: &HandModel,
    thumb: usize,
    finger: usize,
    q: &[f64],
) -> Result<(Vector3<f64>, Matrix3xX<f64>)> {
    let tf = model.chain_frames(thumb, q)?;
    let ff = model.chain_frames(finger, q)?;
    let rt_inv = tf.tip.rotation.inverse();
    let pt = tf.tip.translation.vector;
    let pf = ff.tip.translation.vector;
    let delta = pf - pt;
    let rel = rt_inv * delta;

    let mut jac = Matrix3xX::zeros(model.dof());
    for (k, col) in model.joint_range(thumb).enumerate() {
        let axis = tf.joint_axes[k];
        let lin = axis.cross(&(pt - tf.joint_positions[k]));
        // d(Rt^T delta) = -Rt^T (w x delta) - Rt^T dpt
        let d = -(rt_inv * (axis.cross(&delta) + lin));
        jac.column_mut(col).copy_from(&d);
    }
    for (k, col) in model.joint_range(finger).enumerate() {
        let axis = ff.joint_axes[k];
        let lin = axis.cross(&(pf - ff.joint_positions[k]));
        let d = rt_inv * lin;
        let mut c = jac.column_mut(col);
        c += d;
    }
    Ok((rel, jac))
}

/// RPY of the minimal rotation taking the x-axis onto unit vector `u`, and its
/// 3x3 derivative with respect to `u`.
pub fn alignment_rpy(u: &Vector3<f64>) -> (Vector3<f64>, Matrix3<f64>) {
    let (ux, uy, uz) = (u.x, u.y, u.z);

    fn atan2_grad(a: f64, b: f64, da: Vector3<f64>, db: Vector3<f64>) -> (f64, Vector3<f64>) {
        let den = a * a + b * b;
        let g = if den > 0.0 { (b * da - a * db) / den } else { Vector3::zeros() };
        (a.atan2(b), g)
    }

    // roll = atan2(-uy uz, 1 + ux - uz^2)
    let (roll, droll) = atan2_grad(
        -uy * uz,
        1.0 + ux - uz * uz,
        Vector3::new(0.0, -uz, -uy),
        Vector3::new(1.0, 0.0, -2.0 * uz),
    );
    // pitch = atan2(-uz, hypot(ux, uy))
    let rho = ux.hypot(uy);
    let drho = if rho > 0.0 {
        Vector3::new(ux / rho, uy / rho, 0.0)
    } else {
        Vector3::zeros()
    };
    let (pitch, dpitch) = atan2_grad(-uz, rho, Vector3::new(0.0, 0.0, -1.0), drho);
    // yaw = atan2(uy, ux)
    let (yaw, dyaw) = atan2_grad(uy, ux, Vector3::new(0.0, 1.0, 0.0), Vector3::new(1.0, 0.0, 0.0));

    let rpy = Vector3::new(wrap_angle(roll), wrap_angle(pitch), wrap_angle(yaw));
    let jac = Matrix3::from_rows(&[droll.transpose(), dpitch.transpose(), dyaw.transpose()]);
    (rpy, jac)
}

/// RPY angles of the thumb-to-finger unit vector expressed in the thumb-tip
/// frame, with derivative (3 x dof).
pub fn relative_rpy_jacobian(
    model: &HandModel,
    thumb: usize,
    finger: usize,
    q: &[f64],
) -> Result<(Vector3<f64>, Matrix3xX<f64>)> {
    let (d, jd) = relative_position_jacobian(model, thumb, finger, q)?;
    let norm = d.norm();
    if norm < 1e-9 {
        return Err(Error::DegenerateDirection {
            from: model.fingers[thumb].name.clone(),
            to: model.fingers[finger].name.clone(),
            separation: norm,
        });
    }
    let u = d / norm;
    let du = (Matrix3::identity() - u * u.transpose()) / norm;
    let (rpy, drpy) = alignment_rpy(&u);
    Ok((rpy, drpy * du * jd))
}

pub fn relative_unit_vector_rpy(
    model: &HandModel,
    thumb: &str,
    finger: &str,
    q: &[f64],
) -> Result<Vector3<f64>> {
    let t = model.finger_index(thumb)?;
    let f = model.finger_index(finger)?;
    if t == f {
        return Err(Error::InvalidInput(format!(
            "relative direction needs two distinct fingers, got `{thumb}` twice"
        )));
    }
    Ok(relative_rpy_jacobian(model, t, f, q)?.0)
}

// ---------------------------------------------------------------------------
// Document schema

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct JointDoc {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    pub origin_xyz: [f64; 3],
    pub origin_rpy: [f64; 3],
    pub axis: [f64; 3],
    pub limit_lower: f64,
    pub limit_upper: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FingerDoc {
    pub name: String,
    pub joints: Vec<JointDoc>,
    pub tip_xyz: [f64; 3],
    pub tip_rpy: [f64; 3],
}

/// On-disk hand description (JSON).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HandModelDoc {
    pub name: String,
    pub fingers: Vec<FingerDoc>,
}

fn isometry(xyz: [f64; 3], rpy: [f64; 3]) -> Isometry3<f64> {
    Isometry3::from_parts(
        Translation3::new(xyz[0], xyz[1], xyz[2]),
        rotation_from_rpy(Vector3::from(rpy)),
    )
}

impl TryFrom<HandModelDoc> for HandModel {
    type Error = Error;

    fn try_from(doc: HandModelDoc) -> Result<Self> {
        let ctx = |what: &str| format!("hand model `{}`: {what}", doc.name);
        if doc.fingers.is_empty() {
            return Err(Error::parse(ctx("fingers"), "at least one finger is required"));
        }
        let mut seen = HashSet::new();
        let mut fingers = Vec::with_capacity(doc.fingers.len());
        let mut offsets = Vec::with_capacity(doc.fingers.len());
        let mut dof = 0;
        for fd in &doc.fingers {
            if !seen.insert(fd.name.as_str()) {
                return Err(Error::parse(ctx("fingers"), format!("duplicate finger name `{}`", fd.name)));
            }
            if fd.joints.is_empty() {
                return Err(Error::parse(ctx(&fd.name), "finger has no joints"));
            }
            let mut joints = Vec::with_capacity(fd.joints.len());
            for (k, jd) in fd.joints.iter().enumerate() {
                let jname = jd.name.clone().unwrap_or_else(|| format!("{}_joint_{k}", fd.name));
                let jctx = ctx(&format!("joint `{jname}`"));
                let numbers = jd
                    .origin_xyz
                    .iter()
                    .chain(&jd.origin_rpy)
                    .chain(&jd.axis)
                    .chain([&jd.limit_lower, &jd.limit_upper]);
                if numbers.into_iter().any(|v| !v.is_finite()) {
                    return Err(Error::parse(jctx, "non-finite value"));
                }
                let axis = Vector3::from(jd.axis);
                let n = axis.norm();
                if n < 1e-12 {
                    return Err(Error::parse(jctx, "zero-norm axis"));
                }
                if (n - 1.0).abs() > 1e-9 {
                    return Err(Error::parse(jctx, format!("axis is not unit length (norm {n})")));
                }
                if jd.limit_lower >= jd.limit_upper {
                    return Err(Error::parse(
                        jctx,
                        format!("inverted limits [{}, {}]", jd.limit_lower, jd.limit_upper),
                    ));
                }
                joints.push(Joint {
                    name: jname,
                    origin: isometry(jd.origin_xyz, jd.origin_rpy),
                    axis: Unit::new_unchecked(axis),
                    lower: jd.limit_lower,
                    upper: jd.limit_upper,
                });
            }
            offsets.push(dof);
            dof += joints.len();
            fingers.push(Finger {
                name: fd.name.clone(),
                joints,
                tip: isometry(fd.tip_xyz, fd.tip_rpy),
            });
        }
        Ok(HandModel {
            name: doc.name.clone(),
            fingers,
            offsets,
            dof,
            doc,
        })
    }
}

/// Parses and validates a JSON hand description.
pub fn load_hand_model(document: &str) -> Result<HandModel> {
    let doc: HandModelDoc =
        Error::from_json("hand model", document)?;
    HandModel::try_from(doc)
}

pub fn load_hand_model_file(path: impl AsRef<Path>) -> Result<HandModel> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    load_hand_model(&text)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use std::f64::consts::FRAC_PI_2;

    const ONE_JOINT: &str = r#"{
        "name": "one",
        "fingers": [{
            "name": "f",
            "joints": [{"origin_xyz": [0,0,0], "origin_rpy": [0,0,0], "axis": [0,0,1],
                        "limit_lower": -3.0, "limit_upper": 3.0}],
            "tip_xyz": [0.05, 0, 0], "tip_rpy": [0, 0, 0]
        }]
    }"#;

    #[test]
    fn minimal_model_loads() {
        let m = load_hand_model(ONE_JOINT).unwrap();
        assert_eq!(m.dof(), 1);
        assert_eq!(m.finger_names().collect::<Vec<_>>(), vec!["f"]);
    }

    #[test]
    fn zero_axis_is_rejected() {
        let bad = ONE_JOINT.replace("\"axis\": [0,0,1]", "\"axis\": [0,0,0]");
        let err = load_hand_model(&bad).unwrap_err().to_string();
        assert!(err.contains("zero-norm axis"), "{err}");
        assert!(err.contains("f_joint_0"), "{err}");
    }

    #[test]
    fn inverted_limits_are_rejected() {
        let bad = ONE_JOINT.replace("\"limit_lower\": -3.0", "\"limit_lower\": 4.0");
        let err = load_hand_model(&bad).unwrap_err().to_string();
        assert!(err.contains("inverted limits"), "{err}");
    }

    #[test]
    fn non_unit_axis_is_rejected() {
        let bad = ONE_JOINT.replace("\"axis\": [0,0,1]", "\"axis\": [0,0,2]");
        assert!(load_hand_model(&bad).unwrap_err().to_string().contains("unit length"));
    }

    #[test]
    fn duplicate_finger_names_rejected() {
        let doc: HandModelDoc = serde_json::from_str(ONE_JOINT).unwrap();
        let mut doc2 = doc.clone();
        doc2.fingers.push(doc.fingers[0].clone());
        assert!(HandModel::try_from(doc2).is_err());
    }

    #[test]
    fn single_joint_fk() {
        let m = load_hand_model(ONE_JOINT).unwrap();
        let p = fk_pose(&m, "f", &[0.0]).unwrap();
        assert_relative_eq!(p.position, Vector3::new(0.05, 0.0, 0.0), epsilon = 1e-15);
        assert_relative_eq!(p.orientation.angle(), 0.0);

        let p = fk_pose(&m, "f", &[FRAC_PI_2]).unwrap();
        assert_relative_eq!(p.position, Vector3::new(0.0, 0.05, 0.0), epsilon = 1e-15);
        let expect = UnitQuaternion::from_axis_angle(&Vector3::z_axis(), FRAC_PI_2);
        assert_relative_eq!(p.orientation.angle_to(&expect), 0.0, epsilon = 1e-12);
        assert_relative_eq!(
            fk_position(&m, "f", &[FRAC_PI_2]).unwrap(),
            p.position,
            epsilon = 0.0
        );
    }

    #[test]
    fn single_joint_jacobian() {
        let m = load_hand_model(ONE_JOINT).unwrap();
        let j = jacobian(&m, "f", &[0.0]).unwrap();
        assert_relative_eq!(
            j.column(0).into_owned(),
            DVector::from_vec(vec![0.0, 0.05, 0.0, 0.0, 0.0, 1.0]),
            epsilon = 1e-15
        );
    }

    #[test]
    fn unknown_finger_and_wrong_length() {
        let m = load_hand_model(ONE_JOINT).unwrap();
        assert!(matches!(fk_pose(&m, "nope", &[0.0]), Err(Error::UnknownFinger(_))));
        assert!(matches!(
            fk_pose(&m, "f", &[0.0, 1.0]),
            Err(Error::DofMismatch { expected: 1, got: 2 })
        ));
    }

    #[test]
    fn alignment_rpy_of_axes() {
        let (r, _) = alignment_rpy(&Vector3::x());
        assert_relative_eq!(r, Vector3::zeros());
        let (r, _) = alignment_rpy(&Vector3::y());
        assert_relative_eq!(r, Vector3::new(0.0, 0.0, FRAC_PI_2), epsilon = 1e-15);
        let (r, _) = alignment_rpy(&Vector3::z());
        assert_relative_eq!(r.y, -FRAC_PI_2, epsilon = 1e-15);
    }

    #[test]
    fn alignment_rpy_gradient_matches_differences() {
        let u = Vector3::new(0.6, -0.3, 0.5).normalize();
        let (_, jac) = alignment_rpy(&u);
        let h = 1e-7;
        for k in 0..3 {
            let mut up = u;
            up[k] += h;
            let mut dn = u;
            dn[k] -= h;
            // the closed forms are valid off the unit sphere too
            let fd = (alignment_rpy(&up).0 - alignment_rpy(&dn).0) / (2.0 * h);
            assert_relative_eq!(jac.column(k).into_owned(), fd, epsilon = 1e-7);
        }
    }
}
