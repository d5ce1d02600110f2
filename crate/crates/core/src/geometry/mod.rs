//! Signed distance between convex shapes (GJK for separation, EPA for
//! penetration) and scene-level queries for the collision cost.

mod epa;
mod gjk;
mod shape;

use std::path::Path;

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

pub use shape::{support, ConvexShape, ShapeKind};

use crate::error::{Error, Result};
use crate::pose::{Pose, PoseDoc};
use gjk::GjkOutcome;

/// Result of a pairwise proximity query.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Proximity {
    /// Signed distance in meters, negative when the shapes overlap.
    pub distance: f64,
    /// Closest point on `a` (meaningful when separated).
    pub witness_a: Vector3<f64>,
    /// Closest point on `b` (meaningful when separated).
    pub witness_b: Vector3<f64>,
    /// Unit direction from `b` toward `a` along which the distance grows.
    pub normal: Vector3<f64>,
    /// Whether the cores were disjoint, i.e. the witness data comes from GJK.
    pub from_witness: bool,
}

pub fn proximity(a: &ConvexShape, b: &ConvexShape) -> Result<Proximity> {
    let margins = a.margin() + b.margin();
    match gjk::gjk_distance(a, b)? {
        GjkOutcome::Separated {
            distance,
            witness_a,
            witness_b,
        } if distance > 0.0 => {
            let normal = (witness_a - witness_b) / distance;
            Ok(Proximity {
                distance: distance - margins,
                witness_a: witness_a - normal * a.margin(),
                witness_b: witness_b + normal * b.margin(),
                normal,
                from_witness: true,
            })
        }
        GjkOutcome::Separated { witness_a, witness_b, .. } => Ok(Proximity {
            distance: -margins,
            witness_a,
            witness_b,
            normal: Vector3::x(),
            from_witness: false,
        }),
        GjkOutcome::Overlapping { simplex } => {
            let pen = if a.core_is_point() && b.core_is_point() {
                epa::Penetration {
                    depth: 0.0,
                    normal: Vector3::x(),
                }
            } else {
                epa::epa(a, b, &simplex)
            };
            let c = (a.center() + b.center()) / 2.0;
            Ok(Proximity {
                distance: -(pen.depth + margins),
                witness_a: c,
                witness_b: c,
                normal: -pen.normal,
                from_witness: false,
            })
        }
    }
}

/// Signed distance in meters; negative is penetration depth.
pub fn signed_distance(a: &ConvexShape, b: &ConvexShape) -> Result<f64> {
    Ok(proximity(a, b)?.distance)
}

/// Boolean GJK intersection test on the full shapes.
pub fn intersects(a: &ConvexShape, b: &ConvexShape) -> bool {
    gjk::gjk_intersects(a, b)
}

/// Grasped-object pieces (object frame) and environment obstacles (palm frame).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(into = "SceneDoc", try_from = "SceneDoc")]
pub struct ConvexScene {
    pub object_pieces: Vec<ConvexShape>,
    pub obstacles: Vec<ConvexShape>,
}

impl ConvexScene {
    pub fn new(object_pieces: Vec<ConvexShape>, obstacles: Vec<ConvexShape>) -> Result<Self> {
        if object_pieces.is_empty() || obstacles.is_empty() {
            return Err(Error::InvalidInput(
                "a collision scene needs at least one object piece and one obstacle".into(),
            ));
        }
        Ok(Self {
            object_pieces,
            obstacles,
        })
    }

    /// Closest object piece per obstacle, with the object placed at `object_pose`.
    pub fn closest_per_obstacle(&self, object_pose: &Pose) -> Result<Vec<Proximity>> {
        let placed: Vec<ConvexShape> = self
            .object_pieces
            .iter()
            .map(|p| p.placed(object_pose))
            .collect();
        self.obstacles
            .iter()
            .map(|obs| {
                let mut best: Option<Proximity> = None;
                for piece in &placed {
                    let p = proximity(piece, obs)?;
                    if best.is_none_or(|b| p.distance < b.distance) {
                        best = Some(p);
                    }
                }
                Ok(best.expect("scene has object pieces"))
            })
            .collect()
    }

    pub fn to_doc(&self) -> SceneDoc {
        SceneDoc {
            object_pieces: self.object_pieces.iter().map(ShapeDoc::from).collect(),
            obstacles: self.obstacles.iter().map(ShapeDoc::from).collect(),
        }
    }
}

/// For each obstacle, the minimum over object pieces of the signed distance.
pub fn scene_min_signed_distance(scene: &ConvexScene, object_pose: &Pose) -> Result<Vec<f64>> {
    Ok(scene
        .closest_per_obstacle(object_pose)?
        .into_iter()
        .map(|p| p.distance)
        .collect())
}

// ---------------------------------------------------------------------------
// Document schema

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase", deny_unknown_fields)]
pub enum ShapeDoc {
    Sphere {
        radius: f64,
        pose_xyz: [f64; 3],
        pose_rpy: [f64; 3],
    },
    Box {
        half_extents: [f64; 3],
        pose_xyz: [f64; 3],
        pose_rpy: [f64; 3],
    },
    Hull {
        vertices: Vec<[f64; 3]>,
        pose_xyz: [f64; 3],
        pose_rpy: [f64; 3],
    },
}

impl From<&ConvexShape> for ShapeDoc {
    fn from(s: &ConvexShape) -> Self {
        let PoseDoc { xyz, rpy } = PoseDoc::from(&s.pose);
        match &s.kind {
            ShapeKind::Sphere { radius } => ShapeDoc::Sphere {
                radius: *radius,
                pose_xyz: xyz,
                pose_rpy: rpy,
            },
            ShapeKind::Box { half_extents } => ShapeDoc::Box {
                half_extents: [half_extents.x, half_extents.y, half_extents.z],
                pose_xyz: xyz,
                pose_rpy: rpy,
            },
            ShapeKind::Hull { vertices } => ShapeDoc::Hull {
                vertices: vertices.iter().map(|v| [v.x, v.y, v.z]).collect(),
                pose_xyz: xyz,
                pose_rpy: rpy,
            },
        }
    }
}

impl TryFrom<&ShapeDoc> for ConvexShape {
    type Error = Error;

    fn try_from(d: &ShapeDoc) -> Result<Self> {
        match d {
            ShapeDoc::Sphere {
                radius,
                pose_xyz,
                pose_rpy,
            } => ConvexShape::sphere(*radius, Pose::from_xyz_rpy(*pose_xyz, *pose_rpy)),
            ShapeDoc::Box {
                half_extents,
                pose_xyz,
                pose_rpy,
            } => ConvexShape::cuboid(
                Vector3::from(*half_extents),
                Pose::from_xyz_rpy(*pose_xyz, *pose_rpy),
            ),
            ShapeDoc::Hull {
                vertices,
                pose_xyz,
                pose_rpy,
            } => ConvexShape::hull(
                vertices.iter().map(|v| Vector3::from(*v)).collect(),
                Pose::from_xyz_rpy(*pose_xyz, *pose_rpy),
            ),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneDoc {
    pub object_pieces: Vec<ShapeDoc>,
    pub obstacles: Vec<ShapeDoc>,
}

impl TryFrom<&SceneDoc> for ConvexScene {
    type Error = Error;

    fn try_from(d: &SceneDoc) -> Result<Self> {
        let convert = |list: &[ShapeDoc], what: &str| -> Result<Vec<ConvexShape>> {
            list.iter()
                .enumerate()
                .map(|(i, s)| {
                    ConvexShape::try_from(s)
                        .map_err(|e| Error::parse(format!("scene {what}[{i}]"), e.to_string()))
                })
                .collect()
        };
        ConvexScene::new(
            convert(&d.object_pieces, "object_pieces")?,
            convert(&d.obstacles, "obstacles")?,
        )
    }
}

impl From<ConvexScene> for SceneDoc {
    fn from(scene: ConvexScene) -> Self {
        scene.to_doc()
    }
}

impl TryFrom<SceneDoc> for ConvexScene {
    type Error = Error;

    fn try_from(d: SceneDoc) -> Result<Self> {
        ConvexScene::try_from(&d)
    }
}

pub fn load_scene(document: &str) -> Result<ConvexScene> {
    let doc: SceneDoc =
        Error::from_json("scene", document)?;
    ConvexScene::try_from(&doc)
}

pub fn load_scene_file(path: impl AsRef<Path>) -> Result<ConvexScene> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    load_scene(&text)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn sphere(r: f64, x: f64, y: f64, z: f64) -> ConvexShape {
        ConvexShape::sphere(r, Pose::from_xyz_rpy([x, y, z], [0.0; 3])).unwrap()
    }

    fn cube(h: f64, x: f64, y: f64, z: f64, rpy: [f64; 3]) -> ConvexShape {
        ConvexShape::cuboid(Vector3::repeat(h), Pose::from_xyz_rpy([x, y, z], rpy)).unwrap()
    }

    #[test]
    fn separated_spheres() {
        let d = signed_distance(&sphere(0.03, 0.0, 0.0, 0.0), &sphere(0.03, 0.1, 0.0, 0.0)).unwrap();
        assert_relative_eq!(d, 0.04, epsilon = 1e-12);
    }

    #[test]
    fn overlapping_spheres() {
        let d = signed_distance(&sphere(0.03, 0.0, 0.0, 0.0), &sphere(0.03, 0.04, 0.0, 0.0)).unwrap();
        assert_relative_eq!(d, -0.02, epsilon = 1e-12);
        let d = signed_distance(&sphere(0.03, 0.0, 0.0, 0.0), &sphere(0.02, 0.0, 0.0, 0.0)).unwrap();
        assert_relative_eq!(d, -0.05, epsilon = 1e-12);
    }

    #[test]
    fn unit_boxes_with_gap() {
        let a = cube(0.5, 0.0, 0.0, 0.0, [0.0; 3]);
        let b = cube(0.5, 1.1, 0.0, 0.0, [0.0; 3]);
        assert_relative_eq!(signed_distance(&a, &b).unwrap(), 0.1, epsilon = 1e-12);
        let c = cube(0.5, 0.7, 0.2, -0.1, [0.0; 3]);
        assert_relative_eq!(signed_distance(&a, &c).unwrap(), -0.3, epsilon = 1e-12);
    }

    #[test]
    fn sphere_inside_box() {
        let b = cube(0.5, 0.0, 0.0, 0.0, [0.0; 3]);
        let s = sphere(0.1, 0.3, 0.0, 0.0);
        // center 0.2 from the +x face, plus radius
        assert_relative_eq!(signed_distance(&s, &b).unwrap(), -0.3, epsilon = 1e-12);
        assert_relative_eq!(signed_distance(&b, &s).unwrap(), -0.3, epsilon = 1e-12);
    }

    #[test]
    fn sphere_near_rotated_box_edge() {
        let b = cube(0.5, 0.0, 0.0, 0.0, [0.0, 0.0, std::f64::consts::FRAC_PI_4]);
        let s = sphere(0.1, 1.0, 0.0, 0.0);
        let expect = 1.0 - 0.5 * 2f64.sqrt() - 0.1;
        assert_relative_eq!(signed_distance(&s, &b).unwrap(), expect, epsilon = 1e-12);
    }

    #[test]
    fn hull_matches_box_with_same_vertices() {
        let mut verts = Vec::new();
        for sx in [-1.0, 1.0] {
            for sy in [-1.0, 1.0] {
                for sz in [-1.0, 1.0] {
                    verts.push(Vector3::new(sx * 0.2, sy * 0.3, sz * 0.1));
                }
            }
        }
        let pose = Pose::from_xyz_rpy([0.05, 0.02, 0.0], [0.3, 0.2, 0.1]);
        let h = ConvexShape::hull(verts, pose).unwrap();
        let b = ConvexShape::cuboid(Vector3::new(0.2, 0.3, 0.1), pose).unwrap();
        for other in [sphere(0.05, 0.4, 0.1, 0.3), sphere(0.05, 0.1, 0.0, 0.0), cube(0.1, 0.3, 0.3, 0.1, [0.1, 0.0, 0.4])] {
            let dh = signed_distance(&h, &other).unwrap();
            let db = signed_distance(&b, &other).unwrap();
            assert_relative_eq!(dh, db, epsilon = 1e-9);
        }
    }

    #[test]
    fn scene_queries() {
        let scene = ConvexScene::new(
            vec![sphere(0.01, 0.0, 0.0, 0.0)],
            vec![sphere(0.01, 0.1, 0.0, 0.0), sphere(0.02, 0.0, -0.2, 0.0)],
        )
        .unwrap();
        let d = scene_min_signed_distance(&scene, &Pose::identity()).unwrap();
        assert_relative_eq!(d[0], 0.08, epsilon = 1e-12);
        assert_relative_eq!(d[1], 0.17, epsilon = 1e-12);
        let touching = Pose::from_xyz_rpy([0.08, 0.0, 0.0], [0.0; 3]);
        let d = scene_min_signed_distance(&scene, &touching).unwrap();
        assert!(d[0].abs() < 1e-6);
        assert!(ConvexScene::new(vec![], vec![sphere(0.1, 0.0, 0.0, 0.0)]).is_err());
    }

    #[test]
    fn scene_document_round_trip() {
        let text = r#"{
            "object_pieces": [{"type": "sphere", "radius": 0.01, "pose_xyz": [0,0,0], "pose_rpy": [0,0,0]}],
            "obstacles": [{"type": "box", "half_extents": [0.01, 0.02, 0.03], "pose_xyz": [0.1,0,0], "pose_rpy": [0,0,0.3]},
                          {"type": "hull", "vertices": [[0,0,0],[0.01,0,0],[0,0.01,0],[0,0,0.01]], "pose_xyz": [0,0.1,0], "pose_rpy": [0,0,0]}]
        }"#;
        let scene = load_scene(text).unwrap();
        assert_eq!(scene.obstacles.len(), 2);
        let again = ConvexScene::try_from(&scene.to_doc()).unwrap();
        let a = scene_min_signed_distance(&scene, &Pose::identity()).unwrap();
        let b = scene_min_signed_distance(&again, &Pose::identity()).unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert_relative_eq!(x, y, epsilon = 1e-12);
        }
        let bad = text.replace("\"radius\": 0.01", "\"radius\": -1");
        assert!(load_scene(&bad).unwrap_err().to_string().contains("object_pieces[0]"));
    }
}
