use nalgebra::{Matrix3, Vector3};

use crate::error::{Error, Result};
use crate::pose::Pose;

#[derive(Clone, Debug, PartialEq)]
pub enum ShapeKind {
    Sphere { radius: f64 },
    Box { half_extents: Vector3<f64> },
    Hull { vertices: Vec<Vector3<f64>> },
}

/// A convex shape placed in some frame by `pose`.
///
/// Internally every shape is a "core" point set plus a margin: a sphere is its
/// center with a margin equal to its radius, boxes and hulls are polytopes with
/// zero margin. GJK and EPA run on the cores, which keeps them finite for
/// spheres.
#[derive(Clone, Debug, PartialEq)]
pub struct ConvexShape {
    pub kind: ShapeKind,
    pub pose: Pose,
}

impl ConvexShape {
    pub fn sphere(radius: f64, pose: Pose) -> Result<Self> {
        Self::new(ShapeKind::Sphere { radius }, pose)
    }

    pub fn cuboid(half_extents: Vector3<f64>, pose: Pose) -> Result<Self> {
        Self::new(ShapeKind::Box { half_extents }, pose)
    }

    pub fn hull(vertices: Vec<Vector3<f64>>, pose: Pose) -> Result<Self> {
        Self::new(ShapeKind::Hull { vertices }, pose)
    }

    pub fn new(kind: ShapeKind, pose: Pose) -> Result<Self> {
        match &kind {
            ShapeKind::Sphere { radius } => {
                if !(*radius > 0.0 && radius.is_finite()) {
                    return Err(Error::InvalidShape(format!("sphere radius {radius} must be > 0")));
                }
            }
            ShapeKind::Box { half_extents } => {
                if !half_extents.iter().all(|h| *h > 0.0 && h.is_finite()) {
                    return Err(Error::InvalidShape(format!(
                        "box half-extents {:?} must all be > 0",
                        half_extents.as_slice()
                    )));
                }
            }
            ShapeKind::Hull { vertices } => check_hull(vertices)?,
        }
        if !pose.is_finite() {
            return Err(Error::InvalidShape("non-finite pose".into()));
        }
        Ok(Self { kind, pose })
    }

    /// The same shape re-expressed in a parent frame: `parent * self.pose`.
    pub fn placed(&self, parent: &Pose) -> ConvexShape {
        ConvexShape {
            kind: self.kind.clone(),
            pose: parent.compose(&self.pose),
        }
    }

    pub fn margin(&self) -> f64 {
        match self.kind {
            ShapeKind::Sphere { radius } => radius,
            _ => 0.0,
        }
    }

    pub fn center(&self) -> Vector3<f64> {
        match &self.kind {
            ShapeKind::Hull { vertices } => {
                let c = vertices.iter().fold(Vector3::zeros(), |a, v| a + v) / vertices.len() as f64;
                self.pose.transform_point(&c)
            }
            _ => self.pose.position,
        }
    }

    /// Farthest point of the core (margin excluded) along `direction`.
    /// `direction` need not be normalized.
    pub(crate) fn core_support(&self, direction: &Vector3<f64>) -> Vector3<f64> {
        match &self.kind {
            ShapeKind::Sphere { .. } => self.pose.position,
            ShapeKind::Box { half_extents } => {
                let local = self.pose.orientation.inverse() * direction;
                let corner = Vector3::new(
                    half_extents.x.copysign(sign_or_pos(local.x)),
                    half_extents.y.copysign(sign_or_pos(local.y)),
                    half_extents.z.copysign(sign_or_pos(local.z)),
                );
                self.pose.transform_point(&corner)
            }
            ShapeKind::Hull { vertices } => {
                let local = self.pose.orientation.inverse() * direction;
                let mut best = &vertices[0];
                let mut best_dot = best.dot(&local);
                for v in &vertices[1..] {
                    let d = v.dot(&local);
                    if d > best_dot {
                        best_dot = d;
                        best = v;
                    }
                }
                self.pose.transform_point(best)
            }
        }
    }

    pub(crate) fn core_is_point(&self) -> bool {
        matches!(self.kind, ShapeKind::Sphere { .. })
    }

    pub fn describe(&self) -> String {
        let p = self.pose.position;
        let kind = match &self.kind {
            ShapeKind::Sphere { radius } => format!("sphere(r={radius})"),
            ShapeKind::Box { half_extents } => {
                format!("box({}, {}, {})", half_extents.x, half_extents.y, half_extents.z)
            }
            ShapeKind::Hull { vertices } => format!("hull({} vertices)", vertices.len()),
        };
        format!("{kind} at ({:.4}, {:.4}, {:.4})", p.x, p.y, p.z)
    }
}

fn sign_or_pos(v: f64) -> f64 {
    if v < 0.0 {
        -1.0
    } else {
        1.0
    }
}

fn check_hull(vertices: &[Vector3<f64>]) -> Result<()> {
    if vertices.len() < 4 {
        return Err(Error::InvalidShape(format!(
            "hull needs at least 4 vertices, got {}",
            vertices.len()
        )));
    }
    if vertices.iter().any(|v| !v.iter().all(|c| c.is_finite())) {
        return Err(Error::InvalidShape("hull has non-finite vertex".into()));
    }
    let c = vertices.iter().fold(Vector3::zeros(), |a, v| a + v) / vertices.len() as f64;
    let cov = vertices
        .iter()
        .map(|v| (v - c) * (v - c).transpose())
        .fold(Matrix3::zeros(), |a, m| a + m);
    let scale = cov.trace().max(f64::MIN_POSITIVE);
    let eig = cov.symmetric_eigenvalues();
    if eig.min() <= 1e-12 * scale {
        return Err(Error::InvalidShape("hull vertices are coplanar".into()));
    }
    Ok(())
}

/// Full support point (margin included) along a unit direction.
pub fn support(shape: &ConvexShape, direction: &Vector3<f64>) -> Result<Vector3<f64>> {
    let n = direction.norm();
    if !(n > 1e-12) || !n.is_finite() {
        return Err(Error::InvalidInput("support direction must be non-zero".into()));
    }
    let d = direction / n;
    Ok(shape.core_support(&d) + d * shape.margin())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn invalid_shapes() {
        assert!(ConvexShape::sphere(0.0, Pose::identity()).is_err());
        assert!(ConvexShape::cuboid(Vector3::new(1.0, 0.0, 1.0), Pose::identity()).is_err());
        let flat = vec![
            Vector3::new(0.0, 0.0, 0.0),
            Vector3::new(1.0, 0.0, 0.0),
            Vector3::new(0.0, 1.0, 0.0),
            Vector3::new(1.0, 1.0, 0.0),
        ];
        assert!(ConvexShape::hull(flat, Pose::identity()).is_err());
    }

    #[test]
    fn sphere_and_box_support() {
        let s = ConvexShape::sphere(1.0, Pose::identity()).unwrap();
        assert_relative_eq!(support(&s, &Vector3::x()).unwrap(), Vector3::x());
        let b = ConvexShape::cuboid(Vector3::new(1.0, 2.0, 3.0), Pose::identity()).unwrap();
        let d = Vector3::new(1.0, 1.0, 1.0) / 3f64.sqrt();
        assert_relative_eq!(support(&b, &d).unwrap(), Vector3::new(1.0, 2.0, 3.0));
        assert!(support(&b, &Vector3::zeros()).is_err());
    }
}
