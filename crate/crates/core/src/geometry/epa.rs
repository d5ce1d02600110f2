//! Expanding polytope algorithm for penetration depth of overlapping cores.

use nalgebra::Vector3;

use super::gjk::{support_vertex, Support, Vertex};
use super::shape::ConvexShape;

pub(crate) const MAX_EPA_EXPANSIONS: usize = 128;
const EPA_TOLERANCE: f64 = 1e-8;
const AFFINE_EPS: f64 = 1e-12;

#[derive(Clone, Copy, Debug)]
struct Face {
    v: [usize; 3],
    normal: Vector3<f64>,
    distance: f64,
}

#[derive(Clone, Copy, Debug)]
pub(crate) struct Penetration {
    pub depth: f64,
    /// Unit direction in the Minkowski difference `A - B`; translating `A`
    /// by `-depth * normal` separates the cores.
    pub normal: Vector3<f64>,
}

/// Penetration depth of the cores of `a` and `b`, seeded with a GJK simplex
/// that encloses (or touches) the origin.
pub(crate) fn epa(a: &ConvexShape, b: &ConvexShape, simplex: &[Vertex]) -> Penetration {
    let mut verts: Vec<Vertex> = simplex.to_vec();
    if !complete_tetrahedron(a, b, &mut verts) {
        // Lower-dimensional difference (e.g. two coincident points): the origin
        // is on it with no room to move, so the core depth is zero.
        return Penetration {
            depth: 0.0,
            normal: Vector3::x(),
        };
    }
    let interior = verts.iter().fold(Vector3::zeros(), |acc, v| acc + v.w) / 4.0;

    let mut faces: Vec<Face> = [[0, 1, 2], [0, 3, 1], [0, 2, 3], [1, 3, 2]]
        .into_iter()
        .map(|f| make_face(&verts, f, &interior))
        .collect();

    let mut best = closest_face(&faces);
    for _ in 0..MAX_EPA_EXPANSIONS {
        let face = faces[best];
        let w = support_vertex(a, b, &face.normal, Support::Core);
        let improvement = w.w.dot(&face.normal) - face.distance;
        if improvement < EPA_TOLERANCE {
            break;
        }
        let new_index = verts.len();
        verts.push(w);

        let mut horizon: Vec<(usize, usize)> = Vec::new();
        let mut kept = Vec::with_capacity(faces.len() + 4);
        for f in faces.drain(..) {
            let visible = f.normal.dot(&(w.w - verts[f.v[0]].w)) > 1e-14;
            if visible {
                for (i, j) in [(f.v[0], f.v[1]), (f.v[1], f.v[2]), (f.v[2], f.v[0])] {
                    if let Some(pos) = horizon.iter().position(|&(p, q)| p == j && q == i) {
                        horizon.swap_remove(pos);
                    } else {
                        horizon.push((i, j));
                    }
                }
            } else {
                kept.push(f);
            }
        }
        if horizon.is_empty() {
            faces = kept;
            break;
        }
        for (i, j) in horizon {
            kept.push(make_face(&verts, [i, j, new_index], &interior));
        }
        faces = kept;
        best = closest_face(&faces);
    }
    let face = faces[closest_face(&faces)];
    Penetration {
        depth: face.distance.max(0.0),
        normal: face.normal,
    }
}

fn closest_face(faces: &[Face]) -> usize {
    faces
        .iter()
        .enumerate()
        .min_by(|x, y| x.1.distance.total_cmp(&y.1.distance))
        .map(|(i, _)| i)
        .expect("polytope has faces")
}

fn make_face(verts: &[Vertex], v: [usize; 3], interior: &Vector3<f64>) -> Face {
    let (a, b, c) = (verts[v[0]].w, verts[v[1]].w, verts[v[2]].w);
    let mut n = (b - a).cross(&(c - a));
    let len = n.norm();
    if !(len > 0.0) {
        return Face {
            v,
            normal: Vector3::x(),
            distance: f64::INFINITY,
        };
    }
    n /= len;
    let mut v = v;
    if n.dot(&(a - interior)) < 0.0 {
        n = -n;
        v.swap(1, 2);
    }
    Face {
        v,
        normal: n,
        distance: n.dot(&a),
    }
}

/// Grows the seed simplex to an affinely independent tetrahedron using
/// support queries. Returns false if the Minkowski difference is flat.
fn complete_tetrahedron(a: &ConvexShape, b: &ConvexShape, verts: &mut Vec<Vertex>) -> bool {
    let seed = std::mem::take(verts);
    for s in seed {
        if verts.is_empty() || (verts.len() < 4 && affine_distance(verts, &s.w) > AFFINE_EPS) {
            verts.push(s);
        }
    }
    if verts.is_empty() {
        verts.push(support_vertex(a, b, &Vector3::x(), Support::Core));
    }
    let axes = [Vector3::x(), Vector3::y(), Vector3::z()];
    while verts.len() < 4 {
        let p0 = verts[0].w;
        let candidates: Vec<Vector3<f64>> = match verts.len() {
            1 => axes.iter().flat_map(|d| [*d, -*d]).collect(),
            2 => {
                let line = verts[1].w - p0;
                axes.iter()
                    .map(|d| line.cross(d))
                    .filter(|d| d.norm() > AFFINE_EPS)
                    .flat_map(|d| [d, -d])
                    .collect()
            }
            _ => {
                let n = (verts[1].w - p0).cross(&(verts[2].w - p0));
                vec![n, -n]
            }
        };
        let mut best: Option<(f64, Vertex)> = None;
        for d in candidates {
            let s = support_vertex(a, b, &d, Support::Core);
            let dist = affine_distance(verts, &s.w);
            if dist > AFFINE_EPS && best.is_none_or(|(bd, _)| dist > bd) {
                best = Some((dist, s));
            }
        }
        match best {
            Some((_, s)) => verts.push(s),
            None => return false,
        }
    }
    true
}

fn affine_distance(verts: &[Vertex], p: &Vector3<f64>) -> f64 {
    let p0 = verts[0].w;
    match verts.len() {
        1 => (p - p0).norm(),
        2 => {
            let l = verts[1].w - p0;
            (p - p0).cross(&l).norm() / l.norm()
        }
        _ => {
            let n = (verts[1].w - p0).cross(&(verts[2].w - p0));
            let nn = n.norm();
            if nn > 0.0 {
                ((p - p0).dot(&n) / nn).abs()
            } else {
                0.0
            }
        }
    }
}
