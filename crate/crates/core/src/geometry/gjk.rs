//! Gilbert-Johnson-Keerthi distance on the Minkowski difference of two cores.

use nalgebra::Vector3;

use super::shape::ConvexShape;
use crate::error::{Error, Result};

pub(crate) const MAX_GJK_ITERATIONS: usize = 256;
const REL_TOLERANCE: f64 = 1e-14;
const OVERLAP_TOLERANCE: f64 = 1e-14;
const DIRECTION_NUDGE: f64 = 1e-10;

/// Point of the Minkowski difference `A - B` with the support points that produced it.
#[derive(Clone, Copy, Debug)]
pub(crate) struct Vertex {
    pub w: Vector3<f64>,
    pub a: Vector3<f64>,
    pub b: Vector3<f64>,
}

/// Which support function to sample: the core (margin excluded) or the full shape.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) enum Support {
    Core,
    Full,
}

pub(crate) fn support_vertex(
    a: &ConvexShape,
    b: &ConvexShape,
    d: &Vector3<f64>,
    mode: Support,
) -> Vertex {
    let mut pa = a.core_support(d);
    let mut pb = b.core_support(&-d);
    if mode == Support::Full {
        let n = d.norm();
        if n > 0.0 {
            let u = d / n;
            pa += u * a.margin();
            pb -= u * b.margin();
        }
    }
    Vertex { w: pa - pb, a: pa, b: pb }
}

#[derive(Clone, Debug)]
pub(crate) enum GjkOutcome {
    Separated {
        distance: f64,
        witness_a: Vector3<f64>,
        witness_b: Vector3<f64>,
    },
    /// The origin lies in (or on) the core Minkowski difference. The simplex
    /// contains it and seeds EPA.
    Overlapping { simplex: Vec<Vertex> },
}

fn initial_direction(a: &ConvexShape, b: &ConvexShape) -> Vector3<f64> {
    let d = a.center() - b.center();
    if d.norm_squared() > 0.0 {
        d
    } else {
        Vector3::new(1.0, DIRECTION_NUDGE, DIRECTION_NUDGE)
    }
}

/// Closest-point GJK between the cores of `a` and `b`.
pub(crate) fn gjk_distance(a: &ConvexShape, b: &ConvexShape) -> Result<GjkOutcome> {
    let mut simplex: Vec<Vertex> = Vec::with_capacity(4);
    let mut lambdas: Vec<f64> = Vec::with_capacity(4);
    let mut v = initial_direction(a, b);

    for _ in 0..MAX_GJK_ITERATIONS {
        let vv = v.norm_squared();
        if !simplex.is_empty() && vv <= OVERLAP_TOLERANCE * OVERLAP_TOLERANCE {
            return Ok(GjkOutcome::Overlapping { simplex });
        }
        let mut dir = -v;
        if !dir.iter().all(|c| c.is_finite()) {
            return Err(Error::Numerical("non-finite GJK direction".into()));
        }
        if dir.norm_squared() == 0.0 {
            dir = Vector3::new(DIRECTION_NUDGE, DIRECTION_NUDGE, 1.0);
        }
        let w = support_vertex(a, b, &dir, Support::Core);

        if !simplex.is_empty() {
            let gap = vv - v.dot(&w.w);
            let duplicate = simplex
                .iter()
                .any(|s| (s.w - w.w).norm_squared() <= 1e-30 + 1e-24 * vv);
            if gap <= REL_TOLERANCE * vv || duplicate {
                return Ok(separated(&simplex, &lambdas));
            }
        }

        simplex.push(w);
        let (closest, reduced, weights) = closest_on_simplex(&simplex);
        if reduced.len() == 4 {
            return Ok(GjkOutcome::Overlapping { simplex });
        }
        let prev_vv = if lambdas.is_empty() { f64::INFINITY } else { vv };
        simplex = reduced.iter().map(|&i| simplex[i]).collect();
        lambdas = weights;
        let new_vv = closest.norm_squared();
        if new_vv >= prev_vv {
            // No progress possible; the previous estimate is within rounding.
            return Ok(separated(&simplex, &lambdas));
        }
        v = closest;
    }
    Err(Error::GjkNonTermination {
        a: a.describe(),
        b: b.describe(),
        iterations: MAX_GJK_ITERATIONS,
    })
}

fn separated(simplex: &[Vertex], lambdas: &[f64]) -> GjkOutcome {
    let mut wa = Vector3::zeros();
    let mut wb = Vector3::zeros();
    for (s, l) in simplex.iter().zip(lambdas) {
        wa += s.a * *l;
        wb += s.b * *l;
    }
    GjkOutcome::Separated {
        distance: (wa - wb).norm(),
        witness_a: wa,
        witness_b: wb,
    }
}

/// Boolean GJK on the full shapes (margins included).
pub(crate) fn gjk_intersects(a: &ConvexShape, b: &ConvexShape) -> bool {
    let mut simplex: Vec<Vertex> = Vec::with_capacity(4);
    let mut v = initial_direction(a, b);
    for _ in 0..MAX_GJK_ITERATIONS {
        let w = support_vertex(a, b, &-v, Support::Full);
        if v.dot(&w.w) > 0.0 {
            return false;
        }
        simplex.push(w);
        let (closest, reduced, _) = closest_on_simplex(&simplex);
        if reduced.len() == 4 || closest.norm_squared() <= OVERLAP_TOLERANCE * OVERLAP_TOLERANCE {
            return true;
        }
        simplex = reduced.iter().map(|&i| simplex[i]).collect();
        v = closest;
    }
    // Exhausted while approaching the origin: touching to within tolerance.
    true
}

/// Closest point to the origin on the simplex, the indices of the sub-simplex
/// supporting it and the barycentric weights over that sub-simplex. A returned
/// sub-simplex of length 4 means the origin is inside the tetrahedron.
pub(crate) fn closest_on_simplex(s: &[Vertex]) -> (Vector3<f64>, Vec<usize>, Vec<f64>) {
    match s.len() {
        1 => (s[0].w, vec![0], vec![1.0]),
        2 => closest_on_segment(s[0].w, s[1].w, [0, 1]),
        3 => closest_on_triangle(s[0].w, s[1].w, s[2].w, [0, 1, 2]),
        4 => closest_on_tetrahedron(s),
        n => unreachable!("simplex of size {n}"),
    }
}

fn closest_on_segment(
    a: Vector3<f64>,
    b: Vector3<f64>,
    idx: [usize; 2],
) -> (Vector3<f64>, Vec<usize>, Vec<f64>) {
    let ab = b - a;
    let denom = ab.norm_squared();
    if denom <= 0.0 {
        return (a, vec![idx[0]], vec![1.0]);
    }
    let t = -a.dot(&ab) / denom;
    if t <= 0.0 {
        (a, vec![idx[0]], vec![1.0])
    } else if t >= 1.0 {
        (b, vec![idx[1]], vec![1.0])
    } else {
        (a + ab * t, vec![idx[0], idx[1]], vec![1.0 - t, t])
    }
}

fn closest_on_triangle(
    a: Vector3<f64>,
    b: Vector3<f64>,
    c: Vector3<f64>,
    idx: [usize; 3],
) -> (Vector3<f64>, Vec<usize>, Vec<f64>) {
    let ab = b - a;
    let ac = c - a;
    let ap = -a;
    let d1 = ab.dot(&ap);
    let d2 = ac.dot(&ap);
    if d1 <= 0.0 && d2 <= 0.0 {
        return (a, vec![idx[0]], vec![1.0]);
    }
    let bp = -b;
    let d3 = ab.dot(&bp);
    let d4 = ac.dot(&bp);
    if d3 >= 0.0 && d4 <= d3 {
        return (b, vec![idx[1]], vec![1.0]);
    }
    let vc = d1 * d4 - d3 * d2;
    if vc <= 0.0 && d1 >= 0.0 && d3 <= 0.0 {
        let v = d1 / (d1 - d3);
        return (a + ab * v, vec![idx[0], idx[1]], vec![1.0 - v, v]);
    }
    let cp = -c;
    let d5 = ab.dot(&cp);
    let d6 = ac.dot(&cp);
    if d6 >= 0.0 && d5 <= d6 {
        return (c, vec![idx[2]], vec![1.0]);
    }
    let vb = d5 * d2 - d1 * d6;
    if vb <= 0.0 && d2 >= 0.0 && d6 <= 0.0 {
        let w = d2 / (d2 - d6);
        return (a + ac * w, vec![idx[0], idx[2]], vec![1.0 - w, w]);
    }
    let va = d3 * d6 - d5 * d4;
    if va <= 0.0 && (d4 - d3) >= 0.0 && (d5 - d6) >= 0.0 {
        let w = (d4 - d3) / ((d4 - d3) + (d5 - d6));
        return (b + (c - b) * w, vec![idx[1], idx[2]], vec![1.0 - w, w]);
    }
    let sum = va + vb + vc;
    if !(sum.abs() > 0.0) || !sum.is_finite() {
        // Collinear triangle: fall back to the best edge.
        let cands = [
            closest_on_segment(a, b, [idx[0], idx[1]]),
            closest_on_segment(a, c, [idx[0], idx[2]]),
            closest_on_segment(b, c, [idx[1], idx[2]]),
        ];
        return cands
            .into_iter()
            .min_by(|x, y| x.0.norm_squared().total_cmp(&y.0.norm_squared()))
            .unwrap();
    }
    let denom = 1.0 / sum;
    let v = vb * denom;
    let w = vc * denom;
    (a + ab * v + ac * w, idx.to_vec(), vec![1.0 - v - w, v, w])
}

fn closest_on_tetrahedron(s: &[Vertex]) -> (Vector3<f64>, Vec<usize>, Vec<f64>) {
    let p = [s[0].w, s[1].w, s[2].w, s[3].w];
    // (face, opposite vertex)
    let faces: [([usize; 3], usize); 4] = [
        ([0, 1, 2], 3),
        ([0, 2, 3], 1),
        ([0, 3, 1], 2),
        ([1, 3, 2], 0),
    ];
    let scale = (p[1] - p[0])
        .norm()
        .max((p[2] - p[0]).norm())
        .max((p[3] - p[0]).norm());
    let vol = (p[1] - p[0]).cross(&(p[2] - p[0])).dot(&(p[3] - p[0]));
    let degenerate = vol.abs() <= 1e-12 * scale * scale * scale;

    let mut best: Option<(Vector3<f64>, Vec<usize>, Vec<f64>)> = None;
    let mut any_outside = false;
    for (f, opp) in faces {
        let (a, b, c) = (p[f[0]], p[f[1]], p[f[2]]);
        let n = (b - a).cross(&(c - a));
        let sign_origin = (-a).dot(&n);
        let sign_opp = (p[opp] - a).dot(&n);
        let outside = degenerate || sign_origin * sign_opp < 0.0;
        if !outside {
            continue;
        }
        any_outside = true;
        let cand = closest_on_triangle(a, b, c, f);
        let better = best
            .as_ref()
            .is_none_or(|b| cand.0.norm_squared() < b.0.norm_squared());
        if better {
            best = Some(cand);
        }
    }
    match best {
        Some(b) if any_outside => b,
        _ => (Vector3::zeros(), vec![0, 1, 2, 3], vec![0.25; 4]),
    }
}
