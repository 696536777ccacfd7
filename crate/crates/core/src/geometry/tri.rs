//! Scalar triangle primitives: area/normal, Möller–Trumbore ray
//! intersection with grazing detection, and closest-point queries.

use nalgebra::{Point3, Vector3};

use crate::scalar::Real;

/// Barycentric margin below which a ray hit counts as grazing an edge or
/// vertex and the whole parity query must be retried with a fresh ray.
const GRAZE_EPS: f64 = 1e-9;

pub fn area<T: Real>(a: &Point3<T>, b: &Point3<T>, c: &Point3<T>) -> T {
    let n = (b - a).cross(&(c - a));
    T::of(0.5) * n.norm()
}

/// Unit face normal for counter-clockwise winding; zero vector when the
/// triangle is degenerate.
pub fn unit_normal<T: Real>(a: &Point3<T>, b: &Point3<T>, c: &Point3<T>) -> Vector3<T> {
    let n = (b - a).cross(&(c - a));
    let len = n.norm();
    if len > T::zero() {
        n / len
    } else {
        Vector3::zeros()
    }
}

/// One ray/triangle intersection with t > 0.
#[derive(Debug, Clone, Copy)]
pub struct RayHit<T: Real> {
    pub t: T,
    /// Hit too close to an edge/vertex, to the ray origin, or to a
    /// parallel configuration for the parity count to be trusted.
    pub grazing: bool,
}

/// Möller–Trumbore. Returns hits with t strictly positive; hits behind or
/// at the origin are discarded (an on-surface origin is flagged grazing).
pub fn ray_intersect<T: Real>(
    origin: &Point3<T>,
    dir: &Vector3<T>,
    a: &Point3<T>,
    b: &Point3<T>,
    c: &Point3<T>,
) -> Option<RayHit<T>> {
    let e1 = b - a;
    let e2 = c - a;
    let pvec = dir.cross(&e2);
    let det = e1.dot(&pvec);
    let graze = T::of(GRAZE_EPS);

    // Near-parallel (or degenerate) configurations make u/v unreliable:
    // report a grazing pseudo-hit only if the ray passes near the triangle's
    // plane slab, otherwise treat as a clean miss.
    let det_floor = T::of(1e-12) * e1.norm() * e2.norm();
    if det.abs() <= det_floor {
        let n = e1.cross(&e2);
        let n_len = n.norm();
        if n_len > T::zero() {
            let plane_dist = (origin - a).dot(&n).abs() / n_len;
            let scale = e1.norm().max(e2.norm());
            if plane_dist <= scale * T::of(1e-9) {
                return Some(RayHit {
                    t: T::zero(),
                    grazing: true,
                });
            }
        }
        return None;
    }

    let inv_det = T::one() / det;
    let tvec = origin - a;
    let u = tvec.dot(&pvec) * inv_det;
    if u < -graze || u > T::one() + graze {
        return None;
    }
    let qvec = tvec.cross(&e1);
    let v = dir.dot(&qvec) * inv_det;
    if v < -graze || u + v > T::one() + graze {
        return None;
    }
    let t = e2.dot(&qvec) * inv_det;
    if t <= T::zero() {
        // A hit exactly at the origin means the query point sits on the
        // surface; the caller must re-roll.
        if t.abs() <= T::of(GRAZE_EPS) {
            return Some(RayHit {
                t: T::zero(),
                grazing: true,
            });
        }
        return None;
    }

    let near_edge = u < graze || v < graze || u + v > T::one() - graze;
    let near_origin = t <= T::of(GRAZE_EPS);
    Some(RayHit {
        t,
        grazing: near_edge || near_origin,
    })
}

/// Closest point on triangle `abc` to `p` (Ericson, Real-Time Collision
/// Detection §5.1.5).
pub fn closest_point<T: Real>(
    p: &Point3<T>,
    a: &Point3<T>,
    b: &Point3<T>,
    c: &Point3<T>,
) -> Point3<T> {
    let ab = b - a;
    let ac = c - a;
    let ap = p - a;
    let d1 = ab.dot(&ap);
    let d2 = ac.dot(&ap);
    if d1 <= T::zero() && d2 <= T::zero() {
        return *a;
    }

    let bp = p - b;
    let d3 = ab.dot(&bp);
    let d4 = ac.dot(&bp);
    if d3 >= T::zero() && d4 <= d3 {
        return *b;
    }

    let vc = d1 * d4 - d3 * d2;
    if vc <= T::zero() && d1 >= T::zero() && d3 <= T::zero() {
        let v = d1 / (d1 - d3);
        return a + ab * v;
    }

    let cp = p - c;
    let d5 = ab.dot(&cp);
    let d6 = ac.dot(&cp);
    if d6 >= T::zero() && d5 <= d6 {
        return *c;
    }

    let vb = d5 * d2 - d1 * d6;
    if vb <= T::zero() && d2 >= T::zero() && d6 <= T::zero() {
        let w = d2 / (d2 - d6);
        return a + ac * w;
    }

    let va = d3 * d6 - d5 * d4;
    if va <= T::zero() && (d4 - d3) >= T::zero() && (d5 - d6) >= T::zero() {
        let w = (d4 - d3) / ((d4 - d3) + (d5 - d6));
        return b + (c - b) * w;
    }

    let denom = T::one() / (va + vb + vc);
    let v = vb * denom;
    let w = vc * denom;
    a + ab * v + ac * w
}

/// Signed solid angle of triangle `abc` seen from `q`, divided by 4π
/// (Van Oosterom & Strackee). Summed over a closed mesh this gives the
/// generalized winding number.
pub fn winding_fraction<T: Real>(
    q: &Point3<T>,
    a: &Point3<T>,
    b: &Point3<T>,
    c: &Point3<T>,
) -> T {
    let ra = a - q;
    let rb = b - q;
    let rc = c - q;
    let la = ra.norm();
    let lb = rb.norm();
    let lc = rc.norm();
    let num = ra.dot(&rb.cross(&rc));
    let den = la * lb * lc + ra.dot(&rb) * lc + rb.dot(&rc) * la + rc.dot(&ra) * lb;
    let omega_half = num.atan2(den);
    omega_half / (T::of(2.0) * T::pi())
}
