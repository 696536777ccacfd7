use std::collections::HashMap;

use nalgebra::{Point3, Vector3};

use crate::error::{Error, Result};
use crate::scalar::Real;

use super::aabb::Aabb3;
use super::tri;

/// Relative area (area / longest_bbox_side²) below which a face counts as
/// degenerate, i.e. the absolute threshold once the mesh sits in the unit
/// cube.
const DEGENERATE_REL_AREA: f64 = 1e-12;

/// Indexed triangle mesh.
///
/// Construction validates indices, drops trivially collapsed faces
/// (repeated indices), rejects sliver faces, and computes the
/// watertightness flag with an edge-manifold test: every undirected edge
/// must be shared by exactly two faces with opposite orientation.
#[derive(Debug, Clone, PartialEq)]
pub struct TriMesh<T: Real> {
    vertices: Vec<Point3<T>>,
    triangles: Vec<[u32; 3]>,
    watertight: bool,
}

impl<T: Real> TriMesh<T> {
    pub fn new(vertices: Vec<Point3<T>>, triangles: Vec<[u32; 3]>) -> Result<Self> {
        let n = vertices.len() as u32;
        for (fi, t) in triangles.iter().enumerate() {
            if t.iter().any(|&i| i >= n) {
                return Err(Error::DimensionMismatch(format!(
                    "triangle {fi} references vertex {} of {n}",
                    t.iter().max().unwrap()
                )));
            }
        }

        // Cleanup pass: faces with a repeated index carry no area at all.
        let triangles: Vec<[u32; 3]> = triangles
            .into_iter()
            .filter(|t| t[0] != t[1] && t[1] != t[2] && t[0] != t[2])
            .collect();

        if let Some(bb) = Aabb3::from_points(vertices.iter()) {
            let side = bb.longest_side();
            if side > T::zero() {
                let floor = T::of(DEGENERATE_REL_AREA) * side * side;
                for (fi, t) in triangles.iter().enumerate() {
                    let a = tri::area(
                        &vertices[t[0] as usize],
                        &vertices[t[1] as usize],
                        &vertices[t[2] as usize],
                    );
                    if a <= floor {
                        return Err(Error::DegenerateGeometry(format!(
                            "triangle {fi} has near-zero area"
                        )));
                    }
                }
            }
        }

        let watertight = edge_manifold(&triangles);
        Ok(Self {
            vertices,
            triangles,
            watertight,
        })
    }

    /// Construct from iso-surface extraction output. Indices are trusted
    /// (the extractor welds its own vertices) and thin faces are kept:
    /// they are legitimate pieces of the iso-surface, and dropping them
    /// would tear it open. Watertightness is still computed honestly.
    pub(crate) fn from_extraction(vertices: Vec<Point3<T>>, triangles: Vec<[u32; 3]>) -> Self {
        debug_assert!(triangles
            .iter()
            .all(|t| t.iter().all(|&i| (i as usize) < vertices.len())));
        let watertight = edge_manifold(&triangles);
        Self {
            vertices,
            triangles,
            watertight,
        }
    }

    pub fn vertices(&self) -> &[Point3<T>] {
        &self.vertices
    }

    pub fn triangles(&self) -> &[[u32; 3]] {
        &self.triangles
    }

    pub fn vertex_count(&self) -> usize {
        self.vertices.len()
    }

    pub fn triangle_count(&self) -> usize {
        self.triangles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.triangles.is_empty()
    }

    pub fn is_watertight(&self) -> bool {
        self.watertight
    }

    /// The three corner positions of face `i`.
    pub fn triangle(&self, i: usize) -> [Point3<T>; 3] {
        let t = self.triangles[i];
        [
            self.vertices[t[0] as usize],
            self.vertices[t[1] as usize],
            self.vertices[t[2] as usize],
        ]
    }

    pub fn face_normal(&self, i: usize) -> Vector3<T> {
        let [a, b, c] = self.triangle(i);
        tri::unit_normal(&a, &b, &c)
    }

    pub fn face_area(&self, i: usize) -> T {
        let [a, b, c] = self.triangle(i);
        tri::area(&a, &b, &c)
    }

    pub fn total_area(&self) -> T {
        (0..self.triangle_count()).fold(T::zero(), |acc, i| acc + self.face_area(i))
    }

    pub fn aabb(&self) -> Result<Aabb3<T>> {
        Aabb3::from_points(self.vertices.iter())
            .ok_or_else(|| Error::DegenerateGeometry("mesh has no vertices".into()))
    }

    /// V − E + F with E counted over undirected edges. 2 for a topological
    /// sphere, 0 for a torus.
    pub fn euler_characteristic(&self) -> i64 {
        let mut edges = std::collections::HashSet::new();
        for t in &self.triangles {
            for (a, b) in [(t[0], t[1]), (t[1], t[2]), (t[2], t[0])] {
                edges.insert((a.min(b), a.max(b)));
            }
        }
        self.vertices.len() as i64 - edges.len() as i64 + self.triangles.len() as i64
    }

    /// Apply a similarity transform. Topology and orientation are
    /// preserved (scale > 0), so the watertight flag carries over.
    pub fn transformed(&self, tf: &ScaleTranslate<T>) -> Self {
        assert!(tf.scale > T::zero(), "similarity transform needs scale > 0");
        let vertices = self.vertices.iter().map(|p| tf.apply(p)).collect();
        Self {
            vertices,
            triangles: self.triangles.clone(),
            watertight: self.watertight,
        }
    }

    /// Signed volume via the divergence theorem; positive for outward
    /// winding of a closed mesh.
    pub fn signed_volume(&self) -> T {
        let six = T::of(6.0);
        let mut v = T::zero();
        for t in &self.triangles {
            let a = self.vertices[t[0] as usize].coords;
            let b = self.vertices[t[1] as usize].coords;
            let c = self.vertices[t[2] as usize].coords;
            v += a.dot(&b.cross(&c)) / six;
        }
        v
    }
}

/// True iff every undirected edge is used exactly twice, once per
/// direction (closed, consistently wound, 2-manifold along edges).
fn edge_manifold(triangles: &[[u32; 3]]) -> bool {
    if triangles.is_empty() {
        return false;
    }
    // (min, max) -> (forward uses, backward uses) where forward = (min, max).
    let mut edges: HashMap<(u32, u32), (u32, u32)> = HashMap::new();
    for t in triangles {
        for (a, b) in [(t[0], t[1]), (t[1], t[2]), (t[2], t[0])] {
            let key = (a.min(b), a.max(b));
            let e = edges.entry(key).or_insert((0, 0));
            if a < b {
                e.0 += 1;
            } else {
                e.1 += 1;
            }
        }
    }
    edges.values().all(|&(f, b)| f == 1 && b == 1)
}

/// Uniform scale followed by translation: `q = scale * p + translation`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScaleTranslate<T: Real> {
    pub scale: T,
    pub translation: Vector3<T>,
}

impl<T: Real> ScaleTranslate<T> {
    pub fn identity() -> Self {
        Self {
            scale: T::one(),
            translation: Vector3::zeros(),
        }
    }

    pub fn apply(&self, p: &Point3<T>) -> Point3<T> {
        Point3::from(p.coords * self.scale + self.translation)
    }

    pub fn inverse(&self) -> Self {
        let inv_s = T::one() / self.scale;
        Self {
            scale: inv_s,
            translation: -self.translation * inv_s,
        }
    }

    /// Composition: `self.then(next)` applies `self` first.
    pub fn then(&self, next: &Self) -> Self {
        Self {
            scale: next.scale * self.scale,
            translation: self.translation * next.scale + next.translation,
        }
    }
}

/// Rescale and shift a mesh so its bounding box has longest side 1 and is
/// centered at the origin. Returns the transform that was applied.
pub fn normalize_to_unit_cube<T: Real>(
    mesh: &TriMesh<T>,
) -> Result<(TriMesh<T>, ScaleTranslate<T>)> {
    let bb = mesh.aabb()?;
    let side = bb.longest_side();
    if !(side > T::zero()) {
        return Err(Error::DegenerateGeometry(
            "bounding box has zero extent".into(),
        ));
    }
    let scale = T::one() / side;
    let center = bb.center();
    let tf = ScaleTranslate {
        scale,
        translation: -center.coords * scale,
    };
    Ok((mesh.transformed(&tf), tf))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::fixtures::box_mesh;
    use approx::assert_relative_eq;

    #[test]
    fn cube_is_watertight_and_spherelike() {
        let m = box_mesh(Point3::new(0.0, 0.0, 0.0), Point3::new(2.0, 2.0, 2.0));
        assert!(m.is_watertight());
        assert_eq!(m.vertex_count(), 8);
        assert_eq!(m.triangle_count(), 12);
        assert_eq!(m.euler_characteristic(), 2);
        assert_relative_eq!(m.signed_volume(), 8.0, epsilon = 1e-12);
        assert_relative_eq!(m.total_area(), 24.0, epsilon = 1e-12);
    }

    #[test]
    fn open_triangle_is_not_watertight() {
        let m = TriMesh::new(
            vec![
                Point3::new(0.0, 0.0, 0.0),
                Point3::new(1.0, 0.0, 0.0),
                Point3::new(0.0, 1.0, 0.0),
            ],
            vec![[0, 1, 2]],
        )
        .unwrap();
        assert!(!m.is_watertight());
    }

    #[test]
    fn out_of_range_index_rejected() {
        let r = TriMesh::new(vec![Point3::new(0.0, 0.0, 0.0)], vec![[0, 0, 1]]);
        assert!(r.is_err());
    }

    #[test]
    fn sliver_face_rejected() {
        let r = TriMesh::new(
            vec![
                Point3::new(0.0, 0.0, 0.0),
                Point3::new(1.0, 0.0, 0.0),
                Point3::new(2.0, 1e-15, 0.0),
            ],
            vec![[0, 1, 2]],
        );
        assert!(matches!(r, Err(Error::DegenerateGeometry(_))));
    }

    #[test]
    fn normalize_unit_cube_analytic() {
        let m = box_mesh(Point3::new(0.0, 0.0, 0.0), Point3::new(2.0, 2.0, 2.0));
        let (n, tf) = normalize_to_unit_cube(&m).unwrap();
        assert_relative_eq!(tf.scale, 0.5);
        assert_relative_eq!(tf.translation, Vector3::new(-0.5, -0.5, -0.5));
        let bb = n.aabb().unwrap();
        assert_relative_eq!(bb.min, Point3::new(-0.5, -0.5, -0.5), epsilon = 1e-9);
        assert_relative_eq!(bb.max, Point3::new(0.5, 0.5, 0.5), epsilon = 1e-9);
    }

    #[test]
    fn normalize_is_idempotent() {
        let m = box_mesh(Point3::new(-1.0, 2.0, 0.0), Point3::new(3.0, 3.0, 1.0));
        let (n1, _) = normalize_to_unit_cube(&m).unwrap();
        let (n2, tf2) = normalize_to_unit_cube(&n1).unwrap();
        assert_relative_eq!(tf2.scale, 1.0, epsilon = 1e-9);
        assert_relative_eq!(tf2.translation.norm(), 0.0, epsilon = 1e-9);
        for (a, b) in n1.vertices().iter().zip(n2.vertices()) {
            assert_relative_eq!(a, b, epsilon = 1e-9);
        }
    }

    #[test]
    fn elongated_box_normalizes_longest_side() {
        let m = box_mesh(Point3::new(0.0, 0.0, 0.0), Point3::new(4.0, 1.0, 1.0));
        let (n, _) = normalize_to_unit_cube(&m).unwrap();
        let s = n.aabb().unwrap().size();
        assert_relative_eq!(s.x, 1.0, epsilon = 1e-9);
        assert_relative_eq!(s.y, 0.25, epsilon = 1e-9);
        assert_relative_eq!(s.z, 0.25, epsilon = 1e-9);
    }

    #[test]
    fn transform_roundtrip() {
        let tf = ScaleTranslate {
            scale: 2.0,
            translation: Vector3::new(1.0, -2.0, 0.5),
        };
        let p = Point3::new(0.3, 0.7, -1.1);
        let q = tf.inverse().apply(&tf.apply(&p));
        assert_relative_eq!(p, q, epsilon = 1e-12);
        let comp = tf.then(&tf.inverse());
        assert_relative_eq!(comp.scale, 1.0);
        assert_relative_eq!(comp.translation.norm(), 0.0, epsilon = 1e-12);
    }
}
