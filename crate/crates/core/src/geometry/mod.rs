//! Mesh and point-cloud primitives: I/O, normalization, surface sampling,
//! ray casting, inside/outside queries, nearest-surface queries.

mod aabb;
mod bvh;
mod inside;
mod io;
mod mesh;
mod pointset;
mod sample;
pub mod tri;

pub use aabb::Aabb3;
pub use bvh::Bvh;
pub use inside::{point_in_mesh, MeshIndex, SurfacePoint};
pub use io::{load_mesh, load_xyz, save_mesh, save_xyz, MeshFormat};
pub use mesh::{normalize_to_unit_cube, ScaleTranslate, TriMesh};
pub use pointset::PointSet;
pub use sample::{sample_surface, SurfaceSampler};

/// Shared mesh fixtures for the geometry unit tests.
#[cfg(test)]
pub(crate) mod fixtures {
    use nalgebra::Point3;

    use super::TriMesh;

    /// Axis-aligned box mesh with outward winding: 8 vertices, 12 faces.
    pub fn box_mesh(min: Point3<f64>, max: Point3<f64>) -> TriMesh<f64> {
        let (x0, y0, z0) = (min.x, min.y, min.z);
        let (x1, y1, z1) = (max.x, max.y, max.z);
        let v = vec![
            Point3::new(x0, y0, z0), // 0
            Point3::new(x1, y0, z0), // 1
            Point3::new(x1, y1, z0), // 2
            Point3::new(x0, y1, z0), // 3
            Point3::new(x0, y0, z1), // 4
            Point3::new(x1, y0, z1), // 5
            Point3::new(x1, y1, z1), // 6
            Point3::new(x0, y1, z1), // 7
        ];
        let f = vec![
            [0, 2, 1],
            [0, 3, 2], // z = z0, normal -z
            [4, 5, 6],
            [4, 6, 7], // z = z1, normal +z
            [0, 1, 5],
            [0, 5, 4], // y = y0, normal -y
            [2, 3, 7],
            [2, 7, 6], // y = y1, normal +y
            [1, 2, 6],
            [1, 6, 5], // x = x1, normal +x
            [0, 4, 7],
            [0, 7, 3], // x = x0, normal -x
        ];
        TriMesh::new(v, f).unwrap()
    }

    /// Unit cube centered at the origin.
    pub fn unit_box() -> TriMesh<f64> {
        box_mesh(Point3::new(-0.5, -0.5, -0.5), Point3::new(0.5, 0.5, 0.5))
    }
}
