//! Watertight tessellations of the primitive solids, plus a marching-cubes
//! ground-truth mesh for composites (whose union boundary has no direct
//! parametric form).

use std::collections::HashMap;

use nalgebra::{Point3, Vector3};

use crate::error::{Error, Result};
use crate::extract::{marching_cubes, DenseGrid};
use crate::geometry::TriMesh;
use crate::scalar::Real;

use super::spec::{occupancy_oracle, Pose, ShapeSpec};

/// Tessellation level used when a caller does not pick one. Level 4 keeps
/// the chordal error of curved primitives around 1e-4 of the radius.
pub const DEFAULT_TESSELLATION: u32 = 4;

/// Tessellate a primitive at the given refinement level.
///
/// Level 0 is the coarsest closed mesh of each kind; every level doubles
/// angular resolution (spheres subdivide, revolution surfaces double their
/// ring counts). Boxes are exact at any level.
pub fn make_primitive<T: Real>(spec: &ShapeSpec<T>, level: u32) -> Result<TriMesh<T>> {
    spec.validate()?;
    match spec {
        ShapeSpec::Sphere { radius } => icosphere(*radius, level),
        ShapeSpec::Box { extents } => box_mesh(extents),
        ShapeSpec::Torus {
            major_radius,
            minor_radius,
        } => torus_mesh(*major_radius, *minor_radius, level),
        ShapeSpec::Cylinder { radius, height } => cylinder_mesh(*radius, *height, level),
        ShapeSpec::Composite { .. } => Err(Error::InvalidSpec(
            "composites have no direct tessellation; use composite_ground_truth_mesh".into(),
        )),
    }
}

/// All boundary surfaces of a shape as one mesh: each part tessellated and
/// posed, vertex blocks concatenated.
///
/// For overlapping composites this is the union of *surfaces*, not the
/// boundary of the union solid — faces buried inside other parts are still
/// present. It is the right object for area-weighted surface sampling with
/// interior rejection, and deliberately unsuitable for parity ray tests.
pub fn surface_mesh<T: Real>(spec: &ShapeSpec<T>, level: u32) -> Result<TriMesh<T>> {
    let parts = spec.posed_parts();
    let mut vertices: Vec<Point3<T>> = Vec::new();
    let mut triangles: Vec<[u32; 3]> = Vec::new();
    for part in &parts {
        let mesh = make_primitive(&part.primitive, level)?;
        let base = vertices.len() as u32;
        vertices.extend(mesh.vertices().iter().map(|p| part.pose.apply(p)));
        triangles.extend(
            mesh.triangles()
                .iter()
                .map(|t| [t[0] + base, t[1] + base, t[2] + base]),
        );
    }
    TriMesh::new(vertices, triangles)
}

/// Tessellated meshes of each part in world pose, for per-part ray tests.
pub fn part_meshes<T: Real>(spec: &ShapeSpec<T>, level: u32) -> Result<Vec<TriMesh<T>>> {
    spec.posed_parts()
        .iter()
        .map(|part| {
            let mesh = make_primitive(&part.primitive, level)?;
            Ok(pose_mesh(&mesh, &part.pose))
        })
        .collect()
}

fn pose_mesh<T: Real>(mesh: &TriMesh<T>, pose: &Pose<T>) -> TriMesh<T> {
    TriMesh::new(
        mesh.vertices().iter().map(|p| pose.apply(p)).collect(),
        mesh.triangles().to_vec(),
    )
    .expect("rigid motion preserves mesh validity")
}

/// Single watertight ground-truth mesh for any shape, built by marching
/// cubes over the analytic occupancy at `grid_resolution` cells per axis.
/// Surface error is bounded by one cell diagonal.
pub fn composite_ground_truth_mesh<T: Real>(
    spec: &ShapeSpec<T>,
    grid_resolution: usize,
) -> Result<TriMesh<T>> {
    spec.validate()?;
    if grid_resolution < 32 {
        return Err(Error::InvalidSpec(format!(
            "ground-truth grid needs >= 32 cells per axis, got {grid_resolution}"
        )));
    }
    // Pad so the surface stays strictly inside the grid; marching cubes
    // would otherwise clip the mesh open at the domain boundary.
    let bbox = spec.bbox();
    let pad = bbox.longest_side() * T::of(2.0) / T::of_usize(grid_resolution);
    let bbox = bbox.padded(pad);
    let half = T::of(0.5);
    let grid = DenseGrid::from_field(
        bbox,
        [grid_resolution, grid_resolution, grid_resolution],
        |q: &Point3<T>| {
            if occupancy_oracle(spec, q) {
                T::one()
            } else {
                T::zero()
            }
        },
    )?;
    match marching_cubes(&grid, half) {
        Ok(mesh) => Ok(mesh),
        Err(Error::EmptyField(_)) => Err(Error::EmptyShape(format!(
            "no grid vertex falls inside the shape at resolution {grid_resolution}"
        ))),
        Err(e) => Err(e),
    }
}

/// Icosphere: subdivided icosahedron with every vertex projected back to
/// the sphere. Level 0 = 20 faces; each level quadruples the face count.
fn icosphere<T: Real>(radius: T, level: u32) -> Result<TriMesh<T>> {
    let phi = (T::one() + T::of(5.0).sqrt()) * T::of(0.5);
    let one = T::one();
    let zero = T::zero();
    let mut vertices: Vec<Point3<T>> = vec![
        Point3::new(-one, phi, zero),
        Point3::new(one, phi, zero),
        Point3::new(-one, -phi, zero),
        Point3::new(one, -phi, zero),
        Point3::new(zero, -one, phi),
        Point3::new(zero, one, phi),
        Point3::new(zero, -one, -phi),
        Point3::new(zero, one, -phi),
        Point3::new(phi, zero, -one),
        Point3::new(phi, zero, one),
        Point3::new(-phi, zero, -one),
        Point3::new(-phi, zero, one),
    ];
    let mut faces: Vec<[u32; 3]> = vec![
        [0, 11, 5],
        [0, 5, 1],
        [0, 1, 7],
        [0, 7, 10],
        [0, 10, 11],
        [1, 5, 9],
        [5, 11, 4],
        [11, 10, 2],
        [10, 7, 6],
        [7, 1, 8],
        [3, 9, 4],
        [3, 4, 2],
        [3, 2, 6],
        [3, 6, 8],
        [3, 8, 9],
        [4, 9, 5],
        [2, 4, 11],
        [6, 2, 10],
        [8, 6, 7],
        [9, 8, 1],
    ];
    for v in &mut vertices {
        *v = Point3::from(v.coords.normalize() * radius);
    }

    for _ in 0..level {
        let mut midpoint: HashMap<(u32, u32), u32> = HashMap::new();
        let mut next_faces = Vec::with_capacity(faces.len() * 4);
        for f in &faces {
            let mut mid = [0u32; 3];
            for e in 0..3 {
                let (a, b) = (f[e], f[(e + 1) % 3]);
                let key = (a.min(b), a.max(b));
                mid[e] = *midpoint.entry(key).or_insert_with(|| {
                    let m = (vertices[a as usize].coords + vertices[b as usize].coords)
                        * T::of(0.5);
                    vertices.push(Point3::from(m.normalize() * radius));
                    (vertices.len() - 1) as u32
                });
            }
            next_faces.push([f[0], mid[0], mid[2]]);
            next_faces.push([f[1], mid[1], mid[0]]);
            next_faces.push([f[2], mid[2], mid[1]]);
            next_faces.push([mid[0], mid[1], mid[2]]);
        }
        faces = next_faces;
    }
    TriMesh::new(vertices, faces)
}

/// Axis-aligned box: 8 vertices, 12 outward-wound faces.
fn box_mesh<T: Real>(extents: &Vector3<T>) -> Result<TriMesh<T>> {
    let h = extents * T::of(0.5);
    let (x, y, z) = (h.x, h.y, h.z);
    let vertices = vec![
        Point3::new(-x, -y, -z),
        Point3::new(x, -y, -z),
        Point3::new(x, y, -z),
        Point3::new(-x, y, -z),
        Point3::new(-x, -y, z),
        Point3::new(x, -y, z),
        Point3::new(x, y, z),
        Point3::new(-x, y, z),
    ];
    let faces = vec![
        [0, 2, 1],
        [0, 3, 2],
        [4, 5, 6],
        [4, 6, 7],
        [0, 1, 5],
        [0, 5, 4],
        [2, 3, 7],
        [2, 7, 6],
        [1, 2, 6],
        [1, 6, 5],
        [0, 4, 7],
        [0, 7, 3],
    ];
    TriMesh::new(vertices, faces)
}

/// Torus around z as an nu x nv quad grid (major x minor rings), wrapped
/// in both directions. Level 0 = 8 x 4 rings.
fn torus_mesh<T: Real>(major: T, minor: T, level: u32) -> Result<TriMesh<T>> {
    let nu = 8usize << level;
    let nv = 4usize << level;
    let tau = T::two_pi();
    let mut vertices = Vec::with_capacity(nu * nv);
    for i in 0..nu {
        let u = tau * T::of_usize(i) / T::of_usize(nu);
        for j in 0..nv {
            let v = tau * T::of_usize(j) / T::of_usize(nv);
            let ring = major + minor * v.cos();
            vertices.push(Point3::new(ring * u.cos(), ring * u.sin(), minor * v.sin()));
        }
    }
    let at = |i: usize, j: usize| ((i % nu) * nv + (j % nv)) as u32;
    let mut faces = Vec::with_capacity(nu * nv * 2);
    for i in 0..nu {
        for j in 0..nv {
            let (a, b, c, d) = (at(i, j), at(i + 1, j), at(i + 1, j + 1), at(i, j + 1));
            faces.push([a, b, c]);
            faces.push([a, c, d]);
        }
    }
    TriMesh::new(vertices, faces)
}

/// Cylinder along z: side quads between two rim rings, caps as triangle
/// fans around center vertices. Level 0 = 8 segments.
fn cylinder_mesh<T: Real>(radius: T, height: T, level: u32) -> Result<TriMesh<T>> {
    let n = 8usize << level;
    let tau = T::two_pi();
    let hz = height * T::of(0.5);
    let mut vertices = Vec::with_capacity(2 * n + 2);
    for ring_z in [-hz, hz] {
        for i in 0..n {
            let u = tau * T::of_usize(i) / T::of_usize(n);
            vertices.push(Point3::new(radius * u.cos(), radius * u.sin(), ring_z));
        }
    }
    let bottom_center = vertices.len() as u32;
    vertices.push(Point3::new(T::zero(), T::zero(), -hz));
    let top_center = vertices.len() as u32;
    vertices.push(Point3::new(T::zero(), T::zero(), hz));

    let bot = |i: usize| (i % n) as u32;
    let top = |i: usize| (n + i % n) as u32;
    let mut faces = Vec::with_capacity(4 * n);
    for i in 0..n {
        faces.push([bot(i), bot(i + 1), top(i + 1)]);
        faces.push([bot(i), top(i + 1), top(i)]);
        faces.push([bottom_center, bot(i + 1), bot(i)]);
        faces.push([top_center, top(i), top(i + 1)]);
    }
    TriMesh::new(vertices, faces)
}

#[cfg(test)]
mod tests {
    use approx::assert_relative_eq;
    use nalgebra::Vector3;

    use super::*;
    use crate::geometry::{point_in_mesh, sample_surface, Bvh, MeshIndex};
    use crate::seed::{stream_rng, Stream};
    use crate::shapegen::spec::PosedPart;

    type Spec = ShapeSpec<f64>;

    #[test]
    fn icosphere_is_watertight_genus_zero_on_sphere() {
        let mesh = make_primitive(&Spec::Sphere { radius: 0.4 }, 3).unwrap();
        assert!(mesh.is_watertight());
        assert_eq!(mesh.euler_characteristic(), 2);
        assert_eq!(mesh.triangle_count(), 20 * 4usize.pow(3));
        for v in mesh.vertices() {
            assert_relative_eq!(v.coords.norm(), 0.4, epsilon = 1e-9);
        }
        assert!(mesh.signed_volume() > 0.0, "outward winding");
    }

    #[test]
    fn box_is_twelve_watertight_triangles() {
        let mesh = make_primitive(
            &Spec::Box {
                extents: Vector3::new(0.6, 0.4, 0.2),
            },
            0,
        )
        .unwrap();
        assert!(mesh.is_watertight());
        assert_eq!(mesh.triangle_count(), 12);
        assert_relative_eq!(mesh.signed_volume(), 0.6 * 0.4 * 0.2, epsilon = 1e-12);
    }

    #[test]
    fn torus_is_watertight_genus_one() {
        let mesh = make_primitive(
            &Spec::Torus {
                major_radius: 0.3,
                minor_radius: 0.1,
            },
            3,
        )
        .unwrap();
        assert!(mesh.is_watertight());
        assert_eq!(mesh.euler_characteristic(), 0);
        // Enclosed volume approaches 2 pi^2 R r^2 from below.
        let exact = 2.0 * std::f64::consts::PI.powi(2) * 0.3 * 0.1 * 0.1;
        let vol = mesh.signed_volume();
        assert!(vol > 0.0 && vol < exact && vol > 0.95 * exact, "volume {vol}");
    }

    #[test]
    fn cylinder_is_watertight_genus_zero() {
        let mesh = make_primitive(
            &Spec::Cylinder {
                radius: 0.25,
                height: 0.6,
            },
            4,
        )
        .unwrap();
        assert!(mesh.is_watertight());
        assert_eq!(mesh.euler_characteristic(), 2);
        let exact = std::f64::consts::PI * 0.25 * 0.25 * 0.6;
        assert_relative_eq!(mesh.signed_volume(), exact, max_relative = 0.01);
    }

    #[test]
    fn make_primitive_rejects_composites() {
        let c = Spec::Composite {
            parts: vec![
                PosedPart {
                    primitive: Spec::Sphere { radius: 0.2 },
                    pose: Pose::identity(),
                },
                PosedPart {
                    primitive: Spec::Sphere { radius: 0.2 },
                    pose: Pose::new(Vector3::zeros(), Vector3::new(0.3, 0.0, 0.0)),
                },
            ],
        };
        assert!(make_primitive(&c, 2).is_err());
    }

    #[test]
    fn oracle_agrees_with_mesh_ray_test_on_composite() {
        let spec = Spec::Composite {
            parts: vec![
                PosedPart {
                    primitive: Spec::Sphere { radius: 0.25 },
                    pose: Pose::new(Vector3::zeros(), Vector3::new(-0.15, 0.0, 0.0)),
                },
                PosedPart {
                    primitive: Spec::Box {
                        extents: Vector3::new(0.3, 0.5, 0.2),
                    },
                    pose: Pose::new(
                        Vector3::new(0.0, 0.0, 0.4),
                        Vector3::new(0.2, 0.0, 0.0),
                    ),
                },
            ],
        };
        let meshes = part_meshes(&spec, 6).unwrap();
        let indexes: Vec<MeshIndex<f64>> = meshes.iter().map(MeshIndex::new).collect();

        // The tessellation gap band: icosphere level 6 chords sit within
        // ~2e-6 of the true sphere, boxes are exact.
        let band = 2e-6;
        let mut rng = stream_rng(41, Stream::MetricSamples, 0);
        let bbox = spec.bbox().padded(0.1);
        let mut checked = 0;
        for _ in 0..1000 {
            let q = bbox.sample_point(&mut rng);
            let analytic = spec.contains(&q);
            let via_mesh = indexes.iter().try_fold(false, |acc, idx| {
                idx.contains(&q).map(|inside| acc || inside)
            });
            let near_surface = indexes.iter().any(|idx| idx.nearest(&q).distance <= band);
            if near_surface {
                continue; // inside the tessellation error band
            }
            checked += 1;
            assert_eq!(analytic, via_mesh.unwrap(), "disagreement at {q}");
        }
        assert!(checked >= 990, "nearly all queries are off-band ({checked})");
    }

    #[test]
    fn ground_truth_sphere_stays_within_two_cells_of_analytic() {
        let spec = Spec::Sphere { radius: 0.4 };
        let mesh = composite_ground_truth_mesh(&spec, 128).unwrap();
        assert!(mesh.is_watertight());
        // Chamfer-style check against the analytic sphere: every vertex
        // near radius 0.4, both directions bounded by 2 cells.
        let cell = mesh.aabb().unwrap().longest_side() / 128.0;
        for v in mesh.vertices() {
            assert!(
                (v.coords.norm() - 0.4).abs() < 2.0 * cell,
                "vertex {} off-sphere",
                v
            );
        }
        // And the reverse direction: analytic surface points near the mesh.
        let bvh = Bvh::build(&mesh);
        let mut rng = stream_rng(42, Stream::MetricSamples, 1);
        let reference = make_primitive(&spec, 4).unwrap();
        let samples = sample_surface(&reference, 500, &mut rng).unwrap();
        for p in samples.points() {
            let (_, _, d2) = bvh.nearest(p);
            assert!(d2.sqrt() < 2.0 * cell, "analytic point {p} far from mesh");
        }
    }

    #[test]
    fn overlapping_spheres_fuse_into_one_component() {
        let spec = Spec::Composite {
            parts: vec![
                PosedPart {
                    primitive: Spec::Sphere { radius: 0.22 },
                    pose: Pose::new(Vector3::zeros(), Vector3::new(-0.1, 0.0, 0.0)),
                },
                PosedPart {
                    primitive: Spec::Sphere { radius: 0.22 },
                    pose: Pose::new(Vector3::zeros(), Vector3::new(0.1, 0.0, 0.0)),
                },
            ],
        };
        let mesh = composite_ground_truth_mesh(&spec, 64).unwrap();
        assert!(mesh.is_watertight());
        assert_eq!(connected_components(&mesh), 1);
        // The overlap lens is inside the union; a parity ray test on the
        // raw two-sphere surface mesh would wrongly call it outside.
        assert!(point_in_mesh(&mesh, &nalgebra::Point3::new(0.0, 0.0, 0.0)).unwrap());
    }

    #[test]
    fn vanishing_shape_reports_empty() {
        let spec = Spec::Composite {
            parts: vec![
                PosedPart {
                    primitive: Spec::Sphere { radius: 1e-4 },
                    pose: Pose::new(Vector3::zeros(), Vector3::new(-0.3, 0.0, 0.0)),
                },
                PosedPart {
                    primitive: Spec::Sphere { radius: 1e-4 },
                    pose: Pose::new(Vector3::zeros(), Vector3::new(0.3, 0.0, 0.0)),
                },
            ],
        };
        match composite_ground_truth_mesh(&spec, 32) {
            Err(Error::EmptyShape(_)) => {}
            other => panic!("expected EmptyShape, got {other:?}"),
        }
    }

    /// Count connected components of the face graph via union-find over
    /// shared vertices.
    fn connected_components(mesh: &TriMesh<f64>) -> usize {
        let mut parent: Vec<usize> = (0..mesh.vertex_count()).collect();
        fn find(parent: &mut Vec<usize>, mut a: usize) -> usize {
            while parent[a] != a {
                parent[a] = parent[parent[a]];
                a = parent[a];
            }
            a
        }
        for t in mesh.triangles() {
            let r = find(&mut parent, t[0] as usize);
            for &v in &t[1..] {
                let s = find(&mut parent, v as usize);
                parent[s] = r;
            }
        }
        let mut roots: Vec<usize> = (0..mesh.vertex_count())
            .map(|v| find(&mut parent, v))
            .collect();
        roots.sort_unstable();
        roots.dedup();
        roots.len()
    }
}
