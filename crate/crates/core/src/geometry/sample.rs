//! Area-weighted surface sampling.

use nalgebra::{Point3, Vector3};
use rand::Rng as _;

use crate::error::{Error, Result};
use crate::scalar::Real;
use crate::seed::Rng;

use super::mesh::TriMesh;
use super::pointset::PointSet;

/// Cumulative-area table for drawing points uniformly over a mesh surface.
pub struct SurfaceSampler<'a, T: Real> {
    mesh: &'a TriMesh<T>,
    cumulative: Vec<T>,
    total: T,
}

impl<'a, T: Real> SurfaceSampler<'a, T> {
    pub fn new(mesh: &'a TriMesh<T>) -> Result<Self> {
        if mesh.is_empty() {
            return Err(Error::DegenerateGeometry("mesh has no triangles".into()));
        }
        let mut cumulative = Vec::with_capacity(mesh.triangle_count());
        let mut total = T::zero();
        for i in 0..mesh.triangle_count() {
            total += mesh.face_area(i);
            cumulative.push(total);
        }
        if !(total > T::zero()) {
            return Err(Error::DegenerateGeometry("mesh has zero area".into()));
        }
        Ok(Self {
            mesh,
            cumulative,
            total,
        })
    }

    /// One surface point with its face normal and face index.
    pub fn sample(&self, rng: &mut Rng) -> (Point3<T>, Vector3<T>, u32) {
        let u = T::of(rng.random::<f64>()) * self.total;
        let face = self.cumulative.partition_point(|&c| c <= u);
        let face = face.min(self.mesh.triangle_count() - 1);
        let [a, b, c] = self.mesh.triangle(face);

        // Uniform barycentric draw: fold the unit square onto the triangle.
        let mut r1 = T::of(rng.random::<f64>());
        let mut r2 = T::of(rng.random::<f64>());
        if r1 + r2 > T::one() {
            r1 = T::one() - r1;
            r2 = T::one() - r2;
        }
        let p = a + (b - a) * r1 + (c - a) * r2;
        (p, self.mesh.face_normal(face), face as u32)
    }
}

/// `n` area-weighted surface samples with face normals; deterministic
/// given the generator state.
pub fn sample_surface<T: Real>(mesh: &TriMesh<T>, n: usize, rng: &mut Rng) -> Result<PointSet<T>> {
    if n == 0 {
        return Err(Error::InvalidSpec("requested 0 surface samples".into()));
    }
    let sampler = SurfaceSampler::new(mesh)?;
    let mut points = Vec::with_capacity(n);
    let mut normals = Vec::with_capacity(n);
    for _ in 0..n {
        let (p, nrm, _) = sampler.sample(rng);
        points.push(p);
        normals.push(nrm);
    }
    PointSet::with_normals(points, normals)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::fixtures::unit_box;
    use crate::seed::{stream_rng, Stream};
    use nalgebra::Point3;

    #[test]
    fn cube_samples_lie_on_faces() {
        let m = unit_box();
        let mut rng = stream_rng(1, Stream::SurfaceNoise, 0);
        let ps = sample_surface(&m, 2048, &mut rng).unwrap();
        assert_eq!(ps.len(), 2048);
        for p in ps.points() {
            let maxc = p.coords.iter().map(|c| c.abs()).fold(0.0, f64::max);
            assert!((maxc - 0.5).abs() <= 1e-12, "point off the cube surface");
        }
    }

    #[test]
    fn same_seed_same_cloud() {
        let m = unit_box();
        let mut r1 = stream_rng(7, Stream::SurfaceNoise, 3);
        let mut r2 = stream_rng(7, Stream::SurfaceNoise, 3);
        let a = sample_surface(&m, 512, &mut r1).unwrap();
        let b = sample_surface(&m, 512, &mut r2).unwrap();
        assert_eq!(a.points(), b.points());
        assert_eq!(a.normals().unwrap(), b.normals().unwrap());
    }

    #[test]
    fn dominant_triangle_gets_area_share() {
        // One triangle holds 90% of the area: two triangles, areas 0.5 and
        // 4.5. Expect its sample share to be 90% ± 3% at n = 2048.
        let verts = vec![
            Point3::new(0.0, 0.0, 0.0),
            Point3::new(1.0, 0.0, 0.0),
            Point3::new(0.0, 1.0, 0.0),
            Point3::new(10.0, 0.0, 1.0),
            Point3::new(13.0, 0.0, 1.0),
            Point3::new(10.0, 3.0, 1.0),
        ];
        let m = TriMesh::new(verts, vec![[0, 1, 2], [3, 4, 5]]).unwrap();
        let sampler = SurfaceSampler::new(&m).unwrap();
        let mut rng = stream_rng(11, Stream::SurfaceNoise, 0);
        let n = 2048;
        let mut big = 0usize;
        for _ in 0..n {
            let (_, _, face) = sampler.sample(&mut rng);
            if face == 1 {
                big += 1;
            }
        }
        let share = big as f64 / n as f64;
        assert!((share - 0.9).abs() < 0.03, "share = {share}");
    }

    /// Chi-square goodness of fit of face-selection counts against area
    /// weights on the cube (12 equal faces → 11 degrees of freedom;
    /// critical value 24.725 at significance 0.01).
    #[test]
    fn face_frequency_matches_area_weights() {
        let m = unit_box();
        let sampler = SurfaceSampler::new(&m).unwrap();
        let mut rng = stream_rng(13, Stream::SurfaceNoise, 0);
        let n = 100_000usize;
        let mut counts = [0usize; 12];
        for _ in 0..n {
            let (_, _, face) = sampler.sample(&mut rng);
            counts[face as usize] += 1;
        }
        let expected = n as f64 / 12.0;
        let chi2: f64 = counts
            .iter()
            .map(|&c| {
                let d = c as f64 - expected;
                d * d / expected
            })
            .sum();
        assert!(chi2 < 24.725, "chi2 = {chi2}");
    }
}
