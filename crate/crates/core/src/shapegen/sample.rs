//! Training-sample generation: noisy input clouds and labeled query points.

use nalgebra::{Point3, Vector3};
use rand::Rng as _;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{PointSet, SurfaceSampler, TriMesh};
use crate::scalar::Real;
use crate::seed::Rng;

use super::spec::{occupancy_oracle, PosedPart, ShapeSpec};
use super::tessellate::{make_primitive, DEFAULT_TESSELLATION};

/// How to turn one shape into one training sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamplingConfig {
    /// Surface points drawn before subsetting the input cloud.
    pub pool_size: usize,
    /// Input cloud size (points handed to the network).
    pub input_size: usize,
    /// Isotropic noise applied to each input point; zero disables noise.
    pub noise_sd: f64,
    /// Query points offset tightly around the surface.
    pub near_queries: usize,
    pub near_sd: f64,
    /// Query points offset loosely, probing the volume.
    pub far_queries: usize,
    pub far_sd: f64,
    /// Base seed recorded with the corpus; per-shape generators derive
    /// from it.
    pub seed: u64,
}

impl Default for SamplingConfig {
    fn default() -> Self {
        Self {
            pool_size: 2048,
            input_size: 300,
            noise_sd: 0.05,
            near_queries: 6144,
            near_sd: 0.02,
            far_queries: 2048,
            far_sd: 0.1,
            seed: 0,
        }
    }
}

impl SamplingConfig {
    pub fn validate(&self) -> Result<()> {
        if self.pool_size == 0
            || self.input_size == 0
            || self.near_queries == 0
            || self.far_queries == 0
        {
            return Err(Error::InvalidSpec("sampling counts must be >= 1".into()));
        }
        if self.input_size > self.pool_size {
            return Err(Error::InvalidSpec(format!(
                "input_size {} exceeds pool_size {}",
                self.input_size, self.pool_size
            )));
        }
        if self.noise_sd < 0.0 || self.near_sd <= 0.0 || self.far_sd <= 0.0 {
            return Err(Error::InvalidSpec(
                "noise_sd must be >= 0 and query sds > 0".into(),
            ));
        }
        Ok(())
    }
}

/// One supervised example: an observed cloud and query points with
/// ground-truth occupancy labels. Queries are ordered near block first,
/// then far block.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingSample<T: Real> {
    pub cloud: PointSet<T>,
    pub queries: Vec<Point3<T>>,
    pub labels: Vec<bool>,
    pub shape_id: String,
}

/// Generate a training sample for a shape that fits in the unit cube.
///
/// Draw order from `rng` is fixed (pool, input subset, input noise, near
/// queries, far queries), so a given (spec, cfg, seed) reproduces the
/// sample exactly.
pub fn make_training_sample<T: Real>(
    spec: &ShapeSpec<T>,
    cfg: &SamplingConfig,
    rng: &mut Rng,
) -> Result<TrainingSample<T>> {
    spec.validate()?;
    cfg.validate()?;
    let bbox = spec.bbox();
    let slack = T::of(0.5 + 1e-6);
    if (0..3).any(|i| bbox.min[i] < -slack || bbox.max[i] > slack) {
        return Err(Error::InvalidSpec(
            "shape must be normalized to fit inside the unit cube".into(),
        ));
    }

    let sampler = UnionSurfaceSampler::new(spec, DEFAULT_TESSELLATION)?;
    let pool = sampler.sample_many(cfg.pool_size, rng)?;

    let chosen = rand::seq::index::sample(rng, cfg.pool_size, cfg.input_size);
    let mut cloud_points = Vec::with_capacity(cfg.input_size);
    for idx in chosen.iter() {
        let mut p = pool[idx];
        if cfg.noise_sd > 0.0 {
            p += gaussian_offset(T::of(cfg.noise_sd), rng);
        }
        cloud_points.push(p);
    }

    let mut queries = Vec::with_capacity(cfg.near_queries + cfg.far_queries);
    for (count, sd) in [(cfg.near_queries, cfg.near_sd), (cfg.far_queries, cfg.far_sd)] {
        let base = sampler.sample_many(count, rng)?;
        for p in base {
            queries.push(p + gaussian_offset(T::of(sd), rng));
        }
    }
    let labels = queries.iter().map(|q| occupancy_oracle(spec, q)).collect();

    Ok(TrainingSample {
        cloud: PointSet::new(cloud_points)?,
        queries,
        labels,
        shape_id: String::new(),
    })
}

fn gaussian_offset<T: Real>(sd: T, rng: &mut Rng) -> Vector3<T> {
    let mut draw = || T::of(rng.sample::<f64, _>(StandardNormal)) * sd;
    Vector3::new(draw(), draw(), draw())
}

/// Area-weighted sampler over the boundary of a union of posed primitives.
///
/// Parts are tessellated separately; each draw picks a part by surface
/// area, draws a point on it, and rejects the point if it lies strictly
/// inside any other part — leaving the uniform distribution over the
/// exposed union boundary.
pub struct UnionSurfaceSampler<T: Real> {
    parts: Vec<PosedPart<T>>,
    meshes: Vec<TriMesh<T>>,
    cumulative_area: Vec<f64>,
}

impl<T: Real> UnionSurfaceSampler<T> {
    pub fn new(spec: &ShapeSpec<T>, tessellation: u32) -> Result<Self> {
        let parts = spec.posed_parts();
        let meshes: Vec<TriMesh<T>> = parts
            .iter()
            .map(|p| make_primitive(&p.primitive, tessellation))
            .collect::<Result<_>>()?;
        let mut cumulative_area = Vec::with_capacity(meshes.len());
        let mut acc = 0.0f64;
        for m in &meshes {
            acc += m.total_area().as_f64();
            cumulative_area.push(acc);
        }
        if acc <= 0.0 {
            return Err(Error::DegenerateGeometry(
                "shape has no surface area to sample".into(),
            ));
        }
        Ok(Self {
            parts,
            meshes,
            cumulative_area,
        })
    }

    pub fn sample_many(&self, n: usize, rng: &mut Rng) -> Result<Vec<Point3<T>>> {
        let samplers: Vec<SurfaceSampler<'_, T>> = self
            .meshes
            .iter()
            .map(SurfaceSampler::new)
            .collect::<Result<_>>()?;
        let total = *self.cumulative_area.last().expect("nonempty");
        let mut out = Vec::with_capacity(n);
        // A part fully swallowed by another contributes area but never
        // accepts; cap the rejection loop so such corpora fail loudly
        // rather than spin.
        let max_draws = 64 * n + 1024;
        let mut draws = 0;
        while out.len() < n {
            draws += 1;
            if draws > max_draws {
                return Err(Error::DegenerateGeometry(
                    "union surface rejection sampling failed to converge".into(),
                ));
            }
            let u = rng.random::<f64>() * total;
            let pi = self.cumulative_area.partition_point(|&a| a < u);
            let pi = pi.min(self.parts.len() - 1);
            let (local, _, _) = samplers[pi].sample(rng);
            let world = self.parts[pi].pose.apply(&local);
            let buried = self.parts.iter().enumerate().any(|(qi, part)| {
                qi != pi && part.primitive.contains_interior(&part.pose.invert(&world))
            });
            if !buried {
                out.push(world);
            }
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::MeshIndex;
    use crate::seed::{stream_rng, Stream};
    use crate::shapegen::spec::Pose;
    use crate::shapegen::tessellate::part_meshes;

    type Spec = ShapeSpec<f64>;

    fn sphere04() -> Spec {
        Spec::Sphere { radius: 0.4 }
    }

    #[test]
    fn default_config_produces_pinned_counts() {
        let cfg = SamplingConfig::default();
        let mut rng = stream_rng(7, Stream::SurfaceNoise, 0);
        let s = make_training_sample(&sphere04(), &cfg, &mut rng).unwrap();
        assert_eq!(s.cloud.len(), 300);
        assert_eq!(s.queries.len(), 8192);
        assert_eq!(s.labels.len(), 8192);
    }

    #[test]
    fn zero_noise_leaves_points_on_surface() {
        let cfg = SamplingConfig {
            noise_sd: 0.0,
            ..SamplingConfig::default()
        };
        let mut rng = stream_rng(7, Stream::SurfaceNoise, 1);
        let s = make_training_sample(&sphere04(), &cfg, &mut rng).unwrap();
        // Points lie on the tessellated sphere, whose chords dip at most
        // ~4e-4 below radius 0.4 at the default tessellation level.
        for p in s.cloud.points() {
            let d = p.coords.norm();
            assert!(d <= 0.4 + 1e-12 && d > 0.4 - 5e-4, "distance {d}");
        }
    }

    #[test]
    fn near_queries_balance_on_a_sphere() {
        let cfg = SamplingConfig {
            near_sd: 0.005,
            ..SamplingConfig::default()
        };
        let mut rng = stream_rng(7, Stream::NearQueries, 2);
        let s = make_training_sample(&sphere04(), &cfg, &mut rng).unwrap();
        let near_inside = s.labels[..cfg.near_queries]
            .iter()
            .filter(|&&l| l)
            .count();
        let frac = near_inside as f64 / cfg.near_queries as f64;
        assert!((frac - 0.5).abs() < 0.02, "inside fraction {frac}");
    }

    #[test]
    fn labels_match_mesh_ray_oracle() {
        let spec = Spec::Composite {
            parts: vec![
                PosedPart {
                    primitive: Spec::Sphere { radius: 0.24 },
                    pose: Pose::new(Vector3::zeros(), Vector3::new(-0.12, 0.0, 0.0)),
                },
                PosedPart {
                    primitive: Spec::Box {
                        extents: Vector3::new(0.4, 0.3, 0.25),
                    },
                    pose: Pose::new(Vector3::new(0.0, 0.3, 0.0), Vector3::new(0.15, 0.05, 0.0)),
                },
            ],
        };
        let cfg = SamplingConfig::default();
        let mut rng = stream_rng(11, Stream::NearQueries, 3);
        let s = make_training_sample(&spec, &cfg, &mut rng).unwrap();

        let meshes = part_meshes(&spec, 6).unwrap();
        let indexes: Vec<MeshIndex<f64>> = meshes.iter().map(MeshIndex::new).collect();
        let band = 2e-5;
        let mut disagreements = 0;
        for (q, &label) in s.queries.iter().zip(&s.labels) {
            let ray_label = indexes
                .iter()
                .try_fold(false, |acc, idx| idx.contains(q).map(|i| acc || i))
                .unwrap();
            if ray_label != label {
                disagreements += 1;
                let dist = indexes
                    .iter()
                    .map(|idx| idx.nearest(q).distance)
                    .fold(f64::MAX, f64::min);
                assert!(dist <= band, "off-band disagreement at {q}, distance {dist}");
            }
        }
        let agreement = 1.0 - disagreements as f64 / s.queries.len() as f64;
        assert!(agreement >= 0.999, "agreement {agreement}");
    }

    #[test]
    fn buried_surface_points_are_rejected() {
        // A small sphere half-buried in a big one: no accepted sample may
        // lie strictly inside either part.
        let spec = Spec::Composite {
            parts: vec![
                PosedPart {
                    primitive: Spec::Sphere { radius: 0.3 },
                    pose: Pose::identity(),
                },
                PosedPart {
                    primitive: Spec::Sphere { radius: 0.15 },
                    pose: Pose::new(Vector3::zeros(), Vector3::new(0.3, 0.0, 0.0)),
                },
            ],
        };
        let sampler = UnionSurfaceSampler::new(&spec, 4).unwrap();
        let mut rng = stream_rng(13, Stream::SurfaceNoise, 4);
        let pts = sampler.sample_many(2000, &mut rng).unwrap();
        let tess_band = 5e-4;
        for p in &pts {
            let inside_big = p.coords.norm() < 0.3 - tess_band;
            let inside_small = (p - Point3::new(0.3, 0.0, 0.0)).norm() < 0.15 - tess_band;
            assert!(!inside_big && !inside_small, "buried sample {p}");
        }
        // Both lobes are represented.
        assert!(pts.iter().any(|p| p.x < 0.0));
        assert!(pts.iter().any(|p| p.x > 0.3));
    }

    #[test]
    fn same_seed_reproduces_sample_exactly() {
        let cfg = SamplingConfig::default();
        let spec = sphere04();
        let mut ra = stream_rng(99, Stream::SurfaceNoise, 5);
        let mut rb = stream_rng(99, Stream::SurfaceNoise, 5);
        let a = make_training_sample(&spec, &cfg, &mut ra).unwrap();
        let b = make_training_sample(&spec, &cfg, &mut rb).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn oversized_shape_is_rejected() {
        let cfg = SamplingConfig::default();
        let mut rng = stream_rng(1, Stream::SurfaceNoise, 6);
        let r = make_training_sample(&Spec::Sphere { radius: 0.7 }, &cfg, &mut rng);
        assert!(r.is_err());
    }
}
