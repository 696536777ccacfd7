//! End-to-end reconstruction: trained network to triangle mesh.

use nalgebra::Point3;

use crate::error::{Error, Result};
use crate::geometry::{PointSet, TriMesh};
use crate::occnet::{evaluate_taped, softmax_rows, NetworkParams};
use crate::pcnn::ConvMode;
use crate::scalar::Real;

use super::grid::{evaluate_hierarchical, MultiResGrid, ScalarField};
use super::marching::marching_cubes;

/// Grid and iso-surface settings for [`reconstruct`].
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default)]
pub struct ReconstructOptions {
    /// Cell resolutions of the refinement hierarchy, each doubling the
    /// previous.
    pub levels: Vec<usize>,
    /// Occupancy threshold defining the surface.
    pub iso: f64,
    /// Margin added around the cloud's bounding box on every side.
    pub padding: f64,
    /// Refinement dilation radius in cells.
    pub dilation: usize,
    /// Grid corners per network call; bounds peak memory.
    pub batch_size: usize,
}

impl Default for ReconstructOptions {
    fn default() -> Self {
        Self {
            levels: vec![64, 128, 256],
            iso: 0.5,
            padding: 0.1,
            dilation: 1,
            batch_size: 4096,
        }
    }
}

impl ReconstructOptions {
    pub fn validate(&self) -> Result<()> {
        if self.levels.is_empty() {
            return Err(Error::InvalidSpec("need at least one grid level".into()));
        }
        if !(self.iso > 0.0 && self.iso < 1.0) {
            return Err(Error::InvalidSpec(format!(
                "iso level must lie strictly between 0 and 1, got {}",
                self.iso
            )));
        }
        if !(self.padding >= 0.0) {
            return Err(Error::InvalidSpec("padding must be non-negative".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::InvalidSpec("batch_size must be at least 1".into()));
        }
        Ok(())
    }
}

/// The trained network, bound to one input cloud, as a scalar occupancy
/// field (interior probability). Batches are chunked so arbitrarily large
/// corner sets evaluate in bounded memory.
pub struct OccupancyField<'p, T: Real> {
    params: &'p NetworkParams<T>,
    cloud: &'p [Point3<T>],
    batch_size: usize,
}

impl<'p, T: Real> OccupancyField<'p, T> {
    pub fn new(
        params: &'p NetworkParams<T>,
        cloud: &'p [Point3<T>],
        batch_size: usize,
    ) -> Result<Self> {
        if cloud.len() != params.config().input_size {
            return Err(Error::DimensionMismatch(format!(
                "cloud has {} points, network expects {}",
                cloud.len(),
                params.config().input_size
            )));
        }
        if batch_size == 0 {
            return Err(Error::InvalidSpec("batch_size must be at least 1".into()));
        }
        Ok(Self { params, cloud, batch_size })
    }
}

impl<T: Real> ScalarField<T> for OccupancyField<'_, T> {
    fn eval_batch(&self, points: &[Point3<T>]) -> Vec<T> {
        let mut out = Vec::with_capacity(points.len());
        for chunk in points.chunks(self.batch_size) {
            let eval = evaluate_taped(self.params, self.cloud, chunk, ConvMode::Truncated)
                .expect("field inputs validated at construction");
            let probs = softmax_rows(eval.tape.value(eval.logits));
            out.extend(probs.column(1).iter().copied());
        }
        out
    }
}

/// Evaluate the network's occupancy over the padded cloud bounding box,
/// refining toward the iso-surface.
pub fn reconstruct_grid<T: Real>(
    params: &NetworkParams<T>,
    cloud: &PointSet<T>,
    options: &ReconstructOptions,
) -> Result<MultiResGrid<T>> {
    options.validate()?;
    let field = OccupancyField::new(params, cloud.points(), options.batch_size)?;
    let bbox = cloud.aabb().padded(T::of(options.padding));
    evaluate_hierarchical(&field, &bbox, &options.levels, options.dilation, T::of(options.iso))
}

/// Full pipeline: hierarchical occupancy evaluation over the padded cloud
/// bounding box, then marching cubes at the iso level. Deterministic:
/// the same parameters, cloud, and options always give the same mesh.
pub fn reconstruct<T: Real>(
    params: &NetworkParams<T>,
    cloud: &PointSet<T>,
    options: &ReconstructOptions,
) -> Result<TriMesh<T>> {
    let grid = reconstruct_grid(params, cloud, options)?;
    marching_cubes(&grid.finest_dense(), T::of(options.iso))
}

#[cfg(test)]
mod tests {
    use rand::Rng as _;

    use crate::occnet::{forward, BlockConfig, NetworkConfig, QueryBatch};
    use crate::seed::{stream_rng, Stream};

    use super::*;

    fn tiny_params() -> NetworkParams<f64> {
        let config = NetworkConfig {
            input_size: 40,
            blocks: vec![
                BlockConfig { points: 16, depth: 6 },
                BlockConfig { points: 16, depth: 8 },
                BlockConfig { points: 40, depth: 4 },
            ],
            classifier_hidden: vec![12],
            width_constant: 0.5,
        };
        NetworkParams::init(config, 3).unwrap()
    }

    fn sphere_cloud(n: usize, radius: f64, seed: u64) -> PointSet<f64> {
        let mut rng = stream_rng(seed, Stream::SurfaceNoise, 0);
        let points = (0..n)
            .map(|_| {
                loop {
                    let v = nalgebra::Vector3::new(
                        rng.random::<f64>() * 2.0 - 1.0,
                        rng.random::<f64>() * 2.0 - 1.0,
                        rng.random::<f64>() * 2.0 - 1.0,
                    );
                    let norm = v.norm();
                    if norm > 1e-6 {
                        break Point3::from(v * (radius / norm));
                    }
                }
            })
            .collect();
        PointSet::new(points).unwrap()
    }

    #[test]
    fn occupancy_field_matches_forward() {
        let params = tiny_params();
        let cloud = sphere_cloud(40, 0.3, 5);
        let field = OccupancyField::new(&params, cloud.points(), 3).unwrap();

        let queries: Vec<Point3<f64>> = {
            let mut rng = stream_rng(9, Stream::UniformQueries, 0);
            (0..10)
                .map(|_| {
                    Point3::new(
                        rng.random::<f64>() - 0.5,
                        rng.random::<f64>() - 0.5,
                        rng.random::<f64>() - 0.5,
                    )
                })
                .collect()
        };
        // Chunked field evaluation must agree with the one-shot forward.
        let got = field.eval_batch(&queries);
        let reference = forward(
            &params,
            &cloud,
            &QueryBatch::unlabeled(queries.clone()).unwrap(),
        )
        .unwrap();
        for (l, &p) in got.iter().enumerate() {
            assert_eq!(p, reference[(l, 1)]);
        }
    }

    #[test]
    fn random_network_reconstruction_never_crashes() {
        let params = tiny_params();
        let cloud = sphere_cloud(40, 0.3, 7);
        let options = ReconstructOptions {
            levels: vec![8, 16],
            batch_size: 600,
            ..ReconstructOptions::default()
        };
        match reconstruct(&params, &cloud, &options) {
            Ok(mesh) => assert!(mesh.vertex_count() > 0),
            Err(Error::EmptyField(_)) => {}
            Err(other) => panic!("unexpected error: {other}"),
        }
    }

    #[test]
    fn reconstruction_is_deterministic() {
        let params = tiny_params();
        let cloud = sphere_cloud(40, 0.3, 11);
        let options = ReconstructOptions {
            levels: vec![8, 16],
            batch_size: 600,
            ..ReconstructOptions::default()
        };
        let a = reconstruct(&params, &cloud, &options);
        let b = reconstruct(&params, &cloud, &options);
        match (a, b) {
            (Ok(ma), Ok(mb)) => {
                assert_eq!(ma.vertices(), mb.vertices());
                assert_eq!(ma.triangles(), mb.triangles());
            }
            (Err(Error::EmptyField(_)), Err(Error::EmptyField(_))) => {}
            (a, b) => panic!("runs disagree: {a:?} vs {b:?}"),
        }
    }

    #[test]
    fn options_validation_rejects_nonsense() {
        let ok = ReconstructOptions::default();
        assert!(ok.validate().is_ok());
        assert!(ReconstructOptions { levels: vec![], ..ok.clone() }.validate().is_err());
        assert!(ReconstructOptions { iso: 0.0, ..ok.clone() }.validate().is_err());
        assert!(ReconstructOptions { iso: 1.0, ..ok.clone() }.validate().is_err());
        assert!(ReconstructOptions { padding: -0.1, ..ok.clone() }.validate().is_err());
        assert!(ReconstructOptions { batch_size: 0, ..ok }.validate().is_err());
    }

    #[test]
    fn mismatched_cloud_is_rejected() {
        let params = tiny_params();
        let cloud = sphere_cloud(30, 0.3, 3);
        let err = reconstruct(&params, &cloud, &ReconstructOptions::default()).unwrap_err();
        assert!(matches!(err, Error::DimensionMismatch(_)));
    }
}
