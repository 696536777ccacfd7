//! Reconstruction quality measures: volumetric IoU, L1 Chamfer distance,
//! and normal consistency, all estimated by seeded Monte-Carlo sampling
//! with explicit standard errors.

use nalgebra::Point3;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::extract::ScalarField;
use crate::geometry::{sample_surface, Aabb3, MeshIndex, TriMesh};
use crate::scalar::Real;
use crate::seed::{stream_rng, Stream};

/// A Monte-Carlo estimate with its standard error and sample count.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub value: f64,
    pub stderr: f64,
    pub samples: usize,
}

/// The three measures for one reconstruction / ground-truth pair.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub iou: Estimate,
    pub chamfer_l1: Estimate,
    pub normal_consistency: Estimate,
    pub seed: u64,
}

/// Inside/outside queries over a bounded volume. Meshes and thresholded
/// occupancy fields both qualify, so IoU can compare any mix of the two.
pub trait VolumeQuery<T: Real> {
    fn bounding_box(&self) -> Aabb3<T>;
    fn contains_batch(&self, points: &[Point3<T>]) -> Result<Vec<bool>>;
}

/// A watertight mesh as a volume.
pub struct MeshVolume<'a, T: Real> {
    index: MeshIndex<'a, T>,
    bbox: Aabb3<T>,
}

impl<'a, T: Real> MeshVolume<'a, T> {
    pub fn new(mesh: &'a TriMesh<T>) -> Result<Self> {
        if !mesh.is_watertight() {
            return Err(Error::NotWatertight(
                "volumetric IoU needs closed operands".into(),
            ));
        }
        Ok(Self {
            index: MeshIndex::new(mesh),
            bbox: mesh.aabb()?,
        })
    }
}

impl<T: Real> VolumeQuery<T> for MeshVolume<'_, T> {
    fn bounding_box(&self) -> Aabb3<T> {
        self.bbox
    }

    fn contains_batch(&self, points: &[Point3<T>]) -> Result<Vec<bool>> {
        points.iter().map(|q| self.index.contains(q)).collect()
    }
}

/// A scalar field thresholded at an iso level, bounded by an explicit box
/// (fields have no intrinsic extent).
pub struct FieldVolume<'f, T: Real, F: ScalarField<T>> {
    field: &'f F,
    bbox: Aabb3<T>,
    threshold: T,
}

impl<'f, T: Real, F: ScalarField<T>> FieldVolume<'f, T, F> {
    pub fn new(field: &'f F, bbox: Aabb3<T>, threshold: T) -> Self {
        Self { field, bbox, threshold }
    }
}

impl<T: Real, F: ScalarField<T>> VolumeQuery<T> for FieldVolume<'_, T, F> {
    fn bounding_box(&self) -> Aabb3<T> {
        self.bbox
    }

    fn contains_batch(&self, points: &[Point3<T>]) -> Result<Vec<bool>> {
        Ok(self
            .field
            .eval_batch(points)
            .into_iter()
            .map(|v| v >= self.threshold)
            .collect())
    }
}

/// Volumetric intersection-over-union of two volumes, estimated from
/// uniform samples in their joint bounding box.
///
/// The estimate conditions on the union: among samples landing in either
/// volume, the fraction inside both is binomial, giving the reported
/// standard error. Identical operands score exactly 1, disjoint ones 0.
pub fn iou<T: Real>(
    a: &impl VolumeQuery<T>,
    b: &impl VolumeQuery<T>,
    n_samples: usize,
    seed: u64,
) -> Result<Estimate> {
    if n_samples < 10_000 {
        return Err(Error::InvalidSpec(format!(
            "IoU needs at least 10000 samples for a usable error bound, got {n_samples}"
        )));
    }
    let bbox = a.bounding_box().union(&b.bounding_box());
    let mut rng = stream_rng(seed, Stream::MetricSamples, 0);
    let points: Vec<Point3<T>> = (0..n_samples).map(|_| bbox.sample_point(&mut rng)).collect();

    let in_a = a.contains_batch(&points)?;
    let in_b = b.contains_batch(&points)?;
    let mut union = 0usize;
    let mut intersection = 0usize;
    for (&p, &q) in in_a.iter().zip(&in_b) {
        union += usize::from(p | q);
        intersection += usize::from(p & q);
    }
    if union == 0 {
        return Err(Error::EmptyShape(
            "no sample fell inside either volume".into(),
        ));
    }
    let ratio = intersection as f64 / union as f64;
    Ok(Estimate {
        value: ratio,
        stderr: (ratio * (1.0 - ratio) / union as f64).sqrt(),
        samples: n_samples,
    })
}

/// Distances from area-weighted samples on `from` to the surface of `to`:
/// per-sample values plus their mean.
fn directional_distances<T: Real>(
    from: &TriMesh<T>,
    to_index: &MeshIndex<T>,
    n_samples: usize,
    seed: u64,
    stream_index: u64,
) -> Result<Vec<f64>> {
    let mut rng = stream_rng(seed, Stream::MetricSamples, stream_index);
    let samples = sample_surface(from, n_samples, &mut rng)?;
    Ok(samples
        .points()
        .iter()
        .map(|x| to_index.nearest(x).distance.as_f64())
        .collect())
}

fn mean_and_stderr_sq(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0).max(1.0);
    (mean, var / n)
}

/// L1 Chamfer distance: the mean sample-to-surface distance in each
/// direction, summed. Standard error combines the two directional means
/// as independent terms.
pub fn chamfer_l1<T: Real>(
    a: &TriMesh<T>,
    b: &TriMesh<T>,
    n_samples: usize,
    seed: u64,
) -> Result<Estimate> {
    if n_samples == 0 {
        return Err(Error::InvalidSpec("chamfer needs at least one sample".into()));
    }
    let index_a = MeshIndex::new(a);
    let index_b = MeshIndex::new(b);
    let d_ab = directional_distances(a, &index_b, n_samples, seed, 1)?;
    let d_ba = directional_distances(b, &index_a, n_samples, seed, 2)?;
    let (mean_ab, se2_ab) = mean_and_stderr_sq(&d_ab);
    let (mean_ba, se2_ba) = mean_and_stderr_sq(&d_ba);
    Ok(Estimate {
        value: mean_ab + mean_ba,
        stderr: (se2_ab + se2_ba).sqrt(),
        samples: 2 * n_samples,
    })
}

/// |cosine| agreement between normals at samples on `from` and the normal
/// at the nearest point of `to`.
fn directional_normal_dots<T: Real>(
    from: &TriMesh<T>,
    to_index: &MeshIndex<T>,
    n_samples: usize,
    seed: u64,
    stream_index: u64,
) -> Result<Vec<f64>> {
    let mut rng = stream_rng(seed, Stream::MetricSamples, stream_index);
    let samples = sample_surface(from, n_samples, &mut rng)?;
    let normals = samples.normals().expect("surface samples carry normals");
    Ok(samples
        .points()
        .iter()
        .zip(normals)
        .map(|(x, n)| to_index.nearest(x).normal.dot(n).abs().as_f64())
        .collect())
}

/// Normal consistency: the two directional means of |n(x) . n(nearest)|,
/// averaged, so a mesh against itself scores exactly 1.
pub fn normal_consistency<T: Real>(
    a: &TriMesh<T>,
    b: &TriMesh<T>,
    n_samples: usize,
    seed: u64,
) -> Result<Estimate> {
    if n_samples == 0 {
        return Err(Error::InvalidSpec(
            "normal consistency needs at least one sample".into(),
        ));
    }
    let index_a = MeshIndex::new(a);
    let index_b = MeshIndex::new(b);
    let d_ab = directional_normal_dots(a, &index_b, n_samples, seed, 3)?;
    let d_ba = directional_normal_dots(b, &index_a, n_samples, seed, 4)?;
    let (mean_ab, se2_ab) = mean_and_stderr_sq(&d_ab);
    let (mean_ba, se2_ba) = mean_and_stderr_sq(&d_ba);
    Ok(Estimate {
        value: 0.5 * (mean_ab + mean_ba),
        stderr: 0.5 * (se2_ab + se2_ba).sqrt(),
        samples: 2 * n_samples,
    })
}

/// All three measures between a candidate mesh and a ground-truth mesh.
/// IoU requires both to be closed.
pub fn compare_meshes<T: Real>(
    candidate: &TriMesh<T>,
    truth: &TriMesh<T>,
    n_samples: usize,
    seed: u64,
) -> Result<MetricReport> {
    let vol_a = MeshVolume::new(candidate)?;
    let vol_b = MeshVolume::new(truth)?;
    Ok(MetricReport {
        iou: iou(&vol_a, &vol_b, n_samples, seed)?,
        chamfer_l1: chamfer_l1(candidate, truth, n_samples, seed)?,
        normal_consistency: normal_consistency(candidate, truth, n_samples, seed)?,
        seed,
    })
}
