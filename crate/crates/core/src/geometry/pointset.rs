use nalgebra::{Point3, Vector3};

use crate::error::{Error, Result};
use crate::scalar::Real;

use super::aabb::Aabb3;
use super::mesh::ScaleTranslate;

/// Ordered point cloud with optional unit normals.
#[derive(Debug, Clone, PartialEq)]
pub struct PointSet<T: Real> {
    points: Vec<Point3<T>>,
    normals: Option<Vec<Vector3<T>>>,
}

impl<T: Real> PointSet<T> {
    pub fn new(points: Vec<Point3<T>>) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::DegenerateGeometry("empty point set".into()));
        }
        Ok(Self {
            points,
            normals: None,
        })
    }

    pub fn with_normals(points: Vec<Point3<T>>, normals: Vec<Vector3<T>>) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::DegenerateGeometry("empty point set".into()));
        }
        if normals.len() != points.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} normals for {} points",
                normals.len(),
                points.len()
            )));
        }
        let tol = T::of(1e-9);
        for (i, n) in normals.iter().enumerate() {
            if (n.norm() - T::one()).abs() > tol {
                return Err(Error::DegenerateGeometry(format!(
                    "normal {i} is not unit length"
                )));
            }
        }
        Ok(Self {
            points,
            normals: Some(normals),
        })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[Point3<T>] {
        &self.points
    }

    pub fn normals(&self) -> Option<&[Vector3<T>]> {
        self.normals.as_deref()
    }

    pub fn aabb(&self) -> Aabb3<T> {
        Aabb3::from_points(self.points.iter()).expect("point set is nonempty")
    }

    /// Drop the normals (e.g. after perturbing the positions).
    pub fn without_normals(mut self) -> Self {
        self.normals = None;
        self
    }

    /// Apply a similarity transform; normals are unchanged by uniform
    /// positive scaling.
    pub fn transformed(&self, tf: &ScaleTranslate<T>) -> Self {
        assert!(tf.scale > T::zero());
        Self {
            points: self.points.iter().map(|p| tf.apply(p)).collect(),
            normals: self.normals.clone(),
        }
    }

    /// Select rows by index (panics on out-of-range; callers validate).
    pub fn select(&self, indices: &[usize]) -> Result<Self> {
        let points = indices.iter().map(|&i| self.points[i]).collect();
        let normals = self
            .normals
            .as_ref()
            .map(|ns| indices.iter().map(|&i| ns[i]).collect());
        if indices.is_empty() {
            return Err(Error::DegenerateGeometry("empty selection".into()));
        }
        Ok(Self { points, normals })
    }
}
