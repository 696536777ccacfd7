//! Marching cubes over a dense scalar grid.

use std::collections::HashMap;

use nalgebra::{Point3, Vector3};

use crate::error::{Error, Result};
use crate::geometry::{Aabb3, TriMesh};
use crate::scalar::Real;

use super::tables::{CORNER_OFFSETS, EDGE_CORNERS, EDGE_TABLE, TRI_TABLE};

/// Interpolation parameter clamp: keeps iso-vertices strictly off the grid
/// corners so exact corner hits cannot produce coincident vertices.
const T_CLAMP: f64 = 1e-6;

/// Dense scalar samples on the corners of a `resolution[0] × resolution[1]
/// × resolution[2]` cell grid spanning `bbox`, x-fastest storage.
#[derive(Debug, Clone)]
pub struct DenseGrid<T: Real> {
    bbox: Aabb3<T>,
    resolution: [usize; 3],
    values: Vec<T>,
}

impl<T: Real> DenseGrid<T> {
    pub fn new(bbox: Aabb3<T>, resolution: [usize; 3], values: Vec<T>) -> Result<Self> {
        let want = (resolution[0] + 1) * (resolution[1] + 1) * (resolution[2] + 1);
        if resolution.iter().any(|&r| r == 0) {
            return Err(Error::InvalidSpec("grid resolution must be >= 1".into()));
        }
        if values.len() != want {
            return Err(Error::DimensionMismatch(format!(
                "grid stores {} corner values, resolution wants {want}",
                values.len()
            )));
        }
        Ok(Self {
            bbox,
            resolution,
            values,
        })
    }

    /// Evaluate `field` on every corner (x-fastest order).
    pub fn from_field<F: Fn(&Point3<T>) -> T>(
        bbox: Aabb3<T>,
        resolution: [usize; 3],
        field: F,
    ) -> Result<Self> {
        let dims = [resolution[0] + 1, resolution[1] + 1, resolution[2] + 1];
        let mut values = Vec::with_capacity(dims[0] * dims[1] * dims[2]);
        let mut grid = Self {
            bbox,
            resolution,
            values: Vec::new(),
        };
        for k in 0..dims[2] {
            for j in 0..dims[1] {
                for i in 0..dims[0] {
                    values.push(field(&grid.corner_position(i, j, k)));
                }
            }
        }
        grid.values = values;
        Self::new(grid.bbox, grid.resolution, grid.values)
    }

    pub fn bbox(&self) -> &Aabb3<T> {
        &self.bbox
    }

    /// Cells per axis.
    pub fn resolution(&self) -> [usize; 3] {
        self.resolution
    }

    /// Corners per axis.
    pub fn corner_dims(&self) -> [usize; 3] {
        [
            self.resolution[0] + 1,
            self.resolution[1] + 1,
            self.resolution[2] + 1,
        ]
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn cell_size(&self) -> Vector3<T> {
        let s = self.bbox.size();
        Vector3::new(
            s.x / T::of_usize(self.resolution[0]),
            s.y / T::of_usize(self.resolution[1]),
            s.z / T::of_usize(self.resolution[2]),
        )
    }

    #[inline]
    pub fn corner_index(&self, i: usize, j: usize, k: usize) -> usize {
        let d = self.corner_dims();
        (k * d[1] + j) * d[0] + i
    }

    #[inline]
    pub fn value(&self, i: usize, j: usize, k: usize) -> T {
        self.values[self.corner_index(i, j, k)]
    }

    pub fn corner_position(&self, i: usize, j: usize, k: usize) -> Point3<T> {
        let s = self.bbox.size();
        Point3::new(
            self.bbox.min.x + s.x * T::of_usize(i) / T::of_usize(self.resolution[0]),
            self.bbox.min.y + s.y * T::of_usize(j) / T::of_usize(self.resolution[1]),
            self.bbox.min.z + s.z * T::of_usize(k) / T::of_usize(self.resolution[2]),
        )
    }
}

/// Extract the iso-surface at level `iso`. Corners with `value >= iso`
/// count as interior. Vertices are interpolated onto cell edges and welded
/// by edge identity, so the result is crack-free and closed whenever the
/// surface stays off the grid boundary.
pub fn marching_cubes<T: Real>(grid: &DenseGrid<T>, iso: T) -> Result<TriMesh<T>> {
    let [rx, ry, rz] = grid.resolution();
    let mut vertices: Vec<Point3<T>> = Vec::new();
    let mut triangles: Vec<[u32; 3]> = Vec::new();
    // Grid edge -> welded vertex id. Key: (corner linear index, axis).
    let mut edge_vertices: HashMap<(usize, u8), u32> = HashMap::new();

    let clamp_lo = T::of(T_CLAMP);
    let clamp_hi = T::one() - clamp_lo;

    for k in 0..rz {
        for j in 0..ry {
            for i in 0..rx {
                let corner_ijk = |c: usize| {
                    let o = CORNER_OFFSETS[c];
                    (i + o[0], j + o[1], k + o[2])
                };

                let mut case = 0usize;
                for (c, _) in CORNER_OFFSETS.iter().enumerate() {
                    let (ci, cj, ck) = corner_ijk(c);
                    if grid.value(ci, cj, ck) >= iso {
                        case |= 1 << c;
                    }
                }
                if EDGE_TABLE[case] == 0 {
                    continue;
                }

                let mut cell_verts = [u32::MAX; 12];
                for (e, _) in EDGE_CORNERS.iter().enumerate() {
                    if EDGE_TABLE[case] & (1 << e) == 0 {
                        continue;
                    }
                    let (a, b) = (EDGE_CORNERS[e][0], EDGE_CORNERS[e][1]);
                    let (ai, aj, ak) = corner_ijk(a);
                    let (bi, bj, bk) = corner_ijk(b);
                    // Canonical key: smaller corner index + axis direction.
                    let ia = grid.corner_index(ai, aj, ak);
                    let ib = grid.corner_index(bi, bj, bk);
                    let axis = if ai != bi {
                        0u8
                    } else if aj != bj {
                        1u8
                    } else {
                        2u8
                    };
                    let key = (ia.min(ib), axis);

                    let id = *edge_vertices.entry(key).or_insert_with(|| {
                        let va = grid.value(ai, aj, ak);
                        let vb = grid.value(bi, bj, bk);
                        let mut t = (iso - va) / (vb - va);
                        if t < clamp_lo {
                            t = clamp_lo;
                        }
                        if t > clamp_hi {
                            t = clamp_hi;
                        }
                        let pa = grid.corner_position(ai, aj, ak);
                        let pb = grid.corner_position(bi, bj, bk);
                        let p = pa + (pb - pa) * t;
                        vertices.push(p);
                        (vertices.len() - 1) as u32
                    });
                    cell_verts[e] = id;
                }

                let row = &TRI_TABLE[case];
                let mut t = 0;
                while row[t] >= 0 {
                    let v0 = cell_verts[row[t] as usize];
                    let v1 = cell_verts[row[t + 1] as usize];
                    let v2 = cell_verts[row[t + 2] as usize];
                    if v0 != v1 && v1 != v2 && v0 != v2 {
                        triangles.push([v0, v1, v2]);
                    }
                    t += 3;
                }
            }
        }
    }

    if triangles.is_empty() {
        return Err(Error::EmptyField(
            "no iso-crossings anywhere in the grid".into(),
        ));
    }
    Ok(TriMesh::from_extraction(vertices, triangles))
}
