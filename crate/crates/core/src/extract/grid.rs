//! Coarse-to-fine hierarchical field evaluation.
//!
//! Level 0 is evaluated densely. Between levels, cells whose eight corner
//! occupancies disagree are marked active, the active mask is dilated by
//! `dilation` cells (Chebyshev), and only corners of active cells are
//! truly evaluated at the next level; everything else inherits trilinear
//! interpolation of the coarser level. A final fix-up sweep re-evaluates
//! any finest-level cell that still shows a crossing through inherited
//! corners, so every surface-adjacent cell ends up with eight true field
//! samples and the extracted mesh matches dense evaluation.

use std::fs::File;
use std::io::{BufWriter, Read as _, Write as _};
use std::path::Path;

use nalgebra::Point3;

use crate::error::{Error, Result};
use crate::geometry::Aabb3;
use crate::scalar::Real;

use super::marching::DenseGrid;

/// A batched scalar field. Evaluators that amortize per-cloud work across
/// a batch (the trained network) implement this directly; plain closures
/// get the blanket impl.
pub trait ScalarField<T: Real> {
    fn eval_batch(&self, points: &[Point3<T>]) -> Vec<T>;
}

impl<T: Real, F: Fn(&Point3<T>) -> T> ScalarField<T> for F {
    fn eval_batch(&self, points: &[Point3<T>]) -> Vec<T> {
        points.iter().map(self).collect()
    }
}

/// One resolution level: corner values plus a mask of which corners hold
/// true field evaluations (vs. inherited interpolations).
#[derive(Debug, Clone)]
pub struct GridLevel<T: Real> {
    /// Cells per axis (corners per axis = resolution + 1).
    pub resolution: usize,
    /// Corner values, x-fastest.
    pub values: Vec<T>,
    pub evaluated: Vec<bool>,
}

impl<T: Real> GridLevel<T> {
    fn dims(&self) -> usize {
        self.resolution + 1
    }

    #[inline]
    fn idx(&self, i: usize, j: usize, k: usize) -> usize {
        (k * self.dims() + j) * self.dims() + i
    }
}

#[derive(Debug, Clone)]
pub struct MultiResGrid<T: Real> {
    pub bbox: Aabb3<T>,
    pub levels: Vec<GridLevel<T>>,
    pub dilation: usize,
    /// True field evaluations spent across all levels.
    pub evaluation_count: usize,
}

impl<T: Real> MultiResGrid<T> {
    pub fn finest(&self) -> &GridLevel<T> {
        self.levels.last().expect("at least one level")
    }

    /// The finest level as a dense grid ready for marching cubes.
    pub fn finest_dense(&self) -> DenseGrid<T> {
        let f = self.finest();
        DenseGrid::new(
            self.bbox,
            [f.resolution, f.resolution, f.resolution],
            f.values.clone(),
        )
        .expect("level arrays are consistent by construction")
    }
}

fn corner_position<T: Real>(bbox: &Aabb3<T>, res: usize, i: usize, j: usize, k: usize) -> Point3<T> {
    let s = bbox.size();
    let r = T::of_usize(res);
    Point3::new(
        bbox.min.x + s.x * T::of_usize(i) / r,
        bbox.min.y + s.y * T::of_usize(j) / r,
        bbox.min.z + s.z * T::of_usize(k) / r,
    )
}

/// Evaluate `field` hierarchically over `bbox`.
///
/// `levels` lists cell resolutions, ascending, each exactly double the
/// previous (e.g. 64, 128, 256). `iso` is the occupancy threshold used for
/// the corner-disagreement refinement criterion.
pub fn evaluate_hierarchical<T: Real, F: ScalarField<T>>(
    field: &F,
    bbox: &Aabb3<T>,
    levels: &[usize],
    dilation: usize,
    iso: T,
) -> Result<MultiResGrid<T>> {
    if levels.is_empty() {
        return Err(Error::InvalidSpec("need at least one grid level".into()));
    }
    for w in levels.windows(2) {
        if w[1] != 2 * w[0] {
            return Err(Error::InvalidSpec(format!(
                "each level must double the previous ({} then {})",
                w[0], w[1]
            )));
        }
    }
    if levels[0] == 0 {
        return Err(Error::InvalidSpec("level resolution must be >= 1".into()));
    }

    let mut evaluation_count = 0usize;

    // Dense level 0.
    let r0 = levels[0];
    let d0 = r0 + 1;
    let mut positions = Vec::with_capacity(d0 * d0 * d0);
    for k in 0..d0 {
        for j in 0..d0 {
            for i in 0..d0 {
                positions.push(corner_position(bbox, r0, i, j, k));
            }
        }
    }
    let values = field.eval_batch(&positions);
    evaluation_count += positions.len();
    let mut grid_levels = vec![GridLevel {
        resolution: r0,
        values,
        evaluated: vec![true; d0 * d0 * d0],
    }];

    for &res in &levels[1..] {
        let parent = grid_levels.last().expect("nonempty");
        let active = active_cells(parent, iso, dilation);
        let child = refine_level(field, bbox, parent, &active, res, &mut evaluation_count);
        grid_levels.push(child);
    }

    // Fix-up: any finest cell showing a crossing must hold 8 true samples.
    fixup_finest(field, bbox, grid_levels.last_mut().expect("nonempty"), iso, &mut evaluation_count);

    Ok(MultiResGrid {
        bbox: *bbox,
        levels: grid_levels,
        dilation,
        evaluation_count,
    })
}

/// Cells whose corners disagree in thresholded occupancy, dilated by
/// `dilation` cells across faces (an L1 ball, so the slab thickens along
/// the surface normal without diagonal bloat).
fn active_cells<T: Real>(level: &GridLevel<T>, iso: T, dilation: usize) -> Vec<bool> {
    let r = level.resolution;
    let mut mask = vec![false; r * r * r];
    for k in 0..r {
        for j in 0..r {
            for i in 0..r {
                let mut inside = 0;
                for (di, dj, dk) in CELL_CORNERS {
                    if level.values[level.idx(i + di, j + dj, k + dk)] >= iso {
                        inside += 1;
                    }
                }
                mask[(k * r + j) * r + i] = inside != 0 && inside != 8;
            }
        }
    }
    let ri = r as isize;
    let at = |i: isize, j: isize, k: isize| ((k * ri + j) * ri + i) as usize;
    for _ in 0..dilation {
        let prev = mask.clone();
        for k in 0..ri {
            for j in 0..ri {
                for i in 0..ri {
                    if prev[at(i, j, k)] {
                        continue;
                    }
                    let grown = (i > 0 && prev[at(i - 1, j, k)])
                        || (i + 1 < ri && prev[at(i + 1, j, k)])
                        || (j > 0 && prev[at(i, j - 1, k)])
                        || (j + 1 < ri && prev[at(i, j + 1, k)])
                        || (k > 0 && prev[at(i, j, k - 1)])
                        || (k + 1 < ri && prev[at(i, j, k + 1)]);
                    if grown {
                        mask[at(i, j, k)] = true;
                    }
                }
            }
        }
    }
    mask
}

const CELL_CORNERS: [(usize, usize, usize); 8] = [
    (0, 0, 0),
    (1, 0, 0),
    (0, 1, 0),
    (1, 1, 0),
    (0, 0, 1),
    (1, 0, 1),
    (0, 1, 1),
    (1, 1, 1),
];

fn refine_level<T: Real, F: ScalarField<T>>(
    field: &F,
    bbox: &Aabb3<T>,
    parent: &GridLevel<T>,
    active: &[bool],
    res: usize,
    evaluation_count: &mut usize,
) -> GridLevel<T> {
    assert_eq!(res, parent.resolution * 2);
    let dims = res + 1;
    let mut values = vec![T::zero(); dims * dims * dims];
    let mut evaluated = vec![false; dims * dims * dims];
    let child_idx = |i: usize, j: usize, k: usize| (k * dims + j) * dims + i;

    // Pass 1: inherit. Coincident corners copy the parent value (and its
    // evaluated flag); everything else takes trilinear interpolation.
    let pr = parent.resolution;
    for k in 0..dims {
        for j in 0..dims {
            for i in 0..dims {
                let ci = child_idx(i, j, k);
                if i % 2 == 0 && j % 2 == 0 && k % 2 == 0 {
                    let pi = parent.idx(i / 2, j / 2, k / 2);
                    values[ci] = parent.values[pi];
                    evaluated[ci] = parent.evaluated[pi];
                } else {
                    values[ci] = trilinear_parent(parent, pr, i, j, k);
                }
            }
        }
    }

    // Pass 2: truly evaluate all corners of active-cell children.
    let mut want: Vec<usize> = Vec::new();
    let mut want_pos: Vec<Point3<T>> = Vec::new();
    let mut scheduled = vec![false; dims * dims * dims];
    for k in 0..pr {
        for j in 0..pr {
            for i in 0..pr {
                if !active[(k * pr + j) * pr + i] {
                    continue;
                }
                // The 5x5x5 corner block of the 8 child cells.
                for ck in 2 * k..=2 * k + 2 {
                    for cj in 2 * j..=2 * j + 2 {
                        for ci in 2 * i..=2 * i + 2 {
                            let id = child_idx(ci, cj, ck);
                            if !evaluated[id] && !scheduled[id] {
                                scheduled[id] = true;
                                want.push(id);
                                want_pos.push(corner_position(bbox, res, ci, cj, ck));
                            }
                        }
                    }
                }
            }
        }
    }
    let fresh = field.eval_batch(&want_pos);
    *evaluation_count += fresh.len();
    for (id, v) in want.iter().zip(fresh) {
        values[*id] = v;
        evaluated[*id] = true;
    }

    GridLevel {
        resolution: res,
        values,
        evaluated,
    }
}

/// Trilinear interpolation of the parent level at child corner (i, j, k)
/// of the doubled grid.
fn trilinear_parent<T: Real>(parent: &GridLevel<T>, pr: usize, i: usize, j: usize, k: usize) -> T {
    let half = T::of(0.5);
    let (i0, fi) = (i / 2, i % 2);
    let (j0, fj) = (j / 2, j % 2);
    let (k0, fk) = (k / 2, k % 2);
    let i1 = (i0 + fi).min(pr);
    let j1 = (j0 + fj).min(pr);
    let k1 = (k0 + fk).min(pr);
    let wx = if fi == 1 { half } else { T::zero() };
    let wy = if fj == 1 { half } else { T::zero() };
    let wz = if fk == 1 { half } else { T::zero() };
    let v = |a: usize, b: usize, c: usize| parent.values[parent.idx(a, b, c)];
    let lerp = |a: T, b: T, w: T| a + (b - a) * w;
    let c00 = lerp(v(i0, j0, k0), v(i1, j0, k0), wx);
    let c10 = lerp(v(i0, j1, k0), v(i1, j1, k0), wx);
    let c01 = lerp(v(i0, j0, k1), v(i1, j0, k1), wx);
    let c11 = lerp(v(i0, j1, k1), v(i1, j1, k1), wx);
    let c0 = lerp(c00, c10, wy);
    let c1 = lerp(c01, c11, wy);
    lerp(c0, c1, wz)
}

/// Repeatedly evaluate the not-yet-true corners of finest-level cells that
/// show an iso-crossing, until the crossing set is stable. Terminates
/// because each round only turns inherited corners into evaluated ones.
fn fixup_finest<T: Real, F: ScalarField<T>>(
    field: &F,
    bbox: &Aabb3<T>,
    level: &mut GridLevel<T>,
    iso: T,
    evaluation_count: &mut usize,
) {
    let r = level.resolution;
    loop {
        let mut want: Vec<usize> = Vec::new();
        let mut want_pos: Vec<Point3<T>> = Vec::new();
        let mut scheduled = vec![false; level.values.len()];
        for k in 0..r {
            for j in 0..r {
                for i in 0..r {
                    let mut inside = 0;
                    let mut all_eval = true;
                    for (di, dj, dk) in CELL_CORNERS {
                        let id = level.idx(i + di, j + dj, k + dk);
                        if level.values[id] >= iso {
                            inside += 1;
                        }
                        all_eval &= level.evaluated[id];
                    }
                    if inside == 0 || inside == 8 || all_eval {
                        continue;
                    }
                    for (di, dj, dk) in CELL_CORNERS {
                        let id = level.idx(i + di, j + dj, k + dk);
                        if !level.evaluated[id] && !scheduled[id] {
                            scheduled[id] = true;
                            want.push(id);
                            want_pos.push(corner_position(bbox, r, i + di, j + dj, k + dk));
                        }
                    }
                }
            }
        }
        if want.is_empty() {
            return;
        }
        let fresh = field.eval_batch(&want_pos);
        *evaluation_count += fresh.len();
        for (id, v) in want.iter().zip(fresh) {
            level.values[*id] = v;
            level.evaluated[*id] = true;
        }
    }
}

/// Dump the finest level as a flat binary grid: magic `OGRD`, three u32
/// little-endian corner dimensions, then corner values as f32 little-endian
/// in x-fastest order.
pub fn save_grid<T: Real>(path: &Path, grid: &DenseGrid<T>) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    let mut w = BufWriter::new(file);
    let res = (|| {
        w.write_all(b"OGRD")?;
        for d in grid.corner_dims() {
            w.write_all(&(d as u32).to_le_bytes())?;
        }
        for v in grid.values() {
            w.write_all(&(v.as_f64() as f32).to_le_bytes())?;
        }
        w.flush()
    })();
    res.map_err(|e| Error::io(path.display().to_string(), e))
}

/// Read back a grid dump; the bounding box is not stored in the format,
/// so the caller supplies it.
pub fn load_grid<T: Real>(path: &Path, bbox: Aabb3<T>) -> Result<DenseGrid<T>> {
    let mut file = File::open(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    let mut buf = Vec::new();
    file.read_to_end(&mut buf)
        .map_err(|e| Error::io(path.display().to_string(), e))?;
    if buf.len() < 16 || &buf[0..4] != b"OGRD" {
        return Err(Error::Format {
            what: "grid dump",
            msg: "missing OGRD magic".into(),
        });
    }
    let mut dims = [0usize; 3];
    for (a, d) in dims.iter_mut().enumerate() {
        let off = 4 + 4 * a;
        *d = u32::from_le_bytes(buf[off..off + 4].try_into().expect("4 bytes")) as usize;
    }
    let n = dims[0] * dims[1] * dims[2];
    if dims.iter().any(|&d| d < 2) || buf.len() != 16 + 4 * n {
        return Err(Error::Format {
            what: "grid dump",
            msg: format!("inconsistent dimensions {dims:?} for {} bytes", buf.len()),
        });
    }
    let mut values = Vec::with_capacity(n);
    for c in 0..n {
        let off = 16 + 4 * c;
        let bits = u32::from_le_bytes(buf[off..off + 4].try_into().expect("4 bytes"));
        values.push(T::of(f32::from_bits(bits) as f64));
    }
    DenseGrid::new(bbox, [dims[0] - 1, dims[1] - 1, dims[2] - 1], values)
}
