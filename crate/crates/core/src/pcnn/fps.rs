//! Farthest point sampling and Voronoi max-pooling between point sets.
//!
//! Pooling shrinks a feature set to a subset of its points: each source
//! point is assigned to the nearest selected point, and every selected
//! point takes the channelwise maximum over its cell. All tie-breaks
//! compare point positions lexicographically, so the pooled features are
//! a function of the point *set*, not of input order.

use nalgebra::Point3;
use ndarray::Array2;

use crate::error::{Error, Result};
use crate::scalar::Real;
use crate::seed::{stream_rng, Stream};

use super::conv::FeatureSet;

fn lex_less<T: Real>(a: &Point3<T>, b: &Point3<T>) -> bool {
    if a.x != b.x {
        return a.x < b.x;
    }
    if a.y != b.y {
        return a.y < b.y;
    }
    a.z < b.z
}

fn validate_fps_args<T: Real>(points: &[Point3<T>], count: usize) -> Result<()> {
    if count == 0 {
        return Err(Error::InvalidSpec("cannot sample zero points".into()));
    }
    if count > points.len() {
        return Err(Error::DimensionMismatch(format!(
            "cannot sample {count} of {} points",
            points.len()
        )));
    }
    Ok(())
}

/// Greedy farthest point sampling from a seeded random start.
///
/// Returns `count` indices in selection order. After the start point,
/// each round selects the point with the largest distance to the set
/// selected so far; ties prefer the lexicographically smaller position,
/// then the smaller index.
pub fn fps<T: Real>(points: &[Point3<T>], count: usize, seed: u64) -> Result<Vec<u32>> {
    validate_fps_args(points, count)?;
    let start = rand::Rng::random_range(
        &mut stream_rng(seed, Stream::FpsStart, 0),
        0..points.len(),
    );
    Ok(fps_from(points, count, start))
}

/// Farthest point sampling started at the lexicographically smallest
/// position. Selected positions are invariant to input order, which keeps
/// networks built on the result permutation invariant.
pub fn fps_canonical<T: Real>(points: &[Point3<T>], count: usize) -> Result<Vec<u32>> {
    validate_fps_args(points, count)?;
    let mut start = 0;
    for (i, p) in points.iter().enumerate().skip(1) {
        if lex_less(p, &points[start]) {
            start = i;
        }
    }
    Ok(fps_from(points, count, start))
}

fn fps_from<T: Real>(points: &[Point3<T>], count: usize, start: usize) -> Vec<u32> {
    let mut selected = Vec::with_capacity(count);
    let mut dist2: Vec<T> = points.iter().map(|p| (p - points[start]).norm_squared()).collect();
    selected.push(start as u32);
    while selected.len() < count {
        let mut best = usize::MAX;
        for (i, &d) in dist2.iter().enumerate() {
            if best == usize::MAX
                || d > dist2[best]
                || (d == dist2[best] && lex_less(&points[i], &points[best]))
            {
                best = i;
            }
        }
        selected.push(best as u32);
        for (i, d) in dist2.iter_mut().enumerate() {
            let nd = (points[i] - points[best]).norm_squared();
            if nd < *d {
                *d = nd;
            }
        }
    }
    selected
}

/// How a pooling step routed its inputs; consumed by the backward pass.
#[derive(Debug, Clone)]
pub struct PoolAssignment {
    /// Indices of the selected (pooled-to) points in the source set.
    pub centers: Vec<u32>,
    /// Per source point, the slot in `centers` it was assigned to.
    pub cell_of: Vec<u32>,
    /// Per (cell, channel), the source row whose value won the max.
    pub argmax: Array2<u32>,
}

/// Pool a feature set onto the subset `selected` (indices into the input
/// set, e.g. from [`fps`]): nearest-center Voronoi assignment, then a
/// channelwise maximum over each cell.
pub fn point_pool<T: Real>(
    input: &FeatureSet<T>,
    selected: &[u32],
) -> Result<(FeatureSet<T>, PoolAssignment)> {
    if selected.is_empty() {
        return Err(Error::InvalidSpec("pooling needs at least one center".into()));
    }
    for &c in selected {
        if c as usize >= input.len() {
            return Err(Error::DimensionMismatch(format!(
                "center index {c} out of range for {} points",
                input.len()
            )));
        }
    }
    let centers: Vec<Point3<T>> = selected.iter().map(|&c| input.points()[c as usize]).collect();

    // Nearest center per source point; ties prefer the lexicographically
    // smaller center position so the cells depend only on positions.
    let cell_of: Vec<u32> = input
        .points()
        .iter()
        .map(|p| {
            let mut best = 0usize;
            let mut best_d = (p - centers[0]).norm_squared();
            for (c, q) in centers.iter().enumerate().skip(1) {
                let d = (p - q).norm_squared();
                if d < best_d || (d == best_d && lex_less(q, &centers[best])) {
                    best = c;
                    best_d = d;
                }
            }
            best as u32
        })
        .collect();

    let channels = input.feature_count();
    let mut features = Array2::from_elem((selected.len(), channels), T::zero());
    let mut argmax = Array2::from_elem((selected.len(), channels), u32::MAX);
    for (i, &cell) in cell_of.iter().enumerate() {
        let cell = cell as usize;
        for k in 0..channels {
            let v = input.features()[(i, k)];
            let cur = argmax[(cell, k)];
            let take = if cur == u32::MAX {
                true
            } else if v != features[(cell, k)] {
                v > features[(cell, k)]
            } else {
                // Equal values: route to the lexicographically smaller
                // source position for order independence.
                lex_less(&input.points()[i], &input.points()[cur as usize])
            };
            if take {
                features[(cell, k)] = v;
                argmax[(cell, k)] = i as u32;
            }
        }
    }
    debug_assert!(argmax.iter().all(|&i| i != u32::MAX), "every cell owns its center");

    let pooled = FeatureSet::new(centers, features)?;
    Ok((
        pooled,
        PoolAssignment {
            centers: selected.to_vec(),
            cell_of,
            argmax,
        },
    ))
}

/// Scatter output gradients back through the max: each pooled entry
/// forwards its gradient to the single source entry that produced it.
pub fn pool_backward<T: Real>(
    assignment: &PoolAssignment,
    source_count: usize,
    grad_output: &Array2<T>,
) -> Array2<T> {
    debug_assert_eq!(grad_output.dim(), assignment.argmax.dim());
    let mut grad = Array2::from_elem((source_count, grad_output.ncols()), T::zero());
    for ((cell, k), &src) in assignment.argmax.indexed_iter() {
        grad[(src as usize, k)] += grad_output[(cell, k)];
    }
    grad
}
