//! Source/target pair enumeration for the convolution layers.
//!
//! Truncated evaluation only needs pairs whose separation admits at least
//! one non-truncated kernel term, i.e. `|x - p| <= admission_radius`. A
//! uniform spatial hash over the source points finds those candidates in
//! near-linear time; the strict distance test keeps the admitted set a
//! pure function of pair geometry (independent of grid placement), so
//! truncated results are translation invariant.

use std::collections::HashMap;

use nalgebra::Point3;

use crate::scalar::Real;

/// Admitted source indices per target, CSR layout: sources for target `l`
/// live in `sources[starts[l]..starts[l + 1]]`.
#[derive(Debug, Clone)]
pub struct PairPlan {
    starts: Vec<usize>,
    sources: Vec<u32>,
}

impl PairPlan {
    /// Every source paired with every target.
    pub fn dense(source_count: usize, target_count: usize) -> Self {
        let all: Vec<u32> = (0..source_count as u32).collect();
        let mut starts = Vec::with_capacity(target_count + 1);
        let mut sources = Vec::with_capacity(source_count * target_count);
        starts.push(0);
        for _ in 0..target_count {
            sources.extend_from_slice(&all);
            starts.push(sources.len());
        }
        Self { starts, sources }
    }

    /// Pairs within `radius`, found via a hash grid with cells of side
    /// `radius` (each target probes its 3x3x3 cell neighborhood).
    pub fn within_radius<T: Real>(
        source_points: &[Point3<T>],
        target_points: &[Point3<T>],
        radius: T,
    ) -> Self {
        let inv_cell = T::one() / radius;
        let cell_of = |p: &Point3<T>| -> (i64, i64, i64) {
            (
                (p.x * inv_cell).floor().as_f64() as i64,
                (p.y * inv_cell).floor().as_f64() as i64,
                (p.z * inv_cell).floor().as_f64() as i64,
            )
        };

        let mut grid: HashMap<(i64, i64, i64), Vec<u32>> = HashMap::new();
        for (i, p) in source_points.iter().enumerate() {
            grid.entry(cell_of(p)).or_default().push(i as u32);
        }

        let r2 = radius * radius;
        let mut starts = Vec::with_capacity(target_points.len() + 1);
        let mut sources = Vec::new();
        starts.push(0);
        for x in target_points {
            let (cx, cy, cz) = cell_of(x);
            for dz in -1..=1 {
                for dy in -1..=1 {
                    for dx in -1..=1 {
                        let Some(bucket) = grid.get(&(cx + dx, cy + dy, cz + dz)) else {
                            continue;
                        };
                        for &i in bucket {
                            let d = x - source_points[i as usize];
                            if d.norm_squared() <= r2 {
                                sources.push(i);
                            }
                        }
                    }
                }
            }
            // Source order must not depend on hash iteration; buckets are
            // probed in a fixed cell order but each bucket preserves
            // insertion order, so sorting makes the plan canonical.
            let row = starts[starts.len() - 1];
            sources[row..].sort_unstable();
            starts.push(sources.len());
        }
        Self { starts, sources }
    }

    pub fn target_count(&self) -> usize {
        self.starts.len() - 1
    }

    pub fn pair_count(&self) -> usize {
        self.sources.len()
    }

    /// Admitted source indices for one target.
    pub fn sources_for(&self, target: usize) -> &[u32] {
        &self.sources[self.starts[target]..self.starts[target + 1]]
    }
}

#[cfg(test)]
mod tests {
    use rand::Rng as _;

    use crate::seed::{stream_rng, Stream};

    use super::*;

    fn random_points(n: usize, tag: u64) -> Vec<Point3<f64>> {
        let mut rng = stream_rng(tag, Stream::UniformQueries, 0);
        (0..n)
            .map(|_| {
                Point3::new(
                    rng.random::<f64>() - 0.5,
                    rng.random::<f64>() - 0.5,
                    rng.random::<f64>() - 0.5,
                )
            })
            .collect()
    }

    #[test]
    fn radius_plan_matches_brute_force() {
        let sources = random_points(200, 11);
        let targets = random_points(90, 12);
        let radius = 0.23;
        let plan = PairPlan::within_radius(&sources, &targets, radius);
        for (l, x) in targets.iter().enumerate() {
            let mut expect: Vec<u32> = sources
                .iter()
                .enumerate()
                .filter(|(_, p)| (x - *p).norm_squared() <= radius * radius)
                .map(|(i, _)| i as u32)
                .collect();
            expect.sort_unstable();
            assert_eq!(plan.sources_for(l), expect.as_slice(), "target {l}");
        }
    }

    #[test]
    fn dense_plan_lists_everything() {
        let plan = PairPlan::dense(4, 3);
        assert_eq!(plan.target_count(), 3);
        assert_eq!(plan.pair_count(), 12);
        for l in 0..3 {
            assert_eq!(plan.sources_for(l), &[0, 1, 2, 3]);
        }
    }

    #[test]
    fn plan_is_translation_invariant() {
        let sources = random_points(150, 21);
        let targets = random_points(60, 22);
        let shift = nalgebra::Vector3::new(7.31, -2.02, 0.517);
        let moved_s: Vec<_> = sources.iter().map(|p| p + shift).collect();
        let moved_t: Vec<_> = targets.iter().map(|p| p + shift).collect();
        let a = PairPlan::within_radius(&sources, &targets, 0.3);
        let b = PairPlan::within_radius(&moved_s, &moved_t, 0.3);
        assert_eq!(a.starts, b.starts);
        assert_eq!(a.sources, b.sources);
    }
}
