use nalgebra::{Point3, Vector3};

use crate::scalar::Real;

/// Axis-aligned bounding box.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Aabb3<T: Real> {
    pub min: Point3<T>,
    pub max: Point3<T>,
}

impl<T: Real> Aabb3<T> {
    pub fn new(min: Point3<T>, max: Point3<T>) -> Self {
        debug_assert!(
            (0..3).all(|i| min[i] <= max[i]),
            "Aabb3 requires min <= max componentwise"
        );
        Self { min, max }
    }

    /// Smallest box containing all points; `None` for an empty iterator.
    pub fn from_points<'a, I>(points: I) -> Option<Self>
    where
        I: IntoIterator<Item = &'a Point3<T>>,
    {
        let mut it = points.into_iter();
        let first = *it.next()?;
        let mut bb = Self {
            min: first,
            max: first,
        };
        for p in it {
            bb.grow(p);
        }
        Some(bb)
    }

    pub fn grow(&mut self, p: &Point3<T>) {
        for i in 0..3 {
            if p[i] < self.min[i] {
                self.min[i] = p[i];
            }
            if p[i] > self.max[i] {
                self.max[i] = p[i];
            }
        }
    }

    pub fn union(&self, other: &Self) -> Self {
        let mut out = *self;
        out.grow(&other.min);
        out.grow(&other.max);
        out
    }

    pub fn center(&self) -> Point3<T> {
        let half = T::of(0.5);
        Point3::new(
            (self.min.x + self.max.x) * half,
            (self.min.y + self.max.y) * half,
            (self.min.z + self.max.z) * half,
        )
    }

    pub fn size(&self) -> Vector3<T> {
        self.max - self.min
    }

    pub fn longest_side(&self) -> T {
        let s = self.size();
        pmax(pmax(s.x, s.y), s.z)
    }

    pub fn volume(&self) -> T {
        let s = self.size();
        s.x * s.y * s.z
    }

    /// Box expanded by `margin` on every side.
    pub fn padded(&self, margin: T) -> Self {
        let m = Vector3::new(margin, margin, margin);
        Self {
            min: self.min - m,
            max: self.max + m,
        }
    }

    pub fn contains(&self, p: &Point3<T>) -> bool {
        (0..3).all(|i| p[i] >= self.min[i] && p[i] <= self.max[i])
    }

    /// Uniform random point inside the box. Coordinates are drawn in f64
    /// before conversion so the stream is identical across scalar types.
    pub fn sample_point<R: rand::Rng>(&self, rng: &mut R) -> Point3<T> {
        let s = self.size();
        Point3::new(
            self.min.x + s.x * T::of(rng.random::<f64>()),
            self.min.y + s.y * T::of(rng.random::<f64>()),
            self.min.z + s.z * T::of(rng.random::<f64>()),
        )
    }

    /// Squared distance from `p` to the box (zero inside).
    pub fn distance_squared(&self, p: &Point3<T>) -> T {
        let mut d2 = T::zero();
        for i in 0..3 {
            let lo = self.min[i] - p[i];
            let hi = p[i] - self.max[i];
            let gap = pmax(pmax(lo, hi), T::zero());
            d2 += gap * gap;
        }
        d2
    }

    /// Slab test: does the ray `origin + t*dir` hit the box for some t in
    /// (0, t_max]? `inv_dir` carries precomputed reciprocals (±inf allowed).
    pub fn intersects_ray(&self, origin: &Point3<T>, inv_dir: &Vector3<T>, t_max: T) -> bool {
        let mut t0 = T::zero();
        let mut t1 = t_max;
        for i in 0..3 {
            let mut near = (self.min[i] - origin[i]) * inv_dir[i];
            let mut far = (self.max[i] - origin[i]) * inv_dir[i];
            if near > far {
                std::mem::swap(&mut near, &mut far);
            }
            // NaN (0 * inf when the origin sits on a slab plane) must not
            // shrink the interval, so compare with the NaN-rejecting side.
            if near > t0 {
                t0 = near;
            }
            if far < t1 {
                t1 = far;
            }
            if t0 > t1 {
                return false;
            }
        }
        true
    }
}

// Comparison instead of trait `max` keeps generic code unambiguous between
// the scalar traits in scope.
#[inline]
fn pmax<T: Real>(a: T, b: T) -> T {
    if a >= b {
        a
    } else {
        b
    }
}
