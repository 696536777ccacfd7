//! Closed-form Gaussian kernel geometry for the continuous convolution.
//!
//! Features are extended into the volume as Gaussian bumps
//! `g(r) = exp(-|r|^2 / (2 sigma^2))` at the points, and the volumetric
//! kernel is a sum of 27 such bumps with learned magnitudes, centered on
//! the `{-d, 0, +d}^3` grid. Convolving two bumps gives another Gaussian
//! with doubled variance and a known mass:
//!
//! ```text
//! (g * g)(r) = (pi sigma^2)^(3/2) exp(-|r|^2 / (4 sigma^2))
//! ```
//!
//! so sampling the convolved field at target `x` against a source point
//! `p` and kernel offset `t_m` costs one closed-form evaluation at
//! `delta - t_m`, `delta = x - p`. The 27 evaluations per pair share one
//! factorization: with `t_m = d (a, b, c)`, `a, b, c` in `{-1, 0, 1}`,
//! and `d = sigma`,
//!
//! ```text
//! exp(-|delta - t_m|^2 / (4 sigma^2))
//!   = G0 * ex^a * ey^b * ez^c * eta^(a^2 + b^2 + c^2)
//! ```
//!
//! where `G0 = exp(-|delta|^2 / (4 sigma^2))`, `ex = exp(delta_x / (2
//! sigma))` (similarly `ey`, `ez`), and `eta = exp(-1/4)`. Four
//! exponentials cover all 27 terms.

use nalgebra::Vector3;

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Number of kernel elements: the full 3x3x3 offset grid.
pub const KERNEL_COUNT: usize = 27;

/// Per-term truncation radius in units of sigma: contributions where
/// `|delta - t_m| > 4 sqrt(2) sigma` are dropped in truncated mode, a
/// relative error below `exp(-8) ~ 3.4e-4` per term.
pub const CUTOFF_SIGMAS: f64 = 5.656854249492381; // 4 sqrt(2)

/// Whether evaluation keeps every term or applies the documented cutoff.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ConvMode {
    /// Every source/target pair, every kernel term. Reference semantics
    /// for oracle comparisons.
    Exact,
    /// Terms beyond the cutoff radius dropped; pair candidates may come
    /// from a spatial grid. The production path.
    Truncated,
}

/// Fixed per-layer kernel geometry: the shared basis/kernel width and the
/// derived offset grid.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KernelGeometry<T: Real> {
    sigma2: T,
    sigma: T,
    /// Mass constant of the basis-kernel convolution, `(pi sigma^2)^(3/2)`.
    constant: T,
}

impl<T: Real> KernelGeometry<T> {
    pub fn new(sigma2: T) -> Result<Self> {
        if sigma2 <= T::zero() {
            return Err(Error::InvalidSpec("kernel width sigma^2 must be > 0".into()));
        }
        let sigma = sigma2.sqrt();
        let constant = (T::pi() * sigma2).powf(T::of(1.5));
        Ok(Self {
            sigma2,
            sigma,
            constant,
        })
    }

    /// The width rule tying a layer's kernel to its point count:
    /// `sigma^2 = c / I`.
    pub fn for_point_count(count: usize, c: T) -> Result<Self> {
        if count == 0 {
            return Err(Error::InvalidSpec("layer needs at least one point".into()));
        }
        Self::new(c / T::of_usize(count))
    }

    pub fn sigma2(&self) -> T {
        self.sigma2
    }

    pub fn sigma(&self) -> T {
        self.sigma
    }

    /// Offset grid spacing; one sigma per step.
    pub fn spacing(&self) -> T {
        self.sigma
    }

    pub fn constant(&self) -> T {
        self.constant
    }

    /// Radius within which a source point can contribute any non-truncated
    /// term to a target: cutoff plus the farthest offset `sqrt(3) d`.
    pub fn admission_radius(&self) -> T {
        (T::of(CUTOFF_SIGMAS) + T::of(3.0).sqrt()) * self.sigma
    }

    /// The 27 kernel offsets, x-fastest: `m = (a+1) + 3 (b+1) + 9 (c+1)`
    /// for `t_m = d (a, b, c)`.
    pub fn offsets(&self) -> [Vector3<T>; KERNEL_COUNT] {
        let d = self.spacing();
        let mut out = [Vector3::zeros(); KERNEL_COUNT];
        for (m, slot) in out.iter_mut().enumerate() {
            let (a, b, c) = decode(m);
            *slot = Vector3::new(
                d * T::of(a as f64),
                d * T::of(b as f64),
                d * T::of(c as f64),
            );
        }
        out
    }

    /// All 27 convolved-Gaussian samples for one pair separation `delta`,
    /// including the mass constant:
    /// `out[m] = C * exp(-|delta - t_m|^2 / (4 sigma^2))`.
    pub fn eval27(&self, delta: &Vector3<T>, mode: ConvMode, out: &mut [T; KERNEL_COUNT]) {
        let quarter_width = T::of(4.0) * self.sigma2;
        let g0 = (-delta.norm_squared() / quarter_width).exp();
        let half_sigma = T::of(2.0) * self.sigma;
        let ex = (delta.x / half_sigma).exp();
        let ey = (delta.y / half_sigma).exp();
        let ez = (delta.z / half_sigma).exp();
        let eta = T::of((-0.25f64).exp());

        let inv = |v: T| T::one() / v;
        let xs = [inv(ex), T::one(), ex];
        let ys = [inv(ey), T::one(), ey];
        let zs = [inv(ez), T::one(), ez];
        // eta^(a^2+b^2+c^2) for squared offset norms 0..=3.
        let etas = [T::one(), eta, eta * eta, eta * eta * eta];

        let floor = if mode == ConvMode::Truncated {
            T::of((-8.0f64).exp())
        } else {
            T::zero()
        };

        let mut m = 0;
        for c in 0..3usize {
            for b in 0..3usize {
                for a in 0..3usize {
                    let n2 = (a as isize - 1).pow(2) + (b as isize - 1).pow(2)
                        + (c as isize - 1).pow(2);
                    let raw = g0 * xs[a] * ys[b] * zs[c] * etas[n2 as usize];
                    out[m] = if raw < floor {
                        T::zero()
                    } else {
                        raw * self.constant
                    };
                    m += 1;
                }
            }
        }
    }
}

/// Decode kernel index `m` into grid coordinates `(a, b, c)` in
/// `{-1, 0, 1}`, x-fastest.
pub fn decode(m: usize) -> (i32, i32, i32) {
    debug_assert!(m < KERNEL_COUNT);
    let a = (m % 3) as i32 - 1;
    let b = ((m / 3) % 3) as i32 - 1;
    let c = (m / 9) as i32 - 1;
    (a, b, c)
}
