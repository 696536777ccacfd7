//! Reference evaluation of the convolution layer by numerical
//! integration, with no reliance on the closed form.
//!
//! The layer is defined as: extend the features into the volume as
//! Gaussian bumps, convolve with the 27-bump kernel, sample at the
//! targets. Written out, every output entry is an integral of a product
//! of two Gaussian sums. Linearity splits it into one integral per
//! (source point, kernel offset) pair, and each of those factorizes over
//! the axes into 1D integrals
//!
//! ```text
//! J(a, b) = integral exp(-(u - a)^2 / (2 sigma^2))
//!                  * exp(-(u - b)^2 / (2 sigma^2)) du
//! ```
//!
//! evaluated here by composite Gauss-Legendre panels over a generous
//! finite range. Nothing about the production path (the convolved-pair
//! closed form, its mass constant, the factored 27-term evaluation, or
//! the matrix rearrangement of the channel contraction) is reused, so
//! agreement is a real check of all of them. Accuracy is limited only by
//! the 8 sigma range truncation, far below 1e-9 relative.

use nalgebra::Point3;
use ndarray::Array2;

use super::conv::{FeatureSet, LayerParams};
use super::kernel::KERNEL_COUNT;

/// Classic 8-point Gauss-Legendre nodes and weights on [-1, 1].
const GL_NODES: [f64; 8] = [
    -0.960_289_856_497_536_2,
    -0.796_666_477_413_626_7,
    -0.525_532_409_916_329,
    -0.183_434_642_495_649_8,
    0.183_434_642_495_649_8,
    0.525_532_409_916_329,
    0.796_666_477_413_626_7,
    0.960_289_856_497_536_2,
];
const GL_WEIGHTS: [f64; 8] = [
    0.101_228_536_290_376_26,
    0.222_381_034_453_374_47,
    0.313_706_645_877_887_3,
    0.362_683_783_378_362,
    0.362_683_783_378_362,
    0.313_706_645_877_887_3,
    0.222_381_034_453_374_47,
    0.101_228_536_290_376_26,
];

/// 1D product-of-Gaussians integral by composite Gauss-Legendre panels,
/// half a sigma wide, over [min(a,b) - 8 sigma, max(a,b) + 8 sigma].
fn integral_1d(a: f64, b: f64, sigma2: f64) -> f64 {
    let sigma = sigma2.sqrt();
    let lo = a.min(b) - 8.0 * sigma;
    let hi = a.max(b) + 8.0 * sigma;
    let panels = ((hi - lo) / (0.5 * sigma)).ceil() as usize;
    let width = (hi - lo) / panels as f64;
    let inv = 1.0 / (2.0 * sigma2);
    let mut total = 0.0;
    for p in 0..panels {
        let mid = lo + (p as f64 + 0.5) * width;
        let half = 0.5 * width;
        let mut panel_sum = 0.0;
        for (node, weight) in GL_NODES.iter().zip(GL_WEIGHTS) {
            let u = mid + half * node;
            let da = u - a;
            let db = u - b;
            panel_sum += weight * (-(da * da + db * db) * inv).exp();
        }
        total += half * panel_sum;
    }
    total
}

/// Evaluate the layer at `targets` by quadrature. Returns the `L x K`
/// output features, bias included.
pub fn quadrature_reference(
    input: &FeatureSet<f64>,
    targets: &[Point3<f64>],
    params: &LayerParams<f64>,
) -> Array2<f64> {
    assert_eq!(input.feature_count(), params.in_features());
    let sigma2 = params.geometry().sigma2();
    let offsets = params.geometry().offsets();
    let (j_in, k_out) = (params.in_features(), params.out_features());
    let mut out = Array2::zeros((targets.len(), k_out));
    let mut pair = vec![0.0; input.len() * KERNEL_COUNT];
    for (l, x) in targets.iter().enumerate() {
        for (i, p) in input.points().iter().enumerate() {
            for (m, t) in offsets.iter().enumerate() {
                let shifted = x - t;
                pair[i * KERNEL_COUNT + m] = integral_1d(p.x, shifted.x, sigma2)
                    * integral_1d(p.y, shifted.y, sigma2)
                    * integral_1d(p.z, shifted.z, sigma2);
            }
        }
        for k in 0..k_out {
            let mut acc = params.bias()[k];
            for j in 0..j_in {
                for i in 0..input.len() {
                    let f = input.features()[(i, j)];
                    for m in 0..KERNEL_COUNT {
                        acc += f * params.weight(j, k, m) * pair[i * KERNEL_COUNT + m];
                    }
                }
            }
            out[(l, k)] = acc;
        }
    }
    out
}
