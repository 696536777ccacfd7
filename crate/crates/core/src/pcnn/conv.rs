//! The extend-convolve-restrict layer on point features.
//!
//! A feature matrix over source points defines a volumetric field per
//! channel (Gaussian extension). Convolving with the learned 27-bump
//! kernel and sampling at target points reduces, by the closed form in
//! [`super::kernel`], to a sum over nearby source/offset pairs:
//!
//! ```text
//! out[l, k] = bias[k]
//!   + sum_{i in N(l)} sum_m g_m(x_l - p_i) * H[i, m K + k]
//! ```
//!
//! with `H = F W`, `F` the source features (I x J) and `W` the packed
//! weights (J x 27K). Precomputing `H` turns the channel contraction into
//! one matrix product; the remaining pair loop touches `27 K` contiguous
//! values per pair.

use nalgebra::Point3;
use ndarray::Array2;

use crate::error::{Error, Result};
use crate::scalar::Real;

use super::kernel::{ConvMode, KernelGeometry, KERNEL_COUNT};
use super::pairs::PairPlan;

/// Points with an aligned feature matrix (row per point, column per
/// channel).
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureSet<T: Real> {
    points: Vec<Point3<T>>,
    features: Array2<T>,
}

impl<T: Real> FeatureSet<T> {
    pub fn new(points: Vec<Point3<T>>, features: Array2<T>) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::InvalidSpec("feature set needs at least one point".into()));
        }
        if features.nrows() != points.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} feature rows for {} points",
                features.nrows(),
                points.len()
            )));
        }
        if features.ncols() == 0 {
            return Err(Error::InvalidSpec("feature set needs at least one channel".into()));
        }
        Ok(Self { points, features })
    }

    /// The standard network input: a single all-ones channel, so the
    /// extended field is pure point density.
    pub fn ones(points: Vec<Point3<T>>) -> Result<Self> {
        let n = points.len();
        Self::new(points, Array2::from_elem((n, 1), T::one()))
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

    pub fn features(&self) -> &Array2<T> {
        &self.features
    }

    pub fn feature_count(&self) -> usize {
        self.features.ncols()
    }

    pub fn into_parts(self) -> (Vec<Point3<T>>, Array2<T>) {
        (self.points, self.features)
    }
}

/// Learned parameters of one convolution layer: a weight per (input
/// channel, output channel, kernel offset) triple plus an output bias,
/// tied to a fixed kernel geometry.
///
/// Weights are stored packed as a `J x 27K` matrix with column `m K + k`
/// so that the forward pass is a single matrix product followed by
/// contiguous per-offset accumulation.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerParams<T: Real> {
    weights: Array2<T>,
    bias: Vec<T>,
    geometry: KernelGeometry<T>,
}

impl<T: Real> LayerParams<T> {
    /// Build from a per-triple initializer `f(j, k, m)`.
    pub fn from_fn(
        in_features: usize,
        out_features: usize,
        geometry: KernelGeometry<T>,
        mut f: impl FnMut(usize, usize, usize) -> T,
    ) -> Result<Self> {
        if in_features == 0 || out_features == 0 {
            return Err(Error::InvalidSpec("layer needs at least one channel each way".into()));
        }
        let weights = Array2::from_shape_fn((in_features, KERNEL_COUNT * out_features), |(j, col)| {
            f(j, col % out_features, col / out_features)
        });
        Ok(Self {
            weights,
            bias: vec![T::zero(); out_features],
            geometry,
        })
    }

    pub fn zeros(in_features: usize, out_features: usize, geometry: KernelGeometry<T>) -> Result<Self> {
        Self::from_fn(in_features, out_features, geometry, |_, _, _| T::zero())
    }

    /// The same weights and bias under a different kernel geometry
    /// (used when retargeting a trained layer to a new source density).
    pub fn with_geometry(&self, geometry: KernelGeometry<T>) -> Self {
        Self {
            weights: self.weights.clone(),
            bias: self.bias.clone(),
            geometry,
        }
    }

    pub fn in_features(&self) -> usize {
        self.weights.nrows()
    }

    pub fn out_features(&self) -> usize {
        self.bias.len()
    }

    pub fn geometry(&self) -> &KernelGeometry<T> {
        &self.geometry
    }

    pub fn weight(&self, j: usize, k: usize, m: usize) -> T {
        self.weights[(j, m * self.out_features() + k)]
    }

    pub fn set_weight(&mut self, j: usize, k: usize, m: usize, value: T) {
        let col = m * self.out_features() + k;
        self.weights[(j, col)] = value;
    }

    pub fn bias(&self) -> &[T] {
        &self.bias
    }

    pub fn bias_mut(&mut self) -> &mut [T] {
        &mut self.bias
    }

    /// The packed `J x 27K` weight matrix (column `m K + k`).
    pub fn packed_weights(&self) -> &Array2<T> {
        &self.weights
    }

    pub fn packed_weights_mut(&mut self) -> &mut Array2<T> {
        &mut self.weights
    }

    pub fn parameter_count(&self) -> usize {
        self.weights.len() + self.bias.len()
    }
}

/// Pair plan appropriate for `mode`: all pairs when exact, hash-grid
/// candidates within the admission radius when truncated.
pub fn plan_pairs<T: Real>(
    source_points: &[Point3<T>],
    target_points: &[Point3<T>],
    geometry: &KernelGeometry<T>,
    mode: ConvMode,
) -> PairPlan {
    match mode {
        ConvMode::Exact => PairPlan::dense(source_points.len(), target_points.len()),
        ConvMode::Truncated => {
            PairPlan::within_radius(source_points, target_points, geometry.admission_radius())
        }
    }
}

/// Forward pass over a prepared pair plan. Returns the `L x K` target
/// features.
pub fn conv_forward<T: Real>(
    source_points: &[Point3<T>],
    features: &Array2<T>,
    target_points: &[Point3<T>],
    params: &LayerParams<T>,
    plan: &PairPlan,
    mode: ConvMode,
) -> Array2<T> {
    debug_assert_eq!(features.ncols(), params.in_features());
    debug_assert_eq!(plan.target_count(), target_points.len());
    let k_out = params.out_features();
    let h = features.dot(params.packed_weights());
    let mut out = Array2::from_elem((target_points.len(), k_out), T::zero());
    let mut g = [T::zero(); KERNEL_COUNT];
    for (l, x) in target_points.iter().enumerate() {
        let mut row = out.row_mut(l);
        let row = row.as_slice_mut().expect("row-major output");
        row.copy_from_slice(params.bias());
        for &i in plan.sources_for(l) {
            let delta = x - source_points[i as usize];
            params.geometry().eval27(&delta, mode, &mut g);
            let hrow = h.row(i as usize);
            let hrow = hrow.as_slice().expect("row-major product");
            for (m, &gm) in g.iter().enumerate() {
                if gm == T::zero() {
                    continue;
                }
                let base = m * k_out;
                for k in 0..k_out {
                    row[k] += gm * hrow[base + k];
                }
            }
        }
    }
    out
}

/// Gradients of a convolution layer with respect to its inputs and
/// parameters.
#[derive(Debug, Clone)]
pub struct ConvGradients<T: Real> {
    /// `I x J`, gradient with respect to the source features.
    pub features: Array2<T>,
    /// `J x 27K`, packed like [`LayerParams::packed_weights`].
    pub weights: Array2<T>,
    /// Per output channel.
    pub bias: Vec<T>,
}

/// Backward pass matching [`conv_forward`]. Kernel values are recomputed
/// from the plan rather than stored; the truncation mask depends only on
/// pair geometry, so masked terms contribute exactly zero gradient.
pub fn conv_backward<T: Real>(
    source_points: &[Point3<T>],
    features: &Array2<T>,
    target_points: &[Point3<T>],
    params: &LayerParams<T>,
    plan: &PairPlan,
    mode: ConvMode,
    grad_output: &Array2<T>,
) -> ConvGradients<T> {
    debug_assert_eq!(grad_output.nrows(), target_points.len());
    debug_assert_eq!(grad_output.ncols(), params.out_features());
    let k_out = params.out_features();
    // m_mat[i, m K + k] = sum over targets touching i of g_m * grad_out[l, k]
    let mut m_mat = Array2::from_elem((source_points.len(), KERNEL_COUNT * k_out), T::zero());
    let mut g = [T::zero(); KERNEL_COUNT];
    for (l, x) in target_points.iter().enumerate() {
        let go = grad_output.row(l);
        let go = go.as_slice().expect("row-major gradient");
        for &i in plan.sources_for(l) {
            let delta = x - source_points[i as usize];
            params.geometry().eval27(&delta, mode, &mut g);
            let mut mrow = m_mat.row_mut(i as usize);
            let mrow = mrow.as_slice_mut().expect("row-major accumulator");
            for (m, &gm) in g.iter().enumerate() {
                if gm == T::zero() {
                    continue;
                }
                let base = m * k_out;
                for k in 0..k_out {
                    mrow[base + k] += gm * go[k];
                }
            }
        }
    }
    let grad_weights = features.t().dot(&m_mat);
    let grad_features = m_mat.dot(&params.packed_weights().t());
    let grad_bias = (0..k_out).map(|k| grad_output.column(k).sum()).collect();
    ConvGradients {
        features: grad_features,
        weights: grad_weights,
        bias: grad_bias,
    }
}

/// Extend the input features into the volume, convolve with the layer
/// kernel, and restrict to `targets`.
pub fn extend_conv_restrict<T: Real>(
    input: &FeatureSet<T>,
    targets: &[Point3<T>],
    params: &LayerParams<T>,
    mode: ConvMode,
) -> Result<FeatureSet<T>> {
    if input.feature_count() != params.in_features() {
        return Err(Error::DimensionMismatch(format!(
            "layer expects {} input channels, got {}",
            params.in_features(),
            input.feature_count()
        )));
    }
    if targets.is_empty() {
        return Err(Error::InvalidSpec("restriction needs at least one target".into()));
    }
    let plan = plan_pairs(input.points(), targets, params.geometry(), mode);
    let features = conv_forward(input.points(), input.features(), targets, params, &plan, mode);
    FeatureSet::new(targets.to_vec(), features)
}

/// Decoder-side restriction onto a denser point set. The operation is the
/// same extend-convolve-restrict; the name marks intent at call sites
/// where `targets` outnumber the input points.
pub fn point_upsample<T: Real>(
    input: &FeatureSet<T>,
    targets: &[Point3<T>],
    params: &LayerParams<T>,
    mode: ConvMode,
) -> Result<FeatureSet<T>> {
    extend_conv_restrict(input, targets, params, mode)
}

#[cfg(test)]
mod tests {
    use approx::assert_relative_eq;
    use nalgebra::Vector3;
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

    fn random_layer(j: usize, k: usize, sigma2: f64, tag: u64) -> LayerParams<f64> {
        let mut rng = stream_rng(tag, Stream::ParamInit, 0);
        let geometry = KernelGeometry::new(sigma2).unwrap();
        let mut params =
            LayerParams::from_fn(j, k, geometry, |_, _, _| rng.random::<f64>() * 2.0 - 1.0)
                .unwrap();
        for b in params.bias_mut() {
            *b = rng.random::<f64>() - 0.5;
        }
        params
    }

    fn random_features(points: Vec<Point3<f64>>, j: usize, tag: u64) -> FeatureSet<f64> {
        let mut rng = stream_rng(tag, Stream::ParamInit, 1);
        let n = points.len();
        let f = Array2::from_shape_fn((n, j), |_| rng.random::<f64>() * 2.0 - 1.0);
        FeatureSet::new(points, f).unwrap()
    }

    /// Direct evaluation of the layer definition, one offset term at a
    /// time, without the H-matrix rearrangement.
    fn brute_force(
        input: &FeatureSet<f64>,
        targets: &[Point3<f64>],
        params: &LayerParams<f64>,
    ) -> Array2<f64> {
        let geometry = params.geometry();
        let offsets = geometry.offsets();
        let mut out = Array2::zeros((targets.len(), params.out_features()));
        for (l, x) in targets.iter().enumerate() {
            for k in 0..params.out_features() {
                let mut acc = params.bias()[k];
                for (i, p) in input.points().iter().enumerate() {
                    for j in 0..params.in_features() {
                        for (m, t) in offsets.iter().enumerate() {
                            let r2 = (x - p - t).norm_squared();
                            let g = geometry.constant() * (-r2 / (4.0 * geometry.sigma2())).exp();
                            acc += input.features()[(i, j)] * params.weight(j, k, m) * g;
                        }
                    }
                }
                out[(l, k)] = acc;
            }
        }
        out
    }

    #[test]
    fn matches_term_by_term_evaluation() {
        let input = random_features(random_points(17, 1), 3, 2);
        let targets = random_points(9, 3);
        let params = random_layer(3, 4, 0.04, 4);
        let fast = extend_conv_restrict(&input, &targets, &params, ConvMode::Exact).unwrap();
        let slow = brute_force(&input, &targets, &params);
        for (a, b) in fast.features().iter().zip(slow.iter()) {
            assert_relative_eq!(a, b, max_relative = 1e-12, epsilon = 1e-12);
        }
    }

    #[test]
    fn zero_weights_give_bias() {
        let input = random_features(random_points(10, 5), 2, 6);
        let targets = random_points(6, 7);
        let geometry = KernelGeometry::new(0.05).unwrap();
        let mut params = LayerParams::zeros(2, 3, geometry).unwrap();
        params.bias_mut().copy_from_slice(&[0.5, -1.25, 2.0]);
        let out = extend_conv_restrict(&input, &targets, &params, ConvMode::Truncated).unwrap();
        for l in 0..6 {
            assert_eq!(out.features().row(l).to_vec(), vec![0.5, -1.25, 2.0]);
        }
    }

    #[test]
    fn output_is_linear_in_features() {
        let points = random_points(14, 8);
        let f1 = random_features(points.clone(), 3, 9);
        let f2 = random_features(points.clone(), 3, 10);
        let targets = random_points(5, 11);
        let mut params = random_layer(3, 2, 0.03, 12);
        for b in params.bias_mut() {
            *b = 0.0;
        }
        let (alpha, beta) = (1.7, -0.4);
        let combined = FeatureSet::new(
            points,
            alpha * f1.features() + beta * f2.features(),
        )
        .unwrap();
        let lhs = extend_conv_restrict(&combined, &targets, &params, ConvMode::Exact).unwrap();
        let r1 = extend_conv_restrict(&f1, &targets, &params, ConvMode::Exact).unwrap();
        let r2 = extend_conv_restrict(&f2, &targets, &params, ConvMode::Exact).unwrap();
        let rhs = alpha * r1.features() + beta * r2.features();
        for (a, b) in lhs.features().iter().zip(rhs.iter()) {
            assert_relative_eq!(a, b, max_relative = 1e-12, epsilon = 1e-12);
        }
    }

    #[test]
    fn jointly_translating_sources_and_targets_is_exact_on_a_lattice() {
        // Points on a 2^-20 lattice and a lattice-aligned shift make every
        // coordinate sum exact, so the pair separations are bitwise equal
        // and the layer output must be bitwise identical.
        let quantum = (2.0f64).powi(-20);
        let snap = |p: Point3<f64>| {
            Point3::new(
                (p.x / quantum).round() * quantum,
                (p.y / quantum).round() * quantum,
                (p.z / quantum).round() * quantum,
            )
        };
        let sources: Vec<_> = random_points(40, 13).into_iter().map(snap).collect();
        let targets: Vec<_> = random_points(15, 14).into_iter().map(snap).collect();
        let shift = Vector3::new(12345.0 * quantum, -777.0 * quantum, 250000.0 * quantum);
        let params = random_layer(2, 3, 0.02, 15);
        let input = random_features(sources.clone(), 2, 16);
        let moved_input = FeatureSet::new(
            sources.iter().map(|p| p + shift).collect(),
            input.features().clone(),
        )
        .unwrap();
        let moved_targets: Vec<_> = targets.iter().map(|p| p + shift).collect();
        for mode in [ConvMode::Exact, ConvMode::Truncated] {
            let base = extend_conv_restrict(&input, &targets, &params, mode).unwrap();
            let moved =
                extend_conv_restrict(&moved_input, &moved_targets, &params, mode).unwrap();
            assert_eq!(base.features(), moved.features());
        }
    }

    #[test]
    fn permuting_source_points_leaves_output_unchanged() {
        let points = random_points(25, 17);
        let input = random_features(points, 3, 18);
        let targets = random_points(8, 19);
        let params = random_layer(3, 3, 0.03, 20);
        // Reverse is a fixed, nontrivial permutation.
        let perm_points: Vec<_> = input.points().iter().rev().copied().collect();
        let n = input.len();
        let perm_features =
            Array2::from_shape_fn((n, 3), |(i, j)| input.features()[(n - 1 - i, j)]);
        let permuted = FeatureSet::new(perm_points, perm_features).unwrap();
        for mode in [ConvMode::Exact, ConvMode::Truncated] {
            let a = extend_conv_restrict(&input, &targets, &params, mode).unwrap();
            let b = extend_conv_restrict(&permuted, &targets, &params, mode).unwrap();
            for (x, y) in a.features().iter().zip(b.features().iter()) {
                assert_relative_eq!(x, y, max_relative = 1e-12, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn truncated_mode_tracks_exact_mode() {
        // Positive weights and features keep the outputs away from
        // cancellation, so the per-term truncation bound is visible as a
        // small relative error.
        let points = random_points(60, 21);
        let mut rng = stream_rng(22, Stream::ParamInit, 0);
        let features = Array2::from_shape_fn((60, 2), |_| rng.random::<f64>() + 0.5);
        let input = FeatureSet::new(points, features).unwrap();
        let targets = random_points(20, 23);
        let geometry = KernelGeometry::new(0.01).unwrap();
        let params = LayerParams::from_fn(2, 2, geometry, |_, _, _| rng.random::<f64>() + 0.5)
            .unwrap();
        let exact = extend_conv_restrict(&input, &targets, &params, ConvMode::Exact).unwrap();
        let cut = extend_conv_restrict(&input, &targets, &params, ConvMode::Truncated).unwrap();
        for (a, b) in exact.features().iter().zip(cut.features().iter()) {
            assert_relative_eq!(a, b, max_relative = 2e-3);
        }
    }

    #[test]
    fn backward_matches_central_differences() {
        let input = random_features(random_points(12, 24), 2, 25);
        let targets = random_points(7, 26);
        let params = random_layer(2, 3, 0.04, 27);
        let plan = plan_pairs(input.points(), &targets, params.geometry(), ConvMode::Truncated);
        // Loss = weighted sum of outputs, with fixed arbitrary weights.
        let mut rng = stream_rng(28, Stream::ParamInit, 0);
        let loss_w = Array2::from_shape_fn((7, 3), |_| rng.random::<f64>() * 2.0 - 1.0);
        let loss = |features: &Array2<f64>, params: &LayerParams<f64>| -> f64 {
            let out = conv_forward(
                input.points(),
                features,
                &targets,
                params,
                &plan,
                ConvMode::Truncated,
            );
            (&out * &loss_w).sum()
        };
        let grads = conv_backward(
            input.points(),
            input.features(),
            &targets,
            &params,
            &plan,
            ConvMode::Truncated,
            &loss_w,
        );
        let h = 1e-5;
        // Feature gradients.
        for idx in [(0usize, 0usize), (3, 1), (11, 0)] {
            let mut plus = input.features().clone();
            plus[idx] += h;
            let mut minus = input.features().clone();
            minus[idx] -= h;
            let fd = (loss(&plus, &params) - loss(&minus, &params)) / (2.0 * h);
            assert_relative_eq!(grads.features[idx], fd, max_relative = 1e-6, epsilon = 1e-9);
        }
        // Weight gradients, probing the packed layout through the
        // (j, k, m) accessor.
        for (j, k, m) in [(0usize, 0usize, 0usize), (1, 2, 13), (0, 1, 26)] {
            let mut plus = params.clone();
            plus.set_weight(j, k, m, plus.weight(j, k, m) + h);
            let mut minus = params.clone();
            minus.set_weight(j, k, m, minus.weight(j, k, m) - h);
            let fd = (loss(input.features(), &plus) - loss(input.features(), &minus)) / (2.0 * h);
            let col = m * 3 + k;
            assert_relative_eq!(grads.weights[(j, col)], fd, max_relative = 1e-6, epsilon = 1e-9);
        }
        // Bias gradient is the column sum of the output gradient.
        for k in 0..3 {
            assert_relative_eq!(grads.bias[k], loss_w.column(k).sum(), max_relative = 1e-12);
        }
    }
}
