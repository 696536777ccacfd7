//! A small reverse-mode tape over feature matrices.
//!
//! Networks here are modest dataflow graphs over `L x K` matrices, so the
//! tape records whole operations (convolution layers, pooling, dense
//! layers, activations) rather than scalar arithmetic. Each op knows how
//! to push a gradient matrix back to its inputs; convolution layers
//! recompute their kernel values from the stored pair plan instead of
//! caching them, keeping memory proportional to the activations.

use nalgebra::Point3;
use ndarray::{concatenate, Array2, Axis};

use crate::error::{Error, Result};
use crate::scalar::Real;

use super::conv::{conv_backward, conv_forward, plan_pairs, LayerParams};
use super::fps::{point_pool, pool_backward, PoolAssignment};
use super::kernel::ConvMode;
use super::pairs::PairPlan;

/// Handle to a value (an `N x K` feature matrix) on the tape.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ValueId(usize);

/// Handle to a parameter block registered with the tape; gradients are
/// reported per block after the backward pass.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ParamId(usize);

enum Op<T: Real> {
    /// Input features; gradient may be requested but goes nowhere.
    Leaf,
    /// Extend-convolve-restrict from `input` onto `targets`.
    ConvRestrict {
        input: ValueId,
        params: ParamId,
        source_points: Vec<Point3<T>>,
        targets: Vec<Point3<T>>,
        plan: PairPlan,
        mode: ConvMode,
    },
    /// Elementwise max(x, 0).
    Relu { input: ValueId },
    /// Voronoi max pooling onto a subset of the input's points.
    MaxPool {
        input: ValueId,
        assignment: PoolAssignment,
    },
    /// Column-wise concatenation of same-height matrices.
    ConcatCols { inputs: Vec<ValueId> },
    /// Fully connected layer: `x W + b` per row.
    Dense { input: ValueId, params: ParamId },
    /// Per-column affine map with constant coefficients (feature
    /// standardization); not trained. Only the scale matters to the
    /// backward pass.
    ScaleShift { input: ValueId, scale: Vec<T> },
}

/// Gradients for one convolution parameter block.
pub struct ConvParamGrads<T: Real> {
    /// Packed like [`LayerParams::packed_weights`].
    pub weights: Array2<T>,
    pub bias: Vec<T>,
}

/// Gradients for one dense parameter block.
pub struct DenseParamGrads<T: Real> {
    pub weights: Array2<T>,
    pub bias: Vec<T>,
}

enum ParamBlock<'p, T: Real> {
    Conv(&'p LayerParams<T>),
    Dense { weights: &'p Array2<T>, bias: &'p [T] },
}

/// Accumulated parameter gradients from one backward pass, indexed by the
/// [`ParamId`]s handed out during the forward pass.
pub struct Gradients<T: Real> {
    conv: Vec<Option<ConvParamGrads<T>>>,
    dense: Vec<Option<DenseParamGrads<T>>>,
    leaves: Vec<Option<Array2<T>>>,
}

impl<T: Real> Gradients<T> {
    pub fn conv(&self, id: ParamId) -> &ConvParamGrads<T> {
        self.conv[id.0].as_ref().expect("not a convolution block")
    }

    pub fn dense(&self, id: ParamId) -> &DenseParamGrads<T> {
        self.dense[id.0].as_ref().expect("not a dense block")
    }

    /// Gradient with respect to a leaf's features, if it received any.
    pub fn leaf(&self, id: ValueId) -> Option<&Array2<T>> {
        self.leaves[id.0].as_ref()
    }
}

/// Records a forward computation over feature matrices and replays it
/// backwards. Parameters are borrowed for the lifetime of the tape; the
/// tape itself owns activations and routing information.
pub struct Tape<'p, T: Real> {
    ops: Vec<Op<T>>,
    values: Vec<Array2<T>>,
    params: Vec<ParamBlock<'p, T>>,
}

impl<'p, T: Real> Tape<'p, T> {
    pub fn new() -> Self {
        Self {
            ops: Vec::new(),
            values: Vec::new(),
            params: Vec::new(),
        }
    }

    /// The current value of `id` (available during and after the forward
    /// pass).
    pub fn value(&self, id: ValueId) -> &Array2<T> {
        &self.values[id.0]
    }

    fn push(&mut self, op: Op<T>, value: Array2<T>) -> ValueId {
        self.ops.push(op);
        self.values.push(value);
        ValueId(self.values.len() - 1)
    }

    /// Register input features.
    pub fn leaf(&mut self, features: Array2<T>) -> ValueId {
        self.push(Op::Leaf, features)
    }

    /// Register a convolution parameter block.
    pub fn conv_params(&mut self, params: &'p LayerParams<T>) -> ParamId {
        self.params.push(ParamBlock::Conv(params));
        ParamId(self.params.len() - 1)
    }

    /// Register a dense parameter block (`in x out` weights, `out` bias).
    pub fn dense_params(&mut self, weights: &'p Array2<T>, bias: &'p [T]) -> ParamId {
        self.params.push(ParamBlock::Dense { weights, bias });
        ParamId(self.params.len() - 1)
    }

    fn conv_block(&self, id: ParamId) -> &'p LayerParams<T> {
        match self.params[id.0] {
            ParamBlock::Conv(p) => p,
            ParamBlock::Dense { .. } => panic!("parameter block is dense, not convolution"),
        }
    }

    fn dense_block(&self, id: ParamId) -> (&'p Array2<T>, &'p [T]) {
        match self.params[id.0] {
            ParamBlock::Dense { weights, bias } => (weights, bias),
            ParamBlock::Conv(_) => panic!("parameter block is convolution, not dense"),
        }
    }

    /// Extend-convolve-restrict `input` (features over `source_points`)
    /// onto `targets`.
    pub fn conv_restrict(
        &mut self,
        input: ValueId,
        source_points: &[Point3<T>],
        targets: &[Point3<T>],
        params: ParamId,
        mode: ConvMode,
    ) -> Result<ValueId> {
        let block = self.conv_block(params);
        let features = &self.values[input.0];
        if features.nrows() != source_points.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} feature rows for {} source points",
                features.nrows(),
                source_points.len()
            )));
        }
        if features.ncols() != block.in_features() {
            return Err(Error::DimensionMismatch(format!(
                "layer expects {} input channels, got {}",
                block.in_features(),
                features.ncols()
            )));
        }
        let plan = plan_pairs(source_points, targets, block.geometry(), mode);
        let out = conv_forward(source_points, features, targets, block, &plan, mode);
        Ok(self.push(
            Op::ConvRestrict {
                input,
                params,
                source_points: source_points.to_vec(),
                targets: targets.to_vec(),
                plan,
                mode,
            },
            out,
        ))
    }

    pub fn relu(&mut self, input: ValueId) -> ValueId {
        let out = self.values[input.0].mapv(|v| if v > T::zero() { v } else { T::zero() });
        self.push(Op::Relu { input }, out)
    }

    /// Max-pool `input` (features over `points`) onto the subset
    /// `selected`.
    pub fn max_pool(
        &mut self,
        input: ValueId,
        points: &[Point3<T>],
        selected: &[u32],
    ) -> Result<ValueId> {
        let set = super::conv::FeatureSet::new(points.to_vec(), self.values[input.0].clone())?;
        let (pooled, assignment) = point_pool(&set, selected)?;
        let (_, features) = pooled.into_parts();
        Ok(self.push(Op::MaxPool { input, assignment }, features))
    }

    /// Concatenate matrices with equal row counts along the column axis.
    pub fn concat_cols(&mut self, inputs: &[ValueId]) -> Result<ValueId> {
        if inputs.is_empty() {
            return Err(Error::InvalidSpec("concatenation needs inputs".into()));
        }
        let views: Vec<_> = inputs.iter().map(|id| self.values[id.0].view()).collect();
        let out = concatenate(Axis(1), &views)
            .map_err(|_| Error::InvalidSpec("concatenation rows disagree".into()))?;
        Ok(self.push(
            Op::ConcatCols {
                inputs: inputs.to_vec(),
            },
            out,
        ))
    }

    /// Fully connected layer over rows.
    pub fn dense(&mut self, input: ValueId, params: ParamId) -> Result<ValueId> {
        let (weights, bias) = self.dense_block(params);
        let x = &self.values[input.0];
        if x.ncols() != weights.nrows() {
            return Err(Error::DimensionMismatch(format!(
                "dense layer expects {} inputs, got {}",
                weights.nrows(),
                x.ncols()
            )));
        }
        let mut out = x.dot(weights);
        for mut row in out.rows_mut() {
            for (v, b) in row.iter_mut().zip(bias) {
                *v += *b;
            }
        }
        Ok(self.push(Op::Dense { input, params }, out))
    }

    /// Constant per-column affine map `x * scale + shift`.
    pub fn scale_shift(&mut self, input: ValueId, scale: &[T], shift: &[T]) -> Result<ValueId> {
        let x = &self.values[input.0];
        if scale.len() != x.ncols() || shift.len() != x.ncols() {
            return Err(Error::DimensionMismatch(format!(
                "standardization expects {} channels, got {} / {}",
                x.ncols(),
                scale.len(),
                shift.len()
            )));
        }
        let mut out = x.clone();
        for mut row in out.rows_mut() {
            for (k, v) in row.iter_mut().enumerate() {
                *v = *v * scale[k] + shift[k];
            }
        }
        Ok(self.push(
            Op::ScaleShift {
                input,
                scale: scale.to_vec(),
            },
            out,
        ))
    }

    /// Run the backward pass from `output`, seeded with `grad_output`
    /// (the loss gradient with respect to that value). Returns parameter
    /// gradients; blocks untouched by the graph get zero-shaped entries.
    pub fn backward(&self, output: ValueId, grad_output: Array2<T>) -> Gradients<T> {
        assert_eq!(
            grad_output.dim(),
            self.values[output.0].dim(),
            "seed gradient shape must match the output value"
        );
        let mut grads: Vec<Option<Array2<T>>> = vec![None; self.values.len()];
        grads[output.0] = Some(grad_output);

        let mut conv_grads: Vec<Option<ConvParamGrads<T>>> = Vec::new();
        let mut dense_grads: Vec<Option<DenseParamGrads<T>>> = Vec::new();
        conv_grads.resize_with(self.params.len(), || None);
        dense_grads.resize_with(self.params.len(), || None);

        let add_to = |slot: &mut Option<Array2<T>>, delta: Array2<T>| match slot {
            Some(acc) => *acc = &*acc + &delta,
            None => *slot = Some(delta),
        };

        for idx in (0..=output.0).rev() {
            let Some(grad) = grads[idx].take() else {
                continue;
            };
            match &self.ops[idx] {
                Op::Leaf => {
                    grads[idx] = Some(grad);
                }
                Op::ConvRestrict {
                    input,
                    params,
                    source_points,
                    targets,
                    plan,
                    mode,
                } => {
                    let block = self.conv_block(*params);
                    let result = conv_backward(
                        source_points,
                        &self.values[input.0],
                        targets,
                        block,
                        plan,
                        *mode,
                        &grad,
                    );
                    match &mut conv_grads[params.0] {
                        Some(acc) => {
                            acc.weights = &acc.weights + &result.weights;
                            for (a, b) in acc.bias.iter_mut().zip(&result.bias) {
                                *a += *b;
                            }
                        }
                        slot @ None => {
                            *slot = Some(ConvParamGrads {
                                weights: result.weights,
                                bias: result.bias,
                            });
                        }
                    }
                    add_to(&mut grads[input.0], result.features);
                }
                Op::Relu { input } => {
                    let x = &self.values[input.0];
                    let masked = ndarray::Zip::from(&grad)
                        .and(x)
                        .map_collect(|&g, &v| if v > T::zero() { g } else { T::zero() });
                    add_to(&mut grads[input.0], masked);
                }
                Op::MaxPool { input, assignment } => {
                    let source_count = self.values[input.0].nrows();
                    let back = pool_backward(assignment, source_count, &grad);
                    add_to(&mut grads[input.0], back);
                }
                Op::ConcatCols { inputs } => {
                    let mut offset = 0;
                    for id in inputs {
                        let width = self.values[id.0].ncols();
                        let slice = grad
                            .slice(ndarray::s![.., offset..offset + width])
                            .to_owned();
                        add_to(&mut grads[id.0], slice);
                        offset += width;
                    }
                }
                Op::Dense { input, params } => {
                    let (weights, _) = self.dense_block(*params);
                    let x = &self.values[input.0];
                    let grad_w = x.t().dot(&grad);
                    let grad_b: Vec<T> =
                        (0..grad.ncols()).map(|k| grad.column(k).sum()).collect();
                    match &mut dense_grads[params.0] {
                        Some(acc) => {
                            acc.weights = &acc.weights + &grad_w;
                            for (a, b) in acc.bias.iter_mut().zip(&grad_b) {
                                *a += *b;
                            }
                        }
                        slot @ None => {
                            *slot = Some(DenseParamGrads {
                                weights: grad_w,
                                bias: grad_b,
                            });
                        }
                    }
                    add_to(&mut grads[input.0], grad.dot(&weights.t()));
                }
                Op::ScaleShift { input, scale } => {
                    let mut back = grad.clone();
                    for mut row in back.rows_mut() {
                        for (k, v) in row.iter_mut().enumerate() {
                            *v *= scale[k];
                        }
                    }
                    add_to(&mut grads[input.0], back);
                }
            }
        }

        let leaves = grads
            .into_iter()
            .enumerate()
            .map(|(idx, g)| {
                if matches!(self.ops[idx], Op::Leaf) {
                    g
                } else {
                    None
                }
            })
            .collect();
        Gradients {
            conv: conv_grads,
            dense: dense_grads,
            leaves,
        }
    }
}

impl<T: Real> Default for Tape<'_, T> {
    fn default() -> Self {
        Self::new()
    }
}
