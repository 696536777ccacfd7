//! Learned state of the occupancy network.

use ndarray::Array2;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::pcnn::{KernelGeometry, LayerParams, KERNEL_COUNT};
use crate::scalar::Real;
use crate::seed::{stream_rng, Stream};

use super::config::NetworkConfig;

/// One fully connected classifier layer.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseLayer<T: Real> {
    pub weights: Array2<T>,
    pub bias: Vec<T>,
}

impl<T: Real> DenseLayer<T> {
    pub fn in_features(&self) -> usize {
        self.weights.nrows()
    }

    pub fn out_features(&self) -> usize {
        self.weights.ncols()
    }
}

/// Per-channel affine map applied to the concatenated query features
/// before the classifier. Starts as the identity; training calibrates it
/// from the first batch so the classifier sees roughly unit-scale inputs.
#[derive(Debug, Clone, PartialEq)]
pub struct Standardization<T: Real> {
    pub scale: Vec<T>,
    pub shift: Vec<T>,
    pub calibrated: bool,
}

impl<T: Real> Standardization<T> {
    pub fn identity(width: usize) -> Self {
        Self {
            scale: vec![T::one(); width],
            shift: vec![T::zero(); width],
            calibrated: false,
        }
    }

    /// Set scale and shift so that a feature with the given per-channel
    /// mean and standard deviation maps to zero mean, unit deviation.
    /// Channels with tiny deviation are left centered but unscaled:
    /// amplifying a near-dead channel by `1/sd` would swamp the
    /// classifier with noise.
    pub fn calibrate(&mut self, mean: &[T], sd: &[T]) {
        let floor = T::of(1e-4);
        for k in 0..self.scale.len() {
            let s = if sd[k] > floor { T::one() / sd[k] } else { T::one() };
            self.scale[k] = s;
            self.shift[k] = -mean[k] * s;
        }
        self.calibrated = true;
    }
}

/// All learned parameters: one convolution block per config entry plus
/// the classifier head, with the input standardization between them.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkParams<T: Real> {
    config: NetworkConfig,
    blocks: Vec<LayerParams<T>>,
    classifier: Vec<DenseLayer<T>>,
    standardize: Standardization<T>,
}

/// Input channel count seen by each block: the previous block's depth,
/// plus the skip depth where an enlarging block's output was concatenated
/// with a shrinking-stream output at the same points.
pub(super) fn block_in_depths(config: &NetworkConfig) -> Vec<usize> {
    let counts = config.point_counts();
    let mut depths = Vec::with_capacity(config.blocks.len());
    let mut current = 1; // all-ones input channel
    for (b, block) in config.blocks.iter().enumerate() {
        depths.push(current);
        current = block.depth;
        if block.points > counts[b] && block.points != config.input_size {
            // Enlarging block landing on a shrinking level: the matching
            // shrinking block's output is concatenated after it.
            let skip = config
                .blocks
                .iter()
                .zip(&counts)
                .find(|(candidate, &source)| {
                    candidate.points == block.points && candidate.points < source
                })
                .map(|(candidate, _)| candidate.depth)
                .expect("validated config has a mirror level");
            current += skip;
        }
    }
    depths
}

impl<T: Real> NetworkParams<T> {
    /// Fresh parameters: convolution and dense weights drawn from
    /// zero-mean normals scaled by fan-in (kernel terms included), biases
    /// zero, standardization neutral.
    pub fn init(config: NetworkConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = stream_rng(seed, Stream::ParamInit, 0);
        let mut normal = move |sd: f64| -> T {
            let z: f64 = StandardNormal.sample(&mut rng);
            T::of(z * sd)
        };

        let source_counts = config.source_counts();
        let in_depths = block_in_depths(&config);
        let mut blocks = Vec::with_capacity(config.blocks.len());
        for (b, block) in config.blocks.iter().enumerate() {
            let geometry =
                KernelGeometry::for_point_count(source_counts[b], T::of(config.width_constant))?;
            let sd = 1.0 / ((in_depths[b] * KERNEL_COUNT) as f64).sqrt();
            blocks.push(LayerParams::from_fn(
                in_depths[b],
                block.depth,
                geometry,
                |_, _, _| normal(sd),
            )?);
        }

        let mut classifier = Vec::new();
        let mut width = config.query_feature_width();
        for &hidden in &config.classifier_hidden {
            classifier.push(dense_init(width, hidden, &mut normal));
            width = hidden;
        }
        classifier.push(dense_init(width, 2, &mut normal));

        let standardize = Standardization::identity(config.query_feature_width());
        Ok(Self {
            config,
            blocks,
            classifier,
            standardize,
        })
    }

    /// Assemble from already-built pieces (checkpoint loading); shapes
    /// must agree with the config.
    pub fn from_parts(
        config: NetworkConfig,
        blocks: Vec<LayerParams<T>>,
        classifier: Vec<DenseLayer<T>>,
        standardize: Standardization<T>,
    ) -> Result<Self> {
        config.validate()?;
        let in_depths = block_in_depths(&config);
        if blocks.len() != config.blocks.len() {
            return Err(Error::CheckpointMismatch(format!(
                "{} convolution blocks, config expects {}",
                blocks.len(),
                config.blocks.len()
            )));
        }
        for (b, layer) in blocks.iter().enumerate() {
            if layer.in_features() != in_depths[b] || layer.out_features() != config.blocks[b].depth
            {
                return Err(Error::CheckpointMismatch(format!(
                    "block {b} is {}x{}, config expects {}x{}",
                    layer.in_features(),
                    layer.out_features(),
                    in_depths[b],
                    config.blocks[b].depth
                )));
            }
        }
        let mut width = config.query_feature_width();
        if standardize.scale.len() != width || standardize.shift.len() != width {
            return Err(Error::CheckpointMismatch(
                "standardization width disagrees with block depths".into(),
            ));
        }
        let widths: Vec<usize> = config
            .classifier_hidden
            .iter()
            .copied()
            .chain([2])
            .collect();
        if classifier.len() != widths.len() {
            return Err(Error::CheckpointMismatch(format!(
                "{} classifier layers, config expects {}",
                classifier.len(),
                widths.len()
            )));
        }
        for (layer, &out) in classifier.iter().zip(&widths) {
            if layer.in_features() != width || layer.out_features() != out {
                return Err(Error::CheckpointMismatch(format!(
                    "classifier layer is {}x{}, config expects {}x{}",
                    layer.in_features(),
                    layer.out_features(),
                    width,
                    out
                )));
            }
            width = out;
        }
        Ok(Self {
            config,
            blocks,
            classifier,
            standardize,
        })
    }

    /// The same weights retargeted to clouds of `input_size` points: the
    /// first block's kernel width follows the reciprocal rule with the
    /// new source count, so denser input keeps the extended field at the
    /// magnitude the weights were trained for.
    pub fn with_input_size(&self, input_size: usize) -> Result<Self> {
        if input_size == 0 {
            return Err(Error::InvalidSpec("input_size must be positive".into()));
        }
        let mut adapted = self.clone();
        let mut config = self.config.clone();
        let last = config.blocks.len() - 1;
        config.blocks[last].points = input_size;
        config.input_size = input_size;
        config.validate()?;
        let source_counts = config.source_counts();
        for (b, layer) in adapted.blocks.iter_mut().enumerate() {
            let geometry = KernelGeometry::for_point_count(
                source_counts[b],
                T::of(config.width_constant),
            )?;
            *layer = layer.with_geometry(geometry);
        }
        adapted.config = config;
        Ok(adapted)
    }

    pub fn config(&self) -> &NetworkConfig {
        &self.config
    }

    pub fn blocks(&self) -> &[LayerParams<T>] {
        &self.blocks
    }

    pub fn blocks_mut(&mut self) -> &mut [LayerParams<T>] {
        &mut self.blocks
    }

    pub fn classifier(&self) -> &[DenseLayer<T>] {
        &self.classifier
    }

    pub fn classifier_mut(&mut self) -> &mut [DenseLayer<T>] {
        &mut self.classifier
    }

    pub fn standardization(&self) -> &Standardization<T> {
        &self.standardize
    }

    pub fn standardization_mut(&mut self) -> &mut Standardization<T> {
        &mut self.standardize
    }

    pub fn parameter_count(&self) -> usize {
        let conv: usize = self.blocks.iter().map(|b| b.parameter_count()).sum();
        let dense: usize = self
            .classifier
            .iter()
            .map(|d| d.weights.len() + d.bias.len())
            .sum();
        conv + dense
    }
}

fn dense_init<T: Real>(
    in_features: usize,
    out_features: usize,
    normal: &mut impl FnMut(f64) -> T,
) -> DenseLayer<T> {
    let sd = 1.0 / (in_features as f64).sqrt();
    DenseLayer {
        weights: Array2::from_shape_fn((in_features, out_features), |_| normal(sd)),
        bias: vec![T::zero(); out_features],
    }
}
