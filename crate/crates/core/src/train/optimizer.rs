//! Adam optimizer over the network's flattened parameter vector.

use crate::error::{Error, Result};
use crate::occnet::NetworkParams;
use crate::scalar::Real;

/// Adam hyper-parameters (the moment decay rates and the denominator
/// guard).
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

/// First and second gradient moments, flattened in the same order as
/// [`visit_tensors_mut`] walks the parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState<T: Real> {
    m: Vec<T>,
    v: Vec<T>,
    step: usize,
}

impl<T: Real> AdamState<T> {
    pub fn new(parameter_count: usize) -> Self {
        Self {
            m: vec![T::zero(); parameter_count],
            v: vec![T::zero(); parameter_count],
            step: 0,
        }
    }

    pub fn from_parts(m: Vec<T>, v: Vec<T>, step: usize) -> Result<Self> {
        if m.len() != v.len() {
            return Err(Error::CheckpointMismatch(format!(
                "optimizer moments disagree: {} vs {}",
                m.len(),
                v.len()
            )));
        }
        Ok(Self { m, v, step })
    }

    pub fn len(&self) -> usize {
        self.m.len()
    }

    pub fn is_empty(&self) -> bool {
        self.m.is_empty()
    }

    pub fn step_count(&self) -> usize {
        self.step
    }

    pub fn first_moment(&self) -> &[T] {
        &self.m
    }

    pub fn second_moment(&self) -> &[T] {
        &self.v
    }

    /// One Adam update over a flat gradient, applied in-place to a flat
    /// parameter walk.
    pub fn apply(
        &mut self,
        params: &mut NetworkParams<T>,
        gradient: &[T],
        learning_rate: T,
        config: &AdamConfig,
    ) {
        assert_eq!(gradient.len(), self.m.len(), "gradient length mismatch");
        self.step += 1;
        let b1 = T::of(config.beta1);
        let b2 = T::of(config.beta2);
        let eps = T::of(config.epsilon);
        let t = self.step as i32;
        let bias1 = T::one() - b1.powi(t);
        let bias2 = T::one() - b2.powi(t);
        let mut offset = 0;
        visit_tensors_mut(params, |tensor| {
            let len = tensor.len();
            for (value, &g) in tensor.iter_mut().zip(&gradient[offset..offset + len]) {
                let m = &mut self.m[offset];
                let v = &mut self.v[offset];
                *m = b1 * *m + (T::one() - b1) * g;
                *v = b2 * *v + (T::one() - b2) * g * g;
                let m_hat = *m / bias1;
                let v_hat = *v / bias2;
                *value -= learning_rate * m_hat / (v_hat.sqrt() + eps);
                offset += 1;
            }
        });
        debug_assert_eq!(offset, self.m.len());
    }
}

/// Walk every trainable tensor of the network as a mutable flat slice, in
/// a fixed order: per convolution block the packed weights then the bias,
/// then per classifier layer the weights then the bias. Gradient
/// flattening and checkpoint array order both follow this walk.
pub fn visit_tensors_mut<T: Real>(params: &mut NetworkParams<T>, mut f: impl FnMut(&mut [T])) {
    for block in params.blocks_mut() {
        f(block
            .packed_weights_mut()
            .as_slice_mut()
            .expect("packed weights are contiguous"));
        f(block.bias_mut());
    }
    for layer in params.classifier_mut() {
        f(layer
            .weights
            .as_slice_mut()
            .expect("dense weights are contiguous"));
        f(&mut layer.bias);
    }
}

/// Read-only version of the same walk.
pub fn visit_tensors<T: Real>(params: &NetworkParams<T>, mut f: impl FnMut(&[T])) {
    for block in params.blocks() {
        f(block
            .packed_weights()
            .as_slice()
            .expect("packed weights are contiguous"));
        f(block.bias());
    }
    for layer in params.classifier() {
        f(layer.weights.as_slice().expect("dense weights are contiguous"));
        f(&layer.bias);
    }
}

#[cfg(test)]
mod tests {
    use approx::assert_relative_eq;

    use crate::occnet::NetworkConfig;

    use super::*;

    fn tiny_params() -> NetworkParams<f64> {
        let cfg = NetworkConfig {
            input_size: 10,
            blocks: vec![crate::occnet::BlockConfig { points: 10, depth: 2 }],
            classifier_hidden: vec![3],
            width_constant: 1.0,
        };
        NetworkParams::init(cfg, 1).unwrap()
    }

    #[test]
    fn tensor_walk_covers_every_parameter_once() {
        let mut params = tiny_params();
        let expect = params.parameter_count();
        let mut seen = 0;
        visit_tensors_mut(&mut params, |t| seen += t.len());
        assert_eq!(seen, expect);
        let mut seen_ro = 0;
        visit_tensors(&params, |t| seen_ro += t.len());
        assert_eq!(seen_ro, expect);
    }

    #[test]
    fn first_step_moves_by_roughly_the_learning_rate() {
        // With bias correction, Adam's first update is
        // lr * g / (|g| + eps) = lr * sign(g) for any nonzero gradient.
        let mut params = tiny_params();
        let before: Vec<f64> = {
            let mut v = Vec::new();
            visit_tensors(&params, |t| v.extend_from_slice(t));
            v
        };
        let n = params.parameter_count();
        let gradient: Vec<f64> = (0..n)
            .map(|i| if i % 2 == 0 { 0.3 } else { -1.7 })
            .collect();
        let mut state = AdamState::new(n);
        let lr = 1e-3;
        state.apply(&mut params, &gradient, lr, &AdamConfig::default());
        let mut after = Vec::new();
        visit_tensors(&params, |t| after.extend_from_slice(t));
        for i in 0..n {
            let expect = before[i] - lr * gradient[i].signum();
            assert_relative_eq!(after[i], expect, epsilon = 1e-9);
        }
        assert_eq!(state.step_count(), 1);
    }

    #[test]
    fn adam_converges_on_a_quadratic() {
        // Minimize 0.5 * sum(theta^2) directly through the walk; the
        // gradient is theta itself.
        let mut params = tiny_params();
        let n = params.parameter_count();
        let mut state = AdamState::new(n);
        let cfg = AdamConfig::default();
        for _ in 0..2000 {
            let mut gradient = Vec::with_capacity(n);
            visit_tensors(&params, |t| gradient.extend_from_slice(t));
            state.apply(&mut params, &gradient, 0.01, &cfg);
        }
        let mut norm2 = 0.0;
        visit_tensors(&params, |t| norm2 += t.iter().map(|x| x * x).sum::<f64>());
        assert!(norm2 < 1e-6, "residual norm^2 {norm2}");
    }

    #[test]
    fn zero_learning_rate_changes_nothing() {
        let mut params = tiny_params();
        let reference = params.clone();
        let n = params.parameter_count();
        let gradient = vec![0.5; n];
        let mut state = AdamState::new(n);
        for _ in 0..3 {
            state.apply(&mut params, &gradient, 0.0, &AdamConfig::default());
        }
        assert_eq!(params, reference);
    }
}
