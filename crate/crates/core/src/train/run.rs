//! Minibatch training over a corpus of sampled shapes.

use std::path::PathBuf;
use std::time::Instant;

use ndarray::Array2;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::occnet::{
    evaluate_taped, loss_from_logits, softmax_rows, NetworkParams, TapedEvaluation,
};
use crate::pcnn::ConvMode;
use crate::scalar::Real;
use crate::seed::{stream_rng, Stream};
use crate::shapegen::TrainingSample;

use super::checkpoint::{save_checkpoint, Checkpoint};
use super::optimizer::{AdamConfig, AdamState};

/// Optimization schedule and bookkeeping knobs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    /// Clouds per optimizer step.
    pub batch_size: usize,
    /// Queries drawn per cloud per step from the stored query set.
    pub queries_per_cloud: usize,
    pub learning_rate: f64,
    pub adam: AdamConfig,
    pub epochs: usize,
    /// Cosine-decay the learning rate to zero over the planned steps.
    pub cosine_decay: bool,
    /// Steps between validation passes; zero disables them.
    pub validation_every: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            batch_size: 8,
            queries_per_cloud: 512,
            learning_rate: 1e-3,
            adam: AdamConfig::default(),
            epochs: 10,
            cosine_decay: false,
            validation_every: 0,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::InvalidSpec("batch_size must be at least 1".into()));
        }
        if self.queries_per_cloud == 0 {
            return Err(Error::InvalidSpec("queries_per_cloud must be at least 1".into()));
        }
        if !(self.learning_rate > 0.0) {
            return Err(Error::InvalidSpec("learning_rate must be positive".into()));
        }
        if self.epochs == 0 {
            return Err(Error::InvalidSpec("epochs must be at least 1".into()));
        }
        Ok(())
    }
}

/// Everything that advances during training; checkpoints snapshot exactly
/// this plus the configs.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainState<T: Real> {
    pub params: NetworkParams<T>,
    pub optimizer: AdamState<T>,
    /// Completed epochs.
    pub epoch: usize,
    /// Completed optimizer steps across all epochs.
    pub step: usize,
}

impl<T: Real> TrainState<T> {
    pub fn fresh(params: NetworkParams<T>) -> Self {
        let count = params.parameter_count();
        Self {
            params,
            optimizer: AdamState::new(count),
            epoch: 0,
            step: 0,
        }
    }
}

/// One JSON-lines log record. Validation fields appear on steps where a
/// validation pass ran.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainLogEntry {
    pub step: usize,
    pub epoch: usize,
    pub loss: f64,
    pub lr: f64,
    /// Seconds since the run started. Not reproducible across runs;
    /// comparisons of logs should ignore it.
    pub wall_time: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub validation_loss: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub validation_accuracy: Option<f64>,
}

/// Run-level extras that are not part of the optimization schedule.
#[derive(Debug, Clone, Default)]
pub struct TrainOptions {
    /// Where to write a diagnostic checkpoint if the loss turns non-finite.
    pub diagnostic_checkpoint: Option<PathBuf>,
    /// Recorded in checkpoints so a resumed run can rebuild its corpus.
    pub corpus_seed: u64,
}

/// Advance `state` to `config.epochs` completed epochs over the corpus,
/// appending one log entry per optimizer step. Deterministic given the
/// seeds: epoch shuffles, query subsampling, and gradient reduction order
/// are all derived from (config.seed, counters), never from run history.
pub fn train<T: Real>(
    corpus: &[TrainingSample<T>],
    validation: &[TrainingSample<T>],
    state: &mut TrainState<T>,
    config: &TrainConfig,
    options: &TrainOptions,
    log: &mut Vec<TrainLogEntry>,
) -> Result<()> {
    config.validate()?;
    if corpus.is_empty() {
        return Err(Error::InvalidSpec("training corpus is empty".into()));
    }
    let started = Instant::now();
    let batches_per_epoch = corpus.len().div_ceil(config.batch_size);
    let planned_steps = batches_per_epoch * config.epochs;

    while state.epoch < config.epochs {
        let order = epoch_order(corpus.len(), config.seed, state.epoch);
        for batch_ids in order.chunks(config.batch_size) {
            if !state.params.standardization().calibrated {
                calibrate_standardization(state, corpus, batch_ids, config)?;
            }
            let lr = if config.cosine_decay {
                let progress = state.step as f64 / planned_steps.max(1) as f64;
                config.learning_rate * 0.5 * (1.0 + (std::f64::consts::PI * progress).cos())
            } else {
                config.learning_rate
            };

            let (batch_loss, gradient) = batch_step(state, corpus, batch_ids, config)?;
            if !batch_loss.is_finite() {
                if let Some(path) = &options.diagnostic_checkpoint {
                    let snapshot = Checkpoint {
                        state: state.clone(),
                        train_config: config.clone(),
                        corpus_seed: options.corpus_seed,
                    };
                    save_checkpoint(path, &snapshot)?;
                }
                return Err(Error::NonFiniteLoss { step: state.step });
            }
            state
                .optimizer
                .apply(&mut state.params, &gradient, T::of(lr), &config.adam);
            state.step += 1;

            let mut entry = TrainLogEntry {
                step: state.step,
                epoch: state.epoch,
                loss: batch_loss,
                lr,
                wall_time: started.elapsed().as_secs_f64(),
                validation_loss: None,
                validation_accuracy: None,
            };
            if config.validation_every > 0
                && !validation.is_empty()
                && state.step % config.validation_every == 0
            {
                let (vloss, vacc) = evaluate_classifier_sampled(
                    &state.params,
                    validation,
                    config.queries_per_cloud,
                    config.seed,
                )?;
                entry.validation_loss = Some(vloss.as_f64());
                entry.validation_accuracy = Some(vacc);
            }
            log.push(entry);
        }
        state.epoch += 1;
    }
    Ok(())
}

/// Fisher-Yates shuffle of cloud indices, derived from (seed, epoch).
fn epoch_order(count: usize, seed: u64, epoch: usize) -> Vec<usize> {
    let mut rng = stream_rng(seed, Stream::BatchOrder, epoch as u64);
    let mut order: Vec<usize> = (0..count).collect();
    for i in (1..count).rev() {
        order.swap(i, rand::Rng::random_range(&mut rng, 0..=i));
    }
    order
}

/// The query subset a cloud contributes at a given step.
fn step_queries<T: Real>(
    sample: &TrainingSample<T>,
    step: usize,
    cloud_index: usize,
    corpus_len: usize,
    config: &TrainConfig,
) -> (Vec<nalgebra::Point3<T>>, Vec<bool>) {
    let take = config.queries_per_cloud.min(sample.queries.len());
    let tag = (step * corpus_len + cloud_index) as u64;
    let mut rng = stream_rng(config.seed, Stream::QuerySubset, tag);
    let chosen = rand::seq::index::sample(&mut rng, sample.queries.len(), take);
    let mut queries = Vec::with_capacity(take);
    let mut labels = Vec::with_capacity(take);
    for idx in chosen {
        queries.push(sample.queries[idx]);
        labels.push(sample.labels[idx]);
    }
    (queries, labels)
}

/// Forward/backward over one batch. Returns the mean loss and the flat
/// gradient (mean over clouds). Clouds evaluate in parallel; the
/// reduction runs in batch order so results do not depend on thread
/// scheduling.
pub(crate) fn batch_step<T: Real>(
    state: &TrainState<T>,
    corpus: &[TrainingSample<T>],
    batch_ids: &[usize],
    config: &TrainConfig,
) -> Result<(f64, Vec<T>)> {
    let per_cloud: Vec<Result<(T, Vec<T>)>> = batch_ids
        .par_iter()
        .map(|&cloud_index| {
            let sample = &corpus[cloud_index];
            let (queries, labels) =
                step_queries(sample, state.step, cloud_index, corpus.len(), config);
            cloud_gradient(&state.params, sample, &queries, &labels)
        })
        .collect();

    let scale = T::one() / T::of_usize(batch_ids.len());
    let mut total_loss = T::zero();
    let mut gradient = vec![T::zero(); state.params.parameter_count()];
    for result in per_cloud {
        let (cloud_loss, cloud_grad) = result?;
        total_loss += cloud_loss * scale;
        for (acc, g) in gradient.iter_mut().zip(&cloud_grad) {
            *acc += *g * scale;
        }
    }
    Ok((total_loss.as_f64(), gradient))
}

/// Loss and flat parameter gradient for one cloud's query subset.
fn cloud_gradient<T: Real>(
    params: &NetworkParams<T>,
    sample: &TrainingSample<T>,
    queries: &[nalgebra::Point3<T>],
    labels: &[bool],
) -> Result<(T, Vec<T>)> {
    let eval = evaluate_taped(params, sample.cloud.points(), queries, ConvMode::Truncated)?;
    let logits = eval.tape.value(eval.logits);
    let cloud_loss = loss_from_logits(logits, labels)?;
    let probs = softmax_rows(logits);

    // d loss / d logits for mean cross-entropy after softmax.
    let n = T::of_usize(labels.len());
    let mut seed = probs;
    for (l, &interior) in labels.iter().enumerate() {
        seed[(l, usize::from(interior))] -= T::one();
    }
    seed.mapv_inplace(|v| v / n);

    let grads = eval.tape.backward(eval.logits, seed);
    let mut flat = Vec::with_capacity(params.parameter_count());
    for &pid in &eval.conv_ids {
        let g = grads.conv(pid);
        flat.extend_from_slice(g.weights.as_slice().expect("row-major gradient"));
        flat.extend_from_slice(&g.bias);
    }
    for &pid in &eval.dense_ids {
        let g = grads.dense(pid);
        flat.extend_from_slice(g.weights.as_slice().expect("row-major gradient"));
        flat.extend_from_slice(&g.bias);
    }
    debug_assert_eq!(flat.len(), params.parameter_count());
    Ok((cloud_loss, flat))
}

/// Set the classifier-input standardization from the query features the
/// first batch actually produces, so the head starts from roughly
/// zero-mean unit-variance inputs.
fn calibrate_standardization<T: Real>(
    state: &mut TrainState<T>,
    corpus: &[TrainingSample<T>],
    batch_ids: &[usize],
    config: &TrainConfig,
) -> Result<()> {
    let width = state.params.config().query_feature_width();
    let features: Vec<Array2<T>> = batch_ids
        .par_iter()
        .map(|&cloud_index| {
            let sample = &corpus[cloud_index];
            let (queries, _) =
                step_queries(sample, state.step, cloud_index, corpus.len(), config);
            evaluate_taped(&state.params, sample.cloud.points(), &queries, ConvMode::Truncated)
                .map(|eval: TapedEvaluation<T>| eval.tape.value(eval.query_features).clone())
        })
        .collect::<Result<_>>()?;

    let total_rows: usize = features.iter().map(|f| f.nrows()).sum();
    let n = T::of_usize(total_rows);
    let mut mean = vec![T::zero(); width];
    for f in &features {
        for row in f.rows() {
            for (k, v) in row.iter().enumerate() {
                mean[k] += *v / n;
            }
        }
    }
    let mut sd = vec![T::zero(); width];
    for f in &features {
        for row in f.rows() {
            for (k, v) in row.iter().enumerate() {
                let d = *v - mean[k];
                sd[k] += d * d / n;
            }
        }
    }
    for v in &mut sd {
        *v = v.sqrt();
    }
    state.params.standardization_mut().calibrate(&mean, &sd);
    Ok(())
}

/// Mean cross-entropy and query accuracy (threshold 0.5) over every
/// stored query of every sample.
pub fn evaluate_classifier<T: Real>(
    params: &NetworkParams<T>,
    corpus: &[TrainingSample<T>],
) -> Result<(T, f64)> {
    evaluate_on(params, corpus, |_, sample| {
        (sample.queries.clone(), sample.labels.clone())
    })
}

/// Validation on a per-cloud query subsample (cadence passes during
/// training); deterministic in (seed, cloud index).
pub fn evaluate_classifier_sampled<T: Real>(
    params: &NetworkParams<T>,
    corpus: &[TrainingSample<T>],
    queries_per_cloud: usize,
    seed: u64,
) -> Result<(T, f64)> {
    evaluate_on(params, corpus, |cloud_index, sample| {
        let take = queries_per_cloud.min(sample.queries.len());
        let mut rng = stream_rng(seed, Stream::MetricSamples, cloud_index as u64);
        let chosen = rand::seq::index::sample(&mut rng, sample.queries.len(), take);
        let mut queries = Vec::with_capacity(take);
        let mut labels = Vec::with_capacity(take);
        for idx in chosen {
            queries.push(sample.queries[idx]);
            labels.push(sample.labels[idx]);
        }
        (queries, labels)
    })
}

fn evaluate_on<T: Real>(
    params: &NetworkParams<T>,
    corpus: &[TrainingSample<T>],
    select: impl Fn(usize, &TrainingSample<T>) -> (Vec<nalgebra::Point3<T>>, Vec<bool>) + Sync,
) -> Result<(T, f64)> {
    if corpus.is_empty() {
        return Err(Error::InvalidSpec("evaluation corpus is empty".into()));
    }
    let per_cloud: Vec<Result<(T, usize, usize)>> = corpus
        .par_iter()
        .enumerate()
        .map(|(cloud_index, sample)| {
            let (queries, labels) = select(cloud_index, sample);
            let eval =
                evaluate_taped(params, sample.cloud.points(), &queries, ConvMode::Truncated)?;
            let logits = eval.tape.value(eval.logits);
            let nll = loss_from_logits(logits, &labels)? * T::of_usize(labels.len());
            let probs = softmax_rows(logits);
            let correct = labels
                .iter()
                .enumerate()
                .filter(|&(l, &interior)| (probs[(l, 1)] >= T::of(0.5)) == interior)
                .count();
            Ok((nll, correct, labels.len()))
        })
        .collect();

    let mut total_nll = T::zero();
    let mut total_correct = 0usize;
    let mut total_queries = 0usize;
    for result in per_cloud {
        let (nll, correct, count) = result?;
        total_nll += nll;
        total_correct += correct;
        total_queries += count;
    }
    Ok((
        total_nll / T::of_usize(total_queries),
        total_correct as f64 / total_queries as f64,
    ))
}

/// Quick descent-direction probe used by tests: loss of one frozen batch
/// under the current parameters.
pub fn frozen_batch_loss<T: Real>(
    state: &TrainState<T>,
    corpus: &[TrainingSample<T>],
    batch_ids: &[usize],
    config: &TrainConfig,
) -> Result<f64> {
    let per_cloud: Vec<Result<T>> = batch_ids
        .par_iter()
        .map(|&cloud_index| {
            let sample = &corpus[cloud_index];
            let (queries, labels) =
                step_queries(sample, state.step, cloud_index, corpus.len(), config);
            let eval = evaluate_taped(
                &state.params,
                sample.cloud.points(),
                &queries,
                ConvMode::Truncated,
            )?;
            loss_from_logits(eval.tape.value(eval.logits), &labels)
        })
        .collect();
    let mut total = 0.0;
    for r in per_cloud {
        total += r?.as_f64();
    }
    Ok(total / batch_ids.len() as f64)
}
