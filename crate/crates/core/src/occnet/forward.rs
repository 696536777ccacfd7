//! Forward evaluation: the dual-restriction convolution stack and the
//! query classifier.
//!
//! The point path starts from a single all-ones channel over the cloud
//! and walks the configured U: shrinking blocks convolve at the current
//! points, apply ReLU, and max-pool onto a farthest-point subset;
//! bottleneck blocks convolve in place; enlarging blocks restrict the
//! convolution onto the matching shrinking-stream point set and
//! concatenate that level's stored features (skip connection). Every
//! block also restricts its convolution field at the query points with
//! the same kernels; those per-block query features are concatenated,
//! standardized, and classified by a small fully connected ReLU stack
//! into two logits per query (class 0 = exterior, class 1 = interior).

use nalgebra::Point3;
use ndarray::Array2;

use crate::error::{Error, Result};
use crate::geometry::PointSet;
use crate::pcnn::{fps_canonical, ConvMode, ParamId, Tape, ValueId};
use crate::scalar::Real;

use super::params::NetworkParams;

/// Query positions with optional ground-truth labels (true = interior).
#[derive(Debug, Clone, PartialEq)]
pub struct QueryBatch<T: Real> {
    queries: Vec<Point3<T>>,
    labels: Option<Vec<bool>>,
}

impl<T: Real> QueryBatch<T> {
    pub fn unlabeled(queries: Vec<Point3<T>>) -> Result<Self> {
        if queries.is_empty() {
            return Err(Error::InvalidSpec("query batch needs at least one query".into()));
        }
        Ok(Self {
            queries,
            labels: None,
        })
    }

    pub fn labeled(queries: Vec<Point3<T>>, labels: Vec<bool>) -> Result<Self> {
        if labels.len() != queries.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} labels for {} queries",
                labels.len(),
                queries.len()
            )));
        }
        let mut batch = Self::unlabeled(queries)?;
        batch.labels = Some(labels);
        Ok(batch)
    }

    pub fn len(&self) -> usize {
        self.queries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.queries.is_empty()
    }

    pub fn queries(&self) -> &[Point3<T>] {
        &self.queries
    }

    pub fn labels(&self) -> Option<&[bool]> {
        self.labels.as_deref()
    }
}

/// A recorded forward pass, ready for inspection or backpropagation.
pub struct TapedEvaluation<'p, T: Real> {
    pub tape: Tape<'p, T>,
    /// Concatenated per-block query features, before standardization.
    pub query_features: ValueId,
    /// Classifier output, one (exterior, interior) logit pair per query.
    pub logits: ValueId,
    /// Tape handles of the convolution blocks, in block order.
    pub conv_ids: Vec<ParamId>,
    /// Tape handles of the classifier layers, in order.
    pub dense_ids: Vec<ParamId>,
}

/// Run the network over one cloud and query set, recording the
/// computation on a tape.
pub fn evaluate_taped<'p, T: Real>(
    params: &'p NetworkParams<T>,
    cloud: &[Point3<T>],
    queries: &[Point3<T>],
    mode: ConvMode,
) -> Result<TapedEvaluation<'p, T>> {
    let config = params.config();
    if cloud.len() != config.input_size {
        return Err(Error::DimensionMismatch(format!(
            "cloud has {} points, network expects {}",
            cloud.len(),
            config.input_size
        )));
    }
    if queries.is_empty() {
        return Err(Error::InvalidSpec("at least one query is required".into()));
    }

    let mut tape = Tape::new();
    let conv_ids: Vec<ParamId> = params.blocks().iter().map(|b| tape.conv_params(b)).collect();
    let dense_ids: Vec<ParamId> = params
        .classifier()
        .iter()
        .map(|d| tape.dense_params(&d.weights, &d.bias))
        .collect();

    let mut cur_points: Vec<Point3<T>> = cloud.to_vec();
    let mut cur = tape.leaf(Array2::from_elem((cloud.len(), 1), T::one()));
    // Shrinking-stream outputs awaiting their enlarging consumer, from
    // coarse pools pushed last; point counts strictly decrease with
    // stack depth.
    let mut skips: Vec<(Vec<Point3<T>>, ValueId)> = Vec::new();
    let mut query_parts = Vec::with_capacity(config.blocks.len());

    let last = config.blocks.len() - 1;
    for (b, block) in config.blocks.iter().enumerate() {
        let pid = conv_ids[b];
        query_parts.push(tape.conv_restrict(cur, &cur_points, queries, pid, mode)?);
        if b == last {
            // The final block feeds only the classifier; its point-path
            // restriction would have no consumer.
            break;
        }
        match block.points.cmp(&cur_points.len()) {
            std::cmp::Ordering::Less => {
                let c = tape.conv_restrict(cur, &cur_points, &cur_points, pid, mode)?;
                let r = tape.relu(c);
                let sel = fps_canonical(&cur_points, block.points)?;
                let pooled = tape.max_pool(r, &cur_points, &sel)?;
                cur_points = sel.iter().map(|&i| cur_points[i as usize]).collect();
                skips.push((cur_points.clone(), pooled));
                cur = pooled;
            }
            std::cmp::Ordering::Equal => {
                let c = tape.conv_restrict(cur, &cur_points, &cur_points, pid, mode)?;
                cur = tape.relu(c);
            }
            std::cmp::Ordering::Greater => {
                let (target_points, skip) = if block.points == config.input_size {
                    (cloud.to_vec(), None)
                } else {
                    let idx = skips
                        .iter()
                        .position(|(pts, _)| pts.len() == block.points)
                        .ok_or_else(|| {
                            Error::InvalidSpec(format!(
                                "no shrinking level with {} points to enlarge onto",
                                block.points
                            ))
                        })?;
                    let (pts, id) = skips[idx].clone();
                    skips.truncate(idx);
                    (pts, Some(id))
                };
                let c = tape.conv_restrict(cur, &cur_points, &target_points, pid, mode)?;
                let r = tape.relu(c);
                cur = match skip {
                    Some(s) => tape.concat_cols(&[r, s])?,
                    None => r,
                };
                cur_points = target_points;
            }
        }
    }

    let query_features = tape.concat_cols(&query_parts)?;
    let standardize = params.standardization();
    let mut head = tape.scale_shift(query_features, &standardize.scale, &standardize.shift)?;
    for (d, did) in dense_ids.iter().enumerate() {
        head = tape.dense(head, *did)?;
        if d + 1 < dense_ids.len() {
            head = tape.relu(head);
        }
    }

    Ok(TapedEvaluation {
        tape,
        query_features,
        logits: head,
        conv_ids,
        dense_ids,
    })
}

/// Row-wise stable softmax.
pub fn softmax_rows<T: Real>(logits: &Array2<T>) -> Array2<T> {
    let mut out = logits.clone();
    for mut row in out.rows_mut() {
        let max = row.iter().copied().fold(T::of(f64::NEG_INFINITY), |a, b| {
            if b > a {
                b
            } else {
                a
            }
        });
        let mut sum = T::zero();
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            sum += *v;
        }
        for v in row.iter_mut() {
            *v /= sum;
        }
    }
    out
}

/// Per-query class probabilities, one `(exterior, interior)` row per
/// query; rows sum to one.
pub fn forward<T: Real>(
    params: &NetworkParams<T>,
    cloud: &PointSet<T>,
    queries: &QueryBatch<T>,
) -> Result<Array2<T>> {
    let eval = evaluate_taped(params, cloud.points(), queries.queries(), ConvMode::Truncated)?;
    Ok(softmax_rows(eval.tape.value(eval.logits)))
}

/// Mean negative log-likelihood of the true classes under `probs`
/// (labels: true = interior = column 1).
pub fn loss<T: Real>(probs: &Array2<T>, labels: &[bool]) -> Result<T> {
    if probs.nrows() != labels.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} probability rows for {} labels",
            probs.nrows(),
            labels.len()
        )));
    }
    if probs.ncols() != 2 {
        return Err(Error::DimensionMismatch(format!(
            "expected 2 classes, got {}",
            probs.ncols()
        )));
    }
    let mut total = T::zero();
    for (l, &interior) in labels.iter().enumerate() {
        let p = probs[(l, usize::from(interior))];
        total -= p.ln();
    }
    Ok(total / T::of_usize(labels.len()))
}

/// [`loss`] computed directly from logits via log-sum-exp, so a saturated
/// softmax yields the exact margin instead of `ln(0)`. Training uses this
/// form; it agrees with `loss(softmax_rows(logits), ..)` wherever the
/// latter is finite.
pub fn loss_from_logits<T: Real>(logits: &Array2<T>, labels: &[bool]) -> Result<T> {
    if logits.nrows() != labels.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} logit rows for {} labels",
            logits.nrows(),
            labels.len()
        )));
    }
    if logits.ncols() != 2 {
        return Err(Error::DimensionMismatch(format!(
            "expected 2 classes, got {}",
            logits.ncols()
        )));
    }
    let mut total = T::zero();
    for (l, &interior) in labels.iter().enumerate() {
        let row = logits.row(l);
        let max = if row[0] > row[1] { row[0] } else { row[1] };
        let lse = max + ((row[0] - max).exp() + (row[1] - max).exp()).ln();
        total += lse - row[usize::from(interior)];
    }
    Ok(total / T::of_usize(labels.len()))
}

/// Occupancy decisions at the queries: interior when the interior
/// probability reaches `threshold` (ties count as interior, so the
/// default 0.5 maps the extraction iso-surface convention).
pub fn predict_occupancy<T: Real>(
    params: &NetworkParams<T>,
    cloud: &PointSet<T>,
    queries: &QueryBatch<T>,
    threshold: T,
) -> Result<Vec<bool>> {
    let probs = forward(params, cloud, queries)?;
    Ok(classify_probabilities(&probs, threshold))
}

/// Threshold interior probabilities (column 1); ties go to interior.
pub fn classify_probabilities<T: Real>(probs: &Array2<T>, threshold: T) -> Vec<bool> {
    probs
        .rows()
        .into_iter()
        .map(|row| row[1] >= threshold)
        .collect()
}

#[cfg(test)]
mod tests {
    use approx::assert_relative_eq;
    use nalgebra::Vector3;
    use rand::Rng as _;

    use crate::occnet::config::{BlockConfig, NetworkConfig};
    use crate::seed::{stream_rng, Stream};

    use super::*;

    fn tiny_config() -> NetworkConfig {
        let block = |points, depth| BlockConfig { points, depth };
        NetworkConfig {
            input_size: 40,
            blocks: vec![
                block(24, 6),
                block(8, 8),
                block(8, 8),
                block(24, 6),
                block(40, 4),
            ],
            classifier_hidden: vec![16],
            width_constant: 1.0,
        }
    }

    fn random_cloud(n: usize, tag: u64) -> Vec<Point3<f64>> {
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

    fn fixture() -> (NetworkParams<f64>, PointSet<f64>, QueryBatch<f64>) {
        let params = NetworkParams::init(tiny_config(), 11).unwrap();
        let cloud = PointSet::new(random_cloud(40, 70)).unwrap();
        let queries = QueryBatch::unlabeled(random_cloud(9, 71)).unwrap();
        (params, cloud, queries)
    }

    #[test]
    fn probabilities_are_a_valid_distribution() {
        let (params, cloud, queries) = fixture();
        let probs = forward(&params, &cloud, &queries).unwrap();
        assert_eq!(probs.dim(), (9, 2));
        for row in probs.rows() {
            assert!(row.iter().all(|p| p.is_finite() && *p >= 0.0 && *p <= 1.0));
            assert_relative_eq!(row[0] + row[1], 1.0, epsilon = 1e-9);
        }
    }

    #[test]
    fn permuting_the_cloud_leaves_probabilities_unchanged() {
        let (params, cloud, queries) = fixture();
        let baseline = forward(&params, &cloud, &queries).unwrap();
        let mut rng = stream_rng(72, Stream::InputSubset, 0);
        let mut permuted: Vec<Point3<f64>> = cloud.points().to_vec();
        for i in (1..permuted.len()).rev() {
            permuted.swap(i, rng.random_range(0..=i));
        }
        assert_ne!(permuted, cloud.points());
        let shuffled = forward(&params, &PointSet::new(permuted).unwrap(), &queries).unwrap();
        for (a, b) in baseline.iter().zip(shuffled.iter()) {
            assert_relative_eq!(a, b, epsilon = 1e-12);
        }
    }

    #[test]
    fn joint_translation_leaves_probabilities_unchanged() {
        let (params, cloud, queries) = fixture();
        let baseline = forward(&params, &cloud, &queries).unwrap();
        let shift = Vector3::new(0.1, -0.2, 0.05);
        let moved_cloud =
            PointSet::new(cloud.points().iter().map(|p| p + shift).collect()).unwrap();
        let moved_queries =
            QueryBatch::unlabeled(queries.queries().iter().map(|q| q + shift).collect()).unwrap();
        let moved = forward(&params, &moved_cloud, &moved_queries).unwrap();
        for (a, b) in baseline.iter().zip(moved.iter()) {
            assert_relative_eq!(a, b, epsilon = 1e-9);
        }
    }

    #[test]
    fn queries_are_independent_of_their_batch() {
        let (params, cloud, queries) = fixture();
        let batch = forward(&params, &cloud, &queries).unwrap();
        for (l, q) in queries.queries().iter().enumerate() {
            let single = QueryBatch::unlabeled(vec![*q]).unwrap();
            let alone = forward(&params, &cloud, &single).unwrap();
            assert_relative_eq!(alone[(0, 0)], batch[(l, 0)], epsilon = 1e-12);
            assert_relative_eq!(alone[(0, 1)], batch[(l, 1)], epsilon = 1e-12);
        }
    }

    #[test]
    fn wrong_cloud_size_is_rejected() {
        let (params, _, queries) = fixture();
        let small = PointSet::new(random_cloud(17, 73)).unwrap();
        assert!(forward(&params, &small, &queries).is_err());
    }

    #[test]
    fn loss_matches_hand_computation() {
        let probs = Array2::from_shape_vec(
            (3, 2),
            vec![
                0.9, 0.1, //
                0.25, 0.75, //
                0.5, 0.5,
            ],
        )
        .unwrap();
        let labels = [false, true, true];
        let expect = -(0.9f64.ln() + 0.75f64.ln() + 0.5f64.ln()) / 3.0;
        assert_relative_eq!(loss(&probs, &labels).unwrap(), expect, max_relative = 1e-12);

        let perfect = Array2::from_shape_vec((2, 2), vec![1.0, 0.0, 0.0, 1.0]).unwrap();
        assert_eq!(loss(&perfect, &[false, true]).unwrap(), 0.0);

        let half = Array2::from_elem((4, 2), 0.5);
        assert_relative_eq!(
            loss(&half, &[true, false, true, false]).unwrap(),
            std::f64::consts::LN_2,
            max_relative = 1e-12
        );

        assert!(loss(&half, &[true]).is_err());
    }

    #[test]
    fn logit_loss_matches_probability_loss_and_survives_saturation() {
        let mut rng = stream_rng(41, Stream::ParamInit, 6);
        let logits: Array2<f64> =
            Array2::from_shape_fn((16, 2), |_| rng.random::<f64>() * 6.0 - 3.0);
        let labels: Vec<bool> = (0..16).map(|_| rng.random::<bool>()).collect();
        let via_probs = loss(&softmax_rows(&logits), &labels).unwrap();
        let via_logits = loss_from_logits(&logits, &labels).unwrap();
        assert_relative_eq!(via_logits, via_probs, max_relative = 1e-12);

        // Saturated rows: ln(softmax) underflows to -inf, the logit form
        // reports the exact margin.
        let hard: Array2<f64> = Array2::from_shape_vec((1, 2), vec![2000.0, 0.0]).unwrap();
        assert!(loss(&softmax_rows(&hard), &[true]).unwrap().is_infinite());
        assert_relative_eq!(
            loss_from_logits(&hard, &[true]).unwrap(),
            2000.0,
            max_relative = 1e-12
        );

        assert!(loss_from_logits(&hard, &[true, false]).is_err());
    }

    #[test]
    fn classification_breaks_ties_toward_interior() {
        let probs = Array2::from_shape_vec(
            (3, 2),
            vec![
                0.1, 0.9, //
                0.9, 0.1, //
                0.5, 0.5,
            ],
        )
        .unwrap();
        assert_eq!(
            classify_probabilities(&probs, 0.5),
            vec![true, false, true]
        );
    }

    #[test]
    fn softmax_is_stable_for_large_logits() {
        let logits: Array2<f64> =
            Array2::from_shape_vec((2, 2), vec![1000.0, 0.0, -1000.0, -999.0]).unwrap();
        let probs = softmax_rows(&logits);
        assert!(probs.iter().all(|p| p.is_finite()));
        assert_relative_eq!(probs[(0, 0)], 1.0, epsilon = 1e-12);
        assert_relative_eq!(probs[(1, 0)] + probs[(1, 1)], 1.0, epsilon = 1e-12);
    }

    #[test]
    fn default_layout_runs_end_to_end() {
        let params = NetworkParams::<f64>::init(NetworkConfig::default(), 2).unwrap();
        let cloud = PointSet::new(random_cloud(300, 74)).unwrap();
        let queries = QueryBatch::unlabeled(random_cloud(4, 75)).unwrap();
        let probs = forward(&params, &cloud, &queries).unwrap();
        assert_eq!(probs.dim(), (4, 2));
        for row in probs.rows() {
            assert_relative_eq!(row[0] + row[1], 1.0, epsilon = 1e-9);
        }
    }
}
