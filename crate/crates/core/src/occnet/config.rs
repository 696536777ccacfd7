//! Network layout description.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One convolution block: where its point-path output lives and how many
/// feature channels it produces.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BlockConfig {
    /// Point count of the block's output point set. Smaller than the
    /// block's input count means the block pools (shrinking stream),
    /// larger means it restricts onto a finer set from the shrinking
    /// stream (enlarging stream), equal means a bottleneck block.
    pub points: usize,
    /// Output feature channels (shared by the point path and the query
    /// restriction).
    pub depth: usize,
}

/// Size hyper-parameters of the occupancy network: a U-shaped stack of
/// dual-restriction convolution blocks followed by a fully connected
/// classifier over concatenated per-query features.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NetworkConfig {
    /// Expected input cloud size; clouds must be padded or subsampled to
    /// this upstream.
    pub input_size: usize,
    /// The convolution blocks in order.
    pub blocks: Vec<BlockConfig>,
    /// Hidden widths of the classifier head (each followed by a ReLU).
    pub classifier_hidden: Vec<usize>,
    /// Kernel width rule constant: a layer reading from `I` points uses
    /// `sigma^2 = width_constant / I`.
    pub width_constant: f64,
}

fn block(points: usize, depth: usize) -> BlockConfig {
    BlockConfig { points, depth }
}

impl Default for NetworkConfig {
    /// The full-size layout: point counts halving down to a 16-point
    /// bottleneck while depths double, then the mirror image back up,
    /// with skip concatenations between matching levels.
    fn default() -> Self {
        Self {
            input_size: 300,
            blocks: vec![
                block(256, 64),
                block(128, 128),
                block(16, 256),
                block(16, 256),
                block(128, 256),
                block(256, 128),
                block(300, 64),
            ],
            classifier_hidden: vec![128, 128],
            width_constant: 1.0,
        }
    }
}

impl NetworkConfig {
    /// A small layout with the same seven-block U shape, sized so that
    /// training a few epochs on a CPU stays in the minutes range. Used by
    /// resource-bounded tests and as a CLI preset.
    pub fn compact() -> Self {
        Self {
            input_size: 300,
            blocks: vec![
                block(128, 16),
                block(48, 32),
                block(12, 48),
                block(12, 48),
                block(48, 48),
                block(128, 32),
                block(300, 16),
            ],
            classifier_hidden: vec![64],
            width_constant: 1.0,
        }
    }

    /// Output point counts prefixed with the input size: the full point
    /// path.
    pub fn point_counts(&self) -> Vec<usize> {
        let mut counts = Vec::with_capacity(self.blocks.len() + 1);
        counts.push(self.input_size);
        counts.extend(self.blocks.iter().map(|b| b.points));
        counts
    }

    /// Source point count seen by each block (the previous block's output
    /// count), used by the kernel width rule.
    pub fn source_counts(&self) -> Vec<usize> {
        let counts = self.point_counts();
        counts[..counts.len() - 1].to_vec()
    }

    /// Width of the concatenated query feature vector (sum of block
    /// depths).
    pub fn query_feature_width(&self) -> usize {
        self.blocks.iter().map(|b| b.depth).sum()
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_size == 0 {
            return Err(Error::InvalidSpec("input_size must be positive".into()));
        }
        if self.blocks.is_empty() {
            return Err(Error::InvalidSpec("network needs at least one block".into()));
        }
        if self.blocks.iter().any(|b| b.points == 0 || b.depth == 0) {
            return Err(Error::InvalidSpec(
                "block point counts and depths must be positive".into(),
            ));
        }
        if !(self.width_constant > 0.0) {
            return Err(Error::InvalidSpec("width_constant must be positive".into()));
        }
        let counts = self.point_counts();
        // The enlarging stream must mirror the shrinking stream so that
        // every upsampling target is a point set the shrinking stream
        // produced (and skips line up): the count sequence reads the same
        // both ways and has a single valley.
        let reversed: Vec<usize> = counts.iter().rev().copied().collect();
        if counts != reversed {
            return Err(Error::InvalidSpec(format!(
                "point counts {counts:?} are not symmetric around the bottleneck"
            )));
        }
        let valley = counts
            .iter()
            .enumerate()
            .min_by_key(|&(_, c)| *c)
            .map(|(i, _)| i)
            .unwrap_or(0);
        let descending = counts[..=valley].windows(2).all(|w| w[0] >= w[1]);
        let ascending = counts[valley..].windows(2).all(|w| w[0] <= w[1]);
        if !descending || !ascending {
            return Err(Error::InvalidSpec(format!(
                "point counts {counts:?} must shrink to one bottleneck and grow back"
            )));
        }
        Ok(())
    }
}
