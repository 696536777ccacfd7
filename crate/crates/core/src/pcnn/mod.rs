//! Continuous convolution on point clouds.
//!
//! Point features become volumetric fields through Gaussian extension,
//! are convolved with a small learned kernel (27 Gaussian bumps on a
//! cubic offset grid), and are read back at arbitrary target points.
//! Because the convolution of two Gaussians has a closed form, the whole
//! pipeline collapses to direct pairwise evaluation; no voxelization is
//! involved, and target points need not coincide with source points.
//!
//! The submodules provide the kernel geometry and closed form
//! ([`kernel`]), pair enumeration ([`pairs`]), the layer itself and its
//! hand gradients ([`conv`]), farthest point sampling and max pooling
//! ([`fps`]), a quadrature reference implementation ([`quadrature`]), and
//! a small reverse-mode tape that composes these into trainable networks
//! ([`tape`]).

mod conv;
mod fps;
mod kernel;
mod pairs;
pub mod quadrature;
mod tape;

pub use conv::{
    conv_backward, conv_forward, extend_conv_restrict, plan_pairs, point_upsample, ConvGradients,
    FeatureSet, LayerParams,
};
pub use fps::{fps, fps_canonical, point_pool, pool_backward, PoolAssignment};
pub use kernel::{decode, ConvMode, KernelGeometry, CUTOFF_SIGMAS, KERNEL_COUNT};
pub use pairs::PairPlan;
pub use tape::{ConvParamGrads, DenseParamGrads, Gradients, ParamId, Tape, ValueId};
