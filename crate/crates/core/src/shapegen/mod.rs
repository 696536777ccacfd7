//! Procedural watertight shape corpus: parametric solids with analytic
//! occupancy, tessellation, training-sample generation, and on-disk
//! corpus management.

mod corpus;
mod sample;
mod spec;
mod tessellate;

pub use corpus::{
    generate_corpus, load_manifest, load_sample, random_shape, save_sample, CorpusConfig,
    CorpusManifest, ShapeEntry, SPLITS,
};
pub use sample::{make_training_sample, SamplingConfig, TrainingSample, UnionSurfaceSampler};
pub use spec::{occupancy_oracle, Pose, PosedPart, ShapeSpec};
pub use tessellate::{
    composite_ground_truth_mesh, make_primitive, part_meshes, surface_mesh, DEFAULT_TESSELLATION,
};
