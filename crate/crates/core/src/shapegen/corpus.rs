//! Corpus assembly: random shapes, on-disk samples, and the manifest that
//! ties them together.
//!
//! Layout under the corpus root:
//!
//! ```text
//! corpus.json                    manifest: config + per-shape specs
//! train/0000/cloud.xyz           input cloud, one point per line
//! train/0000/queries.xyz         query positions, near block then far
//! train/0000/labels.txt          one 0/1 per query line
//! train/0000/sample.json         shape id, index, sampling config
//! validation/0000/... test/0000/...
//! ```

use std::fs;
use std::path::Path;

use nalgebra::Vector3;
use rand::Rng as _;
use rand_distr::UnitSphere;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{load_xyz, save_xyz, PointSet};
use crate::scalar::Real;
use crate::seed::{stream_rng, Rng, Stream};

use super::sample::{make_training_sample, SamplingConfig, TrainingSample};
use super::spec::{Pose, PosedPart, ShapeSpec};

/// Corpus-wide generation settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusConfig {
    pub seed: u64,
    pub train: usize,
    pub validation: usize,
    pub test: usize,
    /// Composites draw 1..=max_parts primitives.
    pub max_parts: usize,
    pub sampling: SamplingConfig,
}

impl Default for CorpusConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            train: 500,
            validation: 50,
            test: 50,
            max_parts: 4,
            sampling: SamplingConfig::default(),
        }
    }
}

impl CorpusConfig {
    pub fn validate(&self) -> Result<()> {
        if self.train == 0 || self.validation == 0 || self.test == 0 {
            return Err(Error::InvalidSpec("all corpus splits need >= 1 shape".into()));
        }
        if self.max_parts == 0 {
            return Err(Error::InvalidSpec("max_parts must be >= 1".into()));
        }
        self.sampling.validate()
    }
}

pub const SPLITS: [&str; 3] = ["train", "validation", "test"];

/// One shape in the manifest: its id (`split/index`), the directory of its
/// sample files relative to the corpus root, and the normalized spec that
/// ground-truth meshes are rebuilt from.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(bound = "T: Real + Serialize + serde::de::DeserializeOwned")]
pub struct ShapeEntry<T: Real> {
    pub id: String,
    pub dir: String,
    pub spec: ShapeSpec<T>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(bound = "T: Real + Serialize + serde::de::DeserializeOwned")]
pub struct CorpusManifest<T: Real> {
    pub config: CorpusConfig,
    pub train: Vec<ShapeEntry<T>>,
    pub validation: Vec<ShapeEntry<T>>,
    pub test: Vec<ShapeEntry<T>>,
}

impl<T: Real> CorpusManifest<T> {
    pub fn split(&self, name: &str) -> Result<&[ShapeEntry<T>]> {
        match name {
            "train" => Ok(&self.train),
            "validation" => Ok(&self.validation),
            "test" => Ok(&self.test),
            other => Err(Error::InvalidSpec(format!("unknown split '{other}'"))),
        }
    }
}

/// Sidecar written next to each sample's data files.
#[derive(Debug, Clone, Serialize, Deserialize)]
struct SampleSidecar {
    shape_id: String,
    shape_index: u64,
    sampling: SamplingConfig,
}

/// Draw a random shape: a single canonical primitive, or a union of 2-4
/// posed primitives, normalized to fit the unit cube.
pub fn random_shape<T: Real>(rng: &mut Rng, max_parts: usize) -> ShapeSpec<T> {
    let k = rng.random_range(1..=max_parts.max(1));
    let spec = if k == 1 {
        random_primitive(rng)
    } else {
        let parts = (0..k)
            .map(|_| PosedPart {
                primitive: random_primitive(rng),
                pose: random_pose(rng),
            })
            .collect();
        ShapeSpec::Composite { parts }
    };
    spec.normalized_to_unit_cube()
}

fn random_primitive<T: Real>(rng: &mut Rng) -> ShapeSpec<T> {
    let u = |rng: &mut Rng, lo: f64, hi: f64| T::of(lo + (hi - lo) * rng.random::<f64>());
    match rng.random_range(0..4u32) {
        0 => ShapeSpec::Sphere {
            radius: u(rng, 0.15, 0.35),
        },
        1 => ShapeSpec::Box {
            extents: Vector3::new(u(rng, 0.15, 0.5), u(rng, 0.15, 0.5), u(rng, 0.15, 0.5)),
        },
        2 => {
            let major = u(rng, 0.15, 0.3);
            let minor = major * T::of(0.35 + 0.25 * rng.random::<f64>());
            ShapeSpec::Torus {
                major_radius: major,
                minor_radius: minor,
            }
        }
        _ => ShapeSpec::Cylinder {
            radius: u(rng, 0.1, 0.25),
            height: u(rng, 0.2, 0.5),
        },
    }
}

fn random_pose<T: Real>(rng: &mut Rng) -> Pose<T> {
    let axis: [f64; 3] = rng.sample(UnitSphere);
    let angle = std::f64::consts::PI * rng.random::<f64>();
    let rotation = Vector3::new(
        T::of(axis[0] * angle),
        T::of(axis[1] * angle),
        T::of(axis[2] * angle),
    );
    let t = |rng: &mut Rng| T::of(0.5 * rng.random::<f64>() - 0.25);
    let translation = Vector3::new(t(rng), t(rng), t(rng));
    Pose::new(rotation, translation)
}

/// Generate the full corpus under `root`: all samples on disk plus the
/// manifest at `root/corpus.json`. Shapes are generated in parallel; each
/// derives its own generator from (seed, global shape index), so the
/// output is identical regardless of thread count.
pub fn generate_corpus<T>(cfg: &CorpusConfig, root: &Path) -> Result<CorpusManifest<T>>
where
    T: Real + Serialize + serde::de::DeserializeOwned,
{
    cfg.validate()?;
    let counts = [cfg.train, cfg.validation, cfg.test];
    let mut offset = 0u64;
    let mut splits: Vec<Vec<ShapeEntry<T>>> = Vec::new();
    for (split, &count) in SPLITS.iter().zip(&counts) {
        let split_dir = root.join(split);
        fs::create_dir_all(&split_dir).map_err(|e| Error::io(split_dir.display().to_string(), e))?;
        let entries: Result<Vec<ShapeEntry<T>>> = (0..count)
            .into_par_iter()
            .map(|i| {
                let index = offset + i as u64;
                let id = format!("{split}/{i:04}");
                let dir = split_dir.join(format!("{i:04}"));
                let (spec, sample) = generate_shape_sample::<T>(cfg, index, &id)?;
                save_sample(&dir, &sample, &cfg.sampling, index)?;
                Ok(ShapeEntry {
                    id,
                    dir: format!("{split}/{i:04}"),
                    spec,
                })
            })
            .collect();
        splits.push(entries?);
        offset += count as u64;
    }

    let mut splits = splits.into_iter();
    let manifest = CorpusManifest {
        config: cfg.clone(),
        train: splits.next().expect("three splits"),
        validation: splits.next().expect("three splits"),
        test: splits.next().expect("three splits"),
    };
    let path = root.join("corpus.json");
    let json = serde_json::to_string_pretty(&manifest)
        .map_err(|e| Error::Format {
            what: "corpus manifest",
            msg: e.to_string(),
        })?;
    fs::write(&path, json).map_err(|e| Error::io(path.display().to_string(), e))?;
    Ok(manifest)
}

/// Draw shapes until one yields a sample. A pathological composite (a part
/// fully buried in another) fails rejection sampling; both generators keep
/// advancing, so retries stay deterministic.
fn generate_shape_sample<T: Real>(
    cfg: &CorpusConfig,
    index: u64,
    id: &str,
) -> Result<(ShapeSpec<T>, TrainingSample<T>)> {
    let mut spec_rng = stream_rng(cfg.seed, Stream::ShapeSpec, index);
    let mut sample_rng = stream_rng(cfg.seed, Stream::SurfaceNoise, index);
    let mut last_err = None;
    for _ in 0..32 {
        let spec = random_shape::<T>(&mut spec_rng, cfg.max_parts);
        match make_training_sample(&spec, &cfg.sampling, &mut sample_rng) {
            Ok(mut sample) => {
                sample.shape_id = id.to_string();
                return Ok((spec, sample));
            }
            Err(e) => last_err = Some(e),
        }
    }
    Err(last_err.expect("at least one attempt"))
}

/// Write one sample's files into `dir`.
pub fn save_sample<T: Real>(
    dir: &Path,
    sample: &TrainingSample<T>,
    sampling: &SamplingConfig,
    shape_index: u64,
) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir.display().to_string(), e))?;
    save_xyz(&dir.join("cloud.xyz"), sample.cloud.points())?;
    save_xyz(&dir.join("queries.xyz"), &sample.queries)?;

    let labels: String = sample
        .labels
        .iter()
        .map(|&l| if l { "1\n" } else { "0\n" })
        .collect();
    let labels_path = dir.join("labels.txt");
    fs::write(&labels_path, labels).map_err(|e| Error::io(labels_path.display().to_string(), e))?;

    let sidecar = SampleSidecar {
        shape_id: sample.shape_id.clone(),
        shape_index,
        sampling: sampling.clone(),
    };
    let sidecar_path = dir.join("sample.json");
    let json = serde_json::to_string_pretty(&sidecar).map_err(|e| Error::Format {
        what: "sample sidecar",
        msg: e.to_string(),
    })?;
    fs::write(&sidecar_path, json).map_err(|e| Error::io(sidecar_path.display().to_string(), e))
}

/// Read one sample back from `dir`.
pub fn load_sample<T: Real>(dir: &Path) -> Result<TrainingSample<T>> {
    let cloud = load_xyz(&dir.join("cloud.xyz"))?;
    let queries = load_xyz(&dir.join("queries.xyz"))?;

    let labels_path = dir.join("labels.txt");
    let text =
        fs::read_to_string(&labels_path).map_err(|e| Error::io(labels_path.display().to_string(), e))?;
    let mut labels = Vec::new();
    for (ln, line) in text.lines().enumerate() {
        match line.trim() {
            "0" => labels.push(false),
            "1" => labels.push(true),
            other => {
                return Err(Error::parse(
                    labels_path.display().to_string(),
                    ln + 1,
                    format!("expected 0 or 1, got '{other}'"),
                ))
            }
        }
    }
    if labels.len() != queries.len() {
        return Err(Error::Format {
            what: "training sample",
            msg: format!("{} labels for {} queries", labels.len(), queries.len()),
        });
    }

    let sidecar_path = dir.join("sample.json");
    let sidecar: SampleSidecar = serde_json::from_str(
        &fs::read_to_string(&sidecar_path)
            .map_err(|e| Error::io(sidecar_path.display().to_string(), e))?,
    )
    .map_err(|e| Error::Format {
        what: "sample sidecar",
        msg: e.to_string(),
    })?;

    Ok(TrainingSample {
        cloud: PointSet::new(cloud)?,
        queries,
        labels,
        shape_id: sidecar.shape_id,
    })
}

/// Read a manifest written by [`generate_corpus`].
pub fn load_manifest<T>(root: &Path) -> Result<CorpusManifest<T>>
where
    T: Real + Serialize + serde::de::DeserializeOwned,
{
    let path = root.join("corpus.json");
    let text = fs::read_to_string(&path).map_err(|e| Error::io(path.display().to_string(), e))?;
    serde_json::from_str(&text).map_err(|e| Error::Format {
        what: "corpus manifest",
        msg: e.to_string(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_config() -> CorpusConfig {
        CorpusConfig {
            seed: 7,
            train: 3,
            validation: 1,
            test: 1,
            max_parts: 3,
            sampling: SamplingConfig {
                pool_size: 256,
                input_size: 64,
                near_queries: 128,
                far_queries: 64,
                ..SamplingConfig::default()
            },
        }
    }

    #[test]
    fn random_shapes_are_valid_and_normalized() {
        for i in 0..50 {
            let mut rng = stream_rng(3, Stream::ShapeSpec, i);
            let spec: ShapeSpec<f64> = random_shape(&mut rng, 4);
            spec.validate().unwrap();
            let bb = spec.bbox();
            for a in 0..3 {
                assert!(bb.min[a] >= -0.501 && bb.max[a] <= 0.501, "shape {i} leaks");
            }
        }
    }

    #[test]
    fn corpus_roundtrip_and_determinism() {
        let cfg = tiny_config();
        let dir_a = tempfile::tempdir().unwrap();
        let dir_b = tempfile::tempdir().unwrap();
        let ma: CorpusManifest<f64> = generate_corpus(&cfg, dir_a.path()).unwrap();
        let _mb: CorpusManifest<f64> = generate_corpus(&cfg, dir_b.path()).unwrap();

        assert_eq!(ma.train.len(), 3);
        assert_eq!(ma.validation.len(), 1);
        assert_eq!(ma.test.len(), 1);

        // Byte-identical outputs across independent runs.
        for rel in [
            "corpus.json",
            "train/0000/cloud.xyz",
            "train/0002/queries.xyz",
            "train/0001/labels.txt",
            "test/0000/sample.json",
        ] {
            let a = fs::read(dir_a.path().join(rel)).unwrap();
            let b = fs::read(dir_b.path().join(rel)).unwrap();
            assert_eq!(a, b, "mismatch in {rel}");
        }

        // Manifest reload matches, and every sample loads consistently.
        let loaded: CorpusManifest<f64> = load_manifest(dir_a.path()).unwrap();
        assert_eq!(loaded.config, cfg);
        for split in SPLITS {
            for entry in loaded.split(split).unwrap() {
                entry.spec.validate().unwrap();
                let sample: TrainingSample<f64> =
                    load_sample(&dir_a.path().join(&entry.dir)).unwrap();
                assert_eq!(sample.cloud.len(), cfg.sampling.input_size);
                assert_eq!(
                    sample.queries.len(),
                    cfg.sampling.near_queries + cfg.sampling.far_queries
                );
                assert_eq!(sample.shape_id, entry.id);
                // Labels on disk agree with the manifest's spec.
                for (q, &l) in sample.queries.iter().zip(&sample.labels) {
                    assert_eq!(l, entry.spec.contains(q));
                }
            }
        }
    }

    #[test]
    fn splits_use_distinct_shapes() {
        let cfg = tiny_config();
        let dir = tempfile::tempdir().unwrap();
        let m: CorpusManifest<f64> = generate_corpus(&cfg, dir.path()).unwrap();
        let train0 = &m.train[0].spec;
        assert!(m.validation.iter().all(|e| e.spec != *train0));
        assert!(m.test.iter().all(|e| e.spec != *train0));
    }
}
