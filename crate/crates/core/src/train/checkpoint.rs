//! Binary checkpoints.
//!
//! Layout: the magic bytes `OCRN`, a little-endian `u32` format version,
//! a length-prefixed JSON header (configurations and counters), then
//! length-prefixed arrays of little-endian `f64` values. Arrays appear in
//! declaration order: every trainable tensor in the fixed optimizer walk,
//! the standardization scale and shift, then the Adam first and second
//! moments. Save -> load -> save reproduces the file byte for byte.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::occnet::{NetworkConfig, NetworkParams};
use crate::scalar::Real;

use super::optimizer::{visit_tensors, visit_tensors_mut, AdamState};
use super::run::{TrainConfig, TrainState};

const MAGIC: &[u8; 4] = b"OCRN";
const VERSION: u32 = 1;

/// A full training snapshot: everything needed to resume bit-for-bit.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint<T: Real> {
    pub state: TrainState<T>,
    pub train_config: TrainConfig,
    /// Seed the training corpus was generated from; recorded so a resumed
    /// run can rebuild the identical corpus.
    pub corpus_seed: u64,
}

#[derive(Debug, Serialize, Deserialize)]
struct Header {
    network: NetworkConfig,
    train: TrainConfig,
    epoch: usize,
    step: usize,
    corpus_seed: u64,
    standardization_calibrated: bool,
    adam_step: usize,
}

pub fn save_checkpoint<T: Real>(path: &Path, checkpoint: &Checkpoint<T>) -> Result<()> {
    let state = &checkpoint.state;
    let header = Header {
        network: state.params.config().clone(),
        train: checkpoint.train_config.clone(),
        epoch: state.epoch,
        step: state.step,
        corpus_seed: checkpoint.corpus_seed,
        standardization_calibrated: state.params.standardization().calibrated,
        adam_step: state.optimizer.step_count(),
    };
    let header_bytes = serde_json::to_vec(&header)
        .map_err(|e| Error::Format { what: "checkpoint header", msg: e.to_string() })?;

    let mut bytes = Vec::new();
    bytes.extend_from_slice(MAGIC);
    bytes.extend_from_slice(&VERSION.to_le_bytes());
    bytes.extend_from_slice(&(header_bytes.len() as u64).to_le_bytes());
    bytes.extend_from_slice(&header_bytes);
    visit_tensors(&state.params, |tensor| write_array(&mut bytes, tensor));
    write_array(&mut bytes, &state.params.standardization().scale);
    write_array(&mut bytes, &state.params.standardization().shift);
    write_array(&mut bytes, state.optimizer.first_moment());
    write_array(&mut bytes, state.optimizer.second_moment());

    fs::write(path, &bytes).map_err(|e| Error::io(path.display().to_string(), e))
}

pub fn load_checkpoint<T: Real>(path: &Path) -> Result<Checkpoint<T>> {
    let bytes = fs::read(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    let mut cursor = Cursor { bytes: &bytes, offset: 0 };

    let magic = cursor.take(4)?;
    if magic != MAGIC {
        return Err(Error::Format {
            what: "checkpoint",
            msg: format!("bad magic bytes in {}", path.display()),
        });
    }
    let version = u32::from_le_bytes(cursor.take(4)?.try_into().unwrap());
    if version != VERSION {
        return Err(Error::Format {
            what: "checkpoint",
            msg: format!("unsupported version {version} in {}", path.display()),
        });
    }
    let header_len = cursor.take_u64()? as usize;
    let header: Header = serde_json::from_slice(cursor.take(header_len)?)
        .map_err(|e| Error::Format { what: "checkpoint header", msg: e.to_string() })?;

    // Materialize parameters at the stored architecture, then overwrite
    // every tensor from the stored arrays.
    let width = header.network.query_feature_width();
    let mut params = NetworkParams::<T>::init(header.network, 0)?;
    let mut failure = None;
    visit_tensors_mut(&mut params, |tensor| {
        if failure.is_some() {
            return;
        }
        match cursor.take_array::<T>() {
            Ok(values) if values.len() == tensor.len() => tensor.copy_from_slice(&values),
            Ok(values) => {
                failure = Some(Error::CheckpointMismatch(format!(
                    "tensor length {} does not match architecture ({} expected)",
                    values.len(),
                    tensor.len()
                )))
            }
            Err(e) => failure = Some(e),
        }
    });
    if let Some(e) = failure {
        return Err(e);
    }

    let scale = cursor.take_array::<T>()?;
    let shift = cursor.take_array::<T>()?;
    if scale.len() != width || shift.len() != width {
        return Err(Error::CheckpointMismatch(format!(
            "standardization width {}/{} does not match architecture ({width} expected)",
            scale.len(),
            shift.len()
        )));
    }
    let standardize = params.standardization_mut();
    standardize.scale = scale;
    standardize.shift = shift;
    standardize.calibrated = header.standardization_calibrated;

    let m = cursor.take_array::<T>()?;
    let v = cursor.take_array::<T>()?;
    if m.len() != params.parameter_count() {
        return Err(Error::CheckpointMismatch(format!(
            "optimizer moment length {} does not match parameter count {}",
            m.len(),
            params.parameter_count()
        )));
    }
    let optimizer = AdamState::from_parts(m, v, header.adam_step)?;

    Ok(Checkpoint {
        state: TrainState { params, optimizer, epoch: header.epoch, step: header.step },
        train_config: header.train,
        corpus_seed: header.corpus_seed,
    })
}

fn write_array<T: Real>(out: &mut Vec<u8>, values: &[T]) {
    out.extend_from_slice(&(values.len() as u64).to_le_bytes());
    for v in values {
        out.extend_from_slice(&v.as_f64().to_le_bytes());
    }
}

struct Cursor<'a> {
    bytes: &'a [u8],
    offset: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.offset + n > self.bytes.len() {
            return Err(Error::Format {
                what: "checkpoint".into(),
                msg: "file truncated".into(),
            });
        }
        let slice = &self.bytes[self.offset..self.offset + n];
        self.offset += n;
        Ok(slice)
    }

    fn take_u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn take_array<T: Real>(&mut self) -> Result<Vec<T>> {
        let count = self.take_u64()? as usize;
        let raw = self.take(count * 8)?;
        Ok(raw
            .chunks_exact(8)
            .map(|c| T::of(f64::from_le_bytes(c.try_into().unwrap())))
            .collect())
    }
}
