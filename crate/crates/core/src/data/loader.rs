//! Loads manifest-described datasets into memory for a given architecture.

use crate::data::audio::{fixed_segments, variable_segments, AudioFeatureStream, SegmentationSpec};
use crate::data::container::{find_entry, read_container};
use crate::data::manifest::{SampleManifest, Split, MANIFEST_FILE};
use crate::data::synth::{FEATURES_ENTRY, VIDEO_ENTRY};
use crate::error::{Error, Result};
use crate::models::ArchName;
use crate::tensor::{NDTensor, Scalar};
use std::path::Path;

/// One loaded sample.
#[derive(Debug, Clone)]
pub struct Sample<T> {
    pub id: String,
    pub input: NDTensor<T>,
    pub label: usize,
}

/// All three splits, loaded and shape-checked.
#[derive(Debug, Clone)]
pub struct Dataset<T> {
    pub train: Vec<Sample<T>>,
    pub val: Vec<Sample<T>>,
    pub test: Vec<Sample<T>>,
}

impl<T> Dataset<T> {
    pub fn split(&self, split: Split) -> &[Sample<T>] {
        match split {
            Split::Train => &self.train,
            Split::Val => &self.val,
            Split::Test => &self.test,
        }
    }
}

impl<T: Scalar> Dataset<T> {
    /// Per-sample input shape (every sample must agree).
    pub fn input_shape(&self) -> Option<&[usize]> {
        self.train
            .first()
            .or(self.val.first())
            .or(self.test.first())
            .map(|s| s.input.shape())
    }
}

/// How an architecture consumes a manifest record.
fn load_input<T: Scalar>(dir: &Path, path: &str, duration_s: f64, arch: ArchName) -> Result<NDTensor<T>> {
    let full = dir.join(path);
    match arch {
        a if a.is_video() => {
            let entry = find_entry(read_container(&full)?, VIDEO_ENTRY)?;
            entry.into_tensor_lossless::<T>()
        }
        ArchName::FeatLstm => {
            let entry = find_entry(read_container(&full)?, FEATURES_ENTRY)?;
            entry.into_tensor_lossless::<T>()
        }
        ArchName::AudioDnn512 | ArchName::AudioDnn256 => {
            let stream = AudioFeatureStream::read_csv(&full, duration_s)?;
            let pooled = stream.pooled_mean_std();
            let n = pooled.len();
            Ok(NDTensor::from_vec(&[n], pooled)?.cast::<T>())
        }
        ArchName::AudioLstmFixed => {
            let stream = AudioFeatureStream::read_csv(&full, duration_s)?;
            Ok(fixed_segments(&stream, &SegmentationSpec::fixed())?.cast::<T>())
        }
        ArchName::AudioLstmVariable => {
            let stream = AudioFeatureStream::read_csv(&full, duration_s)?;
            Ok(variable_segments(&stream, &SegmentationSpec::variable())?.cast::<T>())
        }
        _ => unreachable!(),
    }
}

/// Reads `dir/manifest.jsonl` and loads every sample in the representation
/// `arch` expects. All inputs must share one shape.
pub fn load_dataset<T: Scalar>(dir: &Path, arch: ArchName) -> Result<Dataset<T>> {
    if !dir.join(MANIFEST_FILE).exists() {
        return Err(Error::Data(format!(
            "{} has no {MANIFEST_FILE}",
            dir.display()
        )));
    }
    let manifest = SampleManifest::read(dir)?;
    let mut dataset = Dataset {
        train: Vec::new(),
        val: Vec::new(),
        test: Vec::new(),
    };
    let mut shape: Option<Vec<usize>> = None;
    for rec in &manifest.records {
        let input = load_input::<T>(dir, &rec.path, rec.duration_s, arch)
            .map_err(|e| Error::Data(format!("sample '{}': {e}", rec.id)))?;
        match &shape {
            None => shape = Some(input.shape().to_vec()),
            Some(s) if s != input.shape() => {
                return Err(Error::Data(format!(
                    "sample '{}' has shape {:?}, expected {s:?}",
                    rec.id,
                    input.shape()
                )))
            }
            _ => {}
        }
        let sample = Sample {
            id: rec.id.clone(),
            input,
            label: rec.label,
        };
        match rec.split {
            Split::Train => dataset.train.push(sample),
            Split::Val => dataset.val.push(sample),
            Split::Test => dataset.test.push(sample),
        }
    }
    Ok(dataset)
}
