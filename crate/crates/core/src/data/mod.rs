//! Dataset plumbing: the binary tensor container (also the checkpoint
//! format), JSON-lines manifests, audio feature streams with the fixed and
//! variable 87-segment windowing, synthetic data generation, and loaders.

pub mod audio;
pub mod container;
pub mod loader;
pub mod manifest;
pub mod synth;

pub use audio::{
    fixed_segments, variable_segments, AudioFeatureStream, SegmentationMode, SegmentationSpec,
};
pub use container::{find_entry, read_container, write_container, TensorEntry};
pub use loader::{load_dataset, Dataset, Sample};
pub use manifest::{ManifestRecord, SampleManifest, Split, INTOXICATED, MANIFEST_FILE, SOBER};
pub use synth::{
    gen_synthetic_audio, gen_synthetic_videos, SplitCounts, FEATURES_ENTRY, VIDEO_ENTRY,
};
