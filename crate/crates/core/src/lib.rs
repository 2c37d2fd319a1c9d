//! Spatio-temporal neural-network library.
//!
//! Implements factorized 3D-convolution block variants (fully-3D, three
//! orthogonal 2D planes, 2D+1D with optional inner ReLU, three axial 1D),
//! the video/audio classifier architectures built from them, a closed-form
//! parameter and FLOP analyzer, Adam training with best-validation
//! checkpointing, late-fusion ensembling, a deterministic synthetic
//! audio-visual data generator, and oracle/finite-difference verification
//! harnesses.
//!
//! Everything is deterministic given a seed: the RNG is fixed
//! (splitmix64-seeded xoshiro256**), reductions have a fixed traversal
//! order, and internal parallelism never changes results.

pub mod analysis;
pub mod blocks;
pub mod data;
pub mod ensemble;
pub mod error;
pub mod layers;
pub mod models;
pub mod rng;
pub mod tensor;
pub mod training;
pub mod verify;

pub use error::{Error, Result};
pub use rng::Rng;
pub use tensor::{Dtype, NDTensor, Scalar};
