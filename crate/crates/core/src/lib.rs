//! Two-level face recognition: block-DCT energy-compaction features feeding a
//! single-hidden-layer backpropagation classifier.
//!
//! The first level splits a grayscale face into `n x n` blocks, takes the
//! orthonormal 2-D DCT of each, and compacts every block's AC spectrum into
//! one scalar ([`features::CompactionMethod`] M1..M5). The resulting vector,
//! min-max scaled to `[0, 1]`, is classified by an [`classifier::MlpClassifier`].
//! [`experiment`] reproduces the standard ORL benchmark protocol on top.

pub mod classifier;
pub mod cli;
pub mod dataset;
pub mod experiment;
pub mod features;
pub mod synthetic;
pub mod transform;

pub use classifier::{MlpClassifier, TrainConfig};
pub use dataset::{load_orl, parse_pgm, split_train_test, Dataset, GrayImage, LabeledImage};
pub use experiment::{run_config, run_grid, ExperimentConfig, RunResult};
pub use features::{compact, extract_features, BlockGeometry, CompactionMethod, FeatureVector};
pub use transform::{dct2d, idct2d, BlockSize, DctBlock};
