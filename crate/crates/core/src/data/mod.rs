//! Synthetic datasets with controllable label noise.

pub mod blobs;
pub mod dataset;
pub mod io;
pub mod noise;

pub use blobs::{make_blobs, BlobGenerator, BlobSpec};
pub use dataset::{noise_rate, AppliedNoise, Dataset, Split};
pub use noise::{
    inject, inject_asymmetric, inject_classification_based, inject_feature_dependent, inject_symmetric,
    NoiseSpec,
};
