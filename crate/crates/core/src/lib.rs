//! Noisy-label learning on synthetic data.
//!
//! The pipeline warms a classifier up on noisy labels, splits the training
//! set into easy and hard samples with a two-component Gaussian mixture over
//! per-sample losses, hallucinates hard anchors from pairs of easy features,
//! relabels hard samples by anchor voting and retrains semi-supervised.

// `!(x > 0.0)` checks are meant to reject NaN as well
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod container;
pub mod data;
pub mod correction;
pub mod error;
pub mod hallucinator;
pub mod nn;
pub mod rng;
pub mod selection;
pub mod pipeline;
pub mod ssl;
pub mod train;

pub use error::{Error, Result};
