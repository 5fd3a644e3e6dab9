//! Small differentiable networks: feature extractor, linear classifier and
//! hallucinator, with explicit forward/backward passes.

pub mod checkpoint;
pub mod loss;
pub mod matrix;
pub mod mlp;
pub mod model;
pub mod optim;

pub use loss::{cosine_similarity, mse_loss, softmax, softmax_cross_entropy, Target};
pub use matrix::Matrix;
pub use mlp::{Dense, Gradients, Mlp, Trace};
pub use model::{argmax, BundleGrads, ModelBundle};
pub use checkpoint::Checkpoint;
pub use optim::Sgd;

use crate::error::Result;

/// Raw (unnormalised) output of the feature extractor.
pub fn forward_features(extractor: &Mlp, batch: &Matrix) -> Result<Matrix> {
    extractor.forward(batch)
}

/// `features · W + b`.
pub fn classify(classifier: &Mlp, features: &Matrix) -> Result<Matrix> {
    classifier.forward(features)
}
