//! Small-loss easy-sample selection.

pub mod gmm;
pub mod split;

pub use gmm::{easiness_scores, fit_gmm2, GmmFit, LossRecord};
pub use split::{class_balanced_split, easy_quota, selection_quality, threshold_split, EasySplit, SelectionQuality};
