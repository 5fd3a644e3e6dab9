//! Gaussian blob datasets.
//!
//! Class means sit on mutually orthogonal directions (random directions when
//! there are more classes than input dimensions) at radius
//! `MEAN_RADIUS · (1 − overlap)`; samples add unit-variance isotropic noise.
//! A `hard_fraction` of every class is drawn with a "context" component that
//! pulls it `hard_mix` of the way towards another class: those samples keep
//! their true label but look partly like the other class.
//!
//! With `context_dims = 0` the pull acts on the whole mean, so hard samples
//! sit near a decision boundary. Otherwise the last `context_dims`
//! coordinates form a separate context subspace with its own per-class
//! means at radius `context_radius`, the pull acts only there, and hard
//! samples stay identifiable through the remaining identity coordinates.

use rand::seq::SliceRandom;
use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::dataset::{Dataset, Split};
use crate::error::{validation_err, Result};
use crate::nn::matrix::{dot, norm};
use crate::nn::Matrix;
use crate::rng::{self, Rng};

pub const MEAN_RADIUS: f64 = 8.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BlobSpec {
    pub classes: usize,
    pub input_dim: usize,
    /// 0 = far apart, 1 = all means coincide.
    pub overlap: f64,
    #[serde(default)]
    pub hard_fraction: f64,
    #[serde(default = "default_hard_mix")]
    pub hard_mix: f64,
    #[serde(default)]
    pub context_dims: usize,
    #[serde(default = "default_context_radius")]
    pub context_radius: f64,
}

fn default_context_radius() -> f64 {
    MEAN_RADIUS
}

fn default_hard_mix() -> f64 {
    0.4
}

impl BlobSpec {
    pub fn new(classes: usize, input_dim: usize, overlap: f64) -> Self {
        Self {
            classes,
            input_dim,
            overlap,
            hard_fraction: 0.0,
            hard_mix: default_hard_mix(),
            context_dims: 0,
            context_radius: default_context_radius(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.classes < 2 {
            return validation_err("blobs need at least two classes");
        }
        if self.input_dim == 0 {
            return validation_err("input_dim must be positive");
        }
        if !(0.0..=1.0).contains(&self.overlap) {
            return validation_err("overlap must lie in [0, 1]");
        }
        if !(0.0..=1.0).contains(&self.hard_fraction) {
            return validation_err("hard_fraction must lie in [0, 1]");
        }
        if self.context_dims == 0 && !(0.0..0.5).contains(&self.hard_mix) {
            return validation_err("hard_mix must lie in [0, 0.5) without a context subspace");
        }
        if self.context_dims > 0 && !(0.0..=1.0).contains(&self.hard_mix) {
            return validation_err("hard_mix must lie in [0, 1]");
        }
        if self.context_dims >= self.input_dim {
            return validation_err("context_dims must leave at least one identity coordinate");
        }
        if !(self.context_radius >= 0.0) {
            return validation_err("context_radius must be non-negative");
        }
        Ok(())
    }
}

/// Fixed class geometry from which any number of splits can be drawn.
#[derive(Debug, Clone)]
pub struct BlobGenerator {
    spec: BlobSpec,
    seed: u64,
    means: Vec<Vec<f64>>,
}

fn random_unit(dim: usize, rng: &mut Rng) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(rng)).collect();
        let n = norm(&v);
        if n > 1e-9 {
            return v.into_iter().map(|x| x / n).collect();
        }
    }
}

/// `count` vectors of length `radius`, mutually orthogonal while `dim`
/// allows it.
fn directions(count: usize, dim: usize, radius: f64, rng: &mut Rng) -> Vec<Vec<f64>> {
    let mut dirs: Vec<Vec<f64>> = Vec::with_capacity(count);
    for _ in 0..count {
        let mut v = random_unit(dim, rng);
        if dirs.len() < dim {
            // Gram-Schmidt against the directions drawn so far
            loop {
                for d in &dirs {
                    let p = dot(&v, d);
                    v.iter_mut().zip(d).for_each(|(a, b)| *a -= p * b);
                }
                let n = norm(&v);
                if n > 1e-6 {
                    v.iter_mut().for_each(|a| *a /= n);
                    break;
                }
                v = random_unit(dim, rng);
            }
        }
        dirs.push(v);
    }
    dirs.into_iter().map(|d| d.into_iter().map(|x| x * radius).collect()).collect()
}

impl BlobGenerator {
    pub fn new(spec: BlobSpec, seed: u64) -> Result<Self> {
        spec.validate()?;
        let mut rng = rng::stream(seed, "blob-means", 0);
        let identity_dim = spec.input_dim - spec.context_dims;
        let radius = MEAN_RADIUS * (1.0 - spec.overlap);
        let mut means = directions(spec.classes, identity_dim, radius, &mut rng);
        if spec.context_dims > 0 {
            let context = directions(spec.classes, spec.context_dims, spec.context_radius, &mut rng);
            means.iter_mut().zip(context).for_each(|(m, c)| m.extend(c));
        }
        Ok(Self { spec, seed, means })
    }

    pub fn means(&self) -> &[Vec<f64>] {
        &self.means
    }

    /// Draw `per_class` samples of every class, shuffled. Inputs are rounded
    /// to `f32` precision so that files round-trip exactly.
    pub fn sample(&self, per_class: usize, split: Split) -> Result<Dataset> {
        if per_class == 0 {
            return validation_err("per_class must be positive");
        }
        let stream = match split {
            Split::Train => 0,
            Split::Val => 1,
            Split::Test => 2,
        };
        let mut rng = rng::stream(self.seed, "blob-samples", stream);
        let (c, dim) = (self.spec.classes, self.spec.input_dim);
        let n_hard = (self.spec.hard_fraction * per_class as f64).round() as usize;
        let mut rows: Vec<(Vec<f64>, usize)> = Vec::with_capacity(c * per_class);
        for class in 0..c {
            for i in 0..per_class {
                let mut centre = self.means[class].clone();
                if i < n_hard {
                    let other = (class + 1 + rng.random_range(0..c - 1)) % c;
                    // whole mean, or only the context coordinates
                    let from = if self.spec.context_dims == 0 { 0 } else { dim - self.spec.context_dims };
                    for (x, m) in centre[from..].iter_mut().zip(&self.means[other][from..]) {
                        *x += self.spec.hard_mix * (m - *x);
                    }
                }
                let x: Vec<f64> = centre
                    .iter()
                    .map(|m| {
                        let e: f64 = StandardNormal.sample(&mut rng);
                        (m + e) as f32 as f64
                    })
                    .collect();
                rows.push((x, class));
            }
        }
        rows.shuffle(&mut rng);
        let mut data = Vec::with_capacity(rows.len() * dim);
        let mut labels = Vec::with_capacity(rows.len());
        for (x, y) in rows {
            data.extend(x);
            labels.push(y);
        }
        Ok(Dataset {
            inputs: Matrix::from_vec(labels.len(), dim, data)?,
            noisy_labels: labels.clone(),
            true_labels: labels,
            classes: c,
            split,
            seed: self.seed,
            noise: None,
        })
    }
}

/// Clean training split of `classes × per_class` blob samples.
pub fn make_blobs(classes: usize, per_class: usize, input_dim: usize, overlap: f64, seed: u64) -> Result<Dataset> {
    BlobGenerator::new(BlobSpec::new(classes, input_dim, overlap), seed)?.sample(per_class, Split::Train)
}
