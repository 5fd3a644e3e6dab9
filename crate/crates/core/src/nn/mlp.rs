//! Fully connected networks with hand-written backpropagation.
//!
//! Every hidden layer applies a leaky rectifier; the last layer is affine.
//! A forward pass that needs gradients returns a [`Trace`] holding the
//! per-layer inputs and pre-activations, and [`Mlp::backward`] consumes it.

use rand::Rng;
use rand_distr::{Distribution, Uniform};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::matrix::Matrix;
use crate::error::{shape_err, Error, Result};

pub const LEAKY_SLOPE: f64 = 0.01;

#[inline]
fn leaky(z: f64) -> f64 {
    if z > 0.0 {
        z
    } else {
        LEAKY_SLOPE * z
    }
}

#[inline]
fn leaky_grad(z: f64) -> f64 {
    if z > 0.0 {
        1.0
    } else {
        LEAKY_SLOPE
    }
}

/// Affine layer `y = x·W + b` with `W` stored as `in × out`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dense {
    pub weight: Matrix,
    pub bias: Vec<f64>,
}

impl Dense {
    pub fn zeros(in_dim: usize, out_dim: usize) -> Self {
        Self {
            weight: Matrix::zeros(in_dim, out_dim),
            bias: vec![0.0; out_dim],
        }
    }

    /// Fan-in scaled uniform weights, zero bias.
    pub fn init<R: Rng + ?Sized>(in_dim: usize, out_dim: usize, rng: &mut R) -> Self {
        let limit = (6.0 / in_dim as f64).sqrt();
        let dist = Uniform::new_inclusive(-limit, limit).expect("finite bounds");
        let mut layer = Self::zeros(in_dim, out_dim);
        for w in layer.weight.as_mut_slice() {
            *w = dist.sample(rng);
        }
        layer
    }

    #[inline]
    pub fn in_dim(&self) -> usize {
        self.weight.rows()
    }

    #[inline]
    pub fn out_dim(&self) -> usize {
        self.weight.cols()
    }

    fn affine(&self, x: &Matrix) -> Result<Matrix> {
        let mut z = x.matmul(&self.weight)?;
        for r in 0..z.rows() {
            for (zi, bi) in z.row_mut(r).iter_mut().zip(&self.bias) {
                *zi += bi;
            }
        }
        Ok(z)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    layers: Vec<Dense>,
}

/// Forward state recorded for one batch.
#[derive(Debug, Clone)]
pub struct Trace {
    inputs: Vec<Matrix>,
    pre: Vec<Matrix>,
}

impl Trace {
    pub fn batch_size(&self) -> usize {
        self.inputs.first().map_or(0, Matrix::rows)
    }
}

/// Gradients laid out exactly like the layers of an [`Mlp`].
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub layers: Vec<Dense>,
}

impl Mlp {
    pub fn from_layers(layers: Vec<Dense>) -> Result<Self> {
        if layers.is_empty() {
            return shape_err("network needs at least one layer");
        }
        for (i, l) in layers.iter().enumerate() {
            if l.bias.len() != l.out_dim() {
                return shape_err(format!("layer {i}: bias length {} != {}", l.bias.len(), l.out_dim()));
            }
            if l.in_dim() == 0 || l.out_dim() == 0 {
                return shape_err(format!("layer {i} has a zero dimension"));
            }
        }
        for (i, pair) in layers.windows(2).enumerate() {
            if pair[0].out_dim() != pair[1].in_dim() {
                return shape_err(format!(
                    "layer {i} outputs {} but layer {} expects {}",
                    pair[0].out_dim(),
                    i + 1,
                    pair[1].in_dim()
                ));
            }
        }
        Ok(Self { layers })
    }

    /// Randomly initialised network with the given layer widths
    /// (`sizes[0]` is the input width).
    pub fn new<R: Rng + ?Sized>(sizes: &[usize], rng: &mut R) -> Result<Self> {
        if sizes.len() < 2 || sizes.contains(&0) {
            return shape_err(format!("invalid layer sizes {sizes:?}"));
        }
        let layers = sizes.windows(2).map(|w| Dense::init(w[0], w[1], rng)).collect();
        Self::from_layers(layers)
    }

    pub fn layers(&self) -> &[Dense] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Dense] {
        &mut self.layers
    }

    pub fn in_dim(&self) -> usize {
        self.layers[0].in_dim()
    }

    pub fn out_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].out_dim()
    }

    pub fn sizes(&self) -> Vec<usize> {
        let mut s = vec![self.in_dim()];
        s.extend(self.layers.iter().map(Dense::out_dim));
        s
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(|l| l.weight.as_slice().len() + l.bias.len()).sum()
    }

    fn check_input(&self, x: &Matrix) -> Result<()> {
        if x.cols() != self.in_dim() {
            return shape_err(format!(
                "batch has {} columns, network expects {}",
                x.cols(),
                self.in_dim()
            ));
        }
        Ok(())
    }

    pub fn forward(&self, x: &Matrix) -> Result<Matrix> {
        self.check_input(x)?;
        let last = self.layers.len() - 1;
        let mut h = x.clone();
        for (i, layer) in self.layers.iter().enumerate() {
            h = layer.affine(&h)?;
            if i < last {
                h.as_mut_slice().iter_mut().for_each(|v| *v = leaky(*v));
            }
        }
        Ok(h)
    }

    pub fn forward_traced(&self, x: &Matrix) -> Result<(Matrix, Trace)> {
        self.check_input(x)?;
        let last = self.layers.len() - 1;
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut pre = Vec::with_capacity(self.layers.len());
        let mut h = x.clone();
        for (i, layer) in self.layers.iter().enumerate() {
            let z = layer.affine(&h)?;
            inputs.push(h);
            h = z.clone();
            if i < last {
                h.as_mut_slice().iter_mut().for_each(|v| *v = leaky(*v));
            }
            pre.push(z);
        }
        Ok((h, Trace { inputs, pre }))
    }

    /// Backpropagate `grad_out` (dL/d output, one row per sample) through the
    /// recorded forward pass. Returns parameter gradients and dL/d input.
    pub fn backward(&self, trace: &Trace, grad_out: &Matrix) -> Result<(Gradients, Matrix)> {
        if trace.pre.len() != self.layers.len() {
            return Err(Error::Usage(format!(
                "trace has {} layers but network has {}",
                trace.pre.len(),
                self.layers.len()
            )));
        }
        for (l, (inp, z)) in self.layers.iter().zip(trace.inputs.iter().zip(&trace.pre)) {
            if inp.cols() != l.in_dim() || z.cols() != l.out_dim() {
                return Err(Error::Usage("trace was recorded for a different network".into()));
            }
        }
        if grad_out.shape() != (trace.batch_size(), self.out_dim()) {
            return Err(Error::Usage(format!(
                "upstream gradient is {:?}, recorded forward pass produced {:?}",
                grad_out.shape(),
                (trace.batch_size(), self.out_dim())
            )));
        }
        let last = self.layers.len() - 1;
        let mut grads: Vec<Dense> = Vec::with_capacity(self.layers.len());
        let mut delta = grad_out.clone();
        for i in (0..self.layers.len()).rev() {
            if i < last {
                for (d, &z) in delta.as_mut_slice().iter_mut().zip(trace.pre[i].as_slice()) {
                    *d *= leaky_grad(z);
                }
            }
            let weight = trace.inputs[i].t_matmul(&delta)?;
            let mut bias = vec![0.0; delta.cols()];
            for row in delta.iter_rows() {
                for (b, d) in bias.iter_mut().zip(row) {
                    *b += d;
                }
            }
            let next = delta.matmul_t(&self.layers[i].weight)?;
            grads.push(Dense { weight, bias });
            delta = next;
        }
        grads.reverse();
        Ok((Gradients { layers: grads }, delta))
    }

    pub fn param_slices(&self) -> Vec<&[f64]> {
        self.layers
            .iter()
            .flat_map(|l| [l.weight.as_slice(), l.bias.as_slice()])
            .collect()
    }

    pub fn param_slices_mut(&mut self) -> Vec<&mut [f64]> {
        self.layers
            .iter_mut()
            .flat_map(|l| [l.weight.as_mut_slice(), l.bias.as_mut_slice()])
            .collect()
    }

    /// SHA-256 over the exact bit patterns of all parameters.
    pub fn digest(&self) -> String {
        let mut h = Sha256::new();
        for s in self.param_slices() {
            for v in s {
                h.update(v.to_bits().to_le_bytes());
            }
        }
        h.finalize().iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn is_finite(&self) -> bool {
        self.param_slices().iter().all(|s| s.iter().all(|v| v.is_finite()))
    }
}

impl Gradients {
    pub fn zeros_like(net: &Mlp) -> Self {
        Self {
            layers: net.layers.iter().map(|l| Dense::zeros(l.in_dim(), l.out_dim())).collect(),
        }
    }

    pub fn slices(&self) -> Vec<&[f64]> {
        self.layers
            .iter()
            .flat_map(|l| [l.weight.as_slice(), l.bias.as_slice()])
            .collect()
    }

    pub fn matches(&self, net: &Mlp) -> bool {
        self.layers.len() == net.layers.len()
            && self
                .layers
                .iter()
                .zip(&net.layers)
                .all(|(g, l)| g.weight.shape() == l.weight.shape() && g.bias.len() == l.bias.len())
    }

    pub fn is_finite(&self) -> bool {
        self.slices().iter().all(|s| s.iter().all(|v| v.is_finite()))
    }

    pub fn scale(&mut self, factor: f64) {
        for l in &mut self.layers {
            l.weight.as_mut_slice().iter_mut().for_each(|v| *v *= factor);
            l.bias.iter_mut().for_each(|v| *v *= factor);
        }
    }
}
