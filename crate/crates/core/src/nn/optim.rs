use serde::{Deserialize, Serialize};

use super::mlp::{Gradients, Mlp};
use crate::error::{shape_err, Result};

/// SGD with classical momentum:
/// `velocity ← momentum·velocity + grad`, `param ← param − lr·velocity`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sgd {
    pub lr: f64,
    pub momentum: f64,
    velocity: Vec<Vec<f64>>,
}

impl Sgd {
    pub fn new(lr: f64, momentum: f64) -> Self {
        Self {
            lr,
            momentum,
            velocity: Vec::new(),
        }
    }

    pub fn velocity(&self) -> &[Vec<f64>] {
        &self.velocity
    }

    pub fn step(&mut self, net: &mut Mlp, grads: &Gradients) -> Result<()> {
        if !grads.matches(net) {
            return shape_err("gradient bundle does not match the network");
        }
        let gs = grads.slices();
        if self.velocity.is_empty() {
            self.velocity = gs.iter().map(|g| vec![0.0; g.len()]).collect();
        } else if self.velocity.len() != gs.len()
            || self.velocity.iter().zip(&gs).any(|(v, g)| v.len() != g.len())
        {
            return shape_err("optimizer state does not match the network");
        }
        for ((p, g), v) in net.param_slices_mut().into_iter().zip(gs).zip(&mut self.velocity) {
            for ((pi, gi), vi) in p.iter_mut().zip(g).zip(v.iter_mut()) {
                *vi = self.momentum * *vi + gi;
                *pi -= self.lr * *vi;
            }
        }
        Ok(())
    }
}
