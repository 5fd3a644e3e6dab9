//! Model checkpoints stored in the named-array container.
//!
//! Arrays are named `<network>.<layer>.weight` (shape `in × out`) and
//! `<network>.<layer>.bias` (shape `out`), all `f64`, for the networks
//! `extractor`, `classifier` and `hallucinator`. The header metadata carries
//! the layer widths and the SHA-256 hash of the run configuration.

use std::path::Path;

use serde_json::json;

use super::matrix::Matrix;
use super::mlp::{Dense, Mlp};
use super::model::ModelBundle;
use crate::container::{ArrayData, Container};
use crate::error::{Error, Result};

pub const KIND: &str = "checkpoint";

const NETS: [&str; 3] = ["extractor", "classifier", "hallucinator"];

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub model: ModelBundle,
    pub config_hash: String,
}

fn nets(m: &ModelBundle) -> [&Mlp; 3] {
    [&m.extractor, &m.classifier, &m.hallucinator]
}

impl Checkpoint {
    pub fn to_container(&self) -> Result<Container> {
        let sizes: serde_json::Map<String, serde_json::Value> = NETS
            .iter()
            .zip(nets(&self.model))
            .map(|(n, net)| (n.to_string(), json!(net.sizes())))
            .collect();
        let mut c = Container::new(
            KIND,
            json!({ "config_hash": self.config_hash, "sizes": sizes }),
        );
        for (name, net) in NETS.iter().zip(nets(&self.model)) {
            for (i, l) in net.layers().iter().enumerate() {
                c.push(
                    format!("{name}.{i}.weight"),
                    vec![l.in_dim(), l.out_dim()],
                    ArrayData::F64(l.weight.as_slice().to_vec()),
                )?;
                c.push(format!("{name}.{i}.bias"), vec![l.out_dim()], ArrayData::F64(l.bias.clone()))?;
            }
        }
        Ok(c)
    }

    pub fn from_container(c: &Container) -> Result<Self> {
        if c.kind != KIND {
            return Err(Error::Format(format!("expected a {KIND} container, found {}", c.kind)));
        }
        let config_hash = c.meta["config_hash"]
            .as_str()
            .ok_or_else(|| Error::Format("checkpoint lacks config_hash".into()))?
            .to_string();
        let mut built = Vec::with_capacity(3);
        for name in NETS {
            let mut layers = Vec::new();
            let mut i = 0;
            while c.get(&format!("{name}.{i}.weight")).is_ok() {
                let (ws, w) = c.f64s(&format!("{name}.{i}.weight"))?;
                let (_, b) = c.f64s(&format!("{name}.{i}.bias"))?;
                if ws.len() != 2 {
                    return Err(Error::Format(format!("{name}.{i}.weight is not a matrix")));
                }
                layers.push(Dense {
                    weight: Matrix::from_vec(ws[0], ws[1], w.to_vec())?,
                    bias: b.to_vec(),
                });
                i += 1;
            }
            built.push(Mlp::from_layers(layers)?);
        }
        let hallucinator = built.pop().expect("three networks");
        let classifier = built.pop().expect("three networks");
        let extractor = built.pop().expect("three networks");
        Ok(Self {
            model: ModelBundle::from_parts(extractor, classifier, hallucinator)?,
            config_hash,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        self.to_container()?.save(path)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_container(&Container::load(path)?)
    }
}
