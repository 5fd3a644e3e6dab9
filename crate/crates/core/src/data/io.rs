//! Dataset files: the named-array container (kind `dataset`) and a CSV
//! export with columns `id, label_noisy, label_true, x_0 .. x_{D-1}`.
//!
//! Container header metadata: `n`, `input_dim`, `classes`, `seed`, `split`
//! and `noise` (applied noise spec and seed, or null). Arrays: `inputs`
//! (f32, `n × input_dim`), `true_labels` and `noisy_labels` (u32, `n`).

use std::path::Path;

use serde_json::json;

use super::dataset::{AppliedNoise, Dataset, Split};
use crate::container::{ArrayData, Container};
use crate::error::{Error, Result};
use crate::nn::Matrix;

pub const KIND: &str = "dataset";

pub fn to_container(ds: &Dataset) -> Result<Container> {
    let mut c = Container::new(
        KIND,
        json!({
            "n": ds.len(),
            "input_dim": ds.input_dim(),
            "classes": ds.classes,
            "seed": ds.seed,
            "split": ds.split,
            "noise": ds.noise,
        }),
    );
    let inputs = ds.inputs.as_slice().iter().map(|&v| v as f32).collect();
    c.push("inputs", vec![ds.len(), ds.input_dim()], ArrayData::F32(inputs))?;
    let labels = |v: &[usize]| ArrayData::U32(v.iter().map(|&y| y as u32).collect());
    c.push("true_labels", vec![ds.len()], labels(&ds.true_labels))?;
    c.push("noisy_labels", vec![ds.len()], labels(&ds.noisy_labels))?;
    Ok(c)
}

fn meta<T: serde::de::DeserializeOwned>(c: &Container, key: &str) -> Result<T> {
    serde_json::from_value(c.meta[key].clone()).map_err(|e| Error::Format(format!("header field {key}: {e}")))
}

pub fn from_container(c: &Container) -> Result<Dataset> {
    if c.kind != KIND {
        return Err(Error::Format(format!("expected a {KIND} container, found {}", c.kind)));
    }
    let (shape, inputs) = c.f32s("inputs")?;
    if shape.len() != 2 {
        return Err(Error::Format("inputs must be a matrix".into()));
    }
    let (_, t) = c.u32s("true_labels")?;
    let (_, y) = c.u32s("noisy_labels")?;
    let ds = Dataset {
        inputs: Matrix::from_vec(shape[0], shape[1], inputs.iter().map(|&v| v as f64).collect())?,
        true_labels: t.iter().map(|&v| v as usize).collect(),
        noisy_labels: y.iter().map(|&v| v as usize).collect(),
        classes: meta(c, "classes")?,
        split: meta::<Split>(c, "split")?,
        seed: meta(c, "seed")?,
        noise: meta::<Option<AppliedNoise>>(c, "noise")?,
    };
    ds.validate()?;
    Ok(ds)
}

pub fn save(ds: &Dataset, path: impl AsRef<Path>) -> Result<()> {
    to_container(ds)?.save(path)
}

pub fn load(path: impl AsRef<Path>) -> Result<Dataset> {
    from_container(&Container::load(path)?)
}

pub fn write_csv<W: std::io::Write>(ds: &Dataset, w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    let mut header = vec!["id".to_string(), "label_noisy".into(), "label_true".into()];
    header.extend((0..ds.input_dim()).map(|j| format!("x_{j}")));
    out.write_record(&header)?;
    for i in 0..ds.len() {
        let mut rec = vec![i.to_string(), ds.noisy_labels[i].to_string(), ds.true_labels[i].to_string()];
        rec.extend(ds.inputs.row(i).iter().map(|v| (*v as f32).to_string()));
        out.write_record(&rec)?;
    }
    out.flush()?;
    Ok(())
}

pub fn save_csv(ds: &Dataset, path: impl AsRef<Path>) -> Result<()> {
    write_csv(ds, std::fs::File::create(path)?)
}
