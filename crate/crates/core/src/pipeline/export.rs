//! Feature and anchor dumps for external plotting.

use serde_json::json;

use crate::container::{ArrayData, Container};
use crate::data::Dataset;
use crate::error::Result;
use crate::hallucinator::{hallucinate_pairs, sample_pairs, AnchorSet, FeatureSet, Role};
use crate::nn::{Matrix, ModelBundle};
use crate::rng;

pub const ANCHORS_KIND: &str = "anchors";
pub const EMBEDDINGS_KIND: &str = "embeddings";

fn f32s(m: &Matrix) -> ArrayData {
    ArrayData::F32(m.as_slice().iter().map(|&v| v as f32).collect())
}

fn u32s(v: impl Iterator<Item = usize>) -> ArrayData {
    ArrayData::U32(v.map(|x| x as u32).collect())
}

fn push_anchors(c: &mut Container, prefix: &str, a: &AnchorSet) -> Result<()> {
    c.push(format!("{prefix}anchors"), vec![a.len(), a.anchors.cols()], f32s(&a.anchors))?;
    c.push(format!("{prefix}targets"), vec![a.len()], u32s(a.targets.iter().copied()))?;
    let sources = a.sources.iter().flat_map(|&(u, v)| [u, v]);
    c.push(format!("{prefix}sources"), vec![a.len(), 2], u32s(sources))
}

/// Anchors with their target labels and `(u, v)` source indices.
pub fn anchors_container(anchors: &AnchorSet) -> Result<Container> {
    let mut c = Container::new(ANCHORS_KIND, json!({ "n": anchors.len(), "lambda_p": anchors.lambda_p }));
    push_anchors(&mut c, "", anchors)?;
    Ok(c)
}

/// Unit features of every sample of `ds` plus anchors hallucinated from
/// `pairs_per_sample` random different-label partners of every sample.
pub fn embeddings_container(model: &ModelBundle, ds: &Dataset, pairs_per_sample: usize, lambda_p: f64, seed: u64) -> Result<Container> {
    let all: Vec<usize> = (0..ds.len()).collect();
    let features = FeatureSet::embed(model, &ds.inputs, &ds.noisy_labels, &all, Role::Easy)?;
    let mut c = Container::new(
        EMBEDDINGS_KIND,
        json!({ "n": ds.len(), "feature_dim": features.dim(), "split": ds.split, "lambda_p": lambda_p }),
    );
    c.push("features", vec![ds.len(), features.dim()], f32s(&features.features))?;
    c.push("true_labels", vec![ds.len()], u32s(ds.true_labels.iter().copied()))?;
    c.push("noisy_labels", vec![ds.len()], u32s(ds.noisy_labels.iter().copied()))?;
    if pairs_per_sample > 0 {
        let pairs = sample_pairs(&features, pairs_per_sample, &mut rng::stream(seed, "export-pairs", 0))?;
        let anchors = hallucinate_pairs(&model.hallucinator, &features, &pairs, lambda_p)?;
        push_anchors(&mut c, "anchor_", &anchors)?;
    }
    Ok(c)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::make_blobs;

    #[test]
    fn embeddings_layout() {
        let ds = make_blobs(3, 5, 4, 0.5, 2).unwrap();
        let model = ModelBundle::new(&[4, 6, 3], 3, 6, &mut rng::from_seed(1)).unwrap();
        let c = embeddings_container(&model, &ds, 2, 0.75, 9).unwrap();
        assert_eq!(c.kind, EMBEDDINGS_KIND);
        assert_eq!(c.f32s("features").unwrap().0, &[15, 3]);
        assert_eq!(c.f32s("anchor_anchors").unwrap().0, &[30, 3]);
        let (shape, src) = c.u32s("anchor_sources").unwrap();
        assert_eq!(shape, &[30, 2]);
        for pair in src.chunks(2) {
            assert_ne!(ds.noisy_labels[pair[0] as usize], ds.noisy_labels[pair[1] as usize]);
        }
        let mut buf = Vec::new();
        c.write_to(&mut buf).unwrap();
        assert_eq!(Container::read_from(&buf[..]).unwrap(), c);
    }
}
