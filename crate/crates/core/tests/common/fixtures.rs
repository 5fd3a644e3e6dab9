use nll_core::data::{Dataset, Split};
use nll_core::nn::Matrix;
use nll_core::rng::Rng;
use rand::seq::SliceRandom;
use rand::Rng as _;
use rand_distr::{Distribution, Normal};

/// Training set whose observed labels have the given class counts, in a
/// shuffled order. Inputs are zero; only labels matter to selection.
pub fn labelled(counts: &[usize], rng: &mut Rng) -> Dataset {
    let mut labels: Vec<usize> = counts.iter().enumerate().flat_map(|(j, &n)| std::iter::repeat_n(j, n)).collect();
    labels.shuffle(rng);
    Dataset {
        inputs: Matrix::zeros(labels.len(), 1),
        true_labels: labels.clone(),
        noisy_labels: labels,
        classes: counts.len(),
        split: Split::Train,
        seed: 0,
        noise: None,
    }
}

/// Reference quota with integer arithmetic only; `percent` is integral.
pub fn quota_oracle(n: usize, classes: usize, percent: usize, class_total: usize) -> usize {
    let denom = 100 * classes;
    (n * percent).div_ceil(denom).min(class_total)
}

/// Draws from a two-component mixture. Returns the samples and whether each
/// came from the first component. Negative draws are redrawn so every value
/// is a valid loss.
pub fn planted_mixture(n: usize, means: [f64; 2], stds: [f64; 2], weight0: f64, rng: &mut Rng) -> (Vec<f64>, Vec<bool>) {
    let comps = [Normal::new(means[0], stds[0]).unwrap(), Normal::new(means[1], stds[1]).unwrap()];
    let mut xs = Vec::with_capacity(n);
    let mut from0 = Vec::with_capacity(n);
    for _ in 0..n {
        let c = usize::from(rng.random::<f64>() >= weight0);
        let x = loop {
            let v = comps[c].sample(rng);
            if v >= 0.0 {
                break v;
            }
        };
        xs.push(x);
        from0.push(c == 0);
    }
    (xs, from0)
}
