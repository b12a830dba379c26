use rand::seq::SliceRandom;

use super::LabeledDataset;
use crate::error::{Error, Result};
use crate::rng::{stream_rng, Stream};

/// Row indices grouped by label.
fn indices_by_class(dataset: &LabeledDataset) -> Vec<Vec<usize>> {
    let mut groups = vec![Vec::new(); dataset.num_classes()];
    for (i, &l) in dataset.labels().iter().enumerate() {
        groups[l as usize].push(i);
    }
    groups
}

/// Draws `counts[c]` rows of class `c` without replacement. Selected rows
/// keep their original relative order.
fn draw_per_class(dataset: &LabeledDataset, counts: &[usize], seed: u64) -> Result<LabeledDataset> {
    let mut rng = stream_rng(seed, Stream::Subsample);
    let mut chosen = Vec::with_capacity(counts.iter().sum());
    for (class, mut members) in indices_by_class(dataset).into_iter().enumerate() {
        let want = counts[class];
        if members.len() < want {
            return Err(Error::capacity(format!(
                "class {} has {} samples, {} requested",
                class,
                members.len(),
                want
            )));
        }
        let (picked, _) = members.partial_shuffle(&mut rng, want);
        chosen.extend_from_slice(picked);
    }
    chosen.sort_unstable();
    Ok(dataset.select(&chosen))
}

/// Keeps exactly `per_class` randomly chosen samples of every class.
pub fn stratified_subsample(dataset: &LabeledDataset, per_class: usize, seed: u64) -> Result<LabeledDataset> {
    if per_class == 0 {
        return Err(Error::validation("per_class must be positive"));
    }
    draw_per_class(dataset, &vec![per_class; dataset.num_classes()], seed)
}

/// Exponentially decaying class sizes: class `c` of `num_classes` keeps
/// `round(n_max * ratio^(c / (num_classes - 1)))`, rounding half away from zero.
pub fn long_tail_counts(n_max: usize, num_classes: usize, ratio: f64) -> Result<Vec<usize>> {
    if !(ratio > 0.0 && ratio <= 1.0) {
        return Err(Error::validation(format!("imbalance ratio {} outside (0, 1]", ratio)));
    }
    if num_classes == 1 {
        return Ok(vec![n_max]);
    }
    let last = (num_classes - 1) as f64;
    Ok((0..num_classes)
        .map(|c| (n_max as f64 * ratio.powf(c as f64 / last)).round() as usize)
        .collect())
}

/// Long-tailed subsample with class 0 as the head class at its full size.
pub fn long_tail_subsample(dataset: &LabeledDataset, ratio: f64, seed: u64) -> Result<LabeledDataset> {
    let n_max = dataset.class_counts()[0];
    let counts = long_tail_counts(n_max, dataset.num_classes(), ratio)?;
    draw_per_class(dataset, &counts, seed)
}
