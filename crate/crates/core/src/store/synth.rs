use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::LabeledDataset;
use crate::error::{Error, Result};
use crate::rng::{stream_rng, Stream};

/// Isotropic Gaussian mixture with one component per class.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub dim: usize,
    pub num_classes: usize,
    pub samples_per_class: usize,
    /// Class means are drawn from `N(0, mean_scale^2 I)`.
    pub mean_scale: f64,
    /// Samples are drawn from `N(mean_c, noise_sigma^2 I)`.
    pub noise_sigma: f64,
    pub seed: u64,
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        if self.dim == 0 || self.num_classes < 2 || self.samples_per_class == 0 {
            return Err(Error::validation(
                "synthetic mixture needs dim >= 1, num_classes >= 2, samples_per_class >= 1",
            ));
        }
        if !(self.mean_scale > 0.0 && self.noise_sigma > 0.0) {
            return Err(Error::validation("mean_scale and noise_sigma must be positive"));
        }
        Ok(())
    }
}

fn draw_block<R: Rng>(rng: &mut R, spec: &SyntheticSpec, means: &[f64], per_class: usize, id_offset: u64) -> Result<LabeledDataset> {
    let d = spec.dim;
    let n = spec.num_classes * per_class;
    let mut embeddings = Vec::with_capacity(n * d);
    let mut labels = Vec::with_capacity(n);
    for class in 0..spec.num_classes {
        let mean = &means[class * d..(class + 1) * d];
        for _ in 0..per_class {
            for &m in mean {
                let z: f64 = rng.sample(StandardNormal);
                embeddings.push((m + spec.noise_sigma * z) as f32);
            }
            labels.push(class as u32);
        }
    }
    let ids = (id_offset..id_offset + n as u64).collect();
    LabeledDataset::new(d, spec.num_classes, embeddings, labels, ids)
}

fn draw_means<R: Rng>(rng: &mut R, spec: &SyntheticSpec) -> Vec<f64> {
    (0..spec.num_classes * spec.dim)
        .map(|_| spec.mean_scale * rng.sample::<f64, _>(StandardNormal))
        .collect()
}

/// Class-major samples with ids `0..n`, drawn from the `Synthetic` stream.
pub fn generate_synthetic_mixture(spec: &SyntheticSpec) -> Result<LabeledDataset> {
    Ok(generate_synthetic_split(spec, 0)?.0)
}

/// Training set as in [`generate_synthetic_mixture`] plus a held-out set of
/// `test_per_class` samples per class from the same components. Test ids
/// continue after the training ids. `test_per_class = 0` yields an empty
/// test set.
pub fn generate_synthetic_split(spec: &SyntheticSpec, test_per_class: usize) -> Result<(LabeledDataset, LabeledDataset)> {
    spec.validate()?;
    let mut rng = stream_rng(spec.seed, Stream::Synthetic);
    let means = draw_means(&mut rng, spec);
    let train = draw_block(&mut rng, spec, &means, spec.samples_per_class, 0)?;
    let test = draw_block(&mut rng, spec, &means, test_per_class, train.len() as u64)?;
    Ok((train, test))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(seed: u64) -> SyntheticSpec {
        SyntheticSpec {
            dim: 2,
            num_classes: 2,
            samples_per_class: 500,
            mean_scale: 10.0,
            noise_sigma: 1.0,
            seed,
        }
    }

    #[test]
    fn shape_and_balance() {
        let ds = generate_synthetic_mixture(&spec(0)).unwrap();
        assert_eq!(ds.len(), 1000);
        assert_eq!(ds.class_counts(), vec![500, 500]);
        assert_eq!(ds.ids()[999], 999);
    }

    #[test]
    fn deterministic_per_seed() {
        assert_eq!(generate_synthetic_mixture(&spec(0)).unwrap(), generate_synthetic_mixture(&spec(0)).unwrap());
        assert_ne!(generate_synthetic_mixture(&spec(0)).unwrap(), generate_synthetic_mixture(&spec(1)).unwrap());
    }

    #[test]
    fn split_shares_the_training_prefix() {
        let (train, test) = generate_synthetic_split(&spec(3), 20).unwrap();
        assert_eq!(train, generate_synthetic_mixture(&spec(3)).unwrap());
        assert_eq!(test.len(), 40);
        assert_eq!(test.ids()[0], 1000);
    }

    #[test]
    fn invalid_spec() {
        let mut s = spec(0);
        s.num_classes = 1;
        assert!(generate_synthetic_mixture(&s).is_err());
        let mut s = spec(0);
        s.noise_sigma = 0.0;
        assert!(generate_synthetic_mixture(&s).is_err());
    }
}
