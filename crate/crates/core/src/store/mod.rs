//! Corpus data model: the [`LabeledDataset`] container, its EVEC file
//! format, standardization, subsampling and a synthetic mixture generator.

mod evec;
mod sample;
mod synth;

pub use evec::{load_dataset, read_csv_dataset, save_dataset, DatasetMeta, EVEC_MAGIC, EVEC_VERSION};
pub use sample::{long_tail_counts, long_tail_subsample, stratified_subsample};
pub use synth::{generate_synthetic_mixture, generate_synthetic_split, SyntheticSpec};

use std::collections::HashSet;

use crate::error::{Error, Result};
use crate::knn::RowsRef;

/// Floor applied to per-column standard deviations.
pub const STD_FLOOR: f64 = 1e-8;

/// Embedding matrix with one integer label and one stable id per row.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledDataset {
    dim: usize,
    num_classes: usize,
    embeddings: Vec<f32>,
    labels: Vec<u32>,
    ids: Vec<u64>,
}

impl LabeledDataset {
    /// Builds a dataset, checking every invariant: `dim > 0`, `num_classes > 0`,
    /// consistent lengths, finite embeddings, labels in `[0, num_classes)` and
    /// unique ids. Zero rows are allowed.
    pub fn new(
        dim: usize,
        num_classes: usize,
        embeddings: Vec<f32>,
        labels: Vec<u32>,
        ids: Vec<u64>,
    ) -> Result<Self> {
        if dim == 0 {
            return Err(Error::validation("embedding dimension must be positive"));
        }
        if num_classes == 0 {
            return Err(Error::validation("number of classes must be positive"));
        }
        let n = labels.len();
        if ids.len() != n {
            return Err(Error::validation(format!("{} labels but {} ids", n, ids.len())));
        }
        if embeddings.len() != n * dim {
            return Err(Error::validation(format!(
                "expected {} embedding values for n={} d={}, got {}",
                n * dim,
                n,
                dim,
                embeddings.len()
            )));
        }
        if let Some(pos) = embeddings.iter().position(|v| !v.is_finite()) {
            return Err(Error::validation(format!(
                "non-finite embedding value at row {} column {}",
                pos / dim,
                pos % dim
            )));
        }
        if let Some((row, &label)) = labels.iter().enumerate().find(|(_, &l)| l as usize >= num_classes) {
            return Err(Error::validation(format!(
                "label {} at row {} outside [0, {})",
                label, row, num_classes
            )));
        }
        let mut seen = HashSet::with_capacity(n);
        for &id in &ids {
            if !seen.insert(id) {
                return Err(Error::validation(format!("duplicate id {}", id)));
            }
        }
        Ok(Self {
            dim,
            num_classes,
            embeddings,
            labels,
            ids,
        })
    }

    /// Builds a dataset whose ids are `0..n`.
    pub fn with_sequential_ids(dim: usize, num_classes: usize, embeddings: Vec<f32>, labels: Vec<u32>) -> Result<Self> {
        let ids = (0..labels.len() as u64).collect();
        Self::new(dim, num_classes, embeddings, labels, ids)
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn embeddings(&self) -> &[f32] {
        &self.embeddings
    }

    pub fn labels(&self) -> &[u32] {
        &self.labels
    }

    pub fn ids(&self) -> &[u64] {
        &self.ids
    }

    pub fn row(&self, i: usize) -> &[f32] {
        &self.embeddings[i * self.dim..(i + 1) * self.dim]
    }

    pub fn rows(&self) -> RowsRef<'_> {
        RowsRef::from_parts(&self.embeddings, self.dim)
    }

    /// Number of samples per class, indexed by class.
    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.num_classes];
        for &l in &self.labels {
            counts[l as usize] += 1;
        }
        counts
    }

    /// Rows at `indices`, in that order.
    pub fn select(&self, indices: &[usize]) -> Self {
        let mut embeddings = Vec::with_capacity(indices.len() * self.dim);
        for &i in indices {
            embeddings.extend_from_slice(self.row(i));
        }
        Self {
            dim: self.dim,
            num_classes: self.num_classes,
            embeddings,
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
            ids: indices.iter().map(|&i| self.ids[i]).collect(),
        }
    }

    /// Same rows and ids with replacement labels.
    pub fn with_labels(&self, labels: Vec<u32>) -> Result<Self> {
        Self::new(self.dim, self.num_classes, self.embeddings.clone(), labels, self.ids.clone())
    }

    /// Same labels and ids with replacement embeddings of dimension `dim`.
    pub fn with_embeddings(&self, dim: usize, embeddings: Vec<f32>) -> Result<Self> {
        Self::new(dim, self.num_classes, embeddings, self.labels.clone(), self.ids.clone())
    }

    pub fn into_parts(self) -> (usize, usize, Vec<f32>, Vec<u32>, Vec<u64>) {
        (self.dim, self.num_classes, self.embeddings, self.labels, self.ids)
    }
}

/// Per-column training moments used by [`standardize`].
#[derive(Debug, Clone, PartialEq)]
pub struct StandardizationStats {
    pub mean: Vec<f64>,
    /// Population standard deviation, floored at [`STD_FLOOR`].
    pub std: Vec<f64>,
}

impl StandardizationStats {
    pub fn fit(data: &LabeledDataset) -> Result<Self> {
        if data.len() < 2 {
            return Err(Error::capacity(format!(
                "standardization needs at least 2 training rows, got {}",
                data.len()
            )));
        }
        let d = data.dim();
        let n = data.len() as f64;
        let mut mean = vec![0.0f64; d];
        for i in 0..data.len() {
            for (m, &v) in mean.iter_mut().zip(data.row(i)) {
                *m += v as f64;
            }
        }
        mean.iter_mut().for_each(|m| *m /= n);
        let mut var = vec![0.0f64; d];
        for i in 0..data.len() {
            for ((s, &v), m) in var.iter_mut().zip(data.row(i)).zip(&mean) {
                let c = v as f64 - m;
                *s += c * c;
            }
        }
        let std = var.into_iter().map(|s| (s / n).sqrt().max(STD_FLOOR)).collect();
        Ok(Self { mean, std })
    }

    pub fn apply(&self, data: &LabeledDataset) -> Result<LabeledDataset> {
        self.map_rows(data, |v, m, s| (v - m) / s)
    }

    /// Inverse of [`apply`](Self::apply).
    pub fn invert(&self, data: &LabeledDataset) -> Result<LabeledDataset> {
        self.map_rows(data, |v, m, s| v * s + m)
    }

    fn map_rows(&self, data: &LabeledDataset, f: impl Fn(f64, f64, f64) -> f64) -> Result<LabeledDataset> {
        let d = self.mean.len();
        if data.dim() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                actual: data.dim(),
            });
        }
        let embeddings = data
            .embeddings()
            .chunks_exact(d)
            .flat_map(|row| {
                row.iter()
                    .zip(self.mean.iter().zip(&self.std))
                    .map(|(&v, (&m, &s))| f(v as f64, m, s) as f32)
                    .collect::<Vec<_>>()
            })
            .collect();
        data.with_embeddings(d, embeddings)
    }
}

/// Standardizes `train` column-wise and applies the same transform to
/// every dataset in `others`.
pub fn standardize(
    train: &LabeledDataset,
    others: &[&LabeledDataset],
) -> Result<(LabeledDataset, Vec<LabeledDataset>, StandardizationStats)> {
    let stats = StandardizationStats::fit(train)?;
    let train = stats.apply(train)?;
    let others = others.iter().map(|o| stats.apply(o)).collect::<Result<_>>()?;
    Ok((train, others, stats))
}
