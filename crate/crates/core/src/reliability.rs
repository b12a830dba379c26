//! Per-sample label reliability.
//!
//! A training sample's reliability is `eta = 1/k*`, where `k*` is the
//! smallest `k` in the odd ladder `k_min, k_min + 2, ..., k_max` for which the
//! unweighted vote of its `k` nearest other training samples returns its own
//! label. Samples never classified correctly get `eta = 1/k_max`, so a sample
//! first recovered at exactly `k_max` cannot be told apart from one that is
//! never recovered; [`filter_unreliable`] drops both.

use std::collections::BTreeMap;
use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::knn::{argmax_smallest_index, nearest_neighbors, Exclude, NeighborList};
use crate::store::LabeledDataset;

pub const DEFAULT_K_MIN: usize = 11;
pub const DEFAULT_K_MAX: usize = 51;
pub const LADDER_STEP: usize = 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReliabilityConfig {
    pub k_min: usize,
    pub k_max: usize,
}

impl Default for ReliabilityConfig {
    fn default() -> Self {
        Self {
            k_min: DEFAULT_K_MIN,
            k_max: DEFAULT_K_MAX,
        }
    }
}

impl ReliabilityConfig {
    pub fn new(k_min: usize, k_max: usize) -> Result<Self> {
        let cfg = Self { k_min, k_max };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.k_min % 2 == 0 || self.k_max % 2 == 0 {
            return Err(Error::validation(format!(
                "k_min ({}) and k_max ({}) must be odd",
                self.k_min, self.k_max
            )));
        }
        if self.k_min > self.k_max {
            return Err(Error::validation(format!("k_min {} exceeds k_max {}", self.k_min, self.k_max)));
        }
        Ok(())
    }

    /// `k_min, k_min + 2, ..., k_max`.
    pub fn ladder(&self) -> impl Iterator<Item = usize> {
        (self.k_min..=self.k_max).step_by(LADDER_STEP)
    }

    pub fn contains(&self, k: usize) -> bool {
        k >= self.k_min && k <= self.k_max && (k - self.k_min) % LADDER_STEP == 0
    }
}

/// Sample id to the neighborhood size `k` that defines its reliability
/// `eta = 1/k`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReliabilityMap {
    config: ReliabilityConfig,
    entries: BTreeMap<u64, u32>,
}

impl ReliabilityMap {
    /// Builds a map from explicit `(id, k)` pairs; every `k` must be on the
    /// configured ladder.
    pub fn from_entries(config: ReliabilityConfig, entries: impl IntoIterator<Item = (u64, usize)>) -> Result<Self> {
        config.validate()?;
        let mut map = BTreeMap::new();
        for (id, k) in entries {
            if !config.contains(k) {
                return Err(Error::validation(format!(
                    "k = {} for id {} is not on the ladder {}..={} step {}",
                    k, id, config.k_min, config.k_max, LADDER_STEP
                )));
            }
            map.insert(id, k as u32);
        }
        Ok(Self { config, entries: map })
    }

    /// Every sample of `data` mapped to the same `k`.
    pub fn constant(config: ReliabilityConfig, data: &LabeledDataset, k: usize) -> Result<Self> {
        Self::from_entries(config, data.ids().iter().map(|&id| (id, k)))
    }

    pub fn config(&self) -> ReliabilityConfig {
        self.config
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn k(&self, id: u64) -> Option<usize> {
        self.entries.get(&id).map(|&k| k as usize)
    }

    pub fn eta(&self, id: u64) -> Option<f64> {
        self.k(id).map(|k| 1.0 / k as f64)
    }

    /// `(id, k)` in ascending id order.
    pub fn iter(&self) -> impl Iterator<Item = (u64, usize)> + '_ {
        self.entries.iter().map(|(&id, &k)| (id, k as usize))
    }

    /// True when `eta = 1/k_max`.
    pub fn is_unreliable(&self, id: u64) -> Option<bool> {
        self.k(id).map(|k| k == self.config.k_max)
    }

    /// `k` for each row of `data`, in row order.
    pub(crate) fn k_by_row(&self, data: &LabeledDataset) -> Result<Vec<usize>> {
        data.ids().iter().map(|&id| self.k(id).ok_or(Error::Lookup(id))).collect()
    }

    /// Audit table with header `id,eta,k_star`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "id,eta,k_star")?;
        for (id, k) in self.iter() {
            writeln!(w, "{},{},{}", id, 1.0 / k as f64, k)?;
        }
        Ok(())
    }
}

/// Smallest ladder size at which the leave-one-out vote recovers `label`,
/// or `k_max` when none does. `neighbors` must hold at least `k_max` entries.
pub(crate) fn scan_ladder(neighbor_labels: &[u32], label: u32, num_classes: usize, cfg: ReliabilityConfig) -> usize {
    let mut counts = vec![0.0f64; num_classes];
    let mut used = 0;
    for k in cfg.ladder() {
        for &l in &neighbor_labels[used..k] {
            counts[l as usize] += 1.0;
        }
        used = k;
        if argmax_smallest_index(&counts) == label {
            return k;
        }
    }
    cfg.k_max
}

/// Leave-one-out neighbors (up to `k_max`) of every training row.
pub(crate) fn leave_one_out_neighbors(train: &LabeledDataset, k_max: usize) -> Result<Vec<NeighborList>> {
    nearest_neighbors(train.rows(), train, k_max, Exclude::QueryIds(train.ids()))
}

/// Reliability of every training sample under its own (possibly noisy) label.
pub fn compute_reliability_map(train: &LabeledDataset, cfg: ReliabilityConfig) -> Result<ReliabilityMap> {
    cfg.validate()?;
    if train.len() <= cfg.k_max {
        return Err(Error::capacity(format!(
            "reliability needs more than k_max = {} training samples, got {}",
            cfg.k_max,
            train.len()
        )));
    }
    let lists = leave_one_out_neighbors(train, cfg.k_max)?;
    let labels = train.labels();
    let ks: Vec<usize> = lists
        .par_iter()
        .map(|list| {
            let nl: Vec<u32> = list.neighbors.iter().map(|nb| labels[nb.index]).collect();
            scan_ladder(&nl, labels[list.query_index], train.num_classes(), cfg)
        })
        .collect();
    Ok(ReliabilityMap {
        config: cfg,
        entries: train.ids().iter().zip(ks).map(|(&id, k)| (id, k as u32)).collect(),
    })
}

/// Training samples with `eta > 1/k_max`, in their original order.
pub fn filter_unreliable(train: &LabeledDataset, rmap: &ReliabilityMap) -> Result<LabeledDataset> {
    let ks = rmap.k_by_row(train)?;
    let keep: Vec<usize> = ks
        .iter()
        .enumerate()
        .filter(|(_, &k)| k < rmap.config().k_max)
        .map(|(i, _)| i)
        .collect();
    Ok(train.select(&keep))
}
