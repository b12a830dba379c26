//! Exact brute-force nearest-neighbor kernels.
//!
//! Distances are squared Euclidean, accumulated in `f64` one coordinate at a
//! time. Neighbors are ordered by `(distance, id)`; votes break ties toward
//! the smallest class index. Query rows are processed in blocks (in
//! parallel across blocks) and every per-query result is independent of the
//! schedule.

use std::cmp::Ordering;
use std::collections::{HashMap, HashSet};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::store::LabeledDataset;

/// Default number of query rows handled per block.
pub const DEFAULT_BLOCK_SIZE: usize = 256;

/// Two scores closer than this (relative to the larger one) count as a tie.
///
/// Integer tallies are never merged by this; it only absorbs rounding in
/// sums of real-valued weights, so that mathematically equal scores resolve
/// by class index no matter the summation order or scale of the weights.
pub const VOTE_TIE_RTOL: f64 = 1e-9;

/// Borrowed row-major matrix of `f32` rows.
#[derive(Debug, Clone, Copy)]
pub struct RowsRef<'a> {
    data: &'a [f32],
    dim: usize,
}

impl<'a> RowsRef<'a> {
    pub fn new(data: &'a [f32], dim: usize) -> Result<Self> {
        if dim == 0 || data.len() % dim != 0 {
            return Err(Error::validation(format!(
                "{} values do not form rows of width {}",
                data.len(),
                dim
            )));
        }
        Ok(Self { data, dim })
    }

    pub(crate) fn from_parts(data: &'a [f32], dim: usize) -> Self {
        Self { data, dim }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.data.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn row(&self, i: usize) -> &'a [f32] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }
}

#[inline]
pub fn sq_distance(a: &[f32], b: &[f32]) -> f64 {
    let mut acc = 0.0f64;
    for (&x, &y) in a.iter().zip(b) {
        let t = x as f64 - y as f64;
        acc += t * t;
    }
    acc.max(0.0)
}

/// Row-major `a.len() x b.len()` matrix of squared Euclidean distances.
pub fn pairwise_sq_distances(a: RowsRef<'_>, b: RowsRef<'_>) -> Result<Vec<f64>> {
    if a.dim() != b.dim() {
        return Err(Error::DimensionMismatch {
            expected: a.dim(),
            actual: b.dim(),
        });
    }
    let n = b.len();
    let mut out = vec![0.0; a.len() * n];
    if n == 0 {
        return Ok(out);
    }
    out.par_chunks_mut(n).enumerate().for_each(|(i, row)| {
        let q = a.row(i);
        for (j, slot) in row.iter_mut().enumerate() {
            *slot = sq_distance(q, b.row(j));
        }
    });
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Neighbor {
    pub id: u64,
    /// Row of the support dataset.
    pub index: usize,
    pub sq_distance: f64,
}

impl Neighbor {
    pub fn distance(&self) -> f64 {
        self.sq_distance.sqrt()
    }

    fn order(&self, other: &Self) -> Ordering {
        self.sq_distance
            .total_cmp(&other.sq_distance)
            .then(self.id.cmp(&other.id))
    }
}

/// The `k` nearest support rows of one query, nearest first.
#[derive(Debug, Clone, PartialEq)]
pub struct NeighborList {
    pub query_index: usize,
    pub neighbors: Vec<Neighbor>,
}

impl NeighborList {
    pub fn ids(&self) -> Vec<u64> {
        self.neighbors.iter().map(|n| n.id).collect()
    }
}

/// Support rows to leave out of a search.
#[derive(Debug, Clone, Copy, Default)]
pub enum Exclude<'a> {
    #[default]
    Nothing,
    /// The same ids are excluded for every query.
    Ids(&'a HashSet<u64>),
    /// Query `i` excludes the support row whose id is `query_ids[i]`.
    QueryIds(&'a [u64]),
}

/// Exact k-NN search with a configurable query block size.
#[derive(Debug, Clone, Copy)]
pub struct KnnSearch {
    pub block_size: usize,
}

impl Default for KnnSearch {
    fn default() -> Self {
        Self {
            block_size: DEFAULT_BLOCK_SIZE,
        }
    }
}

impl KnnSearch {
    pub fn search(
        &self,
        queries: RowsRef<'_>,
        support: &LabeledDataset,
        k: usize,
        exclude: Exclude<'_>,
    ) -> Result<Vec<NeighborList>> {
        if queries.dim() != support.dim() {
            return Err(Error::DimensionMismatch {
                expected: support.dim(),
                actual: queries.dim(),
            });
        }
        let n = support.len();
        match exclude {
            Exclude::Nothing => check_capacity(k, n)?,
            Exclude::Ids(set) => {
                let excluded = support.ids().iter().filter(|id| set.contains(id)).count();
                check_capacity(k, n - excluded)?;
            }
            Exclude::QueryIds(qids) => {
                if qids.len() != queries.len() {
                    return Err(Error::validation(format!(
                        "{} query ids for {} queries",
                        qids.len(),
                        queries.len()
                    )));
                }
                let present: HashSet<u64> = support.ids().iter().copied().collect();
                if qids.iter().any(|id| present.contains(id)) {
                    check_capacity(k, n - 1)?;
                } else {
                    check_capacity(k, n)?;
                }
            }
        }

        let block = self.block_size.max(1);
        let support_rows = support.rows();
        let ids = support.ids();
        let blocks: Vec<Vec<NeighborList>> = (0..queries.len())
            .collect::<Vec<_>>()
            .par_chunks(block)
            .map(|chunk| {
                let mut scratch: Vec<Neighbor> = Vec::with_capacity(n);
                chunk
                    .iter()
                    .map(|&qi| {
                        let q = queries.row(qi);
                        scratch.clear();
                        for j in 0..n {
                            let id = ids[j];
                            let skip = match exclude {
                                Exclude::Nothing => false,
                                Exclude::Ids(set) => set.contains(&id),
                                Exclude::QueryIds(qids) => qids[qi] == id,
                            };
                            if !skip {
                                scratch.push(Neighbor {
                                    id,
                                    index: j,
                                    sq_distance: sq_distance(q, support_rows.row(j)),
                                });
                            }
                        }
                        NeighborList {
                            query_index: qi,
                            neighbors: top_k(&mut scratch, k),
                        }
                    })
                    .collect()
            })
            .collect();
        Ok(blocks.into_iter().flatten().collect())
    }
}

fn check_capacity(k: usize, available: usize) -> Result<()> {
    if k > available {
        return Err(Error::capacity(format!(
            "k = {} exceeds the {} available support rows",
            k, available
        )));
    }
    Ok(())
}

fn top_k(candidates: &mut [Neighbor], k: usize) -> Vec<Neighbor> {
    if k == 0 {
        return Vec::new();
    }
    if k < candidates.len() {
        candidates.select_nth_unstable_by(k - 1, Neighbor::order);
    }
    let head = &mut candidates[..k];
    head.sort_unstable_by(Neighbor::order);
    head.to_vec()
}

/// The `k` nearest support rows of every query, with the default block size.
pub fn nearest_neighbors(
    queries: RowsRef<'_>,
    support: &LabeledDataset,
    k: usize,
    exclude: Exclude<'_>,
) -> Result<Vec<NeighborList>> {
    KnnSearch::default().search(queries, support, k, exclude)
}

/// Per-class tally and the winning class.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VoteResult {
    pub label: u32,
    pub scores: Vec<f64>,
}

impl VoteResult {
    /// Picks the smallest class index among the top-scoring classes.
    pub fn from_scores(scores: Vec<f64>) -> Self {
        let label = argmax_smallest_index(&scores);
        Self { label, scores }
    }
}

pub(crate) fn argmax_smallest_index(scores: &[f64]) -> u32 {
    let best = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let floor = best - VOTE_TIE_RTOL * best.abs();
    scores.iter().position(|&s| s >= floor).unwrap_or(0) as u32
}

/// Tally of `(label, weight)` pairs in neighbor order.
pub(crate) fn tally(votes: impl Iterator<Item = (u32, f64)>, num_classes: usize) -> VoteResult {
    let mut scores = vec![0.0; num_classes];
    for (label, w) in votes {
        scores[label as usize] += w;
    }
    VoteResult::from_scores(scores)
}

/// Majority vote over `neighbors`; each neighbor counts `weights[id]`, or 1
/// when unweighted.
pub fn majority_vote(
    neighbors: &NeighborList,
    labels: &HashMap<u64, u32>,
    num_classes: usize,
    weights: Option<&HashMap<u64, f64>>,
) -> Result<VoteResult> {
    let mut votes = Vec::with_capacity(neighbors.neighbors.len());
    for nb in &neighbors.neighbors {
        let &label = labels.get(&nb.id).ok_or(Error::Lookup(nb.id))?;
        if label as usize >= num_classes {
            return Err(Error::validation(format!("label {} of id {} outside [0, {})", label, nb.id, num_classes)));
        }
        let w = match weights {
            None => 1.0,
            Some(map) => {
                let &w = map.get(&nb.id).ok_or(Error::Lookup(nb.id))?;
                if !(w > 0.0 && w.is_finite()) {
                    return Err(Error::validation(format!("weight {} for id {} must be positive", w, nb.id)));
                }
                w
            }
        };
        votes.push((label, w));
    }
    Ok(tally(votes.into_iter(), num_classes))
}

/// One row of a neighbor evidence report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NeighborEvidence {
    pub id: u64,
    pub label: u32,
    /// Euclidean (not squared) distance.
    pub distance: f64,
}

/// The `k` closest support samples of each query, with their labels, for
/// inspecting suspicious annotations.
pub fn neighbors_report(queries: RowsRef<'_>, support: &LabeledDataset, k: usize) -> Result<Vec<Vec<NeighborEvidence>>> {
    let lists = nearest_neighbors(queries, support, k, Exclude::Nothing)?;
    Ok(lists
        .into_iter()
        .map(|list| {
            list.neighbors
                .iter()
                .map(|nb| NeighborEvidence {
                    id: nb.id,
                    label: support.labels()[nb.index],
                    distance: nb.distance(),
                })
                .collect()
        })
        .collect())
}
