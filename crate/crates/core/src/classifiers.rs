//! Fixed k-NN, adaptive k-NN (ANN) and reliability-weighted adaptive k-NN
//! (WANN).
//!
//! The adaptive rules size each query's neighborhood as `k_T = 1/eta` of its
//! single nearest training sample. ANN then takes a plain vote over those
//! `k_T` samples; WANN weights each vote by the voter's own `eta`. ANN's
//! `1/k_T` prefactor does not change the argmax, so raw tallies are reported.

use std::collections::HashMap;
use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::knn::{nearest_neighbors, tally, Exclude, NeighborList, RowsRef};
use crate::reliability::ReliabilityMap;
use crate::store::LabeledDataset;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub label: u32,
    pub k_used: usize,
    pub neighbor_ids: Vec<u64>,
    pub scores: Vec<f64>,
    /// The adaptive size exceeded the available support and was reduced.
    #[serde(default)]
    pub clamped: bool,
}

/// Neighborhood and weighting rule.
#[derive(Debug, Clone, Copy)]
pub enum Rule<'a> {
    Fixed(usize),
    Adaptive(&'a ReliabilityMap),
    /// Adaptive neighborhood from the map; votes weighted by `weights[id]` or,
    /// when `None`, by the map's own `eta`.
    WeightedAdaptive(&'a ReliabilityMap, Option<&'a HashMap<u64, f64>>),
}

/// Predicts a label for every query row under `rule`. `exclude` controls
/// which training rows each query may not see (none by default).
pub fn predict(queries: RowsRef<'_>, train: &LabeledDataset, rule: Rule<'_>, exclude: Exclude<'_>) -> Result<Vec<Prediction>> {
    let c = train.num_classes();
    let labels = train.labels();
    match rule {
        Rule::Fixed(k) => {
            let lists = nearest_neighbors(queries, train, k, exclude)?;
            Ok(lists
                .par_iter()
                .map(|list| {
                    let vote = tally(list.neighbors.iter().map(|nb| (labels[nb.index], 1.0)), c);
                    Prediction {
                        label: vote.label,
                        k_used: k,
                        neighbor_ids: list.ids(),
                        scores: vote.scores,
                        clamped: false,
                    }
                })
                .collect())
        }
        Rule::Adaptive(rmap) => adaptive(queries, train, rmap, None, exclude),
        Rule::WeightedAdaptive(rmap, weights) => {
            let w = match weights {
                Some(map) => train
                    .ids()
                    .iter()
                    .map(|&id| {
                        let &w = map.get(&id).ok_or(Error::Lookup(id))?;
                        if !(w > 0.0 && w.is_finite()) {
                            return Err(Error::validation(format!("weight {} for id {} must be positive", w, id)));
                        }
                        Ok(w)
                    })
                    .collect::<Result<Vec<_>>>()?,
                None => rmap.k_by_row(train)?.into_iter().map(|k| 1.0 / k as f64).collect(),
            };
            adaptive(queries, train, rmap, Some(&w), exclude)
        }
    }
}

fn adaptive(
    queries: RowsRef<'_>,
    train: &LabeledDataset,
    rmap: &ReliabilityMap,
    weights: Option<&[f64]>,
    exclude: Exclude<'_>,
) -> Result<Vec<Prediction>> {
    let ks = rmap.k_by_row(train)?;
    let available = available_support(queries, train, exclude);
    if available == 0 {
        return Err(Error::capacity("adaptive prediction needs a non-empty support set"));
    }
    // k_T never exceeds the ladder maximum, so one search covers every query.
    let depth = rmap.config().k_max.min(available);
    let lists = nearest_neighbors(queries, train, depth, exclude)?;
    let labels = train.labels();
    let c = train.num_classes();
    Ok(lists
        .par_iter()
        .map(|list| {
            let k_target = ks[list.neighbors[0].index];
            let k = k_target.min(list.neighbors.len());
            let hood = &list.neighbors[..k];
            let vote = tally(
                hood.iter()
                    .map(|nb| (labels[nb.index], weights.map_or(1.0, |w| w[nb.index]))),
                c,
            );
            Prediction {
                label: vote.label,
                k_used: k,
                neighbor_ids: hood.iter().map(|nb| nb.id).collect(),
                scores: vote.scores,
                clamped: k < k_target,
            }
        })
        .collect())
}

/// Smallest number of training rows any query can see under `exclude`.
fn available_support(queries: RowsRef<'_>, train: &LabeledDataset, exclude: Exclude<'_>) -> usize {
    let n = train.len();
    match exclude {
        Exclude::Nothing => n,
        Exclude::Ids(set) => n - train.ids().iter().filter(|id| set.contains(id)).count(),
        Exclude::QueryIds(qids) => {
            let collide = qids.len() == queries.len() && qids.iter().any(|id| train.ids().contains(id));
            if collide {
                n.saturating_sub(1)
            } else {
                n
            }
        }
    }
}

/// Unweighted vote over the `k` nearest training samples.
pub fn fixed_knn_predict(queries: RowsRef<'_>, train: &LabeledDataset, k: usize) -> Result<Vec<Prediction>> {
    predict(queries, train, Rule::Fixed(k), Exclude::Nothing)
}

/// `k_T = 1/eta` of the nearest training sample (ties by ascending id).
pub fn adaptive_neighborhood_size(query: &[f32], train: &LabeledDataset, rmap: &ReliabilityMap) -> Result<usize> {
    let lists: Vec<NeighborList> = nearest_neighbors(RowsRef::new(query, train.dim())?, train, 1, Exclude::Nothing)?;
    let nearest = lists
        .first()
        .and_then(|l| l.neighbors.first())
        .ok_or_else(|| Error::capacity("empty training set"))?;
    rmap.k(nearest.id).ok_or(Error::Lookup(nearest.id))
}

pub fn ann_predict(queries: RowsRef<'_>, train: &LabeledDataset, rmap: &ReliabilityMap) -> Result<Vec<Prediction>> {
    predict(queries, train, Rule::Adaptive(rmap), Exclude::Nothing)
}

pub fn wann_predict(queries: RowsRef<'_>, train: &LabeledDataset, rmap: &ReliabilityMap) -> Result<Vec<Prediction>> {
    predict(queries, train, Rule::WeightedAdaptive(rmap, None), Exclude::Nothing)
}

/// WANN with caller-supplied positive vote weights in place of `eta`; the
/// neighborhood size still comes from `rmap`.
pub fn wann_predict_weighted(
    queries: RowsRef<'_>,
    train: &LabeledDataset,
    rmap: &ReliabilityMap,
    weights: &HashMap<u64, f64>,
) -> Result<Vec<Prediction>> {
    predict(queries, train, Rule::WeightedAdaptive(rmap, Some(weights)), Exclude::Nothing)
}

/// `query_index,label,k_used`
pub fn write_predictions_csv<W: Write>(predictions: &[Prediction], mut w: W) -> Result<()> {
    writeln!(w, "query_index,label,k_used")?;
    for (i, p) in predictions.iter().enumerate() {
        writeln!(w, "{},{},{}", i, p.label, p.k_used)?;
    }
    Ok(())
}

/// Full neighbor evidence, one JSON array entry per query.
pub fn write_predictions_json<W: Write>(predictions: &[Prediction], mut w: W) -> Result<()> {
    #[derive(Serialize)]
    struct Row<'a> {
        query_index: usize,
        #[serde(flatten)]
        prediction: &'a Prediction,
    }
    let rows: Vec<Row> = predictions
        .iter()
        .enumerate()
        .map(|(query_index, prediction)| Row { query_index, prediction })
        .collect();
    serde_json::to_writer_pretty(&mut w, &rows)?;
    writeln!(w)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::reliability::ReliabilityConfig;

    fn toy_cfg() -> ReliabilityConfig {
        ReliabilityConfig::new(1, 5).unwrap()
    }

    fn rows(v: &[f32]) -> RowsRef<'_> {
        RowsRef::new(v, 1).unwrap()
    }

    #[test]
    fn fixed_knn_edges() {
        let train = LabeledDataset::with_sequential_ids(1, 3, vec![0.0, 1.0, 2.0, 3.0, 4.0], vec![2, 1, 1, 0, 1]).unwrap();
        let p = fixed_knn_predict(rows(&[3.0]), &train, 1).unwrap();
        assert_eq!(p[0].label, 0);
        assert_eq!(p[0].k_used, 1);
        let p = fixed_knn_predict(rows(&[0.0, 4.0]), &train, 5).unwrap();
        assert!(p.iter().all(|p| p.label == 1));
        assert!(matches!(fixed_knn_predict(rows(&[0.0]), &train, 6), Err(Error::Capacity(_))));
    }

    #[test]
    fn adaptive_size_from_nearest() {
        let train = LabeledDataset::with_sequential_ids(1, 2, vec![0.0, 10.0], vec![0, 1]).unwrap();
        let cfg = ReliabilityConfig::default();
        let rmap = ReliabilityMap::from_entries(cfg, [(0, 11), (1, 51)]).unwrap();
        assert_eq!(adaptive_neighborhood_size(&[1.0], &train, &rmap).unwrap(), 11);
        assert_eq!(adaptive_neighborhood_size(&[9.0], &train, &rmap).unwrap(), 51);
        let toy = ReliabilityMap::from_entries(toy_cfg(), [(0, 3), (1, 1)]).unwrap();
        assert_eq!(adaptive_neighborhood_size(&[0.2], &train, &toy).unwrap(), 3);
        let missing = ReliabilityMap::from_entries(cfg, [(1, 11)]).unwrap();
        assert!(matches!(adaptive_neighborhood_size(&[0.0], &train, &missing), Err(Error::Lookup(0))));
    }

    // Query at 0; nearest is a B with eta = 1/3, the next two are A with eta = 1/5.
    fn ann_vs_wann_fixture() -> (LabeledDataset, ReliabilityMap) {
        let train = LabeledDataset::with_sequential_ids(1, 2, vec![0.1, 0.2, 0.3, 5.0], vec![1, 0, 0, 1]).unwrap();
        let rmap = ReliabilityMap::from_entries(toy_cfg(), [(0, 3), (1, 5), (2, 5), (3, 1)]).unwrap();
        (train, rmap)
    }

    #[test]
    fn ann_counts_votes() {
        let (train, rmap) = ann_vs_wann_fixture();
        let p = ann_predict(rows(&[0.0]), &train, &rmap).unwrap();
        assert_eq!(p[0].k_used, 3);
        assert_eq!(p[0].neighbor_ids, vec![0, 1, 2]);
        assert_eq!(p[0].label, 0);
        assert_eq!(p[0].scores, vec![2.0, 1.0]);
    }

    #[test]
    fn wann_weights_votes() {
        let (train, rmap) = ann_vs_wann_fixture();
        let p = wann_predict(rows(&[0.0]), &train, &rmap).unwrap();
        assert_eq!(p[0].k_used, 3);
        assert!((p[0].scores[1] - 1.0 / 3.0).abs() < 1e-12);
        assert!((p[0].scores[0] - 2.0 / 5.0).abs() < 1e-12);
        assert_eq!(p[0].label, 0);
    }

    #[test]
    fn wann_overrides_ann_with_default_ladder_weights() {
        // nearest B with eta 1/3 on the toy ladder, two A neighbours at eta 1/51
        let cfg = ReliabilityConfig::new(3, 51).unwrap();
        let train = LabeledDataset::with_sequential_ids(1, 2, vec![0.1, 0.2, 0.3], vec![1, 0, 0]).unwrap();
        let rmap = ReliabilityMap::from_entries(cfg, [(0, 3), (1, 51), (2, 51)]).unwrap();
        let q = [0.0f32];
        assert_eq!(ann_predict(rows(&q), &train, &rmap).unwrap()[0].label, 0);
        assert_eq!(wann_predict(rows(&q), &train, &rmap).unwrap()[0].label, 1);
    }

    #[test]
    fn clamps_on_tiny_support() {
        let train = LabeledDataset::with_sequential_ids(1, 2, vec![0.0, 1.0], vec![0, 1]).unwrap();
        let rmap = ReliabilityMap::constant(ReliabilityConfig::default(), &train, 51).unwrap();
        let p = wann_predict(rows(&[0.0]), &train, &rmap).unwrap();
        assert_eq!(p[0].k_used, 2);
        assert!(p[0].clamped);
    }

    #[test]
    fn custom_weights_must_be_positive() {
        let (train, rmap) = ann_vs_wann_fixture();
        let mut w: HashMap<u64, f64> = train.ids().iter().map(|&id| (id, 1.0)).collect();
        assert!(wann_predict_weighted(rows(&[0.0]), &train, &rmap, &w).is_ok());
        w.insert(2, -1.0);
        assert!(wann_predict_weighted(rows(&[0.0]), &train, &rmap, &w).is_err());
        w.remove(&2);
        assert!(matches!(wann_predict_weighted(rows(&[0.0]), &train, &rmap, &w), Err(Error::Lookup(2))));
    }

    #[test]
    fn query_self_exclusion() {
        let train = LabeledDataset::with_sequential_ids(1, 2, vec![0.0, 0.1, 5.0], vec![1, 0, 0]).unwrap();
        let q = [0.0f32];
        let p = predict(rows(&q), &train, Rule::Fixed(1), Exclude::QueryIds(&[0])).unwrap();
        assert_eq!(p[0].neighbor_ids, vec![1]);
    }

    #[test]
    fn exports() {
        let (train, rmap) = ann_vs_wann_fixture();
        let p = wann_predict(rows(&[0.0, 5.0]), &train, &rmap).unwrap();
        let mut csv = Vec::new();
        write_predictions_csv(&p, &mut csv).unwrap();
        assert_eq!(String::from_utf8(csv).unwrap(), "query_index,label,k_used\n0,0,3\n1,1,1\n");
        let mut json = Vec::new();
        write_predictions_json(&p, &mut json).unwrap();
        let v: serde_json::Value = serde_json::from_slice(&json).unwrap();
        assert_eq!(v[0]["neighbor_ids"], serde_json::json!([0, 1, 2]));
        assert_eq!(v[1]["query_index"], 1);
    }
}
