mod common;

use std::collections::HashMap;

use common::*;
use proptest::prelude::*;
use wann::classifiers::{adaptive_neighborhood_size, predict, Rule};
use wann::knn::{Exclude, RowsRef};
use wann::*;

const LCM: u64 = 15;

fn ladder() -> ReliabilityConfig {
    ReliabilityConfig::new(1, 5).unwrap()
}

fn labels_of(preds: &[Prediction]) -> Vec<u32> {
    preds.iter().map(|p| p.label).collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn neighbors_match_brute_force(seed in any::<u64>(), k in 1usize..=8) {
        let inst = random_instance(seed, 120, 16, 5, 8);
        let ds = inst.dataset();
        let q = RowsRef::new(&inst.queries, inst.dim).unwrap();
        let lists = nearest_neighbors(q, &ds, k, Exclude::Nothing).unwrap();
        for (qi, list) in lists.iter().enumerate() {
            let want = naive_knn(&inst, inst.query(qi), k, None);
            let got: Vec<usize> = list.neighbors.iter().map(|nb| nb.index).collect();
            prop_assert_eq!(got, want);
            for nb in &list.neighbors {
                prop_assert_eq!(nb.id, inst.ids[nb.index]);
                prop_assert_eq!(nb.sq_distance, naive_sq_dist(inst.query(qi), inst.row(nb.index)));
            }
        }
    }

    #[test]
    fn reliability_matches_brute_force(seed in any::<u64>()) {
        let inst = random_instance(seed, 150, 16, 5, 5);
        let ds = inst.dataset();
        let rmap = compute_reliability_map(&ds, ladder()).unwrap();
        let want = naive_reliability(&inst, 1, 5);
        for i in 0..inst.n() {
            prop_assert_eq!(rmap.k(inst.ids[i]), Some(want[i]));
        }
    }

    #[test]
    fn classifiers_match_brute_force(seed in any::<u64>(), k in prop::sample::select(vec![1usize, 3, 5])) {
        let inst = random_instance(seed, 150, 16, 5, 5);
        let ds = inst.dataset();
        let q = RowsRef::new(&inst.queries, inst.dim).unwrap();
        let rmap = compute_reliability_map(&ds, ladder()).unwrap();
        let k_star = naive_reliability(&inst, 1, 5);
        prop_assert_eq!(labels_of(&fixed_knn_predict(q, &ds, k).unwrap()), naive_fixed(&inst, k));
        prop_assert_eq!(labels_of(&ann_predict(q, &ds, &rmap).unwrap()), naive_ann(&inst, &k_star));
        prop_assert_eq!(labels_of(&wann_predict(q, &ds, &rmap).unwrap()), naive_wann(&inst, &k_star, LCM));
        for qi in 0..inst.num_queries() {
            let nearest = naive_knn(&inst, inst.query(qi), 1, None)[0];
            prop_assert_eq!(adaptive_neighborhood_size(inst.query(qi), &ds, &rmap).unwrap(), k_star[nearest]);
        }
    }

    #[test]
    fn pairwise_distances_match_loops(seed in any::<u64>()) {
        let inst = random_instance(seed, 60, 16, 3, 1);
        let q = RowsRef::new(&inst.queries, inst.dim).unwrap();
        let t = RowsRef::new(&inst.emb, inst.dim).unwrap();
        let d = pairwise_sq_distances(q, t).unwrap();
        for a in 0..inst.num_queries() {
            for b in 0..inst.n() {
                let want = naive_sq_dist(inst.query(a), inst.row(b));
                let got = d[a * inst.n() + b];
                prop_assert!((got - want).abs() <= 1e-4 * want.max(1e-12));
            }
        }
    }
}

#[test]
fn exclusion_by_query_id_matches_leave_one_out() {
    for seed in 0..20 {
        let inst = random_instance(seed, 80, 6, 4, 5);
        let ds = inst.dataset();
        let lists = nearest_neighbors(ds.rows(), &ds, 5, Exclude::QueryIds(ds.ids())).unwrap();
        for (i, list) in lists.iter().enumerate() {
            let got: Vec<usize> = list.neighbors.iter().map(|nb| nb.index).collect();
            assert_eq!(got, naive_knn(&inst, inst.row(i), 5, Some(i)));
        }
    }
}

#[test]
fn majority_vote_matches_integer_tally() {
    for seed in 0..20 {
        let inst = random_instance(seed, 80, 4, 5, 7);
        let ds = inst.dataset();
        let q = RowsRef::new(&inst.queries, inst.dim).unwrap();
        let lists = nearest_neighbors(q, &ds, 7, Exclude::Nothing).unwrap();
        let labels: HashMap<u64, u32> = inst.ids.iter().copied().zip(inst.labels.iter().copied()).collect();
        let k_star: Vec<usize> = (0..inst.n()).map(|i| [1, 3, 5][i % 3]).collect();
        let weights: HashMap<u64, f64> = inst.ids.iter().zip(&k_star).map(|(&id, &k)| (id, 1.0 / k as f64)).collect();
        for list in &lists {
            let hood: Vec<usize> = list.neighbors.iter().map(|nb| nb.index).collect();
            let plain = majority_vote(list, &labels, inst.classes, None).unwrap();
            assert_eq!(plain.label, naive_vote(&inst, &hood));
            let weighted = majority_vote(list, &labels, inst.classes, Some(&weights)).unwrap();
            assert_eq!(weighted.label, naive_weighted_vote(&inst, &hood, &k_star, LCM));
        }
    }
}

#[test]
fn block_size_does_not_change_results() {
    let inst = random_instance(11, 300, 8, 5, 5);
    let ds = inst.dataset();
    let reference = wann::knn::KnnSearch { block_size: 1 }
        .search(ds.rows(), &ds, 9, Exclude::Nothing)
        .unwrap();
    for block_size in [2, 7, 256, 1000] {
        let got = wann::knn::KnnSearch { block_size }.search(ds.rows(), &ds, 9, Exclude::Nothing).unwrap();
        assert_eq!(got, reference);
    }
}

#[test]
fn weighted_rule_with_eta_weights_equals_wann() {
    let inst = random_instance(5, 200, 5, 4, 5);
    let ds = inst.dataset();
    let q = RowsRef::new(&inst.queries, inst.dim).unwrap();
    let rmap = compute_reliability_map(&ds, ladder()).unwrap();
    let eta: HashMap<u64, f64> = rmap.iter().map(|(id, k)| (id, 1.0 / k as f64)).collect();
    let a = predict(q, &ds, Rule::WeightedAdaptive(&rmap, Some(&eta)), Exclude::Nothing).unwrap();
    let b = wann_predict(q, &ds, &rmap).unwrap();
    assert_eq!(a, b);
}
