mod common;

use std::collections::HashMap;

use common::*;
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use wann::classifiers::wann_predict_weighted;
use wann::knn::RowsRef;
use wann::*;

fn labels_of(preds: &[Prediction]) -> Vec<u32> {
    preds.iter().map(|p| p.label).collect()
}

fn ladder() -> ReliabilityConfig {
    ReliabilityConfig::new(1, 5).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn constant_maps_collapse_to_fixed_knn(seed in any::<u64>(), k in prop::sample::select(vec![1usize, 3, 5])) {
        let inst = random_instance(seed, 200, 8, 5, 5);
        let ds = inst.dataset();
        let q = RowsRef::new(&inst.queries, inst.dim).unwrap();
        let rmap = ReliabilityMap::constant(ladder(), &ds, k).unwrap();
        let fixed = labels_of(&fixed_knn_predict(q, &ds, k).unwrap());
        prop_assert_eq!(labels_of(&ann_predict(q, &ds, &rmap).unwrap()), fixed.clone());
        prop_assert_eq!(labels_of(&wann_predict(q, &ds, &rmap).unwrap()), fixed);
    }

    #[test]
    fn uniform_weights_reduce_wann_to_ann(seed in any::<u64>(), w in 0.01f64..100.0) {
        let inst = random_instance(seed, 200, 8, 5, 5);
        let ds = inst.dataset();
        let q = RowsRef::new(&inst.queries, inst.dim).unwrap();
        let rmap = compute_reliability_map(&ds, ladder()).unwrap();
        let weights: HashMap<u64, f64> = inst.ids.iter().map(|&id| (id, w)).collect();
        prop_assert_eq!(
            labels_of(&wann_predict_weighted(q, &ds, &rmap, &weights).unwrap()),
            labels_of(&ann_predict(q, &ds, &rmap).unwrap())
        );
    }

    #[test]
    fn scaling_eta_keeps_wann_labels(seed in any::<u64>(), lambda in prop::sample::select(vec![0.5f64, 2.0, 10.0, 1e-3, 1e3])) {
        let inst = random_instance(seed, 200, 8, 5, 5);
        let ds = inst.dataset();
        let q = RowsRef::new(&inst.queries, inst.dim).unwrap();
        let rmap = compute_reliability_map(&ds, ladder()).unwrap();
        let scaled: HashMap<u64, f64> = rmap.iter().map(|(id, k)| (id, lambda / k as f64)).collect();
        prop_assert_eq!(
            labels_of(&wann_predict_weighted(q, &ds, &rmap, &scaled).unwrap()),
            labels_of(&wann_predict(q, &ds, &rmap).unwrap())
        );
    }

    #[test]
    fn training_order_is_irrelevant(seed in any::<u64>()) {
        let inst = random_instance(seed, 150, 8, 5, 5);
        let ds = inst.dataset();
        let mut order: Vec<usize> = (0..inst.n()).collect();
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed ^ 0x5eed));
        let shuffled = ds.select(&order);
        let q = RowsRef::new(&inst.queries, inst.dim).unwrap();
        let a = compute_reliability_map(&ds, ladder()).unwrap();
        let b = compute_reliability_map(&shuffled, ladder()).unwrap();
        prop_assert_eq!(&a, &b);
        prop_assert_eq!(labels_of(&wann_predict(q, &ds, &a).unwrap()), labels_of(&wann_predict(q, &shuffled, &b).unwrap()));
        prop_assert_eq!(labels_of(&ann_predict(q, &ds, &a).unwrap()), labels_of(&ann_predict(q, &shuffled, &b).unwrap()));
        prop_assert_eq!(labels_of(&fixed_knn_predict(q, &ds, 3).unwrap()), labels_of(&fixed_knn_predict(q, &shuffled, 3).unwrap()));
    }

    #[test]
    fn eta_lies_on_the_ladder(seed in any::<u64>(), k_min in prop::sample::select(vec![1usize, 3]), span in 0usize..3) {
        let k_max = k_min + 2 * span;
        let inst = random_instance(seed, 120, 6, 5, k_max);
        let rmap = compute_reliability_map(&inst.dataset(), ReliabilityConfig::new(k_min, k_max).unwrap()).unwrap();
        prop_assert_eq!(rmap.len(), inst.n());
        for (_, k) in rmap.iter() {
            prop_assert!(k % 2 == 1 && k >= k_min && k <= k_max);
        }
    }

    #[test]
    fn filter_keeps_exactly_the_reliable(seed in any::<u64>()) {
        let inst = random_instance(seed, 150, 6, 4, 5);
        let ds = inst.dataset();
        let rmap = compute_reliability_map(&ds, ladder()).unwrap();
        let kept = filter_unreliable(&ds, &rmap).unwrap();
        let want: Vec<u64> = inst.ids.iter().copied().filter(|&id| rmap.eta(id).unwrap() > 1.0 / 5.0).collect();
        prop_assert_eq!(kept.ids(), &want[..]);
    }

    #[test]
    fn flda_is_lda_on_the_filtered_set(seed in 0u64..1000) {
        let ds = ring_mixture(3, 40, 5, 3.0, 1.0, seed);
        let noisy = ds
            .with_labels(ds.labels().iter().enumerate().map(|(i, &l)| if i % 7 == 0 { (l + 1) % 3 } else { l }).collect())
            .unwrap();
        let rmap = compute_reliability_map(&noisy, ReliabilityConfig::new(3, 9).unwrap()).unwrap();
        let flda = fit_flda(&noisy, &rmap).unwrap();
        let lda = fit_lda(&filter_unreliable(&noisy, &rmap).unwrap()).unwrap();
        prop_assert_eq!(flda.fit_sample_count, lda.fit_sample_count);
        prop_assert_eq!(flda.output_dim, lda.output_dim);
        for (a, b) in flda.components.iter().zip(&lda.components) {
            prop_assert!((a - b).abs() < 1e-12);
        }
    }
}
