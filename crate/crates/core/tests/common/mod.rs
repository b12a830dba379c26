//! Brute-force reference implementations and corpus generators shared by the
//! integration tests. Nothing here calls into the library's search or voting
//! code; the oracles work from raw rows with plain loops and exact arithmetic.

#![allow(dead_code)]

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use wann::LabeledDataset;

/// A random labeled corpus plus query rows, kept as plain vectors.
#[derive(Debug, Clone)]
pub struct Instance {
    pub dim: usize,
    pub classes: usize,
    pub emb: Vec<f32>,
    pub labels: Vec<u32>,
    pub ids: Vec<u64>,
    pub queries: Vec<f32>,
}

impl Instance {
    pub fn n(&self) -> usize {
        self.labels.len()
    }

    pub fn row(&self, i: usize) -> &[f32] {
        &self.emb[i * self.dim..(i + 1) * self.dim]
    }

    pub fn query(&self, q: usize) -> &[f32] {
        &self.queries[q * self.dim..(q + 1) * self.dim]
    }

    pub fn num_queries(&self) -> usize {
        self.queries.len() / self.dim
    }

    pub fn dataset(&self) -> LabeledDataset {
        LabeledDataset::new(self.dim, self.classes, self.emb.clone(), self.labels.clone(), self.ids.clone()).unwrap()
    }
}

/// Random instance with `n` in `k_max+1..=max_n`, `d <= max_d`, `C <= max_c`.
/// Half the instances use a small integer grid so distance ties are common.
pub fn random_instance(seed: u64, max_n: usize, max_d: usize, max_c: usize, k_max: usize) -> Instance {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.random_range(k_max + 1..=max_n);
    let dim = rng.random_range(1..=max_d);
    let classes = rng.random_range(2..=max_c);
    let grid = rng.random_bool(0.5);
    let draw = |rng: &mut ChaCha8Rng| -> f32 {
        if grid {
            rng.random_range(0..4) as f32
        } else {
            rng.random_range(-1.0f32..1.0)
        }
    };
    let emb: Vec<f32> = (0..n * dim).map(|_| draw(&mut rng)).collect();
    let m = rng.random_range(1..=20);
    let queries: Vec<f32> = (0..m * dim).map(|_| draw(&mut rng)).collect();
    let labels: Vec<u32> = (0..n).map(|_| rng.random_range(0..classes as u32)).collect();
    let mut ids: Vec<u64> = (0..n as u64).map(|i| 3 * i + 7).collect();
    ids.shuffle(&mut rng);
    Instance {
        dim,
        classes,
        emb,
        labels,
        ids,
        queries,
    }
}

pub fn naive_sq_dist(a: &[f32], b: &[f32]) -> f64 {
    let mut s = 0.0f64;
    for i in 0..a.len() {
        let t = a[i] as f64 - b[i] as f64;
        s += t * t;
    }
    s
}

/// Indices of the `k` nearest rows to `q` ordered by (distance, id), skipping
/// row `skip`.
pub fn naive_knn(inst: &Instance, q: &[f32], k: usize, skip: Option<usize>) -> Vec<usize> {
    let mut all: Vec<(f64, u64, usize)> = Vec::new();
    for i in 0..inst.n() {
        if Some(i) == skip {
            continue;
        }
        all.push((naive_sq_dist(q, inst.row(i)), inst.ids[i], i));
    }
    all.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then(a.1.cmp(&b.1)));
    all.into_iter().take(k).map(|t| t.2).collect()
}

/// Smallest class index among the top integer scores.
pub fn naive_argmax(scores: &[u64]) -> u32 {
    let mut best = 0;
    for c in 1..scores.len() {
        if scores[c] > scores[best] {
            best = c;
        }
    }
    best as u32
}

/// Unweighted vote over `hood`.
pub fn naive_vote(inst: &Instance, hood: &[usize]) -> u32 {
    let mut s = vec![0u64; inst.classes];
    for &i in hood {
        s[inst.labels[i] as usize] += 1;
    }
    naive_argmax(&s)
}

/// Vote where row `i` counts `lcm / k_star[i]`, i.e. `eta` scaled to integers.
pub fn naive_weighted_vote(inst: &Instance, hood: &[usize], k_star: &[usize], lcm: u64) -> u32 {
    let mut s = vec![0u64; inst.classes];
    for &i in hood {
        assert_eq!(lcm % k_star[i] as u64, 0);
        s[inst.labels[i] as usize] += lcm / k_star[i] as u64;
    }
    naive_argmax(&s)
}

/// Per-row smallest odd `k` in `k_min..=k_max` whose leave-one-out vote
/// returns the row's own label; `k_max` when none does.
pub fn naive_reliability(inst: &Instance, k_min: usize, k_max: usize) -> Vec<usize> {
    (0..inst.n())
        .map(|i| {
            let mut k = k_min;
            while k <= k_max {
                let hood = naive_knn(inst, inst.row(i), k, Some(i));
                if naive_vote(inst, &hood) == inst.labels[i] {
                    return k;
                }
                k += 2;
            }
            k_max
        })
        .collect()
}

pub fn naive_fixed(inst: &Instance, k: usize) -> Vec<u32> {
    (0..inst.num_queries())
        .map(|q| naive_vote(inst, &naive_knn(inst, inst.query(q), k, None)))
        .collect()
}

pub fn naive_ann(inst: &Instance, k_star: &[usize]) -> Vec<u32> {
    (0..inst.num_queries())
        .map(|q| {
            let nearest = naive_knn(inst, inst.query(q), 1, None)[0];
            naive_vote(inst, &naive_knn(inst, inst.query(q), k_star[nearest], None))
        })
        .collect()
}

pub fn naive_wann(inst: &Instance, k_star: &[usize], lcm: u64) -> Vec<u32> {
    (0..inst.num_queries())
        .map(|q| {
            let nearest = naive_knn(inst, inst.query(q), 1, None)[0];
            let hood = naive_knn(inst, inst.query(q), k_star[nearest], None);
            naive_weighted_vote(inst, &hood, k_star, lcm)
        })
        .collect()
}

/// Isotropic Gaussian mixture with fixed, evenly spread class means on a
/// circle of radius `radius` in the first two coordinates.
pub fn ring_mixture(classes: usize, per_class: usize, dim: usize, radius: f64, sigma: f64, seed: u64) -> LabeledDataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut emb = Vec::with_capacity(classes * per_class * dim);
    let mut labels = Vec::new();
    for c in 0..classes {
        let angle = 2.0 * std::f64::consts::PI * c as f64 / classes as f64;
        for _ in 0..per_class {
            for j in 0..dim {
                let mean = match j {
                    0 => radius * angle.cos(),
                    1 => radius * angle.sin(),
                    _ => 0.0,
                };
                let z: f64 = rng.sample(rand_distr::StandardNormal);
                emb.push((mean + sigma * z) as f32);
            }
            labels.push(c as u32);
        }
    }
    LabeledDataset::with_sequential_ids(dim, classes, emb, labels).unwrap()
}
