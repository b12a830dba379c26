//! Label-corruption generators.
//!
//! * symmetric: each sample is corrupted with probability `rate` and moved to
//!   a class drawn uniformly from the other `C - 1`;
//! * asymmetric: samples of mapped classes move to their fixed flip target
//!   with probability `rate`;
//! * instance-dependent: per-sample corruption rates `q_i ~ N(rate, 0.1^2)`
//!   truncated to `[0, 1]`, and a shared `d x C` standard-normal projection
//!   `W`. The noisy label of `(x, y)` is drawn from the distribution that keeps
//!   `y` with mass `1 - q_i` and spreads `q_i` over the other classes by
//!   `softmax((x W)_c, c != y)`. `rate = 0` gives `q_i = 0` exactly.
//!
//! All draws come from the `Noise` stream of the given seed.
//!
//! Built-in flip maps use the standard class indexing of each dataset. For
//! CIFAR-10 that is airplane=0, automobile=1, bird=2, cat=3, deer=4, dog=5,
//! frog=6, horse=7, ship=8, truck=9.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use rand::Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{stream_rng, Stream};
use crate::store::LabeledDataset;

/// Standard deviation of the per-sample corruption rates.
pub const INSTANCE_RATE_STD: f64 = 0.1;

const CIFAR100_SUPERCLASSES: &str = include_str!("../config/cifar100_superclasses.json");

/// Class to fixed wrong class.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<(u32, u32)>", into = "Vec<(u32, u32)>")]
pub struct FlipMap(BTreeMap<u32, u32>);

impl FlipMap {
    pub fn from_pairs(pairs: impl IntoIterator<Item = (u32, u32)>) -> Result<Self> {
        let mut map = BTreeMap::new();
        for (from, to) in pairs {
            if from == to {
                return Err(Error::validation(format!("flip map sends class {} to itself", from)));
            }
            if map.insert(from, to).is_some() {
                return Err(Error::validation(format!("class {} mapped twice", from)));
            }
        }
        Ok(Self(map))
    }

    pub fn target(&self, class: u32) -> Option<u32> {
        self.0.get(&class).copied()
    }

    pub fn iter(&self) -> impl Iterator<Item = (u32, u32)> + '_ {
        self.0.iter().map(|(&a, &b)| (a, b))
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Every source and target lies in `[0, num_classes)`.
    pub fn validate(&self, num_classes: usize) -> Result<()> {
        for (a, b) in self.iter() {
            if a as usize >= num_classes || b as usize >= num_classes {
                return Err(Error::validation(format!(
                    "flip {} -> {} outside [0, {})",
                    a, b, num_classes
                )));
            }
        }
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Ok(serde_json::from_slice(&fs::read(path)?)?)
    }
}

impl TryFrom<Vec<(u32, u32)>> for FlipMap {
    type Error = Error;
    fn try_from(v: Vec<(u32, u32)>) -> Result<Self> {
        Self::from_pairs(v)
    }
}

impl From<FlipMap> for Vec<(u32, u32)> {
    fn from(m: FlipMap) -> Self {
        m.0.into_iter().collect()
    }
}

/// Published flip tables.
#[derive(Debug, Clone, PartialEq)]
pub enum BuiltinMap {
    /// TRUCK -> AUTOMOBILE, BIRD -> AIRPLANE, DEER -> HORSE, CAT <-> DOG.
    Cifar10,
    /// 7 -> 1, 2 -> 7, 5 <-> 6, 3 -> 8.
    Mnist,
    /// `c -> (c + 1) mod C`.
    Circular(usize),
    /// Circular shift inside each group.
    Cifar100Superclass(Vec<Vec<u32>>),
}

pub fn builtin_flip_map(which: &BuiltinMap) -> Result<FlipMap> {
    match which {
        BuiltinMap::Cifar10 => FlipMap::from_pairs([(9, 1), (2, 0), (4, 7), (3, 5), (5, 3)]),
        BuiltinMap::Mnist => FlipMap::from_pairs([(7, 1), (2, 7), (5, 6), (6, 5), (3, 8)]),
        BuiltinMap::Circular(c) => {
            if *c < 2 {
                return Err(Error::validation("circular flip map needs at least 2 classes"));
            }
            let c = *c as u32;
            FlipMap::from_pairs((0..c).map(|i| (i, (i + 1) % c)))
        }
        BuiltinMap::Cifar100Superclass(groups) => FlipMap::from_pairs(
            groups
                .iter()
                .filter(|g| g.len() > 1)
                .flat_map(|g| g.iter().enumerate().map(move |(j, &a)| (a, g[(j + 1) % g.len()]))),
        ),
    }
}

#[derive(Deserialize)]
struct GroupTable {
    groups: Vec<Group>,
}

#[derive(Deserialize)]
struct Group {
    classes: Vec<u32>,
}

fn parse_groups(json: &str) -> Result<Vec<Vec<u32>>> {
    let table: GroupTable = serde_json::from_str(json)?;
    Ok(table.groups.into_iter().map(|g| g.classes).collect())
}

/// The checked-in CIFAR-100 coarse-label grouping (20 groups of 5).
pub fn cifar100_superclass_groups() -> Vec<Vec<u32>> {
    parse_groups(CIFAR100_SUPERCLASSES).expect("bundled super-class table is valid")
}

/// Super-class groups from a `{"groups": [{"classes": [...]}, ...]}` file.
pub fn load_superclass_groups(path: impl AsRef<Path>) -> Result<Vec<Vec<u32>>> {
    parse_groups(&fs::read_to_string(path)?)
}

/// Resolves `cifar10`, `mnist`, `circular` (over `num_classes`) or
/// `cifar100_superclass` (bundled grouping).
pub fn named_flip_map(name: &str, num_classes: usize) -> Result<FlipMap> {
    let which = match name {
        "cifar10" => BuiltinMap::Cifar10,
        "mnist" => BuiltinMap::Mnist,
        "circular" => BuiltinMap::Circular(num_classes),
        "cifar100_superclass" => BuiltinMap::Cifar100Superclass(cifar100_superclass_groups()),
        other => return Err(Error::validation(format!("unknown flip map '{}'", other))),
    };
    builtin_flip_map(&which)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NoiseKind {
    Symmetric,
    Asymmetric,
    Instance,
}

impl fmt::Display for NoiseKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            NoiseKind::Symmetric => "symmetric",
            NoiseKind::Asymmetric => "asymmetric",
            NoiseKind::Instance => "instance",
        })
    }
}

impl FromStr for NoiseKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "symmetric" | "sym" => Ok(Self::Symmetric),
            "asymmetric" | "asym" => Ok(Self::Asymmetric),
            "instance" | "instance-dependent" => Ok(Self::Instance),
            other => Err(Error::validation(format!("unknown noise kind '{}'", other))),
        }
    }
}

/// One fully specified noise injection.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseSpec {
    pub kind: NoiseKind,
    pub rate: f64,
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub flip_map: Option<FlipMap>,
}

impl NoiseSpec {
    pub fn validate(&self) -> Result<()> {
        check_rate(self.rate)?;
        match (self.kind, &self.flip_map) {
            (NoiseKind::Asymmetric, None) => Err(Error::validation("asymmetric noise needs a flip map")),
            (NoiseKind::Asymmetric, Some(_)) => Ok(()),
            (_, Some(_)) => Err(Error::validation("flip map given for non-asymmetric noise")),
            (NoiseKind::Instance, None) if self.rate >= 1.0 => {
                Err(Error::validation("instance-dependent noise rate must be below 1"))
            }
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NoiseOutcome {
    pub noisy_labels: Vec<u32>,
    pub flipped_mask: Vec<bool>,
}

impl NoiseOutcome {
    fn from_labels(clean: &[u32], noisy_labels: Vec<u32>) -> Self {
        let flipped_mask = clean.iter().zip(&noisy_labels).map(|(a, b)| a != b).collect();
        Self {
            noisy_labels,
            flipped_mask,
        }
    }

    pub fn flipped_count(&self) -> usize {
        self.flipped_mask.iter().filter(|&&f| f).count()
    }

    pub fn realized_rate(&self) -> f64 {
        if self.flipped_mask.is_empty() {
            0.0
        } else {
            self.flipped_count() as f64 / self.flipped_mask.len() as f64
        }
    }
}

fn check_rate(rate: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&rate) {
        return Err(Error::validation(format!("noise rate {} outside [0, 1]", rate)));
    }
    Ok(())
}

fn check_labels(labels: &[u32], num_classes: usize) -> Result<()> {
    if let Some(&l) = labels.iter().find(|&&l| l as usize >= num_classes) {
        return Err(Error::validation(format!("label {} outside [0, {})", l, num_classes)));
    }
    Ok(())
}

pub fn inject_symmetric(labels: &[u32], num_classes: usize, rate: f64, seed: u64) -> Result<NoiseOutcome> {
    if num_classes < 2 {
        return Err(Error::validation("symmetric noise needs at least 2 classes"));
    }
    check_rate(rate)?;
    check_labels(labels, num_classes)?;
    let mut rng = stream_rng(seed, Stream::Noise);
    let noisy = labels
        .iter()
        .map(|&y| {
            if rng.random::<f64>() < rate {
                let r = rng.random_range(0..num_classes as u32 - 1);
                if r >= y {
                    r + 1
                } else {
                    r
                }
            } else {
                y
            }
        })
        .collect();
    Ok(NoiseOutcome::from_labels(labels, noisy))
}

pub fn inject_asymmetric(labels: &[u32], num_classes: usize, rate: f64, flip_map: &FlipMap, seed: u64) -> Result<NoiseOutcome> {
    check_rate(rate)?;
    check_labels(labels, num_classes)?;
    flip_map.validate(num_classes)?;
    let mut rng = stream_rng(seed, Stream::Noise);
    let noisy = labels
        .iter()
        .map(|&y| match flip_map.target(y) {
            Some(t) if rng.random::<f64>() < rate => t,
            _ => y,
        })
        .collect();
    Ok(NoiseOutcome::from_labels(labels, noisy))
}

/// Per-class categorical distribution used for one sample.
pub(crate) fn instance_distribution(x: &[f32], y: u32, q: f64, projection: &[f64], num_classes: usize) -> Vec<f64> {
    let mut logits = vec![0.0f64; num_classes];
    for (t, &v) in x.iter().enumerate() {
        let row = &projection[t * num_classes..(t + 1) * num_classes];
        for (l, &w) in logits.iter_mut().zip(row) {
            *l += v as f64 * w;
        }
    }
    let y = y as usize;
    let max = logits
        .iter()
        .enumerate()
        .filter(|&(c, _)| c != y)
        .map(|(_, &l)| l)
        .fold(f64::NEG_INFINITY, f64::max);
    let mut probs: Vec<f64> = logits
        .iter()
        .enumerate()
        .map(|(c, &l)| if c == y { 0.0 } else { (l - max).exp() })
        .collect();
    let z: f64 = probs.iter().sum();
    probs.iter_mut().for_each(|p| *p *= q / z);
    probs[y] = 1.0 - q;
    probs
}

fn truncated_rate<R: Rng>(rng: &mut R, normal: &Normal<f64>) -> f64 {
    loop {
        let q = normal.sample(rng);
        if (0.0..=1.0).contains(&q) {
            return q;
        }
    }
}

pub fn inject_instance_dependent(dataset: &LabeledDataset, rate: f64, seed: u64) -> Result<NoiseOutcome> {
    if !(0.0..1.0).contains(&rate) {
        return Err(Error::validation(format!("instance-dependent noise rate {} outside [0, 1)", rate)));
    }
    let c = dataset.num_classes();
    if c < 2 {
        return Err(Error::validation("instance-dependent noise needs at least 2 classes"));
    }
    let labels = dataset.labels();
    let mut rng = stream_rng(seed, Stream::Noise);
    let projection: Vec<f64> = (0..dataset.dim() * c).map(|_| rng.sample(StandardNormal)).collect();
    let normal = Normal::new(rate, INSTANCE_RATE_STD).expect("finite parameters");
    let rates: Vec<f64> = (0..dataset.len())
        .map(|_| if rate == 0.0 { 0.0 } else { truncated_rate(&mut rng, &normal) })
        .collect();
    let noisy = (0..dataset.len())
        .map(|i| {
            let probs = instance_distribution(dataset.row(i), labels[i], rates[i], &projection, c);
            let u: f64 = rng.random();
            let mut acc = 0.0;
            for (class, p) in probs.iter().enumerate() {
                acc += p;
                if u < acc {
                    return class as u32;
                }
            }
            labels[i]
        })
        .collect();
    Ok(NoiseOutcome::from_labels(labels, noisy))
}

/// Dispatches on `spec.kind`.
pub fn apply_noise(dataset: &LabeledDataset, spec: &NoiseSpec) -> Result<NoiseOutcome> {
    spec.validate()?;
    match spec.kind {
        NoiseKind::Symmetric => inject_symmetric(dataset.labels(), dataset.num_classes(), spec.rate, spec.seed),
        NoiseKind::Asymmetric => inject_asymmetric(
            dataset.labels(),
            dataset.num_classes(),
            spec.rate,
            spec.flip_map.as_ref().expect("validated"),
            spec.seed,
        ),
        NoiseKind::Instance => inject_instance_dependent(dataset, spec.rate, spec.seed),
    }
}
