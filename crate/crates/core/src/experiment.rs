//! Seeded evaluation harness.
//!
//! Each run executes a fixed pipeline:
//!
//! 1. optional subsampling of the training set (`Subsample` stream);
//! 2. optional standardization with training statistics;
//! 3. optional label noise on the training set (`Noise` stream);
//! 4. reliability of the noisy training labels in the original space;
//! 5. optional reduction; FLDA filters with the original-space reliability,
//!    then every reduction projects train and test and recomputes reliability
//!    in the projected space;
//! 6. prediction and accuracy on the test set.
//!
//! The stages actually taken are recorded in [`RunRecord::pipeline`].

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::classifiers::{predict, Prediction, Rule};
use crate::dimred::{fit_flda, fit_lda, fit_pca, project};
use crate::error::{Error, Result};
use crate::knn::Exclude;
use crate::noise::{apply_noise, load_superclass_groups, named_flip_map, BuiltinMap, FlipMap, NoiseKind, NoiseSpec};
use crate::reliability::{compute_reliability_map, ReliabilityConfig, ReliabilityMap};
use crate::store::{load_dataset, long_tail_subsample, standardize, stratified_subsample, LabeledDataset};

macro_rules! string_serde {
    ($t:ty) => {
        impl Serialize for $t {
            fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
                s.collect_str(self)
            }
        }
        impl<'de> Deserialize<'de> for $t {
            fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
                let s = String::deserialize(d)?;
                s.parse().map_err(serde::de::Error::custom)
            }
        }
    };
}

fn split_arg<'a>(s: &'a str, name: &str) -> Option<&'a str> {
    s.strip_prefix(name).and_then(|rest| rest.strip_prefix(':'))
}

/// `knn:<k>`, `ann` or `wann`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    Knn(usize),
    Ann,
    Wann,
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Method::Knn(k) => write!(f, "knn:{}", k),
            Method::Ann => f.write_str("ann"),
            Method::Wann => f.write_str("wann"),
        }
    }
}

impl FromStr for Method {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ann" => Ok(Method::Ann),
            "wann" => Ok(Method::Wann),
            _ => split_arg(s, "knn")
                .and_then(|k| k.parse().ok())
                .filter(|&k| k > 0)
                .map(Method::Knn)
                .ok_or_else(|| Error::validation(format!("unknown method '{}' (expected knn:<k>, ann or wann)", s))),
        }
    }
}

string_serde!(Method);

/// `none`, `pca:<p>`, `lda` or `flda`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Reduction {
    #[default]
    None,
    Pca(usize),
    Lda,
    Flda,
}

impl fmt::Display for Reduction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Reduction::None => f.write_str("none"),
            Reduction::Pca(p) => write!(f, "pca:{}", p),
            Reduction::Lda => f.write_str("lda"),
            Reduction::Flda => f.write_str("flda"),
        }
    }
}

impl FromStr for Reduction {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "none" => Ok(Reduction::None),
            "lda" => Ok(Reduction::Lda),
            "flda" => Ok(Reduction::Flda),
            _ => split_arg(s, "pca")
                .and_then(|p| p.parse().ok())
                .filter(|&p| p > 0)
                .map(Reduction::Pca)
                .ok_or_else(|| Error::validation(format!("unknown reduction '{}' (expected none, pca:<p>, lda or flda)", s))),
        }
    }
}

string_serde!(Reduction);

/// `stratified:<per_class>` or `longtail:<ratio>`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Subsample {
    Stratified(usize),
    LongTail(f64),
}

impl fmt::Display for Subsample {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Subsample::Stratified(n) => write!(f, "stratified:{}", n),
            Subsample::LongTail(r) => write!(f, "longtail:{}", r),
        }
    }
}

impl FromStr for Subsample {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        if let Some(n) = split_arg(s, "stratified").and_then(|n| n.parse().ok()) {
            return Ok(Subsample::Stratified(n));
        }
        if let Some(r) = split_arg(s, "longtail").and_then(|r| r.parse().ok()) {
            return Ok(Subsample::LongTail(r));
        }
        Err(Error::validation(format!(
            "unknown subsample '{}' (expected stratified:<n> or longtail:<ratio>)",
            s
        )))
    }
}

string_serde!(Subsample);

/// Flip map given by name (`cifar10`, `mnist`, `circular`,
/// `cifar100_superclass`), by path to a JSON file, or inline as pairs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum FlipMapSource {
    Named(String),
    Inline(FlipMap),
}

impl FlipMapSource {
    /// A path may hold either a pair list or a super-class group table.
    pub fn resolve(&self, num_classes: usize) -> Result<FlipMap> {
        match self {
            FlipMapSource::Inline(m) => Ok(m.clone()),
            FlipMapSource::Named(name) => {
                if let Ok(m) = named_flip_map(name, num_classes) {
                    return Ok(m);
                }
                let path = Path::new(name);
                if !path.exists() {
                    return Err(Error::validation(format!("unknown flip map '{}'", name)));
                }
                FlipMap::load(path).or_else(|_| {
                    crate::noise::builtin_flip_map(&BuiltinMap::Cifar100Superclass(load_superclass_groups(path)?))
                })
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseConfig {
    pub kind: NoiseKind,
    pub rate: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub flip_map: Option<FlipMapSource>,
}

impl NoiseConfig {
    pub fn to_spec(&self, num_classes: usize, seed: u64) -> Result<NoiseSpec> {
        let flip_map = match (self.kind, &self.flip_map) {
            (NoiseKind::Asymmetric, Some(src)) => Some(src.resolve(num_classes)?),
            (NoiseKind::Asymmetric, None) => Some(named_flip_map("circular", num_classes)?),
            (_, Some(_)) => return Err(Error::validation("flip_map only applies to asymmetric noise")),
            _ => None,
        };
        let spec = NoiseSpec {
            kind: self.kind,
            rate: self.rate,
            seed,
            flip_map,
        };
        spec.validate()?;
        Ok(spec)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub train: PathBuf,
    pub test: PathBuf,
    pub method: Method,
    #[serde(default)]
    pub reliability: ReliabilityConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub noise: Option<NoiseConfig>,
    #[serde(default)]
    pub reduction: Reduction,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub subsample: Option<Subsample>,
    pub seeds: Vec<u64>,
    #[serde(default)]
    pub standardize: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<PathBuf>,
}

impl ExperimentConfig {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let cfg: Self = serde_json::from_slice(&fs::read(path)?)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.seeds.is_empty() {
            return Err(Error::validation("experiment needs at least one seed"));
        }
        self.reliability.validate()
    }

    fn noise_label(&self) -> (String, f64) {
        match &self.noise {
            Some(n) => (n.kind.to_string(), n.rate),
            None => ("none".into(), 0.0),
        }
    }
}

/// Outcome of one seeded run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub method: String,
    pub noise: String,
    pub rate: f64,
    pub reduction: String,
    pub seed: u64,
    pub accuracy: f64,
    pub correct: usize,
    pub total: usize,
    pub realized_rate: f64,
    pub wall_ms: u64,
    pub mean_k_used: f64,
    pub train_size: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fit_sample_count: Option<usize>,
    pub pipeline: Vec<String>,
}

pub fn evaluate_accuracy(predicted: &[u32], truth: &[u32]) -> Result<f64> {
    if predicted.len() != truth.len() {
        return Err(Error::DimensionMismatch {
            expected: truth.len(),
            actual: predicted.len(),
        });
    }
    if truth.is_empty() {
        return Err(Error::validation("accuracy of an empty prediction set"));
    }
    let correct = predicted.iter().zip(truth).filter(|(a, b)| a == b).count();
    Ok(correct as f64 / truth.len() as f64)
}

/// Result of the reduction and prediction stages.
#[derive(Debug, Clone)]
pub struct StageOutput {
    pub predictions: Vec<Prediction>,
    pub fit_sample_count: Option<usize>,
    pub log: Vec<String>,
}

/// Stages 5 and 6 on an already noisy training set. `original_rmap` is the
/// reliability of `train` in its own space; it is required for `ann`, `wann`
/// and `flda` and is the only map FLDA filters with.
pub fn reduce_and_predict(
    train: &LabeledDataset,
    test: &LabeledDataset,
    method: Method,
    reduction: Reduction,
    rel_cfg: ReliabilityConfig,
    original_rmap: Option<&ReliabilityMap>,
) -> Result<StageOutput> {
    let mut log = Vec::new();
    let need_original = || {
        original_rmap.ok_or_else(|| Error::validation("original-space reliability map required"))
    };
    let adaptive = !matches!(method, Method::Knn(_));

    let (train_r, test_r, fit_sample_count) = match reduction {
        Reduction::None => (None, None, None),
        other => {
            let proj = match other {
                Reduction::Pca(p) => fit_pca(train, p)?,
                Reduction::Lda => fit_lda(train)?,
                Reduction::Flda => fit_flda(train, need_original()?)?,
                Reduction::None => unreachable!(),
            };
            log.push(format!(
                "reduction {} fitted on {} samples{} -> {} dims",
                other,
                proj.fit_sample_count,
                if other == Reduction::Flda { " filtered with original-space eta" } else { "" },
                proj.output_dim
            ));
            (Some(project(train, &proj)?), Some(project(test, &proj)?), Some(proj.fit_sample_count))
        }
    };
    let train_used = train_r.as_ref().unwrap_or(train);
    let test_used = test_r.as_ref().unwrap_or(test);

    let projected_rmap;
    let rmap = if !adaptive {
        None
    } else if train_r.is_some() {
        projected_rmap = compute_reliability_map(train_used, rel_cfg)?;
        log.push("reliability recomputed in projected space".into());
        Some(&projected_rmap)
    } else {
        Some(need_original()?)
    };

    let rule = match (method, rmap) {
        (Method::Knn(k), _) => Rule::Fixed(k),
        (Method::Ann, Some(r)) => Rule::Adaptive(r),
        (Method::Wann, Some(r)) => Rule::WeightedAdaptive(r, None),
        _ => unreachable!(),
    };
    let predictions = predict(test_used.rows(), train_used, rule, Exclude::Nothing)?;
    log.push(format!("predict {}", method));
    Ok(StageOutput {
        predictions,
        fit_sample_count,
        log,
    })
}

/// One seeded run on in-memory data.
pub fn run_seed(train: &LabeledDataset, test: &LabeledDataset, cfg: &ExperimentConfig, seed: u64) -> Result<RunRecord> {
    let start = Instant::now();
    let mut log = Vec::new();

    let mut train = match cfg.subsample {
        Some(Subsample::Stratified(n)) => stratified_subsample(train, n, seed)?,
        Some(Subsample::LongTail(r)) => long_tail_subsample(train, r, seed)?,
        None => train.clone(),
    };
    if let Some(s) = cfg.subsample {
        log.push(format!("subsample {} -> {} samples", s, train.len()));
    }
    let mut test = test.clone();
    if cfg.standardize {
        let (tr, mut others, _) = standardize(&train, &[&test])?;
        train = tr;
        test = others.pop().expect("one other");
        log.push("standardize with training statistics".into());
    }

    let realized_rate = match &cfg.noise {
        Some(noise) => {
            let spec = noise.to_spec(train.num_classes(), seed)?;
            let outcome = apply_noise(&train, &spec)?;
            train = train.with_labels(outcome.noisy_labels.clone())?;
            log.push(format!("noise {} rate {} realized {:.4}", noise.kind, noise.rate, outcome.realized_rate()));
            outcome.realized_rate()
        }
        None => 0.0,
    };

    let needs_rmap = !matches!(cfg.method, Method::Knn(_)) || cfg.reduction == Reduction::Flda;
    let rmap = if needs_rmap {
        log.push(format!(
            "reliability in original space (k_min={}, k_max={})",
            cfg.reliability.k_min, cfg.reliability.k_max
        ));
        Some(compute_reliability_map(&train, cfg.reliability)?)
    } else {
        None
    };

    let stage = reduce_and_predict(&train, &test, cfg.method, cfg.reduction, cfg.reliability, rmap.as_ref())?;
    log.extend(stage.log);
    let predicted: Vec<u32> = stage.predictions.iter().map(|p| p.label).collect();
    let accuracy = evaluate_accuracy(&predicted, test.labels())?;
    let correct = predicted.iter().zip(test.labels()).filter(|(a, b)| a == b).count();
    let mean_k_used = stage.predictions.iter().map(|p| p.k_used as f64).sum::<f64>() / stage.predictions.len() as f64;

    let (noise, rate) = cfg.noise_label();
    Ok(RunRecord {
        method: cfg.method.to_string(),
        noise,
        rate,
        reduction: cfg.reduction.to_string(),
        seed,
        accuracy,
        correct,
        total: predicted.len(),
        realized_rate,
        wall_ms: start.elapsed().as_millis() as u64,
        mean_k_used,
        train_size: train.len(),
        fit_sample_count: stage.fit_sample_count,
        pipeline: log,
    })
}

/// Every seed of `cfg` on in-memory data.
pub fn run_experiment_on(train: &LabeledDataset, test: &LabeledDataset, cfg: &ExperimentConfig) -> Result<Vec<RunRecord>> {
    cfg.validate()?;
    if train.dim() != test.dim() {
        return Err(Error::DimensionMismatch {
            expected: train.dim(),
            actual: test.dim(),
        });
    }
    cfg.seeds
        .iter()
        .map(|&seed| {
            run_seed(train, test, cfg, seed).map_err(|e| {
                e.context(format!(
                    "method {} reduction {} seed {}",
                    cfg.method, cfg.reduction, seed
                ))
            })
        })
        .collect()
}

/// Loads the configured datasets and runs every seed.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<Vec<RunRecord>> {
    let train = load_dataset(&cfg.train)?;
    let test = load_dataset(&cfg.test)?;
    run_experiment_on(&train, &test, cfg)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReportFormat {
    Csv,
    Jsonl,
}

impl FromStr for ReportFormat {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(Self::Csv),
            "jsonl" => Ok(Self::Jsonl),
            other => Err(Error::validation(format!("unknown report format '{}'", other))),
        }
    }
}

pub const REPORT_COLUMNS: &str = "method,noise,rate,reduction,seed,accuracy,realized_rate,wall_ms";
const SUMMARY_COLUMNS: &str = "method,noise,rate,reduction,runs,mean_accuracy,std_accuracy";
const SUMMARY_NOTE: &str = "# summary: mean and sample standard deviation of accuracy per group; significance tests: compute externally";

/// Mean and sample standard deviation of one configuration group.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GroupSummary {
    pub method: String,
    pub noise: String,
    pub rate: f64,
    pub reduction: String,
    pub runs: usize,
    pub mean_accuracy: f64,
    /// Zero for a single run.
    pub std_accuracy: f64,
}

/// Groups by `(method, noise, rate, reduction)` in lexicographic order.
pub fn summarize(records: &[RunRecord]) -> Vec<GroupSummary> {
    let mut groups: BTreeMap<(String, String, String, String), (f64, Vec<f64>)> = BTreeMap::new();
    for r in records {
        let key = (r.method.clone(), r.noise.clone(), r.rate.to_string(), r.reduction.clone());
        groups.entry(key).or_insert_with(|| (r.rate, Vec::new())).1.push(r.accuracy);
    }
    groups
        .into_iter()
        .map(|((method, noise, _, reduction), (rate, acc))| {
            let n = acc.len() as f64;
            let mean = acc.iter().sum::<f64>() / n;
            let std = if acc.len() > 1 {
                (acc.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
            } else {
                0.0
            };
            GroupSummary {
                method,
                noise,
                rate,
                reduction,
                runs: acc.len(),
                mean_accuracy: mean,
                std_accuracy: std,
            }
        })
        .collect()
}

pub fn write_report_to<W: Write>(records: &[RunRecord], mut w: W, format: ReportFormat) -> Result<()> {
    match format {
        ReportFormat::Csv => {
            writeln!(w, "{}", REPORT_COLUMNS)?;
            for r in records {
                writeln!(
                    w,
                    "{},{},{},{},{},{},{},{}",
                    r.method, r.noise, r.rate, r.reduction, r.seed, r.accuracy, r.realized_rate, r.wall_ms
                )?;
            }
            if !records.is_empty() {
                writeln!(w, "{}", SUMMARY_NOTE)?;
                writeln!(w, "{}", SUMMARY_COLUMNS)?;
                for s in summarize(records) {
                    writeln!(
                        w,
                        "{},{},{},{},{},{},{}",
                        s.method, s.noise, s.rate, s.reduction, s.runs, s.mean_accuracy, s.std_accuracy
                    )?;
                }
            }
        }
        ReportFormat::Jsonl => {
            for r in records {
                serde_json::to_writer(&mut w, r)?;
                writeln!(w)?;
            }
            for s in summarize(records) {
                serde_json::to_writer(&mut w, &serde_json::json!({ "summary": s }))?;
                writeln!(w)?;
            }
        }
    }
    Ok(())
}

pub fn write_report(records: &[RunRecord], path: impl AsRef<Path>, format: ReportFormat) -> Result<()> {
    let mut w = BufWriter::new(fs::File::create(path)?);
    write_report_to(records, &mut w, format)?;
    w.flush()?;
    Ok(())
}
