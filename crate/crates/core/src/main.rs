use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use wann::classifiers::{predict, write_predictions_csv, write_predictions_json, Rule};
use wann::dimred::{fit_flda, fit_lda, fit_pca, project};
use wann::experiment::{
    evaluate_accuracy, run_experiment, write_report, write_report_to, ExperimentConfig, FlipMapSource, Method,
    NoiseConfig, Reduction, ReportFormat, Subsample,
};
use wann::knn::{neighbors_report, Exclude};
use wann::noise::{apply_noise, NoiseKind};
use wann::reliability::{compute_reliability_map, ReliabilityConfig, DEFAULT_K_MAX, DEFAULT_K_MIN};
use wann::store::{
    generate_synthetic_split, load_dataset, read_csv_dataset, save_dataset, standardize, DatasetMeta, LabeledDataset,
    SyntheticSpec,
};
use wann::{Error, Result};

#[derive(Parser)]
#[command(name = "wann", version, about = "Noisy-label classification over precomputed embeddings")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone, Copy)]
struct Ladder {
    /// Smallest (odd) neighborhood size of the reliability ladder.
    #[arg(long, default_value_t = DEFAULT_K_MIN)]
    kmin: usize,
    /// Largest (odd) neighborhood size of the reliability ladder.
    #[arg(long, default_value_t = DEFAULT_K_MAX)]
    kmax: usize,
}

impl Ladder {
    fn config(self) -> Result<ReliabilityConfig> {
        ReliabilityConfig::new(self.kmin, self.kmax)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Convert a CSV table (id,label,x0,...) into an EVEC file.
    Ingest {
        #[arg(long)]
        csv: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Number of classes; defaults to max label + 1.
        #[arg(long)]
        classes: Option<usize>,
        /// Comma-separated class names written to the sidecar.
        #[arg(long, value_delimiter = ',')]
        class_names: Vec<String>,
    },
    /// Generate a Gaussian mixture corpus.
    Synth {
        #[arg(long)]
        dim: usize,
        #[arg(long)]
        classes: usize,
        #[arg(long)]
        per_class: usize,
        #[arg(long, default_value_t = 10.0)]
        mean_scale: f64,
        #[arg(long, default_value_t = 1.0)]
        sigma: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        /// Also write a held-out set drawn from the same components.
        #[arg(long, requires = "test_per_class")]
        test_out: Option<PathBuf>,
        #[arg(long)]
        test_per_class: Option<usize>,
    },
    /// Corrupt the labels of an EVEC file.
    Noise {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        noise: NoiseKind,
        #[arg(long)]
        rate: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// cifar10, mnist, circular, cifar100_superclass, or a JSON file.
        #[arg(long)]
        flip_map: Option<String>,
        /// Write `id,clean,noisy,flipped` per sample.
        #[arg(long)]
        mask_out: Option<PathBuf>,
    },
    /// Compute per-sample label reliability and write `id,eta,k_star`.
    Reliability {
        #[arg(long)]
        train: PathBuf,
        #[command(flatten)]
        ladder: Ladder,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        standardize: bool,
    },
    /// Predict test labels with knn:<k>, ann or wann.
    Classify {
        #[arg(long)]
        train: PathBuf,
        #[arg(long)]
        test: PathBuf,
        #[arg(long, default_value = "wann")]
        method: Method,
        #[command(flatten)]
        ladder: Ladder,
        #[arg(long)]
        standardize: bool,
        /// Keep a query from seeing the training sample with its own id.
        #[arg(long)]
        exclude_self: bool,
        /// CSV `query_index,label,k_used`.
        #[arg(long)]
        out: Option<PathBuf>,
        /// JSON with full neighbor evidence.
        #[arg(long)]
        json: Option<PathBuf>,
    },
    /// Fit a projection (pca:<p>, lda, flda) and optionally project datasets.
    Dimred {
        #[arg(long)]
        train: PathBuf,
        #[arg(long)]
        reduction: Reduction,
        #[command(flatten)]
        ladder: Ladder,
        /// EPRJ binary output.
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        json: Option<PathBuf>,
        #[arg(long)]
        train_out: Option<PathBuf>,
        #[arg(long, requires = "test_out")]
        test: Option<PathBuf>,
        #[arg(long)]
        test_out: Option<PathBuf>,
    },
    /// List the closest training samples of each query.
    Neighbors {
        #[arg(long)]
        train: PathBuf,
        #[arg(long)]
        test: PathBuf,
        #[arg(long, default_value_t = 3)]
        k: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run a seeded experiment grid from a JSON config or flags.
    Experiment {
        #[arg(long, conflicts_with_all = ["train", "test"])]
        config: Option<PathBuf>,
        #[arg(long, required_unless_present = "config")]
        train: Option<PathBuf>,
        #[arg(long, required_unless_present = "config")]
        test: Option<PathBuf>,
        #[arg(long, default_value = "wann")]
        method: Method,
        #[command(flatten)]
        ladder: Ladder,
        #[arg(long)]
        noise: Option<NoiseKind>,
        #[arg(long, default_value_t = 0.0)]
        rate: f64,
        #[arg(long)]
        flip_map: Option<String>,
        #[arg(long, default_value = "none")]
        reduction: Reduction,
        #[arg(long)]
        subsample: Option<Subsample>,
        #[arg(long, value_delimiter = ',', default_value = "0")]
        seed: Vec<u64>,
        #[arg(long)]
        standardize: bool,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, default_value = "csv")]
        format: ReportFormat,
    },
}

fn output(path: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p)?)),
        None => Box::new(BufWriter::new(io::stdout())),
    })
}

fn maybe_standardize(train: LabeledDataset, test: Option<LabeledDataset>, on: bool) -> Result<(LabeledDataset, Option<LabeledDataset>)> {
    if !on {
        return Ok((train, test));
    }
    let others: Vec<&LabeledDataset> = test.iter().collect();
    let (train, mut others, _) = standardize(&train, &others)?;
    Ok((train, others.pop()))
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Ingest { csv, out, classes, class_names } => {
            let ds = read_csv_dataset(&csv, classes)?;
            save_dataset(&ds, &out)?;
            DatasetMeta {
                class_names,
                provenance: Some(format!("ingested from {}", csv.display())),
            }
            .save(&out)?;
            eprintln!("wrote {} samples, d={}, C={}", ds.len(), ds.dim(), ds.num_classes());
        }
        Command::Synth { dim, classes, per_class, mean_scale, sigma, seed, out, test_out, test_per_class } => {
            let spec = SyntheticSpec {
                dim,
                num_classes: classes,
                samples_per_class: per_class,
                mean_scale,
                noise_sigma: sigma,
                seed,
            };
            let (train, test) = generate_synthetic_split(&spec, test_per_class.unwrap_or(0))?;
            save_dataset(&train, &out)?;
            DatasetMeta {
                class_names: Vec::new(),
                provenance: Some(format!("synthetic mixture {}", serde_json::to_string(&spec)?)),
            }
            .save(&out)?;
            if let Some(path) = test_out {
                save_dataset(&test, path)?;
            }
        }
        Command::Noise { input, out, noise, rate, seed, flip_map, mask_out } => {
            let ds = load_dataset(&input)?;
            let cfg = NoiseConfig {
                kind: noise,
                rate,
                flip_map: flip_map.map(FlipMapSource::Named),
            };
            let outcome = apply_noise(&ds, &cfg.to_spec(ds.num_classes(), seed)?)?;
            if let Some(path) = mask_out {
                let mut w = output(Some(&path))?;
                writeln!(w, "id,clean,noisy,flipped")?;
                for i in 0..ds.len() {
                    writeln!(
                        w,
                        "{},{},{},{}",
                        ds.ids()[i],
                        ds.labels()[i],
                        outcome.noisy_labels[i],
                        outcome.flipped_mask[i] as u8
                    )?;
                }
                w.flush()?;
            }
            save_dataset(&ds.with_labels(outcome.noisy_labels.clone())?, &out)?;
            eprintln!("realized noise rate {:.4}", outcome.realized_rate());
        }
        Command::Reliability { train, ladder, out, standardize } => {
            let (train, _) = maybe_standardize(load_dataset(&train)?, None, standardize)?;
            let rmap = compute_reliability_map(&train, ladder.config()?)?;
            let mut w = output(out.as_deref())?;
            rmap.write_csv(&mut w)?;
            w.flush()?;
        }
        Command::Classify { train, test, method, ladder, standardize, exclude_self, out, json } => {
            let (train, test) = maybe_standardize(load_dataset(&train)?, Some(load_dataset(&test)?), standardize)?;
            let test = test.expect("test set");
            let exclude = if exclude_self { Exclude::QueryIds(test.ids()) } else { Exclude::Nothing };
            let cfg = ladder.config()?;
            let rmap = match method {
                Method::Knn(_) => None,
                _ => Some(compute_reliability_map(&train, cfg)?),
            };
            let rule = match (method, rmap.as_ref()) {
                (Method::Knn(k), _) => Rule::Fixed(k),
                (Method::Ann, Some(r)) => Rule::Adaptive(r),
                (Method::Wann, Some(r)) => Rule::WeightedAdaptive(r, None),
                _ => unreachable!(),
            };
            let preds = predict(test.rows(), &train, rule, exclude)?;
            if let Some(path) = json {
                write_predictions_json(&preds, output(Some(&path))?)?;
            }
            let mut w = output(out.as_deref())?;
            write_predictions_csv(&preds, &mut w)?;
            w.flush()?;
            let labels: Vec<u32> = preds.iter().map(|p| p.label).collect();
            if !labels.is_empty() {
                eprintln!("accuracy {:.4}", evaluate_accuracy(&labels, test.labels())?);
            }
        }
        Command::Dimred { train, reduction, ladder, out, json, train_out, test, test_out } => {
            let train = load_dataset(&train)?;
            let proj = match reduction {
                Reduction::Pca(p) => fit_pca(&train, p)?,
                Reduction::Lda => fit_lda(&train)?,
                Reduction::Flda => fit_flda(&train, &compute_reliability_map(&train, ladder.config()?)?)?,
                Reduction::None => return Err(Error::Validation("dimred needs pca:<p>, lda or flda".into())),
            };
            proj.save(&out)?;
            if let Some(path) = json {
                proj.write_json(output(Some(&path))?)?;
            }
            if let Some(path) = train_out {
                save_dataset(&project(&train, &proj)?, path)?;
            }
            if let (Some(test), Some(path)) = (test, test_out) {
                save_dataset(&project(&load_dataset(test)?, &proj)?, path)?;
            }
            eprintln!(
                "{} projection: {} -> {} dims, fitted on {} samples",
                proj.kind,
                proj.input_dim(),
                proj.output_dim,
                proj.fit_sample_count
            );
        }
        Command::Neighbors { train, test, k, out } => {
            let train = load_dataset(&train)?;
            let test = load_dataset(&test)?;
            let report = neighbors_report(test.rows(), &train, k)?;
            let mut w = output(out.as_deref())?;
            writeln!(w, "query_index,query_id,query_label,rank,neighbor_id,neighbor_label,distance")?;
            for (q, rows) in report.iter().enumerate() {
                for (rank, e) in rows.iter().enumerate() {
                    writeln!(
                        w,
                        "{},{},{},{},{},{},{}",
                        q,
                        test.ids()[q],
                        test.labels()[q],
                        rank + 1,
                        e.id,
                        e.label,
                        e.distance
                    )?;
                }
            }
            w.flush()?;
        }
        Command::Experiment {
            config,
            train,
            test,
            method,
            ladder,
            noise,
            rate,
            flip_map,
            reduction,
            subsample,
            seed,
            standardize,
            out,
            format,
        } => {
            let cfg = match config {
                Some(path) => ExperimentConfig::load(path)?,
                None => ExperimentConfig {
                    train: train.expect("required by clap"),
                    test: test.expect("required by clap"),
                    method,
                    reliability: ladder.config()?,
                    noise: noise.map(|kind| NoiseConfig {
                        kind,
                        rate,
                        flip_map: flip_map.map(FlipMapSource::Named),
                    }),
                    reduction,
                    subsample,
                    seeds: seed,
                    standardize,
                    output: out.clone(),
                },
            };
            let records = run_experiment(&cfg)?;
            for r in &records {
                eprintln!("seed {}: {}", r.seed, r.pipeline.join(" | "));
            }
            match out.or(cfg.output) {
                Some(path) => write_report(&records, path, format)?,
                None => {
                    let mut w = BufWriter::new(io::stdout());
                    write_report_to(&records, &mut w, format)?;
                    w.flush()?;
                }
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e);
            ExitCode::FAILURE
        }
    }
}
