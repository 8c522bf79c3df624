//! Experiment manifests and the CSV report writer.
//!
//! A run is described by an [`ExperimentConfig`]: dataset, mechanism,
//! predictor, privacy-budget grid, and the cross-validation and model
//! hyperparameters. Configs are assembled in three layers with later
//! layers winning: built-in defaults, a flat `key=value` manifest file,
//! command-line flags.
//!
//! The report is a CSV with one row per (epsilon, fold). Every row carries
//! the provenance needed to reproduce it: the dataset content hash, the
//! master seed, and every hyperparameter. Rows contain no timing or host
//! information, so repeating a run with the same config writes
//! byte-identical output; wall-clock timings are returned separately and
//! belong on stderr.

use std::fmt::Write as _;
use std::path::PathBuf;
use std::str::FromStr;
use std::time::Instant;

use privrec_core::data::{self, DatasetName, DatasetSpec, SubsampleSize};
use privrec_core::mechanism::MechanismKind;
use privrec_core::pipeline::{run_private_pipeline, PipelineConfig, PredictorKind};
use privrec_core::seeds;
use privrec_core::{Error, Result};

/// Budgets swept when the config names none. The grid covers the range
/// used throughout the evaluation, from nearly useless (0.1) to nearly
/// non-private (3).
pub const DEFAULT_EPSILON_GRID: [f64; 5] = [0.1, 0.5, 1.0, 2.0, 3.0];

/// Column order of the experiment report. Fixed so downstream plot
/// scripts can rely on positions.
pub const REPORT_HEADER: &str = "dataset,mechanism,predictor,epsilon,fold,rmse,f_score,\
                                 precision,recall,seed,dataset_hash,folds,k_components,\
                                 latent_dim,subsample,clip_predictions,relevance_threshold,\
                                 cold_start_cells,train_entries,test_entries,\
                                 user_to_sp_payload,sp_to_user_payload";

/// Stream tag for the pre-split subsample draw.
const SUBSAMPLE_TAG: u64 = 0x7375_6273; // "subs"

/// Partial configuration. Every field is optional so that layers
/// (defaults, manifest file, flags) can be merged before validation.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RawConfig {
    pub dataset: Option<String>,
    pub data_path: Option<PathBuf>,
    pub mechanism: Option<String>,
    pub predictor: Option<String>,
    pub epsilons: Option<Vec<f64>>,
    pub folds: Option<usize>,
    pub components: Option<usize>,
    pub latent_dim: Option<usize>,
    pub seed: Option<u64>,
    pub subsample: Option<f64>,
    pub clip_predictions: Option<bool>,
    pub relevance_threshold: Option<f64>,
    pub top_k: Option<usize>,
    pub out: Option<PathBuf>,
}

impl RawConfig {
    /// Parses a flat `key=value` manifest. Keys use the flag spellings,
    /// `#` starts a comment, blank lines are skipped, and `epsilon` takes
    /// a comma-separated list.
    pub fn from_manifest(text: &str) -> Result<Self> {
        let mut raw = RawConfig::default();
        for (idx, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let lineno = idx + 1;
            let (key, value) = line.split_once('=').ok_or_else(|| Error::Config(format!(
                "manifest line {lineno}: expected key=value, got '{line}'"
            )))?;
            let (key, value) = (key.trim(), value.trim());
            match key {
                "dataset" => raw.dataset = Some(value.to_string()),
                "data-path" => raw.data_path = Some(PathBuf::from(value)),
                "mechanism" => raw.mechanism = Some(value.to_string()),
                "predictor" => raw.predictor = Some(value.to_string()),
                "epsilon" => {
                    let eps = value
                        .split(',')
                        .map(|s| parse_value(s.trim(), key, lineno))
                        .collect::<Result<Vec<f64>>>()?;
                    raw.epsilons = Some(eps);
                }
                "folds" => raw.folds = Some(parse_value(value, key, lineno)?),
                "k-components" => raw.components = Some(parse_value(value, key, lineno)?),
                "latent-dim" => raw.latent_dim = Some(parse_value(value, key, lineno)?),
                "seed" => raw.seed = Some(parse_value(value, key, lineno)?),
                "subsample" => raw.subsample = Some(parse_value(value, key, lineno)?),
                "clip-predictions" => {
                    raw.clip_predictions = Some(parse_value(value, key, lineno)?)
                }
                "relevance-threshold" => {
                    raw.relevance_threshold = Some(parse_value(value, key, lineno)?)
                }
                "top-k" => raw.top_k = Some(parse_value(value, key, lineno)?),
                "out" => raw.out = Some(PathBuf::from(value)),
                other => {
                    return Err(Error::Config(format!(
                        "manifest line {lineno}: unknown key '{other}'"
                    )))
                }
            }
        }
        Ok(raw)
    }

    /// Merges `upper` over `self`: fields set in `upper` win.
    #[must_use]
    pub fn overlay(self, upper: RawConfig) -> RawConfig {
        RawConfig {
            dataset: upper.dataset.or(self.dataset),
            data_path: upper.data_path.or(self.data_path),
            mechanism: upper.mechanism.or(self.mechanism),
            predictor: upper.predictor.or(self.predictor),
            epsilons: upper.epsilons.or(self.epsilons),
            folds: upper.folds.or(self.folds),
            components: upper.components.or(self.components),
            latent_dim: upper.latent_dim.or(self.latent_dim),
            seed: upper.seed.or(self.seed),
            subsample: upper.subsample.or(self.subsample),
            clip_predictions: upper.clip_predictions.or(self.clip_predictions),
            relevance_threshold: upper.relevance_threshold.or(self.relevance_threshold),
            top_k: upper.top_k.or(self.top_k),
            out: upper.out.or(self.out),
        }
    }

    /// Fills defaults and validates into a runnable config.
    ///
    /// The mechanism `none` takes no budget: passing epsilon values with
    /// it is rejected, and the report carries a single epsilon of 0 to
    /// mark the unperturbed run.
    pub fn resolve(self) -> Result<ExperimentConfig> {
        let name = match &self.dataset {
            Some(s) => DatasetName::parse(s)?,
            None => {
                return Err(Error::Config(
                    "no dataset named; pass --dataset or put dataset= in the manifest".into(),
                ))
            }
        };
        let dataset = DatasetSpec::named(name, self.data_path)?;
        let mechanism = match &self.mechanism {
            Some(s) => MechanismKind::parse(s)?,
            None => MechanismKind::Blp,
        };
        let predictor = match &self.predictor {
            Some(s) => PredictorKind::parse(s)?,
            None => PredictorKind::MogMf,
        };
        let epsilons = match (mechanism, self.epsilons) {
            (MechanismKind::Identity, Some(eps)) if !eps.is_empty() => {
                return Err(Error::Config(format!(
                    "mechanism 'none' takes no epsilon values, got {} of them",
                    eps.len()
                )))
            }
            (MechanismKind::Identity, _) => Vec::new(),
            (_, Some(eps)) if !eps.is_empty() => eps,
            (_, _) => DEFAULT_EPSILON_GRID.to_vec(),
        };
        for &e in &epsilons {
            if !(e > 0.0) || !e.is_finite() {
                return Err(Error::Config(format!(
                    "epsilon must be positive and finite, got {e}"
                )));
            }
        }
        let folds = self.folds.unwrap_or(10);
        if folds < 2 {
            return Err(Error::Config(format!("need at least 2 folds, got {folds}")));
        }
        let subsample = self.subsample.unwrap_or(1.0);
        if !(subsample > 0.0 && subsample <= 1.0) {
            return Err(Error::Config(format!(
                "subsample fraction {subsample} outside (0, 1]"
            )));
        }
        Ok(ExperimentConfig {
            dataset,
            mechanism,
            predictor,
            epsilons,
            folds,
            components: self.components.unwrap_or(3),
            latent_dim: self.latent_dim.unwrap_or(20),
            seed: self.seed.unwrap_or(42),
            subsample,
            clip_predictions: self.clip_predictions.unwrap_or(false),
            relevance_threshold: self.relevance_threshold,
            top_k: self.top_k.unwrap_or(10),
            out: self.out,
        })
    }
}

fn parse_value<T: FromStr>(value: &str, key: &str, lineno: usize) -> Result<T> {
    value.parse().map_err(|_| Error::Config(format!(
        "manifest line {lineno}: cannot parse '{value}' for key '{key}'"
    )))
}

/// Fully resolved description of one experiment grid.
#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub dataset: DatasetSpec,
    pub mechanism: MechanismKind,
    pub predictor: PredictorKind,
    /// Budgets to sweep. Empty exactly when the mechanism is `none`.
    pub epsilons: Vec<f64>,
    pub folds: usize,
    pub components: usize,
    pub latent_dim: usize,
    pub seed: u64,
    /// Fraction of rating entries kept before splitting; 1 keeps the
    /// dataset untouched (no shuffle, no draw).
    pub subsample: f64,
    pub clip_predictions: bool,
    /// Relevance cutoff for the ranking metrics; derived from the rating
    /// domain when absent.
    pub relevance_threshold: Option<f64>,
    pub top_k: usize,
    pub out: Option<PathBuf>,
}

/// Wall-clock time of one grid point.
#[derive(Debug, Clone, Copy)]
pub struct GridTiming {
    pub epsilon: f64,
    pub seconds: f64,
}

/// CSV report plus per-grid-point timings. The timings never enter the
/// CSV.
#[derive(Debug)]
pub struct ExperimentOutcome {
    pub csv: String,
    pub timings: Vec<GridTiming>,
}

/// Runs the full grid and renders the report.
pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentOutcome> {
    let full = config.dataset.load()?;
    let hash = config.dataset.content_hash()?;
    let matrix = if config.subsample < 1.0 {
        data::subsample(
            &full,
            SubsampleSize::Fraction(config.subsample),
            seeds::derive(config.seed, &[SUBSAMPLE_TAG]),
        )?
    } else {
        full
    };

    let mut csv = String::with_capacity(4096);
    csv.push_str(REPORT_HEADER);
    csv.push('\n');
    let mut timings = Vec::new();

    // An epsilon of 0 in the grid (and in the report) marks the
    // unperturbed identity run.
    let grid: Vec<f64> =
        if config.epsilons.is_empty() { vec![0.0] } else { config.epsilons.clone() };
    for &epsilon in &grid {
        let started = Instant::now();
        let pipe = PipelineConfig {
            mechanism: config.mechanism,
            predictor: config.predictor,
            epsilon,
            folds: config.folds,
            top_k: config.top_k,
            relevance_threshold: config.relevance_threshold,
            clip_predictions: config.clip_predictions,
            latent_dim: config.latent_dim,
            components: config.components,
            seed: config.seed,
        };
        let run = run_private_pipeline(&matrix, &pipe)?;
        for fold in &run.folds {
            writeln!(
                csv,
                "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
                config.dataset.name.as_str(),
                config.mechanism.as_str(),
                config.predictor.as_str(),
                epsilon,
                fold.fold,
                fold.rmse,
                fold.f_score,
                fold.precision,
                fold.recall,
                config.seed,
                hash,
                config.folds,
                config.components,
                config.latent_dim,
                config.subsample,
                config.clip_predictions,
                run.relevance_threshold,
                fold.cold_start_cells,
                fold.train_entries,
                fold.test_entries,
                fold.ledger.user_to_sp_payload,
                fold.ledger.sp_to_user_payload,
            )
            .expect("formatting into a String does not fail");
        }
        timings.push(GridTiming { epsilon, seconds: started.elapsed().as_secs_f64() });
    }
    Ok(ExperimentOutcome { csv, timings })
}
