//! Evaluation protocol: fixed first-k/last-rest split per subject, features
//! scaled by training-set ranges, and several seeded classifier runs per
//! configuration summarized by their average and minimum test error.

use std::fmt::Write as _;
use std::time::{Duration, Instant, SystemTime, UNIX_EPOCH};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::classifier::{one_hot, ClassifierError, MlpClassifier, Sample, TrainConfig};
use crate::dataset::{split_train_test, Dataset, DatasetError, LabeledImage};
use crate::features::{
    apply_scaling, fit_scaling, BlockGeometry, CompactionMethod, FeatureError, FeatureExtractor,
    ScalingParams,
};
use crate::transform::BlockSize;

pub const DEFAULT_BLOCK_SIZES: [BlockSize; 3] = [BlockSize::N8, BlockSize::N16, BlockSize::N32];
pub const DEFAULT_HIDDEN: [usize; 4] = [15, 25, 45, 60];
pub const DEFAULT_RUNS: usize = 5;
pub const DEFAULT_TRAIN_PER_SUBJECT: usize = 5;

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error(transparent)]
    Feature(#[from] FeatureError),
    #[error(transparent)]
    Classifier(#[from] ClassifierError),
    #[error("invalid experiment config: {0}")]
    InvalidConfig(String),
    #[error("predictions ({predictions}) and labels ({labels}) differ in length")]
    LengthMismatch { predictions: usize, labels: usize },
    #[error("cannot compute an error rate over zero samples")]
    NoSamples,
    #[error("all {runs} runs of {config} diverged")]
    AllRunsDiverged { config: String, runs: usize },
    #[error("thread pool: {0}")]
    ThreadPool(String),
}

/// Percentage of mismatched predictions.
pub fn error_rate(predictions: &[usize], labels: &[usize]) -> Result<f64, ExperimentError> {
    if predictions.len() != labels.len() {
        return Err(ExperimentError::LengthMismatch {
            predictions: predictions.len(),
            labels: labels.len(),
        });
    }
    if predictions.is_empty() {
        return Err(ExperimentError::NoSamples);
    }
    let wrong = predictions.iter().zip(labels).filter(|(p, l)| p != l).count();
    Ok(100.0 * wrong as f64 / predictions.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub method: CompactionMethod,
    pub block_size: BlockSize,
    pub hidden_dim: usize,
    pub runs: usize,
    /// Run `r` initializes and shuffles with `base_seed + r`; the seed field
    /// inside `train_cfg` is ignored.
    pub train_cfg: TrainConfig,
    pub base_seed: u64,
    pub geometry: BlockGeometry,
    pub train_per_subject: usize,
}

impl ExperimentConfig {
    pub fn new(method: CompactionMethod, block_size: BlockSize, hidden_dim: usize) -> Self {
        Self {
            method,
            block_size,
            hidden_dim,
            runs: DEFAULT_RUNS,
            train_cfg: TrainConfig::default(),
            base_seed: 0,
            geometry: BlockGeometry::Padded,
            train_per_subject: DEFAULT_TRAIN_PER_SUBJECT,
        }
    }

    pub fn with_base_seed(mut self, seed: u64) -> Self {
        self.base_seed = seed;
        self
    }

    pub fn with_runs(mut self, runs: usize) -> Self {
        self.runs = runs;
        self
    }

    pub fn with_train_cfg(mut self, cfg: TrainConfig) -> Self {
        self.train_cfg = cfg;
        self
    }

    pub fn with_geometry(mut self, geometry: BlockGeometry) -> Self {
        self.geometry = geometry;
        self
    }

    pub fn run_seed(&self, run: usize) -> u64 {
        self.base_seed.wrapping_add(run as u64)
    }

    pub fn label(&self) -> String {
        format!("{} {} hidden={}", self.method, self.block_size, self.hidden_dim)
    }

    fn validate(&self) -> Result<(), ExperimentError> {
        if self.runs < 1 {
            return Err(ExperimentError::InvalidConfig("runs must be ≥ 1".into()));
        }
        if self.hidden_dim < 1 {
            return Err(ExperimentError::InvalidConfig("hidden count must be ≥ 1".into()));
        }
        self.train_cfg.validate()?;
        Ok(())
    }
}

/// Every combination of the given methods, block sizes, and hidden counts,
/// method-major.
pub fn build_grid(
    methods: &[CompactionMethod],
    block_sizes: &[BlockSize],
    hidden: &[usize],
    base_seed: u64,
    train_cfg: &TrainConfig,
) -> Vec<ExperimentConfig> {
    let mut grid = Vec::with_capacity(methods.len() * block_sizes.len() * hidden.len());
    for &method in methods {
        for &n in block_sizes {
            for &h in hidden {
                grid.push(
                    ExperimentConfig::new(method, n, h)
                        .with_base_seed(base_seed)
                        .with_train_cfg(train_cfg.clone()),
                );
            }
        }
    }
    grid
}

/// The 5 methods x 3 block sizes x 4 hidden counts grid.
pub fn default_grid(base_seed: u64, train_cfg: &TrainConfig) -> Vec<ExperimentConfig> {
    build_grid(
        &CompactionMethod::ALL,
        &DEFAULT_BLOCK_SIZES,
        &DEFAULT_HIDDEN,
        base_seed,
        train_cfg,
    )
}

/// Scaled training samples and test vectors for one (method, block size).
#[derive(Debug, Clone, PartialEq)]
pub struct PreparedData {
    pub num_coefficients: usize,
    pub num_classes: usize,
    pub scaling: ScalingParams,
    pub train: Vec<Sample>,
    pub test_inputs: Vec<Vec<f64>>,
    pub test_labels: Vec<usize>,
}

fn extract_all(
    extractor: &FeatureExtractor,
    images: &[&LabeledImage],
) -> Result<Vec<Vec<f64>>, FeatureError> {
    images
        .par_iter()
        .map(|img| extractor.extract(&img.image).map(|f| f.values))
        .collect()
}

/// Splits, extracts, and scales. Scaling ranges come from the training
/// split alone.
pub fn prepare_features(
    ds: &Dataset,
    method: CompactionMethod,
    block_size: BlockSize,
    geometry: BlockGeometry,
    train_per_subject: usize,
) -> Result<PreparedData, ExperimentError> {
    let (train_imgs, test_imgs) = split_train_test(ds, train_per_subject)?;
    let extractor = FeatureExtractor::new(block_size, method, geometry);
    let train_raw = extract_all(&extractor, &train_imgs)?;
    let test_raw = extract_all(&extractor, &test_imgs)?;
    let scaling = fit_scaling(train_raw.iter().map(Vec::as_slice))?;
    let num_classes = ds.num_subjects();

    let train = train_raw
        .iter()
        .zip(&train_imgs)
        .map(|(v, img)| {
            Ok(Sample {
                input: apply_scaling(v, &scaling)?,
                target: one_hot(img.subject_id, num_classes),
            })
        })
        .collect::<Result<Vec<_>, FeatureError>>()?;
    let test_inputs = test_raw
        .iter()
        .map(|v| apply_scaling(v, &scaling))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(PreparedData {
        num_coefficients: scaling.dim(),
        num_classes,
        scaling,
        train,
        test_inputs,
        test_labels: test_imgs.iter().map(|i| i.subject_id).collect(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum RunOutcome {
    Completed {
        error_pct: f64,
        epochs: usize,
        final_train_mse: f64,
    },
    Diverged {
        epoch: usize,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub run: usize,
    pub seed: u64,
    pub outcome: RunOutcome,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    pub config: ExperimentConfig,
    pub num_coefficients: usize,
    pub test_size: usize,
    pub runs: Vec<RunRecord>,
    /// Test error of every completed run, in run order.
    pub per_run_error_pct: Vec<f64>,
    pub avg_error_pct: f64,
    pub min_error_pct: f64,
    pub warnings: Vec<String>,
}

impl RunResult {
    fn from_runs(
        config: ExperimentConfig,
        num_coefficients: usize,
        test_size: usize,
        runs: Vec<RunRecord>,
    ) -> Result<Self, ExperimentError> {
        let mut warnings = Vec::new();
        let mut errors = Vec::new();
        for r in &runs {
            match r.outcome {
                RunOutcome::Completed { error_pct, .. } => errors.push(error_pct),
                RunOutcome::Diverged { epoch } => warnings.push(format!(
                    "run {} (seed {}) diverged in epoch {epoch}; excluded from aggregates",
                    r.run, r.seed
                )),
            }
        }
        if errors.is_empty() {
            return Err(ExperimentError::AllRunsDiverged {
                config: config.label(),
                runs: runs.len(),
            });
        }
        let avg = errors.iter().sum::<f64>() / errors.len() as f64;
        let min = errors.iter().copied().fold(f64::INFINITY, f64::min);
        Ok(Self {
            config,
            num_coefficients,
            test_size,
            runs,
            per_run_error_pct: errors,
            avg_error_pct: avg,
            min_error_pct: min,
            warnings,
        })
    }
}

/// Trains and evaluates one configuration `cfg.runs` times on prepared data.
pub fn run_prepared(
    data: &PreparedData,
    cfg: &ExperimentConfig,
) -> Result<RunResult, ExperimentError> {
    cfg.validate()?;
    let mut records = Vec::with_capacity(cfg.runs);
    for run in 0..cfg.runs {
        let seed = cfg.run_seed(run);
        let mut mlp =
            MlpClassifier::new(data.num_coefficients, cfg.hidden_dim, data.num_classes, seed)?;
        let train_cfg = TrainConfig {
            seed,
            ..cfg.train_cfg.clone()
        };
        let outcome = match mlp.train(&data.train, &train_cfg) {
            Ok(report) => {
                let predictions = data
                    .test_inputs
                    .iter()
                    .map(|x| mlp.predict(x))
                    .collect::<Result<Vec<_>, _>>()?;
                RunOutcome::Completed {
                    error_pct: error_rate(&predictions, &data.test_labels)?,
                    epochs: report.epochs(),
                    final_train_mse: report.final_mse(),
                }
            }
            Err(ClassifierError::Diverged { epoch }) => RunOutcome::Diverged { epoch },
            Err(e) => return Err(e.into()),
        };
        records.push(RunRecord { run, seed, outcome });
    }
    RunResult::from_runs(
        cfg.clone(),
        data.num_coefficients,
        data.test_labels.len(),
        records,
    )
}

/// Full pipeline for one configuration.
pub fn run_config(ds: &Dataset, cfg: &ExperimentConfig) -> Result<RunResult, ExperimentError> {
    cfg.validate()?;
    let data = prepare_features(
        ds,
        cfg.method,
        cfg.block_size,
        cfg.geometry,
        cfg.train_per_subject,
    )?;
    run_prepared(&data, cfg)
}

/// A grid entry's result with the wall-clock time it took.
#[derive(Debug)]
pub struct TimedResult {
    pub result: Result<RunResult, ExperimentError>,
    pub elapsed: Duration,
}

/// Runs every configuration on up to `jobs` threads. Results come back in
/// grid order and do not depend on `jobs`.
pub fn run_grid_timed(ds: &Dataset, grid: &[ExperimentConfig], jobs: usize) -> Vec<TimedResult> {
    let one = |cfg: &ExperimentConfig| {
        let start = Instant::now();
        let result = run_config(ds, cfg);
        TimedResult {
            result,
            elapsed: start.elapsed(),
        }
    };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build();
    match pool {
        Ok(pool) => pool.install(|| grid.par_iter().map(one).collect()),
        Err(e) => grid
            .iter()
            .map(|_| TimedResult {
                result: Err(ExperimentError::ThreadPool(e.to_string())),
                elapsed: Duration::ZERO,
            })
            .collect(),
    }
}

pub fn run_grid(
    ds: &Dataset,
    grid: &[ExperimentConfig],
    jobs: usize,
) -> Vec<Result<RunResult, ExperimentError>> {
    run_grid_timed(ds, grid, jobs)
        .into_iter()
        .map(|t| t.result)
        .collect()
}

/// The configuration with the lowest minimum error (then lowest average).
pub fn best_result(results: &[RunResult]) -> Option<&RunResult> {
    results.iter().min_by(|a, b| {
        a.min_error_pct
            .total_cmp(&b.min_error_pct)
            .then(a.avg_error_pct.total_cmp(&b.avg_error_pct))
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TableFormat {
    Csv,
    Markdown,
}

pub const CSV_HEADER: &str =
    "method,block_size,num_coefficients,num_hidden,run_errors,avg_error_pct,min_error_pct";

/// Renders results as a CSV table or as one Markdown table per method.
/// In Markdown, every row sharing the global minimum error is marked `†`.
pub fn render_table(results: &[RunResult], format: TableFormat) -> String {
    let global_min = results
        .iter()
        .map(|r| format!("{:.1}", r.min_error_pct))
        .min_by(|a, b| a.parse::<f64>().unwrap().total_cmp(&b.parse::<f64>().unwrap()));
    let mut out = String::new();
    match format {
        TableFormat::Csv => {
            out.push_str(CSV_HEADER);
            out.push('\n');
            for r in results {
                let errs: Vec<String> = r.per_run_error_pct.iter().map(|e| e.to_string()).collect();
                let _ = writeln!(
                    out,
                    "{},{},{},{},{},{:.1},{:.1}",
                    r.config.method,
                    r.config.block_size.get(),
                    r.num_coefficients,
                    r.config.hidden_dim,
                    errs.join(";"),
                    r.avg_error_pct,
                    r.min_error_pct
                );
            }
        }
        TableFormat::Markdown => {
            let mut methods: Vec<CompactionMethod> = Vec::new();
            for r in results {
                if !methods.contains(&r.config.method) {
                    methods.push(r.config.method);
                }
            }
            for (i, method) in methods.iter().enumerate() {
                if i > 0 {
                    out.push('\n');
                }
                let _ = writeln!(out, "### Method {method}\n");
                out.push_str(
                    "| Method | NxN | No. of Coefficients | No. of Hidden | Avg. Error (%) | Min Error (%) |\n",
                );
                out.push_str("|---|---|---:|---:|---:|---:|\n");
                for r in results.iter().filter(|r| r.config.method == *method) {
                    let min = format!("{:.1}", r.min_error_pct);
                    let mark = if Some(&min) == global_min.as_ref() { " †" } else { "" };
                    let _ = writeln!(
                        out,
                        "| {} | {} | {} | {} | {:.1} | {min}{mark} |",
                        r.config.method,
                        r.config.block_size,
                        r.num_coefficients,
                        r.config.hidden_dim,
                        r.avg_error_pct
                    );
                }
            }
            if global_min.is_some() {
                out.push_str("\n† minimum error over all listed configurations\n");
            }
        }
    }
    out
}

#[derive(Debug, Serialize)]
pub struct ManifestEntry<'a> {
    pub config: &'a ExperimentConfig,
    pub seeds: Vec<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub result: Option<&'a RunResult>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    pub wall_clock_secs: f64,
}

/// Audit record of a grid run.
#[derive(Debug, Serialize)]
pub struct Manifest<'a> {
    pub code_version: &'static str,
    pub created_unix_secs: u64,
    pub dataset_root: String,
    pub jobs: usize,
    pub total_wall_clock_secs: f64,
    pub entries: Vec<ManifestEntry<'a>>,
}

impl<'a> Manifest<'a> {
    pub fn new(
        dataset_root: String,
        jobs: usize,
        grid: &'a [ExperimentConfig],
        timed: &'a [TimedResult],
        total: Duration,
    ) -> Self {
        let entries = grid
            .iter()
            .zip(timed)
            .map(|(config, t)| ManifestEntry {
                config,
                seeds: (0..config.runs).map(|r| config.run_seed(r)).collect(),
                result: t.result.as_ref().ok(),
                error: t.result.as_ref().err().map(|e| e.to_string()),
                wall_clock_secs: t.elapsed.as_secs_f64(),
            })
            .collect();
        Self {
            code_version: env!("CARGO_PKG_VERSION"),
            created_unix_secs: SystemTime::now()
                .duration_since(UNIX_EPOCH)
                .map(|d| d.as_secs())
                .unwrap_or(0),
            dataset_root,
            jobs,
            total_wall_clock_secs: total.as_secs_f64(),
            entries,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("manifest serializes")
    }
}
