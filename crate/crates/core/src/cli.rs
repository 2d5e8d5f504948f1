//! Command-line front end.
//!
//! Exit codes: 0 on success, 2 for usage or input errors, 3 for runtime
//! failures (divergence, failed grid configurations, output I/O).

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::classifier::{ClassifierError, MlpClassifier, TrainConfig};
use crate::dataset::{load_orl, Dataset, ORL_ROOT_ENV};
use crate::experiment::{
    best_result, build_grid, error_rate, prepare_features, render_table, run_grid_timed,
    ExperimentConfig, Manifest, PreparedData, RunResult, TableFormat, DEFAULT_BLOCK_SIZES,
    DEFAULT_HIDDEN, DEFAULT_TRAIN_PER_SUBJECT,
};
use crate::features::{BlockGeometry, CompactionMethod, FeatureExtractor};
use crate::transform::BlockSize;

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_RUNTIME: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "nonface", version, about = "Block-DCT face recognition on ORL-layout databases")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Write the feature vector of every image as CSV.
    Extract {
        #[command(flatten)]
        data: DataArgs,
        #[command(flatten)]
        features: FeatureArgs,
        /// Output CSV path.
        #[arg(long)]
        out: PathBuf,
    },
    /// Train one classifier on the fixed split and save it.
    Train {
        #[command(flatten)]
        data: DataArgs,
        #[command(flatten)]
        features: FeatureArgs,
        #[arg(long, default_value_t = 60, value_parser = parse_positive)]
        hidden: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long)]
        model_out: PathBuf,
        #[command(flatten)]
        train: TrainArgs,
    },
    /// Evaluate a saved classifier on the test split.
    Eval {
        #[command(flatten)]
        data: DataArgs,
        #[command(flatten)]
        features: FeatureArgs,
        #[arg(long)]
        model: PathBuf,
    },
    /// Run the method x block size x hidden count grid and render the tables.
    Reproduce {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long, default_value_t = 0)]
        base_seed: u64,
        #[arg(long, value_enum, default_value_t = Format::Markdown)]
        format: Format,
        /// Table output path; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
        /// JSON manifest path; defaults to `<out>.manifest.json`.
        #[arg(long)]
        manifest: Option<PathBuf>,
        #[arg(long, default_value_t = 1, value_parser = parse_positive)]
        jobs: usize,
        #[arg(long, default_value_t = 5, value_parser = parse_positive)]
        runs: usize,
        #[arg(long, value_delimiter = ',', value_parser = parse_method)]
        methods: Option<Vec<CompactionMethod>>,
        #[arg(long, value_delimiter = ',', value_parser = parse_block_size)]
        block_sizes: Option<Vec<BlockSize>>,
        #[arg(long, value_delimiter = ',', value_parser = parse_positive)]
        hidden: Option<Vec<usize>>,
        #[arg(long, value_enum, default_value_t = Coefficients::Padded)]
        coefficients: Coefficients,
        #[command(flatten)]
        train: TrainArgs,
    },
}

#[derive(Debug, Args)]
struct DataArgs {
    /// Dataset root containing s1/..sK/ directories of N.pgm files.
    #[arg(env = ORL_ROOT_ENV)]
    root: PathBuf,
    /// Training images per subject; the rest are test images.
    #[arg(long, default_value_t = DEFAULT_TRAIN_PER_SUBJECT, value_parser = parse_positive)]
    train_per_subject: usize,
}

#[derive(Debug, Args)]
struct FeatureArgs {
    #[arg(long, default_value = "8", value_parser = parse_block_size)]
    block_size: BlockSize,
    #[arg(long, default_value = "m5", value_parser = parse_method)]
    method: CompactionMethod,
    #[arg(long, value_enum, default_value_t = Coefficients::Padded)]
    coefficients: Coefficients,
}

#[derive(Debug, Args)]
struct TrainArgs {
    #[arg(long, default_value_t = 300)]
    epochs: usize,
    #[arg(long, default_value_t = 0.1)]
    lr: f64,
    #[arg(long, default_value_t = 0.9)]
    momentum: f64,
    #[arg(long, default_value_t = 1e-3)]
    target_mse: f64,
}

impl TrainArgs {
    fn config(&self, seed: u64) -> Result<TrainConfig, CliError> {
        let cfg = TrainConfig {
            max_epochs: self.epochs,
            learning_rate: self.lr,
            momentum: self.momentum,
            target_mse: self.target_mse,
            seed,
        };
        cfg.validate().map_err(|e| CliError::Usage(e.to_string()))?;
        Ok(cfg)
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Format {
    Csv,
    Markdown,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Coefficients {
    Padded,
    Cropped,
}

impl From<Coefficients> for BlockGeometry {
    fn from(c: Coefficients) -> Self {
        match c {
            Coefficients::Padded => BlockGeometry::Padded,
            Coefficients::Cropped => BlockGeometry::Cropped,
        }
    }
}

fn parse_block_size(s: &str) -> Result<BlockSize, String> {
    let msg = "block size must be a power of two ≥ 8";
    let n: usize = s.parse().map_err(|_| msg.to_string())?;
    BlockSize::new(n).map_err(|_| msg.to_string())
}

fn parse_method(s: &str) -> Result<CompactionMethod, String> {
    s.parse().map_err(|e: crate::features::FeatureError| e.to_string())
}

fn parse_positive(s: &str) -> Result<usize, String> {
    match s.parse::<usize>() {
        Ok(0) => Err("must be at least 1".into()),
        Ok(v) => Ok(v),
        Err(e) => Err(e.to_string()),
    }
}

#[derive(Debug)]
enum CliError {
    Usage(String),
    Runtime(String),
}

impl CliError {
    fn code(&self) -> i32 {
        match self {
            CliError::Usage(_) => EXIT_USAGE,
            CliError::Runtime(_) => EXIT_RUNTIME,
        }
    }

    fn message(&self) -> &str {
        match self {
            CliError::Usage(m) | CliError::Runtime(m) => m,
        }
    }
}

fn runtime(e: impl std::fmt::Display) -> CliError {
    CliError::Runtime(e.to_string())
}

fn write_file(path: &Path, contents: impl AsRef<[u8]>) -> Result<(), CliError> {
    fs::write(path, contents).map_err(|e| CliError::Runtime(format!("writing {}: {e}", path.display())))
}

fn load(data: &DataArgs) -> Result<Dataset, CliError> {
    let ds = load_orl(&data.root).map_err(|e| CliError::Usage(e.to_string()))?;
    if data.train_per_subject >= ds.samples_per_subject() {
        return Err(CliError::Usage(format!(
            "--train-per-subject {} leaves no test images ({} samples per subject)",
            data.train_per_subject,
            ds.samples_per_subject()
        )));
    }
    Ok(ds)
}

fn prepare(ds: &Dataset, data: &DataArgs, f: &FeatureArgs) -> Result<PreparedData, CliError> {
    prepare_features(
        ds,
        f.method,
        f.block_size,
        f.coefficients.into(),
        data.train_per_subject,
    )
    .map_err(|e| CliError::Usage(e.to_string()))
}

fn test_error(mlp: &MlpClassifier, data: &PreparedData) -> Result<f64, CliError> {
    let predictions = data
        .test_inputs
        .iter()
        .map(|x| mlp.predict(x))
        .collect::<Result<Vec<_>, _>>()
        .map_err(runtime)?;
    error_rate(&predictions, &data.test_labels).map_err(runtime)
}

fn cmd_extract(
    data: &DataArgs,
    f: &FeatureArgs,
    out_path: &Path,
    out: &mut dyn Write,
) -> Result<(), CliError> {
    let ds = load(data)?;
    let extractor = FeatureExtractor::new(f.block_size, f.method, f.coefficients.into());
    let mut csv = String::new();
    let mut dim = 0;
    for img in ds.images() {
        let fv = extractor
            .extract(&img.image)
            .map_err(|e| CliError::Usage(e.to_string()))?;
        if dim == 0 {
            dim = fv.len();
            csv.push_str("subject_id,sample_index");
            for j in 1..=dim {
                csv.push_str(&format!(",f_{j}"));
            }
            csv.push('\n');
        }
        csv.push_str(&format!("{},{}", img.subject_id + 1, img.sample_index + 1));
        for v in &fv.values {
            csv.push_str(&format!(",{v}"));
        }
        csv.push('\n');
    }
    write_file(out_path, csv)?;
    let _ = writeln!(
        out,
        "wrote {} feature vectors of dimension {dim} ({} {}) to {}",
        ds.images().len(),
        f.method,
        f.block_size,
        out_path.display()
    );
    Ok(())
}

fn cmd_train(
    data: &DataArgs,
    f: &FeatureArgs,
    hidden: usize,
    seed: u64,
    model_out: &Path,
    train: &TrainArgs,
    out: &mut dyn Write,
) -> Result<(), CliError> {
    let cfg = train.config(seed)?;
    let ds = load(data)?;
    let prepared = prepare(&ds, data, f)?;
    let mut mlp = MlpClassifier::new(prepared.num_coefficients, hidden, prepared.num_classes, seed)
        .map_err(|e| CliError::Usage(e.to_string()))?;
    let report = match mlp.train(&prepared.train, &cfg) {
        Ok(r) => r,
        Err(e @ ClassifierError::Diverged { .. }) => return Err(runtime(e)),
        Err(e) => return Err(CliError::Usage(e.to_string())),
    };
    mlp.save(model_out).map_err(runtime)?;
    let err = test_error(&mlp, &prepared)?;
    let _ = writeln!(
        out,
        "{} {} hidden={hidden} seed={seed}: {} epochs",
        f.method,
        f.block_size,
        report.epochs()
    );
    let _ = writeln!(out, "train mse: {:.6}", report.final_mse());
    let _ = writeln!(out, "test error: {err:.1}%");
    let _ = writeln!(out, "model written to {}", model_out.display());
    Ok(())
}

fn cmd_eval(
    data: &DataArgs,
    f: &FeatureArgs,
    model: &Path,
    out: &mut dyn Write,
) -> Result<(), CliError> {
    let mlp = MlpClassifier::load(model).map_err(|e| CliError::Usage(format!("{}: {e}", model.display())))?;
    let ds = load(data)?;
    let prepared = prepare(&ds, data, f)?;
    if mlp.input_dim() != prepared.num_coefficients || mlp.output_dim() != prepared.num_classes {
        return Err(CliError::Usage(format!(
            "model is {}-{}-{} but {} {} features give {} inputs and the dataset has {} subjects",
            mlp.input_dim(),
            mlp.hidden_dim(),
            mlp.output_dim(),
            f.method,
            f.block_size,
            prepared.num_coefficients,
            prepared.num_classes
        )));
    }
    let err = test_error(&mlp, &prepared)?;
    let _ = writeln!(out, "test error: {err:.1}%");
    Ok(())
}

fn default_manifest_path(out: &Path) -> PathBuf {
    let stem = out
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "tables".into());
    out.with_file_name(format!("{stem}.manifest.json"))
}

#[allow(clippy::too_many_arguments)]
fn cmd_reproduce(
    data: &DataArgs,
    base_seed: u64,
    format: Format,
    out_path: Option<&Path>,
    manifest_path: Option<&Path>,
    jobs: usize,
    runs: usize,
    methods: Option<&[CompactionMethod]>,
    block_sizes: Option<&[BlockSize]>,
    hidden: Option<&[usize]>,
    coefficients: Coefficients,
    train: &TrainArgs,
    out: &mut dyn Write,
    err_out: &mut dyn Write,
) -> Result<(), CliError> {
    let train_cfg = train.config(base_seed)?;
    let ds = load(data)?;
    let grid: Vec<ExperimentConfig> = build_grid(
        methods.unwrap_or(&CompactionMethod::ALL),
        block_sizes.unwrap_or(&DEFAULT_BLOCK_SIZES),
        hidden.unwrap_or(&DEFAULT_HIDDEN),
        base_seed,
        &train_cfg,
    )
    .into_iter()
    .map(|c| ExperimentConfig {
        runs,
        geometry: coefficients.into(),
        train_per_subject: data.train_per_subject,
        ..c
    })
    .collect();
    if grid.is_empty() {
        return Err(CliError::Usage("the selected grid is empty".into()));
    }

    let start = Instant::now();
    let timed = run_grid_timed(&ds, &grid, jobs);
    let total = start.elapsed();

    let mut results: Vec<RunResult> = Vec::new();
    let mut failures = 0;
    for (cfg, t) in grid.iter().zip(&timed) {
        match &t.result {
            Ok(r) => {
                for w in &r.warnings {
                    let _ = writeln!(err_out, "warning: {}: {w}", cfg.label());
                }
                results.push(r.clone());
            }
            Err(e) => {
                failures += 1;
                let _ = writeln!(err_out, "error: {}: {e}", cfg.label());
            }
        }
    }

    let table_format = match format {
        Format::Csv => TableFormat::Csv,
        Format::Markdown => TableFormat::Markdown,
    };
    let table = render_table(&results, table_format);
    match out_path {
        Some(p) => write_file(p, &table)?,
        None => {
            let _ = out.write_all(table.as_bytes());
        }
    }
    let manifest_path = manifest_path
        .map(Path::to_path_buf)
        .or_else(|| out_path.map(default_manifest_path));
    if let Some(p) = &manifest_path {
        let manifest = Manifest::new(data.root.display().to_string(), jobs, &grid, &timed, total);
        write_file(p, manifest.to_json())?;
    }

    if let Some(best) = best_result(&results) {
        let _ = writeln!(
            out,
            "best: {} {} coefficients={} hidden={} avg {:.1}% min {:.1}%",
            best.config.method,
            best.config.block_size,
            best.num_coefficients,
            best.config.hidden_dim,
            best.avg_error_pct,
            best.min_error_pct
        );
    }
    let _ = writeln!(
        out,
        "{} of {} configurations completed in {:.1}s",
        results.len(),
        grid.len(),
        total.as_secs_f64()
    );
    if failures > 0 {
        return Err(CliError::Runtime(format!("{failures} configuration(s) failed")));
    }
    Ok(())
}

/// Parses `args` (including the program name) and runs the command.
pub fn run_with<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let rendered = e.render().to_string();
            if e.use_stderr() {
                let _ = err.write_all(rendered.as_bytes());
            } else {
                let _ = out.write_all(rendered.as_bytes());
            }
            return code;
        }
    };
    let result = match &cli.command {
        Command::Extract {
            data,
            features,
            out: path,
        } => cmd_extract(data, features, path, out),
        Command::Train {
            data,
            features,
            hidden,
            seed,
            model_out,
            train,
        } => cmd_train(data, features, *hidden, *seed, model_out, train, out),
        Command::Eval {
            data,
            features,
            model,
        } => cmd_eval(data, features, model, out),
        Command::Reproduce {
            data,
            base_seed,
            format,
            out: path,
            manifest,
            jobs,
            runs,
            methods,
            block_sizes,
            hidden,
            coefficients,
            train,
        } => cmd_reproduce(
            data,
            *base_seed,
            *format,
            path.as_deref(),
            manifest.as_deref(),
            *jobs,
            *runs,
            methods.as_deref(),
            block_sizes.as_deref(),
            hidden.as_deref(),
            *coefficients,
            train,
            out,
            err,
        ),
    };
    match result {
        Ok(()) => EXIT_OK,
        Err(e) => {
            let _ = writeln!(err, "error: {}", e.message());
            e.code()
        }
    }
}

/// Entry point used by the binary.
pub fn main_from_env() -> i32 {
    let stdout = std::io::stdout();
    let stderr = std::io::stderr();
    run_with(std::env::args_os(), &mut stdout.lock(), &mut stderr.lock())
}
