//! Command-line entry point.
//!
//! Exit codes: 0 success, 1 usage error, 2 data/validation error,
//! 3 resource error. Diagnostics go to stderr as one-line messages
//! prefixed `error:`; stdout carries only the requested artifact.

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::conformal::{Direction, PValueOptions};
use crate::dataset::{self, SplitConfig, DEFAULT_CALIB_FRACTION, TOY_VERSION};
use crate::error::{Error, Result};
use crate::eval::{
    ClassifierKind, ClassifierSpec, DEFAULT_EPOCHS, DEFAULT_HIDDEN_UNITS, DEFAULT_LEARNING_RATE,
};
use crate::grid::DEFAULT_GRID_CAP;
use crate::ncm::{Metric, NcmConfig, DEFAULT_K};
use crate::synthesis::{
    self, SynthesisConfig, DEFAULT_CHUNK_SIZE, DEFAULT_EPSILON, DEFAULT_FIELD_THRESHOLD,
    DEFAULT_GRID_STEP,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum MetricArg {
    Euclidean,
    Manhattan,
}

impl From<MetricArg> for Metric {
    fn from(m: MetricArg) -> Self {
        match m {
            MetricArg::Euclidean => Metric::Euclidean,
            MetricArg::Manhattan => Metric::Manhattan,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum DirectionArg {
    /// Literal counting of calibration scores <= the test score.
    PaperLe,
    /// Standard conformal convention (>=); conforming points score high.
    StandardGe,
}

impl From<DirectionArg> for Direction {
    fn from(d: DirectionArg) -> Self {
        match d {
            DirectionArg::PaperLe => Direction::PaperLe,
            DirectionArg::StandardGe => Direction::StandardGe,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ClassifierArg {
    SoftmaxLinear,
    MlpOneHidden,
}

impl From<ClassifierArg> for ClassifierKind {
    fn from(c: ClassifierArg) -> Self {
        match c {
            ClassifierArg::SoftmaxLinear => ClassifierKind::SoftmaxLinear,
            ClassifierArg::MlpOneHidden => ClassifierKind::MlpOneHidden,
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "consynth", version, about = "Confidence-guided data synthesis", disable_version_flag = true)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct SynthArgs {
    /// Training CSV with a header row.
    #[arg(long)]
    train: PathBuf,
    /// Label column name.
    #[arg(long, default_value = "label")]
    label_column: String,
    /// Significance level; regions keep grid points with p > epsilon.
    #[arg(long, default_value_t = DEFAULT_EPSILON)]
    epsilon: f64,
    /// Grid step.
    #[arg(long, default_value_t = DEFAULT_GRID_STEP)]
    grid_step: f64,
    /// Neighbour count of the non-conformity measure.
    #[arg(long, default_value_t = DEFAULT_K)]
    k: usize,
    #[arg(long, value_enum, default_value_t = MetricArg::Euclidean)]
    metric: MetricArg,
    /// Fraction of each class routed to the calibration set.
    #[arg(long, default_value_t = DEFAULT_CALIB_FRACTION)]
    calib_fraction: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Maximum total grid points.
    #[arg(long, default_value_t = DEFAULT_GRID_CAP)]
    grid_cap: u128,
    /// Whole grid steps of padding either side of the data bounds.
    #[arg(long, default_value_t = 0)]
    grid_pad: usize,
    #[arg(long, default_value_t = DEFAULT_CHUNK_SIZE)]
    chunk_size: usize,
    /// Worker threads for grid scoring; 0 uses available parallelism.
    #[arg(long, default_value_t = 0)]
    workers: usize,
    /// p-value counting direction.
    #[arg(long, value_enum, default_value_t = DirectionArg::PaperLe)]
    pvalue_direction: DirectionArg,
    /// Emit only these classes into the synthetic set (repeatable).
    #[arg(long)]
    minority_only: Option<Vec<usize>>,
    /// Dense field entries (grid points x classes) above which scoring
    /// streams and the field CSV becomes unavailable.
    #[arg(long, default_value_t = DEFAULT_FIELD_THRESHOLD)]
    field_threshold: usize,
}

impl SynthArgs {
    fn config(&self) -> SynthesisConfig {
        SynthesisConfig {
            epsilon: self.epsilon,
            grid_step: self.grid_step,
            ncm: NcmConfig {
                k: self.k,
                metric: self.metric.into(),
            },
            split: SplitConfig {
                calib_fraction: self.calib_fraction,
                seed: self.seed,
            },
            grid_cap: self.grid_cap,
            grid_pad: self.grid_pad,
            chunk_size: self.chunk_size,
            minority_only: self.minority_only.clone(),
            pvalue: PValueOptions {
                smoothed: false,
                tie_seed: self.seed,
                direction: self.pvalue_direction.into(),
            },
            field_threshold: self.field_threshold,
        }
    }
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate the frozen two-class imbalanced toy dataset.
    ToyGen {
        #[arg(long, default_value_t = 4000)]
        n: usize,
        #[arg(long, default_value_t = 0.1)]
        minority_fraction: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Stratified proper/calibration split of a CSV.
    Split {
        #[arg(long)]
        train: PathBuf,
        #[arg(long, default_value = "label")]
        label_column: String,
        #[arg(long, default_value_t = DEFAULT_CALIB_FRACTION)]
        calib_fraction: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out_proper: PathBuf,
        #[arg(long)]
        out_calib: PathBuf,
    },
    /// Synthesise labeled samples from high-confidence regions.
    Synth {
        #[command(flatten)]
        args: SynthArgs,
        /// Synthetic dataset CSV.
        #[arg(long)]
        out: PathBuf,
        /// Region summary JSON (default: <out stem>.regions.json).
        #[arg(long)]
        regions_out: Option<PathBuf>,
        /// Optional p-value field CSV.
        #[arg(long)]
        field_out: Option<PathBuf>,
        /// Drop duplicate-coordinate rows from the synthetic CSV.
        #[arg(long, default_value_t = false)]
        dedupe: bool,
    },
    /// Score the grid and export the p-value field only.
    ScoreGrid {
        #[command(flatten)]
        args: SynthArgs,
        #[arg(long)]
        field_out: PathBuf,
    },
    /// Train-on-original vs train-on-extended comparison; JSON on stdout.
    Eval {
        #[arg(long)]
        orig: PathBuf,
        #[arg(long)]
        syn: PathBuf,
        #[arg(long)]
        test: PathBuf,
        #[arg(long, default_value = "label")]
        label_column: String,
        #[arg(long, default_value_t = 5)]
        repeats: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, value_enum, default_value_t = ClassifierArg::SoftmaxLinear)]
        classifier: ClassifierArg,
        #[arg(long, default_value_t = DEFAULT_HIDDEN_UNITS)]
        hidden_units: usize,
        #[arg(long, default_value_t = DEFAULT_LEARNING_RATE)]
        learning_rate: f64,
        #[arg(long, default_value_t = DEFAULT_EPOCHS)]
        epochs: usize,
    },
    /// Print version and the frozen toy-generator tag.
    Version,
}

fn in_pool<T: Send>(workers: usize, f: impl FnOnce() -> Result<T> + Send) -> Result<T> {
    if workers == 0 {
        return f();
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::InvalidArgument(format!("cannot build worker pool: {e}")))?;
    pool.install(f)
}

fn dedupe_rows(data: &dataset::LabeledDataset) -> dataset::LabeledDataset {
    use std::collections::HashSet;
    let mut seen: HashSet<(Vec<u64>, usize)> = HashSet::new();
    let keep: Vec<usize> = (0..data.len())
        .filter(|&i| {
            let key = (
                data.row(i).iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
                data.label(i),
            );
            seen.insert(key)
        })
        .collect();
    data.select(&keep)
}

fn execute(cli: Cli) -> Result<()> {
    match cli.command {
        Command::ToyGen {
            n,
            minority_fraction,
            seed,
            out,
        } => {
            let ds = dataset::make_toy(n, minority_fraction, seed)?;
            dataset::save_csv(&ds, &out, "label")
        }
        Command::Split {
            train,
            label_column,
            calib_fraction,
            seed,
            out_proper,
            out_calib,
        } => {
            let ds = dataset::load_csv(&train, &label_column)?;
            let (proper, calib) = dataset::stratified_split(
                &ds,
                &SplitConfig {
                    calib_fraction,
                    seed,
                },
            )?;
            dataset::save_csv(&proper, &out_proper, &label_column)?;
            dataset::save_csv(&calib, &out_calib, &label_column)
        }
        Command::Synth {
            args,
            out,
            regions_out,
            field_out,
            dedupe,
        } => {
            let config = args.config();
            config.validate()?;
            let train = dataset::load_csv(&args.train, &args.label_column)?;
            let workers = args.workers;
            let output = in_pool(workers, || synthesis::synthesize(&train, &config))?;
            let syn = if dedupe {
                dedupe_rows(&output.synthetic)
            } else {
                output.synthetic.clone()
            };
            dataset::save_csv(&syn, &out, &args.label_column)?;
            let regions_path = regions_out.unwrap_or_else(|| out.with_extension("regions.json"));
            let summary = synthesis::region_summary(
                &output.regions,
                config.grid_step,
                config.minority_only.as_deref(),
            );
            let json = serde_json::to_string_pretty(&summary)
                .map_err(|e| Error::InvalidData(e.to_string()))?;
            crate::write_atomic(&regions_path, json.as_bytes())?;
            if let Some(field_path) = field_out {
                match &output.field {
                    Some(field) => synthesis::export_field(field, &field_path)?,
                    None => {
                        return Err(Error::InvalidData(
                            "field export unavailable: grid exceeded the streaming threshold"
                                .into(),
                        ))
                    }
                }
            }
            Ok(())
        }
        Command::ScoreGrid { args, field_out } => {
            let config = args.config();
            config.validate()?;
            let train = dataset::load_csv(&args.train, &args.label_column)?;
            let field = in_pool(args.workers, || {
                let (proper, calib) = dataset::stratified_split(&train, &config.split)?;
                let model = crate::conformal::fit(&proper, &calib, &config.ncm)?;
                let spec = crate::grid::build_grid_spec_padded(
                    &train,
                    config.grid_step,
                    config.grid_cap,
                    config.grid_pad,
                )?;
                synthesis::score_grid(&model, &spec, &config.pvalue, config.chunk_size)
            })?;
            synthesis::export_field(&field, &field_out)
        }
        Command::Eval {
            orig,
            syn,
            test,
            label_column,
            repeats,
            seed,
            classifier,
            hidden_units,
            learning_rate,
            epochs,
        } => {
            let orig = dataset::load_csv(&orig, &label_column)?;
            let syn = match dataset::load_csv(&syn, &label_column) {
                Ok(ds) => ds,
                Err(Error::EmptyData) => dataset::LabeledDataset::empty(orig.dim()),
                Err(e) => return Err(e),
            };
            let test = dataset::load_csv(&test, &label_column)?;
            let spec = ClassifierSpec {
                kind: classifier.into(),
                hidden_units,
                learning_rate,
                epochs,
                seed,
            };
            let report = crate::eval::run_comparison(&orig, &syn, &test, &spec, repeats)?;
            let json = serde_json::to_string_pretty(&report)
                .map_err(|e| Error::InvalidData(e.to_string()))?;
            println!("{json}");
            Ok(())
        }
        Command::Version => {
            println!("consynth {} ({})", env!("CARGO_PKG_VERSION"), TOY_VERSION);
            Ok(())
        }
    }
}

/// Parses and runs; returns the process exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            // clap prints help/version on stdout with success status
            if e.use_stderr() {
                eprintln!("error: {}", e.kind());
                return 1;
            }
            print!("{e}");
            return 0;
        }
    };
    match execute(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
