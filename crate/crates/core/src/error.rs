//! Crate-wide error type.
//!
//! Variants are grouped by severity class so the CLI can map them onto
//! stable exit codes: usage errors (bad flag values), data/validation
//! errors (malformed or inconsistent inputs), and resource errors
//! (grid cap, memory thresholds).

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    // --- usage ---
    #[error("epsilon must be in [0,1], got {0}")]
    EpsilonOutOfRange(f64),
    #[error("grid step must be positive, got {0}")]
    NonPositiveStep(f64),
    #[error("calibration fraction must be in (0,1), got {0}")]
    CalibFractionOutOfRange(f64),
    #[error("k must be at least 1")]
    ZeroK,
    #[error("{0}")]
    InvalidArgument(String),

    // --- data / validation ---
    #[error("cannot open {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("label column {0:?} not found in header")]
    MissingLabelColumn(String),
    #[error("duplicate header column {0:?}")]
    DuplicateHeader(String),
    #[error("non-numeric feature value {value:?} at row {row}, column {column:?}")]
    NonNumericCell {
        row: usize,
        column: String,
        value: String,
    },
    #[error("empty data section")]
    EmptyData,
    #[error("non-finite feature value at row {0}")]
    NonFiniteFeature(usize),
    #[error("feature row count {rows} does not match label count {labels}")]
    ShapeMismatch { rows: usize, labels: usize },
    #[error("class {0} has no samples")]
    MissingClass(usize),
    #[error("class {class} has {count} samples; at least {required} required")]
    ClassTooSmall {
        class: usize,
        count: usize,
        required: usize,
    },
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("unknown class {0}")]
    UnknownClass(usize),
    #[error("class {class} present in {found_in} but absent from {missing_from}")]
    ClassSetMismatch {
        class: usize,
        found_in: &'static str,
        missing_from: &'static str,
    },
    #[error("grid index {index} out of range (grid has {size} points)")]
    IndexOutOfRange { index: usize, size: usize },
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("training set must contain at least two classes")]
    SingleClass,
    #[error("test set shares {0} row-identical samples with a training source")]
    TestOverlap(usize),
    #[error("{0}")]
    InvalidData(String),

    // --- resource ---
    #[error("grid would contain {g} points, exceeding the cap of {cap}; increase the grid step")]
    GridTooLarge { g: u128, cap: u128 },
}

impl Error {
    /// Exit-code class used by the CLI: 1 usage, 2 data, 3 resource.
    pub fn exit_code(&self) -> i32 {
        use Error::*;
        match self {
            EpsilonOutOfRange(_) | NonPositiveStep(_) | CalibFractionOutOfRange(_) | ZeroK
            | InvalidArgument(_) => 1,
            GridTooLarge { .. } => 3,
            _ => 2,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
