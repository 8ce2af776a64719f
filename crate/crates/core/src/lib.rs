//! Confidence-guided data synthesis.
//!
//! Discretises a numeric feature space into a grid, scores every grid
//! point per class with Mondrian inductive conformal p-values built on a
//! k-NN non-conformity measure, keeps the points whose p-value exceeds a
//! significance level, and emits them as labeled synthetic samples. A
//! small evaluation harness trains a seeded reference classifier on the
//! original, synthetic, and extended training sets and reports macro
//! precision/recall/F1.

pub mod cli;
pub mod conformal;
pub mod dataset;
pub mod error;
pub mod eval;
pub mod grid;
pub mod ncm;
pub mod synthesis;

pub use error::{Error, Result};

use std::path::Path;

/// Writes via a temp file in the target directory plus rename, so readers
/// never observe a partial file.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty());
    let tmp = match dir {
        Some(d) => d.join(format!(
            ".{}.tmp{}",
            path.file_name().and_then(|n| n.to_str()).unwrap_or("out"),
            std::process::id()
        )),
        None => std::path::PathBuf::from(format!(".out.tmp{}", std::process::id())),
    };
    let io_err = |source| Error::Io {
        path: path.display().to_string(),
        source,
    };
    std::fs::write(&tmp, bytes).map_err(io_err)?;
    std::fs::rename(&tmp, path).map_err(io_err)
}
