//! Data containers, CSV ingestion/emission, stratified splitting,
//! min-max scaling, and the deterministic imbalanced toy generator.

use std::collections::HashMap;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};

/// Version tag of the frozen toy generator. Bumped if the generative
/// parameters ever change, so regression baselines stay attributable.
pub const TOY_VERSION: &str = "toy-v1";

/// Rows of d-dimensional feature vectors with dense integer class labels.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledDataset {
    features: Vec<f64>, // row-major, len = n * d
    labels: Vec<usize>,
    d: usize,
    class_names: Option<Vec<String>>,
}

impl LabeledDataset {
    /// Builds a dataset from flat row-major features.
    ///
    /// Validates shape and finiteness. Class completeness (every id in
    /// `0..C-1` present) is checked separately by the operations that
    /// need it, since synthetic outputs may legitimately omit classes.
    pub fn new(
        features: Vec<f64>,
        d: usize,
        labels: Vec<usize>,
        class_names: Option<Vec<String>>,
    ) -> Result<Self> {
        if d == 0 && !labels.is_empty() {
            return Err(Error::InvalidData("dimension must be positive".into()));
        }
        let n = labels.len();
        if d != 0 && features.len() != n * d {
            return Err(Error::ShapeMismatch {
                rows: if d == 0 { 0 } else { features.len() / d },
                labels: n,
            });
        }
        for (i, row) in features.chunks(d.max(1)).enumerate() {
            if row.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFiniteFeature(i));
            }
        }
        Ok(Self {
            features,
            labels,
            d,
            class_names,
        })
    }

    pub fn from_rows(rows: &[Vec<f64>], labels: Vec<usize>) -> Result<Self> {
        let d = rows.first().map_or(0, |r| r.len());
        let mut flat = Vec::with_capacity(rows.len() * d);
        for r in rows {
            if r.len() != d {
                return Err(Error::DimensionMismatch {
                    expected: d,
                    got: r.len(),
                });
            }
            flat.extend_from_slice(r);
        }
        Self::new(flat, d, labels, None)
    }

    pub fn empty(d: usize) -> Self {
        Self {
            features: Vec::new(),
            labels: Vec::new(),
            d,
            class_names: None,
        }
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.features[i * self.d..(i + 1) * self.d]
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn label(&self, i: usize) -> usize {
        self.labels[i]
    }

    /// Inferred class count: max label + 1 (0 when empty).
    pub fn num_classes(&self) -> usize {
        self.labels.iter().max().map_or(0, |m| m + 1)
    }

    pub fn class_names(&self) -> Option<&[String]> {
        self.class_names.as_deref()
    }

    pub fn set_class_names(&mut self, names: Option<Vec<String>>) {
        self.class_names = names;
    }

    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0usize; self.num_classes()];
        for &y in &self.labels {
            counts[y] += 1;
        }
        counts
    }

    /// Errors unless every class in `0..C-1` occurs at least once.
    pub fn require_all_classes(&self) -> Result<()> {
        for (c, &count) in self.class_counts().iter().enumerate() {
            if count == 0 {
                return Err(Error::MissingClass(c));
            }
        }
        Ok(())
    }

    /// Sub-dataset keeping the given row indices in the given order.
    pub fn select(&self, indices: &[usize]) -> Self {
        let mut features = Vec::with_capacity(indices.len() * self.d);
        let mut labels = Vec::with_capacity(indices.len());
        for &i in indices {
            features.extend_from_slice(self.row(i));
            labels.push(self.labels[i]);
        }
        Self {
            features,
            labels,
            d: self.d,
            class_names: self.class_names.clone(),
        }
    }

    /// Row-wise concatenation; class names taken from `self`.
    pub fn concat(&self, other: &Self) -> Result<Self> {
        if !other.is_empty() && !self.is_empty() && self.d != other.d {
            return Err(Error::DimensionMismatch {
                expected: self.d,
                got: other.d,
            });
        }
        let mut features = self.features.clone();
        features.extend_from_slice(&other.features);
        let mut labels = self.labels.clone();
        labels.extend_from_slice(&other.labels);
        Ok(Self {
            features,
            labels,
            d: self.d.max(other.d),
            class_names: self.class_names.clone(),
        })
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.features.chunks(self.d.max(1))
    }
}

/// Seeded stratified split parameters.
#[derive(Debug, Clone, Copy)]
pub struct SplitConfig {
    pub calib_fraction: f64,
    pub seed: u64,
}

impl Default for SplitConfig {
    fn default() -> Self {
        Self {
            calib_fraction: DEFAULT_CALIB_FRACTION,
            seed: 0,
        }
    }
}

/// Calibration gets half the data by default: Mondrian p-value resolution
/// is 1/(N_y+1), so small classes need as many calibration points as
/// affordable.
pub const DEFAULT_CALIB_FRACTION: f64 = 0.5;

/// Per-dimension (min, max) pairs learned from a dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalingTransform {
    pub bounds: Vec<(f64, f64)>,
}

impl ScalingTransform {
    pub fn dim(&self) -> usize {
        self.bounds.len()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScaleMode {
    Fit,
    Apply,
    Invert,
}

/// Nine-significant-digit numeric formatting for CSV emission; enough for
/// stable round trips in regression tests without trailing noise.
pub fn format_sig9(v: f64) -> String {
    if v == 0.0 {
        return "0".to_string();
    }
    let mag = v.abs().log10().floor() as i32;
    if (-4..9).contains(&mag) {
        let decimals = (8 - mag).max(0) as usize;
        let s = format!("{v:.decimals$}");
        if s.contains('.') {
            let s = s.trim_end_matches('0').trim_end_matches('.');
            s.to_string()
        } else {
            s
        }
    } else {
        format!("{v:.8e}")
    }
}

/// Loads a CSV with one header row; every column except `label_column`
/// must be numeric. Labels are re-encoded to dense ids in first-appearance
/// order, with original strings kept as class names.
pub fn load_csv(path: &Path, label_column: &str) -> Result<LabeledDataset> {
    let file = std::fs::File::open(path).map_err(|source| Error::Io {
        path: path.display().to_string(),
        source,
    })?;
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(file);
    let headers: Vec<String> = reader.headers()?.iter().map(str::to_string).collect();
    {
        let mut seen = HashMap::new();
        for h in &headers {
            if seen.insert(h.clone(), ()).is_some() {
                return Err(Error::DuplicateHeader(h.clone()));
            }
        }
    }
    let label_idx = headers
        .iter()
        .position(|h| h == label_column)
        .ok_or_else(|| Error::MissingLabelColumn(label_column.to_string()))?;

    let d = headers.len() - 1;
    let mut features = Vec::new();
    let mut labels = Vec::new();
    let mut name_to_id: HashMap<String, usize> = HashMap::new();
    let mut class_names = Vec::new();

    for (row_no, record) in reader.records().enumerate() {
        let record = record?;
        for (col, cell) in record.iter().enumerate() {
            if col == label_idx {
                let name = cell.to_string();
                let next = name_to_id.len();
                let id = *name_to_id.entry(name.clone()).or_insert_with(|| {
                    class_names.push(name);
                    next
                });
                labels.push(id);
            } else {
                let v: f64 = cell.trim().parse().map_err(|_| Error::NonNumericCell {
                    row: row_no + 1,
                    column: headers[col].clone(),
                    value: cell.to_string(),
                })?;
                features.push(v);
            }
        }
    }
    if labels.is_empty() {
        return Err(Error::EmptyData);
    }
    LabeledDataset::new(features, d, labels, Some(class_names))
}

/// Writes the dataset with header `f0,...,f{d-1},<label_column>`, numeric
/// fields at nine significant digits, labels as original names when known.
pub fn save_csv(data: &LabeledDataset, path: &Path, label_column: &str) -> Result<()> {
    let mut out = String::new();
    for j in 0..data.dim() {
        out.push_str(&format!("f{j},"));
    }
    out.push_str(label_column);
    out.push('\n');
    for (i, row) in data.rows().enumerate() {
        for v in row {
            out.push_str(&format_sig9(*v));
            out.push(',');
        }
        let y = data.label(i);
        match data.class_names() {
            Some(names) if y < names.len() => out.push_str(&names[y]),
            _ => out.push_str(&y.to_string()),
        }
        out.push('\n');
    }
    crate::write_atomic(path, out.as_bytes())
}

fn class_rng(seed: u64, class: usize) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed.wrapping_add((class as u64).wrapping_mul(0x9E3779B97F4A7C15)))
}

/// Splits into (proper, calib) with a seeded uniform permutation per class.
/// Per class with n_c samples, calib receives round(fraction * n_c) clamped
/// to [1, n_c - 1]; both subsets preserve original row order.
pub fn stratified_split(
    data: &LabeledDataset,
    config: &SplitConfig,
) -> Result<(LabeledDataset, LabeledDataset)> {
    if !(config.calib_fraction > 0.0 && config.calib_fraction < 1.0) {
        return Err(Error::CalibFractionOutOfRange(config.calib_fraction));
    }
    data.require_all_classes()?;
    let num_classes = data.num_classes();
    let mut per_class: Vec<Vec<usize>> = vec![Vec::new(); num_classes];
    for (i, &y) in data.labels().iter().enumerate() {
        per_class[y].push(i);
    }
    let mut calib_mask = vec![false; data.len()];
    for (c, indices) in per_class.iter().enumerate() {
        let n_c = indices.len();
        if n_c < 2 {
            return Err(Error::ClassTooSmall {
                class: c,
                count: n_c,
                required: 2,
            });
        }
        let n_calib = ((config.calib_fraction * n_c as f64).round() as usize).clamp(1, n_c - 1);
        let mut shuffled = indices.clone();
        shuffled.shuffle(&mut class_rng(config.seed, c));
        for &i in shuffled.iter().take(n_calib) {
            calib_mask[i] = true;
        }
    }
    let proper: Vec<usize> = (0..data.len()).filter(|&i| !calib_mask[i]).collect();
    let calib: Vec<usize> = (0..data.len()).filter(|&i| calib_mask[i]).collect();
    Ok((data.select(&proper), data.select(&calib)))
}

/// Min-max scaling. `Fit` learns per-dimension bounds and applies them;
/// `Apply`/`Invert` require a transform of matching dimensionality.
/// Constant dimensions map to 0.5.
pub fn minmax_scale(
    data: &LabeledDataset,
    mode: ScaleMode,
    transform: Option<&ScalingTransform>,
) -> Result<(LabeledDataset, ScalingTransform)> {
    let d = data.dim();
    let transform = match mode {
        ScaleMode::Fit => {
            let mut bounds = vec![(f64::INFINITY, f64::NEG_INFINITY); d];
            for row in data.rows() {
                for (j, &v) in row.iter().enumerate() {
                    bounds[j].0 = bounds[j].0.min(v);
                    bounds[j].1 = bounds[j].1.max(v);
                }
            }
            if data.is_empty() {
                return Err(Error::EmptyDataset);
            }
            ScalingTransform { bounds }
        }
        ScaleMode::Apply | ScaleMode::Invert => {
            let t = transform.ok_or_else(|| {
                Error::InvalidArgument("apply/invert require a fitted transform".into())
            })?;
            if t.dim() != d {
                return Err(Error::DimensionMismatch {
                    expected: t.dim(),
                    got: d,
                });
            }
            t.clone()
        }
    };

    let mut features = Vec::with_capacity(data.len() * d);
    for row in data.rows() {
        for (j, &v) in row.iter().enumerate() {
            let (lo, hi) = transform.bounds[j];
            let out = if hi == lo {
                match mode {
                    ScaleMode::Invert => lo,
                    _ => 0.5,
                }
            } else {
                match mode {
                    ScaleMode::Fit | ScaleMode::Apply => (v - lo) / (hi - lo),
                    ScaleMode::Invert => lo + v * (hi - lo),
                }
            };
            features.push(out);
        }
    }
    let scaled = LabeledDataset::new(
        features,
        d,
        data.labels().to_vec(),
        data.class_names().map(|n| n.to_vec()),
    )?;
    Ok((scaled, transform))
}

/// Frozen toy generative distribution (toy-v1): class 0 is an isotropic
/// unit Gaussian at the origin, class 1 the same at (3, 0). Three standard
/// deviations of mean separation leaves slight overlap.
pub fn toy_class_samples(class: usize, n: usize, seed: u64) -> Vec<[f64; 2]> {
    let mean = if class == 0 { [0.0, 0.0] } else { [3.0, 0.0] };
    let mut rng = class_rng(seed, class);
    (0..n)
        .map(|_| {
            let dx: f64 = rng.sample(StandardNormal);
            let dy: f64 = rng.sample(StandardNormal);
            [mean[0] + dx, mean[1] + dy]
        })
        .collect()
}

/// Two-class 2D imbalanced toy dataset; class 0 is the minority with
/// round(minority_fraction * n_total) samples. Deterministic per seed.
pub fn make_toy(n_total: usize, minority_fraction: f64, seed: u64) -> Result<LabeledDataset> {
    if n_total < 10 {
        return Err(Error::InvalidArgument(format!(
            "toy generator needs n_total >= 10, got {n_total}"
        )));
    }
    if !(minority_fraction > 0.0 && minority_fraction < 0.5) {
        return Err(Error::InvalidArgument(format!(
            "minority fraction must be in (0, 0.5), got {minority_fraction}"
        )));
    }
    let n0 = (minority_fraction * n_total as f64).round() as usize;
    let n1 = n_total - n0;
    let mut features = Vec::with_capacity(n_total * 2);
    let mut labels = Vec::with_capacity(n_total);
    for (class, n) in [(0usize, n0), (1usize, n1)] {
        for p in toy_class_samples(class, n, seed) {
            features.extend_from_slice(&p);
            labels.push(class);
        }
    }
    LabeledDataset::new(features, 2, labels, None)
}
