//! Orchestration of the synthesis pipeline: score every grid point per
//! class, threshold into high-confidence regions, and emit the synthetic
//! dataset.
//!
//! Scoring fans chunks out across a rayon pool; every p-value lands in a
//! slot pre-assigned by flat index, so output is identical for any chunk
//! size or worker count. Above a field-size threshold the pipeline
//! streams chunks and retains only the region indices.

use std::path::Path;

use rayon::prelude::*;
use serde::Serialize;

use crate::conformal::{self, CalibrationModel, PValueOptions};
use crate::dataset::{self, LabeledDataset, SplitConfig};
use crate::error::{Error, Result};
use crate::grid::{self, GridSpec};
use crate::ncm::NcmConfig;

pub const DEFAULT_EPSILON: f64 = 0.95;
pub const DEFAULT_GRID_STEP: f64 = 0.005;
pub const DEFAULT_CHUNK_SIZE: usize = 4096;
/// Above this many dense field entries (g * C) the pipeline streams.
pub const DEFAULT_FIELD_THRESHOLD: usize = 20_000_000;

/// Dense per-class p-values over the whole grid.
#[derive(Debug, Clone)]
pub struct PValueField {
    pub spec: GridSpec,
    /// values[class][flat_index], each in (0, 1].
    pub values: Vec<Vec<f64>>,
}

impl PValueField {
    pub fn num_classes(&self) -> usize {
        self.values.len()
    }
}

/// Per class, the ascending flat indices with p > epsilon.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfidenceRegionMap {
    pub epsilon: f64,
    pub classes: Vec<Vec<usize>>,
}

impl ConfidenceRegionMap {
    pub fn total_size(&self) -> usize {
        self.classes.iter().map(Vec::len).sum()
    }

    pub fn contains(&self, class: usize, flat: usize) -> bool {
        self.classes
            .get(class)
            .is_some_and(|v| v.binary_search(&flat).is_ok())
    }
}

#[derive(Debug, Clone)]
pub struct SynthesisConfig {
    pub epsilon: f64,
    pub grid_step: f64,
    pub ncm: NcmConfig,
    pub split: SplitConfig,
    pub grid_cap: u128,
    pub grid_pad: usize,
    pub chunk_size: usize,
    /// When set, only these classes are emitted into the synthetic set
    /// (regions are still computed for every class).
    pub minority_only: Option<Vec<usize>>,
    pub pvalue: PValueOptions,
    pub field_threshold: usize,
}

impl Default for SynthesisConfig {
    fn default() -> Self {
        Self {
            epsilon: DEFAULT_EPSILON,
            grid_step: DEFAULT_GRID_STEP,
            ncm: NcmConfig::default(),
            split: SplitConfig::default(),
            grid_cap: grid::DEFAULT_GRID_CAP,
            grid_pad: 0,
            chunk_size: DEFAULT_CHUNK_SIZE,
            minority_only: None,
            pvalue: PValueOptions::default(),
            field_threshold: DEFAULT_FIELD_THRESHOLD,
        }
    }
}

impl SynthesisConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.epsilon) {
            return Err(Error::EpsilonOutOfRange(self.epsilon));
        }
        if self.grid_step <= 0.0 || !self.grid_step.is_finite() {
            return Err(Error::NonPositiveStep(self.grid_step));
        }
        if self.ncm.k == 0 {
            return Err(Error::ZeroK);
        }
        if self.chunk_size == 0 {
            return Err(Error::InvalidArgument("chunk size must be at least 1".into()));
        }
        Ok(())
    }
}

fn score_chunk(
    model: &CalibrationModel,
    points: &[f64],
    d: usize,
    class: usize,
    opts: &PValueOptions,
    out: &mut [f64],
) -> Result<()> {
    for (i, slot) in out.iter_mut().enumerate() {
        *slot = conformal::mondrian_p(model, &points[i * d..(i + 1) * d], class, opts)?;
    }
    Ok(())
}

/// Mondrian p-value of every grid point for every class. Deterministic
/// and independent of chunking or worker count.
pub fn score_grid(
    model: &CalibrationModel,
    spec: &GridSpec,
    opts: &PValueOptions,
    chunk_size: usize,
) -> Result<PValueField> {
    if model.dim() != spec.dim() {
        return Err(Error::DimensionMismatch {
            expected: model.dim(),
            got: spec.dim(),
        });
    }
    let g = spec.len();
    let d = spec.dim();
    let mut values = Vec::with_capacity(model.num_classes());
    for class in 0..model.num_classes() {
        let mut field = vec![0.0f64; g];
        field
            .par_chunks_mut(chunk_size)
            .enumerate()
            .try_for_each(|(ci, slot)| {
                let start = ci * chunk_size;
                let mut points = vec![0.0; slot.len() * d];
                for i in 0..slot.len() {
                    spec.point_into(start + i, &mut points[i * d..(i + 1) * d]);
                }
                score_chunk(model, &points, d, class, opts, slot)
            })?;
        values.push(field);
    }
    Ok(PValueField {
        spec: spec.clone(),
        values,
    })
}

/// Streaming variant retaining only the indices above epsilon.
fn score_regions_streaming(
    model: &CalibrationModel,
    spec: &GridSpec,
    opts: &PValueOptions,
    chunk_size: usize,
    epsilon: f64,
) -> Result<ConfidenceRegionMap> {
    let g = spec.len();
    let d = spec.dim();
    let n_chunks = g.div_ceil(chunk_size);
    let mut classes = Vec::with_capacity(model.num_classes());
    for class in 0..model.num_classes() {
        let per_chunk: Vec<Result<Vec<usize>>> = (0..n_chunks)
            .into_par_iter()
            .map(|ci| {
                let start = ci * chunk_size;
                let len = chunk_size.min(g - start);
                let mut point = vec![0.0; d];
                let mut kept = Vec::new();
                for i in 0..len {
                    spec.point_into(start + i, &mut point);
                    let p = conformal::mondrian_p(model, &point, class, opts)?;
                    if p > epsilon {
                        kept.push(start + i);
                    }
                }
                Ok(kept)
            })
            .collect();
        let mut indices = Vec::new();
        for chunk in per_chunk {
            indices.extend(chunk?);
        }
        classes.push(indices);
    }
    Ok(ConfidenceRegionMap { epsilon, classes })
}

/// Strictly thresholds the field into per-class regions.
pub fn extract_regions(field: &PValueField, epsilon: f64) -> Result<ConfidenceRegionMap> {
    if !(0.0..=1.0).contains(&epsilon) {
        return Err(Error::EpsilonOutOfRange(epsilon));
    }
    let classes = field
        .values
        .iter()
        .map(|vals| {
            vals.iter()
                .enumerate()
                .filter(|(_, &p)| p > epsilon)
                .map(|(i, _)| i)
                .collect()
        })
        .collect();
    Ok(ConfidenceRegionMap {
        epsilon,
        classes,
    })
}

/// One synthetic sample per (class, region index) pair, ordered by
/// (class, flat index). Points in several classes' regions are emitted
/// once per class.
pub fn emit_synthetic(regions: &ConfidenceRegionMap, spec: &GridSpec) -> LabeledDataset {
    emit_synthetic_filtered(regions, spec, None)
}

pub fn emit_synthetic_filtered(
    regions: &ConfidenceRegionMap,
    spec: &GridSpec,
    only_classes: Option<&[usize]>,
) -> LabeledDataset {
    let d = spec.dim();
    let mut features = Vec::new();
    let mut labels = Vec::new();
    let mut point = vec![0.0; d];
    for (class, indices) in regions.classes.iter().enumerate() {
        if let Some(keep) = only_classes {
            if !keep.contains(&class) {
                continue;
            }
        }
        for &flat in indices {
            spec.point_into(flat, &mut point);
            features.extend_from_slice(&point);
            labels.push(class);
        }
    }
    LabeledDataset::new(features, d, labels, None).expect("grid points are finite")
}

/// Everything the pipeline produced, kept for inspection and reuse. The
/// dense field is absent when the streaming path was taken.
#[derive(Debug, Clone)]
pub struct SynthesisOutput {
    pub synthetic: LabeledDataset,
    pub field: Option<PValueField>,
    pub regions: ConfidenceRegionMap,
    pub spec: GridSpec,
    pub proper: LabeledDataset,
    pub calib: LabeledDataset,
}

/// Full pipeline: split, fit, grid, score, extract, emit.
pub fn synthesize(train: &LabeledDataset, config: &SynthesisConfig) -> Result<SynthesisOutput> {
    config.validate()?;
    train.require_all_classes()?;
    let (proper, calib) = dataset::stratified_split(train, &config.split)?;
    let model = conformal::fit(&proper, &calib, &config.ncm)?;
    let spec = grid::build_grid_spec_padded(train, config.grid_step, config.grid_cap, config.grid_pad)?;

    let entries = spec.len().saturating_mul(model.num_classes());
    let (field, regions) = if entries > config.field_threshold {
        let regions = score_regions_streaming(
            &model,
            &spec,
            &config.pvalue,
            config.chunk_size,
            config.epsilon,
        )?;
        (None, regions)
    } else {
        let field = score_grid(&model, &spec, &config.pvalue, config.chunk_size)?;
        let regions = extract_regions(&field, config.epsilon)?;
        (Some(field), regions)
    };

    let mut synthetic =
        emit_synthetic_filtered(&regions, &spec, config.minority_only.as_deref());
    synthetic.set_class_names(train.class_names().map(<[String]>::to_vec));
    Ok(SynthesisOutput {
        synthetic,
        field,
        regions,
        spec,
        proper,
        calib,
    })
}

/// Field CSV: flat_index, one coordinate column per dimension, one
/// p-value column per class; rows in ascending flat order.
pub fn export_field(field: &PValueField, path: &Path) -> Result<()> {
    let d = field.spec.dim();
    let g = field.spec.len();
    let mut out = String::from("flat_index");
    for j in 0..d {
        out.push_str(&format!(",x{j}"));
    }
    for c in 0..field.num_classes() {
        out.push_str(&format!(",p{c}"));
    }
    out.push('\n');
    let mut point = vec![0.0; d];
    for flat in 0..g {
        field.spec.point_into(flat, &mut point);
        out.push_str(&flat.to_string());
        for v in &point {
            out.push(',');
            out.push_str(&dataset::format_sig9(*v));
        }
        for c in 0..field.num_classes() {
            out.push(',');
            out.push_str(&dataset::format_sig9(field.values[c][flat]));
        }
        out.push('\n');
    }
    crate::write_atomic(path, out.as_bytes())
}

#[derive(Debug, Serialize)]
pub struct RegionClassSummary {
    pub class: usize,
    pub region_size: usize,
    pub synth_count: usize,
}

#[derive(Debug, Serialize)]
pub struct RegionSummary {
    pub epsilon: f64,
    pub gamma: f64,
    pub per_class: Vec<RegionClassSummary>,
}

pub fn region_summary(
    regions: &ConfidenceRegionMap,
    gamma: f64,
    only_classes: Option<&[usize]>,
) -> RegionSummary {
    let per_class = regions
        .classes
        .iter()
        .enumerate()
        .map(|(class, indices)| {
            let emitted = only_classes.is_none_or(|keep| keep.contains(&class));
            RegionClassSummary {
                class,
                region_size: indices.len(),
                synth_count: if emitted { indices.len() } else { 0 },
            }
        })
        .collect();
    RegionSummary {
        epsilon: regions.epsilon,
        gamma,
        per_class,
    }
}
