//! Axis-aligned discretisation of the feature space.
//!
//! Grid points are addressed by a flat row-major index (axis 0 slowest);
//! the ordering is fixed so outputs are byte-identical across chunk sizes
//! and worker counts. Points are streamed in chunks rather than
//! materialised.

use crate::dataset::LabeledDataset;
use crate::error::{Error, Result};

/// Default cap on total grid points; high-dimensional misuse fails with an
/// actionable message instead of exhausting memory.
pub const DEFAULT_GRID_CAP: u128 = 100_000_000;

#[derive(Debug, Clone, PartialEq)]
pub struct GridSpec {
    lower: Vec<f64>,
    step: f64,
    counts: Vec<usize>,
}

impl GridSpec {
    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn step(&self) -> f64 {
        self.step
    }

    pub fn lower(&self) -> &[f64] {
        &self.lower
    }

    pub fn counts(&self) -> &[usize] {
        &self.counts
    }

    /// Total number of grid points.
    pub fn len(&self) -> usize {
        self.counts.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Converts a flat index to per-axis digits (axis 0 slowest).
    pub fn digits(&self, flat: usize) -> Result<Vec<usize>> {
        if flat >= self.len() {
            return Err(Error::IndexOutOfRange {
                index: flat,
                size: self.len(),
            });
        }
        let mut digits = vec![0usize; self.dim()];
        let mut rem = flat;
        for j in (0..self.dim()).rev() {
            digits[j] = rem % self.counts[j];
            rem /= self.counts[j];
        }
        Ok(digits)
    }

    /// Writes the coordinates of a flat index into `out` (no bounds check).
    pub(crate) fn point_into(&self, flat: usize, out: &mut [f64]) {
        let mut rem = flat;
        for j in (0..self.dim()).rev() {
            let digit = rem % self.counts[j];
            rem /= self.counts[j];
            out[j] = self.lower[j] + digit as f64 * self.step;
        }
    }

    /// Flat index of the grid point nearest to `point`, or None when any
    /// coordinate rounds outside the lattice.
    pub fn nearest_flat(&self, point: &[f64]) -> Option<usize> {
        if point.len() != self.dim() {
            return None;
        }
        let mut flat = 0usize;
        for j in 0..self.dim() {
            let digit = ((point[j] - self.lower[j]) / self.step).round();
            if digit < 0.0 || digit as usize >= self.counts[j] {
                return None;
            }
            flat = flat * self.counts[j] + digit as usize;
        }
        Some(flat)
    }
}

/// Coordinates of one flat index.
pub fn index_to_point(spec: &GridSpec, flat: usize) -> Result<Vec<f64>> {
    if flat >= spec.len() {
        return Err(Error::IndexOutOfRange {
            index: flat,
            size: spec.len(),
        });
    }
    let mut out = vec![0.0; spec.dim()];
    spec.point_into(flat, &mut out);
    Ok(out)
}

/// Builds a grid anchored at the per-dimension data minimum whose last
/// point meets or exceeds the per-dimension maximum, with `pad` whole
/// steps added on each side. Errors before allocating anything when the
/// total point count would exceed `cap`.
pub fn build_grid_spec_padded(
    data: &LabeledDataset,
    step: f64,
    cap: u128,
    pad: usize,
) -> Result<GridSpec> {
    if step <= 0.0 || !step.is_finite() {
        return Err(Error::NonPositiveStep(step));
    }
    if data.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let d = data.dim();
    let mut lower = vec![f64::INFINITY; d];
    let mut upper = vec![f64::NEG_INFINITY; d];
    for row in data.rows() {
        for (j, &v) in row.iter().enumerate() {
            lower[j] = lower[j].min(v);
            upper[j] = upper[j].max(v);
        }
    }
    let mut counts = Vec::with_capacity(d);
    let mut g: u128 = 1;
    for j in 0..d {
        let span = ((upper[j] - lower[j]) / step).ceil() as usize;
        let count = span + 1 + 2 * pad;
        lower[j] -= pad as f64 * step;
        counts.push(count);
        g = g.saturating_mul(count as u128);
    }
    if g > cap {
        return Err(Error::GridTooLarge { g, cap });
    }
    Ok(GridSpec {
        lower,
        step,
        counts,
    })
}

pub fn build_grid_spec(data: &LabeledDataset, step: f64, cap: u128) -> Result<GridSpec> {
    build_grid_spec_padded(data, step, cap, 0)
}

/// A contiguous block of grid points, row-major flat order.
#[derive(Debug, Clone)]
pub struct GridChunk {
    pub start: usize,
    /// Flattened coordinates, `len * d` values.
    pub points: Vec<f64>,
    pub len: usize,
}

/// Streams the grid as contiguous chunks partitioning `[0, g)` in
/// ascending flat order.
pub fn iterate_chunks(
    spec: &GridSpec,
    chunk_size: usize,
) -> impl Iterator<Item = GridChunk> + '_ {
    assert!(chunk_size >= 1, "chunk_size must be at least 1");
    let g = spec.len();
    let d = spec.dim();
    (0..g).step_by(chunk_size).map(move |start| {
        let len = chunk_size.min(g - start);
        let mut points = vec![0.0; len * d];
        for i in 0..len {
            spec.point_into(start + i, &mut points[i * d..(i + 1) * d]);
        }
        GridChunk { start, points, len }
    })
}
