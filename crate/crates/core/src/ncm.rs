//! Distance metrics and the k-NN sum-of-distances non-conformity measure
//! evaluated against the proper training set.
//!
//! Queries go through a per-class kd-tree; results are defined to match an
//! exhaustive linear scan exactly, with equal distances broken by
//! ascending insertion order.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use crate::dataset::LabeledDataset;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Metric {
    Euclidean,
    Manhattan,
}

impl Metric {
    pub fn name(self) -> &'static str {
        match self {
            Metric::Euclidean => "euclidean",
            Metric::Manhattan => "manhattan",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NcmConfig {
    pub k: usize,
    pub metric: Metric,
}

impl Default for NcmConfig {
    fn default() -> Self {
        Self {
            k: DEFAULT_K,
            metric: Metric::Euclidean,
        }
    }
}

/// k = 1 keeps regions maximally local.
pub const DEFAULT_K: usize = 1;

pub fn distance(a: &[f64], b: &[f64], metric: Metric) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch {
            expected: a.len(),
            got: b.len(),
        });
    }
    Ok(distance_unchecked(a, b, metric))
}

#[inline]
fn distance_unchecked(a: &[f64], b: &[f64], metric: Metric) -> f64 {
    match metric {
        Metric::Euclidean => a
            .iter()
            .zip(b)
            .map(|(x, y)| (x - y) * (x - y))
            .sum::<f64>()
            .sqrt(),
        Metric::Manhattan => a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum(),
    }
}

/// Neighbour candidate ordered by (distance, insertion index).
#[derive(Debug, Clone, Copy, PartialEq)]
struct Neighbor {
    dist: f64,
    idx: usize,
}

impl Eq for Neighbor {}

impl Ord for Neighbor {
    fn cmp(&self, other: &Self) -> Ordering {
        self.dist
            .total_cmp(&other.dist)
            .then(self.idx.cmp(&other.idx))
    }
}

impl PartialOrd for Neighbor {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Static kd-tree over one class's points. The `order` array is arranged
/// so each subrange's midpoint is the median along its splitting axis
/// (axes cycle with depth).
#[derive(Debug, Clone)]
struct KdTree {
    points: Vec<f64>, // row-major, insertion order
    d: usize,
    order: Vec<usize>,
}

impl KdTree {
    fn build(points: Vec<f64>, d: usize) -> Self {
        let n = if d == 0 { 0 } else { points.len() / d };
        let mut order: Vec<usize> = (0..n).collect();
        let mut tree = Self { points, d, order: Vec::new() };
        Self::build_range(&tree.points, d, &mut order, 0, n, 0);
        tree.order = order;
        tree
    }

    fn build_range(points: &[f64], d: usize, order: &mut [usize], lo: usize, hi: usize, depth: usize) {
        if hi - lo <= 1 {
            return;
        }
        let axis = depth % d;
        let mid = (lo + hi) / 2;
        order[lo..hi].select_nth_unstable_by(mid - lo, |&a, &b| {
            points[a * d + axis]
                .total_cmp(&points[b * d + axis])
                .then(a.cmp(&b))
        });
        Self::build_range(points, d, order, lo, mid, depth + 1);
        Self::build_range(points, d, order, mid + 1, hi, depth + 1);
    }

    fn len(&self) -> usize {
        self.order.len()
    }

    fn point(&self, idx: usize) -> &[f64] {
        &self.points[idx * self.d..(idx + 1) * self.d]
    }

    /// Exact k nearest neighbours of `query`, ascending (distance, index).
    fn knn(&self, query: &[f64], k: usize, metric: Metric) -> Vec<Neighbor> {
        let mut heap: BinaryHeap<Neighbor> = BinaryHeap::with_capacity(k + 1);
        self.search(query, k, metric, 0, self.len(), 0, &mut heap);
        let mut out = heap.into_sorted_vec();
        out.truncate(k);
        out
    }

    fn search(
        &self,
        query: &[f64],
        k: usize,
        metric: Metric,
        lo: usize,
        hi: usize,
        depth: usize,
        heap: &mut BinaryHeap<Neighbor>,
    ) {
        if lo >= hi {
            return;
        }
        let mid = (lo + hi) / 2;
        let idx = self.order[mid];
        let cand = Neighbor {
            dist: distance_unchecked(query, self.point(idx), metric),
            idx,
        };
        if heap.len() < k {
            heap.push(cand);
        } else if cand < *heap.peek().unwrap() {
            heap.pop();
            heap.push(cand);
        }
        if hi - lo == 1 {
            return;
        }
        let axis = depth % self.d;
        let diff = query[axis] - self.point(idx)[axis];
        let (near, far) = if diff < 0.0 {
            ((lo, mid), (mid + 1, hi))
        } else {
            ((mid + 1, hi), (lo, mid))
        };
        self.search(query, k, metric, near.0, near.1, depth + 1, heap);
        // the axis gap lower-bounds both metrics; <= keeps equal-distance
        // candidates reachable for the insertion-order tie break
        let must_visit = heap.len() < k || diff.abs() <= heap.peek().unwrap().dist;
        if must_visit {
            self.search(query, k, metric, far.0, far.1, depth + 1, heap);
        }
    }
}

/// Per-class nearest-neighbour index over the proper training set.
/// Immutable after construction; safe for concurrent queries.
#[derive(Debug, Clone)]
pub struct ProperIndex {
    trees: Vec<KdTree>,
    d: usize,
}

impl ProperIndex {
    pub fn build(proper: &LabeledDataset) -> Result<Self> {
        if proper.is_empty() {
            return Err(Error::EmptyDataset);
        }
        proper.require_all_classes()?;
        let num_classes = proper.num_classes();
        let d = proper.dim();
        let mut per_class: Vec<Vec<f64>> = vec![Vec::new(); num_classes];
        for (row, &y) in proper.rows().zip(proper.labels()) {
            per_class[y].extend_from_slice(row);
        }
        let trees = per_class
            .into_iter()
            .map(|pts| KdTree::build(pts, d))
            .collect();
        Ok(Self { trees, d })
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn num_classes(&self) -> usize {
        self.trees.len()
    }

    pub fn class_count(&self, class: usize) -> usize {
        self.trees.get(class).map_or(0, KdTree::len)
    }

    /// k nearest same-class points, ascending (distance, insertion index).
    pub fn knn(
        &self,
        class: usize,
        query: &[f64],
        k: usize,
        metric: Metric,
    ) -> Result<Vec<(f64, usize)>> {
        let tree = self
            .trees
            .get(class)
            .ok_or(Error::UnknownClass(class))?;
        if query.len() != self.d {
            return Err(Error::DimensionMismatch {
                expected: self.d,
                got: query.len(),
            });
        }
        if tree.len() < k {
            return Err(Error::ClassTooSmall {
                class,
                count: tree.len(),
                required: k,
            });
        }
        Ok(tree
            .knn(query, k, metric)
            .into_iter()
            .map(|n| (n.dist, n.idx))
            .collect())
    }
}

/// Sum of distances from `x` to its k nearest proper-set points of class
/// `y`. Larger values mean less conforming.
pub fn knn_ncm(x: &[f64], y: usize, index: &ProperIndex, config: &NcmConfig) -> Result<f64> {
    if config.k == 0 {
        return Err(Error::ZeroK);
    }
    Ok(index
        .knn(y, x, config.k, config.metric)?
        .iter()
        .map(|(d, _)| d)
        .sum())
}

/// Validates that every class in the index can answer k-NN queries.
pub fn validate_k(index: &ProperIndex, config: &NcmConfig) -> Result<()> {
    if config.k == 0 {
        return Err(Error::ZeroK);
    }
    for class in 0..index.num_classes() {
        if index.class_count(class) < config.k {
            return Err(Error::ClassTooSmall {
                class,
                count: index.class_count(class),
                required: config.k,
            });
        }
    }
    Ok(())
}

/// Exhaustive k-NN over raw per-class points; the reference the kd-tree is
/// tested against.
pub fn linear_scan_knn(
    points: &LabeledDataset,
    class: usize,
    query: &[f64],
    k: usize,
    metric: Metric,
) -> Vec<(f64, usize)> {
    let mut all: Vec<(f64, usize)> = points
        .rows()
        .zip(points.labels())
        .filter(|(_, &y)| y == class)
        .enumerate()
        .map(|(i, (row, _))| (distance_unchecked(query, row, metric), i))
        .collect();
    all.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    all.truncate(k);
    all
}
