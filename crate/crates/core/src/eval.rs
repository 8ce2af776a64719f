//! Downstream evaluation harness: a seeded from-scratch classifier,
//! macro precision/recall/F1, and the original-vs-extended training
//! comparison protocol.
//!
//! Full-batch gradient descent with fixed epochs keeps every run
//! bit-reproducible for a given seed.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::dataset::LabeledDataset;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ClassifierKind {
    SoftmaxLinear,
    MlpOneHidden,
}

impl ClassifierKind {
    pub fn name(self) -> &'static str {
        match self {
            ClassifierKind::SoftmaxLinear => "softmax_linear",
            ClassifierKind::MlpOneHidden => "mlp_one_hidden",
        }
    }
}

pub const DEFAULT_HIDDEN_UNITS: usize = 32;
pub const DEFAULT_LEARNING_RATE: f64 = 0.05;
pub const DEFAULT_EPOCHS: usize = 200;

#[derive(Debug, Clone, Copy)]
pub struct ClassifierSpec {
    pub kind: ClassifierKind,
    pub hidden_units: usize,
    pub learning_rate: f64,
    pub epochs: usize,
    pub seed: u64,
}

impl Default for ClassifierSpec {
    fn default() -> Self {
        Self {
            kind: ClassifierKind::SoftmaxLinear,
            hidden_units: DEFAULT_HIDDEN_UNITS,
            learning_rate: DEFAULT_LEARNING_RATE,
            epochs: DEFAULT_EPOCHS,
            seed: 0,
        }
    }
}

/// Trained model: flat parameter vector plus layout.
#[derive(Debug, Clone)]
pub struct Classifier {
    pub kind: ClassifierKind,
    pub d: usize,
    pub num_classes: usize,
    pub hidden: usize,
    pub params: Vec<f64>,
}

fn param_count(kind: ClassifierKind, d: usize, c: usize, hidden: usize) -> usize {
    match kind {
        ClassifierKind::SoftmaxLinear => c * d + c,
        ClassifierKind::MlpOneHidden => hidden * d + hidden + c * hidden + c,
    }
}

fn softmax_in_place(logits: &mut [f64]) {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for v in logits.iter_mut() {
        *v = (*v - max).exp();
        sum += *v;
    }
    for v in logits.iter_mut() {
        *v /= sum;
    }
}

/// Class scores (softmax probabilities) for one sample.
fn forward(
    kind: ClassifierKind,
    params: &[f64],
    d: usize,
    c: usize,
    hidden: usize,
    x: &[f64],
    hidden_buf: &mut [f64],
) -> Vec<f64> {
    let mut logits = vec![0.0; c];
    match kind {
        ClassifierKind::SoftmaxLinear => {
            let (w, b) = params.split_at(c * d);
            for j in 0..c {
                logits[j] = b[j] + w[j * d..(j + 1) * d].iter().zip(x).map(|(a, b)| a * b).sum::<f64>();
            }
        }
        ClassifierKind::MlpOneHidden => {
            let (w1, rest) = params.split_at(hidden * d);
            let (b1, rest) = rest.split_at(hidden);
            let (w2, b2) = rest.split_at(c * hidden);
            for h in 0..hidden {
                let z = b1[h]
                    + w1[h * d..(h + 1) * d].iter().zip(x).map(|(a, b)| a * b).sum::<f64>();
                hidden_buf[h] = z.max(0.0);
            }
            for j in 0..c {
                logits[j] = b2[j]
                    + w2[j * hidden..(j + 1) * hidden]
                        .iter()
                        .zip(hidden_buf.iter())
                        .map(|(a, b)| a * b)
                        .sum::<f64>();
            }
        }
    }
    softmax_in_place(&mut logits);
    logits
}

/// Mean cross-entropy and its gradient over the full batch.
pub fn loss_and_grad(
    kind: ClassifierKind,
    params: &[f64],
    d: usize,
    c: usize,
    hidden: usize,
    data: &LabeledDataset,
) -> (f64, Vec<f64>) {
    let n = data.len() as f64;
    let mut grad = vec![0.0; params.len()];
    let mut loss = 0.0;
    let mut hidden_buf = vec![0.0; hidden];
    for (x, &y) in data.rows().zip(data.labels()) {
        let probs = forward(kind, params, d, c, hidden, x, &mut hidden_buf);
        loss -= probs[y].max(1e-300).ln();
        match kind {
            ClassifierKind::SoftmaxLinear => {
                let (gw, gb) = grad.split_at_mut(c * d);
                for j in 0..c {
                    let delta = probs[j] - if j == y { 1.0 } else { 0.0 };
                    gb[j] += delta;
                    for (gwi, xi) in gw[j * d..(j + 1) * d].iter_mut().zip(x) {
                        *gwi += delta * xi;
                    }
                }
            }
            ClassifierKind::MlpOneHidden => {
                let (w1_len, b1_len, w2_len) = (hidden * d, hidden, c * hidden);
                let w2 = &params[w1_len + b1_len..w1_len + b1_len + w2_len];
                // output layer
                let mut delta_out = vec![0.0; c];
                for j in 0..c {
                    delta_out[j] = probs[j] - if j == y { 1.0 } else { 0.0 };
                }
                // hidden layer deltas through the rectifier
                let mut delta_h = vec![0.0; hidden];
                for h in 0..hidden {
                    if hidden_buf[h] > 0.0 {
                        let mut s = 0.0;
                        for j in 0..c {
                            s += delta_out[j] * w2[j * hidden + h];
                        }
                        delta_h[h] = s;
                    }
                }
                let (gw1, rest) = grad.split_at_mut(w1_len);
                let (gb1, rest) = rest.split_at_mut(b1_len);
                let (gw2, gb2) = rest.split_at_mut(w2_len);
                for h in 0..hidden {
                    gb1[h] += delta_h[h];
                    for (g, xi) in gw1[h * d..(h + 1) * d].iter_mut().zip(x) {
                        *g += delta_h[h] * xi;
                    }
                }
                for j in 0..c {
                    gb2[j] += delta_out[j];
                    for h in 0..hidden {
                        gw2[j * hidden + h] += delta_out[j] * hidden_buf[h];
                    }
                }
            }
        }
    }
    for g in &mut grad {
        *g /= n;
    }
    (loss / n, grad)
}

/// Full-batch gradient descent on mean cross-entropy, weights initialised
/// from a seeded uniform(-0.1, 0.1).
pub fn train_classifier(train: &LabeledDataset, spec: &ClassifierSpec) -> Result<Classifier> {
    if train.is_empty() {
        return Err(Error::EmptyDataset);
    }
    train.require_all_classes()?;
    let c = train.num_classes();
    if c < 2 {
        return Err(Error::SingleClass);
    }
    let d = train.dim();
    let hidden = spec.hidden_units;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut params: Vec<f64> = (0..param_count(spec.kind, d, c, hidden))
        .map(|_| rng.random_range(-0.1..0.1))
        .collect();
    for _ in 0..spec.epochs {
        let (_, grad) = loss_and_grad(spec.kind, &params, d, c, hidden, train);
        for (p, g) in params.iter_mut().zip(&grad) {
            *p -= spec.learning_rate * g;
        }
    }
    Ok(Classifier {
        kind: spec.kind,
        d,
        num_classes: c,
        hidden,
        params,
    })
}

/// Argmax of class scores, ties to the lowest class id.
pub fn predict_labels(classifier: &Classifier, data: &LabeledDataset) -> Result<Vec<usize>> {
    if data.dim() != classifier.d && !data.is_empty() {
        return Err(Error::DimensionMismatch {
            expected: classifier.d,
            got: data.dim(),
        });
    }
    let mut hidden_buf = vec![0.0; classifier.hidden];
    Ok(data
        .rows()
        .map(|x| {
            let probs = forward(
                classifier.kind,
                &classifier.params,
                classifier.d,
                classifier.num_classes,
                classifier.hidden,
                x,
                &mut hidden_buf,
            );
            let mut best = 0;
            for (j, &p) in probs.iter().enumerate() {
                if p > probs[best] {
                    best = j;
                }
            }
            best
        })
        .collect())
}

#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct ClassMetrics {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct EvalReport {
    pub per_class: Vec<ClassMetrics>,
    pub macro_precision: f64,
    pub macro_recall: f64,
    pub macro_f1: f64,
}

/// Per-class one-vs-rest precision/recall/F1 and their unweighted means.
/// Degenerate classes (0/0) score 0, never NaN.
pub fn macro_metrics(predicted: &[usize], truth: &[usize], num_classes: usize) -> Result<EvalReport> {
    if predicted.len() != truth.len() {
        return Err(Error::ShapeMismatch {
            rows: predicted.len(),
            labels: truth.len(),
        });
    }
    if let Some(&y) = predicted.iter().chain(truth).find(|&&y| y >= num_classes) {
        return Err(Error::UnknownClass(y));
    }
    let mut tp = vec![0usize; num_classes];
    let mut fp = vec![0usize; num_classes];
    let mut fn_ = vec![0usize; num_classes];
    for (&p, &t) in predicted.iter().zip(truth) {
        if p == t {
            tp[p] += 1;
        } else {
            fp[p] += 1;
            fn_[t] += 1;
        }
    }
    let per_class: Vec<ClassMetrics> = (0..num_classes)
        .map(|c| {
            let precision = if tp[c] + fp[c] == 0 {
                0.0
            } else {
                tp[c] as f64 / (tp[c] + fp[c]) as f64
            };
            let recall = if tp[c] + fn_[c] == 0 {
                0.0
            } else {
                tp[c] as f64 / (tp[c] + fn_[c]) as f64
            };
            let f1 = if precision + recall == 0.0 {
                0.0
            } else {
                2.0 * precision * recall / (precision + recall)
            };
            ClassMetrics {
                precision,
                recall,
                f1,
            }
        })
        .collect();
    let mean = |f: fn(&ClassMetrics) -> f64| {
        per_class.iter().map(f).sum::<f64>() / num_classes as f64
    };
    Ok(EvalReport {
        macro_precision: mean(|m| m.precision),
        macro_recall: mean(|m| m.recall),
        macro_f1: mean(|m| m.f1),
        per_class,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct RunRecord {
    pub source: String,
    pub seed: u64,
    pub report: EvalReport,
}

#[derive(Debug, Clone, Serialize)]
pub struct PerClassSummary {
    pub class: usize,
    pub precision_mean: f64,
    pub recall_mean: f64,
    pub f1_mean: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct SummaryStats {
    pub f1_mean: f64,
    pub f1_std: f64,
    pub precision_mean: f64,
    pub recall_mean: f64,
    pub per_class: Vec<PerClassSummary>,
}

#[derive(Debug, Clone, Serialize)]
pub struct ComparisonConfig {
    pub classifier: String,
    pub hidden_units: usize,
    pub learning_rate: f64,
    pub epochs: usize,
    pub seed: u64,
    pub repeats: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct ComparisonSummary {
    pub train_orig: SummaryStats,
    /// Absent when the synthetic set is empty or single-class.
    pub train_syn: Option<SummaryStats>,
    pub train_ext: SummaryStats,
}

#[derive(Debug, Clone, Serialize)]
pub struct ComparisonReport {
    pub config: ComparisonConfig,
    pub runs: Vec<RunRecord>,
    pub summary: ComparisonSummary,
}

fn summarise(reports: &[EvalReport], num_classes: usize) -> SummaryStats {
    let n = reports.len() as f64;
    let f1s: Vec<f64> = reports.iter().map(|r| r.macro_f1).collect();
    let f1_mean = f1s.iter().sum::<f64>() / n;
    let f1_std = (f1s.iter().map(|v| (v - f1_mean).powi(2)).sum::<f64>() / n).sqrt();
    let per_class = (0..num_classes)
        .map(|c| PerClassSummary {
            class: c,
            precision_mean: reports.iter().map(|r| r.per_class[c].precision).sum::<f64>() / n,
            recall_mean: reports.iter().map(|r| r.per_class[c].recall).sum::<f64>() / n,
            f1_mean: reports.iter().map(|r| r.per_class[c].f1).sum::<f64>() / n,
        })
        .collect();
    SummaryStats {
        f1_mean,
        f1_std,
        precision_mean: reports.iter().map(|r| r.macro_precision).sum::<f64>() / n,
        recall_mean: reports.iter().map(|r| r.macro_recall).sum::<f64>() / n,
        per_class,
    }
}

fn rows_overlap(a: &LabeledDataset, b: &LabeledDataset) -> usize {
    use std::collections::HashSet;
    if a.is_empty() || b.is_empty() || a.dim() != b.dim() {
        return 0;
    }
    let keys: HashSet<Vec<u64>> = a
        .rows()
        .map(|r| r.iter().map(|v| v.to_bits()).collect())
        .collect();
    b.rows()
        .map(|r| r.iter().map(|v| v.to_bits()).collect::<Vec<u64>>())
        .filter(|k| keys.contains(k))
        .count()
}

/// Trains on the original set, the synthetic set, and their union, each
/// `repeats` times with seeds seed..seed+repeats-1, all evaluated on the
/// same test set. Errors when test rows coincide bit-for-bit with
/// training rows.
pub fn run_comparison(
    orig: &LabeledDataset,
    syn: &LabeledDataset,
    test: &LabeledDataset,
    spec: &ClassifierSpec,
    repeats: usize,
) -> Result<ComparisonReport> {
    if repeats < 1 {
        return Err(Error::InvalidArgument("repeats must be at least 1".into()));
    }
    if orig.is_empty() || test.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let overlap = rows_overlap(orig, test) + rows_overlap(syn, test);
    if overlap > 0 {
        return Err(Error::TestOverlap(overlap));
    }
    let ext = orig.concat(syn)?;
    let num_classes = orig
        .num_classes()
        .max(syn.num_classes())
        .max(test.num_classes());

    let syn_trainable = !syn.is_empty() && syn.num_classes() >= 2 && {
        syn.class_counts().iter().all(|&c| c > 0)
    };

    let mut runs = Vec::new();
    let mut reports_orig = Vec::new();
    let mut reports_syn = Vec::new();
    let mut reports_ext = Vec::new();
    for r in 0..repeats {
        let seed = spec.seed + r as u64;
        let run_spec = ClassifierSpec { seed, ..*spec };
        let mut sources: Vec<(&str, &LabeledDataset)> = vec![("train_orig", orig)];
        if syn_trainable {
            sources.push(("train_syn", syn));
        }
        sources.push(("train_ext", &ext));
        for (name, data) in sources {
            let clf = train_classifier(data, &run_spec)?;
            let predicted = predict_labels(&clf, test)?;
            let report = macro_metrics(&predicted, test.labels(), num_classes)?;
            match name {
                "train_orig" => reports_orig.push(report.clone()),
                "train_syn" => reports_syn.push(report.clone()),
                _ => reports_ext.push(report.clone()),
            }
            runs.push(RunRecord {
                source: name.to_string(),
                seed,
                report,
            });
        }
    }

    Ok(ComparisonReport {
        config: ComparisonConfig {
            classifier: spec.kind.name().to_string(),
            hidden_units: spec.hidden_units,
            learning_rate: spec.learning_rate,
            epochs: spec.epochs,
            seed: spec.seed,
            repeats,
        },
        summary: ComparisonSummary {
            train_orig: summarise(&reports_orig, num_classes),
            train_syn: if syn_trainable {
                Some(summarise(&reports_syn, num_classes))
            } else {
                None
            },
            train_ext: summarise(&reports_ext, num_classes),
        },
        runs,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::make_toy;

    fn separable() -> LabeledDataset {
        let mut rows = Vec::new();
        let mut labels = Vec::new();
        for i in 0..10 {
            rows.push(vec![-2.0 - 0.1 * i as f64, 0.3 * i as f64]);
            labels.push(0);
            rows.push(vec![2.0 + 0.1 * i as f64, -0.3 * i as f64]);
            labels.push(1);
        }
        LabeledDataset::from_rows(&rows, labels).unwrap()
    }

    fn fd_check(kind: ClassifierKind) -> f64 {
        let data = make_toy(10, 0.3, 3).unwrap();
        let d = data.dim();
        let c = data.num_classes();
        let hidden = 4;
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let params: Vec<f64> = (0..param_count(kind, d, c, hidden))
            .map(|_| rng.random_range(-0.5..0.5))
            .collect();
        let (_, grad) = loss_and_grad(kind, &params, d, c, hidden, &data);
        let h = 1e-5;
        let mut worst = 0.0f64;
        for i in 0..params.len() {
            let mut plus = params.clone();
            plus[i] += h;
            let mut minus = params.clone();
            minus[i] -= h;
            let (lp, _) = loss_and_grad(kind, &plus, d, c, hidden, &data);
            let (lm, _) = loss_and_grad(kind, &minus, d, c, hidden, &data);
            let numeric = (lp - lm) / (2.0 * h);
            let rel = (grad[i] - numeric).abs() / grad[i].abs().max(numeric.abs()).max(1e-8);
            worst = worst.max(rel);
        }
        worst
    }

    #[test]
    fn gradient_matches_finite_differences() {
        assert!(fd_check(ClassifierKind::SoftmaxLinear) < 1e-4);
        assert!(fd_check(ClassifierKind::MlpOneHidden) < 1e-4);
    }

    #[test]
    fn separable_data_reaches_full_training_accuracy() {
        let data = separable();
        let spec = ClassifierSpec {
            learning_rate: 0.5,
            ..Default::default()
        };
        let clf = train_classifier(&data, &spec).unwrap();
        let predicted = predict_labels(&clf, &data).unwrap();
        assert_eq!(predicted, data.labels());
    }

    #[test]
    fn training_is_deterministic() {
        let data = separable();
        let spec = ClassifierSpec::default();
        let a = train_classifier(&data, &spec).unwrap();
        let b = train_classifier(&data, &spec).unwrap();
        assert_eq!(a.params, b.params);
    }

    #[test]
    fn argmax_ties_go_to_lowest_class() {
        let clf = Classifier {
            kind: ClassifierKind::SoftmaxLinear,
            d: 1,
            num_classes: 3,
            hidden: 0,
            params: vec![0.0; 3 + 3], // all-zero weights: equal scores
        };
        let data = LabeledDataset::from_rows(&[vec![0.7]], vec![0]).unwrap();
        assert_eq!(predict_labels(&clf, &data).unwrap(), vec![0]);
    }

    #[test]
    fn macro_metric_arithmetic() {
        // perfect predictions
        let r = macro_metrics(&[0, 1, 1], &[0, 1, 1], 2).unwrap();
        assert_eq!(r.macro_f1, 1.0);
        assert_eq!(r.macro_precision, 1.0);
        // binary all-wrong
        let r = macro_metrics(&[1, 0], &[0, 1], 2).unwrap();
        assert_eq!(r.macro_f1, 0.0);
        // macro = unweighted mean of per-class values
        let r = macro_metrics(&[0, 0, 0, 1], &[0, 1, 1, 1], 2).unwrap();
        let expect = (r.per_class[0].f1 + r.per_class[1].f1) / 2.0;
        assert!((r.macro_f1 - expect).abs() < 1e-12);
        assert!(r.per_class.iter().all(|m| m.f1.is_finite()));
    }

    #[test]
    fn macro_metrics_rejects_length_mismatch() {
        assert!(matches!(
            macro_metrics(&[0], &[0, 1], 2),
            Err(Error::ShapeMismatch { .. })
        ));
    }

    #[test]
    fn comparison_empty_syn_matches_orig() {
        let orig = make_toy(60, 0.3, 1).unwrap();
        let test = make_toy(60, 0.3, 2).unwrap();
        let syn = LabeledDataset::empty(2);
        let spec = ClassifierSpec::default();
        let report = run_comparison(&orig, &syn, &test, &spec, 2).unwrap();
        assert!(report.summary.train_syn.is_none());
        assert_eq!(
            report.summary.train_orig.f1_mean,
            report.summary.train_ext.f1_mean
        );
        // repeats * {orig, ext}
        assert_eq!(report.runs.len(), 4);
    }

    #[test]
    fn comparison_run_count_and_mean() {
        let orig = make_toy(60, 0.3, 1).unwrap();
        let syn = make_toy(30, 0.4, 5).unwrap();
        let test = make_toy(60, 0.3, 2).unwrap();
        let spec = ClassifierSpec::default();
        let report = run_comparison(&orig, &syn, &test, &spec, 5).unwrap();
        assert_eq!(report.runs.len(), 15);
        let orig_f1: Vec<f64> = report
            .runs
            .iter()
            .filter(|r| r.source == "train_orig")
            .map(|r| r.report.macro_f1)
            .collect();
        let mean = orig_f1.iter().sum::<f64>() / orig_f1.len() as f64;
        assert!((mean - report.summary.train_orig.f1_mean).abs() < 1e-12);
    }

    #[test]
    fn comparison_detects_test_overlap() {
        let orig = make_toy(60, 0.3, 1).unwrap();
        let syn = LabeledDataset::empty(2);
        let err = run_comparison(&orig, &syn, &orig, &ClassifierSpec::default(), 1).unwrap_err();
        assert!(matches!(err, Error::TestOverlap(_)));
    }
}
