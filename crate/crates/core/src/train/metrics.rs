//! Confusion matrices, one-vs-rest rates, ROC AUC and macro/support-weighted
//! aggregation.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Counts indexed `[true class][predicted class]`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    classes: usize,
    counts: Vec<u64>,
}

/// One-vs-rest counts for a single class.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct OneVsRest {
    pub tp: u64,
    pub fp: u64,
    pub fn_: u64,
    pub tn: u64,
}

impl ConfusionMatrix {
    pub fn new(classes: usize) -> Self {
        Self { classes, counts: vec![0; classes * classes] }
    }

    pub fn from_rows(rows: &[Vec<u64>]) -> Result<Self> {
        let c = rows.len();
        if rows.iter().any(|r| r.len() != c) {
            return Err(Error::Shape("confusion matrix must be square".into()));
        }
        Ok(Self { classes: c, counts: rows.concat() })
    }

    pub fn from_predictions(labels: &[usize], predicted: &[usize], classes: usize) -> Result<Self> {
        if labels.len() != predicted.len() {
            return Err(Error::Shape("label and prediction counts differ".into()));
        }
        let mut cm = Self::new(classes);
        for (&t, &p) in labels.iter().zip(predicted) {
            if t >= classes || p >= classes {
                return Err(Error::Data(format!("class id out of range for {classes} classes")));
            }
            cm.add(t, p);
        }
        Ok(cm)
    }

    pub fn add(&mut self, truth: usize, predicted: usize) {
        self.counts[truth * self.classes + predicted] += 1;
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn get(&self, truth: usize, predicted: usize) -> u64 {
        self.counts[truth * self.classes + predicted]
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn trace(&self) -> u64 {
        (0..self.classes).map(|c| self.get(c, c)).sum()
    }

    pub fn merge(&mut self, other: &ConfusionMatrix) {
        for (a, b) in self.counts.iter_mut().zip(&other.counts) {
            *a += b;
        }
    }

    pub fn support(&self, class: usize) -> u64 {
        (0..self.classes).map(|p| self.get(class, p)).sum()
    }

    pub fn one_vs_rest(&self, class: usize) -> OneVsRest {
        let tp = self.get(class, class);
        let support = self.support(class);
        let predicted: u64 = (0..self.classes).map(|t| self.get(t, class)).sum();
        let fn_ = support - tp;
        let fp = predicted - tp;
        OneVsRest { tp, fp, fn_, tn: self.total() - tp - fp - fn_ }
    }

    pub fn rows(&self) -> Vec<Vec<u64>> {
        self.counts.chunks(self.classes.max(1)).map(<[u64]>::to_vec).collect()
    }
}

fn ratio(num: u64, den: u64) -> Option<f64> {
    (den > 0).then(|| num as f64 / den as f64)
}

impl OneVsRest {
    /// `TP / (TP + FP)`.
    pub fn precision(&self) -> Option<f64> {
        ratio(self.tp, self.tp + self.fp)
    }

    /// `TP / (TP + FN)`.
    pub fn sensitivity(&self) -> Option<f64> {
        ratio(self.tp, self.tp + self.fn_)
    }

    /// `TN / (TN + FP)`.
    pub fn specificity(&self) -> Option<f64> {
        ratio(self.tn, self.tn + self.fp)
    }

    /// `(TP + TN) / T`.
    pub fn accuracy(&self) -> Option<f64> {
        ratio(self.tp + self.tn, self.tp + self.tn + self.fp + self.fn_)
    }
}

/// Area under the ROC curve via the Mann-Whitney rank statistic, with tied
/// scores sharing their mean rank. `None` without both classes present.
pub fn auc_rank(scores: &[f64], positive: &[bool]) -> Option<f64> {
    let n_pos = positive.iter().filter(|&&p| p).count();
    let n_neg = positive.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return None;
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    let mut rank_sum = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        // Ranks i+1 ..= j+1 share their mean.
        let mid = (i + j + 2) as f64 / 2.0;
        rank_sum += mid * order[i..=j].iter().filter(|&&k| positive[k]).count() as f64;
        i = j + 1;
    }
    let p = n_pos as f64;
    Some((rank_sum - p * (p + 1.0) / 2.0) / (p * n_neg as f64))
}

/// ROC points `(fpr, tpr)` from a descending threshold sweep, tied scores
/// moving together. Starts at `(0, 0)` and ends at `(1, 1)`.
pub fn roc_points(scores: &[f64], positive: &[bool]) -> Option<Vec<(f64, f64)>> {
    let n_pos = positive.iter().filter(|&&p| p).count();
    let n_neg = positive.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return None;
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    let mut points = vec![(0.0, 0.0)];
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut i = 0;
    while i < order.len() {
        let s = scores[order[i]];
        while i < order.len() && scores[order[i]] == s {
            if positive[order[i]] {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        points.push((fp as f64 / n_neg as f64, tp as f64 / n_pos as f64));
    }
    Some(points)
}

/// Trapezoidal area under [`roc_points`].
pub fn auc_trapezoid(scores: &[f64], positive: &[bool]) -> Option<f64> {
    let pts = roc_points(scores, positive)?;
    Some(pts.windows(2).map(|w| (w[1].0 - w[0].0) * (w[1].1 + w[0].1) / 2.0).sum())
}

/// Unweighted mean of the defined values.
pub fn macro_mean(values: &[Option<f64>]) -> Option<f64> {
    let defined: Vec<f64> = values.iter().flatten().copied().collect();
    (!defined.is_empty()).then(|| defined.iter().sum::<f64>() / defined.len() as f64)
}

/// Support-weighted mean of the defined values.
pub fn weighted_mean(values: &[Option<f64>], supports: &[u64]) -> Option<f64> {
    let (num, den) = values
        .iter()
        .zip(supports)
        .filter_map(|(v, &s)| v.map(|v| (v * s as f64, s as f64)))
        .fold((0.0, 0.0), |(a, b), (x, y)| (a + x, b + y));
    (den > 0.0).then(|| num / den)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub name: String,
    pub support: u64,
    pub counts: OneVsRest,
    pub precision: Option<f64>,
    pub sensitivity: Option<f64>,
    pub specificity: Option<f64>,
    /// One-vs-rest accuracy `(TP + TN) / T`.
    pub accuracy: Option<f64>,
    pub auc: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Averages {
    pub precision: Option<f64>,
    pub sensitivity: Option<f64>,
    pub specificity: Option<f64>,
    pub accuracy: Option<f64>,
    pub auc: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub per_class: Vec<ClassMetrics>,
    /// `trace / total` of the confusion matrix.
    pub accuracy: f64,
    pub total: u64,
    pub macro_avg: Averages,
    pub weighted_avg: Averages,
}

fn averages(per_class: &[ClassMetrics], f: impl Fn(&[Option<f64>]) -> Option<f64>) -> Averages {
    let col = |g: fn(&ClassMetrics) -> Option<f64>| f(&per_class.iter().map(g).collect::<Vec<_>>());
    Averages {
        precision: col(|c| c.precision),
        sensitivity: col(|c| c.sensitivity),
        specificity: col(|c| c.specificity),
        accuracy: col(|c| c.accuracy),
        auc: col(|c| c.auc),
    }
}

/// Per-class and aggregate metrics. `scores` is `[n, C]`, aligned with `labels`.
/// Classes named `class{i}` unless renamed with [`MetricsReport::with_class_names`].
pub fn metrics_from_confusion<T: Scalar>(
    cm: &ConfusionMatrix,
    scores: &Tensor<T>,
    labels: &[usize],
) -> Result<MetricsReport> {
    let c = cm.classes();
    if scores.shape() != [labels.len(), c] {
        return Err(Error::Shape(format!(
            "scores {:?} do not match {} labels over {c} classes",
            scores.shape(),
            labels.len()
        )));
    }
    if cm.total() != labels.len() as u64 {
        return Err(Error::Shape("confusion matrix total differs from label count".into()));
    }
    let per_class: Vec<ClassMetrics> = (0..c)
        .map(|k| {
            let counts = cm.one_vs_rest(k);
            let col: Vec<f64> = scores.data().iter().skip(k).step_by(c).map(|v| v.to_f64_lossy()).collect();
            let positive: Vec<bool> = labels.iter().map(|&l| l == k).collect();
            let m = ClassMetrics {
                name: format!("class{k}"),
                support: cm.support(k),
                counts,
                precision: counts.precision(),
                sensitivity: counts.sensitivity(),
                specificity: counts.specificity(),
                accuracy: counts.accuracy(),
                auc: auc_rank(&col, &positive),
            };
            if m.sensitivity.is_none() || m.auc.is_none() {
                log::warn!("class {k} has no positives or negatives; sensitivity/AUC undefined");
            }
            if m.precision.is_none() {
                log::warn!("class {k} is never predicted; precision undefined");
            }
            m
        })
        .collect();
    let supports: Vec<u64> = per_class.iter().map(|m| m.support).collect();
    Ok(MetricsReport {
        accuracy: cm.trace() as f64 / cm.total().max(1) as f64,
        total: cm.total(),
        macro_avg: averages(&per_class, macro_mean),
        weighted_avg: averages(&per_class, |v| weighted_mean(v, &supports)),
        per_class,
    })
}

fn fmt(v: Option<f64>) -> String {
    v.map_or_else(|| "undefined".to_string(), |x| format!("{x:.6}"))
}

impl MetricsReport {
    pub fn with_class_names(mut self, names: &[String]) -> Self {
        for (m, n) in self.per_class.iter_mut().zip(names) {
            m.name.clone_from(n);
        }
        self
    }

    /// Tab-separated table: one row per class, then `__macro__`,
    /// `__weighted__` and `__accuracy__`.
    pub fn to_tsv(&self) -> String {
        let mut s = String::from("class\tsupport\tprecision\tsensitivity\tspecificity\tauc\taccuracy\n");
        for m in &self.per_class {
            s.push_str(&format!(
                "{}\t{}\t{}\t{}\t{}\t{}\t{}\n",
                m.name,
                m.support,
                fmt(m.precision),
                fmt(m.sensitivity),
                fmt(m.specificity),
                fmt(m.auc),
                fmt(m.accuracy)
            ));
        }
        for (name, a) in [("__macro__", &self.macro_avg), ("__weighted__", &self.weighted_avg)] {
            s.push_str(&format!(
                "{name}\t{}\t{}\t{}\t{}\t{}\t{}\n",
                self.total,
                fmt(a.precision),
                fmt(a.sensitivity),
                fmt(a.specificity),
                fmt(a.auc),
                fmt(a.accuracy)
            ));
        }
        s.push_str(&format!("__accuracy__\t{}\t-\t-\t-\t-\t{:.6}\n", self.total, self.accuracy));
        s
    }

    pub fn to_text(&self) -> String {
        let mut s = format!("samples: {}\naccuracy: {:.4}\n\n", self.total, self.accuracy);
        s.push_str(&format!(
            "{:<14}{:>9}{:>11}{:>13}{:>13}{:>11}\n",
            "class", "support", "precision", "sensitivity", "specificity", "auc"
        ));
        let short = |v: Option<f64>| v.map_or_else(|| "undef".into(), |x| format!("{x:.3}"));
        for m in &self.per_class {
            s.push_str(&format!(
                "{:<14}{:>9}{:>11}{:>13}{:>13}{:>11}\n",
                m.name,
                m.support,
                short(m.precision),
                short(m.sensitivity),
                short(m.specificity),
                short(m.auc)
            ));
        }
        for (name, a) in [("avg", &self.macro_avg), ("w. avg", &self.weighted_avg)] {
            s.push_str(&format!(
                "{:<14}{:>9}{:>11}{:>13}{:>13}{:>11}\n",
                name,
                self.total,
                short(a.precision),
                short(a.sensitivity),
                short(a.specificity),
                short(a.auc)
            ));
        }
        s
    }
}
