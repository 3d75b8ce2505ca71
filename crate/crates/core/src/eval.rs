//! Tolerant precision / recall / F1, pixel proportion and k-fold
//! cross-validation.
//!
//! Matching uses a Euclidean distance transform: a predicted pixel is a true
//! positive when some ground-truth pixel lies within the tolerance radius,
//! and a ground-truth pixel is recovered when some predicted pixel lies
//! within the same radius.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::raster::BinaryMap;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MatchReport {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub true_positives: usize,
    pub false_positives: usize,
    pub false_negatives: usize,
    pub tolerance: f64,
}

/// `2PR / (P + R)`, zero when both are zero.
pub fn f1_score(precision: f64, recall: f64) -> f64 {
    if precision + recall > 0.0 {
        2.0 * precision * recall / (precision + recall)
    } else {
        0.0
    }
}

/// Exact squared Euclidean distance from each pixel to the nearest set pixel
/// of `mask` (infinite when the mask is empty), via two 1-D lower-envelope
/// passes.
pub fn squared_distance_transform(mask: &BinaryMap) -> Vec<f64> {
    let (w, h) = (mask.width(), mask.height());
    let mut grid: Vec<f64> = mask
        .mask()
        .iter()
        .map(|&b| if b { 0.0 } else { f64::INFINITY })
        .collect();
    let mut buf = vec![0.0; w.max(h)];
    let mut out = vec![0.0; w.max(h)];
    for c in 0..w {
        for r in 0..h {
            buf[r] = grid[r * w + c];
        }
        lower_envelope(&buf[..h], &mut out[..h]);
        for r in 0..h {
            grid[r * w + c] = out[r];
        }
    }
    for r in 0..h {
        buf[..w].copy_from_slice(&grid[r * w..(r + 1) * w]);
        lower_envelope(&buf[..w], &mut out[..w]);
        grid[r * w..(r + 1) * w].copy_from_slice(&out[..w]);
    }
    grid
}

/// 1-D squared distance transform of a sampled function `f`
/// (Felzenszwalb & Huttenlocher).
fn lower_envelope(f: &[f64], out: &mut [f64]) {
    let n = f.len();
    let finite: Vec<usize> = (0..n).filter(|&i| f[i].is_finite()).collect();
    if finite.is_empty() {
        out.iter_mut().for_each(|o| *o = f64::INFINITY);
        return;
    }
    let mut v = Vec::with_capacity(finite.len());
    let mut z: Vec<f64> = Vec::with_capacity(finite.len() + 1);
    let intersect = |q: usize, p: usize| -> f64 {
        let (qf, pf) = (q as f64, p as f64);
        ((f[q] + qf * qf) - (f[p] + pf * pf)) / (2.0 * (qf - pf))
    };
    for &q in &finite {
        loop {
            match v.last() {
                None => {
                    v.push(q);
                    z.push(f64::NEG_INFINITY);
                    break;
                }
                Some(&p) => {
                    let s = intersect(q, p);
                    if s <= *z.last().unwrap() {
                        v.pop();
                        z.pop();
                    } else {
                        v.push(q);
                        z.push(s);
                        break;
                    }
                }
            }
        }
    }
    z.push(f64::INFINITY);
    let mut k = 0;
    for (i, o) in out.iter_mut().enumerate() {
        let x = i as f64;
        while z[k + 1] < x {
            k += 1;
        }
        let d = x - v[k] as f64;
        *o = d * d + f[v[k]];
    }
}

/// Precision, recall and F1 where matches within `tolerance` pixels count.
///
/// With no predictions precision is 0; with an empty ground truth recall is 0.
pub fn tolerant_f1(pred: &BinaryMap, gt: &BinaryMap, tolerance: f64) -> Result<MatchReport> {
    if pred.width() != gt.width() || pred.height() != gt.height() {
        return Err(Error::InvalidInput(format!(
            "prediction is {}x{} but ground truth is {}x{}",
            pred.width(),
            pred.height(),
            gt.width(),
            gt.height()
        )));
    }
    if !(tolerance >= 0.0) {
        return Err(Error::InvalidParameter(format!(
            "tolerance must be non-negative, got {tolerance}"
        )));
    }
    let limit = tolerance * tolerance + 1e-9;
    let to_gt = squared_distance_transform(gt);
    let to_pred = squared_distance_transform(pred);

    let mut tp = 0;
    let mut n_pred = 0;
    for (i, &p) in pred.mask().iter().enumerate() {
        if p {
            n_pred += 1;
            if to_gt[i] <= limit {
                tp += 1;
            }
        }
    }
    let mut n_gt = 0;
    let mut missed = 0;
    for (i, &g) in gt.mask().iter().enumerate() {
        if g {
            n_gt += 1;
            if to_pred[i] > limit {
                missed += 1;
            }
        }
    }
    let precision = if n_pred > 0 { tp as f64 / n_pred as f64 } else { 0.0 };
    let recall = if n_gt > 0 {
        (n_gt - missed) as f64 / n_gt as f64
    } else {
        0.0
    };
    Ok(MatchReport {
        precision,
        recall,
        f1: f1_score(precision, recall),
        true_positives: tp,
        false_positives: n_pred - tp,
        false_negatives: missed,
        tolerance,
    })
}

/// Percentage of pixels set in the map.
pub fn pixel_proportion(pred: &BinaryMap) -> f64 {
    100.0 * pred.count() as f64 / pred.len() as f64
}

/// Round-robin assignment of images to `k` folds.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FoldSplit {
    k: usize,
    assignments: Vec<usize>,
}

impl FoldSplit {
    pub fn new(n_images: usize, k: usize) -> Result<Self> {
        if k < 2 {
            return Err(Error::InvalidParameter(format!("need at least 2 folds, got {k}")));
        }
        if n_images < k {
            return Err(Error::InvalidInput(format!(
                "{n_images} images cannot fill {k} folds"
            )));
        }
        Ok(Self {
            k,
            assignments: (0..n_images).map(|i| i % k).collect(),
        })
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn fold_of(&self, image: usize) -> usize {
        self.assignments[image]
    }

    pub fn held_out(&self, fold: usize) -> Vec<usize> {
        (0..self.assignments.len())
            .filter(|&i| self.assignments[i] == fold)
            .collect()
    }

    pub fn training(&self, fold: usize) -> Vec<usize> {
        (0..self.assignments.len())
            .filter(|&i| self.assignments[i] != fold)
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CrossValidation<P> {
    pub best: P,
    pub best_index: usize,
    /// Held-out score of the best grid point, one per fold.
    pub fold_scores: Vec<f64>,
    /// Mean held-out score of every grid point, in grid order.
    pub mean_scores: Vec<f64>,
}

/// Grid search with k-fold cross-validation.
///
/// `evaluate(params, train, test)` trains on the `train` image indices and
/// returns the mean F1 on `test`. The grid point with the highest mean over
/// folds wins; ties go to the earliest.
pub fn cross_validate<P: Clone>(
    n_images: usize,
    grid: &[P],
    k: usize,
    mut evaluate: impl FnMut(&P, &[usize], &[usize]) -> Result<f64>,
) -> Result<CrossValidation<P>> {
    if grid.is_empty() {
        return Err(Error::InvalidParameter("parameter grid is empty".into()));
    }
    let split = FoldSplit::new(n_images, k)?;
    let mut per_point = Vec::with_capacity(grid.len());
    for p in grid {
        let mut scores = Vec::with_capacity(k);
        for fold in 0..k {
            scores.push(evaluate(p, &split.training(fold), &split.held_out(fold))?);
        }
        per_point.push(scores);
    }
    let mean_scores: Vec<f64> = per_point
        .iter()
        .map(|s| s.iter().sum::<f64>() / s.len() as f64)
        .collect();
    let mut best = 0;
    for (i, &m) in mean_scores.iter().enumerate() {
        if m > mean_scores[best] {
            best = i;
        }
    }
    Ok(CrossValidation {
        best: grid[best].clone(),
        best_index: best,
        fold_scores: per_point.swap_remove(best),
        mean_scores,
    })
}

/// One row of the metrics table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub image: String,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub rho_percent: f64,
}

impl MetricsRow {
    pub fn new(image: impl Into<String>, report: &MatchReport, pred: &BinaryMap) -> Self {
        Self {
            image: image.into(),
            precision: report.precision,
            recall: report.recall,
            f1: report.f1,
            rho_percent: pixel_proportion(pred),
        }
    }
}

/// Arithmetic mean of every column, labelled `mean`.
pub fn mean_row(rows: &[MetricsRow]) -> MetricsRow {
    let n = rows.len().max(1) as f64;
    let sum = |f: fn(&MetricsRow) -> f64| rows.iter().map(f).sum::<f64>() / n;
    MetricsRow {
        image: "mean".into(),
        precision: sum(|r| r.precision),
        recall: sum(|r| r.recall),
        f1: sum(|r| r.f1),
        rho_percent: sum(|r| r.rho_percent),
    }
}

/// CSV with a header, one line per row and a trailing mean row.
pub fn metrics_csv(rows: &[MetricsRow]) -> String {
    let mut out = String::from("image,precision,recall,f1,rho_percent\n");
    for r in rows.iter().chain(std::iter::once(&mean_row(rows))) {
        out.push_str(&format!(
            "{},{:.6},{:.6},{:.6},{:.6}\n",
            r.image, r.precision, r.recall, r.f1, r.rho_percent
        ));
    }
    out
}

/// Aligned text table of the same content as [`metrics_csv`].
pub fn metrics_table(rows: &[MetricsRow]) -> String {
    let width = rows
        .iter()
        .map(|r| r.image.len())
        .chain([5])
        .max()
        .unwrap_or(5);
    let mut out = format!(
        "{:<width$}  {:>9}  {:>9}  {:>9}  {:>9}\n",
        "image", "precision", "recall", "f1", "rho(%)"
    );
    for r in rows.iter().chain(std::iter::once(&mean_row(rows))) {
        out.push_str(&format!(
            "{:<width$}  {:>9.4}  {:>9.4}  {:>9.4}  {:>9.4}\n",
            r.image, r.precision, r.recall, r.f1, r.rho_percent
        ));
    }
    out
}
