//! Structured SVM ranking of oriented patches.
//!
//! Samples carry a feature vector `z` and a loss `delta` in `[0, 1]`; a
//! lower loss should rank higher. Training solves the 1-slack problem
//!
//! ```text
//! min_{w, xi >= 0}  1/2 |w|^2 + C xi
//! s.t. 1/|P| sum_{(i,j) in P} c_ij w.(z_i - z_j) >= 1/|P| sum c_ij m_ij - xi   for all c in {0,1}^|P|
//! ```
//!
//! over ordered pairs `P = {(i, j) : delta_i < delta_j}` with per-pair
//! margin `m_ij` (see [`PairMargin`]). The cutting-plane loop repeatedly adds
//! the most violated aggregated constraint and re-solves the dual over the
//! working set.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::patch::FeatureVector;

/// Pairs whose losses differ by less than this are left unordered.
pub const MIN_LOSS_GAP: f64 = 1e-6;

/// Dual solver stops when the KKT gap of the working-set QP drops below this.
const DUAL_TOLERANCE: f64 = 1e-8;

/// Margin demanded between the scores of an ordered pair.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum PairMargin {
    /// Margin `delta_j - delta_i`: pairs that differ more in loss must be
    /// separated further.
    #[default]
    LossRescaled,
    /// Fixed margin of one for every ordered pair.
    Unit,
}

impl PairMargin {
    pub fn margin(self, loss_i: f64, loss_j: f64) -> f64 {
        match self {
            PairMargin::LossRescaled => loss_j - loss_i,
            PairMargin::Unit => 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub z: Vec<f64>,
    pub loss: f64,
}

/// Training samples sharing one feature dimension.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingSet {
    samples: Vec<Sample>,
    dim: usize,
}

impl TrainingSet {
    pub fn new(samples: Vec<Sample>) -> Result<Self> {
        if samples.len() < 2 {
            return Err(Error::InvalidInput(format!(
                "insufficient samples: need at least 2, got {}",
                samples.len()
            )));
        }
        let dim = samples[0].z.len();
        for (i, s) in samples.iter().enumerate() {
            if s.z.len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    actual: s.z.len(),
                });
            }
            if !(0.0..=1.0).contains(&s.loss) {
                return Err(Error::InvalidInput(format!(
                    "sample {i} has loss {} outside [0, 1]",
                    s.loss
                )));
            }
            if s.z.iter().any(|v| !v.is_finite()) {
                return Err(Error::InvalidInput(format!("sample {i} has non-finite features")));
            }
        }
        Ok(Self { samples, dim })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn samples(&self) -> &[Sample] {
        &self.samples
    }

    /// Ordinal label of each sample: `1 - delta`, higher ranks first. It
    /// carries no information beyond the losses.
    pub fn rank_labels(&self) -> Vec<f64> {
        self.samples.iter().map(|s| 1.0 - s.loss).collect()
    }

    fn map_features(&self, f: impl Fn(&[f64]) -> Vec<f64>) -> TrainingSet {
        TrainingSet {
            samples: self
                .samples
                .iter()
                .map(|s| Sample {
                    z: f(&s.z),
                    loss: s.loss,
                })
                .collect(),
            dim: self.dim,
        }
    }
}

/// Ordered pairs `(i, j)` with `delta_i < delta_j - MIN_LOSS_GAP`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PairSet {
    pairs: Vec<(u32, u32)>,
}

impl PairSet {
    pub fn from_losses(data: &TrainingSet) -> Self {
        let s = data.samples();
        let mut pairs = Vec::new();
        for (i, a) in s.iter().enumerate() {
            for (j, b) in s.iter().enumerate() {
                if a.loss < b.loss - MIN_LOSS_GAP {
                    pairs.push((i as u32, j as u32));
                }
            }
        }
        Self { pairs }
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.pairs.iter().map(|&(i, j)| (i as usize, j as usize))
    }
}

/// One aggregated 1-slack constraint `coefficients . w >= rhs - xi`.
#[derive(Debug, Clone, PartialEq)]
pub struct ViolatedConstraint {
    /// `1/|P| sum c_ij (z_i - z_j)`.
    pub coefficients: Vec<f64>,
    /// `1/|P| sum c_ij m_ij`.
    pub rhs: f64,
    /// Number of pairs with `c_ij = 1`.
    pub active_pairs: usize,
}

impl ViolatedConstraint {
    /// Slack this constraint requires at `w`: `rhs - coefficients . w`.
    pub fn violation(&self, w: &[f64]) -> f64 {
        self.rhs - dot(&self.coefficients, w)
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn scores(w: &[f64], data: &TrainingSet) -> Vec<f64> {
    data.samples().iter().map(|s| dot(w, &s.z)).collect()
}

/// Pairs whose score difference falls short of the margin.
pub fn active_pairs(
    w: &[f64],
    data: &TrainingSet,
    pairs: &PairSet,
    margin: PairMargin,
) -> Vec<(usize, usize)> {
    let s = scores(w, data);
    let samples = data.samples();
    pairs
        .iter()
        .filter(|&(i, j)| s[i] - s[j] < margin.margin(samples[i].loss, samples[j].loss))
        .collect()
}

/// Separation oracle: sets `c_ij = 1` exactly for the pairs whose score
/// difference is below their margin, which maximizes the constraint's
/// violation, and aggregates them into a single constraint.
pub fn find_most_violated(
    w: &[f64],
    data: &TrainingSet,
    pairs: &PairSet,
    margin: PairMargin,
) -> ViolatedConstraint {
    let dim = data.dim();
    if pairs.is_empty() {
        return ViolatedConstraint {
            coefficients: vec![0.0; dim],
            rhs: 0.0,
            active_pairs: 0,
        };
    }
    let s = scores(w, data);
    let samples = data.samples();
    let mut net = vec![0i64; samples.len()];
    let mut rhs = 0.0;
    let mut active = 0usize;
    for (i, j) in pairs.iter() {
        let m = margin.margin(samples[i].loss, samples[j].loss);
        if s[i] - s[j] < m {
            net[i] += 1;
            net[j] -= 1;
            rhs += m;
            active += 1;
        }
    }
    let inv = 1.0 / pairs.len() as f64;
    let mut coefficients = vec![0.0; dim];
    for (k, &n) in net.iter().enumerate() {
        if n != 0 {
            let f = n as f64 * inv;
            for (c, z) in coefficients.iter_mut().zip(&samples[k].z) {
                *c += f * z;
            }
        }
    }
    ViolatedConstraint {
        coefficients,
        rhs: rhs * inv,
        active_pairs: active,
    }
}

/// Per-dimension affine standardization fitted on the training features.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl Standardizer {
    pub fn identity(dim: usize) -> Self {
        Self {
            mean: vec![0.0; dim],
            std: vec![1.0; dim],
        }
    }

    pub fn fit(data: &TrainingSet) -> Self {
        let n = data.len() as f64;
        let dim = data.dim();
        let mut mean = vec![0.0; dim];
        for s in data.samples() {
            for (m, z) in mean.iter_mut().zip(&s.z) {
                *m += z;
            }
        }
        for m in &mut mean {
            *m /= n;
        }
        let mut var = vec![0.0; dim];
        for s in data.samples() {
            for ((v, z), m) in var.iter_mut().zip(&s.z).zip(&mean) {
                *v += (z - m) * (z - m);
            }
        }
        let std = var
            .into_iter()
            .map(|v| {
                let sd = (v / n).sqrt();
                if sd > 1e-12 {
                    sd
                } else {
                    1.0
                }
            })
            .collect();
        Self { mean, std }
    }

    pub fn apply(&self, z: &[f64]) -> Vec<f64> {
        z.iter()
            .zip(&self.mean)
            .zip(&self.std)
            .map(|((v, m), s)| (v - m) / s)
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainOptions {
    pub c: f64,
    pub epsilon: f64,
    pub max_iter: usize,
    pub margin: PairMargin,
    pub standardize: bool,
}

impl Default for TrainOptions {
    fn default() -> Self {
        Self {
            c: 0.1,
            epsilon: 1e-3,
            max_iter: 1000,
            margin: PairMargin::default(),
            standardize: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct TrainStats {
    pub iterations: usize,
    /// Slack of the returned weights against the full constraint family.
    pub slack: f64,
    /// Primal objective `1/2 |w|^2 + C xi` of the returned weights.
    pub objective: f64,
    /// Dual objective of the final working-set QP, a lower bound on the optimum.
    pub lower_bound: f64,
    pub converged: bool,
    pub constraints: usize,
    pub pairs: usize,
    /// Working-set dual value after each cutting-plane iteration.
    pub lower_bound_history: Vec<f64>,
}

/// Linear ranking function with its feature standardization.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankingModel {
    pub weights: Vec<f64>,
    pub c: f64,
    pub standardizer: Standardizer,
    pub stats: TrainStats,
}

impl RankingModel {
    pub fn new(weights: Vec<f64>, c: f64, standardizer: Standardizer) -> Result<Self> {
        if standardizer.mean.len() != weights.len() || standardizer.std.len() != weights.len() {
            return Err(Error::DimensionMismatch {
                expected: weights.len(),
                actual: standardizer.mean.len(),
            });
        }
        if weights.iter().any(|w| !w.is_finite()) {
            return Err(Error::InvalidInput("non-finite model weights".into()));
        }
        Ok(Self {
            weights,
            c,
            standardizer,
            stats: TrainStats::default(),
        })
    }

    pub fn dim(&self) -> usize {
        self.weights.len()
    }

    /// `w . standardize(z)`.
    pub fn score(&self, z: &[f64]) -> Result<f64> {
        if z.len() != self.weights.len() {
            return Err(Error::DimensionMismatch {
                expected: self.weights.len(),
                actual: z.len(),
            });
        }
        Ok(z
            .iter()
            .zip(&self.weights)
            .zip(&self.standardizer.mean)
            .zip(&self.standardizer.std)
            .map(|(((v, w), m), s)| w * (v - m) / s)
            .sum())
    }
}

pub fn score(model: &RankingModel, z: &FeatureVector) -> Result<f64> {
    model.score(&z.values)
}

/// Dual of the working-set QP:
/// `max sum a_k h_k - 1/2 |sum a_k g_k|^2` over `a >= 0, sum a <= C`.
/// The inequality is turned into an equality with an extra slack variable
/// (`h = 0`, `g = 0`) so pairwise SMO steps stay on the simplex.
struct WorkingSetQp {
    g: Vec<Vec<f64>>,
    h: Vec<f64>,
    gram: Vec<Vec<f64>>,
    /// Last entry is the slack variable.
    alpha: Vec<f64>,
    c: f64,
}

impl WorkingSetQp {
    fn new(c: f64) -> Self {
        Self {
            g: Vec::new(),
            h: Vec::new(),
            gram: Vec::new(),
            alpha: vec![c],
            c,
        }
    }

    fn len(&self) -> usize {
        self.g.len()
    }

    fn push(&mut self, constraint: &ViolatedConstraint) {
        let row: Vec<f64> = self
            .g
            .iter()
            .map(|g| dot(g, &constraint.coefficients))
            .collect();
        for (r, &v) in self.gram.iter_mut().zip(&row) {
            r.push(v);
        }
        let mut own = row;
        own.push(dot(&constraint.coefficients, &constraint.coefficients));
        self.gram.push(own);
        self.g.push(constraint.coefficients.clone());
        self.h.push(constraint.rhs);
        let slack = self.alpha.pop().unwrap_or(self.c);
        self.alpha.push(0.0);
        self.alpha.push(slack);
    }

    fn q(&self, a: usize, b: usize) -> f64 {
        let m = self.len();
        if a == m || b == m {
            0.0
        } else {
            self.gram[a][b]
        }
    }

    fn solve(&mut self) {
        let m = self.len();
        let n = m + 1;
        let mut qa: Vec<f64> = (0..n)
            .map(|k| (0..m).map(|l| self.q(k, l) * self.alpha[l]).sum())
            .collect();
        let h = |k: usize| if k == m { 0.0 } else { self.h[k] };
        let max_steps = 100_000 + 1000 * n;
        for _ in 0..max_steps {
            let grad: Vec<f64> = (0..n).map(|k| h(k) - qa[k]).collect();
            let mut up = 0;
            let mut down = None::<usize>;
            for k in 0..n {
                if grad[k] > grad[up] {
                    up = k;
                }
                if self.alpha[k] > 0.0 && down.map_or(true, |d| grad[k] < grad[d]) {
                    down = Some(k);
                }
            }
            let Some(down) = down else { break };
            let gap = grad[up] - grad[down];
            if gap <= DUAL_TOLERANCE || up == down {
                break;
            }
            let eta = self.q(up, up) + self.q(down, down) - 2.0 * self.q(up, down);
            let step = if eta > 1e-15 {
                (gap / eta).min(self.alpha[down])
            } else {
                self.alpha[down]
            };
            self.alpha[up] += step;
            if step >= self.alpha[down] {
                self.alpha[down] = 0.0;
            } else {
                self.alpha[down] -= step;
            }
            for k in 0..m {
                qa[k] += step * (self.q(k, up) - self.q(k, down));
            }
        }
    }

    fn weights(&self, dim: usize) -> Vec<f64> {
        let mut w = vec![0.0; dim];
        for (a, g) in self.alpha.iter().zip(&self.g) {
            if *a != 0.0 {
                for (wi, gi) in w.iter_mut().zip(g) {
                    *wi += a * gi;
                }
            }
        }
        w
    }

    fn dual_value(&self, w: &[f64]) -> f64 {
        let lin: f64 = self.alpha.iter().zip(&self.h).map(|(a, h)| a * h).sum();
        lin - 0.5 * dot(w, w)
    }

    /// Smallest slack satisfying every cached constraint at `w`.
    fn slack(&self, w: &[f64]) -> f64 {
        self.g
            .iter()
            .zip(&self.h)
            .map(|(g, h)| h - dot(g, w))
            .fold(0.0, f64::max)
    }
}

/// Trains a ranking model with the 1-slack cutting-plane algorithm.
///
/// Stops once the most violated constraint exceeds the working-set slack by
/// less than `epsilon`, or after `max_iter` iterations; in the latter case
/// the iterate with the lowest primal objective is returned and
/// `stats.converged` is false.
pub fn train(data: &TrainingSet, options: &TrainOptions) -> Result<RankingModel> {
    if !(options.c > 0.0 && options.c.is_finite()) {
        return Err(Error::InvalidParameter(format!("C must be positive, got {}", options.c)));
    }
    if !(options.epsilon > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "epsilon must be positive, got {}",
            options.epsilon
        )));
    }
    let standardizer = if options.standardize {
        Standardizer::fit(data)
    } else {
        Standardizer::identity(data.dim())
    };
    let data = data.map_features(|z| standardizer.apply(z));
    let pairs = PairSet::from_losses(&data);
    if pairs.is_empty() {
        return Err(Error::NoOrderedPairs);
    }

    let dim = data.dim();
    let c = options.c;
    let mut qp = WorkingSetQp::new(c);
    let mut w = vec![0.0; dim];
    let mut history = Vec::new();
    let mut best: Option<(Vec<f64>, f64, f64)> = None;
    let mut converged = false;
    let mut iterations = 0;

    loop {
        let cut = find_most_violated(&w, &data, &pairs, options.margin);
        let violation = cut.violation(&w);
        let slack = violation.max(0.0);
        let primal = 0.5 * dot(&w, &w) + c * slack;
        if best.as_ref().map_or(true, |b| primal < b.1) {
            best = Some((w.clone(), primal, slack));
        }
        if violation <= qp.slack(&w) + options.epsilon {
            converged = true;
            best = Some((w.clone(), primal, slack));
            break;
        }
        if iterations >= options.max_iter {
            break;
        }
        qp.push(&cut);
        qp.solve();
        w = qp.weights(dim);
        history.push(qp.dual_value(&w));
        iterations += 1;
    }

    if !converged {
        log::warn!(
            "cutting plane did not converge within {} iterations; returning best iterate",
            options.max_iter
        );
    }
    let (weights, objective, slack) = best.expect("at least one iterate");
    let lower_bound = history.last().copied().unwrap_or(0.0);
    let mut model = RankingModel::new(weights, c, standardizer)?;
    model.stats = TrainStats {
        iterations,
        slack,
        objective,
        lower_bound,
        converged,
        constraints: qp.len(),
        pairs: pairs.len(),
        lower_bound_history: history,
    };
    Ok(model)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn set(rows: &[(&[f64], f64)]) -> TrainingSet {
        TrainingSet::new(
            rows.iter()
                .map(|(z, l)| Sample {
                    z: z.to_vec(),
                    loss: *l,
                })
                .collect(),
        )
        .unwrap()
    }

    fn raw_options(c: f64) -> TrainOptions {
        TrainOptions {
            c,
            epsilon: 1e-9,
            max_iter: 1000,
            margin: PairMargin::Unit,
            standardize: false,
        }
    }

    #[test]
    fn score_examples() {
        let std = Standardizer::identity(3);
        let zero = RankingModel::new(vec![0.0; 3], 0.1, std.clone()).unwrap();
        assert_eq!(zero.score(&[3.0, -1.0, 2.0]).unwrap(), 0.0);

        let unit = RankingModel::new(vec![0.0, 1.0, 0.0], 0.1, std.clone()).unwrap();
        assert_eq!(unit.score(&[3.0, -1.5, 2.0]).unwrap(), -1.5);

        let m = RankingModel::new(vec![1.0, -2.0, 0.5], 0.1, std).unwrap();
        assert_eq!(m.score(&[2.0, 1.0, 4.0]).unwrap(), 2.0);
        assert!(matches!(m.score(&[1.0]), Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn zero_weights_activate_every_pair() {
        let d = set(&[(&[1.0], 0.1), (&[2.0], 0.5), (&[3.0], 0.9), (&[4.0], 0.5)]);
        let pairs = PairSet::from_losses(&d);
        // (0,1) (0,2) (0,3) (1,2) (3,2); equal losses 1 and 3 are unordered
        assert_eq!(pairs.len(), 5);
        let c = find_most_violated(&[0.0], &d, &pairs, PairMargin::Unit);
        assert_eq!(c.active_pairs, 5);
        assert!((c.rhs - 1.0).abs() < 1e-15);
    }

    #[test]
    fn separated_scores_have_no_active_pairs() {
        let d = set(&[(&[3.0], 0.0), (&[1.5], 0.5), (&[0.0], 1.0)]);
        let pairs = PairSet::from_losses(&d);
        let c = find_most_violated(&[1.0], &d, &pairs, PairMargin::Unit);
        assert_eq!(c.active_pairs, 0);
        assert_eq!(c.violation(&[1.0]), 0.0);
    }

    #[test]
    fn three_sample_pair_scan() {
        // scores (2.0, 1.5, 1.8) with w = 1 on a 1-D feature
        let d = set(&[(&[2.0], 0.1), (&[1.5], 0.5), (&[1.8], 0.9)]);
        let pairs = PairSet::from_losses(&d);
        let active = active_pairs(&[1.0], &d, &pairs, PairMargin::Unit);
        // exhaustive oracle over all ordered pairs
        let s = [2.0, 1.5, 1.8];
        let l = [0.1, 0.5, 0.9];
        let mut oracle = Vec::new();
        for i in 0..3 {
            for j in 0..3 {
                if l[i] < l[j] && s[i] - s[j] < 1.0 {
                    oracle.push((i, j));
                }
            }
        }
        assert_eq!(active, oracle);
        assert_eq!(active.len(), 3);
        let c = find_most_violated(&[1.0], &d, &pairs, PairMargin::Unit);
        assert_eq!(c.active_pairs, 3);
        // net counts: sample 0 +2, sample 1 0, sample 2 -2
        assert!((c.coefficients[0] - (2.0 * 2.0 - 2.0 * 1.8) / 3.0).abs() < 1e-12);
    }

    #[test]
    fn loss_rescaled_margin_is_loss_gap() {
        let d = set(&[(&[2.0], 0.1), (&[1.5], 0.5), (&[1.8], 0.9)]);
        let pairs = PairSet::from_losses(&d);
        let active = active_pairs(&[1.0], &d, &pairs, PairMargin::LossRescaled);
        // (0,1): 0.5 >= 0.4 satisfied; (0,2): 0.2 < 0.8; (1,2): -0.3 < 0.4
        assert_eq!(active, vec![(0, 2), (1, 2)]);
    }

    #[test]
    fn one_dimensional_analytic_case() {
        for margin in [PairMargin::Unit, PairMargin::LossRescaled] {
            let d = set(&[(&[1.0], 0.0), (&[0.0], 1.0)]);
            let mut opts = raw_options(1e3);
            opts.margin = margin;
            let m = train(&d, &opts).unwrap();
            assert!((m.weights[0] - 1.0).abs() < 1e-6, "{:?}", m.weights);
            assert!(m.stats.converged);
            assert!(m.stats.slack.abs() < 1e-9);
            assert!(m.stats.iterations >= 1);
        }
    }

    #[test]
    fn small_c_trades_margin_for_slack() {
        // 1-D: min 1/2 w^2 + C max(0, 1 - w) -> w = C for C < 1
        let d = set(&[(&[1.0], 0.0), (&[0.0], 1.0)]);
        let m = train(&d, &raw_options(0.25)).unwrap();
        assert!((m.weights[0] - 0.25).abs() < 1e-6);
        assert!((m.stats.objective - (0.5 * 0.0625 + 0.25 * 0.75)).abs() < 1e-6);
    }

    #[test]
    fn equal_losses_are_rejected() {
        let d = set(&[(&[1.0], 0.5), (&[0.0], 0.5), (&[2.0], 0.5)]);
        assert!(matches!(train(&d, &TrainOptions::default()), Err(Error::NoOrderedPairs)));
    }

    #[test]
    fn training_set_validation() {
        assert!(TrainingSet::new(vec![Sample { z: vec![1.0], loss: 0.0 }]).is_err());
        assert!(TrainingSet::new(vec![
            Sample { z: vec![1.0], loss: 0.0 },
            Sample { z: vec![1.0, 2.0], loss: 1.0 },
        ])
        .is_err());
        assert!(TrainingSet::new(vec![
            Sample { z: vec![1.0], loss: 0.0 },
            Sample { z: vec![1.0], loss: 1.5 },
        ])
        .is_err());
    }

    #[test]
    fn lower_bound_is_monotone() {
        let d = set(&[
            (&[1.0, 0.2, -0.3], 0.0),
            (&[0.4, 0.9, 0.1], 0.2),
            (&[-0.2, 0.3, 0.8], 0.5),
            (&[0.1, -0.7, 0.4], 0.7),
            (&[-0.9, 0.1, -0.2], 1.0),
        ]);
        let m = train(&d, &raw_options(2.0)).unwrap();
        for pair in m.stats.lower_bound_history.windows(2) {
            assert!(pair[1] >= pair[0] - 1e-9, "{:?}", m.stats.lower_bound_history);
        }
        assert!(m.stats.lower_bound <= m.stats.objective + 1e-9);
    }

    #[test]
    fn hitting_max_iter_reports_non_convergence() {
        let d = set(&[
            (&[1.0, 0.2], 0.0),
            (&[0.4, 0.9], 0.2),
            (&[-0.2, 0.3], 0.5),
            (&[0.1, -0.7], 0.7),
        ]);
        let mut opts = raw_options(10.0);
        opts.max_iter = 1;
        opts.epsilon = 1e-12;
        let m = train(&d, &opts).unwrap();
        assert!(!m.stats.converged);
        assert!(m.stats.objective.is_finite());
    }
}
