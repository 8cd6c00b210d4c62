//! Detection metrics (AUC, AP), loss entropy, loss-gap statistics and curve
//! helpers.
//!
//! Scores and losses are the same thing here: a higher value means "more
//! outlying". Labels are `true` for outliers.

use std::ops::Deref;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Per-sample losses of a model, which double as its outlier scores.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct LossVector(Vec<f64>);

impl LossVector {
    pub fn new(values: Vec<f64>) -> Self {
        LossVector(values)
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    pub fn mean(&self) -> f64 {
        self.0.iter().sum::<f64>() / self.0.len() as f64
    }
}

impl Deref for LossVector {
    type Target = [f64];

    fn deref(&self) -> &[f64] {
        &self.0
    }
}

impl From<Vec<f64>> for LossVector {
    fn from(v: Vec<f64>) -> Self {
        LossVector(v)
    }
}

fn check_pair(scores: &[f64], labels: &[bool]) -> Result<(usize, usize)> {
    if scores.len() != labels.len() {
        return Err(Error::Shape(format!(
            "{} scores but {} labels",
            scores.len(),
            labels.len()
        )));
    }
    let outliers = labels.iter().filter(|&&l| l).count();
    Ok((labels.len() - outliers, outliers))
}

/// Probability that a random outlier scores strictly higher than a random
/// inlier. Tied cross-class pairs count as 0.
///
/// Runs in O(n log n) by sorting once and counting, for every outlier, the
/// inliers in strictly lower tie groups.
pub fn auc(scores: &[f64], labels: &[bool]) -> Result<f64> {
    let (n_in, n_out) = check_pair(scores, labels)?;
    if n_in == 0 || n_out == 0 {
        return Err(Error::Undefined(
            "AUC undefined: labels contain a single class".into(),
        ));
    }
    if scores.iter().any(|s| s.is_nan()) {
        return Err(Error::numeric(None, "NaN score"));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));

    let mut inliers_below: u64 = 0;
    let mut correct: u64 = 0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        let (mut group_in, mut group_out) = (0u64, 0u64);
        while j < order.len() && scores[order[j]] == scores[order[i]] {
            if labels[order[j]] {
                group_out += 1;
            } else {
                group_in += 1;
            }
            j += 1;
        }
        correct += group_out * inliers_below;
        inliers_below += group_in;
        i = j;
    }
    Ok(correct as f64 / (n_in as f64 * n_out as f64))
}

/// Number of (inlier, outlier) pairs with exactly equal scores. These pairs
/// contribute nothing to [`auc`].
pub fn cross_class_ties(scores: &[f64], labels: &[bool]) -> Result<u64> {
    check_pair(scores, labels)?;
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    let mut ties = 0u64;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        let (mut gi, mut go) = (0u64, 0u64);
        while j < order.len() && scores[order[j]] == scores[order[i]] {
            if labels[order[j]] {
                go += 1;
            } else {
                gi += 1;
            }
            j += 1;
        }
        ties += gi * go;
        i = j;
    }
    Ok(ties)
}

/// Average precision over the descending-score ranking, sum of
/// (R_k - R_{k-1}) * P_k. Equal scores keep their original index order.
pub fn average_precision(scores: &[f64], labels: &[bool]) -> Result<f64> {
    let (_, n_out) = check_pair(scores, labels)?;
    if n_out == 0 {
        return Err(Error::Undefined(
            "average precision undefined: no outliers".into(),
        ));
    }
    if scores.iter().any(|s| s.is_nan()) {
        return Err(Error::numeric(None, "NaN score"));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    // stable sort: ties stay in ascending index order
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    let mut hits = 0usize;
    let mut sum = 0.0;
    for (rank, &idx) in order.iter().enumerate() {
        if labels[idx] {
            hits += 1;
            sum += hits as f64 / (rank + 1) as f64;
        }
    }
    Ok(sum / n_out as f64)
}

/// Shannon entropy (natural log) of the losses normalized to sum to one.
pub fn loss_entropy(losses: &[f64]) -> Result<f64> {
    if losses.is_empty() {
        return Err(Error::InvalidParameter(
            "loss entropy of an empty loss vector".into(),
        ));
    }
    if let Some((i, v)) = losses
        .iter()
        .enumerate()
        .find(|(_, v)| !(v.is_finite() && **v > 0.0))
    {
        return Err(Error::InvalidParameter(format!(
            "loss entropy needs finite positive losses, entry {i} is {v}"
        )));
    }
    // Summing in sorted order makes the result independent of input order.
    let mut sorted = losses.to_vec();
    sorted.sort_by(f64::total_cmp);
    let total: f64 = sorted.iter().sum();
    if !total.is_finite() {
        return Err(Error::numeric(None, "loss sum overflowed"));
    }
    let mut entropy = 0.0;
    let mut mass = 0.0;
    for &v in &sorted {
        let u = v / total;
        mass += u;
        if u > 0.0 {
            entropy -= u * u.ln();
        }
    }
    debug_assert!(
        (mass - 1.0).abs() <= 1e-12 * losses.len().max(1) as f64,
        "normalized losses sum to {mass}"
    );
    Ok(entropy.max(0.0))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossGap {
    pub inlier_mean: f64,
    pub outlier_mean: f64,
    /// `outlier_mean - inlier_mean`; negative when inlier priority is broken.
    pub gap: f64,
}

pub fn loss_gap(losses: &[f64], labels: &[bool]) -> Result<LossGap> {
    let (n_in, n_out) = check_pair(losses, labels)?;
    if n_in == 0 || n_out == 0 {
        return Err(Error::Undefined(
            "loss gap undefined: labels contain a single class".into(),
        ));
    }
    let (mut sum_in, mut sum_out) = (0.0, 0.0);
    for (&v, &l) in losses.iter().zip(labels) {
        if l {
            sum_out += v;
        } else {
            sum_in += v;
        }
    }
    let inlier_mean = sum_in / n_in as f64;
    let outlier_mean = sum_out / n_out as f64;
    Ok(LossGap {
        inlier_mean,
        outlier_mean,
        gap: outlier_mean - inlier_mean,
    })
}

/// `mean(losses) - (n_out/n)·L_out - (n_in/n)·L_in`; zero up to rounding.
pub fn decomposition_residual(losses: &[f64], labels: &[bool]) -> Result<f64> {
    let gap = loss_gap(losses, labels)?;
    let n = losses.len() as f64;
    let n_out = labels.iter().filter(|&&l| l).count() as f64;
    let mean = losses.iter().sum::<f64>() / n;
    Ok(mean - (n_out / n) * gap.outlier_mean - ((n - n_out) / n) * gap.inlier_mean)
}

/// Sample Pearson correlation coefficient.
pub fn pearson(xs: &[f64], ys: &[f64]) -> Result<f64> {
    if xs.len() != ys.len() {
        return Err(Error::Shape(format!(
            "correlation of sequences with lengths {} and {}",
            xs.len(),
            ys.len()
        )));
    }
    if xs.len() < 2 {
        return Err(Error::Undefined(
            "correlation undefined: fewer than two points".into(),
        ));
    }
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (x, y) in xs.iter().zip(ys) {
        let (dx, dy) = (x - mx, y - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(Error::Undefined(
            "correlation undefined: zero variance input".into(),
        ));
    }
    let r = sxy / (sxx.sqrt() * syy.sqrt());
    Ok(r.clamp(-1.0, 1.0))
}

/// Threshold on `max - min` below which an AUC curve counts as converged.
pub const AUC_CONVERGENCE_SPAN: f64 = 0.05;

/// True when the curve never moves more than `threshold` from end to end.
pub fn auc_converged(curve: &[f64], threshold: f64) -> Result<bool> {
    if curve.is_empty() {
        return Err(Error::InvalidParameter("empty AUC curve".into()));
    }
    let max = curve.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let min = curve.iter().copied().fold(f64::INFINITY, f64::min);
    Ok(max - min <= threshold)
}

/// Label-based metrics of one score vector.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DetectionMetrics {
    pub auc: f64,
    pub ap: f64,
}

impl DetectionMetrics {
    pub fn compute(scores: &[f64], labels: &[bool]) -> Result<Self> {
        Ok(DetectionMetrics {
            auc: auc(scores, labels)?,
            ap: average_precision(scores, labels)?,
        })
    }
}

/// Per-iteration curves of a run. Index 0 is the untrained model.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricCurves {
    /// Mean per-sample loss over the full dataset.
    pub mean_loss: Vec<f64>,
    /// Loss entropy on the evaluation subset.
    pub entropy: Vec<f64>,
    /// Present only when the dataset carries labels.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub labeled: Option<LabeledCurves>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LabeledCurves {
    pub auc: Vec<f64>,
    pub ap: Vec<f64>,
    pub inlier_loss: Vec<f64>,
    pub outlier_loss: Vec<f64>,
    pub l_gap: Vec<f64>,
    pub r_pi: Vec<f64>,
}

impl LabeledCurves {
    pub fn len(&self) -> usize {
        self.auc.len()
    }

    pub fn is_empty(&self) -> bool {
        self.auc.is_empty()
    }

    fn is_aligned(&self) -> bool {
        let n = self.auc.len();
        [
            self.ap.len(),
            self.inlier_loss.len(),
            self.outlier_loss.len(),
            self.l_gap.len(),
            self.r_pi.len(),
        ]
        .iter()
        .all(|&l| l == n)
    }
}

impl MetricCurves {
    pub fn len(&self) -> usize {
        self.entropy.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entropy.is_empty()
    }

    pub fn check_aligned(&self) -> Result<()> {
        let n = self.entropy.len();
        let ok = self.mean_loss.len() == n
            && self
                .labeled
                .as_ref()
                .is_none_or(|l| l.len() == n && l.is_aligned());
        if ok {
            Ok(())
        } else {
            Err(Error::Shape("metric curves have different lengths".into()))
        }
    }
}
