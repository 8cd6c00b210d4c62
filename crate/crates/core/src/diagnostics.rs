//! Post-hoc diagnostics for runs where loss entropy fails to track AUC.
//!
//! These use labels by design and never feed back into training.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::{auc_converged, loss_gap, MetricCurves, AUC_CONVERGENCE_SPAN};
use crate::models::OdModel;
use crate::nn::Matrix;

/// Below this norm the mean gradient has no usable direction.
const MIN_MEAN_GRAD_NORM: f64 = 1e-12;

/// Pseudo inliers per labeled outlier: `|{inlier v : v > mean outlier loss}| / n_out`.
pub fn pseudo_inlier_ratio(losses: &[f64], labels: &[bool]) -> Result<f64> {
    let n_out = labels.iter().filter(|&&l| l).count();
    if n_out == 0 {
        return Err(Error::Undefined(
            "pseudo-inlier ratio undefined: no labeled outliers".into(),
        ));
    }
    if n_out == labels.len() {
        return Ok(0.0);
    }
    let outlier_mean = loss_gap(losses, labels)?.outlier_mean;
    let pseudo = losses
        .iter()
        .zip(labels)
        .filter(|(&v, &l)| !l && v > outlier_mean)
        .count();
    Ok(pseudo as f64 / n_out as f64)
}

/// Projection of each sample gradient onto the mean gradient direction,
/// `<g_i, ḡ> / |ḡ|`.
pub fn alignment_from_gradients(grads: &[Vec<f64>]) -> Result<Vec<f64>> {
    let Some(first) = grads.first() else {
        return Err(Error::InvalidParameter("no per-sample gradients".into()));
    };
    let p = first.len();
    if grads.iter().any(|g| g.len() != p) {
        return Err(Error::Shape("per-sample gradients differ in length".into()));
    }
    let b = grads.len() as f64;
    let mut mean = vec![0.0; p];
    for g in grads {
        for (m, v) in mean.iter_mut().zip(g) {
            *m += v;
        }
    }
    mean.iter_mut().for_each(|m| *m /= b);
    let norm = mean.iter().map(|v| v * v).sum::<f64>().sqrt();
    if norm.is_nan() || norm < MIN_MEAN_GRAD_NORM {
        return Err(Error::Undefined(format!(
            "degenerate mean gradient (norm {norm:e})"
        )));
    }
    Ok(grads
        .iter()
        .map(|g| g.iter().zip(&mean).map(|(a, m)| a * m).sum::<f64>() / norm)
        .collect())
}

/// Per-sample loss reduction along the mean gradient for every row of `batch`.
/// Each row gets its own backward pass.
pub fn gradient_alignment(model: &OdModel, batch: &Matrix) -> Result<Vec<f64>> {
    if batch.rows() == 0 {
        return Err(Error::InvalidParameter("empty batch".into()));
    }
    let grads = (0..batch.rows())
        .map(|i| {
            let row = batch.select_rows(&[i]);
            Ok(model.gradient(&row)?.gradients.flatten())
        })
        .collect::<Result<Vec<_>>>()?;
    alignment_from_gradients(&grads)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticThresholds {
    /// Final R_pi at or above this counts as "high".
    pub r_pi_high: f64,
    /// Outlier ratio plus pseudo-inlier mass at or above this share of the data.
    pub combined_mass: f64,
    /// AUC span (max - min) at or below this counts as converged.
    pub auc_span: f64,
}

impl Default for DiagnosticThresholds {
    fn default() -> Self {
        DiagnosticThresholds {
            r_pi_high: 1.0,
            combined_mass: 0.5,
            auc_span: AUC_CONVERGENCE_SPAN,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticReport {
    /// R_pi at the last logged iteration.
    pub r_pi: f64,
    pub r_pi_curve: Vec<f64>,
    /// True when R_pi did not drop over the second half of the run.
    pub r_pi_not_decreasing: bool,
    /// `α · (1 + R_pi)`: labeled outliers plus pseudo inliers as a share of the data.
    pub combined_mass: f64,
    pub label_misleading: bool,
    pub auc_span: f64,
    pub auc_converged: bool,
    /// Largest |mean loss − weighted class means| over the logged iterations.
    pub decomposition_residual: f64,
    pub thresholds: DiagnosticThresholds,
}

impl DiagnosticReport {
    pub fn verdict(&self) -> &'static str {
        match (self.label_misleading, self.auc_converged) {
            (true, true) => "label_misleading+auc_convergence",
            (true, false) => "label_misleading",
            (false, true) => "auc_convergence",
            (false, false) => "healthy",
        }
    }
}

/// Sort a labeled run into the two known failure categories.
///
/// Label misleading fires when R_pi ends high without having dropped over the
/// second half of the run, or when outliers plus pseudo inliers make up at
/// least `combined_mass` of the data.
pub fn classify_run(
    curves: &MetricCurves,
    outlier_ratio: f64,
    thresholds: &DiagnosticThresholds,
) -> Result<DiagnosticReport> {
    curves.check_aligned()?;
    let labeled = curves
        .labeled
        .as_ref()
        .ok_or_else(|| Error::Usage("diagnostics require labels".into()))?;
    if labeled.is_empty() {
        return Err(Error::InvalidParameter("empty curves".into()));
    }
    if !(outlier_ratio > 0.0 && outlier_ratio < 1.0) {
        return Err(Error::InvalidParameter(format!(
            "outlier ratio must lie in (0, 1), got {outlier_ratio}"
        )));
    }
    let r_pi_curve = labeled.r_pi.clone();
    let r_pi = *r_pi_curve.last().expect("non-empty");
    let mid = (r_pi_curve.len() - 1) / 2;
    let r_pi_not_decreasing = r_pi >= r_pi_curve[mid];
    let combined_mass = outlier_ratio * (1.0 + r_pi);
    let label_misleading = (r_pi >= thresholds.r_pi_high && r_pi_not_decreasing)
        || combined_mass >= thresholds.combined_mass;

    let max = labeled.auc.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let min = labeled.auc.iter().copied().fold(f64::INFINITY, f64::min);
    let converged = auc_converged(&labeled.auc, thresholds.auc_span)?;

    let decomposition_residual = curves
        .mean_loss
        .iter()
        .zip(&labeled.inlier_loss)
        .zip(&labeled.outlier_loss)
        .map(|((m, li), lo)| (m - outlier_ratio * lo - (1.0 - outlier_ratio) * li).abs())
        .fold(0.0, f64::max);

    let report = DiagnosticReport {
        r_pi,
        r_pi_curve,
        r_pi_not_decreasing,
        combined_mass,
        label_misleading,
        auc_span: max - min,
        auc_converged: converged,
        decomposition_residual,
        thresholds: *thresholds,
    };
    if ![report.r_pi, report.combined_mass, report.auc_span, report.decomposition_residual]
        .iter()
        .all(|v| v.is_finite())
    {
        return Err(Error::numeric(None, "diagnostic values are not finite"));
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::LabeledCurves;

    fn labels(v: &[u8]) -> Vec<bool> {
        v.iter().map(|&x| x == 1).collect()
    }

    fn curves(auc: Vec<f64>, r_pi: Vec<f64>) -> MetricCurves {
        let n = auc.len();
        MetricCurves {
            mean_loss: vec![1.0; n],
            entropy: vec![1.0; n],
            labeled: Some(LabeledCurves {
                auc,
                ap: vec![0.5; n],
                inlier_loss: vec![1.0; n],
                outlier_loss: vec![1.0; n],
                l_gap: vec![0.0; n],
                r_pi,
            }),
        }
    }

    #[test]
    fn pseudo_inlier_examples() {
        let r = pseudo_inlier_ratio(&[0.1, 0.2, 5.0, 1.0, 3.0], &labels(&[0, 0, 0, 1, 1])).unwrap();
        assert_eq!(r, 0.5);
        let r = pseudo_inlier_ratio(&[0.1, 0.2, 0.3, 1.0, 3.0], &labels(&[0, 0, 0, 1, 1])).unwrap();
        assert_eq!(r, 0.0);
        // equal to the outlier mean is not counted
        let r = pseudo_inlier_ratio(&[2.0, 1.0, 3.0], &labels(&[0, 1, 1])).unwrap();
        assert_eq!(r, 0.0);
        assert!(pseudo_inlier_ratio(&[1.0, 2.0], &labels(&[0, 0])).is_err());
    }

    #[test]
    fn alignment_examples() {
        let single = alignment_from_gradients(&[vec![3.0, 4.0]]).unwrap();
        assert!((single[0] - 5.0).abs() < 1e-15);

        assert!(matches!(
            alignment_from_gradients(&[vec![1.0, -2.0], vec![-1.0, 2.0]]),
            Err(Error::Undefined(_))
        ));

        let d = alignment_from_gradients(&[vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap();
        let expected = 0.5 / 0.5f64.sqrt();
        assert!((d[0] - expected).abs() < 1e-15 && (d[1] - expected).abs() < 1e-15);
        assert!((expected - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-15);
    }

    #[test]
    fn model_alignment_single_sample_is_gradient_norm() {
        let m = OdModel::new_autoencoder(3, 4, 2).unwrap();
        let x = Matrix::from_rows(&[[0.5, -1.0, 2.0]]).unwrap();
        let g = m.gradient(&x).unwrap().gradients.flatten();
        let norm = g.iter().map(|v| v * v).sum::<f64>().sqrt();
        let d = gradient_alignment(&m, &x).unwrap();
        assert!((d[0] - norm).abs() < 1e-12 * norm.max(1.0));
    }

    #[test]
    fn flat_auc_is_converged_not_misleading() {
        let c = curves(vec![0.80, 0.81, 0.82, 0.81], vec![0.1, 0.1, 0.05, 0.0]);
        let r = classify_run(&c, 0.05, &DiagnosticThresholds::default()).unwrap();
        assert!(r.auc_converged);
        assert!(!r.label_misleading);
        assert_eq!(r.verdict(), "auc_convergence");
    }

    #[test]
    fn large_contamination_is_misleading() {
        // α = 0.34 and R_pi = 1 put 68% of the data above the outlier mean
        let c = curves(vec![0.5, 0.6, 0.7], vec![1.2, 1.1, 1.0]);
        let r = classify_run(&c, 0.34, &DiagnosticThresholds::default()).unwrap();
        assert!((r.combined_mass - 0.68).abs() < 1e-12);
        assert!(r.label_misleading);
    }

    #[test]
    fn rising_r_pi_is_misleading() {
        let rising: Vec<f64> = (0..=28).map(|i| 0.2 + 0.1 * i as f64).collect();
        let auc: Vec<f64> = (0..=28).map(|i| 0.9 - 0.01 * i as f64).collect();
        let r = classify_run(&curves(auc, rising), 0.05, &DiagnosticThresholds::default()).unwrap();
        assert!((r.r_pi - 3.0).abs() < 1e-12);
        assert!(r.r_pi_not_decreasing);
        assert!(r.label_misleading);
        assert!(!r.auc_converged);
        assert_eq!(r.verdict(), "label_misleading");
    }

    #[test]
    fn healthy_run() {
        let c = curves(vec![0.6, 0.7, 0.8, 0.85], vec![0.5, 0.3, 0.2, 0.1]);
        let r = classify_run(&c, 0.05, &DiagnosticThresholds::default()).unwrap();
        assert!(!r.label_misleading && !r.auc_converged);
        assert_eq!(r.verdict(), "healthy");
    }

    #[test]
    fn unlabeled_curves_are_rejected() {
        let c = MetricCurves {
            mean_loss: vec![1.0],
            entropy: vec![1.0],
            labeled: None,
        };
        assert!(matches!(
            classify_run(&c, 0.1, &DiagnosticThresholds::default()),
            Err(Error::Usage(_))
        ));
    }

    #[test]
    fn misaligned_curves_are_rejected() {
        let mut c = curves(vec![0.5, 0.6], vec![0.1, 0.1]);
        c.entropy.push(0.3);
        assert!(classify_run(&c, 0.1, &DiagnosticThresholds::default()).is_err());
    }
}
