use std::path::Path;

use entropystop::data::Dataset;
use entropystop::diagnostics::{classify_run, pseudo_inlier_ratio, DiagnosticThresholds};
use entropystop::metrics::{
    auc, average_precision, cross_class_ties, loss_gap, pearson, LabeledCurves,
    LossVector, MetricCurves,
};
use entropystop::models::{Detector, OdModel};
use entropystop::nn::Matrix;
use entropystop::stop::{run_fixed, run_with_stop};

use crate::config::TrainConfig;
use crate::error::HarnessResult;
use crate::report::{
    curves_csv, ensure_dir, scores_csv, write_json, write_text, BaselineSummary, Correlation,
    DatasetInfo, IterMetrics, TrainingReport, SCHEMA_VERSION,
};

/// Logs full-data metrics after every iteration. Labels only ever reach this
/// logger, never the optimizer or the stopping rule.
pub struct CurveLogger<'a> {
    features: &'a Matrix,
    labels: Option<&'a [bool]>,
    mean_loss: Vec<f64>,
    labeled: Option<LabeledCurves>,
}

impl<'a> CurveLogger<'a> {
    pub fn new(dataset: &'a Dataset) -> Self {
        CurveLogger {
            features: dataset.features(),
            labels: dataset.labels(),
            mean_loss: Vec::new(),
            labeled: dataset.labels().map(|_| LabeledCurves::default()),
        }
    }

    pub fn record<M: Detector>(&mut self, model: &M) -> entropystop::Result<()> {
        let scores = model.score(self.features)?;
        self.mean_loss.push(scores.mean());
        if let (Some(labels), Some(c)) = (self.labels, self.labeled.as_mut()) {
            let gap = loss_gap(&scores, labels)?;
            c.auc.push(auc(&scores, labels)?);
            c.ap.push(average_precision(&scores, labels)?);
            c.inlier_loss.push(gap.inlier_mean);
            c.outlier_loss.push(gap.outlier_mean);
            c.l_gap.push(gap.gap);
            c.r_pi.push(pseudo_inlier_ratio(&scores, labels)?);
        }
        Ok(())
    }

    pub fn finish(self, entropy: Vec<f64>) -> MetricCurves {
        MetricCurves { mean_loss: self.mean_loss, entropy, labeled: self.labeled }
    }
}

/// Pearson r of AUC against entropy. A flat AUC curve has no correlation.
pub fn correlate_curves(auc_curve: &[f64], entropy: &[f64]) -> Correlation {
    let min = auc_curve.iter().copied().fold(f64::INFINITY, f64::min);
    let max = auc_curve.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if auc_curve.len() >= 2 && max == min {
        return Correlation::Undefined("converged".into());
    }
    match pearson(auc_curve, entropy) {
        Ok(r) => Correlation::Defined(r),
        Err(e) => Correlation::Undefined(e.to_string()),
    }
}

fn iter_metrics(iter: usize, scores: &[f64], labels: &[bool]) -> HarnessResult<IterMetrics> {
    Ok(IterMetrics {
        iter,
        auc: auc(scores, labels)?,
        ap: average_precision(scores, labels)?,
        cross_class_ties: Some(cross_class_ties(scores, labels)?),
    })
}

pub fn dataset_info(dataset: &Dataset) -> DatasetInfo {
    DatasetInfo {
        name: dataset.name.clone(),
        rows: dataset.len(),
        dim: dataset.dim(),
        outlier_ratio: dataset.outlier_ratio(),
    }
}

#[derive(Clone, Debug)]
pub struct TrainingOutcome {
    pub report: TrainingReport,
    /// Scores of every row under the restored parameters.
    pub scores: LossVector,
}

/// Train with entropy-based stopping on an already loaded dataset.
///
/// With `baseline` set, a second model with the same seed is trained for the
/// full budget without stopping and summarized alongside.
pub fn train(config: &TrainConfig, dataset: &Dataset, baseline: bool) -> HarnessResult<TrainingOutcome> {
    config.validate()?;
    let stop = config.stop_config(dataset.len());
    let eval = config.eval_set(dataset)?;
    let mut model = config.build_model(dataset)?;
    let mut logger = CurveLogger::new(dataset);
    let run = run_with_stop(
        &mut model,
        dataset.features(),
        &eval,
        &config.train_settings(),
        &stop,
        &mut |_, m: &OdModel| logger.record(m),
    )?;
    let curves = logger.finish(run.entropy);
    curves.check_aligned()?;

    let labels = dataset.labels();
    let (selected, last, pearson_r, diagnostics) = match (labels, &curves.labeled) {
        (Some(labels), Some(c)) => {
            let last = IterMetrics {
                iter: run.stop_iter,
                auc: c.auc[run.stop_iter],
                ap: c.ap[run.stop_iter],
                cross_class_ties: None,
            };
            let alpha = dataset.outlier_ratio().expect("labels present");
            (
                Some(iter_metrics(run.best_iter, &run.scores, labels)?),
                Some(last),
                Some(correlate_curves(&c.auc, &curves.entropy)),
                Some(classify_run(&curves, alpha, &DiagnosticThresholds::default())?),
            )
        }
        _ => (None, None, None, None),
    };

    let baseline = if baseline {
        let mut vanilla = config.build_model(dataset)?;
        let fixed = run_fixed(
            &mut vanilla,
            dataset.features(),
            None,
            &config.train_settings(),
            stop.t_max,
            &mut |_, _: &OdModel| Ok(()),
        )?;
        let metrics = match labels {
            Some(labels) => Some(iter_metrics(stop.t_max, &fixed.scores, labels)?),
            None => None,
        };
        Some(BaselineSummary { iters: stop.t_max, metrics, timings: fixed.timings })
    } else {
        None
    };

    let report = TrainingReport {
        schema_version: SCHEMA_VERSION,
        config: config.clone(),
        t_max: stop.t_max,
        dataset: dataset_info(dataset),
        stop_iter: run.stop_iter,
        best_iter: run.best_iter,
        halted: run.halted,
        accepted: run.accepted,
        selected,
        last,
        baseline,
        timings: run.timings,
        pearson_r,
        diagnostics,
        curves,
    };
    Ok(TrainingOutcome { report, scores: run.scores })
}

/// Load the configured data, train, and write `report.json`, `curves.csv`
/// and `scores.csv` into `out`.
pub fn cmd_train(config: &TrainConfig, out: &Path, baseline: bool) -> HarnessResult<TrainingOutcome> {
    config.validate()?;
    let dataset = config.load()?;
    let outcome = train(config, &dataset, baseline)?;
    ensure_dir(out)?;
    write_json(&out.join("report.json"), &outcome.report)?;
    write_text(&out.join("curves.csv"), &curves_csv(&outcome.report.curves))?;
    write_text(&out.join("scores.csv"), &scores_csv(&outcome.scores))?;
    Ok(outcome)
}
