use std::fmt::Write as _;
use std::path::Path;

use entropystop::data::Dataset;
use entropystop::diagnostics::DiagnosticThresholds;
use entropystop::metrics::auc_converged;
use entropystop::models::OdModel;
use entropystop::stop::{run_fixed, TrainSettings};
use serde::{Deserialize, Serialize};

use crate::config::{DataSource, TrainConfig};
use crate::error::{HarnessError, HarnessResult};
use crate::parallel::par_map;
use crate::report::{ensure_dir, write_json, write_text, Correlation, SCHEMA_VERSION};
use crate::train::{correlate_curves, CurveLogger};

/// Full-batch iterations used when `--iters` is not given.
pub const CORRELATE_ITERS: usize = 500;

pub const HISTOGRAM_BINS: usize = 10;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CorrelationRow {
    pub dataset: String,
    pub pearson_r: Correlation,
    pub auc_span: f64,
    pub auc_converged: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct HistogramBin {
    pub lo: f64,
    pub hi: f64,
    pub count: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CorrelationTable {
    pub schema_version: u32,
    pub config: TrainConfig,
    pub iters: usize,
    /// Ascending by r; rows without a value come last.
    pub rows: Vec<CorrelationRow>,
    /// Counts of defined r values over equal-width bins of [-1, 1].
    pub histogram: Vec<HistogramBin>,
    pub undefined: usize,
}

pub fn correlation_row(dataset: &str, auc_curve: &[f64], entropy: &[f64]) -> HarnessResult<CorrelationRow> {
    let min = auc_curve.iter().copied().fold(f64::INFINITY, f64::min);
    let max = auc_curve.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    Ok(CorrelationRow {
        dataset: dataset.to_string(),
        pearson_r: correlate_curves(auc_curve, entropy),
        auc_span: max - min,
        auc_converged: auc_converged(auc_curve, DiagnosticThresholds::default().auc_span)?,
    })
}

pub fn histogram(values: &[f64], bins: usize) -> Vec<HistogramBin> {
    let width = 2.0 / bins as f64;
    let mut out: Vec<_> = (0..bins)
        .map(|b| HistogramBin { lo: -1.0 + b as f64 * width, hi: -1.0 + (b + 1) as f64 * width, count: 0 })
        .collect();
    for &v in values {
        let b = (((v + 1.0) / width).floor() as usize).min(bins - 1);
        out[b].count += 1;
    }
    out
}

pub fn correlation_table(config: &TrainConfig, iters: usize, mut rows: Vec<CorrelationRow>) -> CorrelationTable {
    rows.sort_by(|a, b| match (a.pearson_r.value(), b.pearson_r.value()) {
        (Some(x), Some(y)) => x.total_cmp(&y).then_with(|| a.dataset.cmp(&b.dataset)),
        (Some(_), None) => std::cmp::Ordering::Less,
        (None, Some(_)) => std::cmp::Ordering::Greater,
        (None, None) => a.dataset.cmp(&b.dataset),
    });
    let values: Vec<f64> = rows.iter().filter_map(|r| r.pearson_r.value()).collect();
    CorrelationTable {
        schema_version: SCHEMA_VERSION,
        config: config.clone(),
        iters,
        undefined: rows.len() - values.len(),
        histogram: histogram(&values, HISTOGRAM_BINS),
        rows,
    }
}

pub fn correlate_iters(config: &TrainConfig) -> usize {
    config.iters.unwrap_or(CORRELATE_ITERS)
}

/// Full-batch training for the correlation budget, logging AUC against entropy.
pub fn correlate_dataset(config: &TrainConfig, dataset: &Dataset) -> HarnessResult<CorrelationRow> {
    if dataset.labels().is_none() {
        return Err(HarnessError::Config(format!("correlate requires labels, {} has none", dataset.name)));
    }
    let iters = correlate_iters(config);
    let eval = config.eval_set(dataset)?;
    let train = TrainSettings { lr: config.lr, batch_size: dataset.len(), seed: config.seed };
    let mut model = config.build_model(dataset)?;
    let mut logger = CurveLogger::new(dataset);
    let run = run_fixed(&mut model, dataset.features(), Some(&eval), &train, iters, &mut |_, m: &OdModel| {
        logger.record(m)
    })?;
    let curves = logger.finish(run.entropy.expect("eval set given"));
    let labeled = curves.labeled.as_ref().expect("labels checked");
    correlation_row(&dataset.name, &labeled.auc, &curves.entropy)
}

pub fn correlate(config: &TrainConfig, sources: &[DataSource], jobs: usize) -> HarnessResult<CorrelationTable> {
    config.validate()?;
    if sources.is_empty() {
        return Err(HarnessError::Config("correlate needs at least one dataset".into()));
    }
    let rows = par_map(jobs, sources, |src| correlate_dataset(config, &config.load_source(src)?))?;
    Ok(correlation_table(config, correlate_iters(config), rows))
}

pub fn correlation_csv(table: &CorrelationTable) -> String {
    let mut out = String::from("dataset,pearson_r,auc_span,auc_converged\n");
    for r in &table.rows {
        writeln!(out, "{},{},{},{}", r.dataset, r.pearson_r, r.auc_span, r.auc_converged).expect("write to String");
    }
    out
}

/// Run the correlation study and write `correlate.json` and `correlate.csv`.
pub fn cmd_correlate(
    config: &TrainConfig,
    sources: &[DataSource],
    jobs: usize,
    out: &Path,
) -> HarnessResult<CorrelationTable> {
    let table = correlate(config, sources, jobs)?;
    ensure_dir(out)?;
    write_json(&out.join("correlate.json"), &table)?;
    write_text(&out.join("correlate.csv"), &correlation_csv(&table))?;
    Ok(table)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bins_cover_closed_interval() {
        let h = histogram(&[-1.0, -0.95, 0.0, 0.99, 1.0], 10);
        assert_eq!(h.len(), 10);
        assert_eq!(h[0].count, 2);
        assert_eq!(h[5].count, 1);
        assert_eq!(h[9].count, 2);
        assert!((h[9].hi - 1.0).abs() < 1e-12);
    }

    #[test]
    fn table_sorted_with_undefined_last() {
        let rows = vec![
            CorrelationRow { dataset: "flat".into(), pearson_r: Correlation::Undefined("converged".into()), auc_span: 0.0, auc_converged: true },
            CorrelationRow { dataset: "b".into(), pearson_r: Correlation::Defined(0.3), auc_span: 0.2, auc_converged: false },
            CorrelationRow { dataset: "a".into(), pearson_r: Correlation::Defined(-0.8), auc_span: 0.2, auc_converged: false },
        ];
        let t = correlation_table(&TrainConfig::default(), 500, rows);
        let names: Vec<_> = t.rows.iter().map(|r| r.dataset.as_str()).collect();
        assert_eq!(names, ["a", "b", "flat"]);
        assert_eq!(t.undefined, 1);
        assert_eq!(t.histogram.iter().map(|b| b.count).sum::<usize>(), 2);
    }

    #[test]
    fn flat_auc_is_undefined() {
        let r = correlation_row("x", &[0.7; 5], &[1.0, 0.9, 0.8, 0.7, 0.6]).unwrap();
        assert_eq!(r.pearson_r, Correlation::Undefined("converged".into()));
        assert!(r.auc_converged);
        assert_eq!(r.pearson_r.to_string(), "undefined(converged)");
    }
}
