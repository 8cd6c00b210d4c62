use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use entropystop::diagnostics::DiagnosticReport;
use entropystop::metrics::MetricCurves;
use entropystop::stop::Timings;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::config::TrainConfig;
use crate::error::{HarnessError, HarnessResult};

pub const SCHEMA_VERSION: u32 = 1;

pub const CURVES_HEADER: &str = "iter,mean_loss,entropy,auc,ap,l_gap,r_pi";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetInfo {
    pub name: String,
    pub rows: usize,
    pub dim: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub outlier_ratio: Option<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct IterMetrics {
    pub iter: usize,
    pub auc: f64,
    pub ap: f64,
    /// Inlier/outlier pairs with equal scores; they count zero towards AUC.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cross_class_ties: Option<u64>,
}

/// Full-horizon run without a stopping rule, for reference.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BaselineSummary {
    pub iters: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub metrics: Option<IterMetrics>,
    pub timings: Timings,
}

/// Pearson r between the AUC and entropy curves, or why it has no value.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Correlation {
    Defined(f64),
    Undefined(String),
}

impl std::fmt::Display for Correlation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Correlation::Defined(r) => write!(f, "{r}"),
            Correlation::Undefined(why) => write!(f, "undefined({why})"),
        }
    }
}

impl Correlation {
    pub fn value(&self) -> Option<f64> {
        match self {
            Correlation::Defined(r) => Some(*r),
            Correlation::Undefined(_) => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainingReport {
    pub schema_version: u32,
    pub config: TrainConfig,
    pub t_max: usize,
    pub dataset: DatasetInfo,
    pub stop_iter: usize,
    pub best_iter: usize,
    pub halted: bool,
    pub accepted: Vec<usize>,
    /// Metrics of the restored model, i.e. at `best_iter`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub selected: Option<IterMetrics>,
    /// Metrics at the last trained iteration.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub last: Option<IterMetrics>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub baseline: Option<BaselineSummary>,
    pub timings: Timings,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pearson_r: Option<Correlation>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub diagnostics: Option<DiagnosticReport>,
    pub curves: MetricCurves,
}

fn cell(out: &mut String, v: Option<f64>) {
    out.push(',');
    if let Some(v) = v {
        write!(out, "{v}").expect("write to String");
    }
}

/// Render curves as CSV, one row per logged iteration.
pub fn curves_csv(curves: &MetricCurves) -> String {
    let mut out = String::with_capacity(64 * (curves.len() + 1));
    out.push_str(CURVES_HEADER);
    out.push('\n');
    for (j, (loss, entropy)) in curves.mean_loss.iter().zip(&curves.entropy).enumerate() {
        write!(out, "{j},{loss},{entropy}").expect("write to String");
        let l = curves.labeled.as_ref();
        cell(&mut out, l.map(|l| l.auc[j]));
        cell(&mut out, l.map(|l| l.ap[j]));
        cell(&mut out, l.map(|l| l.l_gap[j]));
        cell(&mut out, l.map(|l| l.r_pi[j]));
        out.push('\n');
    }
    out
}

pub fn scores_csv(scores: &[f64]) -> String {
    let mut out = String::from("index,score\n");
    for (i, s) in scores.iter().enumerate() {
        writeln!(out, "{i},{s}").expect("write to String");
    }
    out
}

pub fn write_text(path: &Path, text: &str) -> HarnessResult<()> {
    fs::write(path, text).map_err(|e| HarnessError::io(path, e))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> HarnessResult<()> {
    let mut text = serde_json::to_string_pretty(value)
        .map_err(|source| HarnessError::Json { path: path.into(), source })?;
    text.push('\n');
    write_text(path, &text)
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> HarnessResult<T> {
    let text = fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
    serde_json::from_str(&text).map_err(|source| HarnessError::Json { path: path.into(), source })
}

pub fn ensure_dir(dir: &Path) -> HarnessResult<()> {
    fs::create_dir_all(dir).map_err(|e| HarnessError::io(dir, e))
}
