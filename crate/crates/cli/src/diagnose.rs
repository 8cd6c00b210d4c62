use std::path::{Path, PathBuf};

use entropystop::data::{gen_synthetic, write_csv};
use entropystop::diagnostics::{classify_run, DiagnosticReport, DiagnosticThresholds};

use crate::config::SyntheticSpec;
use crate::error::{HarnessError, HarnessResult};
use crate::report::{ensure_dir, read_json, write_json, TrainingReport};

/// Re-run the failure-mode classification on a saved training report.
pub fn diagnose(report: &TrainingReport, thresholds: &DiagnosticThresholds) -> HarnessResult<DiagnosticReport> {
    let alpha = match (&report.curves.labeled, report.dataset.outlier_ratio) {
        (Some(_), Some(alpha)) => alpha,
        _ => return Err(entropystop::Error::Usage("diagnostics require labels".into()).into()),
    };
    Ok(classify_run(&report.curves, alpha, thresholds)?)
}

/// Read `report`, classify it, and write `diagnose.json` into `out` if given.
pub fn cmd_diagnose(
    report: &Path,
    thresholds: &DiagnosticThresholds,
    out: Option<&Path>,
) -> HarnessResult<DiagnosticReport> {
    let parsed: TrainingReport = read_json(report)?;
    let diag = diagnose(&parsed, thresholds)?;
    if let Some(dir) = out {
        ensure_dir(dir)?;
        write_json(&dir.join("diagnose.json"), &diag)?;
    }
    Ok(diag)
}

/// Write a labeled synthetic dataset to `path`.
pub fn cmd_gen(spec: &SyntheticSpec, seed: u64, path: &PathBuf) -> HarnessResult<()> {
    let ds = gen_synthetic(spec.n_in, spec.n_out, spec.d, spec.spread, seed)
        .map_err(|e| HarnessError::Config(e.to_string()))?;
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        ensure_dir(dir)?;
    }
    write_csv(&ds, path)?;
    Ok(())
}
