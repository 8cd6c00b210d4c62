//! Experiment runner for entropy-based early stopping: single training runs,
//! vanilla-vs-stopped comparisons, AUC/entropy correlation studies and
//! post-hoc failure diagnostics, all emitting JSON reports and CSV curves.

pub mod compare;
pub mod config;
pub mod correlate;
pub mod diagnose;
pub mod error;
pub mod parallel;
pub mod report;
pub mod train;

use std::path::PathBuf;

pub use config::{DataSource, ModelChoice, SyntheticSpec, TrainConfig};
pub use error::{HarnessError, HarnessResult};

/// Turn `--data` arguments into sources. Directories contribute every `.csv`
/// file they contain, in name order.
pub fn expand_sources(paths: &[PathBuf]) -> HarnessResult<Vec<DataSource>> {
    let mut out = Vec::new();
    for p in paths {
        if p.is_dir() {
            let mut files: Vec<PathBuf> = std::fs::read_dir(p)
                .map_err(|e| HarnessError::io(p, e))?
                .filter_map(|entry| entry.ok().map(|e| e.path()))
                .filter(|f| f.extension().is_some_and(|x| x.eq_ignore_ascii_case("csv")))
                .collect();
            files.sort();
            if files.is_empty() {
                return Err(HarnessError::Config(format!("{} contains no .csv files", p.display())));
            }
            out.extend(files.into_iter().map(|path| DataSource::Csv { path }));
        } else {
            out.push(DataSource::Csv { path: p.clone() });
        }
    }
    Ok(out)
}
