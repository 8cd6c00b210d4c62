use std::fmt::Write as _;
use std::path::Path;

use entropystop::data::Dataset;
use entropystop::models::OdModel;
use entropystop::stop::{run_fixed, run_with_stop, Timings};
use entropystop::metrics::DetectionMetrics;
use serde::{Deserialize, Serialize};

use crate::config::{DataSource, TrainConfig};
use crate::error::{HarnessError, HarnessResult};
use crate::parallel::par_map;
use crate::report::{ensure_dir, write_json, write_text, SCHEMA_VERSION};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MethodResult {
    pub auc: f64,
    pub ap: f64,
    /// Wall-clock seconds of the whole run, final scoring included.
    pub secs: f64,
    pub timings: Timings,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CompareRow {
    pub dataset: String,
    pub rows: usize,
    pub t_max: usize,
    pub vanilla: MethodResult,
    pub entropy: MethodResult,
    pub stop_iter: usize,
    pub best_iter: usize,
    /// Entropy run time over vanilla run time.
    pub time_ratio: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MethodSummary {
    pub mean_auc: f64,
    pub mean_ap: f64,
    pub mean_rank_auc: f64,
    pub mean_rank_ap: f64,
    /// Mean over datasets of time(method) / time(vanilla).
    pub average_train_time: f64,
    /// Total time(method) over total time(vanilla).
    pub total_train_time: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ComparisonTable {
    pub schema_version: u32,
    pub config: TrainConfig,
    pub rows: Vec<CompareRow>,
    pub vanilla: MethodSummary,
    pub entropy: MethodSummary,
}

/// Mean of per-dataset `(method, vanilla)` time ratios.
pub fn average_train_time(times: &[(f64, f64)]) -> f64 {
    times.iter().map(|(m, v)| m / v).sum::<f64>() / times.len() as f64
}

/// Ratio of summed method time to summed vanilla time.
pub fn total_train_time(times: &[(f64, f64)]) -> f64 {
    let m: f64 = times.iter().map(|t| t.0).sum();
    let v: f64 = times.iter().map(|t| t.1).sum();
    m / v
}

/// Ranks of two methods on one dataset, 1 = higher value, ties share 1.5.
fn ranks(a: f64, b: f64) -> (f64, f64) {
    if a > b {
        (1.0, 2.0)
    } else if b > a {
        (2.0, 1.0)
    } else {
        (1.5, 1.5)
    }
}

fn mean(xs: impl Iterator<Item = f64>) -> f64 {
    let (sum, n) = xs.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    sum / n as f64
}

/// Per-method means, mean ranks and time metrics over `rows`.
pub fn summarize(rows: &[CompareRow]) -> (MethodSummary, MethodSummary) {
    let auc_ranks: Vec<_> = rows.iter().map(|r| ranks(r.vanilla.auc, r.entropy.auc)).collect();
    let ap_ranks: Vec<_> = rows.iter().map(|r| ranks(r.vanilla.ap, r.entropy.ap)).collect();
    let own: Vec<_> = rows.iter().map(|r| (r.vanilla.secs, r.vanilla.secs)).collect();
    let rel: Vec<_> = rows.iter().map(|r| (r.entropy.secs, r.vanilla.secs)).collect();
    let vanilla = MethodSummary {
        mean_auc: mean(rows.iter().map(|r| r.vanilla.auc)),
        mean_ap: mean(rows.iter().map(|r| r.vanilla.ap)),
        mean_rank_auc: mean(auc_ranks.iter().map(|r| r.0)),
        mean_rank_ap: mean(ap_ranks.iter().map(|r| r.0)),
        average_train_time: average_train_time(&own),
        total_train_time: total_train_time(&own),
    };
    let entropy = MethodSummary {
        mean_auc: mean(rows.iter().map(|r| r.entropy.auc)),
        mean_ap: mean(rows.iter().map(|r| r.entropy.ap)),
        mean_rank_auc: mean(auc_ranks.iter().map(|r| r.1)),
        mean_rank_ap: mean(ap_ranks.iter().map(|r| r.1)),
        average_train_time: average_train_time(&rel),
        total_train_time: total_train_time(&rel),
    };
    (vanilla, entropy)
}

/// Vanilla (full budget) and entropy-stopped runs on one dataset, same seed,
/// batch size and iteration budget.
pub fn compare_dataset(config: &TrainConfig, dataset: &Dataset) -> HarnessResult<CompareRow> {
    let labels = dataset.labels().ok_or_else(|| {
        HarnessError::Config(format!("compare requires labels, {} has none", dataset.name))
    })?;
    let stop = config.stop_config(dataset.len());
    let train = config.train_settings();

    let mut model = config.build_model(dataset)?;
    let fixed = run_fixed(&mut model, dataset.features(), None, &train, stop.t_max, &mut |_, _: &OdModel| Ok(()))?;
    let v = DetectionMetrics::compute(&fixed.scores, labels)?;

    let eval = config.eval_set(dataset)?;
    let mut model = config.build_model(dataset)?;
    let run = run_with_stop(&mut model, dataset.features(), &eval, &train, &stop, &mut |_, _: &OdModel| Ok(()))?;
    let e = DetectionMetrics::compute(&run.scores, labels)?;

    let vanilla = MethodResult { auc: v.auc, ap: v.ap, secs: fixed.timings.total_secs, timings: fixed.timings };
    let entropy = MethodResult { auc: e.auc, ap: e.ap, secs: run.timings.total_secs, timings: run.timings };
    Ok(CompareRow {
        dataset: dataset.name.clone(),
        rows: dataset.len(),
        t_max: stop.t_max,
        time_ratio: entropy.secs / vanilla.secs,
        vanilla,
        entropy,
        stop_iter: run.stop_iter,
        best_iter: run.best_iter,
    })
}

pub fn compare(config: &TrainConfig, sources: &[DataSource], jobs: usize) -> HarnessResult<ComparisonTable> {
    config.validate()?;
    if sources.is_empty() {
        return Err(HarnessError::Config("compare needs at least one dataset".into()));
    }
    let mut rows = par_map(jobs, sources, |src| compare_dataset(config, &config.load_source(src)?))?;
    rows.sort_by(|a, b| a.dataset.cmp(&b.dataset));
    let (vanilla, entropy) = summarize(&rows);
    Ok(ComparisonTable { schema_version: SCHEMA_VERSION, config: config.clone(), rows, vanilla, entropy })
}

pub fn comparison_csv(table: &ComparisonTable) -> String {
    let mut out = String::from(
        "dataset,rows,t_max,vanilla_auc,vanilla_ap,vanilla_secs,entropy_auc,entropy_ap,entropy_secs,stop_iter,best_iter,time_ratio\n",
    );
    for r in &table.rows {
        writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{},{},{}",
            r.dataset, r.rows, r.t_max, r.vanilla.auc, r.vanilla.ap, r.vanilla.secs,
            r.entropy.auc, r.entropy.ap, r.entropy.secs, r.stop_iter, r.best_iter, r.time_ratio
        )
        .expect("write to String");
    }
    out
}

/// Run the comparison and write `compare.json` and `compare.csv` into `out`.
pub fn cmd_compare(
    config: &TrainConfig,
    sources: &[DataSource],
    jobs: usize,
    out: &Path,
) -> HarnessResult<ComparisonTable> {
    let table = compare(config, sources, jobs)?;
    ensure_dir(out)?;
    write_json(&out.join("compare.json"), &table)?;
    write_text(&out.join("compare.csv"), &comparison_csv(&table))?;
    Ok(table)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(name: &str, v: (f64, f64, f64), e: (f64, f64, f64)) -> CompareRow {
        let m = |(auc, ap, secs)| MethodResult { auc, ap, secs, timings: Timings::default() };
        CompareRow {
            dataset: name.into(),
            rows: 10,
            t_max: 5,
            vanilla: m(v),
            entropy: m(e),
            stop_iter: 3,
            best_iter: 1,
            time_ratio: e.2 / v.2,
        }
    }

    #[test]
    fn average_of_ratios() {
        assert!((average_train_time(&[(1.0, 10.0), (2.0, 10.0)]) - 0.15).abs() < 1e-15);
        assert!((total_train_time(&[(1.0, 10.0), (2.0, 10.0)]) - 0.15).abs() < 1e-15);
        // The two differ once dataset times differ.
        assert!((average_train_time(&[(1.0, 10.0), (20.0, 100.0)]) - 0.15).abs() < 1e-15);
        assert!((total_train_time(&[(1.0, 10.0), (20.0, 100.0)]) - 21.0 / 110.0).abs() < 1e-15);
    }

    #[test]
    fn summary_ranks_and_means() {
        let rows = [row("a", (0.8, 0.3, 2.0), (0.9, 0.3, 0.2)), row("b", (0.7, 0.5, 4.0), (0.6, 0.4, 0.8))];
        let (v, e) = summarize(&rows);
        assert_eq!(v.average_train_time, 1.0);
        assert_eq!(v.total_train_time, 1.0);
        assert!((e.average_train_time - 0.15).abs() < 1e-15);
        assert!((e.total_train_time - 1.0 / 6.0).abs() < 1e-15);
        assert!((e.mean_auc - 0.75).abs() < 1e-15);
        assert_eq!((v.mean_rank_auc, e.mean_rank_auc), (1.5, 1.5));
        assert_eq!((v.mean_rank_ap, e.mean_rank_ap), (1.25, 1.75));
    }

    #[test]
    fn empty_list_is_config_error() {
        let err = compare(&TrainConfig::default(), &[], 1).unwrap_err();
        assert_eq!(err.exit_code(), 1);
    }
}
