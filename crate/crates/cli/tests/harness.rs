use std::fs;
use std::path::Path;
use std::process::Command;

use entropystop::data::{gen_synthetic, write_csv};
use entropystop::diagnostics::DiagnosticThresholds;
use entropystop::metrics::auc;
use entropystop_harness::compare::{compare, summarize};
use entropystop_harness::correlate::correlation_row;
use entropystop_harness::diagnose::{cmd_diagnose, diagnose};
use entropystop_harness::report::{write_json, Correlation, TrainingReport, CURVES_HEADER};
use entropystop_harness::train::{cmd_train, train};
use entropystop_harness::{DataSource, SyntheticSpec, TrainConfig};

fn small_config(seed: u64) -> TrainConfig {
    TrainConfig {
        iters: Some(400),
        k: 30,
        batch_size: 64,
        hidden: 16,
        n_eval: 128,
        seed,
        data: DataSource::Synthetic(SyntheticSpec { n_in: 190, n_out: 10, d: 2, spread: 6.0 }),
        ..TrainConfig::default()
    }
}

fn unlabeled_csv(dir: &Path) -> std::path::PathBuf {
    let ds = gen_synthetic(95, 5, 3, 6.0, 1).unwrap().without_labels();
    let path = dir.join("plain.csv");
    write_csv(&ds, &path).unwrap();
    path
}

#[test]
fn train_writes_complete_report_and_curves() {
    let dir = tempfile::tempdir().unwrap();
    let out = cmd_train(&small_config(0), dir.path(), true).unwrap();

    let json: serde_json::Value = serde_json::from_str(&fs::read_to_string(dir.path().join("report.json")).unwrap()).unwrap();
    for key in [
        "schema_version", "config", "t_max", "dataset", "stop_iter", "best_iter", "halted", "accepted",
        "selected", "last", "baseline", "timings", "pearson_r", "diagnostics", "curves",
    ] {
        assert!(json.get(key).is_some(), "missing {key}");
    }
    assert_eq!(json["schema_version"], 1);
    assert_eq!(json["config"]["k"], 30);

    let csv = fs::read_to_string(dir.path().join("curves.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], CURVES_HEADER);
    assert_eq!(lines.len(), out.report.stop_iter + 2);
    assert!(lines[1..].iter().all(|l| l.split(',').count() == 7 && !l.contains(",,")));

    let scores = fs::read_to_string(dir.path().join("scores.csv")).unwrap();
    assert_eq!(scores.lines().count(), 201);
}

#[test]
fn rerun_is_byte_identical() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    cmd_train(&small_config(3), a.path(), false).unwrap();
    cmd_train(&small_config(3), b.path(), false).unwrap();
    for f in ["curves.csv", "scores.csv"] {
        assert_eq!(fs::read(a.path().join(f)).unwrap(), fs::read(b.path().join(f)).unwrap(), "{f}");
    }
}

#[test]
fn unlabeled_data_omits_label_fields() {
    let dir = tempfile::tempdir().unwrap();
    let config = TrainConfig { data: DataSource::Csv { path: unlabeled_csv(dir.path()) }, ..small_config(1) };
    let out_dir = dir.path().join("out");
    let out = cmd_train(&config, &out_dir, false).unwrap();
    assert!(out.report.selected.is_none() && out.report.diagnostics.is_none());

    let json: serde_json::Value = serde_json::from_str(&fs::read_to_string(out_dir.join("report.json")).unwrap()).unwrap();
    for key in ["selected", "last", "pearson_r", "diagnostics"] {
        assert!(json.get(key).is_none(), "unexpected {key}");
    }
    assert!(json["curves"].get("labeled").is_none());
    assert!(json["curves"]["entropy"].as_array().unwrap().len() > 1);

    let csv = fs::read_to_string(out_dir.join("curves.csv")).unwrap();
    assert!(csv.lines().skip(1).all(|l| l.ends_with(",,,,")));
}

#[test]
fn selected_metrics_match_curve_at_best_iter() {
    for seed in [0, 4, 7] {
        let config = small_config(seed);
        let ds = config.load().unwrap();
        let out = train(&config, &ds, false).unwrap();
        let r = &out.report;
        let curve_auc = r.curves.labeled.as_ref().unwrap().auc[r.best_iter];
        let recomputed = auc(&out.scores, ds.labels().unwrap()).unwrap();
        assert!((recomputed - curve_auc).abs() < 1e-12, "seed {seed}");
        assert_eq!(r.selected.unwrap().auc, recomputed);
        assert!(r.stop_iter <= r.best_iter + config.k);
    }
}

#[test]
fn timings_add_up() {
    let config = small_config(2);
    let out = train(&config, &config.load().unwrap(), false).unwrap();
    let t = out.report.timings;
    assert!(t.train_secs > 0.0 && t.entropy_secs > 0.0);
    assert!(t.train_secs + t.entropy_secs <= t.total_secs * 1.05);
}

#[test]
fn compare_self_ratio_and_ordering() {
    let sources = vec![
        DataSource::Synthetic(SyntheticSpec { n_in: 95, n_out: 5, d: 3, spread: 6.0 }),
        DataSource::Synthetic(SyntheticSpec { n_in: 190, n_out: 10, d: 2, spread: 6.0 }),
    ];
    let config = TrainConfig { iters: Some(150), k: 20, batch_size: 64, hidden: 8, n_eval: 64, ..TrainConfig::default() };
    let table = compare(&config, &sources, 2).unwrap();
    assert_eq!(table.rows.len(), 2);
    assert_eq!(table.vanilla.average_train_time, 1.0);
    assert_eq!(table.vanilla.total_train_time, 1.0);
    assert_eq!(table.vanilla.mean_rank_auc + table.entropy.mean_rank_auc, 3.0);
    for row in &table.rows {
        assert_eq!(row.t_max, 150);
        assert!(row.stop_iter <= 150);
    }
    // Summaries are a pure function of the rows.
    assert_eq!(summarize(&table.rows), (table.vanilla.clone(), table.entropy.clone()));
}

#[test]
fn compare_rejects_unlabeled_data() {
    let dir = tempfile::tempdir().unwrap();
    let sources = vec![DataSource::Csv { path: unlabeled_csv(dir.path()) }];
    let err = compare(&small_config(0), &sources, 1).unwrap_err();
    assert_eq!(err.exit_code(), 1);
}

#[test]
fn correlation_of_injected_curves() {
    let entropy: Vec<f64> = (0..50).map(|i| 3.0 - 0.01 * i as f64 + 0.001 * ((i * 7) % 5) as f64).collect();
    let auc: Vec<f64> = entropy.iter().map(|e| -e).collect();
    let row = correlation_row("anti", &auc, &entropy).unwrap();
    assert!((row.pearson_r.value().unwrap() + 1.0).abs() < 1e-12);

    let flat = correlation_row("flat", &[0.9; 50], &entropy).unwrap();
    assert_eq!(flat.pearson_r, Correlation::Undefined("converged".into()));
    assert!(flat.auc_converged);
}

fn labeled_report() -> TrainingReport {
    let config = small_config(6);
    train(&config, &config.load().unwrap(), false).unwrap().report
}

#[test]
fn diagnose_verdicts() {
    let thresholds = DiagnosticThresholds::default();
    let mut report = labeled_report();
    let n = report.curves.len();

    {
        let l = report.curves.labeled.as_mut().unwrap();
        l.auc = (0..n).map(|i| 0.5 + 0.3 * i as f64 / n as f64).collect();
        l.r_pi = vec![0.0; n];
    }
    let healthy = diagnose(&report, &thresholds).unwrap();
    assert!(!healthy.label_misleading && !healthy.auc_converged);
    assert_eq!(healthy.verdict(), "healthy");

    report.curves.labeled.as_mut().unwrap().auc = vec![0.8; n];
    assert_eq!(diagnose(&report, &thresholds).unwrap().verdict(), "auc_convergence");

    {
        let l = report.curves.labeled.as_mut().unwrap();
        l.auc = (0..n).map(|i| 0.5 + 0.3 * i as f64 / n as f64).collect();
        l.r_pi = (0..n).map(|i| 0.2 + 2.8 * i as f64 / (n - 1) as f64).collect();
    }
    let d = diagnose(&report, &thresholds).unwrap();
    assert!(d.label_misleading);
    assert_eq!(d.verdict(), "label_misleading");
}

#[test]
fn diagnose_round_trips_through_files() {
    let dir = tempfile::tempdir().unwrap();
    let report = labeled_report();
    let path = dir.path().join("report.json");
    write_json(&path, &report).unwrap();
    let d = cmd_diagnose(&path, &DiagnosticThresholds::default(), Some(dir.path())).unwrap();
    assert_eq!(Some(d), report.diagnostics);
    assert!(dir.path().join("diagnose.json").exists());

    let mut plain = report.clone();
    plain.curves.labeled = None;
    write_json(&path, &plain).unwrap();
    let err = cmd_diagnose(&path, &DiagnosticThresholds::default(), None).unwrap_err();
    assert!(err.to_string().contains("diagnostics require labels"), "{err}");
}

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_entropystop"))
}

#[test]
fn binary_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("syn.csv");
    let out = dir.path().join("run");

    let ok = bin().args(["gen", "--n-in", "95", "--n-out", "5", "--out"]).arg(&data).output().unwrap();
    assert_eq!(ok.status.code(), Some(0));
    let ok = bin()
        .args(["train", "--iters", "50", "--k", "10", "--hidden", "8", "--data"])
        .arg(&data)
        .arg("--out")
        .arg(&out)
        .output()
        .unwrap();
    assert_eq!(ok.status.code(), Some(0), "{}", String::from_utf8_lossy(&ok.stderr));
    assert!(out.join("report.json").exists() && out.join("curves.csv").exists());

    let ok = bin().arg("diagnose").arg("--report").arg(out.join("report.json")).output().unwrap();
    assert_eq!(ok.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&ok.stdout).contains("verdict="));

    assert_eq!(bin().args(["train", "--lr", "0"]).output().unwrap().status.code(), Some(1));
    assert_eq!(bin().args(["train", "--rdown", "1.5"]).output().unwrap().status.code(), Some(1));
    assert_eq!(bin().args(["train", "--no-such-flag"]).output().unwrap().status.code(), Some(1));
    assert_eq!(bin().args(["compare", "--jobs", "0"]).output().unwrap().status.code(), Some(1));

    let missing = bin().args(["train", "--data"]).arg(dir.path().join("nope.csv")).output().unwrap();
    assert_eq!(missing.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&missing.stderr).contains("nope.csv"));

    let help = bin().arg("--help").output().unwrap();
    assert_eq!(help.status.code(), Some(0));
}
