use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use entropystop::diagnostics::DiagnosticThresholds;
use entropystop_harness::compare::cmd_compare;
use entropystop_harness::correlate::cmd_correlate;
use entropystop_harness::diagnose::{cmd_diagnose, cmd_gen};
use entropystop_harness::train::cmd_train;
use entropystop_harness::{
    expand_sources, DataSource, HarnessError, HarnessResult, ModelChoice, SyntheticSpec, TrainConfig,
};

#[derive(Parser)]
#[command(name = "entropystop", version, about = "Label-free early stopping for outlier detectors")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train one model with entropy-based stopping.
    Train {
        #[command(flatten)]
        run: RunArgs,
        /// Also train a full-budget model without stopping, for reference.
        #[arg(long)]
        baseline: bool,
    },
    /// Vanilla full-budget training against entropy stopping, per dataset.
    Compare(RunArgs),
    /// Pearson correlation between AUC and entropy curves under full-batch training.
    Correlate(RunArgs),
    /// Classify a saved training report into known failure modes.
    Diagnose {
        /// Path to a report.json written by `train`.
        #[arg(long)]
        report: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, default_value_t = 1.0)]
        r_pi_high: f64,
        #[arg(long, default_value_t = 0.5)]
        combined_mass: f64,
        #[arg(long, default_value_t = 0.05)]
        auc_span: f64,
    },
    /// Write a synthetic contaminated Gaussian dataset as CSV.
    Gen {
        #[arg(long, default_value_t = 950)]
        n_in: usize,
        #[arg(long, default_value_t = 50)]
        n_out: usize,
        #[arg(long, default_value_t = 2)]
        d: usize,
        #[arg(long, default_value_t = 6.0)]
        spread: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Args)]
struct RunArgs {
    /// CSV file or directory of CSV files; repeatable.
    #[arg(long)]
    data: Vec<PathBuf>,
    /// Synthetic data as N_IN,N_OUT,D,SPREAD; used when --data is absent.
    #[arg(long, value_parser = parse_synthetic, default_value = "950,50,2,6")]
    synthetic: SyntheticSpec,
    #[arg(long, value_enum, default_value = "ae")]
    model: ModelChoice,
    /// AE hidden width, or DeepSVDD embedding width.
    #[arg(long, default_value_t = 64)]
    hidden: usize,
    #[arg(long, default_value_t = 1e-3, allow_negative_numbers = true)]
    lr: f64,
    #[arg(long, default_value_t = 1024)]
    batch_size: usize,
    /// Iteration budget; overrides --epochs. `correlate` defaults to 500.
    #[arg(long)]
    iters: Option<usize>,
    #[arg(long, default_value_t = 250)]
    epochs: usize,
    /// Patience: iterations without an accepted minimum before halting.
    #[arg(long, default_value_t = 100)]
    k: usize,
    /// Minimum smoothness of an accepted entropy drop, in (0, 1).
    #[arg(long, default_value_t = 0.1, allow_negative_numbers = true)]
    rdown: f64,
    /// Size of the evaluation subset used for entropy.
    #[arg(long, default_value_t = 1024)]
    neval: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Keep CSV features as read instead of z-scoring them.
    #[arg(long)]
    no_standardize: bool,
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Datasets processed concurrently.
    #[arg(long, default_value_t = 1)]
    jobs: usize,
}

fn parse_synthetic(s: &str) -> Result<SyntheticSpec, String> {
    let parts: Vec<&str> = s.split(',').map(str::trim).collect();
    let [n_in, n_out, d, spread] = parts.as_slice() else {
        return Err(format!("expected N_IN,N_OUT,D,SPREAD, got {s:?}"));
    };
    let int = |v: &str| v.parse::<usize>().map_err(|e| format!("{v:?}: {e}"));
    Ok(SyntheticSpec {
        n_in: int(n_in)?,
        n_out: int(n_out)?,
        d: int(d)?,
        spread: spread.parse().map_err(|e| format!("{spread:?}: {e}"))?,
    })
}

impl RunArgs {
    fn config(&self, data: DataSource) -> TrainConfig {
        TrainConfig {
            model: self.model,
            hidden: self.hidden,
            lr: self.lr,
            batch_size: self.batch_size,
            iters: self.iters,
            epochs: self.epochs,
            seed: self.seed,
            k: self.k,
            r_down: self.rdown,
            n_eval: self.neval,
            standardize: !self.no_standardize,
            data,
        }
    }

    fn sources(&self) -> HarnessResult<Vec<DataSource>> {
        if self.data.is_empty() {
            Ok(vec![DataSource::Synthetic(self.synthetic.clone())])
        } else {
            expand_sources(&self.data)
        }
    }
}

fn run(cli: Cli) -> HarnessResult<()> {
    match cli.command {
        Command::Train { run, baseline } => {
            let mut sources = run.sources()?;
            if sources.len() != 1 {
                return Err(HarnessError::Config("train takes exactly one dataset".into()));
            }
            let config = run.config(sources.remove(0));
            let outcome = cmd_train(&config, &run.out, baseline)?;
            let r = &outcome.report;
            print!("{}: stop_iter={} best_iter={} halted={}", r.dataset.name, r.stop_iter, r.best_iter, r.halted);
            if let Some(m) = &r.selected {
                print!(" auc={:.4} ap={:.4}", m.auc, m.ap);
            }
            if let Some(p) = &r.pearson_r {
                print!(" pearson_r={p}");
            }
            println!();
            if let Some(b) = &r.baseline {
                print!("baseline: iters={} secs={:.3}", b.iters, b.timings.total_secs);
                if let Some(m) = &b.metrics {
                    print!(" auc={:.4} ap={:.4}", m.auc, m.ap);
                }
                println!(" (stopped run {:.3}s)", r.timings.total_secs);
            }
        }
        Command::Compare(run) => {
            let sources = run.sources()?;
            let config = run.config(sources[0].clone());
            let t = cmd_compare(&config, &sources, run.jobs, &run.out)?;
            println!("{:<24} {:>8} {:>8} {:>8} {:>8} {:>8}", "dataset", "v_auc", "e_auc", "v_ap", "e_ap", "time");
            for r in &t.rows {
                println!(
                    "{:<24} {:>8.4} {:>8.4} {:>8.4} {:>8.4} {:>8.3}",
                    r.dataset, r.vanilla.auc, r.entropy.auc, r.vanilla.ap, r.entropy.ap, r.time_ratio
                );
            }
            for (name, s) in [("vanilla", &t.vanilla), ("entropy", &t.entropy)] {
                println!(
                    "{name}: mean_auc={:.4} mean_ap={:.4} rank_auc={:.2} rank_ap={:.2} avg_time={:.3} total_time={:.3}",
                    s.mean_auc, s.mean_ap, s.mean_rank_auc, s.mean_rank_ap, s.average_train_time, s.total_train_time
                );
            }
        }
        Command::Correlate(run) => {
            let sources = run.sources()?;
            let config = run.config(sources[0].clone());
            let t = cmd_correlate(&config, &sources, run.jobs, &run.out)?;
            for r in &t.rows {
                println!("{:<24} r={} auc_span={:.4}", r.dataset, r.pearson_r, r.auc_span);
            }
            for b in &t.histogram {
                println!("[{:+.1}, {:+.1}) {}", b.lo, b.hi, "#".repeat(b.count));
            }
        }
        Command::Diagnose { report, out, r_pi_high, combined_mass, auc_span } => {
            let thresholds = DiagnosticThresholds { r_pi_high, combined_mass, auc_span };
            let d = cmd_diagnose(&report, &thresholds, out.as_deref())?;
            println!(
                "verdict={} label_misleading={} auc_converged={} r_pi={:.4} combined_mass={:.4} auc_span={:.4}",
                d.verdict(), d.label_misleading, d.auc_converged, d.r_pi, d.combined_mass, d.auc_span
            );
        }
        Command::Gen { n_in, n_out, d, spread, seed, out } => {
            cmd_gen(&SyntheticSpec { n_in, n_out, d, spread }, seed, &out)?;
            println!("wrote {}", out.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
