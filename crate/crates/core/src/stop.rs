//! Entropy-based early stopping.
//!
//! After every training iteration the loss entropy of a fixed evaluation
//! subset is fed to [`EntropyStop::observe`]. A new entropy minimum `e_j` is
//! accepted only when the path leading to it is a smooth downtrend:
//!
//! ```text
//! e_j < e_min  and  (e_min - e_j) / G > r_down
//! ```
//!
//! where `G` is the total variation `Σ |e_i - e_{i-1}|` accumulated since the
//! last accepted minimum. Training halts once `patience` consecutive
//! iterations pass without an acceptance, and the parameters captured at the
//! last acceptance are restored.
//!
//! Nothing in this module sees labels.

use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::data::{BatchSchedule, EvalSet};
use crate::error::{Error, Result};
use crate::metrics::{loss_entropy, LossVector};
use crate::models::Detector;
use crate::nn::{AdamState, Matrix};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StopConfig {
    /// Iterations without an accepted minimum before halting (`k`).
    pub patience: usize,
    /// Downtrend threshold in (0, 1).
    pub r_down: f64,
    /// Size of the entropy evaluation subset.
    pub n_eval: usize,
    /// Iteration budget. Zero returns the untrained model.
    pub t_max: usize,
}

impl StopConfig {
    pub fn new(patience: usize, r_down: f64, n_eval: usize, t_max: usize) -> Result<Self> {
        let cfg = StopConfig {
            patience,
            r_down,
            n_eval,
            t_max,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// k = 100, r_down = 0.1, n_eval = 1024.
    pub fn with_defaults(t_max: usize) -> Self {
        StopConfig {
            patience: 100,
            r_down: 0.1,
            n_eval: 1024,
            t_max,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.patience == 0 {
            return Err(Error::InvalidParameter("patience must be at least 1".into()));
        }
        if !(self.r_down > 0.0 && self.r_down < 1.0) {
            return Err(Error::InvalidParameter(format!(
                "r_down must lie in (0, 1), got {}",
                self.r_down
            )));
        }
        if self.n_eval == 0 {
            return Err(Error::InvalidParameter("n_eval must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Decision {
    NewBest,
    Waiting,
    Halt,
}

/// The stopping state machine. `S` is whatever the caller uses to capture
/// model parameters.
#[derive(Clone, Debug)]
pub struct EntropyStop<S> {
    patience_limit: usize,
    r_down: f64,
    e_min: f64,
    total_variation: f64,
    patience: usize,
    best_iter: usize,
    best: S,
    prev_e: f64,
    last_iter: usize,
    halted: bool,
    accepted: Vec<usize>,
}

impl<S> EntropyStop<S> {
    /// Start from the entropy of the untrained model, observed at iteration 0.
    pub fn init(e0: f64, snapshot: S, patience: usize, r_down: f64) -> Result<Self> {
        if !e0.is_finite() {
            return Err(Error::numeric(Some(0), format!("initial entropy is {e0}")));
        }
        StopConfig::new(patience, r_down, 1, 0)?;
        Ok(EntropyStop {
            patience_limit: patience,
            r_down,
            e_min: e0,
            total_variation: 0.0,
            patience: 0,
            best_iter: 0,
            best: snapshot,
            prev_e: e0,
            last_iter: 0,
            halted: false,
            accepted: Vec::new(),
        })
    }

    /// Feed the entropy after iteration `iter`. `snapshot` is called only
    /// when the value is accepted as the new minimum.
    pub fn observe(
        &mut self,
        entropy: f64,
        iter: usize,
        snapshot: impl FnOnce() -> S,
    ) -> Result<Decision> {
        if self.halted {
            return Err(Error::Usage("observe called after the stopper halted".into()));
        }
        if iter != self.last_iter + 1 {
            return Err(Error::Usage(format!(
                "expected iteration {}, got {iter}",
                self.last_iter + 1
            )));
        }
        if !entropy.is_finite() {
            return Err(Error::numeric(Some(iter), format!("entropy is {entropy}")));
        }
        self.total_variation += (entropy - self.prev_e).abs();
        self.prev_e = entropy;
        self.last_iter = iter;

        // A flat path (G == 0) is not a downtrend.
        let accept = entropy < self.e_min
            && self.total_variation > 0.0
            && (self.e_min - entropy) / self.total_variation > self.r_down;
        if accept {
            self.e_min = entropy;
            self.total_variation = 0.0;
            self.patience = 0;
            self.best_iter = iter;
            self.best = snapshot();
            self.accepted.push(iter);
            return Ok(Decision::NewBest);
        }
        self.patience += 1;
        if self.patience == self.patience_limit {
            self.halted = true;
            Ok(Decision::Halt)
        } else {
            Ok(Decision::Waiting)
        }
    }

    pub fn e_min(&self) -> f64 {
        self.e_min
    }

    pub fn total_variation(&self) -> f64 {
        self.total_variation
    }

    pub fn patience(&self) -> usize {
        self.patience
    }

    pub fn best_iter(&self) -> usize {
        self.best_iter
    }

    pub fn best(&self) -> &S {
        &self.best
    }

    pub fn into_best(self) -> S {
        self.best
    }

    pub fn is_halted(&self) -> bool {
        self.halted
    }

    /// Iterations at which a new minimum was accepted, in order.
    pub fn accepted(&self) -> &[usize] {
        &self.accepted
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainSettings {
    pub lr: f64,
    pub batch_size: usize,
    pub seed: u64,
}

/// Wall-clock split of a run, in seconds.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Timings {
    /// Optimizer steps, including batch assembly.
    pub train_secs: f64,
    /// Scoring the evaluation subset and computing its entropy.
    pub entropy_secs: f64,
    /// Time spent inside the caller's monitor callback.
    pub monitor_secs: f64,
    pub total_secs: f64,
}

impl Timings {
    /// Train plus entropy time, i.e. what the run would cost without logging.
    pub fn method_secs(&self) -> f64 {
        self.train_secs + self.entropy_secs
    }
}

#[derive(Clone, Debug)]
pub struct StopRun {
    /// Entropy after each iteration; index 0 is the untrained model.
    pub entropy: Vec<f64>,
    /// Pre-step mean batch loss of iterations `1..=stop_iter`.
    pub batch_loss: Vec<f64>,
    /// Last iteration trained.
    pub stop_iter: usize,
    pub best_iter: usize,
    /// Whether the patience rule fired (false when the budget ran out).
    pub halted: bool,
    pub accepted: Vec<usize>,
    /// Scores of every training row after restoring the best parameters.
    pub scores: LossVector,
    pub timings: Timings,
}

/// Receives the model after every iteration (0 = before training).
pub type Monitor<'a, M> = dyn FnMut(usize, &M) -> Result<()> + 'a;

fn eval_entropy<M: Detector>(model: &mut M, eval: &EvalSet, iter: usize) -> Result<f64> {
    model.set_eval_mode(true);
    let scores = model.score(eval.features());
    model.set_eval_mode(false);
    loss_entropy(&scores.map_err(|e| e.at_iteration(iter))?).map_err(|e| e.at_iteration(iter))
}

struct Stepper {
    schedule: BatchSchedule,
    opt: AdamState,
}

impl Stepper {
    fn new<M: Detector>(model: &M, n: usize, train: &TrainSettings) -> Result<Self> {
        Ok(Stepper {
            schedule: BatchSchedule::new(n, train.batch_size, train.seed)?,
            opt: model.new_optimizer(train.lr)?,
        })
    }

    fn step<M: Detector>(&mut self, model: &mut M, features: &Matrix, iter: usize) -> Result<f64> {
        let result = if self.schedule.is_full_batch() {
            self.schedule.next_batch()?;
            model.train_step(features, &mut self.opt)
        } else {
            let batch = features.select_rows(self.schedule.next_batch()?);
            model.train_step(&batch, &mut self.opt)
        };
        result.map_err(|e| e.at_iteration(iter))
    }
}

fn check_dims<M: Detector>(model: &M, features: &Matrix) -> Result<()> {
    if features.cols() != model.input_dim() {
        return Err(Error::Shape(format!(
            "data has {} features, model expects {}",
            features.cols(),
            model.input_dim()
        )));
    }
    Ok(())
}

/// Train with entropy-based early stopping, then restore the best parameters
/// and score every row of `features`.
pub fn run_with_stop<M: Detector>(
    model: &mut M,
    features: &Matrix,
    eval: &EvalSet,
    train: &TrainSettings,
    stop: &StopConfig,
    monitor: &mut Monitor<'_, M>,
) -> Result<StopRun> {
    stop.validate()?;
    check_dims(model, features)?;
    let start = Instant::now();
    let mut train_time = Duration::ZERO;
    let mut entropy_time = Duration::ZERO;
    let mut monitor_time = Duration::ZERO;

    let t = Instant::now();
    let e0 = eval_entropy(model, eval, 0)?;
    entropy_time += t.elapsed();
    let t = Instant::now();
    monitor(0, model)?;
    monitor_time += t.elapsed();

    let mut stopper = EntropyStop::init(e0, model.snapshot(0), stop.patience, stop.r_down)?;
    let mut stepper = Stepper::new(model, features.rows(), train)?;
    let mut entropy = vec![e0];
    let mut batch_loss = Vec::new();
    let mut stop_iter = 0;

    for j in 1..=stop.t_max {
        let t = Instant::now();
        batch_loss.push(stepper.step(model, features, j)?);
        train_time += t.elapsed();

        let t = Instant::now();
        let e = eval_entropy(model, eval, j)?;
        entropy_time += t.elapsed();
        entropy.push(e);

        let t = Instant::now();
        monitor(j, model)?;
        monitor_time += t.elapsed();

        stop_iter = j;
        let snapshot_model = &*model;
        if stopper.observe(e, j, || snapshot_model.snapshot(j))? == Decision::Halt {
            break;
        }
    }

    let halted = stopper.is_halted();
    let best_iter = stopper.best_iter();
    let accepted = stopper.accepted().to_vec();
    model.restore(&stopper.into_best())?;
    model.set_eval_mode(true);
    let scores = model.score(features)?;
    model.set_eval_mode(false);

    Ok(StopRun {
        entropy,
        batch_loss,
        stop_iter,
        best_iter,
        halted,
        accepted,
        scores,
        timings: Timings {
            train_secs: train_time.as_secs_f64(),
            entropy_secs: entropy_time.as_secs_f64(),
            monitor_secs: monitor_time.as_secs_f64(),
            total_secs: start.elapsed().as_secs_f64(),
        },
    })
}

#[derive(Clone, Debug)]
pub struct FixedRun {
    /// Entropy curve, only when an evaluation subset was given.
    pub entropy: Option<Vec<f64>>,
    pub batch_loss: Vec<f64>,
    /// Scores of every row after the last iteration.
    pub scores: LossVector,
    pub timings: Timings,
}

/// Train for exactly `iters` iterations with no stopping rule (the vanilla
/// baseline). Entropy is tracked only when `eval` is given.
pub fn run_fixed<M: Detector>(
    model: &mut M,
    features: &Matrix,
    eval: Option<&EvalSet>,
    train: &TrainSettings,
    iters: usize,
    monitor: &mut Monitor<'_, M>,
) -> Result<FixedRun> {
    check_dims(model, features)?;
    let start = Instant::now();
    let mut train_time = Duration::ZERO;
    let mut entropy_time = Duration::ZERO;
    let mut monitor_time = Duration::ZERO;
    let mut entropy = eval.map(|_| Vec::with_capacity(iters + 1));

    let mut track = |model: &mut M, j: usize, curve: &mut Option<Vec<f64>>| -> Result<()> {
        if let (Some(eval), Some(curve)) = (eval, curve.as_mut()) {
            let t = Instant::now();
            curve.push(eval_entropy(model, eval, j)?);
            entropy_time += t.elapsed();
        }
        let t = Instant::now();
        monitor(j, model)?;
        monitor_time += t.elapsed();
        Ok(())
    };

    track(model, 0, &mut entropy)?;
    let mut stepper = Stepper::new(model, features.rows(), train)?;
    let mut batch_loss = Vec::with_capacity(iters);
    for j in 1..=iters {
        let t = Instant::now();
        batch_loss.push(stepper.step(model, features, j)?);
        train_time += t.elapsed();
        track(model, j, &mut entropy)?;
    }
    model.set_eval_mode(true);
    let scores = model.score(features)?;
    model.set_eval_mode(false);

    Ok(FixedRun {
        entropy,
        batch_loss,
        scores,
        timings: Timings {
            train_secs: train_time.as_secs_f64(),
            entropy_secs: entropy_time.as_secs_f64(),
            monitor_secs: monitor_time.as_secs_f64(),
            total_secs: start.elapsed().as_secs_f64(),
        },
    })
}
