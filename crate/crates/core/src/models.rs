//! Outlier detectors whose per-sample training loss is the outlier score.
//!
//! Training and scoring go through the same [`SampleLoss`] implementation, so
//! the score ordering always equals the training-loss ordering.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::LossVector;
use crate::nn::{Activation, AdamState, BatchGradient, DenseNet, Matrix, ParamSnapshot, SampleLoss};

/// Added to every per-sample loss so that scores are strictly positive.
pub const EPS_POS: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    Autoencoder,
    LinearDeepSvdd,
}

/// Mean squared reconstruction error over features.
struct Reconstruction;

impl SampleLoss for Reconstruction {
    fn loss_and_grad(&self, input: &[f64], output: &[f64], grad: &mut [f64]) -> f64 {
        let d = input.len() as f64;
        let mut sum = 0.0;
        for ((g, o), x) in grad.iter_mut().zip(output).zip(input) {
            let diff = o - x;
            sum += diff * diff;
            *g = 2.0 * diff / d;
        }
        sum / d + EPS_POS
    }
}

/// Squared distance from a fixed center.
struct CenterDistance<'a> {
    center: &'a [f64],
}

impl SampleLoss for CenterDistance<'_> {
    fn loss_and_grad(&self, _input: &[f64], output: &[f64], grad: &mut [f64]) -> f64 {
        let mut sum = 0.0;
        for ((g, o), c) in grad.iter_mut().zip(output).zip(self.center) {
            let diff = o - c;
            sum += diff * diff;
            *g = 2.0 * diff;
        }
        sum + EPS_POS
    }
}

/// Anything [`crate::stop::run_with_stop`] can train and score.
pub trait Detector {
    type Snapshot;

    fn input_dim(&self) -> usize;

    fn new_optimizer(&self, lr: f64) -> Result<AdamState>;

    /// Per-sample losses of `x`. Must be deterministic.
    fn score(&self, x: &Matrix) -> Result<LossVector>;

    /// One optimizer step on the mean loss of `batch`; returns the pre-step mean loss.
    fn train_step(&mut self, batch: &Matrix, opt: &mut AdamState) -> Result<f64>;

    fn snapshot(&self, iteration: usize) -> Self::Snapshot;

    fn restore(&mut self, snapshot: &Self::Snapshot) -> Result<()>;

    /// Switch stochastic layers off (`true`) or back on. The bundled models
    /// have none, so the default does nothing.
    fn set_eval_mode(&mut self, _eval: bool) {}
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OdModel {
    kind: ModelKind,
    net: DenseNet,
    /// Present iff `kind == LinearDeepSvdd`; never changes after construction.
    center: Option<Vec<f64>>,
}

impl OdModel {
    /// `d_in -> hidden (relu) -> d_in (linear)` autoencoder.
    pub fn new_autoencoder(d_in: usize, hidden: usize, seed: u64) -> Result<Self> {
        if d_in == 0 || hidden == 0 {
            return Err(Error::InvalidParameter(format!(
                "autoencoder dimensions must be positive, got d_in={d_in}, hidden={hidden}"
            )));
        }
        let net = DenseNet::new(
            &[d_in, hidden, d_in],
            &[Activation::Relu, Activation::Linear],
            seed,
        )?;
        Ok(OdModel {
            kind: ModelKind::Autoencoder,
            net,
            center: None,
        })
    }

    /// Linear map `d_in -> d_latent` with the center fixed at the mean initial
    /// embedding of `data`.
    pub fn new_deep_svdd(d_in: usize, d_latent: usize, data: &Matrix, seed: u64) -> Result<Self> {
        if d_in == 0 || d_latent == 0 {
            return Err(Error::InvalidParameter(format!(
                "deep SVDD dimensions must be positive, got d_in={d_in}, d_latent={d_latent}"
            )));
        }
        let net = DenseNet::new(&[d_in, d_latent], &[Activation::Linear], seed)?;
        Self::deep_svdd_from_net(net, data)
    }

    /// Wrap a single-output-layer net as deep SVDD, centering on `data`.
    pub fn deep_svdd_from_net(net: DenseNet, data: &Matrix) -> Result<Self> {
        if data.rows() == 0 {
            return Err(Error::InvalidParameter(
                "deep SVDD center is undefined for empty data".into(),
            ));
        }
        let latent = net.forward(data)?;
        let mut center = vec![0.0; latent.cols()];
        for row in latent.iter_rows() {
            for (c, v) in center.iter_mut().zip(row) {
                *c += v;
            }
        }
        let n = latent.rows() as f64;
        center.iter_mut().for_each(|c| *c /= n);
        Ok(OdModel {
            kind: ModelKind::LinearDeepSvdd,
            net,
            center: Some(center),
        })
    }

    /// Wrap an arbitrary net as an autoencoder. Input and output widths must agree.
    pub fn autoencoder_from_net(net: DenseNet) -> Result<Self> {
        if net.input_dim() != net.output_dim() {
            return Err(Error::Shape(format!(
                "autoencoder maps {} features to {}",
                net.input_dim(),
                net.output_dim()
            )));
        }
        Ok(OdModel {
            kind: ModelKind::Autoencoder,
            net,
            center: None,
        })
    }

    pub fn kind(&self) -> ModelKind {
        self.kind
    }

    pub fn net(&self) -> &DenseNet {
        &self.net
    }

    pub fn net_mut(&mut self) -> &mut DenseNet {
        &mut self.net
    }

    pub fn center(&self) -> Option<&[f64]> {
        self.center.as_deref()
    }

    pub fn param_count(&self) -> usize {
        self.net.param_count()
    }

    fn with_loss<R>(&self, f: impl FnOnce(&dyn SampleLoss) -> R) -> R {
        match (&self.kind, &self.center) {
            (ModelKind::Autoencoder, _) => f(&Reconstruction),
            (ModelKind::LinearDeepSvdd, Some(center)) => f(&CenterDistance { center }),
            (ModelKind::LinearDeepSvdd, None) => unreachable!("deep SVDD always has a center"),
        }
    }

    /// Per-sample losses and the gradient of their mean.
    pub fn gradient(&self, x: &Matrix) -> Result<BatchGradient> {
        self.with_loss(|loss| self.net.gradient(x, loss))
    }
}

impl Detector for OdModel {
    type Snapshot = ParamSnapshot;

    fn input_dim(&self) -> usize {
        self.net.input_dim()
    }

    fn new_optimizer(&self, lr: f64) -> Result<AdamState> {
        AdamState::new(self.net.param_count(), lr)
    }

    fn score(&self, x: &Matrix) -> Result<LossVector> {
        let out = self.net.forward(x)?;
        let scores = self.with_loss(|loss| {
            x.iter_rows()
                .zip(out.iter_rows())
                .map(|(xi, oi)| loss.loss(xi, oi))
                .collect::<Vec<_>>()
        });
        Ok(LossVector::new(scores))
    }

    fn train_step(&mut self, batch: &Matrix, opt: &mut AdamState) -> Result<f64> {
        let OdModel { kind, net, center } = self;
        match (kind, center.as_deref()) {
            (ModelKind::Autoencoder, _) => net.backward_and_step(batch, &Reconstruction, opt),
            (ModelKind::LinearDeepSvdd, Some(center)) => {
                net.backward_and_step(batch, &CenterDistance { center }, opt)
            }
            (ModelKind::LinearDeepSvdd, None) => unreachable!("deep SVDD always has a center"),
        }
    }

    fn snapshot(&self, iteration: usize) -> ParamSnapshot {
        self.net.snapshot(iteration)
    }

    fn restore(&mut self, snapshot: &ParamSnapshot) -> Result<()> {
        self.net.restore(snapshot)
    }
}
