//! A small deterministic dense-network engine.
//!
//! Everything runs in `f64` and every reduction sums in row order, so two
//! runs from the same seed and the same inputs produce bit-identical
//! parameter trajectories.

mod adam;
mod matrix;

use rand::{Rng, SeedableRng};
use rand_xoshiro::Xoshiro256PlusPlus;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use adam::AdamState;
pub use matrix::Matrix;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    Linear,
}

impl Activation {
    fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Relu => z.max(0.0),
            Activation::Linear => z,
        }
    }

    /// Derivative with respect to the pre-activation. Relu uses 0 at z == 0.
    fn derivative(self, z: f64) -> f64 {
        match self {
            Activation::Relu => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Linear => 1.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DenseLayer {
    /// `out × in`
    pub weights: Matrix,
    pub bias: Vec<f64>,
    pub activation: Activation,
}

impl DenseLayer {
    pub fn new(weights: Matrix, bias: Vec<f64>, activation: Activation) -> Result<Self> {
        if bias.len() != weights.rows() {
            return Err(Error::Shape(format!(
                "bias length {} does not match {} output units",
                bias.len(),
                weights.rows()
            )));
        }
        Ok(DenseLayer {
            weights,
            bias,
            activation,
        })
    }

    pub fn input_dim(&self) -> usize {
        self.weights.cols()
    }

    pub fn output_dim(&self) -> usize {
        self.weights.rows()
    }

    fn param_count(&self) -> usize {
        self.weights.rows() * self.weights.cols() + self.bias.len()
    }
}

/// Per-sample loss on top of a network output.
///
/// `input` is the row that was fed to the network, `output` the network's
/// response to it. Implementations return the loss and write its gradient
/// with respect to `output` into `grad`.
pub trait SampleLoss {
    fn loss_and_grad(&self, input: &[f64], output: &[f64], grad: &mut [f64]) -> f64;

    fn loss(&self, input: &[f64], output: &[f64]) -> f64 {
        let mut scratch = vec![0.0; output.len()];
        self.loss_and_grad(input, output, &mut scratch)
    }
}

/// Gradient of a scalar with respect to every parameter, laid out like the net.
#[derive(Clone, Debug, PartialEq)]
pub struct Gradients {
    pub layers: Vec<(Matrix, Vec<f64>)>,
}

impl Gradients {
    /// Flatten in parameter order: per layer, weights row-major then bias.
    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for (w, b) in &self.layers {
            out.extend_from_slice(w.as_slice());
            out.extend_from_slice(b);
        }
        out
    }

    pub fn is_finite(&self) -> bool {
        self.layers
            .iter()
            .all(|(w, b)| w.is_finite() && b.iter().all(|v| v.is_finite()))
    }
}

/// Result of a forward/backward pass over a batch.
#[derive(Clone, Debug)]
pub struct BatchGradient {
    pub mean_loss: f64,
    pub per_sample: Vec<f64>,
    pub gradients: Gradients,
}

/// Deep copy of every parameter, tagged with the iteration it was taken at.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParamSnapshot {
    pub iteration: usize,
    layers: Vec<(Matrix, Vec<f64>)>,
}

impl ParamSnapshot {
    pub fn shapes(&self) -> Vec<(usize, usize)> {
        self.layers.iter().map(|(w, _)| w.shape()).collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DenseNet {
    layers: Vec<DenseLayer>,
    seed: u64,
}

impl DenseNet {
    /// Build a net with `dims.len() - 1` layers, weights drawn uniformly from
    /// ±sqrt(6 / (fan_in + fan_out)) and zero biases.
    pub fn new(dims: &[usize], activations: &[Activation], seed: u64) -> Result<Self> {
        if dims.len() < 2 {
            return Err(Error::InvalidParameter(
                "a network needs at least an input and an output dimension".into(),
            ));
        }
        if activations.len() != dims.len() - 1 {
            return Err(Error::InvalidParameter(format!(
                "{} activations given for {} layers",
                activations.len(),
                dims.len() - 1
            )));
        }
        if let Some(pos) = dims.iter().position(|&d| d == 0) {
            return Err(Error::InvalidParameter(format!(
                "layer dimension {pos} is zero"
            )));
        }
        let mut rng = Xoshiro256PlusPlus::seed_from_u64(seed);
        let layers = dims
            .windows(2)
            .zip(activations)
            .map(|(pair, &activation)| {
                let (fan_in, fan_out) = (pair[0], pair[1]);
                let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
                let data = (0..fan_in * fan_out)
                    .map(|_| rng.random_range(-limit..=limit))
                    .collect();
                DenseLayer {
                    weights: Matrix::from_vec(fan_out, fan_in, data)
                        .expect("length is fan_in * fan_out"),
                    bias: vec![0.0; fan_out],
                    activation,
                }
            })
            .collect();
        Ok(DenseNet { layers, seed })
    }

    pub fn from_layers(layers: Vec<DenseLayer>, seed: u64) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::InvalidParameter("network has no layers".into()));
        }
        for (i, pair) in layers.windows(2).enumerate() {
            if pair[0].output_dim() != pair[1].input_dim() {
                return Err(Error::Shape(format!(
                    "layer {i} outputs {} units but layer {} expects {}",
                    pair[0].output_dim(),
                    i + 1,
                    pair[1].input_dim()
                )));
            }
        }
        for (i, l) in layers.iter().enumerate() {
            if l.bias.len() != l.output_dim() {
                return Err(Error::Shape(format!("layer {i} bias length mismatch")));
            }
        }
        Ok(DenseNet { layers, seed })
    }

    pub fn layers(&self) -> &[DenseLayer] {
        &self.layers
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].input_dim()
    }

    pub fn output_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].output_dim()
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(DenseLayer::param_count).sum()
    }

    /// All parameters in flattened order (see [`Gradients::flatten`]).
    pub fn flat_params(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.param_count());
        for l in &self.layers {
            out.extend_from_slice(l.weights.as_slice());
            out.extend_from_slice(&l.bias);
        }
        out
    }

    pub fn set_flat_params(&mut self, params: &[f64]) -> Result<()> {
        if params.len() != self.param_count() {
            return Err(Error::Shape(format!(
                "{} parameters given, network has {}",
                params.len(),
                self.param_count()
            )));
        }
        for (p, v) in self.params_mut().zip(params) {
            *p = *v;
        }
        Ok(())
    }

    pub(crate) fn params_mut(&mut self) -> impl Iterator<Item = &mut f64> + '_ {
        self.layers.iter_mut().flat_map(|l| {
            l.weights
                .as_mut_slice()
                .iter_mut()
                .chain(l.bias.iter_mut())
        })
    }

    fn check_input(&self, x: &Matrix) -> Result<()> {
        if x.cols() != self.input_dim() {
            return Err(Error::Shape(format!(
                "input has {} columns, network expects {}",
                x.cols(),
                self.input_dim()
            )));
        }
        if x.rows() == 0 {
            return Err(Error::Shape("input batch is empty".into()));
        }
        Ok(())
    }

    pub fn forward(&self, x: &Matrix) -> Result<Matrix> {
        self.check_input(x)?;
        let mut current = x.clone();
        for layer in &self.layers {
            let pre = affine(layer, &current);
            current = activate(layer.activation, pre);
        }
        Ok(current)
    }

    /// Forward pass keeping every layer's input and pre-activation.
    fn forward_cached(&self, x: &Matrix) -> (Vec<Matrix>, Vec<Matrix>, Matrix) {
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut pres = Vec::with_capacity(self.layers.len());
        let mut current = x.clone();
        for layer in &self.layers {
            let pre = affine(layer, &current);
            let next = activate(layer.activation, pre.clone());
            inputs.push(current);
            pres.push(pre);
            current = next;
        }
        (inputs, pres, current)
    }

    /// Per-sample losses, their mean, and the gradient of the mean loss.
    pub fn gradient(&self, x: &Matrix, loss: &dyn SampleLoss) -> Result<BatchGradient> {
        self.check_input(x)?;
        let b = x.rows();
        let (inputs, pres, output) = self.forward_cached(x);

        let mut per_sample = Vec::with_capacity(b);
        let mut delta = Matrix::zeros(b, self.output_dim());
        let scale = 1.0 / b as f64;
        for s in 0..b {
            let g = delta.row_mut(s);
            per_sample.push(loss.loss_and_grad(x.row(s), output.row(s), g));
            for v in g.iter_mut() {
                *v *= scale;
            }
        }
        let mean_loss = per_sample.iter().sum::<f64>() * scale;

        let mut grads: Vec<(Matrix, Vec<f64>)> = Vec::with_capacity(self.layers.len());
        for (li, layer) in self.layers.iter().enumerate().rev() {
            let pre = &pres[li];
            let input = &inputs[li];
            // delta currently holds dL/d(activation output); fold in the activation derivative.
            for s in 0..b {
                let (dz, z) = (delta.row_mut(s), pre.row(s));
                for (d, &zv) in dz.iter_mut().zip(z) {
                    *d *= layer.activation.derivative(zv);
                }
            }
            let (out_dim, in_dim) = layer.weights.shape();
            let mut gw = Matrix::zeros(out_dim, in_dim);
            let mut gb = vec![0.0; out_dim];
            for s in 0..b {
                let (dz, a) = (delta.row(s), input.row(s));
                for o in 0..out_dim {
                    let d = dz[o];
                    gb[o] += d;
                    let row = gw.row_mut(o);
                    for (w, &av) in row.iter_mut().zip(a) {
                        *w += d * av;
                    }
                }
            }
            if li > 0 {
                let mut prev = Matrix::zeros(b, in_dim);
                for s in 0..b {
                    let dz = delta.row(s);
                    let out = prev.row_mut(s);
                    for (o, &d) in dz.iter().enumerate() {
                        for (p, &w) in out.iter_mut().zip(layer.weights.row(o)) {
                            *p += d * w;
                        }
                    }
                }
                delta = prev;
            }
            grads.push((gw, gb));
        }
        grads.reverse();

        Ok(BatchGradient {
            mean_loss,
            per_sample,
            gradients: Gradients { layers: grads },
        })
    }

    /// One Adam step on the mean per-sample loss. Returns the pre-update mean loss.
    pub fn backward_and_step(
        &mut self,
        x: &Matrix,
        loss: &dyn SampleLoss,
        opt: &mut AdamState,
    ) -> Result<f64> {
        let next_step = opt.step() + 1;
        let batch = self
            .gradient(x, loss)
            .map_err(|e| e.at_iteration(next_step as usize))?;
        if !batch.mean_loss.is_finite() {
            return Err(Error::numeric(
                Some(next_step as usize),
                "batch loss is not finite",
            ));
        }
        if !batch.gradients.is_finite() {
            return Err(Error::numeric(
                Some(next_step as usize),
                "gradient is not finite",
            ));
        }
        opt.apply(self, &batch.gradients.flatten())?;
        Ok(batch.mean_loss)
    }

    pub fn snapshot(&self, iteration: usize) -> ParamSnapshot {
        ParamSnapshot {
            iteration,
            layers: self
                .layers
                .iter()
                .map(|l| (l.weights.clone(), l.bias.clone()))
                .collect(),
        }
    }

    pub fn restore(&mut self, snap: &ParamSnapshot) -> Result<()> {
        let same_arch = snap.layers.len() == self.layers.len()
            && snap
                .layers
                .iter()
                .zip(&self.layers)
                .all(|((w, b), l)| w.shape() == l.weights.shape() && b.len() == l.bias.len());
        if !same_arch {
            return Err(Error::Shape(format!(
                "snapshot architecture {:?} does not match network {:?}",
                snap.shapes(),
                self.layers
                    .iter()
                    .map(|l| l.weights.shape())
                    .collect::<Vec<_>>()
            )));
        }
        for ((w, b), l) in snap.layers.iter().zip(self.layers.iter_mut()) {
            l.weights = w.clone();
            l.bias = b.clone();
        }
        Ok(())
    }
}

fn affine(layer: &DenseLayer, x: &Matrix) -> Matrix {
    let out_dim = layer.output_dim();
    let mut out = Matrix::zeros(x.rows(), out_dim);
    for s in 0..x.rows() {
        let xr = x.row(s);
        let orow = out.row_mut(s);
        for (o, dst) in orow.iter_mut().enumerate() {
            let mut acc = layer.bias[o];
            for (w, v) in layer.weights.row(o).iter().zip(xr) {
                acc += w * v;
            }
            *dst = acc;
        }
    }
    out
}

fn activate(act: Activation, mut m: Matrix) -> Matrix {
    if act != Activation::Linear {
        for v in m.as_mut_slice() {
            *v = act.apply(*v);
        }
    }
    m
}
