use std::path::PathBuf;

use entropystop::data::{gen_synthetic, load_csv, standardize, Dataset, EvalSet};
use entropystop::models::OdModel;
use entropystop::stop::{StopConfig, TrainSettings};
use serde::{Deserialize, Serialize};

use crate::error::{HarnessError, HarnessResult};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum ModelChoice {
    /// Autoencoder scored by reconstruction error.
    Ae,
    /// Linear DeepSVDD scored by distance to a fixed center.
    Svdd,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub n_in: usize,
    pub n_out: usize,
    pub d: usize,
    pub spread: f64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        SyntheticSpec { n_in: 950, n_out: 50, d: 2, spread: 6.0 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DataSource {
    Csv { path: PathBuf },
    Synthetic(SyntheticSpec),
}

impl Default for DataSource {
    fn default() -> Self {
        DataSource::Synthetic(SyntheticSpec::default())
    }
}

/// Everything that determines a run. Echoed verbatim into every report.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub model: ModelChoice,
    /// AE hidden width, or the DeepSVDD embedding width.
    pub hidden: usize,
    pub lr: f64,
    pub batch_size: usize,
    /// Iteration budget. When absent it is `epochs` passes over the data.
    pub iters: Option<usize>,
    pub epochs: usize,
    pub seed: u64,
    pub k: usize,
    pub r_down: f64,
    pub n_eval: usize,
    /// Z-score CSV features on load. Synthetic data is always used as generated.
    pub standardize: bool,
    pub data: DataSource,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            model: ModelChoice::Ae,
            hidden: 64,
            lr: 1e-3,
            batch_size: 1024,
            iters: None,
            epochs: 250,
            seed: 0,
            k: 100,
            r_down: 0.1,
            n_eval: 1024,
            standardize: true,
            data: DataSource::default(),
        }
    }
}

fn bad(msg: impl Into<String>) -> HarnessError {
    HarnessError::Config(msg.into())
}

impl TrainConfig {
    pub fn validate(&self) -> HarnessResult<()> {
        if !(self.lr.is_finite() && self.lr > 0.0) {
            return Err(bad(format!("--lr must be positive, got {}", self.lr)));
        }
        if self.hidden == 0 {
            return Err(bad("--hidden must be at least 1"));
        }
        if self.batch_size == 0 {
            return Err(bad("--batch-size must be at least 1"));
        }
        match self.iters {
            Some(0) => return Err(bad("--iters must be at least 1")),
            None if self.epochs == 0 => return Err(bad("--epochs must be at least 1")),
            _ => {}
        }
        if self.k == 0 {
            return Err(bad("--k must be at least 1"));
        }
        if !(self.r_down > 0.0 && self.r_down < 1.0) {
            return Err(bad(format!("--rdown must lie in (0, 1), got {}", self.r_down)));
        }
        if self.n_eval == 0 {
            return Err(bad("--neval must be at least 1"));
        }
        if let DataSource::Synthetic(s) = &self.data {
            if s.n_in == 0 || s.n_out == 0 || s.d == 0 {
                return Err(bad("synthetic data needs positive n_in, n_out and d"));
            }
            if !(s.spread.is_finite() && s.spread > 1.0) {
                return Err(bad(format!("synthetic spread must exceed 1, got {}", s.spread)));
            }
        }
        Ok(())
    }

    /// Iteration budget for a dataset with `n` rows.
    pub fn t_max(&self, n: usize) -> usize {
        self.iters
            .unwrap_or_else(|| self.epochs * n.div_ceil(self.batch_size.max(1)))
    }

    pub fn train_settings(&self) -> TrainSettings {
        TrainSettings { lr: self.lr, batch_size: self.batch_size, seed: self.seed }
    }

    pub fn stop_config(&self, n: usize) -> StopConfig {
        StopConfig { patience: self.k, r_down: self.r_down, n_eval: self.n_eval, t_max: self.t_max(n) }
    }

    pub fn build_model(&self, dataset: &Dataset) -> HarnessResult<OdModel> {
        let model = match self.model {
            ModelChoice::Ae => OdModel::new_autoencoder(dataset.dim(), self.hidden, self.seed)?,
            ModelChoice::Svdd => {
                OdModel::new_deep_svdd(dataset.dim(), self.hidden, dataset.features(), self.seed)?
            }
        };
        Ok(model)
    }

    pub fn eval_set(&self, dataset: &Dataset) -> HarnessResult<EvalSet> {
        Ok(EvalSet::sample(dataset.features(), self.n_eval, self.seed)?)
    }

    /// Load the configured data source.
    pub fn load(&self) -> HarnessResult<Dataset> {
        self.load_source(&self.data)
    }

    pub fn load_source(&self, source: &DataSource) -> HarnessResult<Dataset> {
        match source {
            DataSource::Csv { path } => {
                let ds = load_csv(path)?;
                Ok(if self.standardize { standardize(&ds) } else { ds })
            }
            DataSource::Synthetic(s) => Ok(gen_synthetic(s.n_in, s.n_out, s.d, s.spread, self.seed)?),
        }
    }

    pub fn with_source(&self, data: DataSource) -> TrainConfig {
        TrainConfig { data, ..self.clone() }
    }
}
