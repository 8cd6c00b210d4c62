//! Dataset ingestion, standardization, evaluation-set sampling, batching and
//! synthetic contaminated data.
//!
//! CSV contract: UTF-8, one header row, feature columns in order, and an
//! optional trailing column named `label` holding literal `0` (inlier) or `1`
//! (outlier). Labels are only ever used for evaluation.

use std::collections::hash_map::DefaultHasher;
use std::hash::{Hash, Hasher};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_distr::StandardNormal;
use rand_xoshiro::Xoshiro256PlusPlus;

use crate::error::{Error, Result};
use crate::nn::Matrix;

pub const LABEL_COLUMN: &str = "label";

/// Columns whose population standard deviation falls below this become zero.
const STD_FLOOR: f64 = 1e-12;

pub(crate) fn seeded_rng(seed: u64) -> Xoshiro256PlusPlus {
    Xoshiro256PlusPlus::seed_from_u64(seed)
}

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub name: String,
    pub feature_names: Vec<String>,
    features: Matrix,
    labels: Option<Vec<bool>>,
}

impl Dataset {
    pub fn new(
        name: impl Into<String>,
        feature_names: Vec<String>,
        features: Matrix,
        labels: Option<Vec<bool>>,
    ) -> Result<Self> {
        if feature_names.len() != features.cols() {
            return Err(Error::Shape(format!(
                "{} feature names for {} columns",
                feature_names.len(),
                features.cols()
            )));
        }
        if let Some(l) = &labels {
            if l.len() != features.rows() {
                return Err(Error::Shape(format!(
                    "{} labels for {} rows",
                    l.len(),
                    features.rows()
                )));
            }
        }
        if !features.is_finite() {
            return Err(Error::InvalidParameter(
                "dataset contains NaN or infinite values".into(),
            ));
        }
        Ok(Dataset {
            name: name.into(),
            feature_names,
            features,
            labels,
        })
    }

    /// Like [`Dataset::new`] with generated names `x0, x1, ...`.
    pub fn from_features(
        name: impl Into<String>,
        features: Matrix,
        labels: Option<Vec<bool>>,
    ) -> Result<Self> {
        let names = (0..features.cols()).map(|i| format!("x{i}")).collect();
        Self::new(name, names, features, labels)
    }

    pub fn features(&self) -> &Matrix {
        &self.features
    }

    pub fn labels(&self) -> Option<&[bool]> {
        self.labels.as_deref()
    }

    pub fn len(&self) -> usize {
        self.features.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.features.rows() == 0
    }

    pub fn dim(&self) -> usize {
        self.features.cols()
    }

    /// Fraction of labeled outliers, when labels are present.
    pub fn outlier_ratio(&self) -> Option<f64> {
        let labels = self.labels.as_ref()?;
        if labels.is_empty() {
            return None;
        }
        Some(labels.iter().filter(|&&l| l).count() as f64 / labels.len() as f64)
    }

    pub fn without_labels(&self) -> Dataset {
        Dataset {
            labels: None,
            ..self.clone()
        }
    }
}

pub fn load_csv(path: impl AsRef<Path>) -> Result<Dataset> {
    let path = path.as_ref();
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_path(path)
        .map_err(|e| Error::Format { path: path.to_path_buf(), message: format!("cannot open: {e}") })?;
    let headers: Vec<String> = reader.headers()?.iter().map(|h| h.trim().to_string()).collect();
    if headers.is_empty() || headers.iter().all(String::is_empty) {
        return Err(Error::Format {
            path: path.to_path_buf(),
            message: "empty file or missing header row".into(),
        });
    }
    let has_label = headers.last().is_some_and(|h| h == LABEL_COLUMN);
    let d = headers.len() - usize::from(has_label);
    if d == 0 {
        return Err(Error::Format {
            path: path.to_path_buf(),
            message: "no feature columns".into(),
        });
    }

    let mut values = Vec::new();
    let mut labels = Vec::new();
    let mut rows = 0;
    for (i, record) in reader.records().enumerate() {
        let record = record?;
        // 1-based line number in the file, header is line 1
        let line = i + 2;
        if record.len() != headers.len() {
            return Err(Error::Parse {
                path: path.to_path_buf(),
                row: line,
                column: record.len().min(headers.len()) + 1,
                message: format!("expected {} fields, found {}", headers.len(), record.len()),
            });
        }
        for (c, cell) in record.iter().take(d).enumerate() {
            let v: f64 = cell.trim().parse().map_err(|_| Error::Parse {
                path: path.to_path_buf(),
                row: line,
                column: c + 1,
                message: format!("cannot parse {cell:?} in column {:?} as a number", headers[c]),
            })?;
            values.push(v);
        }
        if has_label {
            let cell = record[d].trim();
            let l = match cell {
                "0" => false,
                "1" => true,
                _ => {
                    return Err(Error::Parse {
                        path: path.to_path_buf(),
                        row: line,
                        column: d + 1,
                        message: format!("label must be 0 or 1, found {cell:?}"),
                    })
                }
            };
            labels.push(l);
        }
        rows += 1;
    }
    if rows == 0 {
        return Err(Error::Format {
            path: path.to_path_buf(),
            message: "no data rows".into(),
        });
    }
    let features = Matrix::from_vec(rows, d, values)?;
    if !features.is_finite() {
        return Err(Error::Format {
            path: path.to_path_buf(),
            message: "features contain NaN or infinite values".into(),
        });
    }
    let name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    Dataset::new(
        name,
        headers[..d].to_vec(),
        features,
        has_label.then_some(labels),
    )
}

/// Write a dataset in the same CSV contract [`load_csv`] reads. Floats use
/// shortest round-trip formatting, so a reload is bit-exact.
pub fn write_csv(dataset: &Dataset, path: impl AsRef<Path>) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    let mut header: Vec<&str> = dataset.feature_names.iter().map(String::as_str).collect();
    if dataset.labels.is_some() {
        header.push(LABEL_COLUMN);
    }
    w.write_record(&header)?;
    for (i, row) in dataset.features.iter_rows().enumerate() {
        let mut rec: Vec<String> = row.iter().map(|v| v.to_string()).collect();
        if let Some(l) = &dataset.labels {
            rec.push(if l[i] { "1" } else { "0" }.to_string());
        }
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

/// Per-column z-score with population statistics.
pub fn standardize(dataset: &Dataset) -> Dataset {
    let x = &dataset.features;
    let (n, d) = x.shape();
    let mut out = x.clone();
    if n == 0 {
        return dataset.clone();
    }
    for c in 0..d {
        let mean = (0..n).map(|r| x.get(r, c)).sum::<f64>() / n as f64;
        let var = (0..n).map(|r| (x.get(r, c) - mean).powi(2)).sum::<f64>() / n as f64;
        let std = var.sqrt();
        for r in 0..n {
            let v = if std < STD_FLOOR {
                0.0
            } else {
                (x.get(r, c) - mean) / std
            };
            out.set(r, c, v);
        }
    }
    Dataset {
        features: out,
        ..dataset.clone()
    }
}

/// Fixed subset of rows on which loss entropy is measured.
#[derive(Clone, Debug, PartialEq)]
pub struct EvalSet {
    indices: Vec<usize>,
    features: Matrix,
}

impl EvalSet {
    /// Uniform sample of `min(n_eval, n)` distinct rows; all rows in their
    /// original order when `n_eval >= n`.
    pub fn sample(features: &Matrix, n_eval: usize, seed: u64) -> Result<Self> {
        if n_eval == 0 {
            return Err(Error::InvalidParameter("n_eval must be at least 1".into()));
        }
        let n = features.rows();
        let indices: Vec<usize> = if n_eval >= n {
            (0..n).collect()
        } else {
            let mut rng = seeded_rng(seed);
            let mut idx = rand::seq::index::sample(&mut rng, n, n_eval).into_vec();
            idx.sort_unstable();
            idx
        };
        Ok(EvalSet {
            features: features.select_rows(&indices),
            indices,
        })
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn features(&self) -> &Matrix {
        &self.features
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    /// Hash of indices and feature bits.
    pub fn fingerprint(&self) -> u64 {
        let mut h = DefaultHasher::new();
        self.indices.hash(&mut h);
        for v in self.features.as_slice() {
            v.to_bits().hash(&mut h);
        }
        h.finish()
    }
}

pub fn sample_eval_set(dataset: &Dataset, n_eval: usize, seed: u64) -> Result<EvalSet> {
    EvalSet::sample(&dataset.features, n_eval, seed)
}

/// Row-index batches for one epoch: a seeded shuffle split into consecutive
/// chunks, last chunk possibly short. With `batch_size >= n` a single batch
/// in identity order.
pub fn batches(n: usize, batch_size: usize, seed: u64, epoch: u64) -> Result<Vec<Vec<usize>>> {
    if batch_size == 0 {
        return Err(Error::InvalidParameter("batch size must be at least 1".into()));
    }
    let mut order: Vec<usize> = (0..n).collect();
    if batch_size >= n {
        return Ok(vec![order]);
    }
    let mut rng = seeded_rng(seed ^ (epoch.wrapping_add(1)).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    order.shuffle(&mut rng);
    Ok(order.chunks(batch_size).map(<[usize]>::to_vec).collect())
}

/// Endless sequence of training batches: epoch after epoch of [`batches`].
#[derive(Clone, Debug)]
pub struct BatchSchedule {
    n: usize,
    batch_size: usize,
    seed: u64,
    epoch: u64,
    current: Vec<Vec<usize>>,
    pos: usize,
}

impl BatchSchedule {
    pub fn new(n: usize, batch_size: usize, seed: u64) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidParameter("cannot batch an empty dataset".into()));
        }
        let current = batches(n, batch_size, seed, 0)?;
        Ok(BatchSchedule {
            n,
            batch_size,
            seed,
            epoch: 0,
            current,
            pos: 0,
        })
    }

    /// True when every batch is the whole dataset in its original order.
    pub fn is_full_batch(&self) -> bool {
        self.batch_size >= self.n
    }

    pub fn batches_per_epoch(&self) -> usize {
        self.current.len()
    }

    pub fn next_batch(&mut self) -> Result<&[usize]> {
        if self.pos == self.current.len() {
            self.epoch += 1;
            self.current = batches(self.n, self.batch_size, self.seed, self.epoch)?;
            self.pos = 0;
        }
        self.pos += 1;
        Ok(&self.current[self.pos - 1])
    }
}

/// Standard-normal inliers plus outliers uniform on `[-spread, spread]^d`,
/// rows shuffled.
pub fn gen_synthetic(n_in: usize, n_out: usize, d: usize, spread: f64, seed: u64) -> Result<Dataset> {
    if n_in == 0 || n_out == 0 {
        return Err(Error::InvalidParameter(
            "need at least one inlier and one outlier".into(),
        ));
    }
    if d == 0 {
        return Err(Error::InvalidParameter("dimension must be at least 1".into()));
    }
    if !(spread.is_finite() && spread > 1.0) {
        return Err(Error::InvalidParameter(format!(
            "spread must be finite and > 1, got {spread}"
        )));
    }
    let mut rng = seeded_rng(seed);
    let mut rows: Vec<(Vec<f64>, bool)> = Vec::with_capacity(n_in + n_out);
    for _ in 0..n_in {
        let row = (0..d).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
        rows.push((row, false));
    }
    for _ in 0..n_out {
        let row = (0..d).map(|_| rng.random_range(-spread..=spread)).collect();
        rows.push((row, true));
    }
    rows.shuffle(&mut rng);
    let labels = rows.iter().map(|(_, l)| *l).collect();
    let data = rows.into_iter().flat_map(|(r, _)| r).collect();
    let features = Matrix::from_vec(n_in + n_out, d, data)?;
    Dataset::from_features("synthetic", features, Some(labels))
}
