//! Per-sensor CNN-LSTM, CNN baseline, training and score-level fusion.
//!
//! Everything is implemented directly on `ndarray` in `f64`: layers read their
//! weights from one flat parameter vector, which keeps the optimizer, gradient
//! checks and the on-disk format trivial.

mod network;
pub mod ops;

use std::collections::HashSet;
use std::path::Path;

use log::debug;
use ndarray::{Array2, Array3};
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

pub use network::{CnnLstmSpec, CnnSpec, ModelSpec, Network, PoolingMode};

use crate::domain::{N_SENSORS, N_STYLES};
use crate::error::{Error, Result};
use crate::rng::{stream_id, stream_rng};
use crate::windowing::{Segment, SegmentOrigin};

const PREDICT_BATCH: usize = 128;
const SIMPLEX_TOL: f64 = 1e-5;

/// An initialized network and its parameters.
#[derive(Debug, Clone)]
pub struct DeepModel {
    pub network: Network,
    pub params: Vec<f64>,
}

pub fn build_cnn_lstm(spec: &CnnLstmSpec, seed: u64) -> Result<DeepModel> {
    build(&ModelSpec::CnnLstm(spec.clone()), seed)
}

pub fn build_cnn(spec: &CnnSpec, seed: u64) -> Result<DeepModel> {
    build(&ModelSpec::Cnn(spec.clone()), seed)
}

pub fn build(spec: &ModelSpec, seed: u64) -> Result<DeepModel> {
    let network = Network::build(spec)?;
    let params = network.init_params(seed);
    Ok(DeepModel { network, params })
}

/// Per-channel z-score statistics.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Normalization {
    pub mean: [f64; 3],
    pub std: [f64; 3],
}

impl Normalization {
    pub const IDENTITY: Normalization = Normalization {
        mean: [0.0; 3],
        std: [1.0; 3],
    };

    /// Statistics over every sample of every segment; zero spread maps to 1.
    pub fn fit(segments: &[&Segment]) -> Normalization {
        let mut n = 0usize;
        let mut sum = [0.0; 3];
        for seg in segments {
            for row in seg.data.rows() {
                for c in 0..3 {
                    sum[c] += row[c];
                }
            }
            n += seg.len();
        }
        if n == 0 {
            return Normalization::IDENTITY;
        }
        let mean = sum.map(|s| s / n as f64);
        let mut ss = [0.0; 3];
        for seg in segments {
            for row in seg.data.rows() {
                for c in 0..3 {
                    let d = row[c] - mean[c];
                    ss[c] += d * d;
                }
            }
        }
        let std = ss.map(|s| {
            let sd = (s / n as f64).sqrt();
            if sd > 0.0 { sd } else { 1.0 }
        });
        Normalization { mean, std }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Optimizer {
    Adam,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Loss {
    CategoricalCrossEntropy,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub optimizer: Optimizer,
    pub loss: Loss,
    pub seed: u64,
    /// Stop after this many epochs without a validation-loss improvement.
    pub patience: Option<usize>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 300,
            batch_size: 64,
            learning_rate: 2e-4,
            optimizer: Optimizer::Adam,
            loss: Loss::CategoricalCrossEntropy,
            seed: 0,
            patience: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::Parameter("epochs must be at least 1".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::Parameter("batch size must be at least 1".into()));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Parameter(format!(
                "learning rate must be positive, got {}",
                self.learning_rate
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: Option<f64>,
    pub val_accuracy: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct History {
    pub epochs: Vec<EpochRecord>,
    /// Epoch whose parameters were kept.
    pub best_epoch: usize,
}

#[derive(Debug, Clone)]
pub struct TrainedModel {
    pub model: DeepModel,
    pub norm: Normalization,
    pub history: History,
}

/// Prepared (downsampled, normalized) network inputs, one per segment.
fn prepare_all(network: &Network, norm: &Normalization, segments: &[&Segment]) -> Result<Vec<Array2<f64>>> {
    segments
        .iter()
        .map(|seg| {
            network
                .prepare(seg.data.view(), &norm.mean, &norm.std)
                .map_err(|e| match e {
                    Error::Contract(m) => Error::Contract(format!("segment {:?}: {m}", seg.origin)),
                    other => other,
                })
        })
        .collect()
}

fn stack(network: &Network, inputs: &[&Array2<f64>]) -> Array3<f64> {
    let (len, ch) = network.input_shape();
    let mut x = Array3::zeros((inputs.len(), len, ch));
    for (mut dst, src) in x.outer_iter_mut().zip(inputs) {
        dst.assign(*src);
    }
    x
}

fn check_labeled(segments: &[&Segment], labels: &[usize], what: &str) -> Result<()> {
    if segments.len() != labels.len() {
        return Err(Error::Contract(format!(
            "{what}: {} segments but {} labels",
            segments.len(),
            labels.len()
        )));
    }
    if let Some(&bad) = labels.iter().find(|&&l| l >= N_STYLES) {
        return Err(Error::Contract(format!("{what}: label {bad} outside 0..{N_STYLES}")));
    }
    Ok(())
}

struct Adam {
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
    lr: f64,
}

impl Adam {
    const BETA1: f64 = 0.9;
    const BETA2: f64 = 0.999;
    const EPS: f64 = 1e-7;

    fn new(n: usize, lr: f64) -> Self {
        Adam {
            m: vec![0.0; n],
            v: vec![0.0; n],
            t: 0,
            lr,
        }
    }

    fn step(&mut self, p: &mut [f64], g: &[f64]) {
        self.t += 1;
        let c1 = 1.0 - Self::BETA1.powi(self.t);
        let c2 = 1.0 - Self::BETA2.powi(self.t);
        let step = self.lr * c2.sqrt() / c1;
        for i in 0..p.len() {
            self.m[i] = Self::BETA1 * self.m[i] + (1.0 - Self::BETA1) * g[i];
            self.v[i] = Self::BETA2 * self.v[i] + (1.0 - Self::BETA2) * g[i] * g[i];
            p[i] -= step * self.m[i] / (self.v[i].sqrt() + Self::EPS * c2.sqrt());
        }
    }
}

/// Mean loss and accuracy over prepared inputs.
fn evaluate(model: &DeepModel, inputs: &[Array2<f64>], labels: &[usize]) -> Result<(f64, f64)> {
    let mut loss = 0.0;
    let mut correct = 0usize;
    for (chunk, ys) in inputs.chunks(PREDICT_BATCH).zip(labels.chunks(PREDICT_BATCH)) {
        let refs: Vec<&Array2<f64>> = chunk.iter().collect();
        let logits = model.network.logits(&model.params, &stack(&model.network, &refs))?;
        loss += ops::cross_entropy(&logits, ys).0 * ys.len() as f64;
        for (row, &y) in logits.rows().into_iter().zip(ys) {
            if crate::classical::argmax(row.as_slice().expect("contiguous")) == y {
                correct += 1;
            }
        }
    }
    let n = labels.len() as f64;
    Ok((loss / n, correct as f64 / n))
}

fn run_epochs(
    mut model: DeepModel,
    norm: Normalization,
    train: (&[&Segment], &[usize]),
    val: Option<(&[&Segment], &[usize])>,
    cfg: &TrainConfig,
) -> Result<TrainedModel> {
    let xs = prepare_all(&model.network, &norm, train.0)?;
    let ys = train.1;
    let val = match val {
        Some((vx, vy)) => Some((prepare_all(&model.network, &norm, vx)?, vy)),
        None => None,
    };
    let mut adam = Adam::new(model.params.len(), cfg.learning_rate);
    let mut order: Vec<usize> = (0..xs.len()).collect();
    let mut epochs = Vec::with_capacity(cfg.epochs);
    let mut best: Option<(f64, usize, Vec<f64>)> = None;
    for epoch in 1..=cfg.epochs {
        order.shuffle(&mut stream_rng(cfg.seed, stream_id(8, &[epoch as u64])));
        let mut total = 0.0;
        for batch in order.chunks(cfg.batch_size) {
            let inputs: Vec<&Array2<f64>> = batch.iter().map(|&i| &xs[i]).collect();
            let labels: Vec<usize> = batch.iter().map(|&i| ys[i]).collect();
            let x = stack(&model.network, &inputs);
            let (loss, grad) = model.network.loss_and_grad(&model.params, &x, &labels)?;
            if !loss.is_finite() {
                return Err(Error::Training(format!("loss diverged at epoch {epoch}")));
            }
            total += loss * batch.len() as f64;
            adam.step(&mut model.params, &grad);
        }
        let train_loss = total / xs.len() as f64;
        let (val_loss, val_accuracy) = match &val {
            Some((vx, vy)) => {
                let (l, a) = evaluate(&model, vx, vy)?;
                (Some(l), Some(a))
            }
            None => (None, None),
        };
        debug!("epoch {epoch}: train {train_loss:.4} val {val_loss:?} acc {val_accuracy:?}");
        epochs.push(EpochRecord {
            epoch,
            train_loss,
            val_loss,
            val_accuracy,
        });
        if let Some(vl) = val_loss {
            if best.as_ref().is_none_or(|(b, _, _)| vl < *b) {
                best = Some((vl, epoch, model.params.clone()));
            }
            let best_epoch = best.as_ref().map_or(epoch, |b| b.1);
            if cfg.patience.is_some_and(|p| epoch - best_epoch >= p) {
                break;
            }
        }
    }
    let best_epoch = match best {
        Some((_, e, params)) => {
            model.params = params;
            e
        }
        None => epochs.len(),
    };
    Ok(TrainedModel {
        model,
        norm,
        history: History { epochs, best_epoch },
    })
}

/// Trains with Adam on cross-entropy. Normalization statistics come from the
/// training segments; with a non-empty validation set the lowest-validation-loss
/// epoch is kept, otherwise the last.
pub fn train(
    model: DeepModel,
    train_x: &[&Segment],
    train_y: &[usize],
    val_x: &[&Segment],
    val_y: &[usize],
    cfg: &TrainConfig,
) -> Result<TrainedModel> {
    cfg.validate()?;
    if train_x.is_empty() {
        return Err(Error::Training("empty training set".into()));
    }
    check_labeled(train_x, train_y, "training set")?;
    check_labeled(val_x, val_y, "validation set")?;
    let seen: HashSet<&SegmentOrigin> = train_x.iter().map(|s| &s.origin).collect();
    if let Some(s) = val_x.iter().find(|s| seen.contains(&s.origin)) {
        return Err(Error::Contract(format!(
            "segment {:?} is in both training and validation sets",
            s.origin
        )));
    }
    let norm = Normalization::fit(train_x);
    let val = (!val_x.is_empty()).then_some((val_x, val_y));
    run_epochs(model, norm, (train_x, train_y), val, cfg)
}

/// Continues training every parameter of a trained model on new data, keeping
/// its normalization and the final epoch's parameters.
pub fn continue_training(
    trained: &TrainedModel,
    segments: &[&Segment],
    labels: &[usize],
    cfg: &TrainConfig,
) -> Result<TrainedModel> {
    cfg.validate()?;
    check_labeled(segments, labels, "tuning set")?;
    if segments.is_empty() {
        return Ok(trained.clone());
    }
    run_epochs(trained.model.clone(), trained.norm, (segments, labels), None, cfg)
}

impl TrainedModel {
    /// Class probabilities, one row per segment.
    pub fn predict_proba_batch(&self, segments: &[&Segment]) -> Result<Array2<f64>> {
        let mut out = Array2::zeros((segments.len(), N_STYLES));
        for (i, chunk) in segments.chunks(PREDICT_BATCH).enumerate() {
            let inputs = prepare_all(&self.model.network, &self.norm, chunk)?;
            let refs: Vec<&Array2<f64>> = inputs.iter().collect();
            let x = stack(&self.model.network, &refs);
            let p = self.model.network.predict_proba(&self.model.params, &x)?;
            let start = i * PREDICT_BATCH;
            out.slice_mut(ndarray::s![start..start + chunk.len(), ..]).assign(&p);
        }
        Ok(out)
    }

    pub fn predict_proba(&self, segment: &Segment) -> Result<[f64; N_STYLES]> {
        let p = self.predict_proba_batch(&[segment])?;
        Ok(std::array::from_fn(|k| p[[0, k]]))
    }

    /// Writes `spec.json`, `norm.json`, `params.bin` (little-endian f64) and `history.json`.
    pub fn save(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        write_json(&dir.join("spec.json"), self.model.network.spec())?;
        write_json(&dir.join("norm.json"), &self.norm)?;
        write_json(&dir.join("history.json"), &self.history)?;
        let bytes: Vec<u8> = self.model.params.iter().flat_map(|v| v.to_le_bytes()).collect();
        let path = dir.join("params.bin");
        std::fs::write(&path, bytes).map_err(|e| Error::io(&path, e))
    }

    pub fn load(dir: impl AsRef<Path>) -> Result<TrainedModel> {
        let dir = dir.as_ref();
        let spec: ModelSpec = read_json(&dir.join("spec.json"))?;
        let norm: Normalization = read_json(&dir.join("norm.json"))?;
        let history: History = read_json(&dir.join("history.json"))?;
        let path = dir.join("params.bin");
        let bytes = std::fs::read(&path).map_err(|e| Error::io(&path, e))?;
        let network = Network::build(&spec)?;
        if bytes.len() != network.n_params() * 8 {
            return Err(Error::Data(format!(
                "{}: expected {} parameters, found {} bytes",
                path.display(),
                network.n_params(),
                bytes.len()
            )));
        }
        let params = bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
            .collect();
        Ok(TrainedModel {
            model: DeepModel { network, params },
            norm,
            history,
        })
    }
}

fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value).map_err(|e| Error::json(path, e))?;
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::json(path, e))
}

fn check_simplex(p: &[f64]) -> Result<()> {
    if p.len() != N_STYLES {
        return Err(Error::Contract(format!(
            "probability vector has {} entries, expected {N_STYLES}",
            p.len()
        )));
    }
    let sum: f64 = p.iter().sum();
    if p.iter().any(|v| !v.is_finite() || *v < -SIMPLEX_TOL) || (sum - 1.0).abs() > SIMPLEX_TOL {
        return Err(Error::Contract(format!("not a probability vector: {p:?}")));
    }
    Ok(())
}

/// Element-wise mean of the five per-sensor probability vectors.
pub fn fuse_scores(probs: &[[f64; N_STYLES]]) -> Result<[f64; N_STYLES]> {
    if probs.len() != N_SENSORS {
        return Err(Error::Contract(format!(
            "fusion needs {N_SENSORS} probability vectors, got {}",
            probs.len()
        )));
    }
    for p in probs {
        check_simplex(p)?;
    }
    let n = probs.len() as f64;
    Ok(std::array::from_fn(|k| probs.iter().map(|p| p[k]).sum::<f64>() / n))
}

#[cfg(test)]
mod tests;
