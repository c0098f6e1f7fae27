//! Small convolutional network trained from scratch on candidate patches.
//!
//! Layer stack (input 3x32x32, ReLU after every convolution and after the
//! fully connected layer):
//!
//! | layer   | kernel        | output   |
//! |---------|---------------|----------|
//! | conv1   | 5x5x3 -> 32, pad 2  | 32x32x32 |
//! | maxpool | 3x3, stride 2 | 32x16x16 |
//! | dropout | keep 0.99     |          |
//! | conv2   | 5x5x32 -> 32, pad 2 | 32x16x16 |
//! | avgpool | 3x3, stride 2 | 32x8x8   |
//! | conv3   | 5x5x32 -> 64, pad 2 | 64x8x8   |
//! | avgpool | 3x3, stride 2 | 64x4x4   |
//! | conv4   | 4x4x64 -> 128 | 128      |
//! | fc      | 128 -> 128    | 128 (features) |
//! | head    | 128 -> 2      | softmax  |
//!
//! Pools pad one row/column at the bottom/right; the average pool divides
//! by the number of in-frame cells.

mod float;
pub mod gradcheck;
mod net;

use std::io::{Read, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::patches::{LabeledPatchSet, Patch, PATCH_LEN};
use crate::rng::{rng_for, stream};

pub use self::float::Float;
pub use self::net::{N_FEATURES, PARAM_NAMES, PARAM_SHAPES};
use self::net::{param_len, DropMask, Params, Workspace, DROP_LEN, INPUT_LEN};

/// Probabilities are clamped to at least this value inside logarithms.
pub const PROB_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    /// Initial learning rate.
    pub eta0: f64,
    pub batch: usize,
    pub weight_decay: f64,
    pub max_epochs: usize,
    /// The learning rate is halved when the loss improves by less than this
    /// fraction of the mean of the previous `window` epoch losses.
    pub halving_threshold: f64,
    /// Training stops when the relative change falls below this value.
    pub stop_threshold: f64,
    pub window: usize,
    /// Dropout keep probability after the first pooling layer.
    pub keep_prob: f64,
    /// Standard deviation of the initial weights of the first layer.
    pub init_std_first: f64,
    /// Standard deviation of the initial weights of the other layers.
    pub init_std: f64,
    /// Overrides the class balance stored in the patch set.
    pub beta: Option<f64>,
    pub seed: u64,
    /// Train in `f32` (the model is stored in `f64` either way).
    pub single_precision: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            eta0: 0.05,
            batch: 100,
            weight_decay: 5e-4,
            max_epochs: 200,
            halving_threshold: 0.01,
            stop_threshold: 1e-4,
            window: 10,
            keep_prob: 0.99,
            init_std_first: 0.01,
            init_std: 0.05,
            beta: None,
            seed: 0,
            single_precision: false,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            self.eta0,
            self.halving_threshold,
            self.stop_threshold,
            self.init_std_first,
            self.init_std,
        ];
        if positive.iter().any(|v| !(*v > 0.0 && v.is_finite())) {
            return Err(Error::invalid("learning rate, thresholds and init scales must be positive"));
        }
        if !(self.weight_decay >= 0.0 && self.weight_decay.is_finite()) {
            return Err(Error::invalid("weight decay must be nonnegative"));
        }
        if self.batch == 0 || self.window == 0 {
            return Err(Error::invalid("batch and window must be at least 1"));
        }
        if !(self.keep_prob > 0.0 && self.keep_prob <= 1.0) {
            return Err(Error::invalid("keep probability must lie in (0, 1]"));
        }
        if let Some(b) = self.beta {
            if !(b > 0.0 && b < 1.0) {
                return Err(Error::invalid("beta must lie in (0, 1)"));
            }
        }
        Ok(())
    }
}

/// Output of one forward pass.
#[derive(Debug, Clone, PartialEq)]
pub struct ForwardOutput {
    /// Activation of the fully connected layer.
    pub features: Vec<f64>,
    pub logits: [f64; 2],
    /// Softmax probability of the lesion class.
    pub prob: f64,
}

/// Network weights together with the mean image subtracted from inputs.
#[derive(Debug, Clone, PartialEq)]
pub struct CnnModel {
    params: Params<f64>,
    pub mean_image: Vec<f64>,
    pub seed: u64,
}

impl CnnModel {
    /// Gaussian weights (`std_first` for the first layer, `std` elsewhere)
    /// and zero biases.
    pub fn initialize(seed: u64, std_first: f64, std: f64) -> Self {
        let mut rng = rng_for(seed, stream::CNN_INIT);
        let params = (0..PARAM_SHAPES.len())
            .map(|i| {
                if net::is_weight(i) {
                    let sd = if i == 0 { std_first } else { std };
                    let normal = Normal::new(0.0, sd).expect("positive std");
                    (0..param_len(i)).map(|_| normal.sample(&mut rng)).collect()
                } else {
                    vec![0.0; param_len(i)]
                }
            })
            .collect();
        Self {
            params,
            mean_image: vec![0.0; PATCH_LEN],
            seed,
        }
    }

    /// All parameters zero.
    pub fn zeros() -> Self {
        Self {
            params: net::zeros_like(),
            mean_image: vec![0.0; PATCH_LEN],
            seed: 0,
        }
    }

    /// Builds a model from tensors in [`PARAM_NAMES`] order.
    pub fn from_params(params: Vec<Vec<f64>>, mean_image: Vec<f64>, seed: u64) -> Result<Self> {
        if params.len() != PARAM_SHAPES.len() {
            return Err(Error::invalid("wrong number of parameter tensors"));
        }
        for (i, p) in params.iter().enumerate() {
            if p.len() != param_len(i) {
                return Err(Error::invalid(format!("{} has {} values, expected {}", PARAM_NAMES[i], p.len(), param_len(i))));
            }
            if p.iter().any(|v| !v.is_finite()) {
                return Err(Error::invalid(format!("{} holds non-finite values", PARAM_NAMES[i])));
            }
        }
        if mean_image.len() != PATCH_LEN {
            return Err(Error::invalid("mean image has the wrong size"));
        }
        Ok(Self {
            params,
            mean_image,
            seed,
        })
    }

    pub fn params(&self) -> &[Vec<f64>] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [Vec<f64>] {
        &mut self.params
    }

    fn check_input(input: &[f64]) -> Result<()> {
        if input.len() != INPUT_LEN {
            return Err(Error::invalid(format!("network input needs {INPUT_LEN} values, got {}", input.len())));
        }
        Ok(())
    }

    /// Evaluation-mode forward pass on a centred input.
    pub fn forward(&self, input: &[f64]) -> Result<ForwardOutput> {
        Self::check_input(input)?;
        let t = net::forward(&self.params, input, None, &mut Workspace::default());
        Ok(output_of(&t))
    }

    /// Training-mode forward pass: dropout masks are drawn from `rng`.
    pub fn forward_train(&self, input: &[f64], keep_prob: f64, rng: &mut impl Rng) -> Result<ForwardOutput> {
        Self::check_input(input)?;
        let mask = dropout_mask::<f64>(keep_prob, rng);
        let t = net::forward(&self.params, input, Some(&mask), &mut Workspace::default());
        Ok(output_of(&t))
    }

    /// Subtracts the stored mean image from a raw patch.
    pub fn center(&self, patch: &Patch) -> Vec<f64> {
        patch.data.iter().zip(&self.mean_image).map(|(v, m)| v - m).collect()
    }

    /// Fully connected activations of a raw (uncentred) patch.
    pub fn extract_features(&self, patch: &Patch) -> Vec<f64> {
        self.forward(&self.center(patch)).expect("patches have the network input size").features
    }

    /// Lesion probability of a raw (uncentred) patch.
    pub fn predict(&self, patch: &Patch) -> f64 {
        self.forward(&self.center(patch)).expect("patches have the network input size").prob
    }

    pub fn extract_features_batch(&self, patches: &[Patch]) -> Vec<Vec<f64>> {
        patches.par_iter().map(|p| self.extract_features(p)).collect()
    }

    /// Objective `sum_i w_i * -log P_i + weight_decay/2 * ||W||^2` over a
    /// batch of centred inputs, where `w` is `beta` for lesions and
    /// `1 - beta` otherwise. `masks` fixes the dropout multipliers (one per
    /// sample); without it dropout is off.
    pub fn objective(&self, inputs: &[Vec<f64>], labels: &[u8], beta: f64, weight_decay: f64, masks: Option<&[Vec<f64>]>) -> Result<f64> {
        check_batch(inputs, labels, masks)?;
        let mut ws = Workspace::default();
        let mut loss = 0.0;
        for (i, (x, &y)) in inputs.iter().zip(labels).enumerate() {
            let t = net::forward(&self.params, x, masks.map(|m| &m[i]), &mut ws);
            loss += class_weight(y, beta) * -t.probs[y as usize].max(PROB_FLOOR).ln();
        }
        Ok(loss + 0.5 * weight_decay * self.weight_norm2())
    }

    /// Gradient of [`CnnModel::objective`] with respect to every parameter,
    /// in [`PARAM_NAMES`] order.
    pub fn backward(&self, inputs: &[Vec<f64>], labels: &[u8], beta: f64, weight_decay: f64, masks: Option<&[Vec<f64>]>) -> Result<Vec<Vec<f64>>> {
        check_batch(inputs, labels, masks)?;
        let weights: Vec<f64> = labels.iter().map(|&y| class_weight(y, beta)).collect();
        let refs: Vec<&[f64]> = inputs.iter().map(|v| v.as_slice()).collect();
        let mask_refs: Option<Vec<&DropMask<f64>>> = masks.map(|m| m.iter().collect());
        let (mut grads, _) = batch_gradients(&self.params, &refs, labels, &weights, mask_refs.as_deref());
        for (i, g) in grads.iter_mut().enumerate() {
            if net::is_weight(i) {
                for (gv, &p) in g.iter_mut().zip(&self.params[i]) {
                    *gv += weight_decay * p;
                }
            }
        }
        Ok(grads)
    }

    fn weight_norm2(&self) -> f64 {
        self.params
            .iter()
            .enumerate()
            .filter(|(i, _)| net::is_weight(*i))
            .flat_map(|(_, p)| p.iter())
            .map(|v| v * v)
            .sum()
    }
}

fn check_batch(inputs: &[Vec<f64>], labels: &[u8], masks: Option<&[Vec<f64>]>) -> Result<()> {
    if inputs.len() != labels.len() {
        return Err(Error::invalid("inputs and labels differ in length"));
    }
    if inputs.iter().any(|x| x.len() != INPUT_LEN) {
        return Err(Error::invalid(format!("network inputs need {INPUT_LEN} values")));
    }
    if labels.iter().any(|&y| y > 1) {
        return Err(Error::invalid("labels must be 0 or 1"));
    }
    if let Some(m) = masks {
        if m.len() != inputs.len() || m.iter().any(|v| v.len() != DROP_LEN) {
            return Err(Error::invalid(format!("one dropout mask of {DROP_LEN} values per input is required")));
        }
    }
    Ok(())
}

fn output_of(t: &net::Trace<f64>) -> ForwardOutput {
    ForwardOutput {
        features: t.a5.clone(),
        logits: t.logits,
        prob: t.probs[1],
    }
}

/// Number of multipliers in a dropout mask.
pub const DROPOUT_LEN: usize = DROP_LEN;

/// Inverted dropout multipliers: `1/keep` with probability `keep`, else 0.
pub fn dropout_mask<T: Float>(keep: f64, rng: &mut impl Rng) -> Vec<T> {
    let scale = T::from_f64(1.0 / keep);
    (0..DROP_LEN)
        .map(|_| if rng.random::<f64>() < keep { scale } else { T::ZERO })
        .collect()
}

#[inline]
fn class_weight(label: u8, beta: f64) -> f64 {
    if label == 1 {
        beta
    } else {
        1.0 - beta
    }
}

/// Class-balanced cross-entropy `-beta * sum_{y=1} log p - (1-beta) *
/// sum_{y=0} log(1-p)`, where `p` is the predicted lesion probability.
/// The probability of the true class is floored at `1e-12`.
pub fn balanced_loss(probs: &[f64], labels: &[u8], beta: f64) -> f64 {
    probs
        .iter()
        .zip(labels)
        .map(|(&p, &y)| {
            let p_true = if y == 1 { p } else { 1.0 - p };
            class_weight(y, beta) * -p_true.clamp(PROB_FLOOR, 1.0).ln()
        })
        .sum()
}

/// Samples processed per reduction chunk; fixed so results do not depend on
/// the number of threads.
const CHUNK: usize = 8;

/// Sum over the batch of per-sample gradients and weighted losses.
fn batch_gradients<T: Float>(
    params: &Params<T>,
    inputs: &[&[T]],
    labels: &[u8],
    weights: &[f64],
    masks: Option<&[&DropMask<T>]>,
) -> (Params<T>, f64) {
    let idx: Vec<usize> = (0..inputs.len()).collect();
    let partial: Vec<(Params<T>, f64)> = idx
        .par_chunks(CHUNK)
        .map(|chunk| {
            let mut g = net::zeros_like::<T>();
            // Each sample is differentiated into its own buffer and then
            // added, so the sum does not depend on accumulation order
            // inside the matrix products.
            let mut sample = net::zeros_like::<T>();
            let mut ws = Workspace::default();
            let mut loss = 0.0;
            for &i in chunk {
                let m = masks.map(|m| m[i]);
                let t = net::forward(params, inputs[i], m, &mut ws);
                let y = labels[i] as usize;
                loss += weights[i] * -t.probs[y].to_f64().max(PROB_FLOOR).ln();
                sample.iter_mut().for_each(|s| s.fill(T::ZERO));
                net::backward(params, &t, m, y, T::from_f64(weights[i]), &mut sample, &mut ws);
                for (a, b) in g.iter_mut().zip(&sample) {
                    for (x, &y) in a.iter_mut().zip(b) {
                        *x += y;
                    }
                }
            }
            (g, loss)
        })
        .collect();
    let mut iter = partial.into_iter();
    let (mut total, mut loss) = iter.next().unwrap_or_else(|| (net::zeros_like(), 0.0));
    for (g, l) in iter {
        for (a, b) in total.iter_mut().zip(g) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += y;
            }
        }
        loss += l;
    }
    (total, loss)
}

/// One line of the training log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Mean per-sample weighted loss over the epoch.
    pub loss: f64,
    /// Learning rate used during the epoch.
    pub eta: f64,
    /// `(mean of previous window - loss) / mean`, once a full window exists.
    pub relative_improvement: Option<f64>,
    /// The learning rate was halved after this epoch.
    pub halved: bool,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainLog {
    pub epochs: Vec<EpochRecord>,
    /// Training ended because the relative change fell below the threshold.
    pub converged: bool,
}

/// Decision of the learning-rate schedule after an epoch.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScheduleStep {
    pub relative_improvement: Option<f64>,
    pub halve: bool,
    pub stop: bool,
}

/// Compares `loss` with the mean of the last `window` entries of `history`.
pub fn schedule_step(history: &[f64], loss: f64, cfg: &TrainConfig) -> ScheduleStep {
    if history.len() < cfg.window {
        return ScheduleStep {
            relative_improvement: None,
            halve: false,
            stop: false,
        };
    }
    let mean = history[history.len() - cfg.window..].iter().sum::<f64>() / cfg.window as f64;
    let rel = (mean - loss) / mean;
    let stop = rel.abs() < cfg.stop_threshold;
    ScheduleStep {
        relative_improvement: Some(rel),
        halve: !stop && rel < cfg.halving_threshold,
        stop,
    }
}

#[derive(Debug, Clone)]
pub struct TrainedCnn {
    pub model: CnnModel,
    pub log: TrainLog,
}

/// Mini-batch SGD with weight decay, shuffling every epoch and the
/// plateau-driven learning-rate schedule of [`schedule_step`].
pub fn train(set: &LabeledPatchSet, cfg: &TrainConfig) -> Result<TrainedCnn> {
    cfg.validate()?;
    if set.is_empty() {
        return Err(Error::invalid("the patch set is empty"));
    }
    let pos = set.positives();
    if pos == 0 || pos == set.len() {
        return Err(Error::DegenerateClassBalance(format!("{pos} positives among {} patches", set.len())));
    }
    let beta = cfg.beta.unwrap_or(set.beta);
    let mut model = CnnModel::initialize(cfg.seed, cfg.init_std_first, cfg.init_std);
    model.mean_image = set.mean_image.clone();
    let log = if cfg.single_precision {
        train_generic::<f32>(&mut model, set, cfg, beta)?
    } else {
        train_generic::<f64>(&mut model, set, cfg, beta)?
    };
    Ok(TrainedCnn { model, log })
}

fn train_generic<T: Float>(model: &mut CnnModel, set: &LabeledPatchSet, cfg: &TrainConfig, beta: f64) -> Result<TrainLog> {
    let mut params: Params<T> = model
        .params
        .iter()
        .map(|p| p.iter().map(|&v| T::from_f64(v)).collect())
        .collect();
    let inputs: Vec<Vec<T>> = set
        .patches
        .iter()
        .map(|p| p.data.iter().map(|&v| T::from_f64(v)).collect())
        .collect();
    let weights: Vec<f64> = set.labels.iter().map(|&y| class_weight(y, beta)).collect();
    let mut rng: ChaCha8Rng = rng_for(cfg.seed, stream::CNN_TRAIN);
    let mut order: Vec<usize> = (0..set.len()).collect();
    let mut eta = cfg.eta0;
    let mut log = TrainLog::default();
    let mut history: Vec<f64> = Vec::new();

    for epoch in 0..cfg.max_epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for batch in order.chunks(cfg.batch) {
            let masks: Option<Vec<DropMask<T>>> =
                (cfg.keep_prob < 1.0).then(|| batch.iter().map(|_| dropout_mask::<T>(cfg.keep_prob, &mut rng)).collect());
            let mask_refs: Option<Vec<&DropMask<T>>> = masks.as_ref().map(|m| m.iter().collect());
            let xs: Vec<&[T]> = batch.iter().map(|&i| inputs[i].as_slice()).collect();
            let ys: Vec<u8> = batch.iter().map(|&i| set.labels[i]).collect();
            let ws: Vec<f64> = batch.iter().map(|&i| weights[i]).collect();
            let (grads, loss) = batch_gradients(&params, &xs, &ys, &ws, mask_refs.as_deref());
            total += loss;
            let inv = T::from_f64(1.0 / batch.len() as f64);
            let lr = T::from_f64(eta);
            let wd = T::from_f64(cfg.weight_decay);
            for (i, (p, g)) in params.iter_mut().zip(&grads).enumerate() {
                let decay = if net::is_weight(i) { wd } else { T::ZERO };
                for (pv, &gv) in p.iter_mut().zip(g) {
                    *pv -= lr * (gv * inv + decay * *pv);
                }
            }
        }
        let loss = total / set.len() as f64;
        if !loss.is_finite() || params.iter().flatten().any(|v| !v.to_f64().is_finite()) {
            return Err(Error::Diverged { epoch });
        }
        let step = schedule_step(&history, loss, cfg);
        log.epochs.push(EpochRecord {
            epoch,
            loss,
            eta,
            relative_improvement: step.relative_improvement,
            halved: step.halve,
        });
        log::debug!("epoch {epoch}: loss {loss:.6} eta {eta:.3e}");
        history.push(loss);
        if step.stop {
            log.converged = true;
            break;
        }
        if step.halve {
            eta /= 2.0;
        }
    }
    model.params = params
        .iter()
        .map(|p| p.iter().map(|v| v.to_f64()).collect())
        .collect();
    Ok(log)
}

// Model file layout, little-endian:
//   b"RLCN", u32 version, u32 feature count, u64 seed,
//   mean image (u32 length + f64 values),
//   u32 tensor count, then per tensor: u32 rank, u32 dims..., f64 values.
const MAGIC: &[u8; 4] = b"RLCN";
const VERSION: u32 = 1;

pub fn write_model(model: &CnnModel, mut out: impl Write) -> Result<()> {
    let mut buf = Vec::new();
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&VERSION.to_le_bytes());
    buf.extend_from_slice(&(N_FEATURES as u32).to_le_bytes());
    buf.extend_from_slice(&model.seed.to_le_bytes());
    buf.extend_from_slice(&(model.mean_image.len() as u32).to_le_bytes());
    for v in &model.mean_image {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    buf.extend_from_slice(&(model.params.len() as u32).to_le_bytes());
    for (i, p) in model.params.iter().enumerate() {
        let shape = PARAM_SHAPES[i];
        buf.extend_from_slice(&(shape.len() as u32).to_le_bytes());
        for &d in shape {
            buf.extend_from_slice(&(d as u32).to_le_bytes());
        }
        for v in p {
            buf.extend_from_slice(&v.to_le_bytes());
        }
    }
    out.write_all(&buf)?;
    Ok(())
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let end = end.ok_or_else(|| Error::format("model", "truncated file"))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn f64s(&mut self, n: usize) -> Result<Vec<f64>> {
        Ok(self
            .take(n.checked_mul(8).ok_or_else(|| Error::format("model", "size overflow"))?)?
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect())
    }
}

pub fn read_model(mut input: impl Read) -> Result<CnnModel> {
    let mut bytes = Vec::new();
    input.read_to_end(&mut bytes)?;
    let mut c = Cursor { bytes: &bytes, pos: 0 };
    if c.take(4)? != MAGIC {
        return Err(Error::format("model", "bad magic"));
    }
    let version = c.u32()?;
    if version != VERSION {
        return Err(Error::format("model", format!("unsupported version {version}")));
    }
    let n = c.u32()? as usize;
    if n != N_FEATURES {
        return Err(Error::format("model", format!("expected {N_FEATURES} features, found {n}")));
    }
    let seed = c.u64()?;
    let mean_len = c.u32()? as usize;
    let mean_image = c.f64s(mean_len)?;
    let count = c.u32()? as usize;
    if count != PARAM_SHAPES.len() {
        return Err(Error::format("model", format!("expected {} tensors, found {count}", PARAM_SHAPES.len())));
    }
    let mut params = Vec::with_capacity(count);
    for (i, shape) in PARAM_SHAPES.iter().enumerate() {
        let rank = c.u32()? as usize;
        let dims = (0..rank).map(|_| c.u32().map(|d| d as usize)).collect::<Result<Vec<_>>>()?;
        if dims != *shape {
            return Err(Error::format("model", format!("{} has shape {dims:?}, expected {shape:?}", PARAM_NAMES[i])));
        }
        params.push(c.f64s(param_len(i))?);
    }
    if c.pos != bytes.len() {
        return Err(Error::format("model", "trailing bytes"));
    }
    CnnModel::from_params(params, mean_image, seed).map_err(|e| Error::format("model", e.to_string()))
}

pub fn save_model(path: impl AsRef<Path>, model: &CnnModel) -> Result<()> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    write_model(model, &mut f)?;
    f.flush()?;
    Ok(())
}

pub fn load_model(path: impl AsRef<Path>) -> Result<CnnModel> {
    read_model(std::io::BufReader::new(std::fs::File::open(path)?))
}
