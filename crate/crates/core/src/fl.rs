//! Federated learning core: a one-hidden-layer perceptron, local mini-batch
//! SGD, size-weighted FedAvg and centralized evaluation.

use ndarray::{s, Array1, Array2, ArrayView2, Axis, Zip};
use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::topology::LabeledDataset;
use crate::Scalar;

/// Weights of the `affine -> ReLU -> affine -> softmax` classifier.
///
/// `w1` is `d x H`, `w2` is `H x C`. Every array is kept in standard layout.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams<S> {
    pub w1: Array2<S>,
    pub b1: Array1<S>,
    pub w2: Array2<S>,
    pub b2: Array1<S>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub local_epochs: usize,
    pub batch_size: usize,
    pub hidden: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.05,
            local_epochs: 1,
            batch_size: 32,
            hidden: 32,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate.is_finite() && self.learning_rate >= 0.0) {
            return Err(Error::Config(format!(
                "train.learning_rate must be finite and non-negative, got {}",
                self.learning_rate
            )));
        }
        if self.local_epochs == 0 || self.batch_size == 0 || self.hidden == 0 {
            return Err(Error::Config(
                "train.local_epochs, train.batch_size and train.hidden must be positive".into(),
            ));
        }
        Ok(())
    }
}

impl<S: Scalar> ModelParams<S> {
    pub fn zeros(input_dim: usize, hidden: usize, classes: usize) -> Self {
        Self {
            w1: Array2::zeros((input_dim, hidden)),
            b1: Array1::zeros(hidden),
            w2: Array2::zeros((hidden, classes)),
            b2: Array1::zeros(classes),
        }
    }

    /// `(d, H, C)`.
    pub fn dims(&self) -> (usize, usize, usize) {
        (self.w1.nrows(), self.w1.ncols(), self.w2.ncols())
    }

    pub fn num_params(&self) -> usize {
        self.w1.len() + self.b1.len() + self.w2.len() + self.b2.len()
    }

    /// Each weight and bias array as one flat slice, in the order `w1, b1, w2, b2`.
    pub fn layers(&self) -> [&[S]; 4] {
        [
            self.w1.as_slice_memory_order().expect("contiguous"),
            self.b1.as_slice_memory_order().expect("contiguous"),
            self.w2.as_slice_memory_order().expect("contiguous"),
            self.b2.as_slice_memory_order().expect("contiguous"),
        ]
    }

    pub fn layers_mut(&mut self) -> [&mut [S]; 4] {
        [
            self.w1.as_slice_memory_order_mut().expect("contiguous"),
            self.b1.as_slice_memory_order_mut().expect("contiguous"),
            self.w2.as_slice_memory_order_mut().expect("contiguous"),
            self.b2.as_slice_memory_order_mut().expect("contiguous"),
        ]
    }

    pub fn same_shape(&self, other: &Self) -> bool {
        self.w1.dim() == other.w1.dim()
            && self.b1.dim() == other.b1.dim()
            && self.w2.dim() == other.w2.dim()
            && self.b2.dim() == other.b2.dim()
    }

    pub fn is_finite(&self) -> bool {
        self.layers().iter().all(|l| l.iter().all(|v| v.is_finite()))
    }

    /// Euclidean distance between the flattened parameter vectors.
    pub fn l2_distance(&self, other: &Self) -> f64 {
        debug_assert!(self.same_shape(other));
        let mut acc = 0.0f64;
        for (a, b) in self.layers().iter().zip(other.layers().iter()) {
            for (&x, &y) in a.iter().zip(b.iter()) {
                let d = (x - y).to_f64_lossy();
                acc += d * d;
            }
        }
        acc.sqrt()
    }

    /// `self -= step * grad`, elementwise over every layer.
    pub fn sgd_step(&mut self, grad: &Self, step: S) {
        self.w1.scaled_add(-step, &grad.w1);
        self.b1.scaled_add(-step, &grad.b1);
        self.w2.scaled_add(-step, &grad.w2);
        self.b2.scaled_add(-step, &grad.b2);
    }
}

/// Glorot-uniform weights, zero biases.
pub fn init_model<S: Scalar, R: Rng + ?Sized>(
    input_dim: usize,
    hidden: usize,
    classes: usize,
    rng: &mut R,
) -> ModelParams<S> {
    let mut params = ModelParams::zeros(input_dim, hidden, classes);
    let mut fill = |w: &mut Array2<S>| {
        let (fan_in, fan_out) = w.dim();
        let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
        for v in w.iter_mut() {
            *v = S::from_f64_lossy(rng.random_range(-limit..limit));
        }
    };
    fill(&mut params.w1);
    fill(&mut params.w2);
    params
}

fn logits<S: Scalar>(params: &ModelParams<S>, x: ArrayView2<S>) -> (Array2<S>, Array2<S>) {
    let mut hidden = x.dot(&params.w1);
    hidden += &params.b1;
    hidden.mapv_inplace(|v| v.max(S::zero()));
    let mut out = hidden.dot(&params.w2);
    out += &params.b2;
    (hidden, out)
}

/// Mean cross-entropy over the batch and its gradient, averaged over the batch.
///
/// Labels are integer class indices.
pub fn forward_loss<S: Scalar>(
    params: &ModelParams<S>,
    x: ArrayView2<S>,
    labels: &[usize],
) -> (S, ModelParams<S>) {
    let n = x.nrows();
    assert!(n > 0, "empty batch");
    assert_eq!(n, labels.len(), "features and labels disagree in length");
    // ReLU mask is recovered from the activations: h > 0 iff pre-activation > 0.
    let (hidden, mut scores) = logits(params, x);

    // Softmax in place; accumulate -log p[y] through log-sum-exp.
    let mut loss = S::zero();
    for (mut row, &y) in scores.axis_iter_mut(Axis(0)).zip(labels) {
        let max = row.iter().fold(S::neg_infinity(), |m, &v| m.max(v));
        let target = row[y] - max;
        let mut sum = S::zero();
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            sum += *v;
        }
        loss += sum.ln() - target;
        row.mapv_inplace(|v| v / sum);
    }
    let inv_n = S::one() / S::from_usize(n).unwrap();
    loss *= inv_n;

    // d loss / d logits = (p - onehot(y)) / n
    let mut delta_out = scores;
    for (mut row, &y) in delta_out.axis_iter_mut(Axis(0)).zip(labels) {
        row[y] -= S::one();
    }
    delta_out.mapv_inplace(|v| v * inv_n);

    let gw2 = hidden.t().dot(&delta_out);
    let gb2 = delta_out.sum_axis(Axis(0));
    let mut delta_hidden = delta_out.dot(&params.w2.t());
    Zip::from(&mut delta_hidden)
        .and(&hidden)
        .for_each(|d, &h| {
            if h <= S::zero() {
                *d = S::zero();
            }
        });
    let gw1 = x.t().dot(&delta_hidden);
    let gb1 = delta_hidden.sum_axis(Axis(0));

    (
        loss,
        ModelParams {
            w1: gw1,
            b1: gb1,
            w2: gw2,
            b2: gb2,
        },
    )
}

/// Result of one client's local training.
#[derive(Debug, Clone)]
pub struct LocalUpdate<S> {
    pub params: ModelParams<S>,
    /// `||theta_new - theta_start||_2` over all parameters.
    pub update_l2: f64,
    /// Mean batch loss of each local epoch.
    pub epoch_losses: Vec<f64>,
}

/// Mini-batch SGD for `local_epochs` passes over `data`, reshuffled every epoch.
/// The trailing short batch is kept.
pub fn local_train<S: Scalar, R: Rng + ?Sized>(
    params: &ModelParams<S>,
    data: &LabeledDataset<S>,
    cfg: &TrainConfig,
    rng: &mut R,
) -> LocalUpdate<S> {
    assert!(!data.is_empty(), "local dataset is empty");
    let mut current = params.clone();
    let step = S::from_f64_lossy(cfg.learning_rate);
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut epoch_losses = Vec::with_capacity(cfg.local_epochs);
    let mut labels = Vec::with_capacity(cfg.batch_size);
    for _ in 0..cfg.local_epochs {
        order.shuffle(rng);
        let mut total = 0.0;
        let mut batches = 0usize;
        for chunk in order.chunks(cfg.batch_size) {
            let x = data.features.select(Axis(0), chunk);
            labels.clear();
            labels.extend(chunk.iter().map(|&i| data.labels[i]));
            let (loss, grad) = forward_loss(&current, x.view(), &labels);
            current.sgd_step(&grad, step);
            total += loss.to_f64_lossy();
            batches += 1;
        }
        epoch_losses.push(total / batches as f64);
    }
    let update_l2 = current.l2_distance(params);
    LocalUpdate {
        params: current,
        update_l2,
        epoch_losses,
    }
}

/// Size-weighted average `sum_m (|D_m| / sum |D|) * theta_m`.
pub fn fedavg<S: Scalar>(models: &[&ModelParams<S>], sizes: &[usize]) -> Result<ModelParams<S>> {
    if models.is_empty() {
        return Err(Error::Shape("fedavg needs at least one model".into()));
    }
    if models.len() != sizes.len() {
        return Err(Error::Shape(format!(
            "{} models but {} dataset sizes",
            models.len(),
            sizes.len()
        )));
    }
    if sizes.contains(&0) {
        return Err(Error::Shape("dataset sizes must be positive".into()));
    }
    if let Some(bad) = models.iter().position(|m| !m.same_shape(models[0])) {
        return Err(Error::Shape(format!("model {bad} differs in shape from model 0")));
    }
    let total: usize = sizes.iter().sum();
    let (d, h, c) = models[0].dims();
    let mut agg = ModelParams::zeros(d, h, c);
    for (model, &size) in models.iter().zip(sizes) {
        let weight = S::from_f64_lossy(size as f64 / total as f64);
        agg.w1.scaled_add(weight, &model.w1);
        agg.b1.scaled_add(weight, &model.b1);
        agg.w2.scaled_add(weight, &model.w2);
        agg.b2.scaled_add(weight, &model.b2);
    }
    Ok(agg)
}

/// Predicted class per row; ties go to the lowest class index.
pub fn predict<S: Scalar>(params: &ModelParams<S>, x: ArrayView2<S>) -> Vec<usize> {
    const CHUNK: usize = 2048;
    let mut out = Vec::with_capacity(x.nrows());
    let mut start = 0;
    while start < x.nrows() {
        let end = (start + CHUNK).min(x.nrows());
        let (_, scores) = logits(params, x.slice(s![start..end, ..]));
        for row in scores.axis_iter(Axis(0)) {
            let mut best = 0;
            for (k, &v) in row.iter().enumerate() {
                if v > row[best] {
                    best = k;
                }
            }
            out.push(best);
        }
        start = end;
    }
    out
}

/// Fraction of argmax-correct predictions on `test`.
pub fn evaluate<S: Scalar>(params: &ModelParams<S>, test: &LabeledDataset<S>) -> Result<f64> {
    if test.is_empty() {
        return Err(Error::Shape("cannot evaluate on an empty test set".into()));
    }
    let predictions = predict(params, test.features.view());
    let correct = predictions
        .iter()
        .zip(&test.labels)
        .filter(|(p, y)| p == y)
        .count();
    Ok(correct as f64 / test.len() as f64)
}
