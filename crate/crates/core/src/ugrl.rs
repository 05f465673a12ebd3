//! Unsupervised node embeddings: second-order biased random walks fed to a
//! skip-gram model with negative sampling.

use std::io::{self, Write};

use ndarray::{Array2, ArrayView1, Axis};
use rand::distr::weighted::WeightedIndex;
use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::Distribution;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::SensingGraph;
use crate::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WalkConfig {
    /// Return parameter; the walk steps back to the previous node with weight `1/p`.
    pub p: f64,
    /// In-out parameter; nodes not adjacent to the previous node get weight `1/q`.
    pub q: f64,
    pub walk_length: usize,
    pub walks_per_node: usize,
}

impl Default for WalkConfig {
    fn default() -> Self {
        Self {
            p: 1.0,
            q: 0.5,
            walk_length: 20,
            walks_per_node: 10,
        }
    }
}

impl WalkConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.p > 0.0 && self.q > 0.0 && self.p.is_finite() && self.q.is_finite()) {
            return Err(Error::Config("walk.p and walk.q must be positive".into()));
        }
        if self.walk_length < 2 || self.walks_per_node == 0 {
            return Err(Error::Config(
                "walk.walk_length must be >= 2 and walk.walks_per_node >= 1".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EmbeddingConfig {
    pub dim: usize,
    pub window: usize,
    pub negatives: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    /// Floor of the linear learning-rate decay.
    pub min_learning_rate: f64,
}

impl Default for EmbeddingConfig {
    fn default() -> Self {
        Self {
            dim: 16,
            window: 5,
            negatives: 5,
            epochs: 5,
            learning_rate: 0.025,
            min_learning_rate: 0.0001,
        }
    }
}

impl EmbeddingConfig {
    pub fn validate(&self) -> Result<()> {
        if self.dim < 2 || self.window == 0 || self.epochs == 0 {
            return Err(Error::Config(
                "embedding.dim must be >= 2, embedding.window and embedding.epochs >= 1".into(),
            ));
        }
        if !(self.learning_rate > 0.0 && self.min_learning_rate >= 0.0)
            || self.min_learning_rate > self.learning_rate
        {
            return Err(Error::Config(
                "embedding learning rates must satisfy 0 <= min_learning_rate <= learning_rate, learning_rate > 0"
                    .into(),
            ));
        }
        Ok(())
    }
}

/// One `T`-dimensional row per node.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingMatrix<S> {
    z: Array2<S>,
}

impl<S: Scalar> EmbeddingMatrix<S> {
    pub fn from_array(z: Array2<S>) -> Self {
        Self { z }
    }

    pub fn from_rows(rows: &[Vec<S>]) -> Result<Self> {
        let dim = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != dim) {
            return Err(Error::Shape("embedding rows differ in length".into()));
        }
        let flat: Vec<S> = rows.iter().flatten().copied().collect();
        Ok(Self {
            z: Array2::from_shape_vec((rows.len(), dim), flat).expect("checked"),
        })
    }

    pub fn node_count(&self) -> usize {
        self.z.nrows()
    }

    pub fn dim(&self) -> usize {
        self.z.ncols()
    }

    pub fn row(&self, v: usize) -> ArrayView1<'_, S> {
        self.z.row(v)
    }

    pub fn as_array(&self) -> &Array2<S> {
        &self.z
    }

    pub fn scaled(&self, factor: S) -> Self {
        Self {
            z: self.z.mapv(|v| v * factor),
        }
    }

    pub fn row_norms(&self) -> Vec<S> {
        self.z
            .axis_iter(Axis(0))
            .map(|r| r.dot(&r).sqrt())
            .collect()
    }

    /// CSV with header `node_id,z0,...,z{T-1}`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        let header: Vec<String> = (0..self.dim()).map(|k| format!("z{k}")).collect();
        writeln!(w, "node_id,{}", header.join(","))?;
        for (v, row) in self.z.axis_iter(Axis(0)).enumerate() {
            let vals: Vec<String> = row.iter().map(|x| x.to_string()).collect();
            writeln!(w, "{v},{}", vals.join(","))?;
        }
        Ok(())
    }
}

/// `walks_per_node` rounds; each round walks from every node in a freshly
/// shuffled order. Isolated nodes produce single-node walks.
pub fn generate_walks<R: Rng + ?Sized>(
    graph: &SensingGraph,
    cfg: &WalkConfig,
    rng: &mut R,
) -> Vec<Vec<usize>> {
    let n = graph.node_count();
    let mut order: Vec<usize> = (0..n).collect();
    let mut walks = Vec::with_capacity(n * cfg.walks_per_node);
    let (w_return, w_out) = (1.0 / cfg.p, 1.0 / cfg.q);
    let mut weights: Vec<f64> = Vec::new();
    for _ in 0..cfg.walks_per_node {
        order.shuffle(rng);
        for &start in &order {
            let mut walk = Vec::with_capacity(cfg.walk_length);
            walk.push(start);
            let first = graph.neighbors(start);
            if first.is_empty() {
                walks.push(walk);
                continue;
            }
            walk.push(first[rng.random_range(0..first.len())]);
            while walk.len() < cfg.walk_length {
                let prev = walk[walk.len() - 2];
                let cur = walk[walk.len() - 1];
                let candidates = graph.neighbors(cur);
                weights.clear();
                weights.extend(candidates.iter().map(|&x| {
                    if x == prev {
                        w_return
                    } else if graph.is_adjacent(x, prev) {
                        1.0
                    } else {
                        w_out
                    }
                }));
                let total: f64 = weights.iter().sum();
                let mut target = rng.random::<f64>() * total;
                let mut next = *candidates.last().expect("cur has a neighbour");
                for (&x, &w) in candidates.iter().zip(&weights) {
                    if target < w {
                        next = x;
                        break;
                    }
                    target -= w;
                }
                walk.push(next);
            }
            walks.push(walk);
        }
    }
    walks
}

/// Diagnostics of one skip-gram run.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct TrainingReport {
    /// Mean per-positive-pair loss of every epoch, accumulated online while
    /// training. Each pair is scored right after updates on its neighbouring
    /// pairs, so this runs optimistic while the learning rate is high.
    pub epoch_losses: Vec<f64>,
    /// Full-corpus objective per positive pair after every epoch, with the
    /// negative term taken in expectation over the noise distribution.
    pub epoch_objective: Vec<f64>,
    /// Nodes that never served as a centre and kept their initialization.
    pub untrained_nodes: usize,
    pub pairs_per_epoch: usize,
}

#[inline]
fn sigmoid<S: Scalar>(x: S) -> S {
    S::one() / (S::one() + (-x).exp())
}

/// `-ln(sigmoid(x))`, stable for large `|x|`.
#[inline]
fn neg_log_sigmoid(x: f64) -> f64 {
    if x > 0.0 {
        (-x).exp().ln_1p()
    } else {
        -x + x.exp().ln_1p()
    }
}

/// Positive-pair statistics of a walk corpus.
struct PairCounts {
    n: usize,
    /// `counts[c * n + o]`: occurrences of `o` within the window around `c`.
    counts: Vec<u32>,
    /// Positive pairs per centre.
    per_center: Vec<u64>,
    total: u64,
}

impl PairCounts {
    fn new(walks: &[Vec<usize>], n: usize, window: usize) -> Self {
        let mut counts = vec![0u32; n * n];
        let mut per_center = vec![0u64; n];
        for walk in walks {
            for (i, &c) in walk.iter().enumerate() {
                let lo = i.saturating_sub(window);
                let hi = (i + window + 1).min(walk.len());
                for (j, &o) in walk.iter().enumerate().take(hi).skip(lo) {
                    if j != i {
                        counts[c * n + o] += 1;
                        per_center[c] += 1;
                    }
                }
            }
        }
        let total = per_center.iter().sum();
        Self {
            n,
            counts,
            per_center,
            total,
        }
    }

    /// Skip-gram negative-sampling objective per positive pair.
    fn objective<S: Scalar>(
        &self,
        input: &Array2<S>,
        output: &Array2<S>,
        noise: &[f64],
        negatives: usize,
    ) -> f64 {
        if self.total == 0 {
            return 0.0;
        }
        let mut sum = 0.0;
        for c in 0..self.n {
            if self.per_center[c] == 0 {
                continue;
            }
            let zc = input.row(c);
            let mut expected_neg = 0.0;
            let row_counts = &self.counts[c * self.n..(c + 1) * self.n];
            for ((out, &k), &p) in output.rows().into_iter().zip(row_counts).zip(noise) {
                let score = zc.dot(&out).to_f64_lossy();
                if k > 0 {
                    sum += k as f64 * neg_log_sigmoid(score);
                }
                expected_neg += p * neg_log_sigmoid(-score);
            }
            sum += negatives as f64 * self.per_center[c] as f64 * expected_neg;
        }
        sum / self.total as f64
    }
}

/// Skip-gram with negative sampling over `(centre, context)` pairs within
/// `window` positions. Negatives follow the walk-occurrence unigram
/// distribution raised to the 3/4 power. Returns the input-side vectors.
pub fn train_embeddings<S: Scalar, R: Rng + ?Sized>(
    walks: &[Vec<usize>],
    node_count: usize,
    cfg: &EmbeddingConfig,
    rng: &mut R,
) -> Result<(EmbeddingMatrix<S>, TrainingReport)> {
    if walks.iter().all(Vec::is_empty) {
        return Err(Error::Config("no walks to train on".into()));
    }
    if let Some(bad) = walks.iter().flatten().find(|&&v| v >= node_count) {
        return Err(Error::Shape(format!("walk visits node {bad} of {node_count}")));
    }
    let dim = cfg.dim;
    let bound = 0.5 / dim as f64;
    let mut init = |_: ()| S::from_f64_lossy(rng.random_range(-bound..bound));
    let mut input: Array2<S> = Array2::from_shape_simple_fn((node_count, dim), || init(()));
    let mut output: Array2<S> = Array2::from_shape_simple_fn((node_count, dim), || init(()));

    let mut counts = vec![0usize; node_count];
    for &v in walks.iter().flatten() {
        counts[v] += 1;
    }
    let noise_weights: Vec<f64> = counts.iter().map(|&c| (c as f64).powf(0.75)).collect();
    let noise = WeightedIndex::new(&noise_weights)
        .map_err(|e| Error::Config(format!("negative-sampling table: {e}")))?;
    let noise_total: f64 = noise_weights.iter().sum();
    let noise_probs: Vec<f64> = noise_weights.iter().map(|w| w / noise_total).collect();
    let pair_counts = PairCounts::new(walks, node_count, cfg.window);

    let positions: usize = walks.iter().map(Vec::len).sum();
    let total_steps = (positions * cfg.epochs).max(1);
    let mut step = 0usize;
    let mut trained = vec![false; node_count];
    let mut grad_in = vec![S::zero(); dim];
    let mut report = TrainingReport::default();

    for _ in 0..cfg.epochs {
        let mut loss_sum = 0.0;
        let mut pairs = 0usize;
        for walk in walks {
            for (i, &center) in walk.iter().enumerate() {
                let progress = step as f64 / total_steps as f64;
                let lr = cfg.learning_rate - (cfg.learning_rate - cfg.min_learning_rate) * progress;
                let lr = S::from_f64_lossy(lr);
                step += 1;
                let lo = i.saturating_sub(cfg.window);
                let hi = (i + cfg.window + 1).min(walk.len());
                for (j, &context) in walk.iter().enumerate().take(hi).skip(lo) {
                    if j == i {
                        continue;
                    }
                    trained[center] = true;
                    grad_in.iter_mut().for_each(|g| *g = S::zero());
                    let targets = std::iter::once((context, S::one())).chain(
                        (0..cfg.negatives)
                            .map(|_| noise.sample(rng))
                            .filter(|&neg| neg != context)
                            .map(|neg| (neg, S::zero())),
                    );
                    let targets: Vec<(usize, S)> = targets.collect();
                    for (target, label) in targets {
                        let score = input.row(center).dot(&output.row(target));
                        let s = score.to_f64_lossy();
                        loss_sum += if label == S::one() {
                            neg_log_sigmoid(s)
                        } else {
                            neg_log_sigmoid(-s)
                        };
                        let g = (label - sigmoid(score)) * lr;
                        let mut out_row = output.row_mut(target);
                        for ((acc, o), &c) in grad_in
                            .iter_mut()
                            .zip(out_row.iter_mut())
                            .zip(input.row(center).iter())
                        {
                            *acc += g * *o;
                            *o += g * c;
                        }
                    }
                    for (c, &g) in input.row_mut(center).iter_mut().zip(&grad_in) {
                        *c += g;
                    }
                    pairs += 1;
                }
            }
        }
        report.pairs_per_epoch = pairs;
        report
            .epoch_losses
            .push(if pairs > 0 { loss_sum / pairs as f64 } else { 0.0 });
        report.epoch_objective.push(pair_counts.objective(
            &input,
            &output,
            &noise_probs,
            cfg.negatives,
        ));
    }
    report.untrained_nodes = trained.iter().filter(|&&t| !t).count();
    Ok((EmbeddingMatrix { z: input }, report))
}

/// Walks followed by skip-gram training: the encoder from graph to `R^{T x M}`.
pub fn embed<S: Scalar, R: Rng + ?Sized>(
    graph: &SensingGraph,
    walk_cfg: &WalkConfig,
    emb_cfg: &EmbeddingConfig,
    rng: &mut R,
) -> Result<(EmbeddingMatrix<S>, TrainingReport)> {
    walk_cfg.validate()?;
    emb_cfg.validate()?;
    let walks = generate_walks(graph, walk_cfg, rng);
    train_embeddings(&walks, graph.node_count(), emb_cfg, rng)
}
