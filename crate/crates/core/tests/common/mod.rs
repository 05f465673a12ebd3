//! Fixtures and numerical checks shared by the integration and acceptance
//! test targets.
#![allow(dead_code)]

use std::path::PathBuf;

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use fedsched::channel::{ChannelConfig, LinkBudget};
use fedsched::fl::{self, ModelParams};
use fedsched::graph::SensingGraph;
use fedsched::harness::{DataBundle, DatasetKind, ExperimentConfig, FederatedEnv};
use fedsched::rng::{Component, Streams};
use fedsched::scheduler::cosine_similarity;
use fedsched::ugrl::{self, EmbeddingConfig, WalkConfig};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Directory holding the MNIST IDX files: `FEDSCHED_MNIST_DIR`, else
/// `<workspace>/data/mnist`.
pub fn mnist_dir() -> PathBuf {
    std::env::var_os("FEDSCHED_MNIST_DIR")
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data/mnist"))
}

/// Small, fast experiment on synthetic blobs: 20 clients in 5 clusters.
pub fn synthetic_config() -> ExperimentConfig {
    let mut cfg = ExperimentConfig {
        clients: 20,
        scheduled: 4,
        rounds: 8,
        episodes: 2,
        ..Default::default()
    };
    cfg.dataset.source = DatasetKind::Synthetic;
    cfg.dataset.synthetic_dim = 24;
    cfg.dataset.synthetic_per_class = 400;
    cfg.dataset.synthetic_test_per_class = 40;
    cfg.dataset.train_pool = 1_000;
    cfg.train.hidden = 12;
    cfg
}

pub fn synthetic_data(cfg: &ExperimentConfig) -> DataBundle {
    DataBundle::load(&cfg.dataset, cfg.master_seed).expect("synthetic data")
}

fn flatten(p: &ModelParams<f64>) -> Vec<f64> {
    p.layers().iter().flat_map(|l| l.iter().copied()).collect()
}

/// Largest relative deviation between backprop and central finite differences
/// on a random 5-sample batch of a small network, in double precision.
pub fn gradient_check_max_rel_error(seed: u64, step: f64) -> f64 {
    let (d, h, c, n) = (7, 6, 4, 5);
    let mut r = rng(seed);
    let mut params: ModelParams<f64> = fl::init_model(d, h, c, &mut r);
    // Non-zero biases exercise their gradients too.
    for layer in [&mut params.b1, &mut params.b2] {
        layer.mapv_inplace(|_| r.random_range(-0.3..0.3));
    }
    let x = Array2::from_shape_fn((n, d), |_| r.random_range(-1.0..1.0));
    let labels: Vec<usize> = (0..n).map(|_| r.random_range(0..c)).collect();
    let (_, grad) = fl::forward_loss(&params, x.view(), &labels);
    let analytic = flatten(&grad);

    let mut worst: f64 = 0.0;
    let mut idx = 0;
    for layer in 0..4 {
        let len = params.layers()[layer].len();
        for i in 0..len {
            let mut plus = params.clone();
            plus.layers_mut()[layer][i] += step;
            let mut minus = params.clone();
            minus.layers_mut()[layer][i] -= step;
            let lp = fl::forward_loss(&plus, x.view(), &labels).0;
            let lm = fl::forward_loss(&minus, x.view(), &labels).0;
            let numeric = (lp - lm) / (2.0 * step);
            let a = analytic[idx];
            let denom = a.abs().max(numeric.abs()).max(1e-8);
            worst = worst.max((a - numeric).abs() / denom);
            idx += 1;
        }
    }
    worst
}

/// Sample mean of the linear fading power and sample std of the shadowing, in
/// dB, over `n` independent draws at 1 km.
pub fn fading_and_shadowing_stats(n: usize, seed: u64) -> (f64, f64, ChannelConfig) {
    let cfg = ChannelConfig::default();
    let link = LinkBudget::new(cfg).unwrap();
    let mut r = rng(seed);
    let mut power = 0.0;
    let mut shadow = Vec::with_capacity(n);
    for _ in 0..n {
        let s = link.sample(1.0, &mut r);
        power += 10f64.powf(s.fading / 10.0);
        shadow.push(s.shadowing);
    }
    let mean_shadow = shadow.iter().sum::<f64>() / n as f64;
    let var = shadow.iter().map(|v| (v - mean_shadow).powi(2)).sum::<f64>() / (n - 1) as f64;
    (power / n as f64, var.sqrt(), cfg)
}

pub fn cliques(sizes: &[usize]) -> SensingGraph {
    let n = sizes.iter().sum();
    let mut edges = Vec::new();
    let mut start = 0;
    for &s in sizes {
        for a in start..start + s {
            for b in a + 1..start + s {
                edges.push((a, b));
            }
        }
        start += s;
    }
    SensingGraph::from_edges(n, &edges)
}

/// Mean intra-clique minus mean inter-clique cosine similarity of default
/// embeddings of two disjoint 10-cliques.
pub fn clique_separation_gap(seed: u64) -> f64 {
    let g = cliques(&[10, 10]);
    let (z, _) = ugrl::embed::<f64, _>(
        &g,
        &WalkConfig::default(),
        &EmbeddingConfig::default(),
        &mut rng(seed),
    )
    .unwrap();
    let (mut intra, mut ni, mut inter, mut no) = (0.0, 0, 0.0, 0);
    for a in 0..20 {
        for b in 0..20 {
            if a == b {
                continue;
            }
            let s = cosine_similarity(z.row(a), z.row(b));
            if (a < 10) == (b < 10) {
                intra += s;
                ni += 1;
            } else {
                inter += s;
                no += 1;
            }
        }
    }
    intra / ni as f64 - inter / no as f64
}

/// Runs `rounds` noise-free rounds with every client scheduled, next to a
/// direct full-participation FedAvg loop on the same local datasets and
/// random streams. Returns the largest accuracy difference and the final
/// parameter distance.
pub fn full_participation_gap(cfg: &ExperimentConfig, data: &DataBundle, seed: u64) -> (f64, f64) {
    let cfg = ExperimentConfig {
        noiseless: true,
        scheduled: cfg.clients,
        policy: fedsched::scheduler::PolicyKind::Rr,
        ..cfg.clone()
    };
    let mut env = FederatedEnv::new(&cfg, data, seed).unwrap();
    let datasets = env.client_datasets().to_vec();
    let sizes = env.dataset_sizes().to_vec();

    let streams = Streams::new(seed);
    let mut global = fl::init_model::<f32, _>(
        data.train.dim(),
        cfg.train.hidden,
        data.train.n_classes.max(data.test.n_classes),
        &mut streams.setup(Component::ModelInit, 0),
    );
    let mut worst: f64 = 0.0;
    for t in 0..cfg.rounds {
        let record = env.run_round().unwrap();
        let locals: Vec<ModelParams<f32>> = datasets
            .iter()
            .enumerate()
            .map(|(m, d)| {
                let mut r = streams.derive(Component::Training, 0, t as u64, m as u64);
                fl::local_train(&global, d, &cfg.train, &mut r).params
            })
            .collect();
        let refs: Vec<&ModelParams<f32>> = locals.iter().collect();
        global = fl::fedavg(&refs, &sizes).unwrap();
        let acc = fl::evaluate(&global, &data.test).unwrap();
        worst = worst.max((acc - record.test_accuracy).abs());
    }
    (worst, env.global_model().l2_distance(&global))
}
