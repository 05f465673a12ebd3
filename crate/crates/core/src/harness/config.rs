use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::channel::ChannelConfig;
use crate::error::{Error, Result};
use crate::fl::TrainConfig;
use crate::graph::SensingMode;
use crate::rng::{Component, Streams};
use crate::scheduler::{DmBootstrap, PolicyKind};
use crate::topology::{self, DatasetSource, LabeledDataset, ScenarioKind, SyntheticBlobs};
use crate::ugrl::{EmbeddingConfig, WalkConfig};
use crate::{DatasetF32, ModelScalar};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DatasetKind {
    Idx,
    Synthetic,
}

/// Where training and test samples come from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DatasetConfig {
    pub source: DatasetKind,
    /// Directory holding the IDX files; relative paths resolve against the
    /// config file's directory.
    pub dir: PathBuf,
    pub train_images: String,
    pub train_labels: String,
    pub test_images: String,
    pub test_labels: String,
    /// Samples spread across clients (`|D|`).
    pub train_pool: usize,
    /// Size of the centralized test set; 0 keeps the whole test split.
    pub test_size: usize,
    pub synthetic_classes: usize,
    pub synthetic_dim: usize,
    pub synthetic_per_class: usize,
    pub synthetic_test_per_class: usize,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        Self {
            source: DatasetKind::Idx,
            dir: PathBuf::from("data/mnist"),
            train_images: "train-images.idx3-ubyte".into(),
            train_labels: "train-labels.idx1-ubyte".into(),
            test_images: "t10k-images.idx3-ubyte".into(),
            test_labels: "t10k-labels.idx1-ubyte".into(),
            train_pool: 10_000,
            test_size: 0,
            synthetic_classes: 10,
            synthetic_dim: 64,
            synthetic_per_class: 1_000,
            synthetic_test_per_class: 200,
        }
    }
}

/// Every tunable of an experiment. Unknown keys in a config file are errors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    /// `M`
    pub clients: usize,
    /// `K`, clients scheduled per round.
    pub scheduled: usize,
    /// Communication rounds per episode.
    pub rounds: usize,
    pub episodes: usize,
    pub master_seed: u64,
    pub scenario: ScenarioKind,
    pub policy: PolicyKind,
    pub cell_radius_m: f64,
    /// Strongest neighbours kept per sensing list.
    pub k_nbr: usize,
    /// Context window length `L`; defaults to `M - k_nbr - 1` clamped to
    /// `[K, M - 1]`, so each distance-maximization pick chooses among the
    /// `k_nbr + 1` least recently scheduled clients.
    pub window_len: Option<usize>,
    pub n_clusters: usize,
    pub accuracy_target: f64,
    pub sensing: SensingMode,
    pub dm_bootstrap: DmBootstrap,
    /// Disables broadcast and uplink noise (infinite SNR).
    pub noiseless: bool,
    pub channel: ChannelConfig,
    pub walk: WalkConfig,
    pub embedding: EmbeddingConfig,
    pub train: TrainConfig,
    pub dataset: DatasetConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            clients: 50,
            scheduled: 5,
            rounds: 300,
            episodes: 5,
            master_seed: 0,
            scenario: ScenarioKind::ClusteredSpatiallyCorrelated,
            policy: PolicyKind::Dm,
            cell_radius_m: 500.0,
            k_nbr: 5,
            window_len: None,
            n_clusters: 5,
            accuracy_target: 0.8,
            sensing: SensingMode::Deterministic,
            dm_bootstrap: DmBootstrap::MaxDegree,
            noiseless: false,
            channel: ChannelConfig::default(),
            walk: WalkConfig::default(),
            embedding: EmbeddingConfig::default(),
            train: TrainConfig::default(),
            dataset: DatasetConfig::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads a TOML file; a relative `dataset.dir` becomes relative to the file.
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg: Self = toml::from_str(&text)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        if cfg.dataset.dir.is_relative() {
            if let Some(parent) = path.parent() {
                cfg.dataset.dir = parent.join(&cfg.dataset.dir);
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// Effective context window length.
    pub fn window_len(&self) -> usize {
        self.window_len.unwrap_or_else(|| {
            let max = self.clients.saturating_sub(1);
            self.clients
                .saturating_sub(self.k_nbr + 1)
                .max(self.scheduled)
                .min(max)
        })
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::Config(msg));
        if self.clients < 2 {
            return fail(format!("clients must be >= 2, got {}", self.clients));
        }
        if self.scheduled == 0 || self.scheduled > self.clients {
            return fail(format!(
                "scheduled (K) must be in [1, clients], got K={} M={}",
                self.scheduled, self.clients
            ));
        }
        if self.rounds == 0 {
            return fail("rounds must be >= 1".into());
        }
        if self.episodes == 0 {
            return fail("episodes must be >= 1".into());
        }
        if !(self.cell_radius_m > 0.0 && self.cell_radius_m.is_finite()) {
            return fail("cell_radius_m must be positive".into());
        }
        if self.k_nbr == 0 {
            return fail("k_nbr must be >= 1".into());
        }
        if self.n_clusters == 0 {
            return fail("n_clusters must be >= 1".into());
        }
        if !(0.0..=1.0).contains(&self.accuracy_target) {
            return fail(format!("accuracy_target {} outside [0, 1]", self.accuracy_target));
        }
        if self.policy == PolicyKind::Dm {
            let l = self.window_len();
            if !(self.scheduled <= l && l < self.clients) {
                return fail(format!(
                    "distance maximization needs K <= window_len < clients, got K={} L={l} M={}",
                    self.scheduled, self.clients
                ));
            }
        }
        if self.dataset.train_pool < self.clients {
            return fail(format!(
                "dataset.train_pool {} smaller than the number of clients",
                self.dataset.train_pool
            ));
        }
        self.channel.validate()?;
        self.walk.validate()?;
        self.embedding.validate()?;
        self.train.validate()?;
        Ok(())
    }

    /// Seeds of the configured episodes: `master_seed, master_seed + 1, ...`.
    pub fn episode_seeds(&self) -> Vec<u64> {
        (0..self.episodes as u64).map(|e| self.master_seed + e).collect()
    }
}

/// Training pool and centralized test set, shared read-only by episodes.
#[derive(Debug, Clone)]
pub struct DataBundle {
    pub train: DatasetF32,
    pub test: DatasetF32,
}

impl DataBundle {
    /// Loads IDX files or draws synthetic blobs. The test subset (when
    /// `test_size` is set) depends only on `seed`.
    pub fn load(cfg: &DatasetConfig, seed: u64) -> Result<Self> {
        let streams = Streams::new(seed);
        let mut rng = streams.setup(Component::Dataset, 0);
        let (train, test) = match cfg.source {
            DatasetKind::Idx => {
                let train = topology::load_dataset::<ModelScalar, _>(
                    &DatasetSource::Idx {
                        images: cfg.dir.join(&cfg.train_images),
                        labels: cfg.dir.join(&cfg.train_labels),
                    },
                    &mut rng,
                )?;
                let mut test = topology::load_dataset::<ModelScalar, _>(
                    &DatasetSource::Idx {
                        images: cfg.dir.join(&cfg.test_images),
                        labels: cfg.dir.join(&cfg.test_labels),
                    },
                    &mut rng,
                )?;
                test.n_classes = test.n_classes.max(train.n_classes);
                (train, test)
            }
            DatasetKind::Synthetic => {
                let blobs = SyntheticBlobs::new(cfg.synthetic_classes, cfg.synthetic_dim, &mut rng);
                let train = blobs.sample(cfg.synthetic_per_class, &mut rng);
                let test = blobs.sample(cfg.synthetic_test_per_class, &mut rng);
                (train, test)
            }
        };
        let test = if cfg.test_size > 0 {
            let mut rng = streams.setup(Component::TestSet, 0);
            topology::random_subset(&test, cfg.test_size, &mut rng)
        } else {
            test
        };
        if train.len() < cfg.train_pool {
            return Err(Error::Config(format!(
                "dataset.train_pool {} exceeds the {} available training samples",
                cfg.train_pool,
                train.len()
            )));
        }
        if train.dim() != test.dim() {
            return Err(Error::Shape(format!(
                "train dimension {} differs from test dimension {}",
                train.dim(),
                test.dim()
            )));
        }
        Ok(Self { train, test })
    }

    pub fn from_parts(train: LabeledDataset<ModelScalar>, test: LabeledDataset<ModelScalar>) -> Self {
        Self { train, test }
    }
}
