//! The per-episode round loop.
//!
//! A round samples downlink and uplink channels for every client, decides who
//! is scheduled, broadcasts the (noisy) global model to the clients that
//! train, runs local SGD, aggregates the noisy uploads of the scheduled
//! clients with FedAvg and evaluates the result on the centralized test set.
//!
//! Policies without training feedback decide before anyone trains, so only
//! the `K` scheduled clients spend energy on local training. The max-L2-norm
//! policy has every client train first and selects from the fresh update
//! norms.

use crate::channel::{perturb_weights, Direction, LinkBudget};
use crate::error::Result;
use crate::fl::{self, ModelParams};
use crate::graph::{self, SensingGraph};
use crate::rng::{Component, Streams};
use crate::scheduler::{self, FeatureSpace, PolicyInputs, PolicyKind, ScheduleMask, Scheduler};
use crate::topology::{self, ClientPosition};
use crate::ugrl::{self, EmbeddingMatrix, TrainingReport};
use crate::{DatasetF32, EmbeddingScalar, ModelScalar};

use super::config::{DataBundle, ExperimentConfig};
use super::metrics;

/// Metrics of one communication round.
#[derive(Debug, Clone, PartialEq)]
pub struct RoundRecord {
    /// 1-based round index.
    pub round: usize,
    /// Scheduled client ids, increasing.
    pub scheduled: Vec<usize>,
    pub test_accuracy: f64,
    /// Clients that ran local training this round.
    pub trained_devices: usize,
    pub per_client_ul_snr: Vec<f64>,
    /// Policy-specific diagnostics, e.g. the context window after the round.
    pub policy_aux: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeResult {
    pub seed: u64,
    pub policy: PolicyKind,
    pub k: usize,
    pub rounds: Vec<RoundRecord>,
    pub rounds_to_target: Option<usize>,
    pub energy_cost: Option<usize>,
}

impl EpisodeResult {
    pub fn accuracies(&self) -> Vec<f64> {
        self.rounds.iter().map(|r| r.test_accuracy).collect()
    }

    pub fn final_accuracy(&self) -> f64 {
        self.rounds.last().map_or(0.0, |r| r.test_accuracy)
    }

    pub fn total_trained(&self) -> usize {
        self.rounds.iter().map(|r| r.trained_devices).sum()
    }
}

/// State of one episode: placements, local data, graph, embeddings, global
/// model and policy state.
pub struct FederatedEnv<'a> {
    config: ExperimentConfig,
    streams: Streams,
    episode: u64,
    link: LinkBudget,
    positions: Vec<ClientPosition>,
    datasets: Vec<DatasetF32>,
    sizes: Vec<usize>,
    histograms: Vec<Vec<usize>>,
    test: &'a DatasetF32,
    graph: SensingGraph,
    embeddings: EmbeddingMatrix<EmbeddingScalar>,
    embedding_report: TrainingReport,
    global: ModelParams<ModelScalar>,
    scheduler: Scheduler,
    features: FeatureSpace,
    round: usize,
}

impl<'a> FederatedEnv<'a> {
    /// Sets up an episode: placement, dataset sizes and sampling, sensing,
    /// graph, embeddings, a fresh model and fresh policy state.
    pub fn new(config: &ExperimentConfig, data: &'a DataBundle, seed: u64) -> Result<Self> {
        config.validate()?;
        let streams = Streams::new(seed);
        let episode = 0;
        let m = config.clients;
        let link = LinkBudget::new(config.channel)?;

        let positions = topology::place_clients(
            m,
            config.cell_radius_m,
            config.scenario,
            config.n_clusters,
            &mut streams.setup(Component::Placement, episode),
        )?;
        let sizes = topology::partition_sizes(
            config.dataset.train_pool,
            m,
            &mut streams.setup(Component::Partition, episode),
        )?;
        let datasets = topology::sample_data(
            &data.train,
            &sizes,
            &positions,
            config.scenario,
            config.n_clusters,
            &mut streams.setup(Component::Sampling, episode),
        )?;
        let histograms = datasets.iter().map(|d| d.label_histogram()).collect();

        let lists = graph::sense_neighbors(
            &positions,
            &link,
            config.k_nbr,
            config.sensing,
            &mut streams.setup(Component::Sensing, episode),
        );
        let graph = graph::build_graph(&lists);
        config.walk.validate()?;
        config.embedding.validate()?;
        let walks = ugrl::generate_walks(
            &graph,
            &config.walk,
            &mut streams.setup(Component::Walks, episode),
        );
        let (embeddings, embedding_report) = ugrl::train_embeddings(
            &walks,
            m,
            &config.embedding,
            &mut streams.setup(Component::Embedding, episode),
        )?;

        let classes = data.train.n_classes.max(data.test.n_classes);
        let global = fl::init_model(
            data.train.dim(),
            config.train.hidden,
            classes,
            &mut streams.setup(Component::ModelInit, episode),
        );
        let scheduler = Scheduler::new(
            config.policy,
            config.scheduled,
            m,
            config.window_len(),
            config.dm_bootstrap,
        )?;
        let mut features = FeatureSpace::new(m);
        for (f, p) in features.clients.iter_mut().zip(&positions) {
            f.path_loss_db = link.path_loss(p.r / 1000.0);
        }

        Ok(Self {
            config: config.clone(),
            streams,
            episode,
            link,
            positions,
            datasets,
            sizes,
            histograms,
            test: &data.test,
            graph,
            embeddings,
            embedding_report,
            global,
            scheduler,
            features,
            round: 0,
        })
    }

    pub fn positions(&self) -> &[ClientPosition] {
        &self.positions
    }

    pub fn client_datasets(&self) -> &[DatasetF32] {
        &self.datasets
    }

    pub fn dataset_sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn graph(&self) -> &SensingGraph {
        &self.graph
    }

    pub fn embeddings(&self) -> &EmbeddingMatrix<EmbeddingScalar> {
        &self.embeddings
    }

    pub fn embedding_report(&self) -> &TrainingReport {
        &self.embedding_report
    }

    pub fn global_model(&self) -> &ModelParams<ModelScalar> {
        &self.global
    }

    pub fn features(&self) -> &FeatureSpace {
        &self.features
    }

    pub fn scheduler(&self) -> &Scheduler {
        &self.scheduler
    }

    pub fn rounds_done(&self) -> usize {
        self.round
    }

    fn schedule(&mut self, round: u64) -> Result<ScheduleMask> {
        let inputs = PolicyInputs {
            features: &self.features,
            embeddings: Some(&self.embeddings),
            graph: Some(&self.graph),
            label_histograms: Some(&self.histograms),
        };
        let mut rng = self
            .streams
            .derive(Component::Scheduling, self.episode, round, 0);
        self.scheduler.schedule_round(&inputs, &mut rng)
    }

    fn noisy(&self, model: &ModelParams<ModelScalar>, snr_db: f64, component: Component, round: u64, client: usize) -> ModelParams<ModelScalar> {
        if self.config.noiseless {
            return model.clone();
        }
        let mut rng = self
            .streams
            .derive(component, self.episode, round, client as u64);
        perturb_weights(model, snr_db, &mut rng)
    }

    /// Executes one communication round.
    pub fn run_round(&mut self) -> Result<RoundRecord> {
        let t = self.round as u64;
        let m = self.config.clients;

        // Channel state estimation, downlink and uplink, with perfect CSI.
        let mut snr_dl = Vec::with_capacity(m);
        let mut snr_ul = Vec::with_capacity(m);
        for (client, pos) in self.positions.iter().enumerate() {
            let d_km = pos.r / 1000.0;
            let mut dl_rng = self
                .streams
                .derive(Component::DownlinkChannel, self.episode, t, client as u64);
            let mut ul_rng = self
                .streams
                .derive(Component::UplinkChannel, self.episode, t, client as u64);
            let dl = self.link.sample(d_km, &mut dl_rng);
            let ul = self.link.sample(d_km, &mut ul_rng);
            snr_dl.push(self.link.link_snr_db(Direction::Downlink, &dl));
            snr_ul.push(self.link.link_snr_db(Direction::Uplink, &ul));
        }
        for (f, &snr) in self.features.clients.iter_mut().zip(&snr_ul) {
            f.last_ul_snr_db = snr;
        }

        let feedback = self.scheduler.policy().needs_training_feedback();
        let early_mask = if feedback { None } else { Some(self.schedule(t)?) };
        let participants: Vec<usize> = match &early_mask {
            Some(mask) => mask.scheduled(),
            None => (0..m).collect(),
        };

        // Broadcast and local training.
        let mut local: Vec<Option<ModelParams<ModelScalar>>> = vec![None; m];
        for &client in &participants {
            let received = self.noisy(&self.global, snr_dl[client], Component::Broadcast, t, client);
            let mut rng = self
                .streams
                .derive(Component::Training, self.episode, t, client as u64);
            let update = fl::local_train(&received, &self.datasets[client], &self.config.train, &mut rng);
            self.features.clients[client].last_update_l2 = update.update_l2;
            local[client] = Some(update.params);
        }

        let mask = match early_mask {
            Some(mask) => mask,
            None => self.schedule(t)?,
        };
        let scheduled = mask.scheduled();

        // Noisy uplink and aggregation.
        let uploads: Vec<ModelParams<ModelScalar>> = scheduled
            .iter()
            .map(|&client| {
                let model = local[client].as_ref().expect("scheduled clients trained");
                self.noisy(model, snr_ul[client], Component::Uplink, t, client)
            })
            .collect();
        let refs: Vec<&ModelParams<ModelScalar>> = uploads.iter().collect();
        let sizes: Vec<usize> = scheduled.iter().map(|&c| self.sizes[c]).collect();
        self.global = fl::fedavg(&refs, &sizes)?;
        let test_accuracy = fl::evaluate(&self.global, self.test)?;

        scheduler::update_aoi(&mut self.features, &mask);
        self.round += 1;

        let policy_aux = (self.scheduler.policy() == PolicyKind::Dm).then(|| {
            let ids: Vec<String> = self.scheduler.window().iter().map(|v| v.to_string()).collect();
            format!("window={}", ids.join(";"))
        });
        Ok(RoundRecord {
            round: self.round,
            scheduled,
            test_accuracy,
            trained_devices: participants.len(),
            per_client_ul_snr: snr_ul,
            policy_aux,
        })
    }
}

/// Runs `config.rounds` rounds of a fresh episode seeded by `seed`.
pub fn run_episode(config: &ExperimentConfig, data: &DataBundle, seed: u64) -> Result<EpisodeResult> {
    let mut env = FederatedEnv::new(config, data, seed)?;
    let mut rounds = Vec::with_capacity(config.rounds);
    for _ in 0..config.rounds {
        rounds.push(env.run_round()?);
    }
    let rounds_to_target = metrics::comm_efficiency(&rounds, config.accuracy_target);
    let energy_cost = metrics::energy_cost(&rounds, config.accuracy_target);
    Ok(EpisodeResult {
        seed,
        policy: config.policy,
        k: config.scheduled,
        rounds,
        rounds_to_target,
        energy_cost,
    })
}
