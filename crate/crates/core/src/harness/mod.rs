//! Episode loop, metrics and experiment orchestration.

pub mod config;
pub mod env;
pub mod metrics;
pub mod report;

pub use config::{DataBundle, DatasetConfig, DatasetKind, ExperimentConfig};
pub use env::{run_episode, EpisodeResult, FederatedEnv, RoundRecord};
pub use metrics::{comm_efficiency, energy_cost};
pub use report::{run_experiment, ExperimentPlan, ExperimentReport, RoundRow, SummaryRow};
