//! Simulation of importance-aware uplink scheduling for federated learning.
//!
//! Clients are dropped on a single macro cell, sense their strongest
//! neighbours to form a graph, and the parameter server embeds that graph
//! with biased random walks plus skip-gram. The distance-maximization
//! scheduler then picks, every round, the clients that are furthest apart in
//! embedding space. Six baseline policies share the same round loop so that
//! accuracy, rounds-to-target and energy cost can be compared.
//!
//! The numerical core (model, aggregation, noise injection, embeddings) is
//! generic over [`Scalar`]; the harness runs the model in `f32`.

pub mod channel;
pub mod error;
pub mod fl;
pub mod graph;
pub mod harness;
pub mod rng;
pub mod scalar;
pub mod scheduler;
pub mod topology;
pub mod ugrl;

pub use error::{Error, Result};
pub use scalar::Scalar;

/// Model parameters in single precision, as used by the episode loop.
pub type ModelParamsF32 = fl::ModelParams<f32>;
/// Model parameters in double precision, used for gradient checks.
pub type ModelParamsF64 = fl::ModelParams<f64>;
pub type DatasetF32 = topology::LabeledDataset<f32>;
pub type DatasetF64 = topology::LabeledDataset<f64>;
pub type EmbeddingMatrixF64 = ugrl::EmbeddingMatrix<f64>;

/// Scalar type of the federated model inside [`harness`].
pub type ModelScalar = f32;
/// Scalar type of node embeddings inside [`harness`].
pub type EmbeddingScalar = f64;
