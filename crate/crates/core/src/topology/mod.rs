//! Client placement, dataset loading and the spatial label distributions.
//!
//! Three layouts are supported:
//!
//! * [`ScenarioKind::SpatiallyCorrelatedContinuous`]: clients dropped
//!   uniformly in radius and angle; each client's labels concentrate around
//!   the angular sector it sits in.
//! * [`ScenarioKind::ClusteredSpatiallyUncorrelated`]: equally populated
//!   clusters at random well-separated centres; cluster `c` owns a contiguous
//!   block of labels with no relation between neighbouring clusters.
//! * [`ScenarioKind::ClusteredSpatiallyCorrelated`]: as above, but cluster
//!   ids (and hence label blocks) are ordered by the angle of their centre,
//!   so adjacent clusters hold adjacent labels.

pub mod idx;

use std::f64::consts::TAU;
use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use ndarray::{Array1, Array2, Axis};
use rand::distr::weighted::WeightedIndex;
use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::Scalar;

/// Standard deviation, in label units, of the label spread around a client's sector.
pub const SECTOR_LABEL_STD: f64 = 0.8;
/// Attempts at drawing well-separated cluster centres before keeping the best set.
pub const CENTER_ATTEMPTS: usize = 1000;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClientPosition {
    /// Distance from the parameter server, metres.
    pub r: f64,
    /// Azimuth in `[0, 2pi)`.
    pub phi: f64,
    pub cluster: Option<usize>,
}

impl ClientPosition {
    pub fn xy(&self) -> (f64, f64) {
        (self.r * self.phi.cos(), self.r * self.phi.sin())
    }

    /// Euclidean distance in metres.
    pub fn distance_to(&self, other: &ClientPosition) -> f64 {
        let (x1, y1) = self.xy();
        let (x2, y2) = other.xy();
        (x1 - x2).hypot(y1 - y2)
    }

    /// Position from Cartesian metres relative to the parameter server.
    pub fn from_xy(x: f64, y: f64, cluster: Option<usize>) -> Self {
        let mut phi = y.atan2(x).rem_euclid(TAU);
        if phi >= TAU {
            phi = 0.0;
        }
        Self {
            r: x.hypot(y),
            phi,
            cluster,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScenarioKind {
    #[serde(alias = "a")]
    SpatiallyCorrelatedContinuous,
    #[serde(alias = "b")]
    ClusteredSpatiallyUncorrelated,
    #[serde(alias = "c")]
    ClusteredSpatiallyCorrelated,
}

impl ScenarioKind {
    pub fn is_clustered(self) -> bool {
        !matches!(self, ScenarioKind::SpatiallyCorrelatedContinuous)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            ScenarioKind::SpatiallyCorrelatedContinuous => "spatially_correlated_continuous",
            ScenarioKind::ClusteredSpatiallyUncorrelated => "clustered_spatially_uncorrelated",
            ScenarioKind::ClusteredSpatiallyCorrelated => "clustered_spatially_correlated",
        }
    }
}

impl fmt::Display for ScenarioKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ScenarioKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "a" | "spatially_correlated_continuous" => Ok(Self::SpatiallyCorrelatedContinuous),
            "b" | "clustered_spatially_uncorrelated" => Ok(Self::ClusteredSpatiallyUncorrelated),
            "c" | "clustered_spatially_correlated" => Ok(Self::ClusteredSpatiallyCorrelated),
            other => Err(Error::Config(format!("unknown scenario {other:?}"))),
        }
    }
}

/// Row-per-sample features in `[0, 1]` with integer class labels.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledDataset<S> {
    pub features: Array2<S>,
    pub labels: Vec<usize>,
    pub n_classes: usize,
}

impl<S: Scalar> LabeledDataset<S> {
    pub fn new(features: Array2<S>, labels: Vec<usize>, n_classes: usize) -> Result<Self> {
        if features.nrows() != labels.len() {
            return Err(Error::Shape(format!(
                "{} feature rows but {} labels",
                features.nrows(),
                labels.len()
            )));
        }
        if let Some(&bad) = labels.iter().find(|&&l| l >= n_classes) {
            return Err(Error::Shape(format!("label {bad} outside [0, {n_classes})")));
        }
        Ok(Self {
            features,
            labels,
            n_classes,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.features.ncols()
    }

    pub fn subset(&self, indices: &[usize]) -> Self {
        Self {
            features: self.features.select(Axis(0), indices),
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
            n_classes: self.n_classes,
        }
    }

    /// Sample count per class.
    pub fn label_histogram(&self) -> Vec<usize> {
        let mut h = vec![0; self.n_classes];
        for &l in &self.labels {
            h[l] += 1;
        }
        h
    }

    /// Indices of each class, in dataset order.
    pub fn label_pools(&self) -> Vec<Vec<usize>> {
        let mut pools = vec![Vec::new(); self.n_classes];
        for (i, &l) in self.labels.iter().enumerate() {
            pools[l].push(i);
        }
        pools
    }
}

/// Where samples come from.
#[derive(Debug, Clone, PartialEq)]
pub enum DatasetSource {
    Idx { images: PathBuf, labels: PathBuf },
    Synthetic {
        classes: usize,
        dim: usize,
        per_class: usize,
    },
}

/// Isotropic Gaussian class blobs around non-negative unit-norm means.
#[derive(Debug, Clone)]
pub struct SyntheticBlobs {
    means: Array2<f64>,
    pub std: f64,
}

impl SyntheticBlobs {
    pub const DEFAULT_STD: f64 = 0.15;

    pub fn new<R: Rng + ?Sized>(classes: usize, dim: usize, rng: &mut R) -> Self {
        let mut means = Array2::zeros((classes, dim));
        for mut row in means.axis_iter_mut(Axis(0)) {
            row.mapv_inplace(|_: f64| {
                let z: f64 = StandardNormal.sample(rng);
                z.abs()
            });
            let norm = row.dot(&row).sqrt().max(f64::MIN_POSITIVE);
            row /= norm;
        }
        Self {
            means,
            std: Self::DEFAULT_STD,
        }
    }

    pub fn classes(&self) -> usize {
        self.means.nrows()
    }

    /// `per_class` samples of every class, class-major, clamped to `[0, 1]`.
    pub fn sample<S: Scalar, R: Rng + ?Sized>(
        &self,
        per_class: usize,
        rng: &mut R,
    ) -> LabeledDataset<S> {
        let (classes, dim) = self.means.dim();
        let mut features = Array2::zeros((classes * per_class, dim));
        let mut labels = Vec::with_capacity(classes * per_class);
        for c in 0..classes {
            for k in 0..per_class {
                let mut row = features.row_mut(c * per_class + k);
                for (v, &mu) in row.iter_mut().zip(self.means.row(c)) {
                    let z: f64 = StandardNormal.sample(rng);
                    *v = S::from_f64_lossy((mu + self.std * z).clamp(0.0, 1.0));
                }
                labels.push(c);
            }
        }
        LabeledDataset {
            features,
            labels,
            n_classes: classes,
        }
    }
}

/// Loads an IDX image/label pair or draws a synthetic blob dataset.
pub fn load_dataset<S: Scalar, R: Rng + ?Sized>(
    source: &DatasetSource,
    rng: &mut R,
) -> Result<LabeledDataset<S>> {
    match source {
        DatasetSource::Idx { images, labels } => {
            let features = idx::read_images::<S>(images)?;
            let label_vec = idx::read_labels(labels)?;
            if features.nrows() != label_vec.len() {
                return Err(Error::Parse {
                    path: labels.clone(),
                    offset: 4,
                    message: format!(
                        "label count {} does not match image count {} in {}",
                        label_vec.len(),
                        features.nrows(),
                        images.display()
                    ),
                });
            }
            let n_classes = label_vec.iter().max().map_or(0, |&m| m + 1);
            LabeledDataset::new(features, label_vec, n_classes)
        }
        &DatasetSource::Synthetic {
            classes,
            dim,
            per_class,
        } => {
            if classes == 0 || dim == 0 || per_class == 0 {
                return Err(Error::Config(
                    "synthetic dataset needs positive classes, dim and per_class".into(),
                ));
            }
            Ok(SyntheticBlobs::new(classes, dim, rng).sample(per_class, rng))
        }
    }
}

fn uniform_in_disk<R: Rng + ?Sized>(radius: f64, rng: &mut R) -> (f64, f64) {
    let r = radius * rng.random::<f64>().sqrt();
    let phi = rng.random_range(0.0..TAU);
    (r * phi.cos(), r * phi.sin())
}

fn min_pairwise(points: &[(f64, f64)]) -> f64 {
    let mut best = f64::INFINITY;
    for i in 0..points.len() {
        for j in i + 1..points.len() {
            let d = (points[i].0 - points[j].0).hypot(points[i].1 - points[j].1);
            best = best.min(d);
        }
    }
    best
}

/// Cluster centres, pairwise at least `radius / 2` apart when achievable.
fn cluster_centers<R: Rng + ?Sized>(n: usize, radius: f64, rng: &mut R) -> Vec<(f64, f64)> {
    let mut best: Vec<(f64, f64)> = Vec::new();
    let mut best_sep = f64::NEG_INFINITY;
    for _ in 0..CENTER_ATTEMPTS {
        let candidate: Vec<_> = (0..n).map(|_| uniform_in_disk(radius, rng)).collect();
        let sep = min_pairwise(&candidate);
        if sep > best_sep {
            best_sep = sep;
            best = candidate;
        }
        if best_sep >= radius / 2.0 {
            break;
        }
    }
    best
}

/// Drops `m` clients in a cell of radius `radius` metres.
///
/// Clustered layouts assign clients to clusters round-robin over a random
/// permutation, so clusters are equally populated (up to one) and client ids
/// carry no cluster information.
pub fn place_clients<R: Rng + ?Sized>(
    m: usize,
    radius: f64,
    scenario: ScenarioKind,
    n_clusters: usize,
    rng: &mut R,
) -> Result<Vec<ClientPosition>> {
    if m == 0 || radius.is_nan() || radius <= 0.0 {
        return Err(Error::Config("need at least one client and a positive radius".into()));
    }
    if !scenario.is_clustered() {
        return Ok((0..m)
            .map(|_| {
                let r = rng.random_range(0.0..=radius);
                let phi = rng.random_range(0.0..TAU);
                ClientPosition {
                    r,
                    phi,
                    cluster: None,
                }
            })
            .collect());
    }
    if n_clusters == 0 {
        return Err(Error::Config("n_clusters must be at least 1".into()));
    }
    let mut centers = cluster_centers(n_clusters, radius, rng);
    if scenario == ScenarioKind::ClusteredSpatiallyCorrelated {
        centers.sort_by(|a, b| {
            let pa = a.1.atan2(a.0).rem_euclid(TAU);
            let pb = b.1.atan2(b.0).rem_euclid(TAU);
            pa.total_cmp(&pb)
        });
    }
    let mut order: Vec<usize> = (0..m).collect();
    order.shuffle(rng);
    let mut membership = vec![0; m];
    for (slot, &client) in order.iter().enumerate() {
        membership[client] = slot % n_clusters;
    }
    let spread = radius / 10.0;
    Ok(membership
        .into_iter()
        .map(|c| {
            let (cx, cy) = centers[c];
            let dx: f64 = StandardNormal.sample(rng);
            let dy: f64 = StandardNormal.sample(rng);
            let (mut x, mut y) = (cx + spread * dx, cy + spread * dy);
            let r = x.hypot(y);
            if r > radius {
                x *= radius / r;
                y *= radius / r;
            }
            ClientPosition::from_xy(x, y, Some(c))
        })
        .collect())
}

/// Random dataset sizes `|D| * u_m / sum(u)` that sum exactly to `total`,
/// each at least one.
pub fn partition_sizes<R: Rng + ?Sized>(total: usize, m: usize, rng: &mut R) -> Result<Vec<usize>> {
    if m == 0 {
        return Err(Error::Config("partition over zero clients".into()));
    }
    if total < m {
        return Err(Error::Config(format!(
            "cannot give each of {m} clients a sample from {total}"
        )));
    }
    let shares: Vec<f64> = (0..m).map(|_| rng.random::<f64>()).collect();
    let sum: f64 = shares.iter().sum();
    let mut sizes: Vec<usize> = if sum > 0.0 {
        shares
            .iter()
            .map(|u| (total as f64 * u / sum).round() as usize)
            .collect()
    } else {
        vec![total / m; m]
    };
    let largest = |sizes: &[usize]| {
        let mut best = 0;
        for (i, &s) in sizes.iter().enumerate() {
            if s > sizes[best] {
                best = i;
            }
        }
        best
    };
    let assigned: usize = sizes.iter().sum();
    let top = largest(&sizes);
    if assigned > total {
        sizes[top] -= assigned - total;
    } else {
        sizes[top] += total - assigned;
    }
    while let Some(i) = sizes.iter().position(|&s| s == 0) {
        let top = largest(&sizes);
        sizes[top] -= 1;
        sizes[i] += 1;
    }
    Ok(sizes)
}

fn circular_label_distance(a: usize, b: usize, classes: usize) -> usize {
    let d = a.abs_diff(b);
    d.min(classes - d)
}

/// Angular sector label `floor(C * phi / 2pi)`.
pub fn sector_label(phi: f64, classes: usize) -> usize {
    ((classes as f64 * phi / TAU).floor() as usize).min(classes - 1)
}

/// Wrapped discrete Gaussian over labels centred on `center`.
pub fn sector_label_weights(center: usize, classes: usize) -> Vec<f64> {
    (0..classes)
        .map(|k| {
            let d = circular_label_distance(k, center, classes) as f64;
            (-d * d / (2.0 * SECTOR_LABEL_STD * SECTOR_LABEL_STD)).exp()
        })
        .collect()
}

/// Labels owned by cluster `cluster`: `{l : floor(l * n_clusters / C) == cluster}`.
pub fn cluster_labels(cluster: usize, n_clusters: usize, classes: usize) -> Vec<usize> {
    (0..classes)
        .filter(|&l| l * n_clusters / classes == cluster)
        .collect()
}

/// Picks disjoint sample indices of `full` for every client.
pub fn sample_indices<S: Scalar, R: Rng + ?Sized>(
    full: &LabeledDataset<S>,
    sizes: &[usize],
    positions: &[ClientPosition],
    scenario: ScenarioKind,
    n_clusters: usize,
    rng: &mut R,
) -> Result<Vec<Vec<usize>>> {
    if sizes.len() != positions.len() {
        return Err(Error::Shape(format!(
            "{} sizes for {} clients",
            sizes.len(),
            positions.len()
        )));
    }
    let requested: usize = sizes.iter().sum();
    if requested > full.len() {
        return Err(Error::Config(format!(
            "clients request {requested} samples but the pool holds {}",
            full.len()
        )));
    }
    let classes = full.n_classes;
    if classes == 0 {
        return Err(Error::Config("dataset has no classes".into()));
    }
    if scenario.is_clustered() && (n_clusters == 0 || n_clusters > classes) {
        return Err(Error::Config(format!(
            "n_clusters must be in [1, {classes}], got {n_clusters}"
        )));
    }
    let mut pools = full.label_pools();
    for pool in &mut pools {
        pool.shuffle(rng);
    }

    let mut out = Vec::with_capacity(sizes.len());
    for (client, (&size, pos)) in sizes.iter().zip(positions).enumerate() {
        let starved = |assigned| Error::Starved {
            client,
            assigned,
            requested: size,
        };
        let mut picked = Vec::with_capacity(size);
        if scenario.is_clustered() {
            let cluster = pos.cluster.ok_or_else(|| {
                Error::Config(format!("client {client} has no cluster in a clustered scenario"))
            })?;
            if cluster >= n_clusters {
                return Err(Error::Config(format!(
                    "client {client} belongs to cluster {cluster} of {n_clusters}"
                )));
            }
            let owned = cluster_labels(cluster, n_clusters, classes);
            let mut live: Vec<usize> = Vec::with_capacity(owned.len());
            for _ in 0..size {
                live.clear();
                live.extend(owned.iter().copied().filter(|&l| !pools[l].is_empty()));
                if live.is_empty() {
                    return Err(starved(picked.len()));
                }
                let label = live[rng.random_range(0..live.len())];
                picked.push(pools[label].pop().expect("non-empty pool"));
            }
        } else {
            let center = sector_label(pos.phi, classes);
            let dist = WeightedIndex::new(sector_label_weights(center, classes))
                .expect("weights are positive");
            for _ in 0..size {
                let drawn = dist.sample(rng);
                let label = if pools[drawn].is_empty() {
                    (0..classes)
                        .filter(|&l| !pools[l].is_empty())
                        .min_by_key(|&l| (circular_label_distance(l, drawn, classes), l))
                        .ok_or_else(|| starved(picked.len()))?
                } else {
                    drawn
                };
                picked.push(pools[label].pop().expect("non-empty pool"));
            }
        }
        out.push(picked);
    }
    Ok(out)
}

/// Local datasets for every client; see [`sample_indices`].
pub fn sample_data<S: Scalar, R: Rng + ?Sized>(
    full: &LabeledDataset<S>,
    sizes: &[usize],
    positions: &[ClientPosition],
    scenario: ScenarioKind,
    n_clusters: usize,
    rng: &mut R,
) -> Result<Vec<LabeledDataset<S>>> {
    let indices = sample_indices(full, sizes, positions, scenario, n_clusters, rng)?;
    Ok(indices.iter().map(|idx| full.subset(idx)).collect())
}

/// Random subset of `n` rows, in random order.
pub fn random_subset<S: Scalar, R: Rng + ?Sized>(
    full: &LabeledDataset<S>,
    n: usize,
    rng: &mut R,
) -> LabeledDataset<S> {
    if n >= full.len() {
        return full.clone();
    }
    let idx = rand::seq::index::sample(rng, full.len(), n).into_vec();
    full.subset(&idx)
}

/// Mean feature vector, handy for sanity checks on loaded data.
pub fn feature_mean<S: Scalar>(data: &LabeledDataset<S>) -> Option<Array1<S>> {
    data.features.mean_axis(Axis(0))
}
