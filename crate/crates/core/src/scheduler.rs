//! Uplink scheduling policies.
//!
//! Six baselines rank clients by a single feature (age of information,
//! channel quality, update norm), by chance, by cyclic order, or by explicit
//! label knowledge. The distance-maximization policy instead walks the node
//! embedding space: each pick is the client whose summed cosine similarity to
//! the recent picks held in a FIFO context window is smallest.

use std::collections::VecDeque;
use std::fmt;
use std::str::FromStr;

use ndarray::ArrayView1;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::SensingGraph;
use crate::ugrl::EmbeddingMatrix;
use crate::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PolicyKind {
    Aoi,
    Rnd,
    Rr,
    Bc,
    Ocl,
    L2n,
    Dm,
}

impl PolicyKind {
    pub const ALL: [PolicyKind; 7] = [
        PolicyKind::Aoi,
        PolicyKind::Rnd,
        PolicyKind::Rr,
        PolicyKind::Bc,
        PolicyKind::Ocl,
        PolicyKind::L2n,
        PolicyKind::Dm,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            PolicyKind::Aoi => "aoi",
            PolicyKind::Rnd => "rnd",
            PolicyKind::Rr => "rr",
            PolicyKind::Bc => "bc",
            PolicyKind::Ocl => "ocl",
            PolicyKind::L2n => "l2n",
            PolicyKind::Dm => "dm",
        }
    }

    /// Whether selection needs every client's fresh local update.
    pub fn needs_training_feedback(self) -> bool {
        self == PolicyKind::L2n
    }
}

impl fmt::Display for PolicyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for PolicyKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        PolicyKind::ALL
            .into_iter()
            .find(|p| p.as_str().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| {
                Error::Config(format!(
                    "unknown policy {s:?}; expected one of aoi|rnd|rr|bc|ocl|l2n|dm"
                ))
            })
    }
}

/// How the distance-maximization policy picks its very first client.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DmBootstrap {
    /// Highest-degree node, lowest id on ties.
    #[default]
    MaxDegree,
    Random,
}

/// Scheduling-relevant state of one client.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ClientFeatures {
    /// Rounds since the client was last scheduled.
    pub aoi: u32,
    /// Median client/PS path loss, dB.
    pub path_loss_db: f64,
    /// `||theta_local - theta_PS||_2` of the client's latest local update.
    pub last_update_l2: f64,
    /// Uplink SNR sampled in the current round, dB.
    pub last_ul_snr_db: f64,
}

/// One record per client.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct FeatureSpace {
    pub clients: Vec<ClientFeatures>,
}

impl FeatureSpace {
    pub fn new(clients: usize) -> Self {
        Self {
            clients: vec![ClientFeatures::default(); clients],
        }
    }

    pub fn len(&self) -> usize {
        self.clients.len()
    }

    pub fn is_empty(&self) -> bool {
        self.clients.is_empty()
    }
}

/// Scheduled clients reset their age to zero; everyone else ages by one round.
pub fn update_aoi(features: &mut FeatureSpace, mask: &ScheduleMask) {
    for (f, &scheduled) in features.clients.iter_mut().zip(mask.bits()) {
        f.aoi = if scheduled { 0 } else { f.aoi + 1 };
    }
}

/// FIFO memory of the latest selections, at most `capacity` distinct ids.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ContextWindow {
    entries: VecDeque<usize>,
    capacity: usize,
}

impl ContextWindow {
    pub fn new(capacity: usize) -> Self {
        assert!(capacity > 0, "context window needs capacity >= 1");
        Self {
            entries: VecDeque::with_capacity(capacity),
            capacity,
        }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn contains(&self, id: usize) -> bool {
        self.entries.contains(&id)
    }

    pub fn iter(&self) -> impl Iterator<Item = usize> + '_ {
        self.entries.iter().copied()
    }

    /// Appends `id`, evicting the oldest entry at capacity. An id already in
    /// the window moves to the newest slot.
    pub fn push(&mut self, id: usize) {
        if let Some(pos) = self.entries.iter().position(|&e| e == id) {
            self.entries.remove(pos);
        }
        if self.entries.len() == self.capacity {
            self.entries.pop_front();
        }
        self.entries.push_back(id);
    }
}

/// Binary mask over clients plus the selection order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ScheduleMask {
    bits: Vec<bool>,
    order: Vec<usize>,
}

impl ScheduleMask {
    pub fn from_selection(clients: usize, selection: Vec<usize>) -> Result<Self> {
        let mut bits = vec![false; clients];
        for &id in &selection {
            if id >= clients {
                return Err(Error::Shape(format!("client {id} out of range 0..{clients}")));
            }
            if std::mem::replace(&mut bits[id], true) {
                return Err(Error::Shape(format!("client {id} scheduled twice")));
            }
        }
        Ok(Self {
            bits,
            order: selection,
        })
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    pub fn count(&self) -> usize {
        self.order.len()
    }

    pub fn is_scheduled(&self, id: usize) -> bool {
        self.bits[id]
    }

    /// Ids in the order the policy picked them.
    pub fn selection_order(&self) -> &[usize] {
        &self.order
    }

    /// Ids in increasing order.
    pub fn scheduled(&self) -> Vec<usize> {
        (0..self.bits.len()).filter(|&i| self.bits[i]).collect()
    }
}

/// Normalized dot product; 0 when either vector has zero norm.
pub fn cosine_similarity<S: Scalar>(a: ArrayView1<'_, S>, b: ArrayView1<'_, S>) -> S {
    let na = a.dot(&a).sqrt();
    let nb = b.dot(&b).sqrt();
    if na == S::zero() || nb == S::zero() {
        return S::zero();
    }
    let s = a.dot(&b) / (na * nb);
    s.max(-S::one()).min(S::one())
}

/// Column sums of the `|W| x (M - |W|)` similarity matrix between window
/// members and candidates, as `(candidate, sum)` pairs.
pub fn similarity_column_sums<S: Scalar>(
    z: &EmbeddingMatrix<S>,
    window: &ContextWindow,
) -> Vec<(usize, S)> {
    (0..z.node_count())
        .filter(|&u| !window.contains(u))
        .map(|u| {
            let sum = window
                .iter()
                .map(|v| cosine_similarity(z.row(v), z.row(u)))
                .fold(S::zero(), |acc, s| acc + s);
            (u, sum)
        })
        .collect()
}

/// Candidate outside the window with the smallest summed cosine similarity to
/// the window; lowest id on ties.
pub fn select_next_dm<S: Scalar>(z: &EmbeddingMatrix<S>, window: &ContextWindow) -> Result<usize> {
    let no_candidates = || Error::NoCandidates {
        window: window.len(),
        clients: z.node_count(),
    };
    if window.is_empty() {
        return Err(no_candidates());
    }
    let mut best: Option<(usize, S)> = None;
    for (u, sum) in similarity_column_sums(z, window) {
        if best.is_none_or(|(_, b)| sum < b) {
            best = Some((u, sum));
        }
    }
    best.map(|(u, _)| u).ok_or_else(no_candidates)
}

/// Ids sorted by `key` descending, lowest id first on ties; first `k` kept.
fn top_k_by(k: usize, n: usize, key: impl Fn(usize) -> f64) -> Vec<usize> {
    let mut ids: Vec<usize> = (0..n).collect();
    ids.sort_by(|&a, &b| key(b).total_cmp(&key(a)).then(a.cmp(&b)));
    ids.truncate(k);
    ids
}

/// Greedy label coverage: each pick adds the most labels not yet covered this
/// round; ties prefer the larger local dataset, then the lower id.
pub fn greedy_label_coverage(k: usize, histograms: &[Vec<usize>]) -> Vec<usize> {
    let classes = histograms.iter().map(Vec::len).max().unwrap_or(0);
    let mut covered = vec![false; classes];
    let mut taken = vec![false; histograms.len()];
    let mut picks = Vec::with_capacity(k);
    for _ in 0..k.min(histograms.len()) {
        let mut best: Option<(usize, usize, usize)> = None; // (gain, size, id)
        for (id, h) in histograms.iter().enumerate() {
            if taken[id] {
                continue;
            }
            let gain = h
                .iter()
                .enumerate()
                .filter(|&(l, &c)| c > 0 && !covered[l])
                .count();
            let size: usize = h.iter().sum();
            let better = match best {
                None => true,
                Some((g, s, _)) => gain > g || (gain == g && size > s),
            };
            if better {
                best = Some((gain, size, id));
            }
        }
        let (_, _, id) = best.expect("a client remains");
        taken[id] = true;
        for (l, &c) in histograms[id].iter().enumerate() {
            if c > 0 {
                covered[l] = true;
            }
        }
        picks.push(id);
    }
    picks
}

/// Inputs a policy may consult for one decision.
#[derive(Debug, Clone, Copy)]
pub struct PolicyInputs<'a, S> {
    pub features: &'a FeatureSpace,
    pub embeddings: Option<&'a EmbeddingMatrix<S>>,
    pub graph: Option<&'a SensingGraph>,
    pub label_histograms: Option<&'a [Vec<usize>]>,
}

/// A policy together with its cross-round state (round-robin cursor, context
/// window).
#[derive(Debug, Clone)]
pub struct Scheduler {
    policy: PolicyKind,
    k: usize,
    clients: usize,
    rr_cursor: usize,
    window: ContextWindow,
    bootstrap: DmBootstrap,
}

impl Scheduler {
    /// `window_len` must satisfy `k <= window_len < clients` for the
    /// distance-maximization policy; other policies ignore it.
    pub fn new(
        policy: PolicyKind,
        k: usize,
        clients: usize,
        window_len: usize,
        bootstrap: DmBootstrap,
    ) -> Result<Self> {
        if k == 0 || k > clients {
            return Err(Error::Config(format!(
                "need 1 <= K <= M, got K={k}, M={clients}"
            )));
        }
        if policy == PolicyKind::Dm && !(k <= window_len && window_len < clients) {
            return Err(Error::Config(format!(
                "distance maximization needs K <= L < M, got K={k}, L={window_len}, M={clients}"
            )));
        }
        Ok(Self {
            policy,
            k,
            clients,
            rr_cursor: 0,
            window: ContextWindow::new(window_len.max(1)),
            bootstrap,
        })
    }

    pub fn policy(&self) -> PolicyKind {
        self.policy
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn window(&self) -> &ContextWindow {
        &self.window
    }

    /// Picks this round's `K` clients.
    pub fn schedule_round<S: Scalar, R: Rng + ?Sized>(
        &mut self,
        inputs: &PolicyInputs<'_, S>,
        rng: &mut R,
    ) -> Result<ScheduleMask> {
        let m = self.clients;
        if inputs.features.len() != m {
            return Err(Error::Shape(format!(
                "{} feature records for {m} clients",
                inputs.features.len()
            )));
        }
        let f = &inputs.features.clients;
        let k = self.k;
        let selection = match self.policy {
            PolicyKind::Aoi => top_k_by(k, m, |i| f[i].aoi as f64),
            PolicyKind::Bc => top_k_by(k, m, |i| f[i].last_ul_snr_db),
            PolicyKind::L2n => top_k_by(k, m, |i| f[i].last_update_l2),
            PolicyKind::Rnd => {
                let mut s = rand::seq::index::sample(rng, m, k).into_vec();
                s.sort_unstable();
                s
            }
            PolicyKind::Rr => {
                let s = (0..k).map(|j| (self.rr_cursor + j) % m).collect();
                self.rr_cursor = (self.rr_cursor + k) % m;
                s
            }
            PolicyKind::Ocl => {
                let hist = inputs.label_histograms.ok_or(Error::MissingInput {
                    policy: "ocl",
                    input: "per-client label histograms",
                })?;
                if hist.len() != m {
                    return Err(Error::Shape(format!("{} histograms for {m} clients", hist.len())));
                }
                greedy_label_coverage(k, hist)
            }
            PolicyKind::Dm => self.distance_maximization(inputs, rng)?,
        };
        ScheduleMask::from_selection(m, selection)
    }

    fn distance_maximization<S: Scalar, R: Rng + ?Sized>(
        &mut self,
        inputs: &PolicyInputs<'_, S>,
        rng: &mut R,
    ) -> Result<Vec<usize>> {
        let z = inputs.embeddings.ok_or(Error::MissingInput {
            policy: "dm",
            input: "node embeddings",
        })?;
        if z.node_count() != self.clients {
            return Err(Error::Shape(format!(
                "{} embeddings for {} clients",
                z.node_count(),
                self.clients
            )));
        }
        let mut picks = Vec::with_capacity(self.k);
        if self.window.is_empty() {
            let first = match self.bootstrap {
                DmBootstrap::MaxDegree => {
                    let graph = inputs.graph.ok_or(Error::MissingInput {
                        policy: "dm",
                        input: "the sensing graph for max-degree bootstrap",
                    })?;
                    top_k_by(1, self.clients, |i| graph.degree(i) as f64)[0]
                }
                DmBootstrap::Random => rng.random_range(0..self.clients),
            };
            self.window.push(first);
            picks.push(first);
        }
        while picks.len() < self.k {
            let next = select_next_dm(z, &self.window)?;
            self.window.push(next);
            picks.push(next);
        }
        Ok(picks)
    }
}
