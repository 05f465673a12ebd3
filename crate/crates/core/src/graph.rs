//! Sensing phase and graph formation.
//!
//! Every client ranks the others by received power over the client-to-client
//! link and keeps its strongest `K` neighbours. The scheduler symmetrizes the
//! reported lists into an unweighted adjacency matrix.

use std::io::{self, Write};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::channel::LinkBudget;
use crate::topology::ClientPosition;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SensingMode {
    /// Median path loss only.
    #[default]
    Deterministic,
    /// Median path loss plus one shadowing/fading draw per ordered pair.
    Stochastic,
}

/// Strongest-`k_nbr` neighbour list of every node.
///
/// Clients transmit at the uplink power with 0 dBi antennas. Ties in received
/// power go to the lower node index.
pub fn sense_neighbors<R: Rng + ?Sized>(
    positions: &[ClientPosition],
    link: &LinkBudget,
    k_nbr: usize,
    mode: SensingMode,
    rng: &mut R,
) -> Vec<Vec<usize>> {
    let n = positions.len();
    let ptx = link.config().ptx_ul_dbm;
    let mut lists = Vec::with_capacity(n);
    let mut heard: Vec<(f64, usize)> = Vec::with_capacity(n);
    for (v, pv) in positions.iter().enumerate() {
        heard.clear();
        for (u, pu) in positions.iter().enumerate() {
            if u == v {
                continue;
            }
            let d_km = pv.distance_to(pu) / 1000.0;
            let gain_db = match mode {
                SensingMode::Deterministic => -link.path_loss(d_km),
                SensingMode::Stochastic => link.sample(d_km, rng).h_db,
            };
            heard.push((ptx + gain_db, u));
        }
        heard.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
        lists.push(heard.iter().take(k_nbr).map(|&(_, u)| u).collect());
    }
    lists
}

/// Symmetric, loop-free, unweighted graph over clients.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SensingGraph {
    n: usize,
    adjacency: Vec<bool>,
    neighbors: Vec<Vec<usize>>,
}

impl SensingGraph {
    /// `a_ij = 1` iff `j` is in `N(i)` or `i` is in `N(j)`. Self-reports and
    /// out-of-range ids are ignored.
    pub fn from_neighbor_lists(lists: &[Vec<usize>]) -> Self {
        let n = lists.len();
        let mut adjacency = vec![false; n * n];
        for (i, list) in lists.iter().enumerate() {
            for &j in list {
                if j < n && j != i {
                    adjacency[i * n + j] = true;
                    adjacency[j * n + i] = true;
                }
            }
        }
        let neighbors = (0..n)
            .map(|i| (0..n).filter(|&j| adjacency[i * n + j]).collect())
            .collect();
        Self {
            n,
            adjacency,
            neighbors,
        }
    }

    pub fn edgeless(n: usize) -> Self {
        Self::from_neighbor_lists(&vec![Vec::new(); n])
    }

    pub fn from_edges(n: usize, edges: &[(usize, usize)]) -> Self {
        let mut lists = vec![Vec::new(); n];
        for &(a, b) in edges {
            lists[a].push(b);
        }
        Self::from_neighbor_lists(&lists)
    }

    pub fn node_count(&self) -> usize {
        self.n
    }

    pub fn is_adjacent(&self, i: usize, j: usize) -> bool {
        self.adjacency[i * self.n + j]
    }

    /// Sorted neighbour ids of `v`.
    pub fn neighbors(&self, v: usize) -> &[usize] {
        &self.neighbors[v]
    }

    pub fn degree(&self, v: usize) -> usize {
        self.neighbors[v].len()
    }

    pub fn degrees(&self) -> Vec<usize> {
        self.neighbors.iter().map(Vec::len).collect()
    }

    /// Undirected edges `(i, j)` with `i < j`, sorted.
    pub fn edges(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        for i in 0..self.n {
            for &j in &self.neighbors[i] {
                if i < j {
                    out.push((i, j));
                }
            }
        }
        out
    }

    /// Row-major `n x n` 0/1 matrix.
    pub fn adjacency_matrix(&self) -> Vec<Vec<u8>> {
        (0..self.n)
            .map(|i| (0..self.n).map(|j| self.is_adjacent(i, j) as u8).collect())
            .collect()
    }

    /// Writes one `i j` line per undirected edge.
    pub fn write_edge_list<W: Write>(&self, mut w: W) -> io::Result<()> {
        for (i, j) in self.edges() {
            writeln!(w, "{i} {j}")?;
        }
        Ok(())
    }
}

pub fn build_graph(neighbor_lists: &[Vec<usize>]) -> SensingGraph {
    SensingGraph::from_neighbor_lists(neighbor_lists)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::ChannelConfig;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn on_axis(xs: &[f64]) -> Vec<ClientPosition> {
        xs.iter()
            .map(|&x| ClientPosition {
                r: x,
                phi: 0.0,
                cluster: None,
            })
            .collect()
    }

    #[test]
    fn nearest_node_is_sensed_first() {
        let link = LinkBudget::new(ChannelConfig::default()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let lists = sense_neighbors(
            &on_axis(&[0.0, 100.0, 300.0]),
            &link,
            1,
            SensingMode::Deterministic,
            &mut rng,
        );
        assert_eq!(lists[0], vec![1]);
        assert_eq!(lists[2], vec![1]);
    }

    #[test]
    fn large_k_lists_everyone() {
        let link = LinkBudget::new(ChannelConfig::default()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let pos = on_axis(&[0.0, 50.0, 80.0, 400.0]);
        for mode in [SensingMode::Deterministic, SensingMode::Stochastic] {
            let lists = sense_neighbors(&pos, &link, 10, mode, &mut rng);
            for (v, l) in lists.iter().enumerate() {
                assert_eq!(l.len(), 3);
                assert!(!l.contains(&v));
            }
        }
    }

    #[test]
    fn union_symmetrization() {
        let g = build_graph(&[vec![1], vec![0], vec![0]]);
        assert_eq!(g.edges(), vec![(0, 1), (0, 2)]);
        assert_eq!(g.degrees(), vec![2, 1, 1]);
        let m = g.adjacency_matrix();
        for i in 0..3 {
            assert_eq!(m[i][i], 0);
            for j in 0..3 {
                assert_eq!(m[i][j], m[j][i]);
            }
        }
        assert!(build_graph(&[vec![], vec![]]).edges().is_empty());
    }

    #[test]
    fn edge_list_format() {
        let g = SensingGraph::from_edges(3, &[(2, 0), (1, 2)]);
        let mut buf = Vec::new();
        g.write_edge_list(&mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "0 2\n1 2\n");
    }
}
