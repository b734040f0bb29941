//! CSR adjacency used by every propagation strategy. Directed internally;
//! undirected edges insert both arcs. Weights are transition propensities:
//! a walker at node u moves to v with probability w(u,v) / row_sum(u).

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Adjacency {
    n: usize,
    offsets: Vec<usize>,
    targets: Vec<u32>,
    weights: Vec<f64>,
    row_sums: Vec<f64>,
}

pub struct AdjacencyBuilder {
    n: usize,
    edges: Vec<(u32, u32, f64)>,
}

impl AdjacencyBuilder {
    pub fn new(n: usize) -> Self {
        AdjacencyBuilder {
            n,
            edges: Vec::new(),
        }
    }

    pub fn add_directed(&mut self, from: usize, to: usize, weight: f64) -> &mut Self {
        debug_assert!(from < self.n && to < self.n);
        self.edges.push((from as u32, to as u32, weight));
        self
    }

    pub fn add_undirected(&mut self, a: usize, b: usize, weight: f64) -> &mut Self {
        self.add_directed(a, b, weight);
        self.add_directed(b, a, weight);
        self
    }

    pub fn build(mut self) -> Result<Adjacency> {
        for &(_, _, w) in &self.edges {
            if !w.is_finite() || w <= 0.0 {
                return Err(Error::invalid(format!(
                    "edge weights must be finite and positive, got {w}"
                )));
            }
        }
        // Counting sort by source keeps construction O(V + E).
        let mut counts = vec![0usize; self.n + 1];
        for &(from, _, _) in &self.edges {
            counts[from as usize + 1] += 1;
        }
        for i in 0..self.n {
            counts[i + 1] += counts[i];
        }
        let offsets = counts.clone();
        let mut targets = vec![0u32; self.edges.len()];
        let mut weights = vec![0.0f64; self.edges.len()];
        let mut cursor = counts;
        self.edges.sort_unstable_by_key(|&(from, to, _)| (from, to));
        for (from, to, w) in self.edges {
            let slot = cursor[from as usize];
            targets[slot] = to;
            weights[slot] = w;
            cursor[from as usize] += 1;
        }
        let mut row_sums = vec![0.0f64; self.n];
        for v in 0..self.n {
            row_sums[v] = weights[offsets[v]..offsets[v + 1]].iter().sum();
        }
        Ok(Adjacency {
            n: self.n,
            offsets,
            targets,
            weights,
            row_sums,
        })
    }
}

impl Adjacency {
    pub fn builder(n: usize) -> AdjacencyBuilder {
        AdjacencyBuilder::new(n)
    }

    pub fn num_nodes(&self) -> usize {
        self.n
    }

    pub fn num_arcs(&self) -> usize {
        self.targets.len()
    }

    pub fn out_edges(&self, v: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let range = self.offsets[v]..self.offsets[v + 1];
        self.targets[range.clone()]
            .iter()
            .zip(self.weights[range].iter())
            .map(|(&t, &w)| (t as usize, w))
    }

    pub fn out_degree(&self, v: usize) -> usize {
        self.offsets[v + 1] - self.offsets[v]
    }

    pub fn row_sum(&self, v: usize) -> f64 {
        self.row_sums[v]
    }

    /// A node with no outgoing mass. Walkers there teleport back to the
    /// personalization distribution.
    pub fn is_dangling(&self, v: usize) -> bool {
        self.row_sums[v] == 0.0
    }

    /// y += scale * P^T x, where P is the row-normalized transition matrix.
    /// Dangling rows contribute nothing here; callers reroute their mass.
    pub fn accumulate_push(&self, x: &[f64], y: &mut [f64], scale: f64) {
        debug_assert_eq!(x.len(), self.n);
        debug_assert_eq!(y.len(), self.n);
        for u in 0..self.n {
            let mass = x[u];
            if mass == 0.0 || self.row_sums[u] == 0.0 {
                continue;
            }
            let factor = scale * mass / self.row_sums[u];
            for i in self.offsets[u]..self.offsets[u + 1] {
                y[self.targets[i] as usize] += factor * self.weights[i];
            }
        }
    }

    /// y += scale * W^T x with raw (unnormalized) weights.
    pub fn accumulate_weighted_push(&self, x: &[f64], y: &mut [f64], scale: f64) {
        for u in 0..self.n {
            let mass = x[u];
            if mass == 0.0 {
                continue;
            }
            for i in self.offsets[u]..self.offsets[u + 1] {
                y[self.targets[i] as usize] += scale * mass * self.weights[i];
            }
        }
    }

    /// Total x-mass sitting on dangling nodes.
    pub fn dangling_mass(&self, x: &[f64]) -> f64 {
        let mut total = 0.0;
        for v in 0..self.n {
            if self.row_sums[v] == 0.0 {
                total += x[v];
            }
        }
        total
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csr_layout_round_trips_edges() {
        let mut b = Adjacency::builder(4);
        b.add_undirected(0, 1, 2.0);
        b.add_directed(2, 0, 0.5);
        let adj = b.build().unwrap();
        assert_eq!(adj.num_nodes(), 4);
        assert_eq!(adj.num_arcs(), 3);
        assert_eq!(adj.out_edges(0).collect::<Vec<_>>(), vec![(1, 2.0)]);
        assert_eq!(adj.out_edges(2).collect::<Vec<_>>(), vec![(0, 0.5)]);
        assert!(adj.is_dangling(3));
        assert!(!adj.is_dangling(1));
    }

    #[test]
    fn push_preserves_mass_off_dangling_nodes() {
        let mut b = Adjacency::builder(3);
        b.add_undirected(0, 1, 1.0);
        b.add_directed(1, 2, 3.0);
        let adj = b.build().unwrap();
        let x = vec![0.5, 0.5, 0.0]; // node 2 dangling
        let mut y = vec![0.0; 3];
        adj.accumulate_push(&x, &mut y, 1.0);
        let total: f64 = y.iter().sum();
        assert!((total - 1.0).abs() < 1e-15);
        // node 1 splits mass 0.5 between nodes 0 (w=1) and 2 (w=3)
        assert!((y[0] - 0.125).abs() < 1e-15);
        assert!((y[2] - 0.375).abs() < 1e-15);
    }

    #[test]
    fn nonpositive_weight_rejected() {
        let mut b = Adjacency::builder(2);
        b.add_directed(0, 1, 0.0);
        assert!(b.build().is_err());
        let mut b = Adjacency::builder(2);
        b.add_directed(0, 1, -1.0);
        assert!(b.build().is_err());
    }
}
