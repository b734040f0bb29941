//! Alternative propagation strategies. All take the same personalization
//! vector and adjacency as the fixed-point solver and return a score
//! distribution over nodes that sums to 1, so downstream ranking code is
//! strategy-agnostic.

use rand::prelude::*;
use rand_chacha::ChaCha12Rng;

use crate::error::{Error, Result};
use crate::graph::Adjacency;

fn check_pi(adj: &Adjacency, pi: &[f64]) -> Result<()> {
    if pi.len() != adj.num_nodes() {
        return Err(Error::invalid(format!(
            "personalization length {} does not match node count {}",
            pi.len(),
            adj.num_nodes()
        )));
    }
    let mut sum = 0.0;
    for &p in pi {
        if !(p >= 0.0) || !p.is_finite() {
            return Err(Error::invalid(format!(
                "personalization entries must be finite and non-negative, got {p}"
            )));
        }
        sum += p;
    }
    if (sum - 1.0).abs() > 1e-9 {
        return Err(Error::invalid(format!(
            "personalization must sum to 1 within 1e-9, got {sum}"
        )));
    }
    Ok(())
}

/// Inverse-CDF sampler over a fixed distribution.
struct CdfSampler {
    cumulative: Vec<f64>,
}

impl CdfSampler {
    fn new(weights: &[f64]) -> CdfSampler {
        let mut cumulative = Vec::with_capacity(weights.len());
        let mut acc = 0.0;
        for &w in weights {
            acc += w;
            cumulative.push(acc);
        }
        CdfSampler { cumulative }
    }

    fn sample(&self, rng: &mut impl Rng) -> usize {
        let total = *self.cumulative.last().expect("non-empty distribution");
        let u = rng.gen_range(0.0..total);
        self.cumulative.partition_point(|&c| c <= u)
    }
}

#[derive(Debug, Clone, Copy)]
pub struct RwrParams {
    pub restart: f64,
    pub num_walks: usize,
    pub walk_length: usize,
    pub seed: u64,
}

impl Default for RwrParams {
    fn default() -> Self {
        RwrParams {
            restart: 0.3,
            num_walks: 1000,
            walk_length: 10,
            seed: 42,
        }
    }
}

/// Monte-Carlo estimate of the stationary restart distribution: simulate
/// walks that stop with probability `restart` at each step and count
/// where they end. Each walk gets its own seeded generator, so results
/// are reproducible and independent of scheduling order.
pub fn rwr(adj: &Adjacency, pi: &[f64], params: &RwrParams) -> Result<Vec<f64>> {
    check_pi(adj, pi)?;
    if !(params.restart > 0.0 && params.restart <= 1.0) {
        return Err(Error::invalid(format!(
            "restart probability must be in (0, 1], got {}",
            params.restart
        )));
    }
    if params.num_walks == 0 {
        return Err(Error::invalid("num_walks must be at least 1"));
    }
    let n = adj.num_nodes();
    let start = CdfSampler::new(pi);
    let steppers: Vec<Option<CdfSampler>> = (0..n)
        .map(|v| {
            if adj.is_dangling(v) {
                None
            } else {
                let weights: Vec<f64> = adj.out_edges(v).map(|(_, w)| w).collect();
                Some(CdfSampler::new(&weights))
            }
        })
        .collect();
    let neighbor = |v: usize, slot: usize| adj.out_edges(v).nth(slot).map(|(t, _)| t);

    let mut counts = vec![0u64; n];
    for walk in 0..params.num_walks {
        let mut rng = ChaCha12Rng::seed_from_u64(params.seed.wrapping_add(walk as u64));
        let mut at = start.sample(&mut rng);
        for _ in 0..params.walk_length {
            if rng.gen_range(0.0..1.0) < params.restart {
                break;
            }
            match &steppers[at] {
                Some(sampler) => {
                    let slot = sampler.sample(&mut rng);
                    at = neighbor(at, slot).expect("sampler slot within degree");
                }
                // Dangling: teleport to the personalization distribution.
                None => at = start.sample(&mut rng),
            }
        }
        counts[at] += 1;
    }
    Ok(counts
        .into_iter()
        .map(|c| c as f64 / params.num_walks as f64)
        .collect())
}

#[derive(Debug, Clone, Copy)]
pub struct KatzParams {
    pub decay: f64,
    pub max_len: usize,
    pub tol: f64,
}

impl Default for KatzParams {
    fn default() -> Self {
        KatzParams {
            decay: 0.1,
            max_len: 100,
            tol: 1e-12,
        }
    }
}

/// Truncated walk-counting series sum_l decay^l (W^T)^l pi over raw edge
/// weights, normalized at the end. Unlike the restart solvers this uses
/// unnormalized weights, so heavy edges amplify rather than redistribute.
pub fn katz(adj: &Adjacency, pi: &[f64], params: &KatzParams) -> Result<Vec<f64>> {
    check_pi(adj, pi)?;
    if !(params.decay >= 0.0) || !params.decay.is_finite() {
        return Err(Error::invalid(format!(
            "decay must be finite and non-negative, got {}",
            params.decay
        )));
    }
    let n = adj.num_nodes();
    let mut acc = pi.to_vec();
    let mut term = pi.to_vec();
    let mut next = vec![0.0f64; n];
    for _ in 0..params.max_len {
        next.iter_mut().for_each(|x| *x = 0.0);
        adj.accumulate_weighted_push(&term, &mut next, params.decay);
        std::mem::swap(&mut term, &mut next);
        let term_mass: f64 = term.iter().sum();
        if !term_mass.is_finite() || term_mass > 1e12 {
            return Err(Error::invalid(format!(
                "walk series diverges with decay {}; choose a smaller value",
                params.decay
            )));
        }
        for (a, t) in acc.iter_mut().zip(term.iter()) {
            *a += t;
        }
        if term_mass < params.tol {
            break;
        }
    }
    let total: f64 = acc.iter().sum();
    Ok(acc.into_iter().map(|x| x / total).collect())
}

#[derive(Debug, Clone, Copy)]
pub struct LabelPropParams {
    pub num_iter: usize,
}

impl Default for LabelPropParams {
    fn default() -> Self {
        LabelPropParams { num_iter: 20 }
    }
}

/// Pure diffusion without restart: x <- P^T x for a fixed number of
/// rounds, dangling mass rerouted to the personalization distribution.
/// Mass is conserved, but unlike the restart solvers nothing anchors
/// scores to the seeds, so long runs wash the signal out.
pub fn label_propagation(adj: &Adjacency, pi: &[f64], params: &LabelPropParams) -> Result<Vec<f64>> {
    check_pi(adj, pi)?;
    let n = adj.num_nodes();
    let mut x = pi.to_vec();
    let mut y = vec![0.0f64; n];
    for _ in 0..params.num_iter {
        let dangling = adj.dangling_mass(&x);
        for (slot, &p) in y.iter_mut().zip(pi.iter()) {
            *slot = dangling * p;
        }
        adj.accumulate_push(&x, &mut y, 1.0);
        std::mem::swap(&mut x, &mut y);
    }
    Ok(x)
}

#[derive(Debug, Clone, Copy)]
pub struct BfsParams {
    pub decay: f64,
    pub max_hops: usize,
}

impl Default for BfsParams {
    fn default() -> Self {
        BfsParams {
            decay: 0.5,
            max_hops: 3,
        }
    }
}

/// Hop-bounded frontier expansion. Seeds keep their personalization mass;
/// each hop pushes decayed, transition-weighted flow to nodes not yet
/// visited, and a node's score freezes at first visit. Flow back into
/// visited nodes is dropped, so this is a reachability heuristic rather
/// than a stationary distribution; scores are normalized at the end for
/// comparability.
pub fn weighted_bfs(adj: &Adjacency, pi: &[f64], params: &BfsParams) -> Result<Vec<f64>> {
    check_pi(adj, pi)?;
    if !(params.decay > 0.0 && params.decay <= 1.0) {
        return Err(Error::invalid(format!(
            "decay must be in (0, 1], got {}",
            params.decay
        )));
    }
    let n = adj.num_nodes();
    let mut scores = vec![0.0f64; n];
    let mut visited = vec![false; n];
    let mut frontier: Vec<usize> = Vec::new();
    for v in 0..n {
        if pi[v] > 0.0 {
            scores[v] = pi[v];
            visited[v] = true;
            frontier.push(v);
        }
    }
    let mut flow = pi.to_vec();
    let mut next_flow = vec![0.0f64; n];
    for _ in 0..params.max_hops {
        if frontier.is_empty() {
            break;
        }
        next_flow.iter_mut().for_each(|x| *x = 0.0);
        let mut next_frontier: Vec<usize> = Vec::new();
        for &u in &frontier {
            let row = adj.row_sum(u);
            if row == 0.0 {
                continue;
            }
            for (v, w) in adj.out_edges(u) {
                if visited[v] {
                    continue;
                }
                if next_flow[v] == 0.0 {
                    next_frontier.push(v);
                }
                next_flow[v] += params.decay * flow[u] * w / row;
            }
        }
        for &v in &next_frontier {
            visited[v] = true;
            scores[v] = next_flow[v];
        }
        std::mem::swap(&mut flow, &mut next_flow);
        frontier = next_frontier;
    }
    let total: f64 = scores.iter().sum();
    if total <= 0.0 {
        return Err(Error::invalid("frontier expansion produced no score mass"));
    }
    Ok(scores.into_iter().map(|x| x / total).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::resonance::solver::{ppr, PprParams};
    use crate::resonance::testkit::{random_connected_graph, random_pi};
    use rand_chacha::ChaCha12Rng;

    #[test]
    fn rwr_is_deterministic_for_a_seed() {
        let mut rng = ChaCha12Rng::seed_from_u64(7);
        let (adj, n) = random_connected_graph(&mut rng, 40);
        let pi = random_pi(&mut rng, n);
        let params = RwrParams {
            num_walks: 500,
            ..RwrParams::default()
        };
        let a = rwr(&adj, &pi, &params).unwrap();
        let b = rwr(&adj, &pi, &params).unwrap();
        assert_eq!(a, b);
        let shifted = rwr(
            &adj,
            &pi,
            &RwrParams {
                seed: 43,
                ..params
            },
        )
        .unwrap();
        assert_ne!(a, shifted);
    }

    #[test]
    fn rwr_mass_sums_to_one() {
        let mut rng = ChaCha12Rng::seed_from_u64(11);
        let (adj, n) = random_connected_graph(&mut rng, 40);
        let pi = random_pi(&mut rng, n);
        let scores = rwr(&adj, &pi, &RwrParams::default()).unwrap();
        let sum: f64 = scores.iter().sum();
        assert!((sum - 1.0).abs() < 1e-12);
    }

    #[test]
    fn rwr_tracks_fixed_point_ranking() {
        // With enough walks the Monte-Carlo estimate should agree with
        // the exact solver on most of the top 10.
        let mut rng = ChaCha12Rng::seed_from_u64(13);
        let n = 50;
        let mut b = Adjacency::builder(n);
        for v in 1..n {
            let u = rng.gen_range(0..v);
            b.add_undirected(u, v, rng.gen_range(0.5..2.0));
        }
        for _ in 0..60 {
            let u = rng.gen_range(0..n);
            let v = rng.gen_range(0..n);
            if u != v {
                b.add_undirected(u, v, rng.gen_range(0.5..2.0));
            }
        }
        let adj = b.build().unwrap();
        let pi = random_pi(&mut rng, n);
        let exact = ppr(&adj, &pi, &PprParams::default()).unwrap().scores;
        let sampled = rwr(
            &adj,
            &pi,
            &RwrParams {
                num_walks: 100_000,
                walk_length: 50,
                ..RwrParams::default()
            },
        )
        .unwrap();
        let top10 = |scores: &[f64]| {
            let mut order: Vec<usize> = (0..scores.len()).collect();
            order.sort_by(|&a, &b| scores[b].partial_cmp(&scores[a]).unwrap().then(a.cmp(&b)));
            order.truncate(10);
            order
        };
        let a = top10(&exact);
        let b = top10(&sampled);
        let overlap = a.iter().filter(|v| b.contains(v)).count();
        assert!(overlap >= 8, "top-10 overlap only {overlap}: {a:?} vs {b:?}");
    }

    #[test]
    fn walk_length_caps_walks() {
        // With restart 1.0 every walk stops immediately at its start node,
        // so the scores reproduce pi regardless of structure.
        let mut b = Adjacency::builder(3);
        b.add_undirected(0, 1, 1.0);
        b.add_undirected(1, 2, 1.0);
        let adj = b.build().unwrap();
        let pi = [1.0, 0.0, 0.0];
        let scores = rwr(
            &adj,
            &pi,
            &RwrParams {
                restart: 1.0,
                num_walks: 200,
                ..RwrParams::default()
            },
        )
        .unwrap();
        assert_eq!(scores, vec![1.0, 0.0, 0.0]);
        // And with walk_length 0 the start node is the endpoint even
        // with no restarts.
        let scores = rwr(
            &adj,
            &pi,
            &RwrParams {
                restart: 0.5,
                num_walks: 200,
                walk_length: 0,
                ..RwrParams::default()
            },
        )
        .unwrap();
        assert_eq!(scores, vec![1.0, 0.0, 0.0]);
    }

    #[test]
    fn katz_zero_decay_returns_personalization() {
        let mut rng = ChaCha12Rng::seed_from_u64(19);
        let (adj, n) = random_connected_graph(&mut rng, 30);
        let pi = random_pi(&mut rng, n);
        let scores = katz(
            &adj,
            &pi,
            &KatzParams {
                decay: 0.0,
                ..KatzParams::default()
            },
        )
        .unwrap();
        for (s, p) in scores.iter().zip(pi.iter()) {
            assert!((s - p).abs() < 1e-12);
        }
    }

    #[test]
    fn katz_two_node_series_matches_geometric_sum() {
        // 0 -> 1 with weight w: the only nonzero terms are
        // acc[0] = 1 and acc[1] = decay * w, then the series stops
        // because node 1 has no outgoing edges.
        let mut b = Adjacency::builder(2);
        b.add_directed(0, 1, 3.0);
        let adj = b.build().unwrap();
        let scores = katz(&adj, &[1.0, 0.0], &KatzParams::default()).unwrap();
        let raw = [1.0, 0.1 * 3.0];
        let total = raw[0] + raw[1];
        assert!((scores[0] - raw[0] / total).abs() < 1e-15);
        assert!((scores[1] - raw[1] / total).abs() < 1e-15);
    }

    #[test]
    fn katz_diverging_decay_is_an_error() {
        let mut b = Adjacency::builder(2);
        b.add_undirected(0, 1, 10.0);
        let adj = b.build().unwrap();
        let err = katz(
            &adj,
            &[0.5, 0.5],
            &KatzParams {
                decay: 2.0,
                max_len: 1000,
                ..KatzParams::default()
            },
        )
        .unwrap_err();
        assert!(err.to_string().contains("diverges"));
    }

    #[test]
    fn label_propagation_conserves_mass_and_diffuses() {
        let mut rng = ChaCha12Rng::seed_from_u64(29);
        let (adj, n) = random_connected_graph(&mut rng, 60);
        let pi = random_pi(&mut rng, n);
        let scores = label_propagation(&adj, &pi, &LabelPropParams::default()).unwrap();
        let sum: f64 = scores.iter().sum();
        assert!((sum - 1.0).abs() < 1e-9);
        let zero_rounds = label_propagation(&adj, &pi, &LabelPropParams { num_iter: 0 }).unwrap();
        assert_eq!(zero_rounds, pi);
    }

    #[test]
    fn bfs_decays_per_hop_on_a_path() {
        // Path 0 - 1 - 2 with equal weights, seed all mass at node 0.
        // Hop 1 reaches node 1 with decay * 1; hop 2 reaches node 2 with
        // decay^2 * (w12 / row_sum(1)) = decay^2 / 2.
        let mut b = Adjacency::builder(3);
        b.add_undirected(0, 1, 1.0);
        b.add_undirected(1, 2, 1.0);
        let adj = b.build().unwrap();
        let d: f64 = 0.5;
        let raw = [1.0, d, d * d / 2.0];
        let total: f64 = raw.iter().sum();
        let scores = weighted_bfs(
            &adj,
            &[1.0, 0.0, 0.0],
            &BfsParams {
                decay: d,
                max_hops: 3,
            },
        )
        .unwrap();
        for (s, r) in scores.iter().zip(raw.iter()) {
            assert!((s - r / total).abs() < 1e-15, "{scores:?}");
        }
    }

    #[test]
    fn bfs_respects_hop_budget() {
        let mut b = Adjacency::builder(4);
        b.add_undirected(0, 1, 1.0);
        b.add_undirected(1, 2, 1.0);
        b.add_undirected(2, 3, 1.0);
        let adj = b.build().unwrap();
        let scores = weighted_bfs(
            &adj,
            &[1.0, 0.0, 0.0, 0.0],
            &BfsParams {
                decay: 0.5,
                max_hops: 1,
            },
        )
        .unwrap();
        assert!(scores[2] == 0.0 && scores[3] == 0.0, "{scores:?}");
        assert!(scores[0] > 0.0 && scores[1] > 0.0);
        let sum: f64 = scores.iter().sum();
        assert!((sum - 1.0).abs() < 1e-12);
    }
}
