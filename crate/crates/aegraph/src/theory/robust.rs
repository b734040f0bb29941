//! Node-level counterpart of the two-region leakage analysis: build a pair
//! of mirrored clusters, switch on spurious cross-cluster edges, and watch
//! how much propagation mass stays in the seeded cluster.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::graph::Adjacency;
use crate::resonance::{ppr, PprParams};

/// One sweep level: noise probability, realized cross-edge count, and the
/// stationary mass left in the seeded cluster.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct RobustnessPoint {
    pub p_noise: f64,
    pub cross_edges: usize,
    pub relevant_mass: f64,
}

/// Sweeps cross-cluster noise over `p_grid` and measures seeded-cluster mass
/// at each level.
///
/// The two clusters are mirror images: a ring over each cluster's nodes plus
/// the same chord pattern in both. Every cross pair (i in the first cluster,
/// j in the second) receives one uniform draw up front; at level p the
/// undirected cross edge is present iff its draw falls below p. Edge sets
/// are therefore nested along the sweep, so consecutive levels differ only
/// by the extra noise edges and not by resampling, and the measured mass
/// isolates the leakage effect.
pub fn leakage_sweep(
    nodes_per_cluster: usize,
    p_grid: &[f64],
    restart: f64,
    seed: u64,
) -> Result<Vec<RobustnessPoint>> {
    if nodes_per_cluster < 3 {
        return Err(Error::invalid("need at least 3 nodes per cluster"));
    }
    for &p in p_grid {
        if !p.is_finite() || !(0.0..=1.0).contains(&p) {
            return Err(Error::invalid(format!(
                "noise probability must be in [0, 1], got {p}"
            )));
        }
    }
    let n = nodes_per_cluster;
    let mut rng = ChaCha12Rng::seed_from_u64(seed);

    // Chord pattern, shared by both clusters so their internal structure is
    // identical.
    let mut chords: Vec<(usize, usize)> = Vec::new();
    while chords.len() < n / 2 {
        let a = rng.gen_range(0..n);
        let b = rng.gen_range(0..n);
        if a != b && (a + 1) % n != b && (b + 1) % n != a {
            chords.push((a, b));
        }
    }

    // One draw per cross pair, fixed for the whole sweep.
    let mut cross_draws: Vec<((usize, usize), f64)> = Vec::with_capacity(n * n);
    for i in 0..n {
        for j in 0..n {
            cross_draws.push(((i, j), rng.gen::<f64>()));
        }
    }

    let pi: Vec<f64> = (0..2 * n)
        .map(|v| if v < n { 1.0 / n as f64 } else { 0.0 })
        .collect();
    let params = PprParams {
        restart,
        tol: 1e-12,
        max_iter: 100_000,
    };

    let mut points = Vec::with_capacity(p_grid.len());
    for &p in p_grid {
        let mut builder = Adjacency::builder(2 * n);
        for cluster in 0..2 {
            let base = cluster * n;
            for i in 0..n {
                builder.add_undirected(base + i, base + (i + 1) % n, 1.0);
            }
            for &(a, b) in &chords {
                builder.add_undirected(base + a, base + b, 1.0);
            }
        }
        let mut cross_edges = 0;
        for &((i, j), draw) in &cross_draws {
            if draw < p {
                builder.add_undirected(i, n + j, 1.0);
                cross_edges += 1;
            }
        }
        let adjacency = builder.build()?;
        let outcome = ppr(&adjacency, &pi, &params)?;
        let relevant_mass: f64 = outcome.scores[..n].iter().sum();
        points.push(RobustnessPoint {
            p_noise: p,
            cross_edges,
            relevant_mass,
        });
    }
    Ok(points)
}
