//! Personalized propagation solvers. Both routes solve the same fixed
//! point r = rho * pi + (1 - rho) * P^T r (dangling mass rerouted to pi)
//! but through deliberately different code paths, so agreement between
//! them is a meaningful cross-check rather than a tautology.

use crate::error::{Error, Result};
use crate::graph::Adjacency;

#[derive(Debug, Clone, Copy)]
pub struct PprParams {
    /// Restart probability rho. The walker teleports back to the
    /// personalization distribution with this probability at every step.
    pub restart: f64,
    /// Convergence threshold on the L1 change between iterates.
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for PprParams {
    fn default() -> Self {
        PprParams {
            restart: 0.3,
            tol: 1e-8,
            max_iter: 1000,
        }
    }
}

#[derive(Debug, Clone)]
pub struct PprOutcome {
    pub scores: Vec<f64>,
    pub iterations: usize,
    pub residual: f64,
}

fn validate(adj: &Adjacency, pi: &[f64], params: &PprParams) -> Result<()> {
    if pi.len() != adj.num_nodes() {
        return Err(Error::invalid(format!(
            "personalization length {} does not match node count {}",
            pi.len(),
            adj.num_nodes()
        )));
    }
    if !(params.restart > 0.0 && params.restart <= 1.0) {
        return Err(Error::invalid(format!(
            "restart probability must be in (0, 1], got {}",
            params.restart
        )));
    }
    if !(params.tol > 0.0) {
        return Err(Error::invalid(format!("tol must be positive, got {}", params.tol)));
    }
    if params.max_iter == 0 {
        return Err(Error::invalid("max_iter must be at least 1"));
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

/// Jacobi-style fixed-point iteration starting from pi itself.
/// The observer sees every iterate, which lets tests check invariants
/// such as per-iteration mass conservation without touching internals.
pub fn ppr_with_observer(
    adj: &Adjacency,
    pi: &[f64],
    params: &PprParams,
    mut observer: impl FnMut(usize, &[f64]),
) -> Result<PprOutcome> {
    validate(adj, pi, params)?;
    let n = adj.num_nodes();
    let rho = params.restart;
    let mut current = pi.to_vec();
    let mut next = vec![0.0f64; n];
    for iteration in 1..=params.max_iter {
        let dangling = adj.dangling_mass(&current);
        let teleport = rho + (1.0 - rho) * dangling;
        for (slot, &p) in next.iter_mut().zip(pi.iter()) {
            *slot = teleport * p;
        }
        adj.accumulate_push(&current, &mut next, 1.0 - rho);
        let residual: f64 = next
            .iter()
            .zip(current.iter())
            .map(|(a, b)| (a - b).abs())
            .sum();
        std::mem::swap(&mut current, &mut next);
        observer(iteration, &current);
        if residual < params.tol {
            return Ok(PprOutcome {
                scores: current,
                iterations: iteration,
                residual,
            });
        }
        if iteration == params.max_iter {
            return Err(Error::NoConvergence {
                iterations: iteration,
                residual,
                tol: params.tol,
            });
        }
    }
    unreachable!("loop either returns or errors")
}

pub fn ppr(adj: &Adjacency, pi: &[f64], params: &PprParams) -> Result<PprOutcome> {
    ppr_with_observer(adj, pi, params, |_, _| {})
}

/// Power iteration on the full teleportation operator, kept independent
/// of `ppr`: its own edge-probability table, a uniform starting vector,
/// and explicit renormalization every step.
pub fn power_iteration(adj: &Adjacency, pi: &[f64], params: &PprParams) -> Result<PprOutcome> {
    validate(adj, pi, params)?;
    let n = adj.num_nodes();
    let rho = params.restart;

    // Precompute transition probabilities and the dangling set.
    let mut edges: Vec<(u32, u32, f64)> = Vec::with_capacity(adj.num_arcs());
    let mut dangling: Vec<u32> = Vec::new();
    for u in 0..n {
        let row = adj.row_sum(u);
        if row == 0.0 {
            dangling.push(u as u32);
            continue;
        }
        for (v, w) in adj.out_edges(u) {
            edges.push((u as u32, v as u32, w / row));
        }
    }

    let mut x = vec![1.0 / n as f64; n];
    let mut y = vec![0.0f64; n];
    let mut last_residual = f64::INFINITY;
    for iteration in 1..=params.max_iter {
        let dangling_mass: f64 = dangling.iter().map(|&d| x[d as usize]).sum();
        let teleport = rho + (1.0 - rho) * dangling_mass;
        for (slot, &p) in y.iter_mut().zip(pi.iter()) {
            *slot = teleport * p;
        }
        for &(u, v, p) in &edges {
            y[v as usize] += (1.0 - rho) * p * x[u as usize];
        }
        let total: f64 = y.iter().sum();
        for slot in y.iter_mut() {
            *slot /= total;
        }
        let residual: f64 = y
            .iter()
            .zip(x.iter())
            .map(|(a, b)| (a - b).abs())
            .sum();
        std::mem::swap(&mut x, &mut y);
        last_residual = residual;
        if residual < params.tol {
            return Ok(PprOutcome {
                scores: x,
                iterations: iteration,
                residual,
            });
        }
    }
    Err(Error::NoConvergence {
        iterations: params.max_iter,
        residual: last_residual,
        tol: params.tol,
    })
}
