//! Two-state abstraction of propagation over a partitioned graph: all nodes
//! collapse into a relevant region R and an irrelevant region I, and the walk
//! is summarized by the leave-rate and return-rate between them.

use serde::Serialize;

use crate::error::{Error, Result};

const MAX_FIXED_POINT_ITERS: usize = 100_000;

/// Macro chain over {R, I}: `gamma` is the probability of leaving R for I in
/// one step, `epsilon` the probability of returning, `rho` the restart
/// probability of the walk. Restart mass always lands in R.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MacroChain {
    pub gamma: f64,
    pub epsilon: f64,
    pub rho: f64,
}

impl MacroChain {
    pub fn new(gamma: f64, epsilon: f64, rho: f64) -> Result<Self> {
        if !gamma.is_finite() || !(0.0..=1.0).contains(&gamma) {
            return Err(Error::invalid(format!(
                "leave probability must be in [0, 1], got {gamma}"
            )));
        }
        if !epsilon.is_finite() || !(0.0..=1.0).contains(&epsilon) {
            return Err(Error::invalid(format!(
                "return probability must be in [0, 1], got {epsilon}"
            )));
        }
        if !(rho > 0.0 && rho < 1.0) {
            return Err(Error::invalid(format!(
                "restart probability must be in (0, 1), got {rho}"
            )));
        }
        Ok(MacroChain { gamma, epsilon, rho })
    }

    /// Stationary mass on the relevant region, in closed form:
    ///
    ///   (rho + (1-rho) epsilon) / (rho + (1-rho)(gamma + epsilon))
    ///
    /// Equals 1 when nothing leaks (gamma = 0) and decreases strictly as the
    /// leave-rate grows, which is what makes leakage the quantity to control.
    pub fn leakage_closed_form(&self) -> f64 {
        let MacroChain { gamma, epsilon, rho } = *self;
        (rho + (1.0 - rho) * epsilon) / (rho + (1.0 - rho) * (gamma + epsilon))
    }

    /// Solves the same quantity numerically: iterates the restart fixed-point
    /// map phi <- rho e + (1-rho) phi T on the two-state chain, with e = (1, 0)
    /// and T the macro transition matrix, until successive iterates differ by
    /// less than `tol` in L1. The map contracts by (1-rho) per step, so the
    /// returned value sits within tol (1-rho)/rho of the true fixed point.
    pub fn leakage_iterated(&self, tol: f64) -> Result<f64> {
        if !tol.is_finite() || tol <= 0.0 {
            return Err(Error::invalid(format!(
                "tolerance must be positive and finite, got {tol}"
            )));
        }
        let MacroChain { gamma, epsilon, rho } = *self;
        let mut phi = [1.0_f64, 0.0_f64];
        let mut last_delta = f64::INFINITY;
        for _ in 0..MAX_FIXED_POINT_ITERS {
            let next = [
                rho + (1.0 - rho) * (phi[0] * (1.0 - gamma) + phi[1] * epsilon),
                (1.0 - rho) * (phi[0] * gamma + phi[1] * (1.0 - epsilon)),
            ];
            last_delta = (next[0] - phi[0]).abs() + (next[1] - phi[1]).abs();
            phi = next;
            if last_delta < tol {
                return Ok(phi[0]);
            }
        }
        Err(Error::NoConvergence {
            iterations: MAX_FIXED_POINT_ITERS,
            residual: last_delta,
            tol,
        })
    }
}

/// One grid point of the closed-form vs iterated comparison.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct LeakagePoint {
    pub rho: f64,
    pub gamma: f64,
    pub epsilon: f64,
    pub closed_form: f64,
    pub iterated: f64,
    pub abs_err: f64,
}

/// The sweep values used by the leakage checks: 0.05, 0.10, ..., 0.95.
pub fn parameter_grid() -> Vec<f64> {
    (1..=19).map(|i| i as f64 * 0.05).collect()
}

/// Evaluates closed form against fixed-point iteration over the full
/// rho x gamma x epsilon parameter grid.
pub fn leakage_grid(tol: f64) -> Result<Vec<LeakagePoint>> {
    let values = parameter_grid();
    let mut points = Vec::with_capacity(values.len().pow(3));
    for &rho in &values {
        for &gamma in &values {
            for &epsilon in &values {
                let chain = MacroChain::new(gamma, epsilon, rho)?;
                let closed_form = chain.leakage_closed_form();
                let iterated = chain.leakage_iterated(tol)?;
                points.push(LeakagePoint {
                    rho,
                    gamma,
                    epsilon,
                    closed_form,
                    iterated,
                    abs_err: (closed_form - iterated).abs(),
                });
            }
        }
    }
    Ok(points)
}
