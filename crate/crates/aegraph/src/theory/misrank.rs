//! Ranking-noise model for retrieval units: a unit is scored by the mean of
//! its atoms' scores, and a relevant unit competes against an equally sized
//! irrelevant one. Quantifies how coarse units (large size, small overlap
//! with the necessary evidence) dilute the score gap and get misranked.

use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use rand_distr::{Distribution, Normal};
use serde::Serialize;

use crate::error::{Error, Result};

/// Simulations below this many trials carry too much Monte-Carlo error to
/// say anything about tail probabilities and are rejected.
pub const MIN_TRIALS: usize = 10_000;

/// One configuration of the unit-ranking model. The relevant unit holds
/// `overlap` necessary atoms out of `unit_size` total; the competing
/// irrelevant unit has the same size and no necessary atoms. Necessary atoms
/// score `delta_mu` above the baseline mean; every atom score carries
/// independent noise of scale `sigma`. `evidence_size` is how many atoms the
/// question needs in total, carried for coverage bookkeeping.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MisrankInstance {
    pub overlap: usize,
    pub unit_size: usize,
    pub delta_mu: f64,
    pub sigma: f64,
    pub evidence_size: usize,
}

impl MisrankInstance {
    pub fn new(
        overlap: usize,
        unit_size: usize,
        delta_mu: f64,
        sigma: f64,
        evidence_size: usize,
    ) -> Result<Self> {
        if overlap < 1 {
            return Err(Error::invalid("overlap must be at least 1"));
        }
        if unit_size < overlap {
            return Err(Error::invalid(format!(
                "unit size {unit_size} cannot be smaller than overlap {overlap}"
            )));
        }
        if evidence_size < overlap {
            return Err(Error::invalid(format!(
                "evidence size {evidence_size} cannot be smaller than overlap {overlap}"
            )));
        }
        if !delta_mu.is_finite() || delta_mu < 0.0 {
            return Err(Error::invalid(format!(
                "signal gap must be finite and non-negative, got {delta_mu}"
            )));
        }
        if !sigma.is_finite() || sigma <= 0.0 {
            return Err(Error::invalid(format!(
                "noise scale must be finite and positive, got {sigma}"
            )));
        }
        Ok(MisrankInstance {
            overlap,
            unit_size,
            delta_mu,
            sigma,
            evidence_size,
        })
    }

    /// Expected score gap between the relevant and irrelevant unit: the
    /// signal survives only at purity strength, (overlap / unit_size) * gap.
    pub fn expected_gap(&self) -> f64 {
        self.overlap as f64 / self.unit_size as f64 * self.delta_mu
    }

    /// Tail ceiling on the probability that mean aggregation ranks the
    /// irrelevant unit at or above the relevant one:
    ///
    ///   exp(-overlap^2 gap^2 / (4 sigma^2 unit_size))
    ///
    /// Grows toward 1 as units coarsen (unit_size up at fixed overlap).
    pub fn misrank_bound(&self) -> f64 {
        let r = self.overlap as f64;
        let m = self.unit_size as f64;
        (-(r * r * self.delta_mu * self.delta_mu) / (4.0 * self.sigma * self.sigma * m)).exp()
    }

    /// Monte-Carlo run of the score model with Gaussian noise: per trial,
    /// draws one score per atom in each unit, aggregates by mean, and counts
    /// a misranking whenever the irrelevant unit scores at least as high.
    /// The baseline mean is taken as zero since only the gap enters.
    pub fn simulate(&self, trials: usize, seed: u64) -> Result<MisrankSim> {
        if trials < MIN_TRIALS {
            return Err(Error::invalid(format!(
                "misranking simulation needs at least {MIN_TRIALS} trials, got {trials}"
            )));
        }
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        let noise = Normal::new(0.0, self.sigma)
            .map_err(|e| Error::invalid(format!("bad noise scale: {e}")))?;
        let size = self.unit_size as f64;
        let signal = self.expected_gap();

        let mut misranks = 0usize;
        // Welford accumulators for the per-trial gap.
        let mut mean = 0.0_f64;
        let mut m2 = 0.0_f64;
        for trial in 0..trials {
            let mut relevant_sum = 0.0;
            let mut irrelevant_sum = 0.0;
            for _ in 0..self.unit_size {
                relevant_sum += noise.sample(&mut rng);
                irrelevant_sum += noise.sample(&mut rng);
            }
            let score_relevant = signal + relevant_sum / size;
            let score_irrelevant = irrelevant_sum / size;
            if score_irrelevant >= score_relevant {
                misranks += 1;
            }
            let gap = score_relevant - score_irrelevant;
            let delta = gap - mean;
            mean += delta / (trial + 1) as f64;
            m2 += delta * (gap - mean);
        }

        let n = trials as f64;
        let variance = m2 / (n - 1.0);
        Ok(MisrankSim {
            trials,
            misrank_probability: misranks as f64 / n,
            mean_gap: mean,
            expected_gap: signal,
            gap_std_error: (variance / n).sqrt(),
        })
    }
}

/// Result of one simulation run, alongside the model's predicted gap.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MisrankSim {
    pub trials: usize,
    pub misrank_probability: f64,
    pub mean_gap: f64,
    pub expected_gap: f64,
    pub gap_std_error: f64,
}

impl MisrankSim {
    /// How many standard errors the empirical mean gap sits from the
    /// predicted one.
    pub fn gap_z_score(&self) -> f64 {
        if self.gap_std_error == 0.0 {
            return if self.mean_gap == self.expected_gap {
                0.0
            } else {
                f64::INFINITY
            };
        }
        (self.mean_gap - self.expected_gap).abs() / self.gap_std_error
    }
}

/// The instance sweep the checks run on: every combination of overlap in
/// {1, 2, 5}, unit size in {5, 10, 20}, gap in {0.5, 1.0} and noise scale in
/// {0.5, 1.0}. 36 instances, spanning near-certain ranking through
/// bound-near-1 regimes.
pub fn standard_grid() -> Vec<MisrankInstance> {
    let mut grid = Vec::new();
    for &overlap in &[1usize, 2, 5] {
        for &unit_size in &[5usize, 10, 20] {
            for &delta_mu in &[0.5, 1.0] {
                for &sigma in &[0.5, 1.0] {
                    grid.push(
                        MisrankInstance::new(overlap, unit_size, delta_mu, sigma, overlap)
                            .expect("grid parameters are valid"),
                    );
                }
            }
        }
    }
    grid
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bound_spot_value() {
        let inst = MisrankInstance::new(5, 10, 1.0, 0.5, 5).unwrap();
        let bound = inst.misrank_bound();
        assert!((bound - (-2.5_f64).exp()).abs() < 1e-15);
        assert!((bound - 0.08208).abs() < 1e-5);
    }

    #[test]
    fn zero_gap_bound_is_one_and_ranking_is_a_coin_flip() {
        let inst = MisrankInstance::new(2, 4, 0.0, 1.0, 2).unwrap();
        assert_eq!(inst.misrank_bound(), 1.0);
        let sim = inst.simulate(20_000, 7).unwrap();
        assert!((sim.misrank_probability - 0.5).abs() < 0.02);
        assert!(sim.misrank_probability <= 1.0);
    }

    #[test]
    fn noiseless_limit_drives_bound_to_zero() {
        let inst = MisrankInstance::new(8, 8, 1.0, 1e-9, 8).unwrap();
        assert!(inst.misrank_bound() < 1e-300);
    }

    #[test]
    fn empirical_probability_stays_under_bound() {
        for (i, inst) in [
            MisrankInstance::new(5, 10, 1.0, 0.5, 5).unwrap(),
            MisrankInstance::new(1, 20, 0.5, 1.0, 1).unwrap(),
            MisrankInstance::new(2, 5, 1.0, 1.0, 2).unwrap(),
        ]
        .iter()
        .enumerate()
        {
            let sim = inst.simulate(20_000, 100 + i as u64).unwrap();
            assert!(
                sim.misrank_probability <= inst.misrank_bound(),
                "instance {i}: empirical {} exceeds bound {}",
                sim.misrank_probability,
                inst.misrank_bound()
            );
        }
    }

    #[test]
    fn mean_gap_tracks_purity_scaled_signal() {
        let inst = MisrankInstance::new(3, 12, 0.8, 0.7, 3).unwrap();
        let sim = inst.simulate(50_000, 11).unwrap();
        assert!((sim.expected_gap - 0.2).abs() < 1e-15);
        assert!(
            sim.gap_z_score() <= 3.0,
            "gap {} vs expected {} at z = {}",
            sim.mean_gap,
            sim.expected_gap,
            sim.gap_z_score()
        );
    }

    #[test]
    fn simulation_is_deterministic_in_the_seed() {
        let inst = MisrankInstance::new(2, 6, 1.0, 0.5, 2).unwrap();
        let a = inst.simulate(10_000, 42).unwrap();
        let b = inst.simulate(10_000, 42).unwrap();
        let c = inst.simulate(10_000, 43).unwrap();
        assert_eq!(a, b);
        assert!(a.mean_gap != c.mean_gap);
    }

    #[test]
    fn rejects_underpowered_runs_and_bad_parameters() {
        let inst = MisrankInstance::new(1, 2, 1.0, 1.0, 1).unwrap();
        let err = inst.simulate(9_999, 1).unwrap_err().to_string();
        assert!(err.contains("10000"), "unexpected message: {err}");

        assert!(MisrankInstance::new(0, 5, 1.0, 1.0, 1).is_err());
        assert!(MisrankInstance::new(3, 2, 1.0, 1.0, 3).is_err());
        assert!(MisrankInstance::new(2, 5, 1.0, 1.0, 1).is_err());
        assert!(MisrankInstance::new(1, 5, -0.5, 1.0, 1).is_err());
        assert!(MisrankInstance::new(1, 5, 1.0, 0.0, 1).is_err());
        assert!(MisrankInstance::new(1, 5, 1.0, f64::NAN, 1).is_err());
    }

    #[test]
    fn standard_grid_is_valid_and_large_enough() {
        let grid = standard_grid();
        assert_eq!(grid.len(), 36);
        assert!(grid.iter().all(|i| i.overlap <= i.unit_size));
    }

    // Standard normal CDF via the Abramowitz-Stegun 7.1.26 polynomial,
    // |error| < 7.5e-8. Used only to confirm the tail inequality below.
    fn normal_cdf(x: f64) -> f64 {
        let t = 1.0 / (1.0 + 0.2316419 * x.abs());
        let poly = t
            * (0.319381530
                + t * (-0.356563782 + t * (1.781477937 + t * (-1.821255978 + t * 1.330274429))));
        let pdf = (-(x * x) / 2.0).exp() / (2.0 * std::f64::consts::PI).sqrt();
        let upper = pdf * poly;
        if x >= 0.0 {
            1.0 - upper
        } else {
            upper
        }
    }

    #[test]
    fn gaussian_tail_sits_below_the_sub_gaussian_ceiling() {
        // The bound exp(-z^2/2) dominates the exact Gaussian tail Phi(-z),
        // so with Gaussian noise the one-sided check has real slack.
        let mut z = 0.5;
        while z <= 4.0 {
            let exact = normal_cdf(-z);
            let ceiling = (-(z * z) / 2.0).exp();
            assert!(
                exact + 1e-6 < ceiling,
                "no slack at z={z}: tail {exact} vs ceiling {ceiling}"
            );
            z += 0.25;
        }
    }

    #[test]
    fn true_misrank_probability_matches_gaussian_tail() {
        // With Gaussian noise the exact misranking probability is
        // Phi(-overlap * gap / (sigma * sqrt(2 * unit_size))); the empirical
        // rate should sit within Monte-Carlo error of it.
        let inst = MisrankInstance::new(2, 8, 0.6, 1.0, 2).unwrap();
        let z = inst.overlap as f64 * inst.delta_mu
            / (inst.sigma * (2.0 * inst.unit_size as f64).sqrt());
        let exact = normal_cdf(-z);
        let sim = inst.simulate(100_000, 5).unwrap();
        let se = (exact * (1.0 - exact) / 100_000.0).sqrt();
        assert!(
            (sim.misrank_probability - exact).abs() < 4.0 * se + 1e-7,
            "empirical {} vs exact {exact}",
            sim.misrank_probability
        );
    }
}
