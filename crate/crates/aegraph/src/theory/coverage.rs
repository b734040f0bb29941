//! Coverage limits of fine-grained retrieval units under a top-k cutoff:
//! k units of at most c atoms each can surface at most k*c atoms, so when
//! the question needs m of them, coverage is capped at min(1, kc/m).

use std::collections::BTreeSet;

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use serde::Serialize;

use crate::error::{Error, Result};

/// Best achievable fraction of the necessary evidence when any k units of
/// size at most c are selected and m atoms are needed: min(1, kc/m).
pub fn coverage_bound(k: usize, c: usize, m: usize) -> Result<f64> {
    if m == 0 {
        return Err(Error::invalid("evidence size must be at least 1"));
    }
    Ok(((k * c) as f64 / m as f64).min(1.0))
}

/// A small concrete selection problem: a pool of units over a tiny atom
/// universe, a necessary subset, and a selection budget k. Small enough that
/// every k-subset of the pool can be enumerated outright.
#[derive(Debug, Clone, Serialize)]
pub struct CoverageInstance {
    pub num_atoms: usize,
    pub units: Vec<BTreeSet<usize>>,
    pub necessary: BTreeSet<usize>,
    pub k: usize,
    pub max_unit_size: usize,
}

impl CoverageInstance {
    /// Random instance with at most 12 atoms and units of size at most
    /// c in {1, 2, 3}.
    pub fn random(seed: u64) -> Self {
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        let num_atoms = rng.gen_range(4..=12);
        let max_unit_size = rng.gen_range(1..=3);
        let num_units = rng.gen_range(3..=8);
        let units = (0..num_units)
            .map(|_| {
                let size = rng.gen_range(1..=max_unit_size);
                sample(&mut rng, num_atoms, size).into_iter().collect()
            })
            .collect();
        let m = rng.gen_range(1..=num_atoms);
        let necessary = sample(&mut rng, num_atoms, m).into_iter().collect();
        let k = rng.gen_range(1..=num_units);
        CoverageInstance {
            num_atoms,
            units,
            necessary,
            k,
            max_unit_size,
        }
    }

    /// Enumerates every k-subset of the unit pool and returns the largest
    /// count of necessary atoms any selection covers. Brute force, so usable
    /// as an oracle against the closed-form cap.
    pub fn max_covered_exhaustive(&self) -> usize {
        let mut best = 0;
        let mut chosen = Vec::with_capacity(self.k);
        self.each_combination(0, &mut chosen, &mut best);
        best
    }

    fn each_combination(&self, start: usize, chosen: &mut Vec<usize>, best: &mut usize) {
        if chosen.len() == self.k {
            let covered = self
                .necessary
                .iter()
                .filter(|atom| chosen.iter().any(|&u| self.units[u].contains(atom)))
                .count();
            *best = (*best).max(covered);
            return;
        }
        let remaining = self.k - chosen.len();
        for unit in start..=self.units.len().saturating_sub(remaining) {
            chosen.push(unit);
            self.each_combination(unit + 1, chosen, best);
            chosen.pop();
        }
    }

    /// Best coverage fraction the instance admits.
    pub fn max_coverage_exhaustive(&self) -> f64 {
        if self.necessary.is_empty() {
            return 1.0;
        }
        self.max_covered_exhaustive() as f64 / self.necessary.len() as f64
    }
}
