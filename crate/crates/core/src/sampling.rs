//! Guided minimal-subset sampling.
//!
//! Every point carries an unnormalized sampling mass. Subsets are drawn
//! without replacement with probability proportional to the masses, and after
//! each hyperedge the masses of its significant points are divided by the
//! update factor while all other masses are multiplied by it, steering later
//! draws towards structures that have not been explained yet.

use rand::seq::index::sample_weighted;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

pub const DEFAULT_UPDATE_FACTOR: f64 = 5.0;
pub const MIN_MASS: f64 = 1e-6;
pub const MAX_MASS: f64 = 1e6;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SamplingError {
    #[error("cannot sample from an empty dataset")]
    Empty,
    #[error("subset of size {size} requested from {n} points")]
    SubsetTooLarge { size: usize, n: usize },
    #[error("sampling masses must be positive and finite")]
    InvalidMass,
    #[error("update factor must be finite and greater than 1, got {0}")]
    InvalidFactor(f64),
    #[error("mask has length {mask}, state has {n} points")]
    LengthMismatch { mask: usize, n: usize },
}

/// Per-point sampling masses plus the random stream that consumes them.
#[derive(Debug, Clone)]
pub struct SamplingState {
    masses: Vec<f64>,
    seed: u64,
    update_factor: f64,
    rng: ChaCha8Rng,
}

impl SamplingState {
    /// All masses start at 1.
    pub fn new(n: usize, seed: u64) -> Result<Self, SamplingError> {
        Self::from_masses(vec![1.0; n], seed)
    }

    pub fn from_masses(masses: Vec<f64>, seed: u64) -> Result<Self, SamplingError> {
        if masses.is_empty() {
            return Err(SamplingError::Empty);
        }
        if !masses.iter().all(|m| m.is_finite() && *m > 0.0) {
            return Err(SamplingError::InvalidMass);
        }
        Ok(Self {
            masses,
            seed,
            update_factor: DEFAULT_UPDATE_FACTOR,
            rng: ChaCha8Rng::seed_from_u64(seed),
        })
    }

    pub fn with_update_factor(mut self, factor: f64) -> Result<Self, SamplingError> {
        if !(factor.is_finite() && factor > 1.0) {
            return Err(SamplingError::InvalidFactor(factor));
        }
        self.update_factor = factor;
        Ok(self)
    }

    pub fn masses(&self) -> &[f64] {
        &self.masses
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn update_factor(&self) -> f64 {
        self.update_factor
    }

    pub fn len(&self) -> usize {
        self.masses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.masses.is_empty()
    }

    /// Draws `size` distinct indices, each step choosing among the remaining
    /// points proportionally to their masses.
    pub fn draw_subset(&mut self, size: usize) -> Result<Vec<usize>, SamplingError> {
        let n = self.masses.len();
        if size > n {
            return Err(SamplingError::SubsetTooLarge { size, n });
        }
        let masses = &self.masses;
        let picked = sample_weighted(&mut self.rng, n, |i| masses[i], size)
            .map_err(|_| SamplingError::InvalidMass)?;
        Ok(picked.into_vec())
    }

    /// Lowers the mass of significant points and raises all others, clamping
    /// to `[MIN_MASS, MAX_MASS]`.
    pub fn update(&mut self, significant: &[bool]) -> Result<(), SamplingError> {
        if significant.len() != self.masses.len() {
            return Err(SamplingError::LengthMismatch {
                mask: significant.len(),
                n: self.masses.len(),
            });
        }
        let f = self.update_factor;
        for (m, &s) in self.masses.iter_mut().zip(significant) {
            let next = if s { *m / f } else { *m * f };
            *m = next.clamp(MIN_MASS, MAX_MASS);
        }
        Ok(())
    }
}
