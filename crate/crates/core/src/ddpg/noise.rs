use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::actuation::CLIP_FACTOR;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseSchedule {
    pub alpha: f64,
    pub alpha_min: f64,
    /// Multiplicative factor applied once per episode.
    pub decay: f64,
    pub a_lim: f64,
}

impl NoiseSchedule {
    pub const IDENTIFICATION_ALPHA_MIN: f64 = 1.5;
    pub const NAVIGATION_ALPHA_MIN: f64 = 1.2;

    pub fn new(alpha0: f64, alpha_min: f64, decay: f64, a_lim: f64) -> Self {
        Self {
            alpha: alpha0.max(alpha_min),
            alpha_min,
            decay,
            a_lim,
        }
    }

    /// Noise-free schedule, for deterministic evaluation.
    pub fn off(a_lim: f64) -> Self {
        Self {
            alpha: 0.0,
            alpha_min: 0.0,
            decay: 1.0,
            a_lim,
        }
    }

    pub fn std_dev(&self) -> f64 {
        self.alpha * self.a_lim
    }

    pub fn clip_bound(&self) -> f64 {
        CLIP_FACTOR * self.a_lim
    }

    pub fn end_episode(&mut self) {
        self.alpha = (self.alpha * self.decay).max(self.alpha_min);
    }

    /// `clip(μ + ε, ±1.2·a_lim)` with `ε ~ N(0, (α·a_lim)²)` per component.
    pub fn perturb(&self, mu: &[f64], rng: &mut impl Rng) -> Vec<f64> {
        let bound = self.clip_bound();
        let sd = self.std_dev();
        if sd == 0.0 {
            return mu.iter().map(|m| m.clamp(-bound, bound)).collect();
        }
        let normal = Normal::new(0.0, sd).expect("finite positive std");
        mu.iter()
            .map(|m| (m + normal.sample(rng)).clamp(-bound, bound))
            .collect()
    }
}
