//! Grid particle filter producing dynamic occupancy grid maps.
//!
//! Each iteration predicts the particle population, fuses the predicted
//! occupancy with the measurement grid, rescales particle weights to the
//! posterior occupied mass, derives per-cell velocity statistics, and then
//! injects newborn particles and resamples back to a fixed population size.

mod dogma;
mod particles;
mod stats;
mod update;

pub use dogma::{build_dogma, DogmaFrame, DogmaMode};
pub use particles::{
    birth_particles, init_particles, particles_from_bytes, particles_to_bytes, predict_particles, resample,
    resample_with_offset, BirthPlacement, Particle, ParticleSet,
};
pub use stats::{cell_stats, mahalanobis_gate, mahalanobis_sq, CellStats};
pub use update::{cell_weight_sums, normalize_weights, particle_cells, update_occupancy, WEIGHT_TOLERANCE};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::evidential::{EvidentialGrid, GridError};

#[derive(Debug, Error)]
pub enum FilterError {
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error("all particle weights are zero")]
    DegenerateWeights,
    #[error("no measurement frames given")]
    EmptySequence,
    #[error("invalid filter config: {0}")]
    InvalidConfig(String),
    #[error("{0}")]
    Format(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FilterConfig {
    /// Population size ν.
    pub particle_count: usize,
    /// Standard deviation of initial and newborn velocities, m/s.
    pub sigma_v: f64,
    pub initial_weight: f64,
    pub p_survive: f64,
    /// Position process noise per step, m.
    pub q_pos: f64,
    /// Velocity process noise per step, m/s.
    pub q_vel: f64,
    /// Newborn particles per step; `None` means a tenth of the population.
    pub n_birth: Option<usize>,
    /// Share of the posterior occupied mass given to newborns.
    pub birth_weight_fraction: f64,
    pub birth_placement: BirthPlacement,
    /// Reliability discount applied to the prediction before fusion.
    pub alpha: f64,
    pub tau_threshold: f64,
    /// Covariance regularization for the Mahalanobis gate, (m/s)².
    pub epsilon_reg: f64,
    pub m_occ_min: f64,
    /// Speed mapped to ±1 in the velocity channels, m/s.
    pub v_max: f64,
    /// Time step, s.
    pub dt: f64,
    /// Keep the prior's free mass in the predicted cell.
    pub carry_free: bool,
    pub seed: u64,
}

impl Default for FilterConfig {
    fn default() -> Self {
        Self {
            particle_count: 20_000,
            sigma_v: 3.5,
            initial_weight: 0.01,
            p_survive: 0.99,
            q_pos: 0.05,
            // 3 m/s² of white acceleration at 10 Hz.
            q_vel: 0.3,
            n_birth: None,
            birth_weight_fraction: 0.05,
            birth_placement: BirthPlacement::Occupancy,
            alpha: crate::evidential::DEFAULT_ALPHA,
            tau_threshold: 5.991,
            epsilon_reg: 0.01,
            m_occ_min: 0.1,
            v_max: 20.0,
            dt: 0.1,
            carry_free: true,
            seed: 0,
        }
    }
}

impl FilterConfig {
    pub fn birth_count(&self) -> usize {
        self.n_birth.unwrap_or(self.particle_count / 10)
    }

    pub fn validate(&self) -> Result<(), FilterError> {
        let bad = |m: &str| Err(FilterError::InvalidConfig(m.to_string()));
        let unit = |x: f64| (0.0..=1.0).contains(&x);
        if self.particle_count == 0 {
            return bad("particle_count must be >= 1");
        }
        if self.birth_count() > self.particle_count {
            return bad("n_birth must not exceed particle_count");
        }
        if !(self.sigma_v > 0.0 && self.sigma_v.is_finite()) {
            return bad("sigma_v must be positive");
        }
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return bad("dt must be positive");
        }
        if !(self.q_pos >= 0.0 && self.q_vel >= 0.0) {
            return bad("process noise must be non-negative");
        }
        if !(unit(self.p_survive) && unit(self.alpha) && unit(self.m_occ_min)) {
            return bad("p_survive, alpha and m_occ_min must lie in [0, 1]");
        }
        if !(self.initial_weight >= 0.0 && self.birth_weight_fraction >= 0.0) {
            return bad("weights must be non-negative");
        }
        if !(self.tau_threshold >= 0.0 && self.epsilon_reg > 0.0 && self.v_max > 0.0) {
            return bad("tau_threshold must be >= 0, epsilon_reg and v_max positive");
        }
        Ok(())
    }
}

/// Everything produced for one measurement frame.
#[derive(Debug, Clone)]
pub struct FilterStep {
    pub dogma: DogmaFrame,
    pub posterior: EvidentialGrid,
    pub stats: Vec<CellStats>,
    pub dynamic: Vec<bool>,
    /// Normalized persistent particles: per-cell weight sums equal the
    /// posterior occupied mass.
    pub particles: Option<Vec<Particle>>,
}

/// Streaming filter: feed one measurement grid per frame.
#[derive(Debug, Clone)]
pub struct DogmaFilter {
    config: FilterConfig,
    mode: DogmaMode,
    particles: Option<ParticleSet>,
    posterior: Option<EvidentialGrid>,
}

impl DogmaFilter {
    pub fn new(config: FilterConfig, mode: DogmaMode) -> Result<Self, FilterError> {
        config.validate()?;
        Ok(Self {
            config,
            mode,
            particles: None,
            posterior: None,
        })
    }

    pub fn config(&self) -> &FilterConfig {
        &self.config
    }

    pub fn particles(&self) -> Option<&ParticleSet> {
        self.particles.as_ref()
    }

    pub fn posterior(&self) -> Option<&EvidentialGrid> {
        self.posterior.as_ref()
    }

    /// One iteration. `ego_velocity` is the world-frame ego velocity used to
    /// express cell velocities relative to the ego.
    pub fn step(
        &mut self,
        meas: &EvidentialGrid,
        ego_velocity: [f64; 2],
        keep_particles: bool,
    ) -> Result<FilterStep, FilterError> {
        let cfg = &self.config;
        let spec = meas.spec;
        let mut ps = match self.particles.take() {
            Some(ps) => ps,
            None => init_particles(
                &spec,
                meas.anchor,
                cfg.particle_count,
                cfg.sigma_v,
                cfg.initial_weight,
                cfg.seed,
            )?,
        };
        let prior = match &self.posterior {
            Some(p) => p.shifted_to(meas.anchor),
            None => EvidentialGrid::vacuous(spec).with_anchor(meas.anchor),
        };

        predict_particles(&mut ps, cfg.dt, cfg.q_pos, cfg.q_vel, cfg.p_survive, &spec, meas.anchor);
        let posterior = update_occupancy(&mut ps.particles, meas, &prior, cfg.alpha, cfg.carry_free)?;
        normalize_weights(&mut ps.particles, &posterior)?;

        let stats = cell_stats(&ps.particles, &posterior, ego_velocity);
        let dynamic = mahalanobis_gate(&stats, cfg.tau_threshold, cfg.epsilon_reg);
        let dogma = build_dogma(&posterior, &stats, &dynamic, cfg.v_max, cfg.m_occ_min, self.mode);
        let snapshot = keep_particles.then(|| ps.particles.clone());

        let born = birth_particles(
            &mut ps,
            &posterior,
            cfg.birth_count(),
            cfg.sigma_v,
            cfg.birth_weight_fraction,
            cfg.birth_placement,
        );
        let mut pool = std::mem::take(&mut ps.particles);
        pool.extend(born);
        ps.particles = resample(&pool, cfg.particle_count, &mut ps.rng)?;

        self.particles = Some(ps);
        self.posterior = Some(posterior.clone());
        Ok(FilterStep {
            dogma,
            posterior,
            stats,
            dynamic,
            particles: snapshot,
        })
    }
}

/// Runs the filter over a whole sequence, keeping particle snapshots.
pub fn run_filter(
    frames: &[EvidentialGrid],
    ego_velocities: &[[f64; 2]],
    config: &FilterConfig,
    mode: DogmaMode,
) -> Result<Vec<FilterStep>, FilterError> {
    if frames.is_empty() {
        return Err(FilterError::EmptySequence);
    }
    if ego_velocities.len() != frames.len() {
        return Err(FilterError::InvalidConfig(format!(
            "{} ego velocities for {} frames",
            ego_velocities.len(),
            frames.len()
        )));
    }
    let mut filter = DogmaFilter::new(config.clone(), mode)?;
    frames
        .iter()
        .zip(ego_velocities)
        .map(|(m, v)| filter.step(m, *v, true))
        .collect()
}
