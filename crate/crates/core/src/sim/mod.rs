//! Two-body dynamics: force laws, integrators, dense trajectories and
//! ground-truth orbital diagnostics.

mod elements;
mod force;
mod kepler;
mod rk78;
mod scenario;
mod trajectory;
mod vector;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use elements::{
    orbital_elements, refine_extremum, separation_extrema, separation_range, sweep_period, Extremum, ExtremumKind,
    OrbitalElements,
};
pub use force::{accelerations, total_energy};
pub use kepler::{kepler_drift, step_fixed};
pub use rk78::{initial_step_guess, step_adaptive, AdaptiveStep, DEFAULT_TOLERANCE};
pub use scenario::{true_anomaly_from_mean, FileBody, FileForceLaw, FileOrbit, OrbitSpec, Scenario, ScenarioFile};
pub use trajectory::{simulate, DenseTrajectory, IntegratorInfo, TrajectoryMetadata, CSV_HEADER};
pub use vector::Vector3;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("bodies coincide (separation {separation:e} m)")]
    Singularity { separation: f64 },
    #[error("invalid input: {0}")]
    Validation(String),
    #[error("fixed-step symplectic integration requires a conservative Newtonian law, got {0}")]
    NonConservative(String),
    #[error("step size underflow at t = {time:e} s (dt = {dt:e} s): singularity approach")]
    SingularityApproach { time: f64, dt: f64 },
    #[error("integration blew up; last valid time {last_valid_time:e} s")]
    BlowUp { last_valid_time: f64 },
    #[error("insufficient coverage: {0}")]
    InsufficientCoverage(String),
    #[error("scenario file: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// One point mass.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BodyState {
    /// kg
    pub mass: f64,
    /// m
    pub position: Vector3,
    /// m/s
    pub velocity: Vector3,
}

impl BodyState {
    pub fn new(mass: f64, position: Vector3, velocity: Vector3) -> Self {
        Self { mass, position, velocity }
    }

    pub fn validate(&self) -> Result<(), SimError> {
        if !(self.mass > 0.0) || !self.mass.is_finite() {
            return Err(SimError::Validation(format!("mass must be positive and finite, got {}", self.mass)));
        }
        if !self.position.is_finite() || !self.velocity.is_finite() {
            return Err(SimError::Validation("non-finite position or velocity".into()));
        }
        Ok(())
    }
}

/// The binary: exactly two bodies.
pub type BodyPair = [BodyState; 2];

/// Separation vector from star 1 to star 2.
pub fn separation(bodies: &BodyPair) -> Vector3 {
    bodies[1].position - bodies[0].position
}

/// Centre-of-mass position and velocity.
pub fn center_of_mass(bodies: &BodyPair) -> (Vector3, Vector3) {
    let m = bodies[0].mass + bodies[1].mass;
    let r = (bodies[0].position * bodies[0].mass + bodies[1].position * bodies[1].mass) / m;
    let v = (bodies[0].velocity * bodies[0].mass + bodies[1].velocity * bodies[1].mass) / m;
    (r, v)
}

/// Total linear momentum (kg m/s).
pub fn total_momentum(bodies: &BodyPair) -> Vector3 {
    bodies[0].velocity * bodies[0].mass + bodies[1].velocity * bodies[1].mass
}

/// Force law acting between (and on) the two bodies.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ForceLaw {
    Newtonian,
    /// F = G m1 m2 r0^alpha / r^(2+alpha); r0 is the reference separation in m.
    ModifiedGravity {
        alpha: f64,
        reference_separation: f64,
    },
    /// Extra per-body acceleration -v/tau, tau in s.
    LinearDrag {
        tau: f64,
    },
}

impl ForceLaw {
    pub fn validate(&self) -> Result<(), SimError> {
        match *self {
            ForceLaw::Newtonian => Ok(()),
            ForceLaw::ModifiedGravity { alpha, reference_separation } => {
                if !(alpha > -1.0 && alpha < 1.0) {
                    return Err(SimError::Validation(format!("alpha must lie in (-1, 1), got {alpha}")));
                }
                if !(reference_separation > 0.0) || !reference_separation.is_finite() {
                    return Err(SimError::Validation("reference separation must be positive".into()));
                }
                Ok(())
            }
            ForceLaw::LinearDrag { tau } => {
                if !(tau > 0.0) || !tau.is_finite() {
                    return Err(SimError::Validation(format!("drag timescale must be positive, got {tau}")));
                }
                Ok(())
            }
        }
    }

    /// True for laws the symplectic Kepler-drift map integrates exactly.
    pub fn is_newtonian(&self) -> bool {
        match *self {
            ForceLaw::Newtonian => true,
            ForceLaw::ModifiedGravity { alpha, .. } => alpha == 0.0,
            ForceLaw::LinearDrag { .. } => false,
        }
    }

    pub fn label(&self) -> String {
        match *self {
            ForceLaw::Newtonian => "newtonian".into(),
            ForceLaw::ModifiedGravity { alpha, .. } => format!("modified_gravity(alpha={alpha})"),
            ForceLaw::LinearDrag { tau } => format!("linear_drag(tau={tau:e} s)"),
        }
    }
}
