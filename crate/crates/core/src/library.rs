//! The built-in scenario set and a lazily simulated scenario library.

use std::collections::HashMap;
use std::f64::consts::TAU;
use std::path::Path;
use std::sync::{Arc, OnceLock};

use rayon::prelude::*;
use thiserror::Error;

use crate::sim::{simulate, true_anomaly_from_mean, DenseTrajectory, ForceLaw, OrbitSpec, Scenario, SimError, Vector3};
use crate::units::{UnitSystem, AU, G_SI, M_SUN};

#[derive(Debug, Error)]
pub enum LibraryError {
    #[error("unknown scenario `{0}`")]
    NotFound(String),
    #[error("duplicate scenario id `{0}`")]
    Duplicate(String),
    #[error("scenario `{id}`: {source}")]
    Scenario {
        id: String,
        #[source]
        source: SimError,
    },
    #[error("simulation of `{id}` failed: {message}")]
    Simulation { id: String, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

const KM: f64 = 1e3;

fn orbit(m1: f64, m2: f64, a_au: f64, e: f64, nu_deg: f64) -> OrbitSpec {
    OrbitSpec::from_semi_major(m1 * M_SUN, m2 * M_SUN, a_au * AU, e, nu_deg.to_radians())
}

fn build(id: &str, description: &str, spec: OrbitSpec, law: ForceLaw) -> Scenario {
    let bodies = spec.bodies(G_SI).expect("built-in orbit elements are valid");
    let law = match law {
        ForceLaw::ModifiedGravity { alpha, .. } => {
            ForceLaw::ModifiedGravity { alpha, reference_separation: (bodies[1].position - bodies[0].position).norm() }
        }
        other => other,
    };
    let mut s = Scenario::new(id, bodies, law);
    s.description = description.into();
    s
}

fn with_units(mut s: Scenario, units: UnitSystem) -> Scenario {
    s.unit_system = units;
    s
}

fn drag(id: &str, description: &str, spec: OrbitSpec, periods: f64) -> Scenario {
    let base = build(id, description, spec, ForceLaw::Newtonian);
    let tau = periods * base.reference_period();
    Scenario { force_law: ForceLaw::LinearDrag { tau }, ..base }
}

/// The sixteen shipped scenarios.
pub fn builtin_scenarios() -> Vec<Scenario> {
    let eccentric = orbit(1.2, 0.7, 2.0, 0.4, 40.0);
    let mut out = vec![
        build(
            "circular_equal",
            "Equal solar-mass stars on a 1 AU circular orbit",
            orbit(1.0, 1.0, 1.0, 0.0, 0.0),
            ForceLaw::Newtonian,
        ),
        build("eccentric_unequal", "Unequal masses on an e = 0.4 orbit", eccentric, ForceLaw::Newtonian),
        with_units(
            build(
                "eccentric_unequal_astro",
                "eccentric_unequal presented in AU, years and solar masses",
                eccentric,
                ForceLaw::Newtonian,
            ),
            UnitSystem::astro(),
        ),
        with_units(
            build("eccentric_unequal_cgs", "eccentric_unequal presented in cgs units", eccentric, ForceLaw::Newtonian),
            UnitSystem::cgs(),
        ),
        build(
            "high_eccentricity",
            "e = 0.8 orbit starting at apoastron",
            orbit(2.0, 1.0, 1.5, 0.8, 180.0),
            ForceLaw::Newtonian,
        ),
        Scenario {
            com_offset: Vector3::new(5.0 * AU, -2.0 * AU, 0.0),
            ..build(
                "displaced_com",
                "Centre of mass away from the origin",
                orbit(0.9, 0.6, 3.0, 0.3, 120.0),
                ForceLaw::Newtonian,
            )
        },
        Scenario {
            com_velocity: Vector3::new(2.0 * KM, 1.0 * KM, 0.0),
            ..build(
                "proper_motion",
                "Binary drifting across the frame",
                orbit(1.5, 1.1, 2.5, 0.4, 200.0),
                ForceLaw::Newtonian,
            )
        },
        Scenario {
            com_offset: Vector3::new(-3.0 * AU, 4.0 * AU, 0.0),
            com_velocity: Vector3::new(-5.0 * KM, 2.0 * KM, 0.0),
            ..build(
                "proper_motion_displaced",
                "Displaced and drifting centre of mass",
                orbit(1.0, 0.4, 1.2, 0.2, 300.0),
                ForceLaw::Newtonian,
            )
        },
    ];

    // starts 1.5 uniform-100 sample spacings after periastron, so the next
    // passage falls midway between two evenly spaced samples
    let e = 0.93;
    let nu0 = true_anomaly_from_mean(TAU * 1.5 / 99.0, e);
    out.push(Scenario {
        n_orbits: 1,
        ..build(
            "single_orbit_eccentric",
            "One orbit of a highly eccentric binary",
            orbit(1.0, 1.0, 4.0, e, nu0.to_degrees()),
            ForceLaw::Newtonian,
        )
    });

    let hyperbolic =
        OrbitSpec { m1: M_SUN, m2: 0.5 * M_SUN, periastron: AU, eccentricity: 1.5, true_anomaly: -100f64.to_radians() };
    out.push(Scenario { unbound: true, ..build("unbound", "Hyperbolic flyby", hyperbolic, ForceLaw::Newtonian) });

    for (id, m1, m2, a, e, nu, alpha) in [
        ("modified_gravity_030", 1.0, 0.8, 1.5, 0.5, 0.0, 0.03),
        ("modified_gravity_015", 1.3, 0.6, 2.0, 0.4, 90.0, 0.015),
        ("modified_gravity_050", 0.9, 0.9, 1.0, 0.45, 180.0, 0.05),
    ] {
        out.push(build(
            id,
            &format!("Force law steeper than inverse square by alpha = {alpha}"),
            orbit(m1, m2, a, e, nu),
            ForceLaw::ModifiedGravity { alpha, reference_separation: 1.0 },
        ));
    }

    out.push(drag("drag_circular", "Circular orbit decaying under linear drag", orbit(1.0, 0.8, 1.0, 0.0, 0.0), 50.0));
    out.push(drag(
        "drag_circular_fast",
        "drag_circular with half the drag timescale",
        orbit(1.0, 0.8, 1.0, 0.0, 0.0),
        25.0,
    ));
    out.push(drag(
        "drag_eccentric",
        "Eccentric orbit decaying under linear drag",
        orbit(1.0, 0.8, 1.0, 0.3, 0.0),
        80.0,
    ));
    debug_assert!(out.iter().all(|s| s.validate().is_ok()));
    out
}

struct Entry {
    scenario: Scenario,
    trajectory: OnceLock<Result<Arc<DenseTrajectory>, String>>,
}

/// Scenarios by id, each simulated at most once on first use.
pub struct ScenarioLibrary {
    entries: Vec<Entry>,
    index: HashMap<String, usize>,
}

impl ScenarioLibrary {
    pub fn new(scenarios: Vec<Scenario>) -> Result<Self, LibraryError> {
        let mut index = HashMap::new();
        let mut entries = Vec::with_capacity(scenarios.len());
        for s in scenarios {
            s.validate().map_err(|source| LibraryError::Scenario { id: s.id.clone(), source })?;
            if index.insert(s.id.clone(), entries.len()).is_some() {
                return Err(LibraryError::Duplicate(s.id));
            }
            entries.push(Entry { scenario: s, trajectory: OnceLock::new() });
        }
        Ok(Self { entries, index })
    }

    pub fn builtin() -> Self {
        Self::new(builtin_scenarios()).expect("built-in scenarios are valid")
    }

    /// Loads every `*.toml` scenario file in `dir`, sorted by file name.
    pub fn load_dir(dir: &Path) -> Result<Self, LibraryError> {
        let mut paths: Vec<_> = std::fs::read_dir(dir)?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x == "toml"))
            .collect();
        paths.sort();
        let mut out = Vec::new();
        for p in paths {
            let s =
                Scenario::load(&p).map_err(|source| LibraryError::Scenario { id: p.display().to_string(), source })?;
            out.push(s);
        }
        Self::new(out)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn scenarios(&self) -> impl Iterator<Item = &Scenario> {
        self.entries.iter().map(|e| &e.scenario)
    }

    pub fn get(&self, id: &str) -> Result<&Scenario, LibraryError> {
        self.index.get(id).map(|&i| &self.entries[i].scenario).ok_or_else(|| LibraryError::NotFound(id.into()))
    }

    pub fn trajectory(&self, id: &str) -> Result<Arc<DenseTrajectory>, LibraryError> {
        let &i = self.index.get(id).ok_or_else(|| LibraryError::NotFound(id.into()))?;
        let entry = &self.entries[i];
        entry
            .trajectory
            .get_or_init(|| simulate(&entry.scenario).map(Arc::new).map_err(|e| e.to_string()))
            .clone()
            .map_err(|message| LibraryError::Simulation { id: id.into(), message })
    }

    /// Simulates every scenario in parallel.
    pub fn simulate_all(&self) -> Result<(), LibraryError> {
        self.entries.par_iter().try_for_each(|e| self.trajectory(&e.scenario.id).map(|_| ()))
    }
}
