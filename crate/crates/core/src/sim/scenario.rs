//! Scenario definitions and their structured-text file form.

use std::f64::consts::TAU;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{center_of_mass, separation, BodyPair, BodyState, ForceLaw, SimError, Vector3, DEFAULT_TOLERANCE};
use crate::units::{UnitSystem, G_SI};

/// A complete two-body setup. All physical fields are SI; `unit_system`
/// only governs presentation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub id: String,
    #[serde(default)]
    pub description: String,
    /// Bodies relative to their own centre of mass; the frame offset and
    /// drift are applied by [`Scenario::initial_state`].
    pub bodies: BodyPair,
    pub force_law: ForceLaw,
    pub com_offset: Vector3,
    pub com_velocity: Vector3,
    pub unit_system: UnitSystem,
    pub n_orbits: u32,
    pub samples_per_orbit: u32,
    /// Must be set when the initial state is unbound.
    pub unbound: bool,
    /// Local error tolerance for the adaptive integrator.
    pub tolerance: f64,
}

impl Scenario {
    pub fn new(id: &str, bodies: BodyPair, force_law: ForceLaw) -> Self {
        Self {
            id: id.into(),
            description: String::new(),
            bodies,
            force_law,
            com_offset: Vector3::ZERO,
            com_velocity: Vector3::ZERO,
            unit_system: UnitSystem::si(),
            n_orbits: 10,
            samples_per_orbit: 5000,
            unbound: false,
            tolerance: DEFAULT_TOLERANCE,
        }
    }

    pub fn masses(&self) -> [f64; 2] {
        [self.bodies[0].mass, self.bodies[1].mass]
    }

    pub fn total_mass(&self) -> f64 {
        self.bodies[0].mass + self.bodies[1].mass
    }

    /// Bodies in the observation frame at t = 0.
    pub fn initial_state(&self) -> BodyPair {
        let (r, v) = center_of_mass(&self.bodies);
        let mut out = self.bodies;
        for b in &mut out {
            b.position = b.position - r + self.com_offset;
            b.velocity = b.velocity - v + self.com_velocity;
        }
        out
    }

    /// Specific orbital energy of the Newtonian relative orbit at t = 0.
    pub fn specific_energy(&self) -> f64 {
        let r = separation(&self.bodies).norm();
        let v = self.bodies[1].velocity - self.bodies[0].velocity;
        0.5 * v.norm_squared() - G_SI * self.total_mass() / r
    }

    pub fn is_bound(&self) -> bool {
        self.specific_energy() < 0.0
    }

    /// Osculating Newtonian period at t = 0, or for unbound states the period
    /// of a circular orbit at the initial separation.
    pub fn reference_period(&self) -> f64 {
        let mu = G_SI * self.total_mass();
        let r = separation(&self.bodies).norm();
        let eps = self.specific_energy();
        let a = if eps < 0.0 { -mu / (2.0 * eps) } else { r };
        TAU * (a.powi(3) / mu).sqrt()
    }

    /// End of the simulated window (s).
    pub fn horizon(&self) -> f64 {
        self.n_orbits as f64 * self.reference_period()
    }

    pub fn validate(&self) -> Result<(), SimError> {
        if self.id.trim().is_empty() {
            return Err(SimError::Validation("scenario id is empty".into()));
        }
        for b in &self.bodies {
            b.validate()?;
        }
        self.force_law.validate()?;
        self.unit_system.validate().map_err(|e| SimError::Validation(e.to_string()))?;
        if self.n_orbits < 1 {
            return Err(SimError::Validation("n_orbits must be at least 1".into()));
        }
        if self.samples_per_orbit < 4 {
            return Err(SimError::Validation("samples_per_orbit must be at least 4".into()));
        }
        if !self.com_offset.is_finite() || !self.com_velocity.is_finite() {
            return Err(SimError::Validation("non-finite centre-of-mass offset or velocity".into()));
        }
        let r = separation(&self.bodies).norm();
        if !(r > 0.0) {
            return Err(SimError::Singularity { separation: r });
        }
        if !(self.tolerance > 1e-14 && self.tolerance < 1e-6) {
            return Err(SimError::Validation(format!("tolerance {:e} outside (1e-14, 1e-6)", self.tolerance)));
        }
        if !self.is_bound() && !self.unbound {
            return Err(SimError::Validation(format!(
                "scenario `{}` starts unbound but is not flagged `unbound`",
                self.id
            )));
        }
        Ok(())
    }

    pub fn from_toml_str(text: &str) -> Result<Self, SimError> {
        let file: ScenarioFile = toml::from_str(text).map_err(|e| SimError::Format(e.to_string()))?;
        file.into_scenario()
    }

    pub fn to_toml_string(&self) -> Result<String, SimError> {
        toml::to_string_pretty(&ScenarioFile::from_scenario(self)).map_err(|e| SimError::Format(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self, SimError> {
        Self::from_toml_str(&std::fs::read_to_string(path)?)
    }

    pub fn save(&self, path: &Path) -> Result<(), SimError> {
        std::fs::write(path, self.to_toml_string()?)?;
        Ok(())
    }
}

/// Orbit described by conic elements, in SI. Periastron lies on +x and the
/// motion is counter-clockwise.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OrbitSpec {
    pub m1: f64,
    pub m2: f64,
    /// Closest approach of the relative orbit (m).
    pub periastron: f64,
    pub eccentricity: f64,
    /// Initial true anomaly (rad).
    pub true_anomaly: f64,
}

impl OrbitSpec {
    pub fn from_semi_major(m1: f64, m2: f64, semi_major: f64, eccentricity: f64, true_anomaly: f64) -> Self {
        Self { m1, m2, periastron: semi_major * (1.0 - eccentricity), eccentricity, true_anomaly }
    }

    /// Bodies in their centre-of-mass frame.
    pub fn bodies(&self, g: f64) -> Result<BodyPair, SimError> {
        let e = self.eccentricity;
        if !(e >= 0.0) || !(self.periastron > 0.0) || !(self.m1 > 0.0) || !(self.m2 > 0.0) {
            return Err(SimError::Validation("invalid orbit elements".into()));
        }
        let nu = self.true_anomaly;
        let denom = 1.0 + e * nu.cos();
        if !(denom > 0.0) {
            return Err(SimError::Validation(format!("true anomaly {nu} is outside the hyperbolic branch")));
        }
        let m = self.m1 + self.m2;
        let mu = g * m;
        let p = self.periastron * (1.0 + e);
        let r = p / denom;
        let (s, c) = nu.sin_cos();
        let pos = Vector3::new(r * c, r * s, 0.0);
        let k = (mu / p).sqrt();
        let vel = Vector3::new(-k * s, k * (e + c), 0.0);
        Ok([
            BodyState::new(self.m1, pos * (-self.m2 / m), vel * (-self.m2 / m)),
            BodyState::new(self.m2, pos * (self.m1 / m), vel * (self.m1 / m)),
        ])
    }
}

/// True anomaly of an elliptic orbit at mean anomaly `mean`.
pub fn true_anomaly_from_mean(mean: f64, e: f64) -> f64 {
    let mut ecc = if e > 0.8 { std::f64::consts::PI } else { mean };
    for _ in 0..100 {
        let d = (ecc - e * ecc.sin() - mean) / (1.0 - e * ecc.cos());
        ecc -= d;
        if d.abs() < 1e-15 {
            break;
        }
    }
    2.0 * (((1.0 + e) / (1.0 - e)).sqrt() * (ecc / 2.0).tan()).atan()
}

/// Force law as written in a scenario file, in the file's units.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FileForceLaw {
    Newtonian,
    ModifiedGravity {
        alpha: f64,
        /// Defaults to the initial separation.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        reference_separation: Option<f64>,
    },
    LinearDrag {
        tau: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FileBody {
    pub mass: f64,
    pub position: [f64; 3],
    pub velocity: [f64; 3],
}

/// Element form: give either `semi_major` or `periastron`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FileOrbit {
    pub m1: f64,
    pub m2: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub semi_major: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub periastron: Option<f64>,
    pub eccentricity: f64,
    #[serde(default)]
    pub true_anomaly_deg: f64,
}

fn default_orbits() -> u32 {
    10
}

fn default_spo() -> u32 {
    5000
}

fn default_tolerance() -> f64 {
    DEFAULT_TOLERANCE
}

/// On-disk scenario. Quantities are in the declared `units`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioFile {
    pub id: String,
    #[serde(default)]
    pub description: String,
    #[serde(default)]
    pub units: UnitSystem,
    #[serde(default = "default_orbits")]
    pub n_orbits: u32,
    #[serde(default = "default_spo")]
    pub samples_per_orbit: u32,
    #[serde(default)]
    pub unbound: bool,
    #[serde(default = "default_tolerance")]
    pub tolerance: f64,
    #[serde(default)]
    pub com_offset: [f64; 3],
    #[serde(default)]
    pub com_velocity: [f64; 3],
    pub force_law: FileForceLaw,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bodies: Option<Vec<FileBody>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub orbit: Option<FileOrbit>,
}

impl ScenarioFile {
    pub fn into_scenario(self) -> Result<Scenario, SimError> {
        let u = &self.units;
        u.validate().map_err(|e| SimError::Format(e.to_string()))?;
        let (lf, tf, mf) = (u.length_factor(), u.time_factor(), u.mass_factor());
        let vf = lf / tf;
        let bodies: BodyPair = match (&self.bodies, &self.orbit) {
            (Some(list), None) => {
                if list.len() != 2 {
                    return Err(SimError::Format(format!("expected exactly two bodies, got {}", list.len())));
                }
                let conv = |b: &FileBody| {
                    BodyState::new(b.mass * mf, Vector3::from(b.position) * lf, Vector3::from(b.velocity) * vf)
                };
                [conv(&list[0]), conv(&list[1])]
            }
            (None, Some(o)) => {
                let q = match (o.semi_major, o.periastron) {
                    (Some(a), None) => a * (1.0 - o.eccentricity),
                    (None, Some(q)) => q,
                    _ => return Err(SimError::Format("orbit needs exactly one of semi_major, periastron".into())),
                };
                OrbitSpec {
                    m1: o.m1 * mf,
                    m2: o.m2 * mf,
                    periastron: q * lf,
                    eccentricity: o.eccentricity,
                    true_anomaly: o.true_anomaly_deg.to_radians(),
                }
                .bodies(G_SI)?
            }
            _ => return Err(SimError::Format("give exactly one of `bodies` or `orbit`".into())),
        };
        let force_law = match self.force_law {
            FileForceLaw::Newtonian => ForceLaw::Newtonian,
            FileForceLaw::ModifiedGravity { alpha, reference_separation } => ForceLaw::ModifiedGravity {
                alpha,
                reference_separation: reference_separation
                    .map(|r| r * lf)
                    .unwrap_or_else(|| separation(&bodies).norm()),
            },
            FileForceLaw::LinearDrag { tau } => ForceLaw::LinearDrag { tau: tau * tf },
        };
        let s = Scenario {
            id: self.id,
            description: self.description,
            bodies,
            force_law,
            com_offset: Vector3::from(self.com_offset) * lf,
            com_velocity: Vector3::from(self.com_velocity) * vf,
            unit_system: self.units,
            n_orbits: self.n_orbits,
            samples_per_orbit: self.samples_per_orbit,
            unbound: self.unbound,
            tolerance: self.tolerance,
        };
        s.validate()?;
        Ok(s)
    }

    /// Body form of `s`, expressed in its unit system.
    pub fn from_scenario(s: &Scenario) -> Self {
        let u = &s.unit_system;
        let (lf, tf, mf) = (u.length_factor(), u.time_factor(), u.mass_factor());
        let vf = lf / tf;
        let body = |b: &BodyState| FileBody {
            mass: b.mass / mf,
            position: (b.position / lf).to_array(),
            velocity: (b.velocity / vf).to_array(),
        };
        let force_law = match s.force_law {
            ForceLaw::Newtonian => FileForceLaw::Newtonian,
            ForceLaw::ModifiedGravity { alpha, reference_separation } => {
                FileForceLaw::ModifiedGravity { alpha, reference_separation: Some(reference_separation / lf) }
            }
            ForceLaw::LinearDrag { tau } => FileForceLaw::LinearDrag { tau: tau / tf },
        };
        Self {
            id: s.id.clone(),
            description: s.description.clone(),
            units: s.unit_system.clone(),
            n_orbits: s.n_orbits,
            samples_per_orbit: s.samples_per_orbit,
            unbound: s.unbound,
            tolerance: s.tolerance,
            com_offset: (s.com_offset / lf).to_array(),
            com_velocity: (s.com_velocity / vf).to_array(),
            force_law,
            bodies: Some(s.bodies.iter().map(body).collect()),
            orbit: None,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::units::{AU, M_SUN};

    fn circular() -> Scenario {
        let spec = OrbitSpec::from_semi_major(M_SUN, M_SUN, AU, 0.0, 0.0);
        Scenario::new("circ", spec.bodies(G_SI).unwrap(), ForceLaw::Newtonian)
    }

    #[test]
    fn circular_period_matches_kepler() {
        let s = circular();
        let want = TAU * (AU.powi(3) / (G_SI * 2.0 * M_SUN)).sqrt();
        assert!((s.reference_period() - want).abs() / want < 1e-12);
        assert!((want - 2.23e7).abs() / 2.23e7 < 5e-3);
    }

    #[test]
    fn orbit_spec_places_periastron() {
        let spec = OrbitSpec::from_semi_major(2.0 * M_SUN, M_SUN, 1.5 * AU, 0.8, 0.0);
        let b = spec.bodies(G_SI).unwrap();
        let r = separation(&b);
        assert!((r.norm() - 0.3 * AU).abs() < 1e-3);
        let (c, v) = center_of_mass(&b);
        assert!(c.norm() < 1e-3 && v.norm() < 1e-9);
    }

    #[test]
    fn mean_to_true_anomaly() {
        assert!(true_anomaly_from_mean(0.0, 0.5).abs() < 1e-15);
        let nu = true_anomaly_from_mean(std::f64::consts::PI, 0.9);
        assert!((nu.abs() - std::f64::consts::PI).abs() < 1e-9);
    }

    #[test]
    fn unflagged_unbound_rejected() {
        let spec = OrbitSpec { m1: M_SUN, m2: M_SUN, periastron: AU, eccentricity: 1.5, true_anomaly: 0.0 };
        let mut s = Scenario::new("hyp", spec.bodies(G_SI).unwrap(), ForceLaw::Newtonian);
        assert!(s.validate().is_err());
        s.unbound = true;
        s.validate().unwrap();
    }

    #[test]
    fn toml_round_trip_in_astro_units() {
        let mut s = circular();
        s.unit_system = UnitSystem::astro();
        s.com_offset = Vector3::new(2.0 * AU, 0.0, 0.0);
        s.force_law = ForceLaw::LinearDrag { tau: 3e8 };
        let text = s.to_toml_string().unwrap();
        let back = Scenario::from_toml_str(&text).unwrap();
        assert_eq!(back.id, s.id);
        for i in 0..2 {
            let d = (back.bodies[i].position - s.bodies[i].position).norm();
            assert!(d < 1e-3, "{d}");
            assert!((back.bodies[i].mass - s.bodies[i].mass).abs() / s.bodies[i].mass < 1e-14);
        }
    }

    #[test]
    fn element_form_file() {
        let text = r#"
id = "demo"
n_orbits = 3
[units]
name = "astro"
length = "AU"
time = "yr"
mass = "M_sun"
[force_law]
kind = "modified_gravity"
alpha = 0.02
[orbit]
m1 = 1.0
m2 = 0.5
semi_major = 2.0
eccentricity = 0.4
"#;
        let s = Scenario::from_toml_str(text).unwrap();
        match s.force_law {
            ForceLaw::ModifiedGravity { reference_separation, .. } => {
                assert!((reference_separation - 1.2 * AU).abs() < 1.0)
            }
            _ => panic!(),
        }
        assert_eq!(s.n_orbits, 3);
        assert!(Scenario::from_toml_str("id = \"x\"\n[force_law]\nkind = \"newtonian\"\n").is_err());
    }
}
