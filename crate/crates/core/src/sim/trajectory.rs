//! Dense trajectories and the driver that produces them.

use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::kepler::kepler_drift;
use super::rk78::{initial_step_guess, AdaptiveStepper};
use super::{center_of_mass, separation, BodyPair, ForceLaw, Scenario, SimError, Vector3};
use crate::units::{UnitSystem, G_SI};

/// Column header of the exported table.
pub const CSV_HEADER: &str = "time, star1_x, star1_y, star1_z, star2_x, star2_y, star2_z";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntegratorInfo {
    pub name: String,
    pub step_policy: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tolerance: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryMetadata {
    pub scenario_id: String,
    pub force_law: ForceLaw,
    pub masses: [f64; 2],
    pub integrator: IntegratorInfo,
    pub n_orbits: u32,
    pub samples_per_orbit: u32,
    /// Orbital period used to set the horizon and sampling (s).
    pub reference_period: f64,
    pub rows: usize,
    pub unit_system: UnitSystem,
}

/// Hidden ground-truth time series, in SI.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenseTrajectory {
    pub scenario_id: String,
    pub times: Vec<f64>,
    pub star1: Vec<Vector3>,
    pub star2: Vec<Vector3>,
    /// Velocities are never shown to agents; they feed ground truths.
    pub star1_velocity: Vec<Vector3>,
    pub star2_velocity: Vec<Vector3>,
    pub metadata: TrajectoryMetadata,
}

impl DenseTrajectory {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn end_time(&self) -> f64 {
        *self.times.last().unwrap_or(&0.0)
    }

    pub fn relative_positions(&self) -> Vec<Vector3> {
        self.star1.iter().zip(&self.star2).map(|(a, b)| *b - *a).collect()
    }

    pub fn relative_velocities(&self) -> Option<Vec<Vector3>> {
        if self.star1_velocity.len() != self.len() {
            return None;
        }
        Some(self.star1_velocity.iter().zip(&self.star2_velocity).map(|(a, b)| *b - *a).collect())
    }

    pub fn separations(&self) -> Vec<f64> {
        self.star1.iter().zip(&self.star2).map(|(a, b)| (*b - *a).norm()).collect()
    }

    /// Full state at sample `i`.
    pub fn state(&self, i: usize) -> BodyPair {
        let [m1, m2] = self.metadata.masses;
        [
            super::BodyState::new(m1, self.star1[i], self.star1_velocity[i]),
            super::BodyState::new(m2, self.star2[i], self.star2_velocity[i]),
        ]
    }

    /// Writes the table in the scenario's units.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<(), SimError> {
        let u = &self.metadata.unit_system;
        let (lf, tf) = (u.length_factor(), u.time_factor());
        writeln!(out, "{CSV_HEADER}")?;
        for i in 0..self.len() {
            let (a, b) = (self.star1[i] / lf, self.star2[i] / lf);
            writeln!(
                out,
                "{:e}, {:e}, {:e}, {:e}, {:e}, {:e}, {:e}",
                self.times[i] / tf,
                a.x,
                a.y,
                a.z,
                b.x,
                b.y,
                b.z
            )?;
        }
        Ok(())
    }

    /// Writes `path` plus a `.meta.json` sidecar; returns the sidecar path.
    pub fn export(&self, path: &Path) -> Result<PathBuf, SimError> {
        let f = std::io::BufWriter::new(std::fs::File::create(path)?);
        self.write_csv(f)?;
        let meta = path.with_extension("meta.json");
        let json = serde_json::to_string_pretty(&self.metadata).map_err(|e| SimError::Format(e.to_string()))?;
        std::fs::write(&meta, json)?;
        Ok(meta)
    }
}

fn check_finite(b: &BodyPair, last_valid_time: f64) -> Result<(), SimError> {
    if b.iter().all(|s| s.position.is_finite() && s.velocity.is_finite()) {
        Ok(())
    } else {
        Err(SimError::BlowUp { last_valid_time })
    }
}

/// Integrates `scenario` over `n_orbits` reference periods, sampled
/// `samples_per_orbit` times per period.
///
/// Newtonian laws use the fixed-step symplectic map with one step per
/// output sample; other laws use the adaptive pair with steps clipped to the
/// output grid.
pub fn simulate(scenario: &Scenario) -> Result<DenseTrajectory, SimError> {
    scenario.validate()?;
    let period = scenario.reference_period();
    let spo = scenario.samples_per_orbit as usize;
    let n = scenario.n_orbits as usize * spo;
    let dt = period / spo as f64;
    let law = scenario.force_law;
    let mut state = scenario.initial_state();

    let mut times = Vec::with_capacity(n + 1);
    let mut s1 = Vec::with_capacity(n + 1);
    let mut s2 = Vec::with_capacity(n + 1);
    let mut v1 = Vec::with_capacity(n + 1);
    let mut v2 = Vec::with_capacity(n + 1);
    let mut push = |t: f64, b: &BodyPair| {
        times.push(t);
        s1.push(b[0].position);
        s2.push(b[1].position);
        v1.push(b[0].velocity);
        v2.push(b[1].velocity);
    };
    push(0.0, &state);

    let integrator = if law.is_newtonian() {
        // the centre of mass moves in a straight line, so only the relative
        // orbit is stepped; bodies are rebuilt from it at each sample
        let (m1, m2) = (state[0].mass, state[1].mass);
        let m = m1 + m2;
        let (com0, com_v) = center_of_mass(&state);
        let mut rel = separation(&state);
        let mut rel_v = state[1].velocity - state[0].velocity;
        for k in 1..=n {
            let t_prev = (k - 1) as f64 * dt;
            (rel, rel_v) = kepler_drift(rel, rel_v, G_SI * m, dt).map_err(|e| relabel(e, t_prev))?;
            let t = k as f64 * dt;
            let com = com0 + com_v * t;
            state[0].position = com - rel * (m2 / m);
            state[1].position = com + rel * (m1 / m);
            state[0].velocity = com_v - rel_v * (m2 / m);
            state[1].velocity = com_v + rel_v * (m1 / m);
            check_finite(&state, t_prev)?;
            push(t, &state);
        }
        IntegratorInfo {
            name: "wisdom_holman_kepler_drift".into(),
            step_policy: format!("fixed dt = T/{spo}"),
            tolerance: None,
        }
    } else {
        let mut stepper = AdaptiveStepper::new(law, G_SI, scenario.tolerance, initial_step_guess(&state, G_SI).min(dt));
        let mut t = 0.0;
        for k in 1..=n {
            let target = k as f64 * dt;
            while target - t > 1e-12 * dt {
                let step = stepper.step(&state, target - t).map_err(|e| relabel(e, t))?;
                check_finite(&step.state, t)?;
                state = step.state;
                t += step.dt_used;
            }
            t = target;
            push(target, &state);
        }
        IntegratorInfo {
            name: "rkf78".into(),
            step_policy: "embedded 7(8) with PI control, clipped to output grid".into(),
            tolerance: Some(scenario.tolerance),
        }
    };

    let rows = times.len();
    Ok(DenseTrajectory {
        scenario_id: scenario.id.clone(),
        times,
        star1: s1,
        star2: s2,
        star1_velocity: v1,
        star2_velocity: v2,
        metadata: TrajectoryMetadata {
            scenario_id: scenario.id.clone(),
            force_law: law,
            masses: scenario.masses(),
            integrator,
            n_orbits: scenario.n_orbits,
            samples_per_orbit: scenario.samples_per_orbit,
            reference_period: period,
            rows,
            unit_system: scenario.unit_system.clone(),
        },
    })
}

fn relabel(e: SimError, time: f64) -> SimError {
    match e {
        SimError::SingularityApproach { dt, .. } => SimError::SingularityApproach { time, dt },
        SimError::BlowUp { .. } => SimError::BlowUp { last_valid_time: time },
        other => other,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::OrbitSpec;
    use crate::units::{AU, M_SUN};

    fn small(law: ForceLaw) -> Scenario {
        let spec = OrbitSpec::from_semi_major(M_SUN, 0.5 * M_SUN, AU, 0.3, 0.0);
        let mut s = Scenario::new("t", spec.bodies(G_SI).unwrap(), law);
        s.n_orbits = 2;
        s.samples_per_orbit = 200;
        s
    }

    #[test]
    fn grid_and_lengths() {
        let tr = simulate(&small(ForceLaw::Newtonian)).unwrap();
        assert_eq!(tr.len(), 401);
        assert_eq!(tr.times[0], 0.0);
        assert!(tr.times.windows(2).all(|w| w[1] > w[0]));
        assert!(tr.star1.iter().chain(&tr.star2).all(|p| p.z == 0.0));
        assert_eq!(tr.metadata.integrator.name, "wisdom_holman_kepler_drift");
    }

    #[test]
    fn csv_header_and_rows() {
        let tr = simulate(&small(ForceLaw::Newtonian)).unwrap();
        let mut buf = Vec::new();
        tr.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next().unwrap(), CSV_HEADER);
        assert_eq!(lines.count(), tr.len());
    }

    #[test]
    fn adaptive_path_used_for_drag() {
        let tr = simulate(&small(ForceLaw::LinearDrag { tau: 1e9 })).unwrap();
        assert_eq!(tr.metadata.integrator.name, "rkf78");
        assert_eq!(tr.len(), 401);
    }

    #[test]
    fn deterministic() {
        let s = small(ForceLaw::LinearDrag { tau: 1e9 });
        assert_eq!(simulate(&s).unwrap(), simulate(&s).unwrap());
    }
}
