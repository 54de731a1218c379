//! Embedded Runge-Kutta-Fehlberg 7(8) pair with proportional-integral step
//! control, used for non-conservative and modified force laws.

use super::{accelerations, BodyPair, ForceLaw, SimError};

/// Default local error tolerance.
pub const DEFAULT_TOLERANCE: f64 = 1e-12;

const STAGES: usize = 13;

#[cfg_attr(not(test), allow(dead_code))]
const C: [f64; STAGES] =
    [0.0, 2.0 / 27.0, 1.0 / 9.0, 1.0 / 6.0, 5.0 / 12.0, 0.5, 5.0 / 6.0, 1.0 / 6.0, 2.0 / 3.0, 1.0 / 3.0, 1.0, 0.0, 1.0];

#[rustfmt::skip]
const A: [[f64; 12]; STAGES] = [
    [0.0; 12],
    [2.0 / 27.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [1.0 / 36.0, 1.0 / 12.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [1.0 / 24.0, 0.0, 1.0 / 8.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [5.0 / 12.0, 0.0, -25.0 / 16.0, 25.0 / 16.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [1.0 / 20.0, 0.0, 0.0, 1.0 / 4.0, 1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [-25.0 / 108.0, 0.0, 0.0, 125.0 / 108.0, -65.0 / 27.0, 125.0 / 54.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [31.0 / 300.0, 0.0, 0.0, 0.0, 61.0 / 225.0, -2.0 / 9.0, 13.0 / 900.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [2.0, 0.0, 0.0, -53.0 / 6.0, 704.0 / 45.0, -107.0 / 9.0, 67.0 / 90.0, 3.0, 0.0, 0.0, 0.0, 0.0],
    [-91.0 / 108.0, 0.0, 0.0, 23.0 / 108.0, -976.0 / 135.0, 311.0 / 54.0, -19.0 / 60.0, 17.0 / 6.0, -1.0 / 12.0, 0.0, 0.0, 0.0],
    [2383.0 / 4100.0, 0.0, 0.0, -341.0 / 164.0, 4496.0 / 1025.0, -301.0 / 82.0, 2133.0 / 4100.0, 45.0 / 82.0, 45.0 / 164.0, 18.0 / 41.0, 0.0, 0.0],
    [3.0 / 205.0, 0.0, 0.0, 0.0, 0.0, -6.0 / 41.0, -3.0 / 205.0, -3.0 / 41.0, 3.0 / 41.0, 6.0 / 41.0, 0.0, 0.0],
    [-1777.0 / 4100.0, 0.0, 0.0, -341.0 / 164.0, 4496.0 / 1025.0, -289.0 / 82.0, 2193.0 / 4100.0, 51.0 / 82.0, 33.0 / 164.0, 12.0 / 41.0, 0.0, 1.0],
];

/// Eighth-order weights; the solution is advanced with these.
const B8: [f64; STAGES] = [
    0.0,
    0.0,
    0.0,
    0.0,
    0.0,
    34.0 / 105.0,
    9.0 / 35.0,
    9.0 / 35.0,
    9.0 / 280.0,
    9.0 / 280.0,
    0.0,
    41.0 / 840.0,
    41.0 / 840.0,
];

/// Seventh-order weights for the embedded error estimate.
const B7: [f64; STAGES] = [
    41.0 / 840.0,
    0.0,
    0.0,
    0.0,
    0.0,
    34.0 / 105.0,
    9.0 / 35.0,
    9.0 / 35.0,
    9.0 / 280.0,
    9.0 / 280.0,
    41.0 / 840.0,
    0.0,
    0.0,
];

type State = [f64; 12];

fn pack(b: &BodyPair) -> State {
    let mut y = [0.0; 12];
    y[0..3].copy_from_slice(&b[0].position.to_array());
    y[3..6].copy_from_slice(&b[1].position.to_array());
    y[6..9].copy_from_slice(&b[0].velocity.to_array());
    y[9..12].copy_from_slice(&b[1].velocity.to_array());
    y
}

fn unpack(y: &State, template: &BodyPair) -> BodyPair {
    let v = |i: usize| [y[i], y[i + 1], y[i + 2]].into();
    let mut out = *template;
    out[0].position = v(0);
    out[1].position = v(3);
    out[0].velocity = v(6);
    out[1].velocity = v(9);
    out
}

fn derivative(y: &State, template: &BodyPair, law: &ForceLaw, g: f64) -> Result<State, SimError> {
    let b = unpack(y, template);
    let [a1, a2] = accelerations(&b, law, g)?;
    let mut d = [0.0; 12];
    d[0..6].copy_from_slice(&y[6..12]);
    d[6..9].copy_from_slice(&a1.to_array());
    d[9..12].copy_from_slice(&a2.to_array());
    Ok(d)
}

/// Result of one accepted adaptive step.
#[derive(Debug, Clone, Copy)]
pub struct AdaptiveStep {
    pub state: BodyPair,
    pub dt_used: f64,
    pub dt_next: f64,
    /// Estimated local error divided by its allowance (<= 1 when accepted).
    pub error_ratio: f64,
}

/// A reasonable first step: a small fraction of the local dynamical time.
pub fn initial_step_guess(bodies: &BodyPair, g: f64) -> f64 {
    let r = (bodies[1].position - bodies[0].position).norm();
    let m = bodies[0].mass + bodies[1].mass;
    1e-3 * (r * r * r / (g * m)).sqrt()
}

/// Stateful stepper carrying the previous error for PI control.
#[derive(Debug, Clone)]
pub(crate) struct AdaptiveStepper {
    pub law: ForceLaw,
    pub g: f64,
    pub tol: f64,
    pub dt: f64,
    prev_error: f64,
}

impl AdaptiveStepper {
    pub fn new(law: ForceLaw, g: f64, tol: f64, dt: f64) -> Self {
        Self { law, g, tol, dt, prev_error: 1.0 }
    }

    fn attempt(&self, y: &State, template: &BodyPair, h: f64) -> Result<(State, f64), SimError> {
        let mut k = [[0.0; 12]; STAGES];
        k[0] = derivative(y, template, &self.law, self.g)?;
        for s in 1..STAGES {
            let mut ys = *y;
            for (j, kj) in k.iter().enumerate().take(s) {
                let a = A[s][j];
                if a != 0.0 {
                    for i in 0..12 {
                        ys[i] += h * a * kj[i];
                    }
                }
            }
            // a stage landing on or past a collision just rejects the step
            match derivative(&ys, template, &self.law, self.g) {
                Ok(d) => k[s] = d,
                Err(_) => return Ok((*y, f64::INFINITY)),
            }
        }
        let mut y8 = *y;
        let mut err = [0.0; 12];
        for s in 0..STAGES {
            for i in 0..12 {
                y8[i] += h * B8[s] * k[s][i];
                err[i] += h * (B8[s] - B7[s]) * k[s][i];
            }
        }
        // scale by the relative orbit so COM offsets do not loosen control
        let sep = ((y[3] - y[0]).powi(2) + (y[4] - y[1]).powi(2) + (y[5] - y[2]).powi(2)).sqrt();
        let vrel = ((y[9] - y[6]).powi(2) + (y[10] - y[7]).powi(2) + (y[11] - y[8]).powi(2)).sqrt();
        let m = template[0].mass + template[1].mass;
        let vscale = vrel.max((self.g * m / sep).sqrt());
        let mut ratio: f64 = 0.0;
        for (i, e) in err.iter().enumerate() {
            let scale = if i < 6 { sep } else { vscale };
            ratio = ratio.max(e.abs() / (self.tol * scale));
        }
        if !y8.iter().all(|v| v.is_finite()) {
            ratio = f64::INFINITY;
        }
        Ok((y8, ratio))
    }

    /// Takes one accepted step no longer than `dt_max`.
    pub fn step(&mut self, bodies: &BodyPair, dt_max: f64) -> Result<AdaptiveStep, SimError> {
        let y = pack(bodies);
        let r = (bodies[1].position - bodies[0].position).norm();
        let m = bodies[0].mass + bodies[1].mass;
        let floor = 1e-12 * (r * r * r / (self.g * m)).sqrt();
        let mut clipped = dt_max < self.dt;
        let mut h = if clipped { dt_max } else { self.dt };
        loop {
            if h < floor && !clipped {
                return Err(SimError::SingularityApproach { time: 0.0, dt: h });
            }
            let (y8, ratio) = self.attempt(&y, bodies, h)?;
            if ratio <= 1.0 {
                let ratio_c = ratio.max(1e-10);
                let factor = (0.9 * ratio_c.powf(-0.7 / 8.0) * self.prev_error.powf(0.4 / 8.0)).clamp(0.2, 5.0);
                self.prev_error = ratio_c;
                // a step shortened to hit an output time says little about the natural size
                if !clipped {
                    self.dt = h * factor;
                }
                return Ok(AdaptiveStep {
                    state: unpack(&y8, bodies),
                    dt_used: h,
                    dt_next: self.dt,
                    error_ratio: ratio,
                });
            }
            let shrink = if ratio.is_finite() { (0.9 * ratio.powf(-1.0 / 8.0)).clamp(0.1, 0.9) } else { 0.1 };
            h *= shrink;
            self.dt = h;
            clipped = false;
        }
    }
}

/// One adaptive step from `bodies`, trying `dt_try` first.
///
/// `tol` must lie strictly inside (1e-14, 1e-6).
pub fn step_adaptive(
    bodies: &BodyPair,
    law: &ForceLaw,
    g: f64,
    tol: f64,
    dt_try: f64,
) -> Result<AdaptiveStep, SimError> {
    if !(tol > 1e-14 && tol < 1e-6) {
        return Err(SimError::Validation(format!("tolerance {tol:e} outside (1e-14, 1e-6)")));
    }
    if !(dt_try > 0.0) || !dt_try.is_finite() {
        return Err(SimError::Validation(format!("trial step must be positive, got {dt_try}")));
    }
    law.validate()?;
    for b in bodies {
        b.validate()?;
    }
    let mut stepper = AdaptiveStepper::new(*law, g, tol, dt_try);
    stepper.step(bodies, f64::INFINITY)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::{total_energy, BodyState, Vector3};
    use crate::units::{AU, G_SI, M_SUN};
    use std::f64::consts::PI;

    #[test]
    fn tableau_consistency() {
        for s in 0..STAGES {
            let row: f64 = A[s].iter().sum();
            assert!((row - C[s]).abs() < 1e-14, "row {s}");
        }
        assert!((B8.iter().sum::<f64>() - 1.0).abs() < 1e-14);
        assert!((B7.iter().sum::<f64>() - 1.0).abs() < 1e-14);
        // order conditions sum b c^k = 1/(k+1) up to k = 7 for the 8th-order weights
        for k in 0..8 {
            let q: f64 = (0..STAGES).map(|s| B8[s] * C[s].powi(k)).sum();
            assert!((q - 1.0 / (k as f64 + 1.0)).abs() < 1e-13, "k={k}");
        }
    }

    fn circular() -> (BodyPair, f64) {
        let v = (G_SI * 2.0 * M_SUN / AU).sqrt() / 2.0;
        let b = [
            BodyState::new(M_SUN, Vector3::new(-0.5 * AU, 0.0, 0.0), Vector3::new(0.0, -v, 0.0)),
            BodyState::new(M_SUN, Vector3::new(0.5 * AU, 0.0, 0.0), Vector3::new(0.0, v, 0.0)),
        ];
        (b, 2.0 * PI * (AU.powi(3) / (G_SI * 2.0 * M_SUN)).sqrt())
    }

    #[test]
    fn one_orbit_energy_drift_small() {
        let (b, period) = circular();
        let e0 = total_energy(&b, &ForceLaw::Newtonian, G_SI).unwrap();
        let mut st = AdaptiveStepper::new(ForceLaw::Newtonian, G_SI, 1e-12, initial_step_guess(&b, G_SI));
        let mut t = 0.0;
        let mut s = b;
        while t < period {
            let step = st.step(&s, period - t).unwrap();
            assert!(step.dt_used > 0.0 && step.error_ratio <= 1.0);
            t += step.dt_used;
            s = step.state;
        }
        let e1 = total_energy(&s, &ForceLaw::Newtonian, G_SI).unwrap();
        assert!((e1 - e0).abs() / e0.abs() <= 1e-10, "{:e}", (e1 - e0).abs() / e0.abs());
    }

    #[test]
    fn drag_energy_decreases_every_step() {
        let (b, period) = circular();
        let law = ForceLaw::LinearDrag { tau: 5.0 * period };
        let mut s = b;
        let mut dt = initial_step_guess(&b, G_SI);
        let mut e = total_energy(&s, &law, G_SI).unwrap();
        for _ in 0..200 {
            let step = step_adaptive(&s, &law, G_SI, 1e-12, dt).unwrap();
            s = step.state;
            dt = step.dt_next;
            let e1 = total_energy(&s, &law, G_SI).unwrap();
            assert!(e1 < e);
            e = e1;
        }
    }

    #[test]
    fn rejects_out_of_range_tolerance() {
        let (b, _) = circular();
        assert!(step_adaptive(&b, &ForceLaw::Newtonian, G_SI, 1e-3, 10.0).is_err());
        assert!(step_adaptive(&b, &ForceLaw::Newtonian, G_SI, 1e-15, 10.0).is_err());
    }

    #[test]
    fn head_on_collision_reports_singularity_approach() {
        let b = [
            BodyState::new(M_SUN, Vector3::new(-AU, 0.0, 0.0), Vector3::ZERO),
            BodyState::new(M_SUN, Vector3::new(AU, 0.0, 0.0), Vector3::ZERO),
        ];
        let law = ForceLaw::LinearDrag { tau: 1e12 };
        let mut st = AdaptiveStepper::new(law, G_SI, 1e-12, initial_step_guess(&b, G_SI));
        let mut s = b;
        let mut failed = false;
        for _ in 0..100_000 {
            match st.step(&s, f64::INFINITY) {
                Ok(step) => s = step.state,
                Err(SimError::SingularityApproach { .. }) | Err(SimError::Singularity { .. }) => {
                    failed = true;
                    break;
                }
                Err(e) => panic!("unexpected {e}"),
            }
        }
        assert!(failed);
    }
}
