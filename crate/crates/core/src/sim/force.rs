use super::{BodyPair, ForceLaw, SimError, Vector3};

fn validated_separation(bodies: &BodyPair) -> Result<(Vector3, f64), SimError> {
    for b in bodies {
        b.validate()?;
    }
    let d = bodies[1].position - bodies[0].position;
    let r = d.norm();
    if !(r > 0.0) {
        return Err(SimError::Singularity { separation: r });
    }
    Ok((d, r))
}

/// Accelerations (m/s^2) of both bodies under `law`, with `g` the
/// gravitational constant in SI.
///
/// Gravity is pairwise and antisymmetric, so m1 a1 = -m2 a2 for the
/// conservative laws. Drag adds -v_i/tau to each body independently.
pub fn accelerations(bodies: &BodyPair, law: &ForceLaw, g: f64) -> Result<[Vector3; 2], SimError> {
    let (d, r) = validated_separation(bodies)?;
    let scale = match *law {
        ForceLaw::ModifiedGravity { alpha, reference_separation } => (reference_separation / r).powf(alpha),
        _ => 1.0,
    };
    let k = g * scale / (r * r * r);
    let mut a1 = d * (k * bodies[1].mass);
    let mut a2 = d * (-k * bodies[0].mass);
    if let ForceLaw::LinearDrag { tau } = *law {
        a1 -= bodies[0].velocity / tau;
        a2 -= bodies[1].velocity / tau;
    }
    Ok([a1, a2])
}

/// Kinetic plus potential energy (J).
///
/// The modified-gravity potential is the antiderivative of its force,
/// -G m1 m2 r0^alpha / ((1 + alpha) r^(1 + alpha)). Drag leaves the
/// instantaneous energy Newtonian.
pub fn total_energy(bodies: &BodyPair, law: &ForceLaw, g: f64) -> Result<f64, SimError> {
    let (_, r) = validated_separation(bodies)?;
    let kinetic: f64 = bodies.iter().map(|b| 0.5 * b.mass * b.velocity.norm_squared()).sum();
    let gm1m2 = g * bodies[0].mass * bodies[1].mass;
    let potential = match *law {
        ForceLaw::ModifiedGravity { alpha, reference_separation } => {
            -gm1m2 * (reference_separation / r).powf(alpha) / ((1.0 + alpha) * r)
        }
        _ => -gm1m2 / r,
    };
    Ok(kinetic + potential)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::BodyState;
    use crate::units::{AU, G_SI, M_SUN};

    fn twins(vx: f64) -> BodyPair {
        [
            BodyState::new(M_SUN, Vector3::new(-0.5 * AU, 0.0, 0.0), Vector3::new(vx, 0.0, 0.0)),
            BodyState::new(M_SUN, Vector3::new(0.5 * AU, 0.0, 0.0), Vector3::new(0.0, 3e4, 0.0)),
        ]
    }

    #[test]
    fn equal_masses_pull_symmetrically() {
        let [a1, a2] = accelerations(&twins(0.0), &ForceLaw::Newtonian, G_SI).unwrap();
        assert_eq!(a1.x, -a2.x);
        assert!(a1.x > 0.0);
        assert_eq!(a1.y, 0.0);
        assert_eq!(a2.z, 0.0);
    }

    #[test]
    fn closed_form_magnitude() {
        let b = [
            BodyState::new(1.989e30, Vector3::ZERO, Vector3::ZERO),
            BodyState::new(1.989e30, Vector3::new(1.496e11, 0.0, 0.0), Vector3::ZERO),
        ];
        let [a1, _] = accelerations(&b, &ForceLaw::Newtonian, G_SI).unwrap();
        // hand-evaluated: 6.6743e-11 * 1.989e30 / 1.496e11^2
        let expected = 6.6743e-11 * 1.989e30 / (1.496e11f64 * 1.496e11);
        assert!((a1.norm() - expected).abs() / expected < 1e-14);
        assert!((a1.norm() - 5.93e-3).abs() < 5e-5);
    }

    #[test]
    fn zero_alpha_is_bitwise_newtonian() {
        let b = twins(1234.5);
        let law = ForceLaw::ModifiedGravity { alpha: 0.0, reference_separation: 0.37 * AU };
        assert_eq!(accelerations(&b, &law, G_SI).unwrap(), accelerations(&b, &ForceLaw::Newtonian, G_SI).unwrap());
    }

    #[test]
    fn momentum_conserving_modified_gravity() {
        let mut b = twins(0.0);
        b[1].mass = 0.3 * M_SUN;
        let law = ForceLaw::ModifiedGravity { alpha: 0.4, reference_separation: 2.0 * AU };
        let [a1, a2] = accelerations(&b, &law, G_SI).unwrap();
        let p = a1 * b[0].mass + a2 * b[1].mass;
        assert!(p.norm() <= 1e-15 * (a1 * b[0].mass).norm());
    }

    #[test]
    fn drag_opposes_velocity() {
        let b = twins(5e3);
        let tau = 1e9;
        let [g1, g2] = accelerations(&b, &ForceLaw::Newtonian, G_SI).unwrap();
        let [d1, d2] = accelerations(&b, &ForceLaw::LinearDrag { tau }, G_SI).unwrap();
        for (drag, grav, body) in [(d1 - g1, g1, b[0]), (d2 - g2, g2, b[1])] {
            let _ = grav;
            let cos = drag.dot(&body.velocity) / (drag.norm() * body.velocity.norm());
            assert!((cos + 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn coincident_and_nonfinite_inputs_fail() {
        let mut b = twins(0.0);
        b[1].position = b[0].position;
        assert!(matches!(accelerations(&b, &ForceLaw::Newtonian, G_SI), Err(SimError::Singularity { .. })));
        let mut c = twins(0.0);
        c[0].velocity.x = f64::NAN;
        assert!(matches!(accelerations(&c, &ForceLaw::Newtonian, G_SI), Err(SimError::Validation(_))));
    }

    #[test]
    fn circular_energy_closed_form() {
        let v = (G_SI * 2.0 * M_SUN / AU).sqrt() / 2.0;
        let b = [
            BodyState::new(M_SUN, Vector3::new(-0.5 * AU, 0.0, 0.0), Vector3::new(0.0, -v, 0.0)),
            BodyState::new(M_SUN, Vector3::new(0.5 * AU, 0.0, 0.0), Vector3::new(0.0, v, 0.0)),
        ];
        let e = total_energy(&b, &ForceLaw::Newtonian, G_SI).unwrap();
        let expected = -G_SI * M_SUN * M_SUN / (2.0 * AU);
        assert!((e - expected).abs() / expected.abs() < 1e-14);
        assert!((e - -8.82e38).abs() / 8.82e38 < 2e-3);
    }

    #[test]
    fn doubling_velocities_quadruples_kinetic() {
        let b = twins(2e4);
        let mut b2 = b;
        for body in &mut b2 {
            body.velocity = body.velocity * 2.0;
        }
        let u = -G_SI * M_SUN * M_SUN / AU;
        let k1 = total_energy(&b, &ForceLaw::Newtonian, G_SI).unwrap() - u;
        let k2 = total_energy(&b2, &ForceLaw::Newtonian, G_SI).unwrap() - u;
        assert!((k2 / k1 - 4.0).abs() < 1e-12);
    }

    #[test]
    fn modified_potential_is_force_antiderivative() {
        // central difference of U(r) must reproduce the force magnitude
        let law = ForceLaw::ModifiedGravity { alpha: 0.3, reference_separation: AU };
        let at = |r: f64| {
            let b = [
                BodyState::new(M_SUN, Vector3::ZERO, Vector3::ZERO),
                BodyState::new(0.5 * M_SUN, Vector3::new(r, 0.0, 0.0), Vector3::ZERO),
            ];
            (total_energy(&b, &law, G_SI).unwrap(), accelerations(&b, &law, G_SI).unwrap())
        };
        let r = 1.7 * AU;
        let h = 1e-4 * AU;
        let du = (at(r + h).0 - at(r - h).0) / (2.0 * h);
        let force = at(r).1[0].norm() * M_SUN;
        assert!((du - force).abs() / force < 1e-7);
    }
}
