//! Fixed-step two-body propagation by the Wisdom-Holman split.
//!
//! For two bodies the interaction Hamiltonian vanishes in Jacobi
//! coordinates, so the map reduces to an exact Kepler drift of the relative
//! orbit plus free drift of the centre of mass. It is symplectic and
//! time-reversible, and conserves energy to round-off at any step size.

use super::{center_of_mass, BodyPair, ForceLaw, SimError, Vector3};

/// Stumpff functions C(z) and S(z).
fn stumpff(z: f64) -> (f64, f64) {
    if z.abs() < 0.5 {
        // Taylor series; terms through z^8 keep truncation below 1e-17.
        let mut c = 0.0;
        let mut s = 0.0;
        let mut term_c = 0.5; // 1/2!
        let mut term_s = 1.0 / 6.0; // 1/3!
        for k in 0..9 {
            c += term_c;
            s += term_s;
            let n = 2.0 * k as f64;
            term_c *= -z / ((n + 3.0) * (n + 4.0));
            term_s *= -z / ((n + 4.0) * (n + 5.0));
        }
        (c, s)
    } else if z > 0.0 {
        let sz = z.sqrt();
        ((1.0 - sz.cos()) / z, (sz - sz.sin()) / (sz * z))
    } else {
        let sz = (-z).sqrt();
        ((sz.cosh() - 1.0) / -z, (sz.sinh() - sz) / (sz * -z))
    }
}

/// Propagates a relative Kepler orbit (position, velocity) by `dt` under
/// gravitational parameter `mu` using universal variables. Works for
/// elliptic, parabolic, hyperbolic and radial orbits; `dt` may be negative.
pub fn kepler_drift(r0: Vector3, v0: Vector3, mu: f64, dt: f64) -> Result<(Vector3, Vector3), SimError> {
    let r0n = r0.norm();
    if !(r0n > 0.0) {
        return Err(SimError::Singularity { separation: r0n });
    }
    if dt == 0.0 {
        return Ok((r0, v0));
    }
    let sqrt_mu = mu.sqrt();
    let sigma0 = r0.dot(&v0) / sqrt_mu;
    let alpha = 2.0 / r0n - v0.norm_squared() / mu;
    let target = sqrt_mu * dt;

    // F(chi) is strictly increasing (F' = r > 0), so a bracket plus Newton
    // converges from any start.
    let eval = |chi: f64| {
        let z = alpha * chi * chi;
        let (c, s) = stumpff(z);
        let f = sigma0 * chi * chi * c + (1.0 - alpha * r0n) * chi * chi * chi * s + r0n * chi - target;
        let df = sigma0 * chi * (1.0 - z * s) + (1.0 - alpha * r0n) * chi * chi * c + r0n;
        (f, df, c, s)
    };
    let (mut lo, mut hi) = if dt > 0.0 { (0.0, f64::NAN) } else { (f64::NAN, 0.0) };
    let mut chi = target / r0n;
    let mut converged = false;
    for _ in 0..200 {
        let (f, df, _, _) = eval(chi);
        if !f.is_finite() {
            if dt > 0.0 {
                hi = chi;
            } else {
                lo = chi;
            }
            chi = if lo.is_finite() && hi.is_finite() { 0.5 * (lo + hi) } else { 0.5 * chi };
            continue;
        }
        if f == 0.0 {
            converged = true;
            break;
        }
        if f > 0.0 {
            hi = chi;
        } else {
            lo = chi;
        }
        let mut next = chi - f / df;
        if next == chi {
            converged = true;
            break;
        }
        let inside = !(next <= lo) && !(next >= hi);
        if !next.is_finite() || !inside {
            // an open side means F has not yet crossed zero there: expand
            next = if lo.is_finite() && hi.is_finite() { 0.5 * (lo + hi) } else { 2.0 * chi };
        }
        let step = (next - chi).abs();
        chi = next;
        if step <= 4.0 * f64::EPSILON * chi.abs() || f == 0.0 {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(SimError::SingularityApproach { time: dt, dt });
    }

    let (_, rn, c, s) = eval(chi);
    let chi2 = chi * chi;
    let f = 1.0 - chi2 * c / r0n;
    let g = dt - chi2 * chi * s / sqrt_mu;
    let r = r0 * f + v0 * g;
    let z = alpha * chi2;
    let fdot = sqrt_mu * chi * (z * s - 1.0) / (rn * r0n);
    let gdot = 1.0 - chi2 * c / rn;
    let v = r0 * fdot + v0 * gdot;
    if !r.is_finite() || !v.is_finite() {
        return Err(SimError::BlowUp { last_valid_time: 0.0 });
    }
    Ok((r, v))
}

/// Advances both bodies by exactly `dt` under Newtonian gravity.
///
/// `g` is the gravitational constant (SI). Rejects drag and non-zero
/// modified-gravity laws.
pub fn step_fixed(bodies: &BodyPair, dt: f64, law: &ForceLaw, g: f64) -> Result<BodyPair, SimError> {
    if !law.is_newtonian() {
        return Err(SimError::NonConservative(law.label()));
    }
    if !dt.is_finite() || dt == 0.0 {
        return Err(SimError::Validation(format!("step must be finite and non-zero, got {dt}")));
    }
    for b in bodies {
        b.validate()?;
    }
    let (m1, m2) = (bodies[0].mass, bodies[1].mass);
    let m = m1 + m2;
    let (com, com_v) = center_of_mass(bodies);
    let rel = bodies[1].position - bodies[0].position;
    let rel_v = bodies[1].velocity - bodies[0].velocity;
    let (rel, rel_v) = kepler_drift(rel, rel_v, g * m, dt)?;
    let com = com + com_v * dt;
    let mut out = *bodies;
    out[0].position = com - rel * (m2 / m);
    out[1].position = com + rel * (m1 / m);
    out[0].velocity = com_v - rel_v * (m2 / m);
    out[1].velocity = com_v + rel_v * (m1 / m);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::{total_energy, BodyState};
    use crate::units::{AU, G_SI, M_SUN};
    use std::f64::consts::PI;

    fn circular_equal() -> (BodyPair, f64) {
        let v = (G_SI * 2.0 * M_SUN / AU).sqrt() / 2.0;
        let b = [
            BodyState::new(M_SUN, Vector3::new(-0.5 * AU, 0.0, 0.0), Vector3::new(0.0, -v, 0.0)),
            BodyState::new(M_SUN, Vector3::new(0.5 * AU, 0.0, 0.0), Vector3::new(0.0, v, 0.0)),
        ];
        let period = 2.0 * PI * (AU.powi(3) / (G_SI * 2.0 * M_SUN)).sqrt();
        (b, period)
    }

    #[test]
    fn stumpff_branches_agree_at_switch() {
        for z in [0.4999, -0.4999] {
            let (c1, s1) = stumpff(z);
            let z2 = z * 1.0000001 + if z > 0.0 { 0.0002 } else { -0.0002 };
            let (c2, s2) = stumpff(z2);
            assert!((c1 - c2).abs() < 1e-4 && (s1 - s2).abs() < 1e-4);
        }
        let (c, s) = stumpff(0.0);
        assert_eq!((c, s), (0.5, 1.0 / 6.0));
        let z: f64 = 0.49;
        let sz = z.sqrt();
        let (c, s) = stumpff(z);
        assert!((c - (1.0 - sz.cos()) / z).abs() < 1e-15);
        assert!((s - (sz - sz.sin()) / (sz * z)).abs() < 1e-15);
    }

    #[test]
    fn returns_to_start_after_one_period() {
        let (b, period) = circular_equal();
        let dt = period / 5000.0;
        let mut s = b;
        for _ in 0..5000 {
            s = step_fixed(&s, dt, &ForceLaw::Newtonian, G_SI).unwrap();
        }
        for i in 0..2 {
            assert!((s[i].position - b[i].position).norm() < 1e-6 * 0.5 * AU);
        }
    }

    #[test]
    fn twins_at_rest_fall_symmetrically() {
        let b = [
            BodyState::new(M_SUN, Vector3::new(-AU, 0.0, 0.0), Vector3::ZERO),
            BodyState::new(M_SUN, Vector3::new(AU, 0.0, 0.0), Vector3::ZERO),
        ];
        let s = step_fixed(&b, 1000.0, &ForceLaw::Newtonian, G_SI).unwrap();
        assert!(s[0].position.x > -AU && s[1].position.x < AU);
        assert!((s[0].position.x + s[1].position.x).abs() < 1e-6);
        assert_eq!(s[0].position.y, 0.0);
        assert_eq!(s[1].position.y, 0.0);
        assert!(s[0].velocity.x > 0.0 && (s[0].velocity.x + s[1].velocity.x).abs() < 1e-15);
    }

    #[test]
    fn hyperbolic_energy_conserved() {
        let mu = G_SI * 1.5 * M_SUN;
        let r0 = Vector3::new(AU, 0.0, 0.0);
        let v0 = Vector3::new(-1e4, (3.0 * mu / AU).sqrt(), 0.0);
        let eps = |r: Vector3, v: Vector3| 0.5 * v.norm_squared() - mu / r.norm();
        let (r, v) = kepler_drift(r0, v0, mu, 3e8).unwrap();
        assert!(eps(r0, v0) > 0.0);
        assert!((eps(r, v) - eps(r0, v0)).abs() / eps(r0, v0) < 1e-11);
        let (rb, vb) = kepler_drift(r, v, mu, -3e8).unwrap();
        assert!((rb - r0).norm() / AU < 1e-10 && (vb - v0).norm() / v0.norm() < 1e-10);
    }

    #[test]
    fn rejects_drag() {
        let (b, _) = circular_equal();
        let err = step_fixed(&b, 10.0, &ForceLaw::LinearDrag { tau: 1e9 }, G_SI).unwrap_err();
        assert!(matches!(err, SimError::NonConservative(_)));
    }

    #[test]
    fn energy_flat_over_ten_eccentric_orbits() {
        let m1 = 2.0 * M_SUN;
        let m2 = 0.5 * M_SUN;
        let mu = G_SI * (m1 + m2);
        let a = 1.5 * AU;
        let e = 0.8;
        let ra = a * (1.0 + e);
        let va = (mu * (1.0 - e) / ra).sqrt();
        let b = [
            BodyState::new(
                m1,
                Vector3::new(-ra * m2 / (m1 + m2), 0.0, 0.0),
                Vector3::new(0.0, -va * m2 / (m1 + m2), 0.0),
            ),
            BodyState::new(
                m2,
                Vector3::new(ra * m1 / (m1 + m2), 0.0, 0.0),
                Vector3::new(0.0, va * m1 / (m1 + m2), 0.0),
            ),
        ];
        let period = 2.0 * PI * (a.powi(3) / mu).sqrt();
        let e0 = total_energy(&b, &ForceLaw::Newtonian, G_SI).unwrap();
        let mut s = b;
        let mut worst: f64 = 0.0;
        for _ in 0..50_000 {
            s = step_fixed(&s, period / 5000.0, &ForceLaw::Newtonian, G_SI).unwrap();
            let e1 = total_energy(&s, &ForceLaw::Newtonian, G_SI).unwrap();
            worst = worst.max((e1 - e0).abs() / e0.abs());
        }
        assert!(worst < 1e-9, "drift {worst:e}");
    }
}
