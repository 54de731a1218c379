mod common;

use std::time::Instant;

use gravlab_core::sim::{
    center_of_mass, orbital_elements, separation_extrema, simulate, step_adaptive, step_fixed, total_energy,
    total_momentum, BodyPair, ExtremumKind, ForceLaw, OrbitSpec, Scenario,
};
use gravlab_core::units::{AU, G_SI, M_SUN};

use common::{library, rel};

fn bound_newtonian() -> Vec<Scenario> {
    library().scenarios().filter(|s| s.force_law == ForceLaw::Newtonian && !s.unbound).cloned().collect()
}

fn circular_equal() -> Scenario {
    library().get("circular_equal").unwrap().clone()
}

#[test]
fn conservation_over_ten_orbits() {
    for mut s in bound_newtonian() {
        s.n_orbits = 10;
        let clock = Instant::now();
        let traj = simulate(&s).unwrap();
        let elapsed = clock.elapsed().as_secs_f64();
        assert!(elapsed < 60.0, "{}: {elapsed} s", s.id);
        assert_eq!(traj.len(), 10 * 5000 + 1);

        let e0 = total_energy(&traj.state(0), &s.force_law, G_SI).unwrap();
        let p0 = total_momentum(&traj.state(0));
        let p_scale = traj.state(0).iter().map(|b| b.mass * b.velocity.norm()).sum::<f64>();
        let (mut de, mut dp) = (0.0f64, 0.0f64);
        for i in 0..traj.len() {
            let st = traj.state(i);
            de = de.max(rel(total_energy(&st, &s.force_law, G_SI).unwrap(), e0));
            dp = dp.max((total_momentum(&st) - p0).norm() / p_scale);
        }
        assert!(de <= 1e-9, "{}: energy drift {de:e}", s.id);
        assert!(dp <= 1e-12, "{}: momentum drift {dp:e}", s.id);
    }
}

#[test]
fn circular_equal_closed_forms() {
    let s = circular_equal();
    let traj = library().trajectory("circular_equal").unwrap();
    let m = M_SUN;
    let r = AU;
    let period = std::f64::consts::TAU * (r.powi(3) / (G_SI * 2.0 * m)).sqrt();
    assert!(rel(period, 2.23e7) < 2e-3);

    let el = orbital_elements(&traj, s.masses()).unwrap();
    assert!(rel(el.period, period) <= 1e-4, "{} vs {period}", el.period);
    assert!(el.eccentricity.abs() <= 1e-6);
    assert!(rel(el.periastron, AU) <= 1e-6 && rel(el.apoastron, AU) <= 1e-6);

    // each star circles the centre at half the separation
    let speed = std::f64::consts::TAU * 0.5 * r / period;
    for i in (0..traj.len()).step_by(997) {
        assert!(rel(traj.star1_velocity[i].norm(), speed) <= 1e-4);
        assert!(rel(traj.star2_velocity[i].norm(), speed) <= 1e-4);
    }

    let energy = -G_SI * m * m / (2.0 * r);
    assert!(rel(energy, -8.82e38) < 2e-3);
    let e0 = total_energy(&traj.state(0), &s.force_law, G_SI).unwrap();
    assert!(rel(e0, energy) <= 1e-4);
}

#[test]
fn eccentricity_point_nine_from_analytic_start() {
    let spec = OrbitSpec::from_semi_major(M_SUN, 0.5 * M_SUN, AU, 0.9, 0.0);
    let mut s = Scenario::new("e09", spec.bodies(G_SI).unwrap(), ForceLaw::Newtonian);
    s.n_orbits = 2;
    let traj = simulate(&s).unwrap();
    let el = orbital_elements(&traj, s.masses()).unwrap();
    assert!((el.eccentricity - 0.9).abs() <= 1e-3, "e = {}", el.eccentricity);
    assert!((el.apoastron / el.periastron - 19.0).abs() <= 19e-3);
    assert!(rel(el.period, el.kepler_period) <= 1e-4);
}

#[test]
fn period_matches_kepler_for_every_bound_orbit() {
    for s in bound_newtonian() {
        let traj = library().trajectory(&s.id).unwrap();
        let el = orbital_elements(&traj, s.masses()).unwrap();
        assert!(rel(el.period, el.kepler_period) <= 1e-4, "{}: {} vs {}", s.id, el.period, el.kepler_period);
        assert!(rel(el.period, s.reference_period()) <= 1e-4, "{}", s.id);
    }
}

#[test]
fn fixed_step_is_time_reversible() {
    for id in ["eccentric_unequal", "high_eccentricity", "proper_motion"] {
        let s = library().get(id).unwrap();
        let start = s.initial_state();
        let dt = s.reference_period() / 5000.0;
        let mut st: BodyPair = start;
        for _ in 0..500 {
            st = step_fixed(&st, dt, &s.force_law, G_SI).unwrap();
        }
        for _ in 0..500 {
            st = step_fixed(&st, -dt, &s.force_law, G_SI).unwrap();
        }
        let scale = (start[1].position - start[0].position).norm();
        let speed = (start[1].velocity - start[0].velocity).norm();
        for k in 0..2 {
            let dr = (st[k].position - start[k].position).norm() / scale;
            assert!(dr <= 1e-12, "{id}: body {k} off by {dr:e}");
            let dv = (st[k].velocity - start[k].velocity).norm() / speed;
            assert!(dv <= 1e-12, "{id}: body {k} velocity off by {dv:e}");
        }
    }
}

#[test]
fn repeated_runs_are_byte_identical() {
    for id in ["eccentric_unequal", "drag_eccentric", "modified_gravity_015"] {
        let mut s = library().get(id).unwrap().clone();
        s.n_orbits = 2;
        let a = serde_json::to_vec(&simulate(&s).unwrap()).unwrap();
        let b = serde_json::to_vec(&simulate(&s).unwrap()).unwrap();
        assert!(a == b, "{id}");
    }
}

#[test]
fn drifting_centre_of_mass_is_linear() {
    for id in ["proper_motion", "proper_motion_displaced", "displaced_com", "modified_gravity_030"] {
        let s = library().get(id).unwrap();
        let traj = library().trajectory(id).unwrap();
        let (c0, v0) = center_of_mass(&traj.state(0));
        let scale = (s.bodies[1].position - s.bodies[0].position).norm();
        let worst = (0..traj.len())
            .map(|i| (center_of_mass(&traj.state(i)).0 - (c0 + v0 * traj.times[i])).norm() / scale)
            .fold(0.0, f64::max);
        assert!(worst <= 1e-9, "{id}: {worst:e}");
    }
}

#[test]
fn drag_orbits_only_lose_energy() {
    for id in ["drag_circular", "drag_circular_fast", "drag_eccentric"] {
        let s = library().get(id).unwrap();
        let traj = library().trajectory(id).unwrap();
        let energies: Vec<f64> =
            (0..traj.len()).map(|i| total_energy(&traj.state(i), &s.force_law, G_SI).unwrap()).collect();
        assert!(energies.windows(2).all(|w| w[1] < w[0]), "{id}: energy did not fall");
        assert!(energies.last().unwrap() < &energies[0]);

        let seps = traj.separations();
        let envelope: Vec<f64> = separation_extrema(&traj.times, &seps)
            .into_iter()
            .filter(|e| e.kind == ExtremumKind::Max)
            .map(|e| e.value)
            .collect();
        assert!(envelope.len() >= 5, "{id}: {} maxima", envelope.len());
        assert!(envelope.windows(2).all(|w| w[1] < w[0]), "{id}: envelope not decreasing");
    }
}

#[test]
fn zero_exponent_matches_newtonian_under_adaptive_steps() {
    let s = library().get("eccentric_unequal").unwrap();
    let start = s.initial_state();
    let r0 = (start[1].position - start[0].position).norm();
    let law = ForceLaw::ModifiedGravity { alpha: 0.0, reference_separation: r0 };
    let period = s.reference_period();
    let (mut st, mut t, mut dt) = (start, 0.0, period / 5000.0);
    let mut worst = 0.0f64;
    while t < 2.0 * period {
        let step = step_adaptive(&st, &law, G_SI, 1e-12, dt).unwrap();
        st = step.state;
        t += step.dt_used;
        dt = step.dt_next;
        let exact = step_fixed(&start, t, &ForceLaw::Newtonian, G_SI).unwrap();
        for k in 0..2 {
            worst = worst.max((st[k].position - exact[k].position).norm() / r0);
        }
    }
    assert!(worst <= 1e-8, "{worst:e}");
}

#[test]
fn unbound_flyby_separates() {
    let traj = library().trajectory("unbound").unwrap();
    let seps = traj.separations();
    assert!(seps.last().unwrap() > &(10.0 * seps.iter().copied().fold(f64::INFINITY, f64::min)));
    let s = library().get("unbound").unwrap();
    assert!(orbital_elements(&traj, s.masses()).is_err());
}

#[test]
fn csv_export_header() {
    let mut s = circular_equal();
    s.n_orbits = 1;
    s.samples_per_orbit = 20;
    let mut buf = Vec::new();
    simulate(&s).unwrap().write_csv(&mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap();
    assert_eq!(text.lines().next().unwrap(), "time, star1_x, star1_y, star1_z, star2_x, star2_y, star2_z");
    assert_eq!(text.lines().count(), 22);
}
