mod common;

use std::sync::{Arc, OnceLock};

use proptest::prelude::*;

use gravlab_core::env::{create_session, replay, EnvError, ObservationRow, ObservationSession, Protocol, SessionTable};
use gravlab_core::sim::{simulate, total_energy, BodyState, ForceLaw, Vector3};
use gravlab_core::units::G_SI;

use common::library;

fn circular_table() -> Arc<SessionTable> {
    static TABLE: OnceLock<Arc<SessionTable>> = OnceLock::new();
    TABLE
        .get_or_init(|| {
            let s = library().get("circular_equal").unwrap();
            Arc::new(SessionTable::new(&library().trajectory("circular_equal").unwrap(), &s.unit_system))
        })
        .clone()
}

#[derive(Debug, Clone)]
enum Call {
    /// Fractions of the window; values outside [0, 1] fall outside it.
    Observe(Vec<f64>),
    FullTable,
}

fn call() -> impl Strategy<Value = Call> {
    let inside = prop::collection::vec(0.0..=1.0f64, 1..=10).prop_map(Call::Observe);
    let any_len = prop::collection::vec(-0.2..1.2f64, 0..=14).prop_map(Call::Observe);
    prop_oneof![3 => inside, 2 => any_len, 1 => Just(Call::FullTable)]
}

fn issue(session: &mut ObservationSession, c: &Call) -> Result<Vec<ObservationRow>, EnvError> {
    match c {
        Call::Observe(fracs) => {
            let end = session.window().1;
            let times: Vec<f64> = fracs.iter().map(|f| f * end).collect();
            session.observe(&times)
        }
        Call::FullTable => session.full_table(),
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn budget_holds_under_any_interleaving(budget in 1usize..60, calls in prop::collection::vec(call(), 1..40)) {
        let mut s = ObservationSession::new(circular_table(), Protocol::budget(budget));
        let mut returned = 0;
        for c in &calls {
            let (used, collected) = (s.used(), s.collected().len());
            match issue(&mut s, c) {
                Ok(rows) => {
                    returned += rows.len();
                    prop_assert_eq!(s.used(), used + rows.len());
                }
                Err(_) => {
                    prop_assert_eq!(s.used(), used);
                    prop_assert_eq!(s.collected().len(), collected);
                }
            }
            prop_assert!(s.used() <= budget);
            prop_assert_eq!(s.used(), returned);
            prop_assert_eq!(s.remaining(), Some(budget - returned));
        }
        prop_assert_eq!(s.transcript().len(), calls.len());

        let mut first = Vec::new();
        s.write_transcript(&mut first).unwrap();
        let mut fresh = ObservationSession::new(circular_table(), Protocol::budget(budget));
        replay(&mut fresh, s.transcript());
        let mut second = Vec::new();
        fresh.write_transcript(&mut second).unwrap();
        prop_assert!(first == second, "replayed transcript differs");
        prop_assert_eq!(fresh.collected(), s.collected());
    }

    #[test]
    fn knots_are_returned_verbatim(k in 0usize..50_001) {
        let table = circular_table();
        let rows = table.rows();
        prop_assert_eq!(table.interpolate(rows[k].time), rows[k]);
    }
}

#[test]
fn exhausting_call_is_rejected_whole() {
    let mut s = ObservationSession::new(circular_table(), Protocol::budget(100));
    let end = s.window().1;
    for _ in 0..9 {
        s.observe(&[0.5 * end; 10]).unwrap();
    }
    s.observe(&[0.1 * end; 5]).unwrap();
    let err = s.observe(&[0.2 * end; 10]).unwrap_err();
    assert!(matches!(err, EnvError::Exhausted { requested: 10, remaining: 5 }));
    assert_eq!(s.used(), 95);
    assert_eq!(s.observe(&[0.3 * end; 5]).unwrap().len(), 5);
    assert_eq!(s.remaining(), Some(0));
    assert_eq!(s.observe(&[0.0]).unwrap_err().code(), "exhausted");
}

#[test]
fn protocols_are_exclusive() {
    let mut full = create_session(library(), "eccentric_unequal", Protocol::FullObs).unwrap();
    assert_eq!(full.observe(&[0.0]).unwrap_err().code(), "protocol");
    let rows = full.full_table().unwrap();
    let traj = library().trajectory("eccentric_unequal").unwrap();
    assert_eq!(rows.len(), traj.len());
    assert!(rows.windows(2).all(|w| w[0].time < w[1].time));
    assert_eq!(rows.last().unwrap().time, full.window().1);

    let mut budget = create_session(library(), "eccentric_unequal", Protocol::budget(100)).unwrap();
    assert_eq!(budget.remaining(), Some(100));
    assert_eq!(budget.full_table().unwrap_err().code(), "protocol");
    assert_eq!(budget.used(), 0);
}

#[test]
fn midpoints_match_denser_simulation() {
    let base = library().get("circular_equal").unwrap().clone();
    let mut fine = base.clone();
    fine.samples_per_orbit *= 10;
    fine.n_orbits = 2;
    let dense = simulate(&fine).unwrap();
    let radius = 0.5 * (base.bodies[1].position - base.bodies[0].position).norm();

    let mut s = ObservationSession::new(circular_table(), Protocol::budget(1000));
    let coarse = circular_table().rows();
    let mut worst = 0.0f64;
    for k in (0..2 * 5000).step_by(97) {
        let t = 0.5 * (coarse[k].time + coarse[k + 1].time);
        let row = s.observe(&[t]).unwrap()[0];
        let j = 10 * k + 5;
        assert!((dense.times[j] - t).abs() <= 1e-9 * t.max(1.0));
        worst = worst.max((row.star1() - dense.star1[j]).norm()).max((row.star2() - dense.star2[j]).norm());
    }
    assert!(worst <= 1e-6 * radius, "midpoint error {:e} of radius", worst / radius);
}

/// Five-point central velocities from evenly spaced SI rows.
fn velocities(rows: &[ObservationRow], i: usize) -> [Vector3; 2] {
    let h = rows[i + 1].time - rows[i].time;
    let d = |f: fn(&ObservationRow) -> Vector3| {
        (f(&rows[i - 2]) - f(&rows[i - 1]) * 8.0 + f(&rows[i + 1]) * 8.0 - f(&rows[i + 2])) / (12.0 * h)
    };
    [d(ObservationRow::star1), d(ObservationRow::star2)]
}

#[test]
fn energy_from_rows_is_constant() {
    for id in ["circular_equal", "eccentric_unequal", "eccentric_unequal_astro", "displaced_com"] {
        let sc = library().get(id).unwrap();
        let mut s = create_session(library(), id, Protocol::FullObs).unwrap();
        let rows: Vec<ObservationRow> = s.full_table().unwrap().iter().map(|r| r.to_si(&sc.unit_system)).collect();
        let [m1, m2] = sc.masses();
        let energy = |i: usize| {
            let [v1, v2] = velocities(&rows, i);
            let pair = [BodyState::new(m1, rows[i].star1(), v1), BodyState::new(m2, rows[i].star2(), v2)];
            total_energy(&pair, &ForceLaw::Newtonian, G_SI).unwrap()
        };
        let e0 = energy(2);
        let worst = (2..rows.len() - 2).step_by(7).map(|i| ((energy(i) - e0) / e0).abs()).fold(0.0, f64::max);
        assert!(worst <= 1e-8, "{id}: energy varies by {worst:e}");
    }
}

#[test]
fn unknown_scenario() {
    assert_eq!(create_session(library(), "nope", Protocol::FullObs).unwrap_err().code(), "not_found");
}
