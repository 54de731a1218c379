//! Expert reference solvers: full-data pipelines, the uniform-sampling
//! baseline and budgeted observation strategies.

mod fit;
mod strategy;

use std::collections::BTreeMap;
use std::f64::consts::PI;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::env::{EnvError, ObservationRow, ObservationSession, PER_CALL_CAP};
use crate::tasks::{crossing_time, fraction_below, Answer, TaskKind};
use crate::units::{UnitSystem, G_SI};

pub use fit::{
    fit_conic, fit_drag_timescale, fit_exponent_pairs, fit_gravity_exponent, fit_line, fit_mass_ratio, fit_period,
    fit_power_law, kinematics, ConicFit, DragFit, KinematicSeries, PowerLawFit, MIN_LOG_RANGE,
};
pub use strategy::{adaptive_extremum, planned_gravity_exponent, Objective};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SolverError {
    #[error("invalid data: {0}")]
    Validation(String),
    #[error("insufficient data: {0}")]
    InsufficientData(String),
    #[error("ambiguous: {0}")]
    Ambiguity(String),
    #[error("ill-conditioned: {0}")]
    Conditioning(String),
    #[error("signal absent: {0}")]
    SignalAbsent(String),
    #[error("solver binding: {0}")]
    Binding(String),
    #[error("observation failed: {0}")]
    Env(#[from] EnvError),
}

/// A solver's answer with provenance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub value: Answer,
    /// Unit string in the scenario's unit system.
    pub units: String,
    pub observations_spent: usize,
    pub strategy: String,
    #[serde(default)]
    pub diagnostics: BTreeMap<String, f64>,
    /// Set when the strategy ran out of budget before finishing.
    #[serde(default)]
    pub budget_exhausted: bool,
}

/// Rows converted to SI, sorted, with repeated times dropped.
pub fn prepare_rows(rows: &[ObservationRow], units: &UnitSystem) -> Vec<ObservationRow> {
    let mut out: Vec<ObservationRow> = rows.iter().map(|r| r.to_si(units)).collect();
    out.sort_by(|a, b| a.time.total_cmp(&b.time));
    out.dedup_by(|a, b| a.time == b.time);
    out
}

/// Masses from COM linearity and Kepler's third law.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MassEstimate {
    pub m1: f64,
    pub m2: f64,
    pub semi_major: f64,
    pub period: f64,
    pub ratio: f64,
}

/// Both stellar masses from SI rows spanning at least one orbit.
pub fn infer_masses(rows: &[ObservationRow]) -> Result<MassEstimate, SolverError> {
    let conic = fit_conic(rows)?;
    let period = fit_period(rows, &conic)?;
    let span = rows.last().map_or(0.0, |r| r.time) - rows.first().map_or(0.0, |r| r.time);
    if span < 0.999 * period {
        return Err(SolverError::InsufficientData(format!(
            "rows span {span:e} s, less than one period ({period:e} s)"
        )));
    }
    let ratio = fit_mass_ratio(rows)?;
    let a = conic.semi_major();
    let total = 4.0 * PI * PI * a.powi(3) / (G_SI * period * period);
    Ok(MassEstimate { m1: total / (1.0 + ratio), m2: total * ratio / (1.0 + ratio), semi_major: a, period, ratio })
}

fn trapezoid_mean(t: &[f64], y: &[f64]) -> f64 {
    let mut acc = 0.0;
    for i in 1..t.len() {
        acc += 0.5 * (y[i] + y[i - 1]) * (t[i] - t[i - 1]);
    }
    acc / (t[t.len() - 1] - t[0])
}

/// Task pipeline on SI rows; returns the SI answer and diagnostics.
pub fn solve_si(kind: TaskKind, rows: &[ObservationRow]) -> Result<(Answer, BTreeMap<String, f64>), SolverError> {
    if rows.len() < 3 {
        return Err(SolverError::InsufficientData(format!("{} rows", rows.len())));
    }
    let mut diag = BTreeMap::new();
    let times: Vec<f64> = rows.iter().map(|r| r.time).collect();
    let seps: Vec<f64> = rows.iter().map(|r| (r.star2() - r.star1()).norm()).collect();
    let value = match kind {
        TaskKind::Periastron => seps.iter().copied().fold(f64::INFINITY, f64::min),
        TaskKind::Apoastron => seps.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        TaskKind::MaxSpeedStar1 => {
            let k = kinematics(rows)?;
            k.valid_indices().map(|i| k.star1_velocity[i].norm()).fold(0.0, f64::max)
        }
        TaskKind::Eccentricity => {
            let c = fit_conic(rows)?;
            diag.insert("semi_latus".into(), c.semi_latus);
            c.eccentricity
        }
        TaskKind::IsBound => {
            let c = fit_conic(rows)?;
            diag.insert("eccentricity".into(), c.eccentricity);
            return Ok((Answer::Bool(c.is_bound()), diag));
        }
        TaskKind::Period => {
            let c = fit_conic(rows)?;
            fit_period(rows, &c)?
        }
        TaskKind::TotalMass | TaskKind::Star1Mass | TaskKind::Star2Mass => {
            let m = infer_masses(rows)?;
            diag.insert("mass_ratio".into(), m.ratio);
            match kind {
                TaskKind::TotalMass => m.m1 + m.m2,
                TaskKind::Star1Mass => m.m1,
                _ => m.m2,
            }
        }
        TaskKind::TotalEnergy => {
            let m = infer_masses(rows)?;
            let com: Vec<_> = rows.iter().map(|r| (r.star1() * m.m1 + r.star2() * m.m2) / (m.m1 + m.m2)).collect();
            let (_, v) = fit_line(&times, &com);
            diag.insert("com_speed".into(), v.norm());
            0.5 * (m.m1 + m.m2) * v.norm_squared() - G_SI * m.m1 * m.m2 / (2.0 * m.semi_major)
        }
        TaskKind::MeanComDistanceStar1 => {
            let q = fit_mass_ratio(rows)?;
            let com: Vec<_> = rows.iter().map(|r| (r.star1() + r.star2() * q) / (1.0 + q)).collect();
            let (c0, cv) = fit_line(&times, &com);
            let d: Vec<f64> = rows.iter().map(|r| (r.star1() - (c0 + cv * r.time)).norm()).collect();
            trapezoid_mean(&times, &d)
        }
        TaskKind::FractionAccelBelowMean => {
            // |a1| = G m2 / r^2, and the fraction is scale free
            let y: Vec<f64> = seps.iter().map(|r| 1.0 / (r * r)).collect();
            let mean = trapezoid_mean(&times, &y);
            fraction_below(&times, &y, mean, 1e-6)
        }
        TaskKind::TimeToTravel20Pct => {
            // star 1's path about the COM is the relative orbit scaled down,
            // so arc fractions can be read off the relative orbit
            let c = fit_conic(rows)?;
            let period = fit_period(rows, &c)?;
            let t0 = times[0];
            if times[times.len() - 1] - t0 < period {
                return Err(SolverError::InsufficientData("rows cover less than one period".into()));
            }
            let mut arc = vec![0.0];
            for w in rows.windows(2) {
                let d = (w[1].star2() - w[1].star1()) - (w[0].star2() - w[0].star1());
                arc.push(arc[arc.len() - 1] + d.norm());
            }
            let j = times.partition_point(|&t| t < t0 + period).clamp(1, times.len() - 1);
            let f = (t0 + period - times[j - 1]) / (times[j] - times[j - 1]);
            let full = arc[j - 1] + f * (arc[j] - arc[j - 1]);
            diag.insert("period".into(), period);
            crossing_time(&times, &arc, 0.2 * full).ok_or_else(|| SolverError::InsufficientData("arc".into()))? - t0
        }
        TaskKind::DragTimescale => {
            let f = fit_drag_timescale(rows)?;
            diag.insert("mu".into(), f.mu);
            diag.insert("drag_ratio".into(), f.drag_ratio);
            f.tau
        }
        TaskKind::GravityExponent => {
            let (alpha, fit) = fit_gravity_exponent(rows)?;
            diag.insert("r_squared".into(), fit.r_squared);
            diag.insert("samples".into(), fit.samples as f64);
            alpha
        }
    };
    if !value.is_finite() {
        return Err(SolverError::Conditioning(format!("{kind} estimate is not finite")));
    }
    Ok((Answer::Number(value), diag))
}

fn to_units(kind: TaskKind, value: Answer, units: &UnitSystem) -> (Answer, String) {
    match (value, kind.quantity()) {
        (Answer::Number(x), Some(q)) => (Answer::Number(x / units.si_factor(q)), units.unit_for(q)),
        (v, _) => (v, String::new()),
    }
}

/// Runs the task pipeline on rows given in scenario units.
pub fn solve_full(kind: TaskKind, rows: &[ObservationRow], units: &UnitSystem) -> Result<Estimate, SolverError> {
    let si = prepare_rows(rows, units);
    let (v, diagnostics) = solve_si(kind, &si)?;
    let (value, u) = to_units(kind, v, units);
    Ok(Estimate {
        value,
        units: u,
        observations_spent: 0,
        strategy: "full".into(),
        diagnostics,
        budget_exhausted: false,
    })
}

/// Inclusive evenly spaced times over `[lo, hi]`.
pub fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    match n {
        0 => vec![],
        1 => vec![lo],
        _ => (0..n).map(|k| if k + 1 == n { hi } else { lo + (hi - lo) * k as f64 / (n - 1) as f64 }).collect(),
    }
}

/// Observes `times` in capped chunks.
pub(crate) fn observe_all(session: &mut ObservationSession, times: &[f64]) -> Result<Vec<ObservationRow>, SolverError> {
    let mut out = Vec::with_capacity(times.len());
    for chunk in times.chunks(session.per_call_cap().min(PER_CALL_CAP)) {
        out.extend(session.observe(chunk)?);
    }
    Ok(out)
}

/// The planning-free baseline: `n` evenly spaced observations over the
/// whole window, then the full-data pipeline.
pub fn solve_uniform(session: &mut ObservationSession, kind: TaskKind, n: usize) -> Result<Estimate, SolverError> {
    if n < 3 {
        return Err(SolverError::InsufficientData(format!("uniform sampling needs N >= 3, got {n}")));
    }
    let (lo, hi) = session.window();
    let before = session.used();
    let rows = observe_all(session, &linspace(lo, hi, n))?;
    let mut est = solve_full(kind, &rows, &session.units().clone())?;
    est.observations_spent = session.used() - before;
    est.strategy = format!("uniform-{n}");
    Ok(est)
}
