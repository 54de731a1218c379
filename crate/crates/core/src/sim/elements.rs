//! Ground-truth orbital diagnostics from a dense trajectory.

use std::f64::consts::TAU;

use serde::{Deserialize, Serialize};

use super::{DenseTrajectory, SimError, Vector3};
use crate::units::G_SI;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExtremumKind {
    Min,
    Max,
}

/// A local extremum of a sampled series, refined between samples.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Extremum {
    pub time: f64,
    pub value: f64,
    pub kind: ExtremumKind,
}

/// Vertex of the parabola through three samples. Falls back to the middle
/// sample when the points are collinear or the vertex leaves the bracket.
pub fn refine_extremum(t: [f64; 3], y: [f64; 3]) -> (f64, f64) {
    let (h0, h1) = (t[1] - t[0], t[2] - t[1]);
    let d0 = (y[1] - y[0]) / h0;
    let d1 = (y[2] - y[1]) / h1;
    let curv = (d1 - d0) / (t[2] - t[0]);
    if curv == 0.0 || !curv.is_finite() {
        return (t[1], y[1]);
    }
    // y = y1 + b (s) + curv s^2 with s = t - t1; b from the two slopes
    let b = d0 + curv * h0;
    let s = -b / (2.0 * curv);
    if !(s > -h0 && s < h1) {
        return (t[1], y[1]);
    }
    (t[1] + s, y[1] + b * s + curv * s * s)
}

/// Interior local minima and maxima of `values`, each refined parabolically.
pub fn separation_extrema(times: &[f64], values: &[f64]) -> Vec<Extremum> {
    let mut out = Vec::new();
    for i in 1..values.len().saturating_sub(1) {
        let (a, b, c) = (values[i - 1], values[i], values[i + 1]);
        let kind = if b < a && b <= c {
            ExtremumKind::Min
        } else if b > a && b >= c {
            ExtremumKind::Max
        } else {
            continue;
        };
        let (time, value) = refine_extremum([times[i - 1], times[i], times[i + 1]], [a, b, c]);
        out.push(Extremum { time, value, kind });
    }
    out
}

fn hermite(s: f64, h: f64, y0: f64, y1: f64, m0: f64, m1: f64) -> f64 {
    let s2 = s * s;
    let s3 = s2 * s;
    (2.0 * s3 - 3.0 * s2 + 1.0) * y0 + (s3 - 2.0 * s2 + s) * h * m0 + (-2.0 * s3 + 3.0 * s2) * y1 + (s3 - s2) * h * m1
}

/// Orbital period from the angle swept by the relative separation vector.
///
/// The time to sweep `k` full turns from the start is `k` periods for any
/// Keplerian orbit, wherever it starts. With relative velocities the angle is
/// interpolated by cubic Hermite using the exact angular rate.
pub fn sweep_period(times: &[f64], rel: &[Vector3], rel_vel: Option<&[Vector3]>) -> Result<f64, SimError> {
    if times.len() < 3 || rel.len() != times.len() {
        return Err(SimError::InsufficientCoverage("need at least three samples".into()));
    }
    let mut theta = Vec::with_capacity(rel.len());
    let mut prev = rel[0].planar_angle();
    let mut acc = 0.0;
    theta.push(0.0);
    for r in &rel[1..] {
        let a = r.planar_angle();
        let mut d = a - prev;
        d -= TAU * (d / TAU).round();
        acc += d;
        theta.push(acc);
        prev = a;
    }
    let sign = if acc < 0.0 { -1.0 } else { 1.0 };
    let total = acc.abs();
    let turns = (total / TAU + 1e-6).floor();
    if turns < 1.0 {
        return Err(SimError::InsufficientCoverage(format!(
            "separation vector swept {:.4} turns, less than one orbit",
            total / TAU
        )));
    }
    let target = turns * TAU;
    let rate = |i: usize| -> f64 {
        match rel_vel {
            Some(v) => sign * rel[i].cross(&v[i]).z / rel[i].norm_squared(),
            None => f64::NAN,
        }
    };
    let n = times.len();
    let i = (1..n).find(|&i| sign * theta[i] >= target).unwrap_or(n - 1);
    let (t0, t1) = (times[i - 1], times[i]);
    let (y0, y1) = (sign * theta[i - 1], sign * theta[i]);
    let h = t1 - t0;
    let crossing = if rel_vel.is_some() {
        let (m0, m1) = (rate(i - 1), rate(i));
        // Newton from the linear guess; the cubic is monotone on dense data
        let mut s = (target - y0) / (y1 - y0);
        for _ in 0..50 {
            let f = hermite(s, h, y0, y1, m0, m1) - target;
            let eps = 1e-7;
            let df = (hermite(s + eps, h, y0, y1, m0, m1) - hermite(s - eps, h, y0, y1, m0, m1)) / (2.0 * eps);
            let ds = f / df;
            s -= ds;
            if ds.abs() < 1e-15 {
                break;
            }
        }
        t0 + s * h
    } else {
        t0 + (target - y0) / (y1 - y0) * h
    };
    Ok((crossing - times[0]) / turns)
}

/// Diagnostics of a bound Newtonian relative orbit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OrbitalElements {
    /// s
    pub period: f64,
    /// m
    pub semi_major: f64,
    pub eccentricity: f64,
    /// m
    pub periastron: f64,
    /// m
    pub apoastron: f64,
    /// Kepler's third law applied to `semi_major` and the masses (s).
    pub kepler_period: f64,
}

/// Smallest and largest separation, refined at interior extrema.
pub fn separation_range(times: &[f64], seps: &[f64]) -> (f64, f64) {
    let mut lo = seps.iter().copied().fold(f64::INFINITY, f64::min);
    let mut hi = seps.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    for e in separation_extrema(times, seps) {
        match e.kind {
            ExtremumKind::Min => lo = lo.min(e.value),
            ExtremumKind::Max => hi = hi.max(e.value),
        }
    }
    (lo, hi)
}

/// Period, shape and extent of the relative orbit in an SI trajectory.
pub fn orbital_elements(traj: &DenseTrajectory, masses: [f64; 2]) -> Result<OrbitalElements, SimError> {
    let rel = traj.relative_positions();
    let rel_v = traj.relative_velocities();
    let period = sweep_period(&traj.times, &rel, rel_v.as_deref())?;
    let seps: Vec<f64> = rel.iter().map(|r| r.norm()).collect();
    let (peri, apo) = separation_range(&traj.times, &seps);
    let semi_major = 0.5 * (peri + apo);
    if let Some(v) = rel_v.as_deref() {
        let mu = G_SI * (masses[0] + masses[1]);
        let energy = 0.5 * v[0].norm_squared() - mu / seps[0];
        if energy >= 0.0 {
            return Err(SimError::InsufficientCoverage("relative orbit is unbound".into()));
        }
    }
    let kepler_period = TAU * (semi_major.powi(3) / (G_SI * (masses[0] + masses[1]))).sqrt();
    Ok(OrbitalElements {
        period,
        semi_major,
        eccentricity: (apo - peri) / (apo + peri),
        periastron: peri,
        apoastron: apo,
        kepler_period,
    })
}
