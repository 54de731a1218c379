//! Kinematics and least-squares fits on observed positions (SI).

use std::f64::consts::{PI, TAU};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::SolverError;
use crate::env::ObservationRow;
use crate::sim::Vector3;

/// Finite-difference velocities and accelerations of both stars.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KinematicSeries {
    pub times: Vec<f64>,
    pub star1_velocity: Vec<Vector3>,
    pub star2_velocity: Vec<Vector3>,
    pub star1_acceleration: Vec<Vector3>,
    pub star2_acceleration: Vec<Vector3>,
    pub separation: Vec<f64>,
    /// False at the two boundary samples, which have no central difference.
    pub valid: Vec<bool>,
}

impl KinematicSeries {
    pub fn relative_velocity(&self, i: usize) -> Vector3 {
        self.star2_velocity[i] - self.star1_velocity[i]
    }

    pub fn relative_acceleration(&self, i: usize) -> Vector3 {
        self.star2_acceleration[i] - self.star1_acceleration[i]
    }

    pub fn valid_indices(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.times.len()).filter(|&i| self.valid[i])
    }
}

/// Weights of the three-point first and second derivatives at the middle
/// of samples spaced `h1`, `h2`.
pub(crate) fn stencil(h1: f64, h2: f64) -> ([f64; 3], [f64; 3]) {
    let d1 = [-h2 / (h1 * (h1 + h2)), (h2 - h1) / (h1 * h2), h1 / (h2 * (h1 + h2))];
    let d2 = [2.0 / (h1 * (h1 + h2)), -2.0 / (h1 * h2), 2.0 / (h2 * (h1 + h2))];
    (d1, d2)
}

/// Central differences on a possibly non-uniform grid. Rows must be sorted
/// by strictly increasing time.
pub fn kinematics(rows: &[ObservationRow]) -> Result<KinematicSeries, SolverError> {
    let n = rows.len();
    if n < 3 {
        return Err(SolverError::InsufficientData(format!("need at least 3 rows, got {n}")));
    }
    if let Some(w) = rows.windows(2).find(|w| !(w[1].time > w[0].time)) {
        return Err(SolverError::Validation(format!("times not strictly increasing at t = {}", w[1].time)));
    }
    let mut out = KinematicSeries {
        times: rows.iter().map(|r| r.time).collect(),
        star1_velocity: vec![Vector3::ZERO; n],
        star2_velocity: vec![Vector3::ZERO; n],
        star1_acceleration: vec![Vector3::ZERO; n],
        star2_acceleration: vec![Vector3::ZERO; n],
        separation: rows.iter().map(|r| (r.star2() - r.star1()).norm()).collect(),
        valid: vec![false; n],
    };
    for i in 1..n - 1 {
        let (d1, d2) = stencil(rows[i].time - rows[i - 1].time, rows[i + 1].time - rows[i].time);
        let apply = |w: &[f64; 3], f: fn(&ObservationRow) -> Vector3| {
            f(&rows[i - 1]) * w[0] + f(&rows[i]) * w[1] + f(&rows[i + 1]) * w[2]
        };
        out.star1_velocity[i] = apply(&d1, ObservationRow::star1);
        out.star2_velocity[i] = apply(&d1, ObservationRow::star2);
        out.star1_acceleration[i] = apply(&d2, ObservationRow::star1);
        out.star2_acceleration[i] = apply(&d2, ObservationRow::star2);
        out.valid[i] = true;
    }
    Ok(out)
}

/// Ordinary least squares `y ≈ X beta` via SVD.
pub(crate) fn least_squares(rows: &[Vec<f64>], y: &[f64]) -> Result<Vec<f64>, SolverError> {
    let n = rows.len();
    let p = rows.first().map_or(0, |r| r.len());
    if n < p || p == 0 {
        return Err(SolverError::InsufficientData(format!("{n} equations for {p} unknowns")));
    }
    // columns are equilibrated so that physical units do not set the condition number
    let scale: Vec<f64> = (0..p)
        .map(|j| {
            let norm = rows.iter().map(|r| r[j] * r[j]).sum::<f64>().sqrt();
            if norm > 0.0 && norm.is_finite() {
                norm
            } else {
                1.0
            }
        })
        .collect();
    let x = DMatrix::from_fn(n, p, |i, j| rows[i][j] / scale[j]);
    let b = DVector::from_column_slice(y);
    let svd = x.svd(true, true);
    let smax = svd.singular_values.max();
    let smin = svd.singular_values.min();
    if !(smin > smax * 1e-12) {
        return Err(SolverError::Conditioning(format!(
            "design matrix is rank deficient (condition {:e})",
            smax / smin
        )));
    }
    let beta = svd.solve(&b, 0.0).map_err(|e| SolverError::Conditioning(e.to_string()))?;
    Ok(beta.iter().zip(&scale).map(|(b, s)| b / s).collect())
}

/// Result of fitting `y = prefactor * x^exponent`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PowerLawFit {
    pub exponent: f64,
    pub prefactor: f64,
    /// Coefficient of determination in log space.
    pub r_squared: f64,
    pub samples: usize,
}

/// Log-log OLS. Non-positive or non-finite pairs and repeated abscissae are
/// dropped.
pub fn fit_power_law(x: &[f64], y: &[f64]) -> Result<PowerLawFit, SolverError> {
    let mut pts: Vec<(f64, f64)> = x
        .iter()
        .zip(y)
        .filter(|(a, b)| **a > 0.0 && **b > 0.0 && a.is_finite() && b.is_finite())
        .map(|(a, b)| (a.ln(), b.ln()))
        .collect();
    pts.sort_by(|a, b| a.0.total_cmp(&b.0));
    pts.dedup_by(|a, b| a.0 == b.0);
    let n = pts.len();
    if n < 2 {
        return Err(SolverError::InsufficientData("power-law fit needs two distinct points".into()));
    }
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n as f64;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n as f64;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let syy: f64 = pts.iter().map(|p| (p.1 - my).powi(2)).sum();
    if !(sxx > 0.0) {
        return Err(SolverError::Conditioning("abscissae have no spread".into()));
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ss_res: f64 = pts.iter().map(|p| (p.1 - intercept - slope * p.0).powi(2)).sum();
    let r_squared = if syy > 0.0 { 1.0 - ss_res / syy } else { 1.0 };
    Ok(PowerLawFit { exponent: slope, prefactor: intercept.exp(), r_squared, samples: n })
}

/// Minimum log-range of separations for a usable exponent fit.
pub const MIN_LOG_RANGE: f64 = 0.02;

/// Gravity exponent from the magnitude of the relative acceleration against
/// separation: |a| ∝ r^-(2+alpha).
pub fn fit_gravity_exponent(rows: &[ObservationRow]) -> Result<(f64, PowerLawFit), SolverError> {
    let k = kinematics(rows)?;
    let idx: Vec<usize> = k.valid_indices().collect();
    if idx.len() < 20 {
        return Err(SolverError::InsufficientData(format!("need at least 20 interior samples, got {}", idx.len())));
    }
    let r: Vec<f64> = idx.iter().map(|&i| k.separation[i]).collect();
    let a: Vec<f64> = idx.iter().map(|&i| k.relative_acceleration(i).norm()).collect();
    fit_exponent_pairs(&r, &a)
}

/// Exponent fit on (separation, |acceleration|) pairs.
pub fn fit_exponent_pairs(r: &[f64], a: &[f64]) -> Result<(f64, PowerLawFit), SolverError> {
    let (lo, hi) = r.iter().fold((f64::INFINITY, 0.0f64), |(lo, hi), &x| (lo.min(x), hi.max(x)));
    if !((hi / lo).ln() >= MIN_LOG_RANGE) {
        return Err(SolverError::Conditioning(format!(
            "separation spans ln(rmax/rmin) = {:.2e}; the orbit is too close to circular",
            (hi / lo).ln()
        )));
    }
    let fit = fit_power_law(r, a)?;
    Ok((-fit.exponent - 2.0, fit))
}

/// Drag fit: relative acceleration = -mu r/r^3 - v/tau.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DragFit {
    pub tau: f64,
    pub mu: f64,
    /// Mean ratio of the drag term to gravity.
    pub drag_ratio: f64,
}

pub fn fit_drag_timescale(rows: &[ObservationRow]) -> Result<DragFit, SolverError> {
    let k = kinematics(rows)?;
    let mut design = Vec::new();
    let mut rhs = Vec::new();
    let mut pairs = Vec::new();
    for i in k.valid_indices() {
        let rel = rows[i].star2() - rows[i].star1();
        let r3 = rel.norm().powi(3);
        let v = k.relative_velocity(i);
        let a = k.relative_acceleration(i);
        for (g, vv, aa) in [(rel.x / r3, v.x, a.x), (rel.y / r3, v.y, a.y), (rel.z / r3, v.z, a.z)] {
            design.push(vec![-g, -vv]);
            rhs.push(aa);
        }
        pairs.push((rel.norm(), v.norm()));
    }
    if pairs.len() < 3 {
        return Err(SolverError::InsufficientData("drag fit needs at least 3 interior samples".into()));
    }
    let beta = least_squares(&design, &rhs)?;
    let (mu, inv_tau) = (beta[0], beta[1]);
    let drag_ratio = pairs.iter().map(|&(r, v)| inv_tau * v / (mu / (r * r))).sum::<f64>() / pairs.len() as f64;
    if !(inv_tau > 0.0) || !(drag_ratio >= 1e-5) || !(mu > 0.0) {
        return Err(SolverError::SignalAbsent(format!(
            "no drag signal (1/tau = {inv_tau:e} s^-1, drag/gravity = {drag_ratio:e})"
        )));
    }
    Ok(DragFit { tau: 1.0 / inv_tau, mu, drag_ratio })
}

/// Conic fit of the relative orbit: 1/r = A + B cos(theta) + C sin(theta).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConicFit {
    /// Semi-latus rectum (m).
    pub semi_latus: f64,
    pub eccentricity: f64,
    /// Angle of periastron (rad).
    pub periastron_angle: f64,
    /// +1 for counter-clockwise motion.
    pub direction: f64,
}

impl ConicFit {
    pub fn is_bound(&self) -> bool {
        self.eccentricity < 1.0
    }

    pub fn semi_major(&self) -> f64 {
        self.semi_latus / (1.0 - self.eccentricity * self.eccentricity)
    }

    pub fn periastron(&self) -> f64 {
        self.semi_latus / (1.0 + self.eccentricity)
    }

    /// Mean anomaly at polar angle `theta` (elliptic orbits).
    pub fn mean_anomaly(&self, theta: f64) -> f64 {
        let e = self.eccentricity;
        let nu = theta - self.periastron_angle;
        let ecc = 2.0 * (((1.0 - e) / (1.0 + e)).sqrt() * (nu / 2.0).tan()).atan();
        ecc - e * ecc.sin()
    }
}

pub fn fit_conic(rows: &[ObservationRow]) -> Result<ConicFit, SolverError> {
    if rows.len() < 3 {
        return Err(SolverError::InsufficientData("conic fit needs at least 3 rows".into()));
    }
    let rel: Vec<Vector3> = rows.iter().map(|r| r.star2() - r.star1()).collect();
    let design: Vec<Vec<f64>> = rel
        .iter()
        .map(|r| {
            let th = r.planar_angle();
            vec![1.0, th.cos(), th.sin()]
        })
        .collect();
    let rhs: Vec<f64> = rel.iter().map(|r| 1.0 / r.norm()).collect();
    let beta = least_squares(&design, &rhs)?;
    let (a, b, c) = (beta[0], beta[1], beta[2]);
    if !(a > 0.0) {
        return Err(SolverError::Conditioning("conic fit gave a non-positive inverse semi-latus rectum".into()));
    }
    let mut h = 0.0;
    for w in rel.windows(2) {
        h += w[0].cross(&w[1]).z;
    }
    Ok(ConicFit {
        semi_latus: 1.0 / a,
        eccentricity: (b * b + c * c).sqrt() / a,
        periastron_angle: c.atan2(b),
        direction: if h < 0.0 { -1.0 } else { 1.0 },
    })
}

/// Period from a linear fit of the unwrapped mean anomaly against time.
pub fn fit_period(rows: &[ObservationRow], conic: &ConicFit) -> Result<f64, SolverError> {
    if !conic.is_bound() {
        return Err(SolverError::Validation("orbit is unbound; no period".into()));
    }
    let mut mean = Vec::with_capacity(rows.len());
    let mut prev = 0.0;
    let mut offset = 0.0;
    for (i, r) in rows.iter().enumerate() {
        let m = conic.direction * conic.mean_anomaly((r.star2() - r.star1()).planar_angle());
        if i > 0 {
            let mut d = m - prev;
            d -= TAU * (d / TAU).round();
            // mean anomaly only advances; a backwards jump is a full turn
            if d < -PI * 0.999 {
                d += TAU;
            }
            offset += d;
        }
        mean.push(offset);
        prev = m;
    }
    let design: Vec<Vec<f64>> = rows.iter().map(|r| vec![1.0, r.time]).collect();
    let beta = least_squares(&design, &mean)?;
    let n = beta[1];
    if !(n > 0.0) {
        return Err(SolverError::Conditioning("mean anomaly does not advance".into()));
    }
    Ok(TAU / n)
}

/// Projection of each coordinate series off span{1, t}, concatenated.
fn detrended(times: &[f64], series: &[Vector3]) -> Vec<f64> {
    let n = times.len() as f64;
    let tm = times.iter().sum::<f64>() / n;
    let stt: f64 = times.iter().map(|t| (t - tm).powi(2)).sum();
    let mut out = Vec::with_capacity(3 * times.len());
    for axis in 0..3 {
        let y: Vec<f64> = series.iter().map(|v| v.to_array()[axis]).collect();
        let ym = y.iter().sum::<f64>() / n;
        let sty: f64 = times.iter().zip(&y).map(|(t, v)| (t - tm) * (v - ym)).sum();
        let slope = if stt > 0.0 { sty / stt } else { 0.0 };
        out.extend(times.iter().zip(&y).map(|(t, v)| v - ym - slope * (t - tm)));
    }
    out
}

/// Mass ratio m2/m1 from the requirement that the centre of mass moves in a
/// straight line.
pub fn fit_mass_ratio(rows: &[ObservationRow]) -> Result<f64, SolverError> {
    let t: Vec<f64> = rows.iter().map(|r| r.time).collect();
    let x1 = detrended(&t, &rows.iter().map(|r| r.star1()).collect::<Vec<_>>());
    let x2 = detrended(&t, &rows.iter().map(|r| r.star2()).collect::<Vec<_>>());
    let n2: f64 = x2.iter().map(|v| v * v).sum();
    let scale: f64 = rows.iter().map(|r| (r.star2() - r.star1()).norm_squared()).sum();
    if !(n2 > 1e-12 * scale) {
        return Err(SolverError::Ambiguity("star 2 shows no motion about a uniform drift".into()));
    }
    let q = -x1.iter().zip(&x2).map(|(a, b)| a * b).sum::<f64>() / n2;
    if !(q > 0.0) || !q.is_finite() {
        return Err(SolverError::Ambiguity(format!("mass ratio fit gave {q}")));
    }
    Ok(q)
}

/// Straight-line fit of a vector series: (position at t = 0, velocity).
pub fn fit_line(times: &[f64], series: &[Vector3]) -> (Vector3, Vector3) {
    let n = times.len() as f64;
    let tm = times.iter().sum::<f64>() / n;
    let ym = series.iter().fold(Vector3::ZERO, |a, b| a + *b) / n;
    let stt: f64 = times.iter().map(|t| (t - tm).powi(2)).sum();
    let sty = times.iter().zip(series).fold(Vector3::ZERO, |a, (t, v)| a + (*v - ym) * (t - tm));
    let vel = if stt > 0.0 { sty / stt } else { Vector3::ZERO };
    (ym - vel * tm, vel)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(t: f64, a: [f64; 3], b: [f64; 3]) -> ObservationRow {
        ObservationRow { time: t, star1: a, star2: b }
    }

    #[test]
    fn linear_motion_has_constant_velocity() {
        let rows: Vec<_> =
            [0.0, 0.7, 2.0].iter().map(|&t| row(t, [1.0 + 2.0 * t, -t, 0.0], [5.0, 3.0 * t, 0.0])).collect();
        let k = kinematics(&rows).unwrap();
        assert!((k.star1_velocity[1] - Vector3::new(2.0, -1.0, 0.0)).norm() < 1e-12);
        assert!(k.star1_acceleration[1].norm() < 1e-12);
        assert_eq!(k.valid, vec![false, true, false]);
    }

    #[test]
    fn two_rows_rejected() {
        let rows = [row(0.0, [0.0; 3], [1.0, 0.0, 0.0]), row(1.0, [0.0; 3], [1.0, 0.0, 0.0])];
        assert!(kinematics(&rows).is_err());
        let dup = [rows[0], rows[0], rows[1]];
        assert!(matches!(kinematics(&dup), Err(SolverError::Validation(_))));
    }

    #[test]
    fn power_law_exact() {
        let x: Vec<f64> = (1..50).map(|k| k as f64 * 0.37).collect();
        let y: Vec<f64> = x.iter().map(|v| 4.2 * v.powf(-2.137)).collect();
        let f = fit_power_law(&x, &y).unwrap();
        assert!((f.exponent + 2.137).abs() < 1e-12);
        assert!((f.prefactor - 4.2).abs() < 1e-10);
    }

    #[test]
    fn narrow_range_is_ill_conditioned() {
        let r = vec![1.0, 1.001, 1.002];
        let a = vec![1.0, 0.99, 0.98];
        assert!(matches!(fit_exponent_pairs(&r, &a), Err(SolverError::Conditioning(_))));
    }
}
