//! Budgeted observation strategies: adaptive extremum search and the planned
//! exponent survey.

use std::collections::BTreeMap;
use std::f64::consts::TAU;

use serde::{Deserialize, Serialize};

use super::fit::{fit_exponent_pairs, stencil};
use super::{linspace, Estimate, SolverError};
use crate::env::{EnvError, ObservationRow, ObservationSession, Protocol};
use crate::sim::Vector3;
use crate::tasks::{Answer, TaskKind};
use crate::units::Quantity;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Objective {
    /// Largest speed of star 1.
    MaxSpeed,
    /// Smallest separation (periastron).
    MinSeparation,
}

impl Objective {
    pub fn task(self) -> TaskKind {
        match self {
            Objective::MaxSpeed => TaskKind::MaxSpeedStar1,
            Objective::MinSeparation => TaskKind::Periastron,
        }
    }
}

/// Observation bookkeeping in SI, on top of a session.
struct Probe<'a> {
    session: &'a mut ObservationSession,
    tf: f64,
    lf: f64,
    end: f64,
    limit: usize,
    spent: usize,
    rows: Vec<ObservationRow>,
    exhausted: bool,
}

impl<'a> Probe<'a> {
    fn new(session: &'a mut ObservationSession, limit: usize) -> Result<Self, SolverError> {
        let remaining = match session.protocol() {
            Protocol::BudgetObs { .. } => session.remaining().unwrap_or(0),
            Protocol::FullObs => {
                return Err(SolverError::Binding("budgeted strategies need a budget-obs session".into()))
            }
        };
        if limit > remaining {
            return Err(SolverError::Env(EnvError::Exhausted { requested: limit, remaining }));
        }
        let u = session.units().clone();
        let (tf, lf) = (u.time_factor(), u.length_factor());
        let end = session.window().1 * tf;
        Ok(Self { session, tf, lf, end, limit, spent: 0, rows: Vec::new(), exhausted: false })
    }

    fn left(&self) -> usize {
        self.limit - self.spent
    }

    fn seen(&self, t: f64) -> bool {
        self.rows.iter().any(|r| (r.time - t).abs() <= 1e-12 * self.end)
    }

    /// Observes SI times (clamped into the window, already-seen times
    /// skipped), stopping early when the budget runs out.
    fn observe(&mut self, times: &[f64]) -> Vec<ObservationRow> {
        let mut want: Vec<f64> = Vec::new();
        for &t in times {
            let t = t.clamp(0.0, self.end);
            if !self.seen(t) && !want.iter().any(|w| (w - t).abs() <= 1e-12 * self.end) {
                want.push(t);
            }
        }
        if want.len() > self.left() {
            want.truncate(self.left());
            self.exhausted = true;
        }
        let mut got = Vec::new();
        for chunk in want.chunks(self.session.per_call_cap()) {
            let req: Vec<f64> = chunk.iter().map(|t| t / self.tf).collect();
            match self.session.observe(&req) {
                Ok(rows) => {
                    self.spent += rows.len();
                    got.extend(rows.iter().zip(chunk).map(|(r, &t)| ObservationRow {
                        time: t,
                        star1: (r.star1() * self.lf).to_array(),
                        star2: (r.star2() * self.lf).to_array(),
                    }));
                }
                Err(_) => {
                    self.exhausted = true;
                    break;
                }
            }
        }
        self.rows.extend_from_slice(&got);
        self.rows.sort_by(|a, b| a.time.total_cmp(&b.time));
        got
    }
}

fn sep(r: &ObservationRow) -> f64 {
    (r.star2() - r.star1()).norm()
}

/// Osculating Newtonian orbit from a three-point stencil.
#[derive(Debug, Clone, Copy)]
struct Osculating {
    mu: f64,
    semi_major: f64,
    eccentricity: f64,
    /// Infinite when unbound.
    period: f64,
    /// A time of periastron passage (SI), possibly negative.
    periastron_time: f64,
    radius: f64,
    speed: f64,
}

fn osculate(rows: &[ObservationRow]) -> Result<Osculating, SolverError> {
    if rows.len() != 3 {
        return Err(SolverError::InsufficientData("bootstrap needs three rows".into()));
    }
    let rel: Vec<Vector3> = rows.iter().map(|r| r.star2() - r.star1()).collect();
    let (d1, d2) = stencil(rows[1].time - rows[0].time, rows[2].time - rows[1].time);
    let r = rel[1];
    let v = rel[0] * d1[0] + rel[1] * d1[1] + rel[2] * d1[2];
    let a = rel[0] * d2[0] + rel[1] * d2[1] + rel[2] * d2[2];
    let rn = r.norm();
    let mu = a.norm() * rn * rn;
    let eps = 0.5 * v.norm_squared() - mu / rn;
    let evec = (r * (v.norm_squared() - mu / rn) - v * r.dot(&v)) / mu;
    let e = evec.norm();
    if !(mu > 0.0) || !eps.is_finite() {
        return Err(SolverError::Conditioning("bootstrap stencil is degenerate".into()));
    }
    if eps >= 0.0 {
        return Ok(Osculating {
            mu,
            semi_major: f64::INFINITY,
            eccentricity: e,
            period: f64::INFINITY,
            periastron_time: f64::NAN,
            radius: rn,
            speed: v.norm(),
        });
    }
    let sma = -mu / (2.0 * eps);
    let n = (mu / sma.powi(3)).sqrt();
    let cos_e = ((1.0 - rn / sma) / e.max(1e-12)).clamp(-1.0, 1.0);
    let mut ecc = cos_e.acos();
    if r.dot(&v) < 0.0 {
        ecc = -ecc;
    }
    let mean = ecc - e * ecc.sin();
    Ok(Osculating {
        mu,
        semi_major: sma,
        eccentricity: e,
        period: TAU / n,
        periastron_time: rows[1].time - mean / n,
        radius: rn,
        speed: v.norm(),
    })
}

/// Neighbouring observed times around the best-valued observation.
fn bracket(rows: &[ObservationRow], best: usize) -> (f64, f64) {
    let lo = if best > 0 { rows[best - 1].time } else { rows[best].time };
    let hi = if best + 1 < rows.len() { rows[best + 1].time } else { rows[best].time };
    (lo, hi)
}

fn interior(lo: f64, hi: f64, m: usize) -> Vec<f64> {
    (1..=m).map(|k| lo + (hi - lo) * k as f64 / (m + 1) as f64).collect()
}

fn argmin_sep(rows: &[ObservationRow]) -> usize {
    (0..rows.len()).min_by(|&a, &b| sep(&rows[a]).total_cmp(&sep(&rows[b]))).unwrap_or(0)
}

/// Scan, candidate selection and local refinement of an extremum, spending
/// at most `budget` observations from `session`.
pub fn adaptive_extremum(
    session: &mut ObservationSession,
    objective: Objective,
    budget: usize,
) -> Result<Estimate, SolverError> {
    if budget < 20 {
        return Err(SolverError::InsufficientData(format!(
            "adaptive search needs a budget of at least 20, got {budget}"
        )));
    }
    let units = session.units().clone();
    let mut p = Probe::new(session, budget)?;
    let w = p.end;
    let mut diag = BTreeMap::new();

    let h0 = w * 1e-3;
    let boot = p.observe(&[0.0, h0, 2.0 * h0]);
    let osc = osculate(&boot)?;
    let period = osc.period;
    diag.insert("period_estimate".into(), period);

    let (lo, hi) = if !(period < 0.95 * w) { (0.0, w) } else { (w - 1.05 * period, w) };
    let n_scan = ((budget as f64) * 0.4).round() as usize;
    let reserve = match objective {
        Objective::MaxSpeed => ((budget as f64 * 0.3).round() as usize).max(6) & !1,
        Objective::MinSeparation => 0,
    };
    let scan = linspace(lo, hi, n_scan);
    p.observe(&scan);

    // local minima of separation over the scan, endpoints included
    let grid: Vec<ObservationRow> = p.rows.iter().filter(|r| r.time >= lo).copied().collect();
    let mut cands: Vec<usize> = (0..grid.len())
        .filter(|&i| {
            let s = sep(&grid[i]);
            (i == 0 || s <= sep(&grid[i - 1])) && (i + 1 == grid.len() || s <= sep(&grid[i + 1]))
        })
        .collect();
    cands.sort_by(|&a, &b| sep(&grid[a]).total_cmp(&sep(&grid[b])));
    cands.truncate(2);
    diag.insert("candidates".into(), cands.len() as f64);

    let mut best_times: Vec<f64> = Vec::new();
    if !cands.is_empty() {
        let mut round: Vec<f64> = Vec::new();
        for &c in &cands {
            let (a, b) = bracket(&grid, c);
            let t = grid[c].time;
            round.extend(interior(a, t, 1));
            round.extend(interior(t, b, 1));
            // third point goes on the side with the lower neighbour
            let left_lower = c > 0 && (c + 1 == grid.len() || sep(&grid[c - 1]) < sep(&grid[c + 1]));
            round.push(if left_lower { 0.5 * (a + t) + 0.25 * (t - a) } else { t + 0.25 * (b - t) });
            if cands.len() == 1 {
                round.extend(interior(a, b, 3));
            }
        }
        let room = p.left().saturating_sub(reserve);
        round.truncate(room);
        p.observe(&round);
        best_times.push(p.rows[argmin_sep(&p.rows)].time);
    }
    loop {
        let room = p.left().saturating_sub(reserve);
        if room < 2 {
            break;
        }
        let b = argmin_sep(&p.rows);
        let (a, c) = bracket(&p.rows, b);
        if c - a <= 1e-9 * w {
            break;
        }
        let m = room.min(6);
        let t = p.rows[b].time;
        let mut pts = interior(a, t, m / 2);
        pts.extend(interior(t, c, m - m / 2));
        p.observe(&pts);
        best_times.push(p.rows[argmin_sep(&p.rows)].time);
        if p.exhausted {
            break;
        }
    }
    diag.insert("refinement_rounds".into(), best_times.len() as f64);
    let ib = argmin_sep(&p.rows);
    let t_peri = p.rows[ib].time;
    diag.insert("best_time".into(), t_peri);

    let value_si = match objective {
        Objective::MinSeparation => sep(&p.rows[ib]),
        Objective::MaxSpeed => {
            let scale = if period.is_finite() { period } else { TAU * osc.radius / osc.speed };
            let h = scale * 2e-4;
            let (a, c) = bracket(&p.rows, ib);
            let mut delta = 0.25 * (c - a).max(4.0 * h);
            let mut best: Option<(f64, f64)> = None;
            let pair_speed = |p: &mut Probe, center: f64| -> Option<f64> {
                let center = center.clamp(0.5 * h, w - 0.5 * h);
                let rows = p.observe(&[center - 0.5 * h, center + 0.5 * h]);
                if rows.len() < 2 {
                    return None;
                }
                Some((rows[1].star1() - rows[0].star1()).norm() / (rows[1].time - rows[0].time))
            };
            if let Some(s) = pair_speed(&mut p, t_peri) {
                best = Some((t_peri, s));
            }
            while p.left() >= 2 {
                let Some((c0, s0)) = best else { break };
                let mut moved = false;
                for cand in [c0 - delta, c0 + delta] {
                    if p.left() < 2 {
                        break;
                    }
                    if let Some(s) = pair_speed(&mut p, cand) {
                        if s > best.map_or(0.0, |b| b.1) {
                            best = Some((cand, s));
                            moved = true;
                        }
                    }
                }
                if !moved || best.map_or(0.0, |b| b.1) <= s0 {
                    delta *= 0.5;
                }
                if delta < h {
                    break;
                }
            }
            match best {
                Some((t, s)) => {
                    diag.insert("best_time".into(), t);
                    s
                }
                None => {
                    p.exhausted = true;
                    0.0
                }
            }
        }
    };
    let q = objective.task().quantity().unwrap_or(Quantity::Dimensionless);
    Ok(Estimate {
        value: Answer::Number(value_si / units.si_factor(q)),
        units: units.unit_for(q),
        observations_spent: p.spent,
        strategy: format!("adaptive-{budget}"),
        diagnostics: diag,
        budget_exhausted: p.exhausted,
    })
}

/// Gravity exponent from stencil triplets placed at log-spaced separations
/// of the osculating orbit, spending at most `budget` observations.
pub fn planned_gravity_exponent(session: &mut ObservationSession, budget: usize) -> Result<Estimate, SolverError> {
    if budget < 24 {
        return Err(SolverError::InsufficientData(format!(
            "planned survey needs a budget of at least 24, got {budget}"
        )));
    }
    let mut p = Probe::new(session, budget)?;
    let w = p.end;
    let h0 = w * 1e-4;
    let boot = p.observe(&[0.0, h0, 2.0 * h0]);
    let osc = osculate(&boot)?;
    if !osc.period.is_finite() {
        return Err(SolverError::Conditioning("orbit appears unbound".into()));
    }
    let (a, e, n) = (osc.semi_major, osc.eccentricity, TAU / osc.period);
    let (peri, apo) = (a * (1.0 - e), a * (1.0 + e));
    if !((apo / peri).ln() > 2.0 * super::MIN_LOG_RANGE) {
        return Err(SolverError::Conditioning(format!("osculating eccentricity {e:.2e} is too small")));
    }
    let k = (budget - 3) / 3;
    let (lo, hi) = ((peri * 1.02).ln(), (apo * 0.98).ln());
    let mut plan = Vec::with_capacity(3 * k);
    for j in 0..k {
        let r = (lo + (hi - lo) * j as f64 / (k - 1).max(1) as f64).exp();
        let mut ecc = ((1.0 - r / a) / e).clamp(-1.0, 1.0).acos();
        if j % 2 == 1 {
            ecc = TAU - ecc;
        }
        let mean = ecc - e * ecc.sin();
        let mut t = osc.periastron_time + mean / n;
        t -= osc.period * (t / osc.period).floor();
        let v = (osc.mu * (2.0 / r - 1.0 / a)).max(0.0).sqrt();
        let h = 0.05 * r / v;
        if t - h < 0.0 {
            t += osc.period;
        }
        if t + h > w {
            t -= osc.period;
        }
        plan.extend([t - h, t, t + h]);
    }
    p.observe(&plan);

    let mut radii = vec![];
    let mut accels = vec![];
    for tri in std::iter::once(boot).chain(plan.chunks(3).map(|c| {
        c.iter()
            .filter_map(|&t| p.rows.iter().find(|r| (r.time - t.clamp(0.0, w)).abs() <= 1e-12 * w).copied())
            .collect()
    })) {
        if tri.len() != 3 {
            continue;
        }
        let rel: Vec<Vector3> = tri.iter().map(|r| r.star2() - r.star1()).collect();
        let (_, d2) = stencil(tri[1].time - tri[0].time, tri[2].time - tri[1].time);
        let acc = rel[0] * d2[0] + rel[1] * d2[1] + rel[2] * d2[2];
        radii.push(rel[1].norm());
        accels.push(acc.norm());
    }
    let (alpha, fit) = fit_exponent_pairs(&radii, &accels)?;
    let mut diag = BTreeMap::new();
    diag.insert("r_squared".into(), fit.r_squared);
    diag.insert("triplets".into(), radii.len() as f64);
    Ok(Estimate {
        value: Answer::Number(alpha),
        units: String::new(),
        observations_spent: p.spent,
        strategy: format!("planned-{budget}"),
        diagnostics: diag,
        budget_exhausted: p.exhausted,
    })
}
