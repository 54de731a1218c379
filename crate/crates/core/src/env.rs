//! Observation sessions: the only way agents see a trajectory.

use std::io::Write;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::library::{LibraryError, ScenarioLibrary};
use crate::sim::{DenseTrajectory, Vector3};
use crate::units::UnitSystem;

/// Maximum number of times in one observe call.
pub const PER_CALL_CAP: usize = 10;
/// Default total observation budget.
pub const DEFAULT_BUDGET: usize = 100;

/// One observed instant, in the scenario's units.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ObservationRow {
    pub time: f64,
    pub star1: [f64; 3],
    pub star2: [f64; 3],
}

impl ObservationRow {
    pub fn star1(&self) -> Vector3 {
        self.star1.into()
    }

    pub fn star2(&self) -> Vector3 {
        self.star2.into()
    }

    /// The same row in SI units.
    pub fn to_si(&self, units: &UnitSystem) -> ObservationRow {
        let (lf, tf) = (units.length_factor(), units.time_factor());
        ObservationRow {
            time: self.time * tf,
            star1: (self.star1() * lf).to_array(),
            star2: (self.star2() * lf).to_array(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Protocol {
    FullObs,
    BudgetObs { budget: usize },
}

impl Protocol {
    pub fn budget(budget: usize) -> Self {
        Protocol::BudgetObs { budget }
    }

    /// Observation allowance; `None` under full-obs.
    pub fn limit(&self) -> Option<usize> {
        match self {
            Protocol::FullObs => None,
            Protocol::BudgetObs { budget } => Some(*budget),
        }
    }

    pub fn label(&self) -> String {
        match self {
            Protocol::FullObs => "full-obs".into(),
            Protocol::BudgetObs { budget } => format!("budget-obs-{budget}"),
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EnvError {
    #[error("unknown scenario `{0}`")]
    NotFound(String),
    #[error("{0}")]
    Protocol(String),
    #[error("requested {requested} times; at most {cap} are allowed per call")]
    Cap { requested: usize, cap: usize },
    #[error("no times requested")]
    Empty,
    #[error("time {time} is outside the window [0.0, {end}]")]
    Window { time: f64, end: f64 },
    #[error("requested {requested} observations but only {remaining} remain")]
    Exhausted { requested: usize, remaining: usize },
    #[error("trajectory unavailable: {0}")]
    Unavailable(String),
}

impl EnvError {
    /// Stable machine-readable code.
    pub fn code(&self) -> &'static str {
        match self {
            EnvError::NotFound(_) => "not_found",
            EnvError::Protocol(_) => "protocol",
            EnvError::Cap { .. } => "cap",
            EnvError::Empty => "empty_request",
            EnvError::Window { .. } => "window",
            EnvError::Exhausted { .. } => "exhausted",
            EnvError::Unavailable(_) => "unavailable",
        }
    }
}

/// Dense table in scenario units with per-coordinate Hermite slopes.
#[derive(Debug)]
pub struct SessionTable {
    pub scenario_id: String,
    pub units: UnitSystem,
    times: Vec<f64>,
    coords: Vec<[f64; 6]>,
    slopes: Vec<[f64; 6]>,
}

impl SessionTable {
    pub fn new(traj: &DenseTrajectory, units: &UnitSystem) -> Self {
        let (lf, tf) = (units.length_factor(), units.time_factor());
        let times: Vec<f64> = traj.times.iter().map(|t| t / tf).collect();
        let coords: Vec<[f64; 6]> = traj
            .star1
            .iter()
            .zip(&traj.star2)
            .map(|(a, b)| [a.x / lf, a.y / lf, a.z / lf, b.x / lf, b.y / lf, b.z / lf])
            .collect();
        let slopes = fd_slopes(&times, &coords);
        Self { scenario_id: traj.scenario_id.clone(), units: units.clone(), times, coords, slopes }
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn end_time(&self) -> f64 {
        *self.times.last().unwrap_or(&0.0)
    }

    fn row(&self, i: usize) -> ObservationRow {
        let c = &self.coords[i];
        ObservationRow { time: self.times[i], star1: [c[0], c[1], c[2]], star2: [c[3], c[4], c[5]] }
    }

    pub fn rows(&self) -> Vec<ObservationRow> {
        (0..self.len()).map(|i| self.row(i)).collect()
    }

    /// Row at `t`: stored values at knots, cubic Hermite in between.
    pub fn interpolate(&self, t: f64) -> ObservationRow {
        let n = self.times.len();
        let j = self.times.partition_point(|&x| x < t);
        if j < n && self.times[j] == t {
            return self.row(j);
        }
        let i = j.clamp(1, n - 1) - 1;
        let (t0, t1) = (self.times[i], self.times[i + 1]);
        let h = t1 - t0;
        let s = (t - t0) / h;
        let (s2, s3) = (s * s, s * s * s);
        let h00 = 2.0 * s3 - 3.0 * s2 + 1.0;
        let h10 = s3 - 2.0 * s2 + s;
        let h01 = -2.0 * s3 + 3.0 * s2;
        let h11 = s3 - s2;
        let mut c = [0.0; 6];
        for (k, ck) in c.iter_mut().enumerate() {
            *ck = h00 * self.coords[i][k]
                + h10 * h * self.slopes[i][k]
                + h01 * self.coords[i + 1][k]
                + h11 * h * self.slopes[i + 1][k];
        }
        ObservationRow { time: t, star1: [c[0], c[1], c[2]], star2: [c[3], c[4], c[5]] }
    }
}

/// Three-point finite-difference derivatives on a non-uniform grid.
fn fd_slopes(t: &[f64], y: &[[f64; 6]]) -> Vec<[f64; 6]> {
    let n = t.len();
    let mut out = vec![[0.0; 6]; n];
    if n < 2 {
        return out;
    }
    if n == 2 {
        for k in 0..6 {
            let d = (y[1][k] - y[0][k]) / (t[1] - t[0]);
            out[0][k] = d;
            out[1][k] = d;
        }
        return out;
    }
    // derivative at t[m] of the parabola through samples a, b, c
    let three = |a: usize, b: usize, c: usize, m: usize, k: usize| {
        let (ta, tb, tc, tm) = (t[a], t[b], t[c], t[m]);
        y[a][k] * (2.0 * tm - tb - tc) / ((ta - tb) * (ta - tc))
            + y[b][k] * (2.0 * tm - ta - tc) / ((tb - ta) * (tb - tc))
            + y[c][k] * (2.0 * tm - ta - tb) / ((tc - ta) * (tc - tb))
    };
    for (i, slope) in out.iter_mut().enumerate() {
        let (a, m) = match i {
            0 => (0, 0),
            _ if i == n - 1 => (n - 3, n - 1),
            _ => (i - 1, i),
        };
        for (k, s) in slope.iter_mut().enumerate() {
            *s = three(a, a + 1, a + 2, m, k);
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SessionRequest {
    Observe { times: Vec<f64> },
    FullTable,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SessionResponse {
    Rows {
        rows: Vec<ObservationRow>,
    },
    /// Full tables are logged by size only.
    Table {
        row_count: usize,
    },
    Error {
        code: String,
        detail: String,
    },
}

/// One line of a session transcript.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TranscriptEntry {
    pub seq: u64,
    pub request: SessionRequest,
    pub response: SessionResponse,
    pub used: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub remaining: Option<usize>,
}

/// Budget-accounted window onto one trajectory.
#[derive(Debug)]
pub struct ObservationSession {
    table: Arc<SessionTable>,
    protocol: Protocol,
    per_call_cap: usize,
    used: usize,
    collected: Vec<ObservationRow>,
    transcript: Vec<TranscriptEntry>,
}

/// Opens a session on a library scenario.
pub fn create_session(
    library: &ScenarioLibrary,
    scenario_id: &str,
    protocol: Protocol,
) -> Result<ObservationSession, EnvError> {
    let scenario = library.get(scenario_id).map_err(|_| EnvError::NotFound(scenario_id.into()))?;
    let traj = library.trajectory(scenario_id).map_err(|e| match e {
        LibraryError::NotFound(id) => EnvError::NotFound(id),
        other => EnvError::Unavailable(other.to_string()),
    })?;
    let table = Arc::new(SessionTable::new(&traj, &scenario.unit_system));
    Ok(ObservationSession::new(table, protocol))
}

impl ObservationSession {
    pub fn new(table: Arc<SessionTable>, protocol: Protocol) -> Self {
        Self { table, protocol, per_call_cap: PER_CALL_CAP, used: 0, collected: Vec::new(), transcript: Vec::new() }
    }

    pub fn scenario_id(&self) -> &str {
        &self.table.scenario_id
    }

    pub fn units(&self) -> &UnitSystem {
        &self.table.units
    }

    pub fn protocol(&self) -> Protocol {
        self.protocol
    }

    pub fn per_call_cap(&self) -> usize {
        self.per_call_cap
    }

    /// Observation window `[0, end]` in scenario time units.
    pub fn window(&self) -> (f64, f64) {
        (0.0, self.table.end_time())
    }

    pub fn used(&self) -> usize {
        self.used
    }

    pub fn remaining(&self) -> Option<usize> {
        match self.protocol {
            Protocol::BudgetObs { budget } => Some(budget - self.used),
            Protocol::FullObs => None,
        }
    }

    /// Every row returned so far, in delivery order.
    pub fn collected(&self) -> &[ObservationRow] {
        &self.collected
    }

    pub fn transcript(&self) -> &[TranscriptEntry] {
        &self.transcript
    }

    fn check_observe(&self, times: &[f64]) -> Result<(), EnvError> {
        let Protocol::BudgetObs { budget } = self.protocol else {
            return Err(EnvError::Protocol("observe is not available under full-obs; use full_table".into()));
        };
        if times.is_empty() {
            return Err(EnvError::Empty);
        }
        if times.len() > self.per_call_cap {
            return Err(EnvError::Cap { requested: times.len(), cap: self.per_call_cap });
        }
        let end = self.table.end_time();
        if let Some(&bad) = times.iter().find(|&&t| !(t >= 0.0 && t <= end)) {
            return Err(EnvError::Window { time: bad, end });
        }
        let remaining = budget - self.used;
        if times.len() > remaining {
            return Err(EnvError::Exhausted { requested: times.len(), remaining });
        }
        Ok(())
    }

    fn log(&mut self, request: SessionRequest, response: SessionResponse) {
        let seq = self.transcript.len() as u64;
        let (used, remaining) = (self.used, self.remaining());
        self.transcript.push(TranscriptEntry { seq, request, response, used, remaining });
    }

    fn log_error(&mut self, request: SessionRequest, e: &EnvError) {
        self.log(request, SessionResponse::Error { code: e.code().into(), detail: e.to_string() });
    }

    /// Observes the system at `times` (scenario units). Rejected calls
    /// charge nothing; each accepted time, duplicates included, costs one.
    pub fn observe(&mut self, times: &[f64]) -> Result<Vec<ObservationRow>, EnvError> {
        let request = SessionRequest::Observe { times: times.to_vec() };
        if let Err(e) = self.check_observe(times) {
            self.log_error(request, &e);
            return Err(e);
        }
        let rows: Vec<ObservationRow> = times.iter().map(|&t| self.table.interpolate(t)).collect();
        self.used += rows.len();
        self.collected.extend_from_slice(&rows);
        self.log(request, SessionResponse::Rows { rows: rows.clone() });
        Ok(rows)
    }

    /// Every dense sample; full-obs only.
    pub fn full_table(&mut self) -> Result<Vec<ObservationRow>, EnvError> {
        if let Protocol::BudgetObs { .. } = self.protocol {
            let e = EnvError::Protocol("full_table is not available under budget-obs; use observe".into());
            self.log_error(SessionRequest::FullTable, &e);
            return Err(e);
        }
        let rows = self.table.rows();
        self.log(SessionRequest::FullTable, SessionResponse::Table { row_count: rows.len() });
        Ok(rows)
    }

    /// Writes the transcript as JSON lines.
    pub fn write_transcript<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        for e in &self.transcript {
            serde_json::to_writer(&mut out, e)?;
            out.write_all(b"\n")?;
        }
        Ok(())
    }
}

/// Re-issues a transcript's requests against a fresh session.
pub fn replay(session: &mut ObservationSession, entries: &[TranscriptEntry]) -> Vec<TranscriptEntry> {
    for e in entries {
        let _ = match &e.request {
            SessionRequest::Observe { times } => session.observe(times).map(|_| ()),
            SessionRequest::FullTable => session.full_table().map(|_| ()),
        };
    }
    session.transcript().to_vec()
}
