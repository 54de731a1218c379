//! Task catalog: task definitions, scenario pairing, ground truths and prompts.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::env::{Protocol, DEFAULT_BUDGET, PER_CALL_CAP};
use crate::library::{LibraryError, ScenarioLibrary};
use crate::sim::{orbital_elements, total_energy, DenseTrajectory, ForceLaw, Scenario, SimError, Vector3};
use crate::units::{unit_word, Quantity, UnitSystem, G_SI};

#[derive(Debug, Error)]
pub enum TaskError {
    #[error("task `{task}` does not apply to scenario `{scenario}`: {reason}")]
    NotApplicable { task: String, scenario: String, reason: String },
    #[error("unknown task `{0}`")]
    UnknownTask(String),
    #[error("duplicate task id `{0}`")]
    DuplicateTask(String),
    #[error("threshold {0}% outside [5, 70]")]
    Threshold(f64),
    #[error("manifest: {0}")]
    Manifest(String),
    #[error(transparent)]
    Library(#[from] LibraryError),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// The quantities expert solvers know how to estimate. Every task binds to
/// exactly one.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskKind {
    Period,
    TotalMass,
    Star1Mass,
    Star2Mass,
    TotalEnergy,
    Eccentricity,
    Periastron,
    Apoastron,
    MaxSpeedStar1,
    MeanComDistanceStar1,
    FractionAccelBelowMean,
    TimeToTravel20Pct,
    DragTimescale,
    GravityExponent,
    IsBound,
}

impl TaskKind {
    pub const ALL: [TaskKind; 15] = [
        TaskKind::Period,
        TaskKind::TotalMass,
        TaskKind::Star1Mass,
        TaskKind::Star2Mass,
        TaskKind::TotalEnergy,
        TaskKind::Eccentricity,
        TaskKind::Periastron,
        TaskKind::Apoastron,
        TaskKind::MaxSpeedStar1,
        TaskKind::MeanComDistanceStar1,
        TaskKind::FractionAccelBelowMean,
        TaskKind::TimeToTravel20Pct,
        TaskKind::DragTimescale,
        TaskKind::GravityExponent,
        TaskKind::IsBound,
    ];

    pub fn id(self) -> &'static str {
        match self {
            TaskKind::Period => "period",
            TaskKind::TotalMass => "total_mass",
            TaskKind::Star1Mass => "star1_mass",
            TaskKind::Star2Mass => "star2_mass",
            TaskKind::TotalEnergy => "total_energy",
            TaskKind::Eccentricity => "eccentricity",
            TaskKind::Periastron => "periastron",
            TaskKind::Apoastron => "apoastron",
            TaskKind::MaxSpeedStar1 => "max_speed_star1",
            TaskKind::MeanComDistanceStar1 => "mean_com_distance_star1",
            TaskKind::FractionAccelBelowMean => "fraction_accel_below_mean",
            TaskKind::TimeToTravel20Pct => "time_to_travel_20pct",
            TaskKind::DragTimescale => "drag_timescale",
            TaskKind::GravityExponent => "gravity_exponent",
            TaskKind::IsBound => "is_bound",
        }
    }

    pub fn from_id(id: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|k| k.id() == id)
    }

    /// `None` for true/false answers.
    pub fn quantity(self) -> Option<Quantity> {
        Some(match self {
            TaskKind::Period | TaskKind::TimeToTravel20Pct | TaskKind::DragTimescale => Quantity::Time,
            TaskKind::TotalMass | TaskKind::Star1Mass | TaskKind::Star2Mass => Quantity::Mass,
            TaskKind::TotalEnergy => Quantity::Energy,
            TaskKind::Periastron | TaskKind::Apoastron | TaskKind::MeanComDistanceStar1 => Quantity::Length,
            TaskKind::MaxSpeedStar1 => Quantity::Speed,
            TaskKind::Eccentricity | TaskKind::FractionAccelBelowMean | TaskKind::GravityExponent => {
                Quantity::Dimensionless
            }
            TaskKind::IsBound => return None,
        })
    }

    /// Problem description; `{unit}` and `{unit_name}` are substituted.
    pub fn default_prompt(self) -> &'static str {
        match self {
            TaskKind::Period => "Determine the orbital period of the system in {unit_name}.",
            TaskKind::TotalMass => "Determine the total mass of the system in {unit_name}.",
            TaskKind::Star1Mass => "Determine the mass of star1 in {unit_name}.",
            TaskKind::Star2Mass => "Determine the mass of star2 in {unit_name}.",
            TaskKind::TotalEnergy => "Determine the total energy (K + U) for the system in {unit_name}.",
            TaskKind::Eccentricity => "Determine the eccentricity of the system's orbit.",
            TaskKind::Periastron => "Determine the periastron of the system's orbit.",
            TaskKind::Apoastron => "Determine the apoastron of the system's orbit.",
            TaskKind::MaxSpeedStar1 => "Determine the maximum speed reached by star1 in {unit_name}.",
            TaskKind::MeanComDistanceStar1 => {
                "Determine the average distance of star1 from the system's center of mass in {unit_name}."
            }
            TaskKind::FractionAccelBelowMean => {
                "Determine the fraction of the time during which the magnitude of star1's acceleration is below its mean value."
            }
            TaskKind::TimeToTravel20Pct => {
                "Determine how long it takes star1, starting at the first observation time, to travel 20% of its orbital path around the center of mass, in {unit_name}."
            }
            TaskKind::DragTimescale => {
                "Each star experiences a linear drag acceleration -v/tau in addition to gravity. Determine the drag timescale tau in {unit_name}."
            }
            TaskKind::GravityExponent => {
                "The gravitational force between the stars is proportional to r^-(2+alpha) rather than r^-2. Determine alpha."
            }
            TaskKind::IsBound => "Determine whether the system is gravitationally bound.",
        }
    }

    /// Tolerance used instead of a percentage when the truth is near zero.
    pub fn default_abs_tolerance(self) -> Option<f64> {
        match self {
            TaskKind::Eccentricity => Some(0.01),
            TaskKind::FractionAccelBelowMean => Some(0.02),
            _ => None,
        }
    }
}

impl fmt::Display for TaskKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.id())
    }
}

/// A submitted or true answer.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Answer {
    Bool(bool),
    Number(f64),
}

impl Answer {
    pub fn as_f64(&self) -> Option<f64> {
        match *self {
            Answer::Number(x) => Some(x),
            Answer::Bool(_) => None,
        }
    }
}

impl fmt::Display for Answer {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Answer::Bool(b) => write!(f, "{b}"),
            Answer::Number(x) => write!(f, "{x:e}"),
        }
    }
}

fn default_threshold() -> f64 {
    5.0
}

/// A task definition, possibly user-supplied.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskSpec {
    pub id: String,
    /// Expert solver and ground-truth routine this task uses.
    pub binding: TaskKind,
    pub prompt: String,
    #[serde(default = "default_threshold")]
    pub threshold_pct: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub abs_tolerance: Option<f64>,
}

impl TaskSpec {
    pub fn builtin(kind: TaskKind) -> Self {
        Self {
            id: kind.id().into(),
            binding: kind,
            prompt: kind.default_prompt().into(),
            threshold_pct: default_threshold(),
            abs_tolerance: kind.default_abs_tolerance(),
        }
    }

    pub fn is_boolean(&self) -> bool {
        self.binding.quantity().is_none()
    }

    pub fn validate(&self) -> Result<(), TaskError> {
        if !(5.0..=70.0).contains(&self.threshold_pct) {
            return Err(TaskError::Threshold(self.threshold_pct));
        }
        if self.id.trim().is_empty() {
            return Err(TaskError::Manifest("task id is empty".into()));
        }
        Ok(())
    }
}

/// The fifteen shipped tasks.
pub fn builtin_tasks() -> Vec<TaskSpec> {
    TaskKind::ALL.into_iter().map(TaskSpec::builtin).collect()
}

/// Which family of dynamics a scenario belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScenarioClass {
    /// Bound, Newtonian, several orbits.
    Keplerian,
    /// Bound, Newtonian, a single orbit.
    SingleOrbit,
    Unbound,
    ModifiedGravity,
    Drag,
}

impl ScenarioClass {
    pub fn of(s: &Scenario) -> Self {
        match s.force_law {
            ForceLaw::LinearDrag { .. } => ScenarioClass::Drag,
            ForceLaw::ModifiedGravity { alpha, .. } if alpha != 0.0 => ScenarioClass::ModifiedGravity,
            _ if !s.is_bound() => ScenarioClass::Unbound,
            _ if s.n_orbits < 2 => ScenarioClass::SingleOrbit,
            _ => ScenarioClass::Keplerian,
        }
    }
}

/// `Ok` when `kind` is well posed for `s`, else the reason it is excluded.
pub fn applicability(kind: TaskKind, s: &Scenario) -> Result<(), String> {
    use ScenarioClass::*;
    use TaskKind::*;
    let class = ScenarioClass::of(s);
    let ok = match kind {
        IsBound => matches!(class, Keplerian | SingleOrbit | Unbound),
        Periastron | MaxSpeedStar1 => true,
        Apoastron => matches!(class, Keplerian | SingleOrbit | ModifiedGravity),
        Eccentricity => matches!(class, Keplerian | SingleOrbit),
        DragTimescale => class == Drag,
        GravityExponent => class == ModifiedGravity,
        Period
        | TotalMass
        | Star1Mass
        | Star2Mass
        | TotalEnergy
        | MeanComDistanceStar1
        | FractionAccelBelowMean
        | TimeToTravel20Pct => class == Keplerian,
    };
    if ok {
        return Ok(());
    }
    Err(match (kind, class) {
        (DragTimescale, _) => "no drag force acts in this scenario".into(),
        (GravityExponent, _) => "the force law is inverse-square".into(),
        (_, Unbound) => "the orbit is unbound".into(),
        (_, SingleOrbit) => "a single orbit does not constrain this quantity robustly".into(),
        (_, Drag) => "the orbit is not stationary under drag".into(),
        (_, ModifiedGravity) => "the orbit is not Keplerian under modified gravity".into(),
        _ => "not applicable".into(),
    })
}

fn trapezoid_mean(t: &[f64], y: &[f64]) -> f64 {
    let mut acc = 0.0;
    for i in 1..t.len() {
        acc += 0.5 * (y[i] + y[i - 1]) * (t[i] - t[i - 1]);
    }
    acc / (t[t.len() - 1] - t[0])
}

/// Largest sampled value of `y`, refined by a parabola through its neighbours.
pub(crate) fn refined_max(t: &[f64], y: &[f64]) -> f64 {
    let (i, &m) = y.iter().enumerate().fold((0, &f64::NEG_INFINITY), |a, b| if b.1 > a.1 { b } else { a });
    if i == 0 || i + 1 == y.len() {
        return m;
    }
    crate::sim::refine_extremum([t[i - 1], t[i], t[i + 1]], [y[i - 1], y[i], y[i + 1]]).1.max(m)
}

/// Arc length of a path from per-sample speeds, cumulative from the start.
fn cumulative_arc(t: &[f64], speed: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(t.len());
    let mut acc = 0.0;
    out.push(0.0);
    for i in 1..t.len() {
        acc += 0.5 * (speed[i] + speed[i - 1]) * (t[i] - t[i - 1]);
        out.push(acc);
    }
    out
}

/// Time at which a non-decreasing series first reaches `target`.
pub(crate) fn crossing_time(t: &[f64], y: &[f64], target: f64) -> Option<f64> {
    let j = y.iter().position(|&v| v >= target)?;
    if j == 0 {
        return Some(t[0]);
    }
    let f = (target - y[j - 1]) / (y[j] - y[j - 1]);
    Some(t[j - 1] + f * (t[j] - t[j - 1]))
}

fn com_frame(traj: &DenseTrajectory) -> (Vec<Vector3>, Vec<Vector3>) {
    let [m1, m2] = traj.metadata.masses;
    let m = m1 + m2;
    let pos = traj.star1.iter().zip(&traj.star2).map(|(a, b)| (*a - *b) * (m2 / m)).collect();
    let vel = traj.star1_velocity.iter().zip(&traj.star2_velocity).map(|(a, b)| (*a - *b) * (m2 / m)).collect();
    (pos, vel)
}

/// Ground truth in SI, from inputs where direct and the dense trajectory otherwise.
pub fn ground_truth_si(kind: TaskKind, s: &Scenario, traj: &DenseTrajectory) -> Result<Answer, TaskError> {
    applicability(kind, s).map_err(|reason| TaskError::NotApplicable {
        task: kind.id().into(),
        scenario: s.id.clone(),
        reason,
    })?;
    let [m1, m2] = s.masses();
    let seps = traj.separations();
    let num = |x: f64| Ok(Answer::Number(x));
    match kind {
        TaskKind::TotalMass => num(m1 + m2),
        TaskKind::Star1Mass => num(m1),
        TaskKind::Star2Mass => num(m2),
        TaskKind::IsBound => Ok(Answer::Bool(s.is_bound())),
        TaskKind::DragTimescale => match s.force_law {
            ForceLaw::LinearDrag { tau } => num(tau),
            _ => unreachable!("checked by applicability"),
        },
        TaskKind::GravityExponent => match s.force_law {
            ForceLaw::ModifiedGravity { alpha, .. } => num(alpha),
            _ => unreachable!("checked by applicability"),
        },
        TaskKind::Periastron => num(crate::sim::separation_range(&traj.times, &seps).0),
        TaskKind::Apoastron => num(crate::sim::separation_range(&traj.times, &seps).1),
        TaskKind::Period => num(orbital_elements(traj, [m1, m2])?.period),
        TaskKind::Eccentricity => num(orbital_elements(traj, [m1, m2])?.eccentricity),
        TaskKind::TotalEnergy => num(total_energy(&s.initial_state(), &s.force_law, G_SI)?),
        TaskKind::MaxSpeedStar1 => {
            let speed: Vec<f64> = traj.star1_velocity.iter().map(|v| v.norm()).collect();
            num(refined_max(&traj.times, &speed))
        }
        TaskKind::MeanComDistanceStar1 => {
            let (pos, _) = com_frame(traj);
            let d: Vec<f64> = pos.iter().map(|p| p.norm()).collect();
            num(trapezoid_mean(&traj.times, &d))
        }
        TaskKind::FractionAccelBelowMean => {
            let acc: Vec<f64> = seps.iter().map(|r| G_SI * m2 / (r * r)).collect();
            let mean = trapezoid_mean(&traj.times, &acc);
            num(fraction_below(&traj.times, &acc, mean, 1e-9))
        }
        TaskKind::TimeToTravel20Pct => {
            let period = orbital_elements(traj, [m1, m2])?.period;
            let (_, vel) = com_frame(traj);
            let speed: Vec<f64> = vel.iter().map(|v| v.norm()).collect();
            let arc = cumulative_arc(&traj.times, &speed);
            let one = crossing_time_inverse(&traj.times, &arc, period);
            let t = crossing_time(&traj.times, &arc, 0.2 * one)
                .ok_or_else(|| SimError::InsufficientCoverage("path shorter than 20% of an orbit".into()))?;
            num(t)
        }
    }
}

/// Value of a series at time `at` by linear interpolation.
fn crossing_time_inverse(t: &[f64], y: &[f64], at: f64) -> f64 {
    let j = t.partition_point(|&x| x < at).clamp(1, t.len() - 1);
    let f = (at - t[j - 1]) / (t[j] - t[j - 1]);
    y[j - 1] + f * (y[j] - y[j - 1])
}

/// Fraction of time during which `y < mean`, with a relative guard so that
/// values equal to the mean up to round-off count as not below.
pub(crate) fn fraction_below(t: &[f64], y: &[f64], mean: f64, guard: f64) -> f64 {
    let cut = mean * (1.0 - guard);
    let mut below = 0.0;
    for i in 1..t.len() {
        let dt = t[i] - t[i - 1];
        let (a, b) = (y[i - 1] < cut, y[i] < cut);
        below += dt * (a as u8 as f64 + b as u8 as f64) * 0.5;
    }
    below / (t[t.len() - 1] - t[0])
}

/// A task paired with a scenario.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskInstance {
    /// `task@scenario`
    pub id: String,
    pub task: TaskSpec,
    pub scenario_id: String,
    /// In `units`.
    pub ground_truth: Answer,
    /// Unit string of the answer in the scenario's unit system; empty for
    /// dimensionless and boolean answers.
    pub units: String,
    pub unit_system: UnitSystem,
    /// End of the observation window in scenario time units.
    pub window_end: f64,
}

impl TaskInstance {
    pub fn quantity(&self) -> Option<Quantity> {
        self.task.binding.quantity()
    }

    /// Ground truth converted to SI.
    pub fn truth_si(&self) -> Answer {
        match (self.ground_truth, self.quantity()) {
            (Answer::Number(x), Some(q)) => Answer::Number(x * self.unit_system.si_factor(q)),
            (a, _) => a,
        }
    }
}

/// Why a pairing was left out of the catalog.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Exclusion {
    pub task: String,
    pub scenario: String,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Catalog {
    pub instances: Vec<TaskInstance>,
    pub excluded: Vec<Exclusion>,
}

/// Builds every applicable pairing of `tasks` with the library's scenarios,
/// in task order then scenario order.
pub fn build_catalog(library: &ScenarioLibrary, tasks: &[TaskSpec]) -> Result<Catalog, TaskError> {
    let mut seen = std::collections::HashSet::new();
    for t in tasks {
        t.validate()?;
        if !seen.insert(t.id.as_str()) {
            return Err(TaskError::DuplicateTask(t.id.clone()));
        }
    }
    library.simulate_all()?;
    let mut instances = Vec::new();
    let mut excluded = Vec::new();
    for task in tasks {
        for s in library.scenarios() {
            if let Err(reason) = applicability(task.binding, s) {
                excluded.push(Exclusion { task: task.id.clone(), scenario: s.id.clone(), reason });
                continue;
            }
            let traj = library.trajectory(&s.id)?;
            let truth = ground_truth_si(task.binding, s, &traj)?;
            instances.push(make_instance(task, s, truth, traj.end_time()));
        }
    }
    Ok(Catalog { instances, excluded })
}

fn make_instance(task: &TaskSpec, s: &Scenario, truth_si: Answer, end_si: f64) -> TaskInstance {
    let u = &s.unit_system;
    let (truth, units) = match (truth_si, task.binding.quantity()) {
        (Answer::Number(x), Some(q)) => (Answer::Number(x / u.si_factor(q)), u.unit_for(q)),
        (a, _) => (a, String::new()),
    };
    TaskInstance {
        id: format!("{}@{}", task.id, s.id),
        task: task.clone(),
        scenario_id: s.id.clone(),
        ground_truth: truth,
        units,
        unit_system: u.clone(),
        window_end: end_si / u.time_factor(),
    }
}

impl Catalog {
    pub fn len(&self) -> usize {
        self.instances.len()
    }

    pub fn is_empty(&self) -> bool {
        self.instances.is_empty()
    }

    pub fn get(&self, id: &str) -> Option<&TaskInstance> {
        self.instances.iter().find(|i| i.id == id)
    }

    /// Instances whose id, binding or scenario id contains `pattern`.
    pub fn filter(&self, pattern: &str) -> Vec<&TaskInstance> {
        self.instances
            .iter()
            .filter(|i| {
                i.id.contains(pattern) || i.scenario_id.contains(pattern) || i.task.binding.id().contains(pattern)
            })
            .collect()
    }

    /// Replaces task thresholds by id, clamping into [5, 70].
    pub fn apply_thresholds(&mut self, thresholds: &BTreeMap<String, f64>) {
        for inst in &mut self.instances {
            if let Some(&t) = thresholds.get(&inst.task.id) {
                inst.task.threshold_pct = t.clamp(5.0, 70.0);
            }
        }
    }

    /// Structured-text manifest without ground truths.
    pub fn manifest(&self) -> Result<String, TaskError> {
        #[derive(Serialize)]
        struct Row<'a> {
            id: &'a str,
            task: &'a str,
            binding: TaskKind,
            scenario: &'a str,
            units: &'a str,
            threshold_pct: f64,
            window_end: f64,
        }
        #[derive(Serialize)]
        struct Manifest<'a> {
            instance: Vec<Row<'a>>,
            excluded: &'a [Exclusion],
        }
        let m = Manifest {
            instance: self
                .instances
                .iter()
                .map(|i| Row {
                    id: &i.id,
                    task: &i.task.id,
                    binding: i.task.binding,
                    scenario: &i.scenario_id,
                    units: &i.units,
                    threshold_pct: i.task.threshold_pct,
                    window_end: i.window_end,
                })
                .collect(),
            excluded: &self.excluded,
        };
        toml::to_string_pretty(&m).map_err(|e| TaskError::Manifest(e.to_string()))
    }
}

/// User task definitions and calibrated thresholds, read from TOML:
///
/// ```toml
/// [[task]]
/// id = "orbit_time"
/// binding = "period"
/// prompt = "How long is one orbit, in {unit_name}?"
///
/// [thresholds]
/// period = 5.0
/// ```
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TaskManifest {
    #[serde(default, rename = "task")]
    pub tasks: Vec<TaskSpec>,
    #[serde(default)]
    pub thresholds: BTreeMap<String, f64>,
    /// Drop the built-in tasks and use only `tasks`.
    #[serde(default)]
    pub replace_builtin: bool,
}

impl TaskManifest {
    pub fn from_toml_str(text: &str) -> Result<Self, TaskError> {
        toml::from_str(text).map_err(|e| TaskError::Manifest(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self, TaskError> {
        Self::from_toml_str(&std::fs::read_to_string(path)?)
    }

    /// Built-ins (unless replaced) followed by user tasks, thresholds applied.
    pub fn task_list(&self) -> Result<Vec<TaskSpec>, TaskError> {
        let mut out = if self.replace_builtin { Vec::new() } else { builtin_tasks() };
        out.extend(self.tasks.iter().cloned());
        for t in &mut out {
            if let Some(&th) = self.thresholds.get(&t.id) {
                t.threshold_pct = th.clamp(5.0, 70.0);
            }
            t.validate()?;
        }
        Ok(out)
    }
}

/// Formats like Python's `%.{digits}e`, rounding the mantissa down so the
/// printed bound never exceeds `x`.
pub fn python_sci_floor(x: f64, digits: usize) -> String {
    if x == 0.0 || !x.is_finite() {
        return format!("{:.*e}", digits, x).replace('e', "e+0");
    }
    let mut exp = x.abs().log10().floor() as i32;
    let scale = 10f64.powi(digits as i32);
    let mut mant = (x.abs() / 10f64.powi(exp) * scale * (1.0 + 1e-15)).floor() / scale;
    if mant >= 10.0 {
        mant /= 10.0;
        exp += 1;
    } else if mant < 1.0 {
        mant *= 10.0;
        exp -= 1;
    }
    let sign = if x < 0.0 { "-" } else { "" };
    let esign = if exp < 0 { '-' } else { '+' };
    format!("{sign}{mant:.digits$}e{esign}{:02}", exp.abs())
}

/// The agent-facing prompt for `instance` under `protocol`.
pub fn render_prompt(instance: &TaskInstance, protocol: Protocol) -> String {
    let u = &instance.unit_system;
    let time_name = unit_word(&u.time);
    let length_name = unit_word(&u.length);
    let description =
        instance.task.prompt.replace("{unit_name}", &unit_word(&instance.units)).replace("{unit}", &instance.units);
    let units_line = match instance.quantity() {
        None => "You must provide your answer as a boolean: true or false.".to_string(),
        Some(Quantity::Dimensionless) => "You must provide your answer as a dimensionless number.".to_string(),
        Some(_) => format!("You must provide your answer in units of {}.", instance.units),
    };
    let mut p = format!(
        "You are tasked with solving the following physics problem related to a binary star system. \
You are provided observations of each star's position over time, (t,x,y,z), in units of {time_name} and {length_name}.\n\n\
### Problem Description\n{description}\n{units_line}\n\n\
### Additional Instructions\nTo complete this task, you have access to the following tools and data:\n"
    );
    match protocol {
        Protocol::BudgetObs { budget } => {
            let end = python_sci_floor(instance.window_end, 2);
            p.push_str(&format!(
                "1. An observational tool called `Observe` that allows you observe the system at\nspecific times of your choosing.\n\
2. A code interpreter that can execute Python code.\n\n\
When using `Observe`:\n\
1. The `times_requested` parameter should be a list that can contain any values in the time window [0.0, {end}] {time_name}. \
You cannot request negative times. The upper limit for the time window was chosen to guarantee that the problem is solvable \
with an appropriate sampling of observations using the total observational budget.\n\
2. You can observe the system at any time within the time window, even if it is in the past compared to the last observation.\n\
3. You can observe the system up to a total of {budget} times and you can observe up to {PER_CALL_CAP} times per observational request \
which is the maximum length of the `times_requested` list.\n\
4. After each observation, the dataframe `row_wise_results.df` will be updated. It contains columns: time, star1_x, star1_y, star1_z, \
star2_x, star2_y, star2_z. You can access it using the code interpreter tool. For example, to access the first five rows, \
print(row_wise_results.df.head(n=5))\n\n"
            ));
        }
        Protocol::FullObs => {
            p.push_str(
                "1. A DataFrame `df` containing columns: time, star1_x, star1_y, star1_z, star2_x, star2_y, star2_z.\n\
2. A code interpreter with `df` pre-loaded that can execute Python code.\n\n",
            );
        }
    }
    p.push_str(
        "When using the code interpreter:\n1. Always use print() to display results.\n\
2. Do not use read_csv or attempt to load the DataFrame, as it is already pre-loaded\n\
Important reminder: Repeated tool access is enabled until you have found the answer and have submitted it with the `submit_answer` tool.",
    );
    p
}

/// Budget protocol with the standard budget.
pub fn standard_budget() -> Protocol {
    Protocol::budget(DEFAULT_BUDGET)
}
