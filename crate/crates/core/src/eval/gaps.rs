use std::collections::BTreeMap;
use std::fmt;
use std::io::Write;
use std::path::Path;
use std::str::FromStr;

use log::warn;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::EvalError;
use crate::env::{create_session, Protocol};
use crate::library::ScenarioLibrary;
use crate::solvers::{solve_full, solve_uniform, Estimate, SolverError};
use crate::tasks::{Answer, Catalog, TaskInstance, TaskSpec};

/// Uniform sample count used to derive thresholds.
pub const THRESHOLD_SAMPLES: usize = 100;
pub const MIN_THRESHOLD: f64 = 5.0;
pub const MAX_THRESHOLD: f64 = 70.0;

/// How many observations a baseline run gets.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(into = "String", try_from = "String")]
pub enum SampleCount {
    Uniform(usize),
    Full,
}

impl fmt::Display for SampleCount {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SampleCount::Uniform(n) => write!(f, "{n}"),
            SampleCount::Full => f.write_str("full"),
        }
    }
}

impl FromStr for SampleCount {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s.trim() {
            "full" => Ok(SampleCount::Full),
            n => match n.parse::<usize>() {
                Ok(k) if k >= 3 => Ok(SampleCount::Uniform(k)),
                _ => Err(format!("expected `full` or a count >= 3, got `{s}`")),
            },
        }
    }
}

impl From<SampleCount> for String {
    fn from(s: SampleCount) -> String {
        s.to_string()
    }
}

impl TryFrom<String> for SampleCount {
    type Error = String;

    fn try_from(s: String) -> Result<Self, String> {
        s.parse()
    }
}

/// Baseline-vs-full discrepancy for one instance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairGap {
    pub instance: String,
    pub task: String,
    pub scenario: String,
    pub samples: SampleCount,
    /// Percent; absent when the pair is excluded.
    pub gap_pct: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

fn full_estimate(library: &ScenarioLibrary, instance: &TaskInstance) -> Result<Estimate, SolverError> {
    let mut s = create_session(library, &instance.scenario_id, Protocol::FullObs)?;
    let rows = s.full_table()?;
    solve_full(instance.task.binding, &rows, &s.units().clone())
}

/// Gap between the expert pipeline on `samples` uniform observations and on
/// the full table.
pub fn pair_gap(library: &ScenarioLibrary, instance: &TaskInstance, samples: SampleCount) -> PairGap {
    let reference = full_estimate(library, instance).map(|e| e.value).map_err(|e| e.to_string());
    gap_against(library, instance, samples, &reference)
}

fn gap_against(
    library: &ScenarioLibrary,
    instance: &TaskInstance,
    samples: SampleCount,
    reference: &Result<Answer, String>,
) -> PairGap {
    let mut out = PairGap {
        instance: instance.id.clone(),
        task: instance.task.id.clone(),
        scenario: instance.scenario_id.clone(),
        samples,
        gap_pct: None,
        note: None,
    };
    let reference = match reference {
        Ok(v) => *v,
        Err(e) => {
            out.note = Some(format!("full-data solver failed: {e}"));
            return out;
        }
    };
    let estimate = match samples {
        // self-comparison, including zero references
        SampleCount::Full => {
            out.gap_pct = Some(0.0);
            return out;
        }
        SampleCount::Uniform(n) => create_session(library, &instance.scenario_id, Protocol::budget(n))
            .map_err(SolverError::from)
            .and_then(|mut s| solve_uniform(&mut s, instance.task.binding, n))
            .map(|e| e.value),
    };
    let estimate = match estimate {
        Ok(v) => v,
        Err(e) => {
            out.note = Some(format!("baseline solver failed: {e}"));
            return out;
        }
    };
    match (reference, estimate) {
        (Answer::Bool(a), Answer::Bool(b)) => out.gap_pct = Some(if a == b { 0.0 } else { 100.0 }),
        (Answer::Number(r), Answer::Number(v)) => {
            let tiny = instance.task.abs_tolerance.unwrap_or(0.0);
            if r == 0.0 || r.abs() <= tiny {
                out.note = Some("reference is zero; percentage gap undefined".into());
            } else {
                out.gap_pct = Some(100.0 * (v - r).abs() / r.abs());
            }
        }
        _ => out.note = Some("answer types differ".into()),
    }
    out
}

/// Per-task threshold derivation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdResult {
    pub task: String,
    pub threshold_pct: f64,
    pub median_gap: Option<f64>,
    pub gaps: Vec<PairGap>,
    pub warnings: Vec<String>,
}

pub(crate) fn median(values: &mut [f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    values.sort_by(f64::total_cmp);
    let n = values.len();
    Some(if n % 2 == 1 { values[n / 2] } else { 0.5 * (values[n / 2 - 1] + values[n / 2]) })
}

fn threshold_from(task: &TaskSpec, gaps: Vec<PairGap>) -> ThresholdResult {
    let mut warnings = Vec::new();
    if task.is_boolean() {
        return ThresholdResult {
            task: task.id.clone(),
            threshold_pct: MIN_THRESHOLD,
            median_gap: None,
            gaps,
            warnings,
        };
    }
    for g in gaps.iter().filter(|g| g.gap_pct.is_none()) {
        let msg = format!("{} excluded: {}", g.instance, g.note.as_deref().unwrap_or("no gap"));
        warn!("{msg}");
        warnings.push(msg);
    }
    let mut values: Vec<f64> = gaps.iter().filter_map(|g| g.gap_pct).collect();
    let median_gap = median(&mut values);
    let threshold_pct = match median_gap {
        Some(m) => m.clamp(MIN_THRESHOLD, MAX_THRESHOLD),
        None => {
            warnings.push(format!("{}: no usable pairs, using the {MAX_THRESHOLD}% cap", task.id));
            MAX_THRESHOLD
        }
    };
    ThresholdResult { task: task.id.clone(), threshold_pct, median_gap, gaps, warnings }
}

/// Median uniform-100 gap over `instances`, clamped to [5, 70].
pub fn compute_threshold(task: &TaskSpec, library: &ScenarioLibrary, instances: &[&TaskInstance]) -> ThresholdResult {
    let gaps: Vec<PairGap> = instances
        .par_iter()
        .filter(|i| i.task.id == task.id)
        .map(|i| pair_gap(library, i, SampleCount::Uniform(THRESHOLD_SAMPLES)))
        .collect();
    threshold_from(task, gaps)
}

/// Thresholds for every task in the catalog.
pub fn derive_thresholds(library: &ScenarioLibrary, catalog: &Catalog) -> Vec<ThresholdResult> {
    let mut tasks: BTreeMap<String, TaskSpec> = BTreeMap::new();
    for i in &catalog.instances {
        tasks.entry(i.task.id.clone()).or_insert_with(|| i.task.clone());
    }
    let all: Vec<&TaskInstance> = catalog.instances.iter().collect();
    tasks.values().map(|t| compute_threshold(t, library, &all)).collect()
}

/// Baseline gaps for several sample counts plus the derived thresholds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GapReport {
    pub samples: Vec<SampleCount>,
    pub gaps: Vec<PairGap>,
    pub thresholds: BTreeMap<String, f64>,
    pub warnings: Vec<String>,
}

impl GapReport {
    /// Median gap per task for one sample count; excluded pairs are skipped.
    pub fn medians(&self, samples: SampleCount) -> BTreeMap<String, Option<f64>> {
        let mut by_task: BTreeMap<String, Vec<f64>> = BTreeMap::new();
        for g in self.gaps.iter().filter(|g| g.samples == samples) {
            let e = by_task.entry(g.task.clone()).or_default();
            e.extend(g.gap_pct);
        }
        by_task.into_iter().map(|(t, mut v)| (t, median(&mut v))).collect()
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("task,scenario,samples,gap_pct\n");
        for g in &self.gaps {
            let gap = g.gap_pct.map(|x| format!("{x:.6}")).unwrap_or_default();
            out.push_str(&format!("{},{},{},{}\n", g.task, g.scenario, g.samples, gap));
        }
        out
    }

    /// Fixed-width table of median gaps per task and the chosen thresholds.
    pub fn to_table(&self) -> String {
        let mut out = format!("{:<28}", "task");
        for s in &self.samples {
            out.push_str(&format!("{:>12}", format!("N={s}")));
        }
        out.push_str(&format!("{:>12}\n", "threshold"));
        let cols: Vec<BTreeMap<String, Option<f64>>> = self.samples.iter().map(|s| self.medians(*s)).collect();
        let tasks: Vec<&String> = self.thresholds.keys().collect();
        for t in tasks {
            out.push_str(&format!("{t:<28}"));
            for c in &cols {
                match c.get(t).copied().flatten() {
                    Some(v) => out.push_str(&format!("{:>11.2}%", v)),
                    None => out.push_str(&format!("{:>12}", "-")),
                }
            }
            out.push_str(&format!("{:>11.1}%\n", self.thresholds[t]));
        }
        out
    }

    /// Writes `gaps.csv`, `gaps.json`, `thresholds.toml` and `gaps.svg` into `dir`.
    pub fn write(&self, dir: &Path) -> Result<(), EvalError> {
        std::fs::create_dir_all(dir)?;
        std::fs::write(dir.join("gaps.csv"), self.to_csv())?;
        std::fs::write(dir.join("gaps.json"), serde_json::to_string_pretty(self)?)?;
        let mut f = std::fs::File::create(dir.join("thresholds.toml"))?;
        writeln!(f, "[thresholds]")?;
        for (t, v) in &self.thresholds {
            writeln!(f, "{t} = {v:.4}")?;
        }
        std::fs::write(dir.join("gaps.svg"), super::render_gap_plot(self))?;
        Ok(())
    }
}

/// Gap table over the whole catalog for each entry of `samples`. Thresholds
/// always come from the uniform-100 gaps, computed if not requested.
pub fn baseline_gap_report(library: &ScenarioLibrary, catalog: &Catalog, samples: &[SampleCount]) -> GapReport {
    let mut wanted: Vec<SampleCount> = samples.to_vec();
    wanted.dedup();
    let thr = SampleCount::Uniform(THRESHOLD_SAMPLES);
    let mut jobs: Vec<SampleCount> = wanted.clone();
    if !jobs.contains(&thr) {
        jobs.push(thr);
    }
    let references: Vec<Result<Answer, String>> = catalog
        .instances
        .par_iter()
        .map(|i| full_estimate(library, i).map(|e| e.value).map_err(|e| e.to_string()))
        .collect();
    let pairs: Vec<(SampleCount, usize)> =
        jobs.iter().flat_map(|s| (0..catalog.instances.len()).map(move |k| (*s, k))).collect();
    let all: Vec<PairGap> =
        pairs.par_iter().map(|&(s, k)| gap_against(library, &catalog.instances[k], s, &references[k])).collect();

    let mut thresholds = BTreeMap::new();
    let mut warnings = Vec::new();
    let mut seen = BTreeMap::new();
    for i in &catalog.instances {
        seen.entry(i.task.id.clone()).or_insert_with(|| i.task.clone());
    }
    for (id, task) in seen {
        let gaps: Vec<PairGap> = all.iter().filter(|g| g.samples == thr && g.task == id).cloned().collect();
        let r = threshold_from(&task, gaps);
        thresholds.insert(id, r.threshold_pct);
        warnings.extend(r.warnings);
    }
    let gaps = all.into_iter().filter(|g| wanted.contains(&g.samples)).collect();
    GapReport { samples: wanted, gaps, thresholds, warnings }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sample_count_round_trips() {
        assert_eq!("full".parse::<SampleCount>().unwrap(), SampleCount::Full);
        assert_eq!("50".parse::<SampleCount>().unwrap(), SampleCount::Uniform(50));
        assert!("2".parse::<SampleCount>().is_err());
        let j = serde_json::to_string(&SampleCount::Uniform(10)).unwrap();
        assert_eq!(j, "\"10\"");
    }

    #[test]
    fn median_even_and_odd() {
        assert_eq!(median(&mut [3.0, 1.0, 2.0]), Some(2.0));
        assert_eq!(median(&mut [4.0, 1.0, 2.0, 3.0]), Some(2.5));
        assert_eq!(median(&mut []), None);
    }

    #[test]
    fn threshold_clamps_and_caps() {
        let spec = TaskSpec::builtin(crate::tasks::TaskKind::Period);
        let gap = |g: Option<f64>| PairGap {
            instance: "x".into(),
            task: spec.id.clone(),
            scenario: "s".into(),
            samples: SampleCount::Uniform(100),
            gap_pct: g,
            note: None,
        };
        assert_eq!(threshold_from(&spec, vec![gap(Some(0.1)), gap(Some(0.3))]).threshold_pct, 5.0);
        assert_eq!(threshold_from(&spec, vec![gap(Some(800.0)), gap(Some(2000.0))]).threshold_pct, 70.0);
        let r = threshold_from(&spec, vec![gap(Some(20.0)), gap(None)]);
        assert_eq!(r.threshold_pct, 20.0);
        assert_eq!(r.warnings.len(), 1);
        assert_eq!(threshold_from(&spec, vec![gap(None)]).threshold_pct, 70.0);
    }
}
