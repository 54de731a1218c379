use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use super::EvalError;
use crate::tasks::Answer;

/// One agent attempt at one instance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    /// `task@scenario`
    pub instance: String,
    pub task: String,
    pub scenario: String,
    pub agent: String,
    /// Protocol label, e.g. `budget_obs(100)`.
    pub protocol: String,
    #[serde(default)]
    pub repeat: usize,
    pub submitted: Option<Answer>,
    #[serde(default)]
    pub units: String,
    pub observations_used: usize,
    #[serde(default)]
    pub budget: Option<usize>,
    pub wall_time_s: f64,
    #[serde(default)]
    pub transcript: Option<String>,
    pub correct: bool,
    /// Problems such as `timeout`, `unit_error`, `no_answer`.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub flags: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cost: Option<f64>,
}

pub fn write_runs<W: Write>(mut out: W, runs: &[RunRecord]) -> Result<(), EvalError> {
    for r in runs {
        serde_json::to_writer(&mut out, r)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

/// Reads line-delimited records, skipping blank lines.
pub fn read_runs<R: BufRead>(input: R) -> Result<Vec<RunRecord>, EvalError> {
    let mut out = Vec::new();
    for line in input.lines() {
        let line = line?;
        if !line.trim().is_empty() {
            out.push(serde_json::from_str(&line)?);
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskBreakdown {
    pub correct: usize,
    pub total: usize,
    pub score_pct: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentReport {
    pub agent: String,
    pub protocol: String,
    /// Mean over repeats of the percentage of instances solved.
    pub score_pct: f64,
    /// Standard error over repeats; absent with fewer than two.
    pub standard_error: Option<f64>,
    pub repeats: usize,
    pub runs: usize,
    pub mean_observations: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub total_cost: Option<f64>,
    pub per_task: BTreeMap<String, TaskBreakdown>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct Report {
    pub agents: Vec<AgentReport>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

fn sorted_sum(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    v.iter().sum()
}

/// Groups runs by agent and protocol and summarises them. `repeats` is the
/// number of repeats each group is expected to have.
pub fn aggregate(runs: &[RunRecord], repeats: usize) -> Report {
    let mut groups: BTreeMap<(String, String), Vec<&RunRecord>> = BTreeMap::new();
    for r in runs {
        groups.entry((r.agent.clone(), r.protocol.clone())).or_default().push(r);
    }
    let mut report = Report::default();
    for ((agent, protocol), rs) in groups {
        let mut by_repeat: BTreeMap<usize, (usize, usize)> = BTreeMap::new();
        let mut coverage: BTreeMap<usize, BTreeSet<&str>> = BTreeMap::new();
        let mut per_task: BTreeMap<String, (usize, usize)> = BTreeMap::new();
        let mut obs = 0usize;
        let mut costs = Vec::new();
        for r in &rs {
            let e = by_repeat.entry(r.repeat).or_default();
            e.1 += 1;
            let t = per_task.entry(r.task.clone()).or_default();
            t.1 += 1;
            if r.correct {
                e.0 += 1;
                t.0 += 1;
            }
            coverage.entry(r.repeat).or_default().insert(r.instance.as_str());
            obs += r.observations_used;
            costs.extend(r.cost);
        }
        let scores: Vec<f64> = by_repeat.values().map(|&(c, n)| 100.0 * c as f64 / n as f64).collect();
        let k = scores.len() as f64;
        let mean = sorted_sum(scores.clone()) / k;
        let standard_error = (scores.len() >= 2).then(|| {
            let ss = sorted_sum(scores.iter().map(|s| (s - mean) * (s - mean)).collect());
            (ss / (k - 1.0)).sqrt() / k.sqrt()
        });
        if repeats > 0 && by_repeat.len() != repeats {
            report.warnings.push(format!(
                "{agent} / {protocol}: {} of {repeats} repeats present; aggregation is partial",
                by_repeat.len()
            ));
        }
        let sets: BTreeSet<&BTreeSet<&str>> = coverage.values().collect();
        if sets.len() > 1 {
            report.warnings.push(format!("{agent} / {protocol}: repeats cover different instances"));
        }
        report.agents.push(AgentReport {
            agent,
            protocol,
            score_pct: mean,
            standard_error,
            repeats: by_repeat.len(),
            runs: rs.len(),
            mean_observations: obs as f64 / rs.len() as f64,
            total_cost: (!costs.is_empty()).then(|| sorted_sum(costs)),
            per_task: per_task
                .into_iter()
                .map(|(t, (c, n))| (t, TaskBreakdown { correct: c, total: n, score_pct: 100.0 * c as f64 / n as f64 }))
                .collect(),
        });
    }
    report
}

impl Report {
    pub fn to_json(&self) -> Result<String, EvalError> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// Score table followed by a per-task breakdown for each agent.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(
            s,
            "{:<24} {:<18} {:>16} {:>10} {:>8} {:>10}",
            "agent", "protocol", "score", "obs", "runs", "cost"
        );
        for a in &self.agents {
            let score = match a.standard_error {
                Some(se) => format!("{:.1} ± {:.1}%", a.score_pct, se),
                None => format!("{:.1}%", a.score_pct),
            };
            let cost = a.total_cost.map(|c| format!("{c:.2}")).unwrap_or_else(|| "-".into());
            let _ = writeln!(
                s,
                "{:<24} {:<18} {:>16} {:>10.1} {:>8} {:>10}",
                a.agent, a.protocol, score, a.mean_observations, a.runs, cost
            );
        }
        for a in &self.agents {
            let _ = writeln!(s, "\n{} / {}", a.agent, a.protocol);
            for (t, b) in &a.per_task {
                let _ = writeln!(s, "  {:<28} {:>3}/{:<3} {:>6.1}%", t, b.correct, b.total, b.score_pct);
            }
        }
        for w in &self.warnings {
            let _ = writeln!(s, "warning: {w}");
        }
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn run(repeat: usize, instance: &str, correct: bool, obs: usize) -> RunRecord {
        let (task, scenario) = instance.split_once('@').unwrap();
        RunRecord {
            instance: instance.into(),
            task: task.into(),
            scenario: scenario.into(),
            agent: "a".into(),
            protocol: "budget_obs(100)".into(),
            repeat,
            submitted: Some(Answer::Number(1.0)),
            units: String::new(),
            observations_used: obs,
            budget: Some(100),
            wall_time_s: 0.1,
            transcript: None,
            correct,
            flags: vec![],
            cost: None,
        }
    }

    #[test]
    fn mean_observations() {
        let r = aggregate(&[run(0, "t@a", true, 10), run(0, "t@b", false, 14)], 1);
        assert_eq!(r.agents[0].mean_observations, 12.0);
        assert_eq!(r.agents[0].score_pct, 50.0);
        assert!(r.agents[0].standard_error.is_none());
    }

    #[test]
    fn json_lines_round_trip() {
        let runs = vec![run(0, "t@a", true, 3), run(1, "u@b", false, 7)];
        let mut buf = Vec::new();
        write_runs(&mut buf, &runs).unwrap();
        assert_eq!(read_runs(&buf[..]).unwrap(), runs);
    }

    #[test]
    fn missing_repeat_warns() {
        let r = aggregate(&[run(0, "t@a", true, 1), run(1, "t@a", true, 1)], 3);
        assert_eq!(r.warnings.len(), 1);
        assert!(r.to_text().contains("warning"));
    }
}
