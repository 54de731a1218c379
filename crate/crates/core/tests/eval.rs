mod common;

use proptest::prelude::*;

use gravlab_core::eval::{
    aggregate, baseline_gap_report, detect_mass_assumption, read_runs, score_answer, write_runs, RunRecord, SampleCount,
};
use gravlab_core::tasks::Answer;
use gravlab_core::units::AU;

use common::{catalog, library};

const PATTERNS: &str = include_str!("fixtures/mass_patterns.txt");
const CLEAN: &str = include_str!("fixtures/clean_kepler.py");
const ROLES: &str = include_str!("fixtures/roles.jsonl");

fn run(agent: &str, instance: &str, repeat: usize, correct: bool, observations: usize) -> RunRecord {
    let (task, scenario) = instance.split_once('@').unwrap();
    RunRecord {
        instance: instance.into(),
        task: task.into(),
        scenario: scenario.into(),
        agent: agent.into(),
        protocol: "budget-obs-100".into(),
        repeat,
        submitted: Some(Answer::Number(1.0)),
        units: String::new(),
        observations_used: observations,
        budget: Some(100),
        wall_time_s: 1.0,
        transcript: None,
        correct,
        flags: vec![],
        cost: None,
    }
}

/// `correct` of `n` instances solved in one repeat.
fn repeat_runs(agent: &str, repeat: usize, correct: usize, n: usize) -> Vec<RunRecord> {
    (0..n).map(|i| run(agent, &format!("task{}@s{i}", i % 3), repeat, i < correct, 10)).collect()
}

#[test]
fn mean_and_standard_error_over_repeats() {
    let mut runs = repeat_runs("a", 0, 10, 50);
    runs.extend(repeat_runs("a", 1, 11, 50));
    runs.extend(repeat_runs("a", 2, 12, 50));
    let report = aggregate(&runs, 3);
    let a = &report.agents[0];
    assert!((a.score_pct - 22.0).abs() < 1e-12);
    // sample sd of {20, 22, 24} is 2
    assert!((a.standard_error.unwrap() - 2.0 / 3f64.sqrt()).abs() < 1e-12);
    assert_eq!(a.repeats, 3);
    assert!(report.warnings.is_empty());

    let single = aggregate(&repeat_runs("a", 0, 10, 50), 1);
    assert!((single.agents[0].score_pct - 20.0).abs() < 1e-12);
    assert_eq!(single.agents[0].standard_error, None);

    let obs = aggregate(&[run("a", "t@x", 0, true, 10), run("a", "t@y", 0, false, 14)], 1);
    assert_eq!(obs.agents[0].mean_observations, 12.0);
}

#[test]
fn partial_coverage_warns() {
    let mut runs = repeat_runs("a", 0, 10, 50);
    runs.extend(repeat_runs("a", 1, 10, 40));
    let report = aggregate(&runs, 3);
    assert_eq!(report.warnings.len(), 2, "{:?}", report.warnings);
}

#[test]
fn run_records_round_trip() {
    let runs = repeat_runs("b", 2, 3, 7);
    let mut buf = Vec::new();
    write_runs(&mut buf, &runs).unwrap();
    assert_eq!(read_runs(&buf[..]).unwrap(), runs);
}

fn any_run() -> impl Strategy<Value = RunRecord> {
    (0usize..2, 0usize..8, 0usize..3, any::<bool>(), 0usize..101, prop::option::of(0.0..5.0f64)).prop_map(
        |(agent, inst, repeat, correct, obs, cost)| {
            let mut r = run(["x", "y"][agent], &format!("task{}@s{inst}", inst % 3), repeat, correct, obs);
            r.cost = cost;
            r
        },
    )
}

proptest! {
    #[test]
    fn report_ignores_run_order(
        (runs, shuffled) in prop::collection::vec(any_run(), 1..60)
            .prop_flat_map(|v| (Just(v.clone()), Just(v).prop_shuffle()))
    ) {
        let a = aggregate(&runs, 3).to_json().unwrap();
        let b = aggregate(&shuffled, 3).to_json().unwrap();
        prop_assert_eq!(a, b);
    }

    #[test]
    fn verdict_survives_unit_changes(factor in 0.2..1.8f64) {
        let inst = catalog().get("periastron@eccentric_unequal").unwrap();
        let metres = inst.ground_truth.as_f64().unwrap() * factor;
        let base = score_answer(inst, Answer::Number(metres), "m").unwrap();
        for (value, units) in [(metres / 1e3, "km"), (metres * 100.0, "cm"), (metres / AU, "AU"), (metres, "")] {
            let v = score_answer(inst, Answer::Number(value), units).unwrap();
            prop_assert_eq!(v.correct, base.correct);
            prop_assert!((v.error_pct.unwrap() - base.error_pct.unwrap()).abs() <= 1e-9 * base.error_pct.unwrap().max(1.0));
        }

        let astro = catalog().get("period@eccentric_unequal_astro").unwrap();
        let years = astro.ground_truth.as_f64().unwrap() * factor;
        let base = score_answer(astro, Answer::Number(years), "").unwrap();
        for (value, units) in [(years * 3.15576e7, "s"), (years * 365.25, "day"), (years, "yr")] {
            prop_assert_eq!(score_answer(astro, Answer::Number(value), units).unwrap().correct, base.correct);
        }
    }
}

#[test]
fn wrong_dimension_is_a_unit_error() {
    let inst = catalog().get("periastron@eccentric_unequal").unwrap();
    assert!(score_answer(inst, Answer::Number(1.0), "s").is_err());
    assert!(score_answer(inst, Answer::Bool(true), "").is_err());
}

#[test]
fn every_listed_pattern_is_detected() {
    let patterns: Vec<&str> = PATTERNS.lines().filter(|l| !l.trim().is_empty()).collect();
    assert_eq!(patterns.len(), 6);
    for p in &patterns {
        let plain = detect_mass_assumption(p);
        assert!(plain.detected, "missed `{p}` as plain text");

        let code = format!("import pandas as pd\ndf = pd.read_csv('x.csv')\n{p}\nprint(df.head())\n");
        let fenced = format!("Here is my approach.\n```python\n{code}```\n");
        assert!(detect_mass_assumption(&fenced).detected, "missed `{p}` in a fenced block");

        let line = serde_json::json!({ "role": "assistant", "code": code }).to_string();
        let hit = detect_mass_assumption(&line);
        assert!(hit.detected, "missed `{p}` in agent code");
        assert_eq!(hit.hits[0].line, 1);

        let spaced = p.replace(" = ", "  =   ").replace("+", " + ");
        assert!(detect_mass_assumption(&spaced).detected, "missed `{spaced}`");
    }
}

#[test]
fn kepler_solution_is_clean() {
    let result = detect_mass_assumption(CLEAN);
    assert!(!result.detected, "{:?}", result.hits);
    let fenced = format!("```python\n{CLEAN}```");
    assert!(!detect_mass_assumption(&fenced).detected);
}

#[test]
fn only_agent_code_counts() {
    assert!(!detect_mass_assumption(ROLES).detected);
    let tainted = format!("{ROLES}{}\n", serde_json::json!({ "role": "assistant", "code": "m2 = 1.0" }));
    let result = detect_mass_assumption(&tainted);
    assert!(result.detected);
    assert_eq!(result.hits.len(), 1);
    assert_eq!(result.hits[0].line, 6);
}

#[test]
fn full_data_gaps_are_zero() {
    let report = baseline_gap_report(library(), catalog(), &[SampleCount::Full]);
    assert_eq!(report.gaps.len(), catalog().len());
    for g in &report.gaps {
        assert_eq!(g.gap_pct, Some(0.0), "{}: {:?}", g.instance, g.note);
    }
    let dir = tempfile::tempdir().unwrap();
    report.write(dir.path()).unwrap();
    for f in ["gaps.csv", "gaps.json", "thresholds.toml", "gaps.svg"] {
        assert!(dir.path().join(f).exists(), "{f}");
    }
    let svg = std::fs::read_to_string(dir.path().join("gaps.svg")).unwrap();
    assert!(svg.starts_with("<svg") && svg.trim_end().ends_with("</svg>"));
}
