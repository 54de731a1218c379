use serde::{Deserialize, Serialize};

use super::EvalError;
use crate::tasks::{Answer, TaskInstance};
use crate::units::{parse_unit, UnitError};

/// Outcome of scoring one submission.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Verdict {
    pub correct: bool,
    /// Relative error in percent; absent for booleans and zero truths.
    pub error_pct: Option<f64>,
    /// The submission expressed in the instance's units.
    pub value: Answer,
    pub threshold_pct: f64,
}

/// Scores `submitted` (in `units`) against an instance. An empty unit string
/// means the instance's own units.
pub fn score_answer(instance: &TaskInstance, submitted: Answer, units: &str) -> Result<Verdict, EvalError> {
    let threshold = instance.task.threshold_pct;
    let truth = match (instance.ground_truth, submitted) {
        (Answer::Bool(t), Answer::Bool(s)) => {
            return Ok(Verdict { correct: t == s, error_pct: None, value: submitted, threshold_pct: threshold })
        }
        (Answer::Bool(_), Answer::Number(_)) => return Err(EvalError::Format("expected true or false".into())),
        (Answer::Number(_), Answer::Bool(_)) => return Err(EvalError::Format("expected a number".into())),
        (Answer::Number(t), Answer::Number(_)) => t,
    };
    let Answer::Number(raw) = submitted else { unreachable!() };
    if !raw.is_finite() {
        return Err(EvalError::Format(format!("non-finite value {raw}")));
    }
    let value = convert_to_instance(raw, units, instance)?;
    let diff = (value - truth).abs();
    let error_pct = (truth != 0.0).then(|| 100.0 * diff / truth.abs());
    let within_abs = instance.task.abs_tolerance.is_some_and(|tol| diff <= tol);
    let correct = within_abs || error_pct.is_some_and(|e| e <= threshold);
    Ok(Verdict { correct, error_pct, value: Answer::Number(value), threshold_pct: threshold })
}

fn convert_to_instance(value: f64, units: &str, instance: &TaskInstance) -> Result<f64, EvalError> {
    let units = units.trim();
    if units.is_empty() || units == instance.units {
        return Ok(value);
    }
    let from = parse_unit(units)?;
    let want = instance.quantity().map(|q| q.dimension()).unwrap_or_default();
    if from.dimension != want {
        return Err(EvalError::Unit(UnitError::Incompatible { from: units.into(), to: instance.units.clone() }));
    }
    let to_si = instance.quantity().map_or(1.0, |q| instance.unit_system.si_factor(q));
    Ok(value * from.factor / to_si)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tasks::{TaskKind, TaskSpec};
    use crate::units::UnitSystem;

    fn instance(kind: TaskKind, truth: Answer, threshold: f64) -> TaskInstance {
        let mut task = TaskSpec::builtin(kind);
        task.threshold_pct = threshold;
        let units = kind.quantity().map(|q| UnitSystem::si().unit_for(q)).unwrap_or_default();
        TaskInstance {
            id: format!("{}@test", kind.id()),
            task,
            scenario_id: "test".into(),
            ground_truth: truth,
            units,
            unit_system: UnitSystem::si(),
            window_end: 1.0,
        }
    }

    #[test]
    fn four_percent_passes_five_percent_threshold() {
        let i = instance(TaskKind::Period, Answer::Number(100.0), 5.0);
        assert!(score_answer(&i, Answer::Number(104.0), "s").unwrap().correct);
        assert!(!score_answer(&i, Answer::Number(106.0), "s").unwrap().correct);
    }

    #[test]
    fn alpha_outside_lenient_range() {
        let i = instance(TaskKind::GravityExponent, Answer::Number(0.03), 70.0);
        assert!(!score_answer(&i, Answer::Number(0.052), "").unwrap().correct);
        assert!(score_answer(&i, Answer::Number(0.05), "").unwrap().correct);
    }

    #[test]
    fn kilometres_are_converted() {
        let i = instance(TaskKind::Periastron, Answer::Number(1.5e11), 5.0);
        let v = score_answer(&i, Answer::Number(1.5e8), "km").unwrap();
        assert!(v.correct);
        assert_eq!(v.value, Answer::Number(1.5e11));
        assert!(score_answer(&i, Answer::Number(1.0), "AU").unwrap().correct);
        assert!(matches!(score_answer(&i, Answer::Number(1.0), "s"), Err(EvalError::Unit(_))));
    }

    #[test]
    fn booleans_and_formats() {
        let i = instance(TaskKind::IsBound, Answer::Bool(true), 5.0);
        assert!(score_answer(&i, Answer::Bool(true), "").unwrap().correct);
        assert!(!score_answer(&i, Answer::Bool(false), "").unwrap().correct);
        assert!(matches!(score_answer(&i, Answer::Number(1.0), ""), Err(EvalError::Format(_))));
        let p = instance(TaskKind::Period, Answer::Number(1.0), 5.0);
        assert!(matches!(score_answer(&p, Answer::Number(f64::NAN), "s"), Err(EvalError::Format(_))));
    }

    #[test]
    fn zero_truth_uses_absolute_tolerance() {
        let i = instance(TaskKind::Eccentricity, Answer::Number(0.0), 5.0);
        assert!(score_answer(&i, Answer::Number(0.004), "").unwrap().correct);
        assert!(!score_answer(&i, Answer::Number(0.05), "").unwrap().correct);
    }
}
