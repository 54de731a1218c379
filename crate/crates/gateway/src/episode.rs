//! One agent's attempt at one task instance.

use gravlab_core::env::{ObservationSession, Protocol};
use gravlab_core::eval::{score_answer, EvalError, RunRecord};
use gravlab_core::tasks::{render_prompt, Answer, TaskInstance};
use serde::{Deserialize, Serialize};

use crate::protocol::{ProtocolKind, Reply, Request, Started};

/// A logged request/reply pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TranscriptLine {
    pub seq: usize,
    pub request: Request,
    pub reply: Reply,
}

/// How an episode ended.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Outcome {
    pub submitted: Option<Answer>,
    pub units: String,
    pub correct: bool,
    pub flags: Vec<String>,
}

pub struct Episode {
    token: String,
    instance: TaskInstance,
    session: ObservationSession,
    started: Started,
    agent: String,
    repeat: usize,
    disclose: bool,
    lines: Vec<String>,
    outcome: Option<Outcome>,
}

impl Episode {
    /// Opens an episode for a `start_task` request and logs the exchange.
    /// `session` must already be bound to the instance's scenario.
    pub fn open(
        token: String,
        instance: TaskInstance,
        session: ObservationSession,
        request: &Request,
        disclose: bool,
    ) -> (Self, Reply) {
        let (agent, repeat) = match request {
            Request::StartTask { agent, repeat, .. } => {
                (agent.clone().unwrap_or_else(|| "anonymous".into()), repeat.unwrap_or(0))
            }
            _ => ("anonymous".into(), 0),
        };
        let protocol = session.protocol();
        let started = Started {
            token: token.clone(),
            instance: instance.id.clone(),
            task: instance.task.id.clone(),
            binding: instance.task.binding.id().into(),
            scenario: instance.scenario_id.clone(),
            prompt: render_prompt(&instance, protocol),
            window: [session.window().0, session.window().1],
            protocol: match protocol {
                Protocol::FullObs => ProtocolKind::FullObs,
                Protocol::BudgetObs { .. } => ProtocolKind::BudgetObs,
            },
            budget: protocol.limit(),
            per_call_cap: session.per_call_cap(),
            units: instance.unit_system.clone(),
            answer_units: instance.units.clone(),
        };
        let mut ep =
            Self { token, instance, session, started, agent, repeat, disclose, lines: Vec::new(), outcome: None };
        let reply = Reply::StartTask(ep.started.clone());
        ep.log(request.clone(), reply.clone());
        (ep, reply)
    }

    pub fn token(&self) -> &str {
        &self.token
    }

    pub fn started(&self) -> &Started {
        &self.started
    }

    pub fn instance(&self) -> &TaskInstance {
        &self.instance
    }

    pub fn outcome(&self) -> Option<&Outcome> {
        self.outcome.as_ref()
    }

    pub fn is_closed(&self) -> bool {
        self.outcome.is_some()
    }

    pub fn observations_used(&self) -> usize {
        self.session.used()
    }

    /// Transcript as JSON lines.
    pub fn transcript(&self) -> String {
        let mut s = String::new();
        for l in &self.lines {
            s.push_str(l);
            s.push('\n');
        }
        s
    }

    fn log(&mut self, request: Request, reply: Reply) {
        let line = TranscriptLine { seq: self.lines.len(), request, reply };
        self.lines.push(serde_json::to_string(&line).expect("transcript lines serialise"));
    }

    /// Handles one post-start request, logging it.
    pub fn handle(&mut self, request: &Request) -> Reply {
        let reply = self.dispatch(request);
        self.log(request.clone(), reply.clone());
        reply
    }

    fn dispatch(&mut self, request: &Request) -> Reply {
        let tok = Some(self.token.as_str());
        if self.is_closed() {
            return Reply::error(tok, "episode_closed", "the episode has already ended");
        }
        match request {
            Request::StartTask { .. } => Reply::error(tok, "already_started", "start_task is only valid once"),
            Request::Observe { times, .. } => match self.session.observe(times) {
                Ok(rows) => Reply::ObserveResult {
                    token: self.token.clone(),
                    rows,
                    used: self.session.used(),
                    remaining: self.session.remaining(),
                },
                Err(e) => Reply::error(tok, e.code(), e.to_string()),
            },
            Request::FullTable { .. } => match self.session.full_table() {
                Ok(rows) => Reply::FullTable { token: self.token.clone(), rows },
                Err(e) => Reply::error(tok, e.code(), e.to_string()),
            },
            Request::SubmitAnswer { value, units, .. } => self.submit(*value, units),
        }
    }

    fn submit(&mut self, value: Answer, units: &str) -> Reply {
        let (correct, error_pct, flags) = match score_answer(&self.instance, value, units) {
            Ok(v) => (v.correct, v.error_pct, vec![]),
            Err(EvalError::Unit(_)) => (false, None, vec!["unit_error".to_string()]),
            Err(_) => (false, None, vec!["format_error".to_string()]),
        };
        self.outcome = Some(Outcome { submitted: Some(value), units: units.to_string(), correct, flags });
        Reply::Verdict {
            token: self.token.clone(),
            correct,
            submitted: value,
            units: units.to_string(),
            observations_used: self.session.used(),
            threshold_pct: self.disclose.then_some(self.instance.task.threshold_pct),
            error_pct: if self.disclose { error_pct } else { None },
        }
    }

    /// Ends an unfinished episode as incorrect, tagged with `flag`.
    pub fn abort(&mut self, flag: &str) {
        if self.outcome.is_none() {
            self.outcome =
                Some(Outcome { submitted: None, units: String::new(), correct: false, flags: vec![flag.into()] });
        }
    }

    pub fn run_record(&self, wall_time_s: f64, transcript: Option<String>) -> RunRecord {
        let o = self.outcome.clone().unwrap_or(Outcome {
            submitted: None,
            units: String::new(),
            correct: false,
            flags: vec!["open".into()],
        });
        RunRecord {
            instance: self.instance.id.clone(),
            task: self.instance.task.id.clone(),
            scenario: self.instance.scenario_id.clone(),
            agent: self.agent.clone(),
            protocol: self.session.protocol().label(),
            repeat: self.repeat,
            submitted: o.submitted,
            units: o.units,
            observations_used: self.session.used(),
            budget: self.session.protocol().limit(),
            wall_time_s,
            transcript,
            correct: o.correct,
            flags: o.flags,
            cost: None,
        }
    }
}
