//! Scripted and remote agents, and the batch suite runner.

use std::fmt;
use std::net::{SocketAddr, TcpStream};
use std::str::FromStr;
use std::sync::mpsc;
use std::sync::Arc;
use std::thread;
use std::time::Duration;

use gravlab_core::env::ObservationRow;
use gravlab_core::eval::{aggregate, Report, RunRecord};
use gravlab_core::solvers::{linspace, solve_full};
use gravlab_core::tasks::TaskKind;
use log::{info, warn};
use serde::Serialize;

use crate::protocol::{read_frame, write_frame, ProtocolKind, Reply, Request, Started};
use crate::server::Client;
use crate::service::Gateway;
use crate::GatewayError;

/// Anything that answers protocol requests.
pub trait Link {
    fn call(&mut self, request: Request) -> Result<Reply, GatewayError>;
}

impl Link for Client {
    fn call(&mut self, request: Request) -> Result<Reply, GatewayError> {
        Client::call(self, &request)
    }
}

/// In-process link to a gateway.
pub struct LocalLink(pub Arc<Gateway>);

impl Link for LocalLink {
    fn call(&mut self, request: Request) -> Result<Reply, GatewayError> {
        Ok(self.0.handle(request))
    }
}

/// An agent works one started episode through to `submit_answer`.
pub trait Agent: Send {
    fn name(&self) -> String;
    fn attempt(&mut self, link: &mut dyn Link, task: &Started) -> Result<(), GatewayError>;
}

fn rejected(reply: Reply) -> GatewayError {
    match reply {
        Reply::Error { code, detail, .. } => GatewayError::Rejected { code, detail },
        other => GatewayError::Rejected { code: "unexpected".into(), detail: format!("{other:?}") },
    }
}

fn binding(task: &Started) -> Result<TaskKind, GatewayError> {
    TaskKind::from_id(&task.binding)
        .ok_or_else(|| GatewayError::Rejected { code: "binding".into(), detail: task.binding.clone() })
}

fn fetch_full(link: &mut dyn Link, task: &Started) -> Result<Vec<ObservationRow>, GatewayError> {
    match link.call(Request::FullTable { token: task.token.clone() })? {
        Reply::FullTable { rows, .. } => Ok(rows),
        other => Err(rejected(other)),
    }
}

fn solve_and_submit(link: &mut dyn Link, task: &Started, rows: &[ObservationRow]) -> Result<(), GatewayError> {
    let est = solve_full(binding(task)?, rows, &task.units).map_err(|e| GatewayError::Agent(e.to_string()))?;
    match link.call(Request::SubmitAnswer { token: task.token.clone(), value: est.value, units: est.units })? {
        Reply::Verdict { .. } => Ok(()),
        other => Err(rejected(other)),
    }
}

/// The planning-free baseline: evenly spaced observations, then the expert
/// pipeline. Under full-obs it reads the whole table instead.
pub struct UniformAgent {
    pub samples: usize,
}

impl Agent for UniformAgent {
    fn name(&self) -> String {
        format!("uniform-{}", self.samples)
    }

    fn attempt(&mut self, link: &mut dyn Link, task: &Started) -> Result<(), GatewayError> {
        let rows = match task.protocol {
            ProtocolKind::FullObs => fetch_full(link, task)?,
            ProtocolKind::BudgetObs => {
                let n = self.samples.min(task.budget.unwrap_or(self.samples));
                let mut rows = Vec::with_capacity(n);
                for chunk in linspace(task.window[0], task.window[1], n).chunks(task.per_call_cap.max(1)) {
                    match link.call(Request::Observe { token: task.token.clone(), times: chunk.to_vec() })? {
                        Reply::ObserveResult { rows: got, .. } => rows.extend(got),
                        other => return Err(rejected(other)),
                    }
                }
                rows
            }
        };
        solve_and_submit(link, task, &rows)
    }
}

/// Reads the full table and runs the expert pipeline.
pub struct FullTableAgent;

impl Agent for FullTableAgent {
    fn name(&self) -> String {
        "full-table".into()
    }

    fn attempt(&mut self, link: &mut dyn Link, task: &Started) -> Result<(), GatewayError> {
        let rows = fetch_full(link, task)?;
        solve_and_submit(link, task, &rows)
    }
}

#[derive(Serialize)]
struct Assignment<'a> {
    kind: &'static str,
    gateway: String,
    task: &'a Started,
}

/// An external agent listening on `endpoint`. It receives one framed
/// `{"kind":"assign","gateway":ADDR,"task":{..}}` message per episode, works
/// the episode against the gateway itself and answers with any frame when
/// done.
pub struct RemoteAgent {
    pub endpoint: String,
    pub gateway: SocketAddr,
    pub timeout: Duration,
}

impl Agent for RemoteAgent {
    fn name(&self) -> String {
        format!("remote@{}", self.endpoint)
    }

    fn attempt(&mut self, _link: &mut dyn Link, task: &Started) -> Result<(), GatewayError> {
        let mut stream = TcpStream::connect(&self.endpoint)?;
        stream.set_read_timeout(Some(self.timeout))?;
        let msg = Assignment { kind: "assign", gateway: self.gateway.to_string(), task };
        write_frame(&mut stream, &serde_json::to_vec(&msg).map_err(GatewayError::Json)?)?;
        read_frame(&mut stream)?;
        Ok(())
    }
}

/// Command-line agent selector: `uniform[:N]`, `full` or `remote:HOST:PORT`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum AgentSpec {
    Uniform(usize),
    FullTable,
    Remote(String),
}

impl FromStr for AgentSpec {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let (head, rest) = s.split_once(':').unwrap_or((s, ""));
        match head {
            "uniform" if rest.is_empty() => Ok(AgentSpec::Uniform(100)),
            "uniform" => rest
                .parse()
                .ok()
                .filter(|&n: &usize| n >= 3)
                .map(AgentSpec::Uniform)
                .ok_or_else(|| format!("bad sample count in `{s}`")),
            "full" => Ok(AgentSpec::FullTable),
            "remote" if !rest.is_empty() => Ok(AgentSpec::Remote(rest.to_string())),
            _ => Err(format!("unknown agent `{s}` (expected uniform[:N], full or remote:HOST:PORT)")),
        }
    }
}

impl fmt::Display for AgentSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            AgentSpec::Uniform(n) => write!(f, "uniform-{n}"),
            AgentSpec::FullTable => f.write_str("full-table"),
            AgentSpec::Remote(e) => write!(f, "remote@{e}"),
        }
    }
}

impl AgentSpec {
    pub fn build(&self, gateway: Option<SocketAddr>, timeout: Duration) -> Result<Box<dyn Agent>, GatewayError> {
        Ok(match self {
            AgentSpec::Uniform(n) => Box::new(UniformAgent { samples: *n }),
            AgentSpec::FullTable => Box::new(FullTableAgent),
            AgentSpec::Remote(endpoint) => Box::new(RemoteAgent {
                endpoint: endpoint.clone(),
                gateway: gateway
                    .ok_or_else(|| GatewayError::Config("remote agents need a listening gateway".into()))?,
                timeout,
            }),
        })
    }
}

#[derive(Debug, Clone)]
pub struct SuiteOptions {
    /// Substring matched against instance id, binding and scenario id.
    pub filter: Option<String>,
    pub repeats: usize,
    pub protocol: ProtocolKind,
    pub budget: Option<usize>,
    pub timeout: Duration,
    /// Address remote agents should connect to.
    pub gateway_addr: Option<SocketAddr>,
}

impl Default for SuiteOptions {
    fn default() -> Self {
        Self {
            filter: None,
            repeats: 1,
            protocol: ProtocolKind::BudgetObs,
            budget: None,
            timeout: Duration::from_secs(600),
            gateway_addr: None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SuiteResult {
    pub records: Vec<RunRecord>,
    pub report: Report,
}

/// Runs `agent` on every selected instance, `repeats` times.
pub fn run_suite(gateway: &Arc<Gateway>, agent: &AgentSpec, opts: &SuiteOptions) -> Result<SuiteResult, GatewayError> {
    let instances: Vec<String> = match &opts.filter {
        Some(p) => gateway.catalog().filter(p).into_iter().map(|i| i.id.clone()).collect(),
        None => gateway.catalog().instances.iter().map(|i| i.id.clone()).collect(),
    };
    if instances.is_empty() || opts.repeats == 0 {
        return Err(GatewayError::EmptySelection);
    }
    let name = agent.build(opts.gateway_addr, opts.timeout)?.name();
    let mut records = Vec::new();
    for repeat in 0..opts.repeats {
        for id in &instances {
            let start = Request::StartTask {
                instance: id.clone(),
                protocol: opts.protocol,
                budget: opts.budget,
                agent: Some(name.clone()),
                repeat: Some(repeat),
            };
            let started = match gateway.handle(start) {
                Reply::StartTask(s) => s,
                other => return Err(rejected(other)),
            };
            let token = started.token.clone();
            let (tx, rx) = mpsc::channel();
            let g = gateway.clone();
            let spec = agent.clone();
            let (addr, timeout) = (opts.gateway_addr, opts.timeout);
            thread::spawn(move || {
                let result = spec.build(addr, timeout).and_then(|mut a| a.attempt(&mut LocalLink(g), &started));
                let _ = tx.send(result);
            });
            let flag = match rx.recv_timeout(opts.timeout) {
                Ok(Ok(())) => "no_answer",
                Ok(Err(e)) => {
                    warn!("{name} on {id}: {e}");
                    "agent_error"
                }
                Err(_) => {
                    warn!("{name} on {id}: timed out after {:?}", opts.timeout);
                    "timeout"
                }
            };
            let record =
                gateway.abort(&token, flag).ok_or_else(|| GatewayError::Replay(format!("no record for {token}")))?;
            info!("{id} repeat {repeat}: {}", if record.correct { "correct" } else { "incorrect" });
            records.push(record);
        }
    }
    let report = aggregate(&records, opts.repeats);
    Ok(SuiteResult { records, report })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn agent_specs_parse() {
        assert_eq!("uniform".parse::<AgentSpec>().unwrap(), AgentSpec::Uniform(100));
        assert_eq!("uniform:20".parse::<AgentSpec>().unwrap(), AgentSpec::Uniform(20));
        assert_eq!("full".parse::<AgentSpec>().unwrap(), AgentSpec::FullTable);
        assert_eq!("remote:127.0.0.1:9".parse::<AgentSpec>().unwrap(), AgentSpec::Remote("127.0.0.1:9".into()));
        assert!("uniform:2".parse::<AgentSpec>().is_err());
        assert!("llm".parse::<AgentSpec>().is_err());
    }
}
