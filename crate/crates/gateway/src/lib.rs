//! Network gateway, batch runner and persistence for gravlab episodes.

pub mod config;
pub mod episode;
pub mod protocol;
pub mod runner;
pub mod server;
pub mod service;

use thiserror::Error;

pub use config::Config;
pub use protocol::{ProtocolKind, Reply, Request, Started};
pub use runner::{run_suite, Agent, AgentSpec, Link, LocalLink, SuiteOptions, SuiteResult};
pub use server::{spawn, Client, ServerHandle};
pub use service::{load_catalog, Gateway, ResultSink};

#[derive(Debug, Error)]
pub enum GatewayError {
    #[error("configuration: {0}")]
    Config(String),
    #[error("cannot bind {0}: {1}")]
    Bind(String, #[source] std::io::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("bad message: {0}")]
    Json(#[source] serde_json::Error),
    #[error("server replied {code}: {detail}")]
    Rejected { code: String, detail: String },
    #[error("agent failed: {0}")]
    Agent(String),
    #[error("replay: {0}")]
    Replay(String),
    #[error("no task instances selected")]
    EmptySelection,
    #[error(transparent)]
    Library(#[from] gravlab_core::library::LibraryError),
    #[error(transparent)]
    Task(#[from] gravlab_core::tasks::TaskError),
}
