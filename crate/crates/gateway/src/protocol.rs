//! Wire messages and length-prefixed framing.
//!
//! Every frame is a 4-byte big-endian length followed by that many bytes of
//! UTF-8 JSON. Each request gets exactly one reply.

use std::io::{self, Read, Write};

use gravlab_core::env::ObservationRow;
use gravlab_core::tasks::Answer;
use gravlab_core::units::UnitSystem;
use serde::{Deserialize, Serialize};

/// Largest accepted frame body.
pub const MAX_FRAME: usize = 256 << 20;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProtocolKind {
    FullObs,
    BudgetObs,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Request {
    StartTask {
        instance: String,
        protocol: ProtocolKind,
        /// Defaults to the server's configured budget.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        budget: Option<usize>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        agent: Option<String>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        repeat: Option<usize>,
    },
    Observe {
        token: String,
        times: Vec<f64>,
    },
    FullTable {
        token: String,
    },
    SubmitAnswer {
        token: String,
        value: Answer,
        #[serde(default)]
        units: String,
    },
}

impl Request {
    pub fn token(&self) -> Option<&str> {
        match self {
            Request::StartTask { .. } => None,
            Request::Observe { token, .. } | Request::FullTable { token } | Request::SubmitAnswer { token, .. } => {
                Some(token)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Started {
    pub token: String,
    pub instance: String,
    pub task: String,
    /// Solver family the task is graded against.
    pub binding: String,
    pub scenario: String,
    pub prompt: String,
    pub window: [f64; 2],
    pub protocol: ProtocolKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub budget: Option<usize>,
    pub per_call_cap: usize,
    pub units: UnitSystem,
    /// Unit string the answer is expected in.
    pub answer_units: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
#[allow(clippy::large_enum_variant)]
pub enum Reply {
    StartTask(Started),
    ObserveResult {
        token: String,
        rows: Vec<ObservationRow>,
        used: usize,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        remaining: Option<usize>,
    },
    FullTable {
        token: String,
        rows: Vec<ObservationRow>,
    },
    Verdict {
        token: String,
        correct: bool,
        submitted: Answer,
        units: String,
        observations_used: usize,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        threshold_pct: Option<f64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        error_pct: Option<f64>,
    },
    Error {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        token: Option<String>,
        code: String,
        detail: String,
    },
}

impl Reply {
    pub fn error(token: Option<&str>, code: &str, detail: impl Into<String>) -> Self {
        Reply::Error { token: token.map(str::to_string), code: code.into(), detail: detail.into() }
    }

    pub fn error_code(&self) -> Option<&str> {
        match self {
            Reply::Error { code, .. } => Some(code),
            _ => None,
        }
    }
}

/// Reads one frame; `None` on clean end of stream.
pub fn read_frame<R: Read>(r: &mut R) -> io::Result<Option<Vec<u8>>> {
    let mut len = [0u8; 4];
    match r.read_exact(&mut len) {
        Ok(()) => {}
        Err(e) if e.kind() == io::ErrorKind::UnexpectedEof => return Ok(None),
        Err(e) => return Err(e),
    }
    let n = u32::from_be_bytes(len) as usize;
    if n > MAX_FRAME {
        return Err(io::Error::new(io::ErrorKind::InvalidData, format!("frame of {n} bytes exceeds limit")));
    }
    let mut body = vec![0u8; n];
    r.read_exact(&mut body)?;
    Ok(Some(body))
}

pub fn write_frame<W: Write>(w: &mut W, body: &[u8]) -> io::Result<()> {
    let n = u32::try_from(body.len())
        .ok()
        .filter(|&n| n as usize <= MAX_FRAME)
        .ok_or_else(|| io::Error::new(io::ErrorKind::InvalidData, "frame too large"))?;
    w.write_all(&n.to_be_bytes())?;
    w.write_all(body)?;
    w.flush()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn frames_round_trip() {
        let mut buf = Vec::new();
        write_frame(&mut buf, b"{\"kind\":\"x\"}").unwrap();
        write_frame(&mut buf, b"").unwrap();
        let mut cur = &buf[..];
        assert_eq!(read_frame(&mut cur).unwrap().unwrap(), b"{\"kind\":\"x\"}");
        assert_eq!(read_frame(&mut cur).unwrap().unwrap(), b"");
        assert!(read_frame(&mut cur).unwrap().is_none());
    }

    #[test]
    fn truncated_frame_is_an_error() {
        let mut cur: &[u8] = &[0, 0, 0, 9, b'{'];
        assert!(read_frame(&mut cur).is_err());
    }

    #[test]
    fn request_json_shape() {
        let r: Request = serde_json::from_str(r#"{"kind":"observe","token":"ep-000001","times":[1.0,2.5]}"#).unwrap();
        assert_eq!(r, Request::Observe { token: "ep-000001".into(), times: vec![1.0, 2.5] });
        let s: Request = serde_json::from_str(r#"{"kind":"submit_answer","token":"t","value":true}"#).unwrap();
        assert!(matches!(s, Request::SubmitAnswer { value: Answer::Bool(true), .. }));
        let e = serde_json::to_string(&Reply::error(None, "cap_exceeded", "too many")).unwrap();
        assert_eq!(e, r#"{"kind":"error","code":"cap_exceeded","detail":"too many"}"#);
    }
}
