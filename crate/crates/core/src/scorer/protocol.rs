//! Wire records for external scorers.
//!
//! Newline-delimited UTF-8 JSON over the scorer's stdin/stdout. One record
//! per line; JSON string escaping keeps raw newlines out of records.
//!
//! ```text
//! host   -> {"op":"hello","protocol":1}
//! scorer -> {"op":"hello","name":"nli","version":"0.3","modes":["consistency","utility"]}
//! host   -> {"op":"score","request_id":"r1","mode":"utility","premise":"...","hypothesis":"..."}
//! scorer -> {"request_id":"r1","score":0.42}
//! scorer -> {"request_id":"r2","error":"oom"}
//! host   -> {"op":"shutdown"}
//! ```
//!
//! Responses may arrive in any order.

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::{ScoreMode, ScoreRequest, ScoreResponse};

pub const PROTOCOL_VERSION: u32 = 1;

/// Records the host sends.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "lowercase")]
pub enum HostMessage {
    Hello {
        protocol: u32,
    },
    Score {
        request_id: String,
        mode: ScoreMode,
        premise: String,
        hypothesis: String,
    },
    Shutdown,
}

impl HostMessage {
    pub fn hello() -> Self {
        HostMessage::Hello {
            protocol: PROTOCOL_VERSION,
        }
    }

    pub fn encode(&self) -> String {
        serde_json::to_string(self).expect("host records always serialize")
    }
}

impl From<&ScoreRequest> for HostMessage {
    fn from(r: &ScoreRequest) -> Self {
        HostMessage::Score {
            request_id: r.request_id.clone(),
            mode: r.mode,
            premise: r.premise.clone(),
            hypothesis: r.hypothesis.clone(),
        }
    }
}

/// The scorer's handshake reply.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HelloReply {
    pub op: String,
    pub name: String,
    pub version: String,
    pub modes: Vec<String>,
}

impl HelloReply {
    pub fn new(name: impl Into<String>, version: impl Into<String>, modes: &[ScoreMode]) -> Self {
        Self {
            op: "hello".into(),
            name: name.into(),
            version: version.into(),
            modes: modes.iter().map(|m| m.as_str().to_string()).collect(),
        }
    }

    pub fn encode(&self) -> String {
        serde_json::to_string(self).expect("hello reply always serializes")
    }
}

pub fn parse_hello_reply(line: &str) -> Result<(HelloReply, Vec<ScoreMode>), String> {
    let reply: HelloReply = serde_json::from_str(line).map_err(|e| format!("bad handshake reply: {e}"))?;
    if reply.op != "hello" {
        return Err(format!("expected op `hello`, got `{}`", reply.op));
    }
    let mut modes = Vec::new();
    for m in &reply.modes {
        match m.parse::<ScoreMode>() {
            Ok(mode) => modes.push(mode),
            Err(_) => log::warn!("scorer `{}` advertises unknown mode `{m}`", reply.name),
        }
    }
    if modes.is_empty() {
        return Err("handshake advertised no supported modes".into());
    }
    Ok((reply, modes))
}

#[derive(Serialize)]
struct ResponseRecord<'a> {
    request_id: &'a str,
    #[serde(skip_serializing_if = "Option::is_none")]
    score: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    error: Option<&'a str>,
}

/// Encodes a scorer response line, `request_id` first.
pub fn encode_response(resp: &ScoreResponse) -> String {
    let record = ResponseRecord {
        request_id: &resp.request_id,
        score: resp.score(),
        error: resp.error(),
    };
    serde_json::to_string(&record).expect("response records always serialize")
}

/// Parses one scorer response line, enforcing the exactly-one-of rule and
/// finite scores.
pub fn parse_response(line: &str) -> Result<ScoreResponse, String> {
    let value: Value = serde_json::from_str(line).map_err(|e| format!("unparseable line: {e}"))?;
    let Value::Object(obj) = value else {
        return Err("response is not an object".into());
    };
    let request_id = match obj.get("request_id") {
        Some(Value::String(s)) => s.clone(),
        Some(_) => return Err("`request_id` must be a string".into()),
        None => return Err("response lacks `request_id`".into()),
    };
    let result = match (obj.get("score"), obj.get("error")) {
        (Some(score), None) => {
            let v = score
                .as_f64()
                .ok_or_else(|| format!("response `{request_id}`: `score` must be a number"))?;
            if !v.is_finite() {
                return Err(format!("response `{request_id}`: non-finite score"));
            }
            Ok(v)
        }
        (None, Some(Value::String(e))) => Err(e.clone()),
        (None, Some(_)) => return Err(format!("response `{request_id}`: `error` must be a string")),
        (Some(_), Some(_)) => return Err(format!("response `{request_id}` carries both `score` and `error`")),
        (None, None) => return Err(format!("response `{request_id}` carries neither `score` nor `error`")),
    };
    Ok(ScoreResponse { request_id, result })
}
