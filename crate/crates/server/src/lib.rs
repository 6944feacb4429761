//! Newline-delimited JSON-RPC 2.0 over stdio exposing the memory tools.
//!
//! Requests are handled strictly in arrival order, which makes this the
//! serialization point for every store write.

pub mod schemas;

use std::io::{BufRead, Write};

use memctl_core::canonical;
use memctl_core::engine::{FeedbackRequest, MatchOptions, MetricsRequest, ResolutionRequest};
use memctl_core::model::Context;
use memctl_core::{Engine, Error};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

pub const PROTOCOL_VERSION: &str = "2024-11-05";

pub const PARSE_ERROR: i64 = -32700;
pub const INVALID_REQUEST: i64 = -32600;
pub const METHOD_NOT_FOUND: i64 = -32601;
pub const INVALID_PARAMS: i64 = -32602;
pub const INTERNAL_ERROR: i64 = -32000;

pub const TOOL_NAMES: [&str; 5] = [
    "issue_match",
    "issue_feedback",
    "issue_record_resolution",
    "issue_metrics",
    "issue_health",
];

#[derive(Debug, Clone, PartialEq)]
pub struct RpcError {
    pub code: i64,
    pub message: String,
    pub data: Option<Value>,
}

impl RpcError {
    fn new(code: i64, message: impl Into<String>) -> Self {
        RpcError {
            code,
            message: message.into(),
            data: None,
        }
    }

    fn to_value(&self) -> Value {
        let mut v = json!({"code": self.code, "message": self.message});
        if let Some(d) = &self.data {
            v["data"] = d.clone();
        }
        v
    }
}

impl From<Error> for RpcError {
    fn from(e: Error) -> Self {
        let code = if e.is_client_error() {
            INVALID_PARAMS
        } else {
            INTERNAL_ERROR
        };
        RpcError {
            code,
            message: e.to_string(),
            data: Some(json!({"error": e.code()})),
        }
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct MatchArgs {
    context: Context,
    #[serde(default)]
    include_telemetry: bool,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct Empty {}

#[derive(Deserialize)]
struct CallParams {
    name: String,
    #[serde(default)]
    arguments: Option<Value>,
}

fn args<T: DeserializeOwned>(v: Value) -> Result<T, RpcError> {
    serde_json::from_value(v).map_err(|e| RpcError {
        code: INVALID_PARAMS,
        message: format!("invalid arguments: {e}"),
        data: Some(json!({"error": "invalid_argument"})),
    })
}

fn to_json<T: Serialize>(v: &T) -> Result<Value, RpcError> {
    serde_json::to_value(v).map_err(|e| RpcError::new(INTERNAL_ERROR, e.to_string()))
}

pub struct Server {
    engine: Engine,
    initialized: bool,
}

impl Server {
    pub fn new(engine: Engine) -> Self {
        Server {
            engine,
            initialized: false,
        }
    }

    pub fn engine(&self) -> &Engine {
        &self.engine
    }

    /// Run one tool by name with already-parsed arguments.
    pub fn call_tool(&mut self, name: &str, arguments: Value) -> Result<Value, RpcError> {
        let arguments = if arguments.is_null() {
            json!({})
        } else {
            arguments
        };
        match name {
            "issue_match" => {
                let a: MatchArgs = args(arguments)?;
                let opts = MatchOptions {
                    include_telemetry: a.include_telemetry,
                };
                to_json(&self.engine.issue_match(&a.context, opts)?)
            }
            "issue_feedback" => {
                let a: FeedbackRequest = args(arguments)?;
                to_json(&self.engine.issue_feedback(&a)?)
            }
            "issue_record_resolution" => {
                let a: ResolutionRequest = args(arguments)?;
                to_json(&self.engine.record_resolution(&a)?)
            }
            "issue_metrics" => {
                let a: MetricsRequest = args(arguments)?;
                to_json(&self.engine.metrics(&a)?)
            }
            "issue_health" => {
                let _: Empty = args(arguments)?;
                to_json(&self.engine.health())
            }
            other => Err(RpcError::new(
                INVALID_PARAMS,
                format!("unknown tool {other:?}"),
            )),
        }
    }

    fn dispatch(&mut self, method: &str, params: Value) -> Result<Value, RpcError> {
        match method {
            "initialize" => {
                self.initialized = true;
                Ok(json!({
                    "protocolVersion": PROTOCOL_VERSION,
                    "serverInfo": {"name": "memctl", "version": env!("CARGO_PKG_VERSION")},
                    "capabilities": {"tools": {"listChanged": false}}
                }))
            }
            "ping" => Ok(json!({})),
            "tools/list" => Ok(json!({"tools": schemas::tool_list()["tools"].clone()})),
            "tools/call" => {
                let p: CallParams = args(params)?;
                let result = self.call_tool(&p.name, p.arguments.unwrap_or(Value::Null))?;
                let text = canonical::value_to_vec(&result).map_err(RpcError::from)?;
                Ok(json!({
                    "content": [{"type": "text", "text": String::from_utf8_lossy(&text)}],
                    "structuredContent": result,
                    "isError": false
                }))
            }
            _ => Err(RpcError::new(
                METHOD_NOT_FOUND,
                format!("method not found: {method}"),
            )),
        }
    }

    /// Handle one request line. Returns the response line, or `None` for
    /// notifications.
    pub fn handle_line(&mut self, line: &str) -> Option<String> {
        let response = match serde_json::from_str::<Value>(line) {
            Err(e) => Some(error_response(
                Value::Null,
                &RpcError::new(PARSE_ERROR, format!("parse error: {e}")),
            )),
            Ok(msg) => self.handle_message(msg),
        };
        response.map(|v| {
            String::from_utf8(canonical::value_to_vec(&v).expect("response encodes"))
                .expect("utf-8")
        })
    }

    fn handle_message(&mut self, msg: Value) -> Option<Value> {
        let id = msg.get("id").cloned();
        let valid_id = matches!(
            id,
            None | Some(Value::Null | Value::String(_) | Value::Number(_))
        );
        let method = msg.get("method").and_then(Value::as_str);
        if !msg.is_object()
            || msg.get("jsonrpc") != Some(&json!("2.0"))
            || method.is_none()
            || !valid_id
        {
            return Some(error_response(
                id.unwrap_or(Value::Null),
                &RpcError::new(INVALID_REQUEST, "invalid request"),
            ));
        }
        let method = method.expect("checked").to_string();
        let params = msg.get("params").cloned().unwrap_or(Value::Null);
        let Some(id) = id else {
            // Notifications never get a response.
            if method != "notifications/initialized" {
                let _ = self.dispatch(&method, params);
            }
            return None;
        };
        Some(match self.dispatch(&method, params) {
            Ok(result) => json!({"jsonrpc": "2.0", "id": id, "result": result}),
            Err(e) => error_response(id, &e),
        })
    }

    /// Serve until the input closes.
    pub fn serve<R: BufRead, W: Write>(&mut self, input: R, mut output: W) -> std::io::Result<()> {
        for line in input.lines() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            if let Some(resp) = self.handle_line(&line) {
                output.write_all(resp.as_bytes())?;
                output.write_all(b"\n")?;
                output.flush()?;
            }
        }
        Ok(())
    }
}

fn error_response(id: Value, e: &RpcError) -> Value {
    json!({"jsonrpc": "2.0", "id": id, "error": e.to_value()})
}

/// Resolve the config path from `--config` or `MEMCTL_CONFIG`.
pub fn load_config(explicit: Option<&std::path::Path>) -> memctl_core::Result<memctl_core::Config> {
    let env = std::env::var_os("MEMCTL_CONFIG").map(std::path::PathBuf::from);
    match explicit.map(std::path::Path::to_path_buf).or(env) {
        Some(path) => memctl_core::Config::load(&path),
        None => Ok(memctl_core::Config::default()),
    }
}

/// Open the engine and serve stdio until EOF.
pub fn run_stdio(config: memctl_core::Config) -> Result<(), Box<dyn std::error::Error>> {
    let engine = Engine::open(config)?;
    let mut server = Server::new(engine);
    let stdin = std::io::stdin();
    let stdout = std::io::stdout();
    server.serve(stdin.lock(), stdout.lock())?;
    Ok(())
}
