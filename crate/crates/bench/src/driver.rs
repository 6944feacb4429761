//! Tool-call transports: the in-process server and a child process
//! speaking newline-delimited JSON-RPC over stdio.

use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::process::{Child, ChildStdin, ChildStdout, Command, Stdio};

use memctl_core::Engine;
use memctl_server::{RpcError, Server};
use serde_json::{json, Value};

use crate::case::CaseFile;
use crate::error::{BenchError, Result};

/// Error returned by a tool, as opposed to a transport failure.
#[derive(Debug, Clone, PartialEq)]
pub struct ToolError {
    pub rpc_code: i64,
    /// Machine-readable error code from the error data, when present.
    pub code: Option<String>,
    pub message: String,
}

impl ToolError {
    fn from_rpc(value: &Value) -> ToolError {
        ToolError {
            rpc_code: value["code"].as_i64().unwrap_or(0),
            code: value["data"]["error"].as_str().map(str::to_string),
            message: value["message"].as_str().unwrap_or_default().to_string(),
        }
    }
}

impl From<RpcError> for ToolError {
    fn from(e: RpcError) -> Self {
        ToolError {
            rpc_code: e.code,
            code: e
                .data
                .as_ref()
                .and_then(|d| d["error"].as_str())
                .map(str::to_string),
            message: e.message,
        }
    }
}

pub type ToolResult = std::result::Result<Value, ToolError>;

pub trait ToolDriver {
    /// Call one tool. The outer error is a transport failure.
    fn call(&mut self, name: &str, arguments: Value) -> Result<ToolResult>;
}

/// Upsert every case's seeded memories into the bank.
pub fn seed_bank(engine: &mut Engine, cases: &CaseFile) -> Result<usize> {
    let mut n = 0;
    for case in &cases.cases {
        for memory in &case.seeded_memories {
            engine.upsert_memory(memory.clone(), "bench-seed")?;
            n += 1;
        }
    }
    Ok(n)
}

pub struct InProcessDriver {
    server: Server,
}

impl InProcessDriver {
    pub fn new(engine: Engine) -> Self {
        InProcessDriver {
            server: Server::new(engine),
        }
    }

    pub fn server(&self) -> &Server {
        &self.server
    }
}

impl ToolDriver for InProcessDriver {
    fn call(&mut self, name: &str, arguments: Value) -> Result<ToolResult> {
        Ok(self
            .server
            .call_tool(name, arguments)
            .map_err(ToolError::from))
    }
}

/// Child process running `<program> serve --config <cfg> --cases <cases>`.
pub struct LiveDriver {
    child: Child,
    stdin: Option<ChildStdin>,
    stdout: BufReader<ChildStdout>,
    next_id: u64,
}

impl LiveDriver {
    pub fn spawn(program: &Path, config_path: &Path, cases_path: &Path) -> Result<LiveDriver> {
        let mut child = Command::new(program)
            .arg("serve")
            .arg("--config")
            .arg(config_path)
            .arg("--cases")
            .arg(cases_path)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::inherit())
            .spawn()
            .map_err(|e| BenchError::Spawn(format!("{}: {e}", program.display())))?;
        let stdin = child
            .stdin
            .take()
            .ok_or_else(|| BenchError::Spawn("no stdin".into()))?;
        let stdout = child
            .stdout
            .take()
            .ok_or_else(|| BenchError::Spawn("no stdout".into()))?;
        let mut driver = LiveDriver {
            child,
            stdin: Some(stdin),
            stdout: BufReader::new(stdout),
            next_id: 0,
        };
        let init = driver.request(
            "initialize",
            json!({"protocolVersion": memctl_server::PROTOCOL_VERSION}),
        )?;
        if init.get("result").is_none() {
            return Err(BenchError::Spawn(format!("initialize failed: {init}")));
        }
        driver.notify("notifications/initialized")?;
        let tools = driver.request("tools/list", json!({}))?;
        let n = tools["result"]["tools"].as_array().map_or(0, Vec::len);
        if n != memctl_server::TOOL_NAMES.len() {
            return Err(BenchError::Protocol(format!("server lists {n} tools")));
        }
        Ok(driver)
    }

    fn write(&mut self, message: &Value) -> Result<()> {
        let stdin = self
            .stdin
            .as_mut()
            .ok_or_else(|| BenchError::Protocol("stdin closed".into()))?;
        writeln!(stdin, "{message}")?;
        stdin.flush()?;
        Ok(())
    }

    fn notify(&mut self, method: &str) -> Result<()> {
        self.write(&json!({"jsonrpc": "2.0", "method": method}))
    }

    fn request(&mut self, method: &str, params: Value) -> Result<Value> {
        self.next_id += 1;
        let id = self.next_id;
        self.write(&json!({"jsonrpc": "2.0", "id": id, "method": method, "params": params}))?;
        let mut line = String::new();
        if self.stdout.read_line(&mut line)? == 0 {
            return Err(BenchError::Protocol("server closed stdout".into()));
        }
        let response: Value = serde_json::from_str(&line)?;
        if response["id"] != json!(id) {
            return Err(BenchError::Protocol(format!(
                "response id {} for request {id}",
                response["id"]
            )));
        }
        Ok(response)
    }

    /// Close stdin and wait for the child to exit.
    pub fn shutdown(mut self) -> Result<()> {
        self.stdin.take();
        let status = self.child.wait()?;
        if !status.success() {
            return Err(BenchError::Protocol(format!("server exited with {status}")));
        }
        Ok(())
    }
}

impl ToolDriver for LiveDriver {
    fn call(&mut self, name: &str, arguments: Value) -> Result<ToolResult> {
        let response = self.request("tools/call", json!({"name": name, "arguments": arguments}))?;
        if let Some(err) = response.get("error") {
            return Ok(Err(ToolError::from_rpc(err)));
        }
        Ok(Ok(response["result"]["structuredContent"].clone()))
    }
}

impl Drop for LiveDriver {
    fn drop(&mut self) {
        self.stdin.take();
        let _ = self.child.wait();
    }
}

/// Path of the running executable, used to spawn `serve` for live modes.
pub fn current_program() -> Result<PathBuf> {
    Ok(std::env::current_exe()?)
}
