//! Published tool schemas. `docs/tool_schemas.json` is the canonical
//! encoding of [`tool_list`] and is checked by a golden test.

use serde_json::{json, Value};

pub const SCHEMA_VERSION: u32 = 1;

fn string_list() -> Value {
    json!({"type": "array", "items": {"type": "string"}})
}

fn context_schema() -> Value {
    json!({
        "type": "object",
        "additionalProperties": false,
        "description": "Developer context at the time of the failure. error_text or query_text must be non-empty.",
        "properties": {
            "error_text": {"type": "string"},
            "query_text": {"type": "string"},
            "project_scope": {"type": "string"},
            "repo": {"type": "string"},
            "repo_paths": string_list(),
            "exec_context": {
                "type": "object",
                "additionalProperties": false,
                "properties": {
                    "stack_frames": string_list(),
                    "env_tags": string_list(),
                    "command": {"type": "string"}
                }
            },
            "session": {
                "type": "object",
                "additionalProperties": false,
                "required": ["session_id"],
                "properties": {
                    "session_id": {"type": "string"},
                    "user_id": {"type": "string"}
                }
            }
        }
    })
}

fn tool(name: &str, description: &str, schema: Value) -> Value {
    json!({"name": name, "description": description, "inputSchema": schema})
}

/// The five tools, in a fixed order.
pub fn tool_list() -> Value {
    let tools = vec![
        tool(
            "issue_match",
            "Match a failing context against stored fixes. Returns match, ambiguous or abstain with up to three candidates and a retrieval event id.",
            json!({
                "type": "object",
                "additionalProperties": false,
                "required": ["context"],
                "properties": {
                    "context": context_schema(),
                    "include_telemetry": {"type": "boolean", "default": false}
                }
            }),
        ),
        tool(
            "issue_feedback",
            "Record explicit feedback on a retrieval event.",
            json!({
                "type": "object",
                "additionalProperties": false,
                "required": ["retrieval_event_id", "label"],
                "properties": {
                    "retrieval_event_id": {"type": "string"},
                    "memory_ref": {"type": "string"},
                    "label": {"type": "string", "minLength": 1},
                    "override_reward": {"type": "number"}
                }
            }),
        ),
        tool(
            "issue_record_resolution",
            "Store a verified fix and link it to an earlier retrieval event, explicitly or by session compatibility.",
            json!({
                "type": "object",
                "additionalProperties": false,
                "required": ["context", "resolution"],
                "properties": {
                    "context": context_schema(),
                    "resolution": {
                        "type": "object",
                        "additionalProperties": false,
                        "required": ["pattern_id", "variant_id"],
                        "properties": {
                            "pattern_id": {"type": "string", "minLength": 1},
                            "variant_id": {"type": "string", "minLength": 1},
                            "notes": {"type": "string"},
                            "marked_wrong": {"type": "boolean", "default": false}
                        }
                    },
                    "fix_summary": {"type": "string"},
                    "retrieval_event_id": {"type": "string"},
                    "memory_id": {"type": "string"}
                }
            }),
        ),
        tool(
            "issue_metrics",
            "Off-policy estimates, rollout gate verdict and telemetry counters over the logged retrieval events.",
            json!({
                "type": "object",
                "additionalProperties": false,
                "properties": {
                    "window": {"type": "integer", "minimum": 1},
                    "persist": {"type": "boolean", "default": false}
                }
            }),
        ),
        tool(
            "issue_health",
            "Store sequence, configuration digest and uptime.",
            json!({"type": "object", "additionalProperties": false, "properties": {}}),
        ),
    ];
    json!({"schema_version": SCHEMA_VERSION, "tools": tools})
}
