//! Delayed-outcome attribution: pick the retrieval event a later
//! resolution belongs to, weight it, and type the implicit feedback.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::feedback::FeedbackType;
use crate::normalize::QueryProfile;

pub const EXPLICIT_CONFIDENCE: f64 = 1.00;
pub const IMPLICIT_CONFIDENCE: f64 = 0.75;

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ResolutionSummary {
    pub pattern_id: String,
    pub variant_id: String,
    #[serde(default)]
    pub notes: String,
    #[serde(default)]
    pub marked_wrong: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LinkerConfig {
    pub max_events: usize,
    pub max_age_ms: i64,
    pub min_eta: f64,
}

impl Default for LinkerConfig {
    fn default() -> Self {
        LinkerConfig {
            max_events: 50,
            max_age_ms: 24 * 60 * 60 * 1000,
            min_eta: 0.3,
        }
    }
}

/// A retrieval event as seen by the linker.
#[derive(Debug, Clone, Copy)]
pub struct WindowEvent<'a> {
    pub event_id: &'a str,
    pub seq: u64,
    pub timestamp_ms: i64,
    pub session_id: &'a str,
    pub profile: &'a QueryProfile,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LinkSelection {
    pub event_id: Option<String>,
    pub confidence: f64,
}

fn same(a: &Option<String>, b: &Option<String>) -> bool {
    matches!((a, b), (Some(x), Some(y)) if x == y)
}

/// `0.4 [same repo] + 0.3 [same project] + 0.3 cosine`.
pub fn compatibility(resolution: &QueryProfile, event: &QueryProfile) -> f64 {
    let repo = if same(&resolution.scope.repo, &event.scope.repo) {
        0.4
    } else {
        0.0
    };
    let project = if same(&resolution.scope.project, &event.scope.project) {
        0.3
    } else {
        0.0
    };
    repo + project + 0.3 * resolution.token_signature.cosine(&event.token_signature)
}

/// Choose the link target. `recent` must be in append order (oldest first);
/// `exists` answers whether an explicit id names a stored retrieval event.
pub fn select_link_event(
    explicit_id: Option<&str>,
    resolution: &QueryProfile,
    session_id: &str,
    now_ms: i64,
    recent: &[WindowEvent<'_>],
    exists: impl Fn(&str) -> bool,
    cfg: &LinkerConfig,
) -> Result<LinkSelection> {
    if let Some(id) = explicit_id {
        if !exists(id) {
            return Err(Error::UnknownRetrievalEvent(id.to_string()));
        }
        return Ok(LinkSelection {
            event_id: Some(id.to_string()),
            confidence: EXPLICIT_CONFIDENCE,
        });
    }
    if session_id.is_empty() {
        return Ok(LinkSelection {
            event_id: None,
            confidence: 0.0,
        });
    }
    let start = recent.len().saturating_sub(cfg.max_events);
    let mut best: Option<(f64, u64, &str)> = None;
    for ev in &recent[start..] {
        if ev.session_id != session_id || now_ms - ev.timestamp_ms > cfg.max_age_ms {
            continue;
        }
        let eta = compatibility(resolution, ev.profile);
        if eta < cfg.min_eta {
            continue;
        }
        let better = match best {
            None => true,
            Some((b_eta, b_seq, _)) => eta > b_eta || (eta == b_eta && ev.seq > b_seq),
        };
        if better {
            best = Some((eta, ev.seq, ev.event_id));
        }
    }
    Ok(match best {
        Some((_, _, id)) => LinkSelection {
            event_id: Some(id.to_string()),
            confidence: IMPLICIT_CONFIDENCE,
        },
        None => LinkSelection {
            event_id: None,
            confidence: 0.0,
        },
    })
}

/// Implicit feedback type from the logged top candidate's pattern id.
pub fn infer_implicit_type(
    top_pattern_id: Option<&str>,
    resolution: &ResolutionSummary,
) -> FeedbackType {
    if resolution.marked_wrong {
        FeedbackType::FalsePositive
    } else if top_pattern_id == Some(resolution.pattern_id.as_str()) {
        FeedbackType::FixVerified
    } else {
        FeedbackType::CandidateRejected
    }
}
