//! Per-case verdicts and the run report computed from them.

use std::collections::BTreeMap;

use memctl_core::model::DecisionKind;
use memctl_core::ope::nearest_rank;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::case::{CaseCategory, CaseFamily, InjectedFamily};
use crate::error::{BenchError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    OfflineControl,
    OfflineFull,
    OnlineShadow,
    LiveControl,
    LiveFull,
}

impl Mode {
    pub const ALL: [Mode; 5] = [
        Mode::OfflineControl,
        Mode::OfflineFull,
        Mode::OnlineShadow,
        Mode::LiveControl,
        Mode::LiveFull,
    ];

    pub fn is_live(self) -> bool {
        matches!(self, Mode::LiveControl | Mode::LiveFull)
    }

    /// Deterministic control: no shadow scoring, no learning.
    pub fn is_control(self) -> bool {
        matches!(self, Mode::OfflineControl | Mode::LiveControl)
    }

    pub fn parse(s: &str) -> Option<Mode> {
        Some(match s.replace('-', "_").as_str() {
            "offline_control" => Mode::OfflineControl,
            "offline_full" => Mode::OfflineFull,
            "online_shadow" => Mode::OnlineShadow,
            "live_control" => Mode::LiveControl,
            "live_full" => Mode::LiveFull,
            _ => return None,
        })
    }
}

/// Case id, decision, score and margin bits, and visible candidate ids.
pub type DecisionKey = (String, Option<DecisionKind>, u64, u64, Vec<String>);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaseVerdict {
    pub case_id: String,
    pub algorithm_family: CaseFamily,
    pub category: CaseCategory,
    pub expected_decision: DecisionKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub expected_memory_id: Option<String>,
    /// None when the match call failed.
    pub decision: Option<DecisionKind>,
    pub top_score: f64,
    pub margin: f64,
    /// Visible candidates in rank order.
    pub candidates: Vec<String>,
    pub correct: bool,
    pub hard_negative: bool,
    pub hard_negative_fp: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub injected_bug_family: Option<InjectedFamily>,
    /// Scripted decision and every scripted step behaved as declared.
    pub scripted_ok: bool,
    pub feedback_written: bool,
    pub bandit_updated: bool,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub notes: Vec<String>,
}

impl CaseVerdict {
    pub fn top_memory_id(&self) -> Option<&str> {
        self.candidates.first().map(String::as_str)
    }

    /// Decision-relevant fields only, for stream comparisons across modes.
    pub fn decision_key(&self) -> DecisionKey {
        (
            self.case_id.clone(),
            self.decision,
            self.top_score.to_bits(),
            self.margin.to_bits(),
            self.candidates.clone(),
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatencyStats {
    pub calls: usize,
    pub errors: usize,
    pub mean_ms: f64,
    pub p95_ms: f64,
}

/// Targets the run is judged against, recorded alongside the results.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Thresholds {
    pub non_injected_accuracy_min: f64,
    pub hard_negative_fp_max: f64,
    pub match_p95_ms_max: f64,
}

impl Default for Thresholds {
    fn default() -> Self {
        Thresholds {
            non_injected_accuracy_min: 0.95,
            hard_negative_fp_max: 0.0,
            match_p95_ms_max: 100.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub cases: usize,
    pub expected_decision_accuracy: f64,
    pub non_injected_accuracy: f64,
    pub hard_negative_cases: usize,
    pub hard_negative_fp_rate: f64,
    pub failure_abstain_rate: f64,
    pub feedback_write_rate: f64,
    pub contextual_stats_update_rate: f64,
    pub injected_cases: usize,
    pub injected_expectation_rate: f64,
    pub latency: BTreeMap<String, LatencyStats>,
}

/// A latency sample and whether the call succeeded.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Sample {
    pub ms: f64,
    pub ok: bool,
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// Aggregate verdicts and latency samples. Percentiles are nearest-rank.
pub fn compute_metrics(
    verdicts: &[CaseVerdict],
    samples: &BTreeMap<String, Vec<Sample>>,
) -> Result<Metrics> {
    if verdicts.is_empty() {
        return Err(BenchError::EmptyInput("no verdicts"));
    }
    let n = verdicts.len();
    let count = |f: &dyn Fn(&CaseVerdict) -> bool| verdicts.iter().filter(|v| f(v)).count();
    let non_injected: Vec<&CaseVerdict> = verdicts
        .iter()
        .filter(|v| v.injected_bug_family.is_none())
        .collect();
    let injected = n - non_injected.len();
    let hard = count(&|v| v.hard_negative);

    let mut latency = BTreeMap::new();
    for (tool, s) in samples {
        if s.is_empty() {
            continue;
        }
        let mut ms: Vec<f64> = s.iter().map(|x| x.ms).collect();
        ms.sort_by(f64::total_cmp);
        latency.insert(
            tool.clone(),
            LatencyStats {
                calls: s.len(),
                errors: s.iter().filter(|x| !x.ok).count(),
                mean_ms: ms.iter().sum::<f64>() / ms.len() as f64,
                p95_ms: nearest_rank(&ms, 0.95),
            },
        );
    }

    Ok(Metrics {
        cases: n,
        expected_decision_accuracy: ratio(count(&|v| v.correct), n),
        non_injected_accuracy: ratio(
            non_injected.iter().filter(|v| v.correct).count(),
            non_injected.len(),
        ),
        hard_negative_cases: hard,
        hard_negative_fp_rate: ratio(count(&|v| v.hard_negative && v.hard_negative_fp), hard),
        failure_abstain_rate: ratio(
            count(&|v| {
                v.expected_decision == DecisionKind::Match
                    && v.decision == Some(DecisionKind::Abstain)
            }),
            n,
        ),
        feedback_write_rate: ratio(count(&|v| v.feedback_written), n),
        contextual_stats_update_rate: ratio(count(&|v| v.bandit_updated), n),
        injected_cases: injected,
        injected_expectation_rate: ratio(
            count(&|v| v.injected_bug_family.is_some() && v.scripted_ok),
            injected,
        ),
        latency,
    })
}

/// Gate verdict observed at a point of an online-shadow run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GateCheckpoint {
    pub after_cases: usize,
    pub n_rows: u64,
    pub recommendation: String,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub mode: Mode,
    pub seed: u64,
    pub thresholds: Thresholds,
    pub metrics: Metrics,
    /// Final `issue_metrics` result from the server.
    pub server_metrics: Value,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub gate_trajectory: Vec<GateCheckpoint>,
    pub verdicts: Vec<CaseVerdict>,
}

impl RunReport {
    pub fn decision_stream(&self) -> Vec<DecisionKey> {
        self.verdicts
            .iter()
            .map(CaseVerdict::decision_key)
            .collect()
    }
}
