//! Replays a case file against the pipeline in one of the five modes.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use memctl_core::model::DecisionKind;
use memctl_core::{canonical, Config, Engine};
use serde_json::{json, Value};
use tempfile::TempDir;

use crate::case::{BenchmarkCase, CaseFile, ScriptStep};
use crate::driver::{
    current_program, seed_bank, InProcessDriver, LiveDriver, ToolDriver, ToolResult,
};
use crate::error::{BenchError, Result};
use crate::report::{
    compute_metrics, CaseVerdict, GateCheckpoint, Mode, RunReport, Sample, Thresholds,
};

/// Cases between gate checkpoints in online-shadow mode.
pub const GATE_CHECK_EVERY: usize = 50;

#[derive(Debug, Clone, Default)]
pub struct ReplayOptions {
    /// Executable providing the `serve` subcommand; defaults to the
    /// running executable.
    pub program: Option<PathBuf>,
    /// Store directory to keep after the run; must be absent or empty.
    /// A temporary directory is used otherwise.
    pub store_dir: Option<PathBuf>,
}

/// Configuration a mode runs under: the base config with its store,
/// clock and shadow settings overridden.
pub fn mode_config(base: &Config, mode: Mode, store_dir: &Path, now_ms: i64) -> Config {
    let mut cfg = base.clone();
    cfg.store_dir = store_dir.to_path_buf();
    cfg.clock.fixed_now_ms = Some(now_ms);
    cfg.shadow.enabled = !mode.is_control();
    cfg.shadow.learn = !mode.is_control();
    cfg
}

struct Recorder<'a> {
    driver: &'a mut dyn ToolDriver,
    samples: BTreeMap<String, Vec<Sample>>,
}

impl Recorder<'_> {
    fn call(&mut self, name: &str, arguments: Value) -> Result<ToolResult> {
        let start = Instant::now();
        let result = self.driver.call(name, arguments)?;
        let ms = start.elapsed().as_secs_f64() * 1e3;
        self.samples
            .entry(name.to_string())
            .or_default()
            .push(Sample {
                ms,
                ok: result.is_ok(),
            });
        Ok(result)
    }
}

fn decision_of(v: &Value) -> Option<DecisionKind> {
    serde_json::from_value(v["decision"].clone()).ok()
}

fn run_case(rec: &mut Recorder<'_>, case: &BenchmarkCase, telemetry: bool) -> Result<CaseVerdict> {
    let mut verdict = CaseVerdict {
        case_id: case.case_id.clone(),
        algorithm_family: case.algorithm_family,
        category: case.category,
        expected_decision: case.expected_decision,
        expected_memory_id: case.expected_memory_id.clone(),
        decision: None,
        top_score: 0.0,
        margin: 0.0,
        candidates: Vec::new(),
        correct: false,
        hard_negative: case.hard_negative,
        hard_negative_fp: false,
        injected_bug_family: case.injected_bug_family,
        scripted_ok: false,
        feedback_written: false,
        bandit_updated: false,
        notes: Vec::new(),
    };
    let response = match rec.call(
        "issue_match",
        json!({"context": case.query, "include_telemetry": telemetry}),
    )? {
        Ok(v) => v,
        Err(e) => {
            verdict
                .notes
                .push(format!("issue_match failed: {}", e.message));
            return Ok(verdict);
        }
    };
    let decision = decision_of(&response);
    verdict.decision = decision;
    verdict.top_score = response["top_score"].as_f64().unwrap_or(0.0);
    verdict.margin = response["margin"].as_f64().unwrap_or(0.0);
    verdict.candidates = response["candidates"]
        .as_array()
        .map(|a| {
            a.iter()
                .filter_map(|c| c["memory_id"].as_str().map(str::to_string))
                .collect()
        })
        .unwrap_or_default();
    let top = verdict.candidates.first().cloned();
    verdict.correct = decision == Some(case.expected_decision)
        && case
            .expected_memory_id
            .as_ref()
            .is_none_or(|m| top.as_ref() == Some(m));
    verdict.hard_negative_fp = case.hard_negative
        && decision.is_some_and(|d| d != DecisionKind::Abstain)
        && top != case.expected_memory_id;
    let event_id = response["retrieval_event_id"]
        .as_str()
        .unwrap_or_default()
        .to_string();

    let mut steps_ok = true;
    for step in &case.feedback_script {
        match step {
            ScriptStep::Feedback {
                label,
                memory_ref,
                expect_error,
            } => {
                let mut args = json!({"retrieval_event_id": event_id, "label": label});
                if let Some(m) = memory_ref {
                    args["memory_ref"] = json!(m);
                }
                match (rec.call("issue_feedback", args)?, expect_error) {
                    (Ok(ack), None) => {
                        verdict.feedback_written = true;
                        verdict.bandit_updated |= ack["bandit_updated"] == json!(true);
                    }
                    (Err(e), Some(code)) if e.code.as_deref() == Some(code.as_str()) => {}
                    (outcome, _) => {
                        steps_ok = false;
                        verdict.notes.push(format!(
                            "feedback {label:?} unexpected outcome: {outcome:?}"
                        ));
                    }
                }
            }
            ScriptStep::Resolution {
                pattern_id,
                variant_id,
                fix_summary,
                marked_wrong,
                expect_implicit,
            } => {
                let args = json!({
                    "context": case.query,
                    "resolution": {"pattern_id": pattern_id, "variant_id": variant_id, "marked_wrong": marked_wrong},
                    "fix_summary": fix_summary,
                });
                match rec.call("issue_record_resolution", args)? {
                    Ok(ack) => {
                        let linked = ack["outcome"] == "linked";
                        verdict.feedback_written |= linked;
                        verdict.bandit_updated |= ack["bandit_updated"] == json!(true);
                        let own_event =
                            ack["retrieval_event_id"].as_str() == Some(event_id.as_str());
                        let implicit_ok = expect_implicit
                            .as_ref()
                            .is_none_or(|t| ack["implicit_type"].as_str() == Some(t.as_str()));
                        if !(linked && own_event && implicit_ok) {
                            steps_ok = false;
                            verdict
                                .notes
                                .push(format!("resolution unexpected ack: {ack}"));
                        }
                    }
                    Err(e) => {
                        steps_ok = false;
                        verdict
                            .notes
                            .push(format!("resolution failed: {}", e.message));
                    }
                }
            }
        }
    }
    let decision_ok = match case.scripted_decision {
        Some(d) => decision == Some(d),
        None => verdict.correct,
    };
    verdict.scripted_ok = decision_ok && steps_ok;
    Ok(verdict)
}

fn checkpoint(rec: &mut Recorder<'_>, after_cases: usize) -> Result<GateCheckpoint> {
    let m = rec
        .call("issue_metrics", json!({}))?
        .map_err(|e| BenchError::Protocol(e.message))?;
    Ok(GateCheckpoint {
        after_cases,
        n_rows: m["report"]["n_rows"].as_u64().unwrap_or(0),
        recommendation: m["verdict"]["recommendation"]
            .as_str()
            .unwrap_or_default()
            .to_string(),
        reason: m["verdict"]["reason"]
            .as_str()
            .unwrap_or_default()
            .to_string(),
    })
}

fn run_cases(driver: &mut dyn ToolDriver, cases: &CaseFile, mode: Mode) -> Result<RunReport> {
    let mut rec = Recorder {
        driver,
        samples: BTreeMap::new(),
    };
    let telemetry = mode == Mode::OnlineShadow;
    let mut verdicts = Vec::with_capacity(cases.cases.len());
    let mut trajectory = Vec::new();
    for (i, case) in cases.cases.iter().enumerate() {
        verdicts.push(run_case(&mut rec, case, telemetry)?);
        if mode == Mode::OnlineShadow && (i + 1) % GATE_CHECK_EVERY == 0 {
            trajectory.push(checkpoint(&mut rec, i + 1)?);
        }
    }
    let server_metrics = rec
        .call("issue_metrics", json!({}))?
        .map_err(|e| BenchError::Protocol(e.message))?;
    let metrics = compute_metrics(&verdicts, &rec.samples)?;
    Ok(RunReport {
        mode,
        seed: cases.header.seed,
        thresholds: Thresholds::default(),
        metrics,
        server_metrics,
        gate_trajectory: trajectory,
        verdicts,
    })
}

fn prepare_store(opts: &ReplayOptions, tmp: &TempDir) -> Result<PathBuf> {
    let dir = opts
        .store_dir
        .clone()
        .unwrap_or_else(|| tmp.path().join("store"));
    if dir.exists() && std::fs::read_dir(&dir)?.next().is_some() {
        return Err(BenchError::StoreNotEmpty(dir));
    }
    Ok(dir)
}

/// Replay every case in order and build the run report.
pub fn replay(
    cases: &CaseFile,
    mode: Mode,
    base: &Config,
    opts: &ReplayOptions,
) -> Result<RunReport> {
    let tmp = TempDir::new()?;
    let store_dir = prepare_store(opts, &tmp)?;
    let cfg = mode_config(base, mode, &store_dir, cases.header.now_ms);
    if mode.is_live() {
        let cfg_path = tmp.path().join("config.json");
        std::fs::write(&cfg_path, canonical::to_vec(&cfg)?)?;
        let cases_path = tmp.path().join("cases.jsonl");
        std::fs::write(&cases_path, cases.to_bytes()?)?;
        let program = match &opts.program {
            Some(p) => p.clone(),
            None => current_program()?,
        };
        let mut driver = LiveDriver::spawn(&program, &cfg_path, &cases_path)?;
        let report = run_cases(&mut driver, cases, mode)?;
        driver.shutdown()?;
        Ok(report)
    } else {
        let mut engine = Engine::open(cfg)?;
        seed_bank(&mut engine, cases)?;
        let mut driver = InProcessDriver::new(engine);
        run_cases(&mut driver, cases, mode)
    }
}
