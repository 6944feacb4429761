//! End-to-end engine behavior across restarts, through the public API.

use memctl_core::engine::{
    FeedbackRequest, LinkOutcome, MatchOptions, MetricsRequest, ResolutionRequest,
};
use memctl_core::governance::RlControlMetadata;
use memctl_core::linker::ResolutionSummary;
use memctl_core::model::{
    Context, DecisionKind, ExecContext, FailurePattern, FixVariant, MemoryRecord, QualityPrior,
    SessionInfo,
};
use memctl_core::store::{EventKind, LOG_FILE};
use memctl_core::{canonical, Config, Engine, Error};
use tempfile::TempDir;

const NOW: i64 = 1_767_225_600_000;

fn config(dir: &TempDir) -> Config {
    let mut cfg = Config {
        store_dir: dir.path().join("store"),
        fsync: false,
        ..Config::default()
    };
    cfg.clock.fixed_now_ms = Some(NOW);
    cfg
}

fn memory(id: &str, exception: &str, path: &str) -> MemoryRecord {
    MemoryRecord {
        memory_id: id.into(),
        pattern_id: format!("{id}-pattern"),
        variant_id: "v1".into(),
        pattern: FailurePattern {
            signature: format!(
                "{exception}: connection pool exhausted in worker_queue while draining jobs"
            ),
            exception: Some(exception.into()),
            command: Some("pytest".into()),
            paths: vec![path.into()],
            project_scope: Some("jobs".into()),
            ..Default::default()
        },
        variant: FixVariant {
            summary: "Raise the pool size and release connections".into(),
            fix: String::new(),
        },
        metadata: RlControlMetadata::default(),
        quality: QualityPrior {
            confidence: 0.9,
            successes: 3,
            last_verified_ms: NOW,
            ..Default::default()
        },
        origin_user: Some("dev".into()),
    }
}

fn context(session: &str) -> Context {
    Context {
        error_text: "TimeoutError: connection pool exhausted in worker_queue while draining jobs"
            .into(),
        query_text: "worker_queue stalls under pytest".into(),
        project_scope: Some("jobs".into()),
        repo: None,
        repo_paths: vec!["src/jobs/queue.py".into()],
        exec_context: Some(ExecContext {
            command: Some("pytest tests/test_queue.py".into()),
            ..Default::default()
        }),
        session: SessionInfo {
            session_id: session.into(),
            user_id: "dev".into(),
        },
    }
}

fn seeded(cfg: Config) -> Engine {
    let mut engine = Engine::open(cfg).unwrap();
    engine
        .upsert_memory(
            memory("mem-pool", "TimeoutError", "src/jobs/queue.py"),
            "test",
        )
        .unwrap();
    engine
        .upsert_memory(
            memory("mem-other", "KeyError", "src/billing/ledger.py"),
            "test",
        )
        .unwrap();
    engine
}

#[test]
fn full_loop_survives_restart() {
    let dir = TempDir::new().unwrap();
    let mut engine = seeded(config(&dir));
    let m = engine
        .issue_match(&context("s1"), MatchOptions::default())
        .unwrap();
    assert_eq!(m.decision, DecisionKind::Match, "{m:?}");
    assert_eq!(m.candidates[0].memory_id, "mem-pool");

    let ack = engine
        .issue_feedback(&FeedbackRequest {
            retrieval_event_id: m.retrieval_event_id.clone(),
            memory_ref: Some("mem-pool".into()),
            label: "candidate_accepted".into(),
            override_reward: None,
        })
        .unwrap();
    assert!(ack.bandit_updated && ack.reward == 0.35);

    let req = ResolutionRequest {
        context: context("s1"),
        resolution: ResolutionSummary {
            pattern_id: "mem-pool-pattern".into(),
            variant_id: "v1".into(),
            notes: String::new(),
            marked_wrong: false,
        },
        fix_summary: "pool size raised".into(),
        retrieval_event_id: None,
        memory_id: None,
    };
    let linked = engine.record_resolution(&req).unwrap();
    assert_eq!(linked.outcome, LinkOutcome::Linked);
    assert_eq!(
        linked.retrieval_event_id.as_deref(),
        Some(m.retrieval_event_id.as_str())
    );

    let metrics = engine
        .metrics(&MetricsRequest {
            window: None,
            persist: true,
        })
        .unwrap();
    assert_eq!(metrics.counters.retrieval_events, 1);
    let state_before = canonical::to_vec(engine.store().state()).unwrap();
    let seq = engine.store().last_seq();
    drop(engine);

    let mut reopened = Engine::open(config(&dir)).unwrap();
    assert_eq!(reopened.store().last_seq(), seq);
    assert_eq!(
        canonical::to_vec(reopened.store().state()).unwrap(),
        state_before
    );
    assert_eq!(
        reopened.record_resolution(&req).unwrap().outcome,
        LinkOutcome::Duplicate
    );
    let again = reopened
        .issue_match(&context("s2"), MatchOptions::default())
        .unwrap();
    assert_eq!(again.decision, DecisionKind::Match);

    let kinds: Vec<EventKind> = reopened
        .store()
        .read_log()
        .unwrap()
        .iter()
        .map(|r| r.kind)
        .collect();
    for kind in [
        EventKind::MemoryUpsert,
        EventKind::Retrieval,
        EventKind::Feedback,
        EventKind::DelayedLink,
        EventKind::OpeReport,
    ] {
        assert!(kinds.contains(&kind), "{kind:?} missing from the log");
    }
}

#[test]
fn control_config_never_learns() {
    let dir = TempDir::new().unwrap();
    let mut engine = seeded(config(&dir).control());
    let m = engine
        .issue_match(
            &context("s1"),
            MatchOptions {
                include_telemetry: true,
            },
        )
        .unwrap();
    assert!(!m.telemetry.shadow_enabled);
    let ack = engine
        .issue_feedback(&FeedbackRequest {
            retrieval_event_id: m.retrieval_event_id,
            memory_ref: None,
            label: "fix_verified".into(),
            override_reward: None,
        })
        .unwrap();
    assert!(ack.learnable && !ack.bandit_updated);
    assert_eq!(engine.health().bandit_updates, 0);
}

#[test]
fn torn_log_needs_repair_flag() {
    let dir = TempDir::new().unwrap();
    let mut engine = seeded(config(&dir));
    engine
        .issue_match(&context("s1"), MatchOptions::default())
        .unwrap();
    let seq = engine.store().last_seq();
    drop(engine);

    let log = dir.path().join("store").join(LOG_FILE);
    let bytes = std::fs::read(&log).unwrap();
    std::fs::write(&log, &bytes[..bytes.len() - 3]).unwrap();
    assert!(matches!(
        Engine::open(config(&dir)),
        Err(Error::Corrupt { .. })
    ));

    let mut cfg = config(&dir);
    cfg.repair_truncate = true;
    let mut repaired = Engine::open(cfg).unwrap();
    assert_eq!(repaired.store().last_seq(), seq - 1);
    let m = repaired
        .issue_match(&context("s1"), MatchOptions::default())
        .unwrap();
    assert_eq!(m.retrieval_event_id, format!("evt-{seq:08}"));
}
