//! Case generator, case file round trip and metric aggregation.

use std::collections::{BTreeMap, BTreeSet};
use std::process::Command;

use memctl_bench::case::{CaseCategory, CaseFamily, CaseFile, InjectedFamily};
use memctl_bench::report::{CaseVerdict, Sample};
use memctl_bench::{compute_metrics, generate_benchmark, BenchError, RunReport};
use memctl_core::model::DecisionKind;
use tempfile::TempDir;

#[test]
fn composition_holds_for_every_seed() {
    for seed in [0, 1, 7, 20_260_101, u64::MAX] {
        let cf = generate_benchmark(seed);
        assert_eq!(cf.cases.len(), 200);
        assert_eq!(cf.header.cases, 200);
        assert_eq!(cf.header.seed, seed);
        let expected: BTreeMap<CaseFamily, usize> = CaseFamily::COMPOSITION.into_iter().collect();
        assert_eq!(cf.family_counts(), expected);
        assert_eq!(cf.hard_negative_count(), 80);

        let mut injected: BTreeMap<InjectedFamily, usize> = BTreeMap::new();
        for c in cf.cases.iter().filter(|c| c.is_injected()) {
            assert_eq!(c.algorithm_family, CaseFamily::NonRl);
            assert_eq!(c.category, CaseCategory::Injected);
            assert!(c.scripted_decision.is_some());
            *injected.entry(c.injected_bug_family.unwrap()).or_default() += 1;
        }
        assert_eq!(injected.len(), 4);
        assert!(injected.values().all(|&n| n == 10), "{injected:?}");

        let ids: BTreeSet<&str> = cf.cases.iter().map(|c| c.case_id.as_str()).collect();
        assert_eq!(ids.len(), 200, "case ids are unique");
        for c in cf.cases.iter().filter(|c| c.hard_negative) {
            let hn = c
                .hard_negative_memory_id
                .as_deref()
                .expect("hard negative memory");
            assert!(c.seeded_memories.iter().any(|m| m.memory_id == hn));
            assert_ne!(c.expected_memory_id.as_deref(), Some(hn));
        }
    }
}

#[test]
fn generation_is_byte_deterministic() {
    let a = generate_benchmark(42).to_bytes().unwrap();
    let b = generate_benchmark(42).to_bytes().unwrap();
    assert_eq!(a, b);
    assert_ne!(a, generate_benchmark(43).to_bytes().unwrap());
}

#[test]
fn case_file_round_trips() {
    let cf = generate_benchmark(3);
    let bytes = cf.to_bytes().unwrap();
    let back = CaseFile::read_from(bytes.as_slice()).unwrap();
    assert_eq!(back, cf);
    assert_eq!(back.to_bytes().unwrap(), bytes);
}

#[test]
fn bad_case_files_are_rejected() {
    let cf = generate_benchmark(3);
    let text = String::from_utf8(cf.to_bytes().unwrap()).unwrap();
    let mut lines: Vec<&str> = text.lines().collect();

    assert!(matches!(
        CaseFile::read_from(&b""[..]),
        Err(BenchError::CaseFile(_))
    ));

    let bad_version = lines[0].replace("\"generator_version\":1", "\"generator_version\":99");
    let doc = format!("{bad_version}\n{}\n", lines[1..].join("\n"));
    assert!(matches!(
        CaseFile::read_from(doc.as_bytes()),
        Err(BenchError::CaseFile(_))
    ));

    lines.pop();
    let short = format!("{}\n", lines.join("\n"));
    assert!(matches!(
        CaseFile::read_from(short.as_bytes()),
        Err(BenchError::CaseFile(_))
    ));

    let doc = format!("{}\n{{\"case_id\":1}}\n", lines[0]);
    assert!(matches!(
        CaseFile::read_from(doc.as_bytes()),
        Err(BenchError::CaseFile(_))
    ));
}

fn verdict(i: usize, correct: bool) -> CaseVerdict {
    CaseVerdict {
        case_id: format!("c{i}"),
        algorithm_family: CaseFamily::Dqn,
        category: CaseCategory::CleanMatch,
        expected_decision: DecisionKind::Match,
        expected_memory_id: None,
        decision: Some(if correct {
            DecisionKind::Match
        } else {
            DecisionKind::Abstain
        }),
        top_score: 0.7,
        margin: 0.2,
        candidates: Vec::new(),
        correct,
        hard_negative: false,
        hard_negative_fp: false,
        injected_bug_family: None,
        scripted_ok: correct,
        feedback_written: correct,
        bandit_updated: false,
        notes: Vec::new(),
    }
}

#[test]
fn metrics_aggregate_verdicts() {
    let all: Vec<CaseVerdict> = (0..10).map(|i| verdict(i, true)).collect();
    let m = compute_metrics(&all, &BTreeMap::new()).unwrap();
    assert_eq!(
        (m.expected_decision_accuracy, m.non_injected_accuracy),
        (1.0, 1.0)
    );
    assert_eq!(m.failure_abstain_rate, 0.0);

    let mixed: Vec<CaseVerdict> = (0..200).map(|i| verdict(i, i < 160)).collect();
    let m = compute_metrics(&mixed, &BTreeMap::new()).unwrap();
    assert_eq!(m.expected_decision_accuracy, 0.8);
    assert_eq!(m.feedback_write_rate, 0.8);
    assert_eq!(m.failure_abstain_rate, 0.2);
    assert_eq!(m.hard_negative_cases, 0);
    assert_eq!(m.hard_negative_fp_rate, 0.0);
}

#[test]
fn latency_uses_nearest_rank() {
    let mut samples = BTreeMap::new();
    samples.insert(
        "issue_match".to_string(),
        vec![Sample { ms: 4.0, ok: true }; 20],
    );
    let mut ranked: Vec<Sample> = (1..=20)
        .map(|i| Sample {
            ms: f64::from(i),
            ok: i != 3,
        })
        .collect();
    ranked.reverse();
    samples.insert("issue_feedback".to_string(), ranked);
    let m = compute_metrics(&[verdict(0, true)], &samples).unwrap();
    let flat = &m.latency["issue_match"];
    assert_eq!(
        (flat.calls, flat.errors, flat.mean_ms, flat.p95_ms),
        (20, 0, 4.0, 4.0)
    );
    // ceil(0.95 * 20) = 19th smallest.
    let ranked = &m.latency["issue_feedback"];
    assert_eq!((ranked.calls, ranked.errors, ranked.p95_ms), (20, 1, 19.0));
}

#[test]
fn empty_verdicts_are_an_error() {
    assert!(matches!(
        compute_metrics(&[], &BTreeMap::new()),
        Err(BenchError::EmptyInput(_))
    ));
}

#[test]
fn cli_generates_and_replays() {
    let tmp = TempDir::new().unwrap();
    let cases = tmp.path().join("cases.jsonl");
    let report = tmp.path().join("report.json");
    let bin = env!("CARGO_BIN_EXE_memctl-bench");
    let status = Command::new(bin)
        .args(["generate", "--seed", "5", "--out"])
        .arg(&cases)
        .status()
        .unwrap();
    assert!(status.success());
    assert_eq!(
        std::fs::read(&cases).unwrap(),
        generate_benchmark(5).to_bytes().unwrap()
    );

    let out = Command::new(bin)
        .args(["replay", "--mode", "offline-control", "--cases"])
        .arg(&cases)
        .arg("--report")
        .arg(&report)
        .output()
        .unwrap();
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let parsed: RunReport = serde_json::from_slice(&std::fs::read(&report).unwrap()).unwrap();
    assert_eq!(parsed.metrics.cases, 200);
    assert_eq!(parsed.seed, 5);
    assert_eq!(parsed.metrics.contextual_stats_update_rate, 0.0);

    let bad = Command::new(bin)
        .args(["replay", "--mode", "sideways", "--cases"])
        .arg(&cases)
        .output()
        .unwrap();
    assert!(!bad.status.success());
}
