//! Seeded generator for the 200-case suite.
//!
//! Every case lives in its own project scope and every seeded memory
//! requires that scope, so memories from other cases share the bank as
//! distractors but can never be matched.

use memctl_core::governance::{RlControlMetadata, ValidationPayload};
use memctl_core::model::{
    AlgorithmFamily, Context, DecisionKind, ErrorFamily, ExecContext, FailurePattern, FixVariant,
    MemoryKind, MemoryRecord, QualityPrior, SessionInfo, TheoryClaimType, ValidationTier,
};
use memctl_core::normalize::{tokenize, Lexicon};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::case::{
    BenchmarkCase, CaseCategory, CaseFamily, CaseFile, CaseFileHeader, InjectedFamily, ScriptStep,
    GENERATOR_VERSION,
};

/// Fixed "now" of every generated suite (2026-01-01T00:00:00Z).
pub const SUITE_NOW_MS: i64 = 1_767_225_600_000;
pub const DEFAULT_SEED: u64 = 20_260_101;

const MS_PER_DAY: i64 = 86_400_000;
const REPO: &str = "bench-suite";

/// Category counts over the 160 RL cases.
pub const CATEGORY_COUNTS: [(CaseCategory, usize); 4] = [
    (CaseCategory::CleanMatch, 41),
    (CaseCategory::Ambiguous, 39),
    (CaseCategory::HardNegativeMatch, 40),
    (CaseCategory::HardNegativeAbstain, 40),
];

/// Label that is deliberately missing from the canonical alias table.
pub const NON_CANONICAL_LABEL: &str = "worked_for_me";

struct Issue {
    exception: &'static str,
    headline: &'static str,
    detail: &'static str,
    fix: &'static str,
    alt_fix: &'static str,
    theory: TheoryClaimType,
    symbol: &'static str,
}

const fn issue(
    exception: &'static str,
    headline: &'static str,
    detail: &'static str,
    fix: &'static str,
    alt_fix: &'static str,
    theory: TheoryClaimType,
    symbol: &'static str,
) -> Issue {
    Issue {
        exception,
        headline,
        detail,
        fix,
        alt_fix,
        theory,
        symbol,
    }
}

use TheoryClaimType::{GradientBoundary, Masking, ObjectiveTerm, UpdateEquation};

const DQN: &[Issue] = &[
    issue(
        "AssertionError",
        "{alg} bellman target bootstraps past terminal states in {sym}",
        "done mask missing from td target in {file} so q values overestimate after episode end",
        "Multiply the bootstrapped term by (1 - done) before forming the td target",
        "Mask terminal transitions when sampling the replay batch",
        Masking,
        "td_target",
    ),
    issue(
        "RuntimeError",
        "{alg} target network weights never synced in {sym}",
        "hard update of the target net skipped in {file} so training loss keeps rising",
        "Copy online weights into the target network every sync interval",
        "Use polyak soft update for the target network",
        UpdateEquation,
        "sync_target",
    ),
];

const TD3: &[Issue] = &[
    issue(
        "AssertionError",
        "{alg} critic target adds unclipped smoothing noise in {sym}",
        "target smoothing noise not clipped in {file} so critic overestimation grows",
        "Clip the smoothing noise before adding it to the target action",
        "Clip the noisy target action to the action bounds",
        UpdateEquation,
        "critic_target",
    ),
    issue(
        "ValueError",
        "{alg} critic target ignores done mask in {sym}",
        "terminal transitions bootstrapped in {file} so q values explode",
        "Zero the bootstrap term on terminal transitions",
        "Store terminated flags separately from truncation",
        Masking,
        "twin_critic_target",
    ),
];

const PPO: &[Issue] = &[
    issue(
        "RuntimeError",
        "{alg} probability ratio uses log prob that still requires grad in {sym}",
        "old log prob not detached in {file} so gradient flows through the ratio",
        "Detach old log probabilities when storing them",
        "Recompute old log probabilities under no grad",
        GradientBoundary,
        "ratio_loss",
    ),
    issue(
        "FloatingPointError",
        "{alg} advantage normalization divides by zero std in {sym}",
        "normalize advantages over a single sample minibatch in {file} produces nan",
        "Add epsilon to the std and normalize over the full batch",
        "Skip normalization for minibatches of one sample",
        ObjectiveTerm,
        "normalize_advantages",
    ),
];

const SAC: &[Issue] = &[
    issue(
        "RuntimeError",
        "{alg} log alpha receives no gradient in {sym}",
        "alpha loss uses detached entropy term in {file} so target entropy never reached",
        "Compute the alpha loss from log alpha with the entropy term detached",
        "Optimize log alpha with its own optimizer",
        ObjectiveTerm,
        "alpha_loss",
    ),
    issue(
        "AssertionError",
        "{alg} soft q target bootstraps past terminal states in {sym}",
        "done mask dropped from critic target in {file} during training",
        "Multiply the soft target by (1 - done)",
        "Mask terminal states before the entropy correction",
        Masking,
        "soft_q_target",
    ),
];

const GAE: &[Issue] = &[
    issue(
        "ValueError",
        "{alg} lambda recursion crosses episode boundary in {sym}",
        "dones ignored in generalized advantage loop in {file} so advantages leak between episodes",
        "Reset the recursion with (1 - done) at every step",
        "Split trajectories at episode boundaries before the recursion",
        Masking,
        "gae_recursion",
    ),
    issue(
        "RuntimeError",
        "{alg} returns computed from values that still require grad in {sym}",
        "value estimates not detached in {file} before advantage computation",
        "Detach value estimates before computing returns",
        "Compute advantages under no grad",
        GradientBoundary,
        "compute_returns",
    ),
];

const A2C: &[Issue] = &[
    issue(
        "RuntimeError",
        "{alg} critic gradient leaks into actor in {sym}",
        "advantage not detached in {file} so actor loss backpropagates through value head",
        "Detach the advantage in the actor loss",
        "Use separate optimizers for actor and critic",
        GradientBoundary,
        "actor_loss",
    ),
    issue(
        "ValueError",
        "{alg} entropy bonus added with wrong sign in {sym}",
        "entropy term subtracted from loss in {file} so policy collapses early",
        "Subtract the entropy bonus from the loss, not add it",
        "Anneal the entropy coefficient instead of flipping it",
        ObjectiveTerm,
        "entropy_bonus",
    ),
];

const VTRACE: &[Issue] = &[
    issue(
        "ValueError",
        "{alg} importance weights not truncated in {sym}",
        "rho bar clipping missing in {file} so learner diverges",
        "Clip importance weights at rho bar before the correction",
        "Clip both rho and c weights",
        UpdateEquation,
        "vtrace_weights",
    ),
    issue(
        "AssertionError",
        "{alg} targets ignore discount on terminal steps in {sym}",
        "discounts not zeroed at episode end in {file}",
        "Zero discounts on terminal steps",
        "Mask bootstrap values with the done flags",
        Masking,
        "vtrace_targets",
    ),
];

const GENERIC: &[Issue] = &[
    issue(
        "ValueError",
        "replay buffer sample has wrong batch dimension in {sym}",
        "shape mismatch when the RL agent samples transitions in {file}",
        "Stack transitions along a new leading batch axis",
        "Squeeze the extra axis when storing observations",
        ObjectiveTerm,
        "sample_batch",
    ),
    issue(
        "TypeError",
        "gymnasium env reset returns tuple in {sym}",
        "rollout worker unpacks reset returns incorrectly in {file}",
        "Unpack (obs, info) from reset",
        "Wrap the env with a compatibility shim",
        UpdateEquation,
        "reset_env",
    ),
    issue(
        "FloatingPointError",
        "reward normalization running mean produces nan in {sym}",
        "running mean of rewards divides by zero count in {file} during rollout",
        "Initialize the running count with epsilon",
        "Skip normalization until enough rewards are seen",
        ObjectiveTerm,
        "reward_stats",
    ),
];

fn issues(family: CaseFamily) -> &'static [Issue] {
    match family {
        CaseFamily::A2c => A2C,
        CaseFamily::Dqn => DQN,
        CaseFamily::Gae => GAE,
        CaseFamily::GenericRl => GENERIC,
        CaseFamily::Ppo => PPO,
        CaseFamily::Sac => SAC,
        CaseFamily::Td3 => TD3,
        CaseFamily::Vtrace => VTRACE,
        CaseFamily::NonRl => &[],
    }
}

fn algorithm(family: CaseFamily) -> AlgorithmFamily {
    match family {
        CaseFamily::A2c => AlgorithmFamily::A2c,
        CaseFamily::Dqn => AlgorithmFamily::Dqn,
        CaseFamily::Gae => AlgorithmFamily::Gae,
        CaseFamily::GenericRl => AlgorithmFamily::GenericRl,
        CaseFamily::Ppo => AlgorithmFamily::Ppo,
        CaseFamily::Sac => AlgorithmFamily::Sac,
        CaseFamily::Td3 => AlgorithmFamily::Td3,
        CaseFamily::Vtrace => AlgorithmFamily::Vtrace,
        CaseFamily::NonRl => AlgorithmFamily::None,
    }
}

fn cue(alg: AlgorithmFamily) -> &'static str {
    match alg {
        AlgorithmFamily::Dqn => "DQN",
        AlgorithmFamily::Ppo => "PPO",
        AlgorithmFamily::Sac => "SAC",
        AlgorithmFamily::Td3 => "TD3",
        AlgorithmFamily::Gae => "GAE",
        AlgorithmFamily::A2c => "A2C",
        AlgorithmFamily::Vtrace => "IMPALA V-trace",
        AlgorithmFamily::GenericRl | AlgorithmFamily::None => "",
    }
}

/// Algorithm of the lexically similar wrong memory for each family.
fn conflicting(alg: AlgorithmFamily) -> AlgorithmFamily {
    match alg {
        AlgorithmFamily::Dqn => AlgorithmFamily::Td3,
        AlgorithmFamily::Td3 => AlgorithmFamily::Dqn,
        AlgorithmFamily::Ppo | AlgorithmFamily::A2c => AlgorithmFamily::Sac,
        AlgorithmFamily::Sac => AlgorithmFamily::Ppo,
        AlgorithmFamily::Gae => AlgorithmFamily::Vtrace,
        AlgorithmFamily::Vtrace => AlgorithmFamily::Gae,
        AlgorithmFamily::GenericRl | AlgorithmFamily::None => AlgorithmFamily::Dqn,
    }
}

/// Exception the generic-family hard negative is filed under.
fn conflicting_exception(exception: &str) -> &'static str {
    if exception == "KeyError" {
        "IndexError"
    } else {
        "KeyError"
    }
}

const LEADS: [&str; 4] = [
    "seen again after refactor:",
    "regression in nightly job:",
    "flaky failure:",
    "new report:",
];

struct Slots {
    case_id: String,
    scope: String,
    sym: String,
    file: String,
    path: String,
    user: String,
}

fn fill(template: &str, alg: &str, slots: &Slots) -> String {
    template
        .replace("{alg}", alg)
        .replace("{sym}", &slots.sym)
        .replace("{file}", &slots.file)
        .trim()
        .to_string()
}

#[allow(clippy::too_many_arguments)]
fn rl_memory(
    memory_id: String,
    pattern_id: String,
    variant_id: &str,
    signature: String,
    exception: &str,
    alg: AlgorithmFamily,
    fix: &str,
    fallback_theory: TheoryClaimType,
    slots: &Slots,
    age_days: i64,
    now_ms: i64,
) -> MemoryRecord {
    let theory = Lexicon::shipped()
        .theory_claim(&tokenize(&signature))
        .unwrap_or(fallback_theory);
    MemoryRecord {
        memory_id,
        pattern_id,
        variant_id: variant_id.to_string(),
        pattern: FailurePattern {
            signature,
            exception: Some(exception.to_string()),
            command: Some("python".into()),
            paths: vec![slots.path.clone()],
            project_scope: Some(slots.scope.clone()),
            repo: Some(REPO.into()),
            scope_required: true,
            ..Default::default()
        },
        variant: FixVariant {
            summary: fix.to_string(),
            fix: String::new(),
        },
        metadata: RlControlMetadata {
            memory_kind: MemoryKind::RlControl,
            algorithm_family: Some(alg),
            problem_family: alg.problem_family(),
            theory_claim_type: Some(theory),
            requested_tier: Some(ValidationTier::SeededRun),
            validation_payload: ValidationPayload {
                seeds: vec![0, 1, 2],
                commands: vec!["python train.py --seed 0".into()],
                results_digest: None,
            },
            artifacts: vec![format!("runs/{}/curve.csv", slots.case_id)],
            ..Default::default()
        },
        quality: QualityPrior {
            confidence: 0.8,
            successes: 3,
            last_verified_ms: now_ms - age_days * MS_PER_DAY,
            ..Default::default()
        },
        origin_user: Some(slots.user.clone()),
    }
}

fn rl_case(
    index: usize,
    family: CaseFamily,
    category: CaseCategory,
    rng: &mut ChaCha8Rng,
    now_ms: i64,
) -> BenchmarkCase {
    let case_id = format!("case-{:03}", index + 1);
    let pool = issues(family);
    let iss = &pool[rng.gen_range(0..pool.len())];
    let alg = algorithm(family);
    let slots = Slots {
        scope: format!("bench-{case_id}"),
        sym: format!("{}_{:03}", iss.symbol, index + 1),
        file: format!("learner_{:03}.py", index + 1),
        path: format!("src/{}/learner_{:03}.py", family.as_str(), index + 1),
        user: format!("dev-{}", rng.gen_range(0..5)),
        case_id: case_id.clone(),
    };
    let headline = fill(iss.headline, cue(alg), &slots);
    let detail = fill(iss.detail, cue(alg), &slots);
    let signature = format!("{}: {}. {}", iss.exception, headline, detail);
    let age = rng.gen_range(1..60);
    let pattern_id = format!("pat-{case_id}");

    let correct = |variant: &str, fix: &str, rng_age: i64| {
        rl_memory(
            format!("mem-{case_id}-{variant}"),
            pattern_id.clone(),
            variant,
            signature.clone(),
            iss.exception,
            alg,
            fix,
            iss.theory,
            &slots,
            rng_age,
            now_ms,
        )
    };
    let hard_negative = || {
        let other = conflicting(alg);
        let (exception, cue_text) = if alg == AlgorithmFamily::GenericRl {
            (conflicting_exception(iss.exception), "")
        } else {
            (iss.exception, cue(other))
        };
        let sig = format!(
            "{}: {}. {}",
            exception,
            fill(iss.headline, cue_text, &slots),
            fill(iss.detail, cue_text, &slots)
        );
        rl_memory(
            format!("mem-{case_id}-hn"),
            format!("pat-{case_id}-hn"),
            "v1",
            sig,
            exception,
            other,
            iss.alt_fix,
            iss.theory,
            &slots,
            age,
            now_ms,
        )
    };

    let mut memories = Vec::new();
    let mut expected_memory_id = None;
    let mut hn_id = None;
    let (expected_decision, script) = match category {
        CaseCategory::CleanMatch => {
            let m = correct("v1", iss.fix, age);
            expected_memory_id = Some(m.memory_id.clone());
            let step = ScriptStep::Feedback {
                label: "fix_verified".into(),
                memory_ref: Some(m.memory_id.clone()),
                expect_error: None,
            };
            memories.push(m);
            (DecisionKind::Match, vec![step])
        }
        CaseCategory::Ambiguous => {
            memories.push(correct("v1", iss.fix, age));
            memories.push(correct("v2", iss.alt_fix, age + 1));
            let step = ScriptStep::Feedback {
                label: "neutral".into(),
                memory_ref: None,
                expect_error: None,
            };
            (DecisionKind::Ambiguous, vec![step])
        }
        CaseCategory::HardNegativeMatch => {
            let m = correct("v1", iss.fix, age);
            let hn = hard_negative();
            expected_memory_id = Some(m.memory_id.clone());
            hn_id = Some(hn.memory_id.clone());
            let step = ScriptStep::Resolution {
                pattern_id: m.pattern_id.clone(),
                variant_id: m.variant_id.clone(),
                fix_summary: iss.fix.into(),
                marked_wrong: false,
                expect_implicit: Some("fix_verified".into()),
            };
            memories.push(m);
            memories.push(hn);
            (DecisionKind::Match, vec![step])
        }
        CaseCategory::HardNegativeAbstain => {
            let hn = hard_negative();
            hn_id = Some(hn.memory_id.clone());
            memories.push(hn);
            let step = ScriptStep::Resolution {
                pattern_id: format!("pat-{case_id}-new"),
                variant_id: "v1".into(),
                fix_summary: iss.fix.into(),
                marked_wrong: false,
                expect_implicit: Some("candidate_rejected".into()),
            };
            (DecisionKind::Abstain, vec![step])
        }
        CaseCategory::Injected => unreachable!("RL cases are never injected"),
    };

    let lead = LEADS[rng.gen_range(0..LEADS.len())];
    let query = Context {
        error_text: format!("{}: {}", iss.exception, headline),
        query_text: format!("{lead} {detail}"),
        project_scope: Some(slots.scope.clone()),
        repo: Some(REPO.into()),
        repo_paths: vec![slots.path.clone()],
        exec_context: Some(ExecContext {
            stack_frames: vec![format!(
                "File \"{}\", line {}, in {}",
                slots.path,
                rng.gen_range(20..400),
                slots.sym
            )],
            env_tags: vec![],
            command: Some(format!("python train.py --seed {}", rng.gen_range(0..10))),
        }),
        session: SessionInfo {
            session_id: format!("sess-{case_id}"),
            user_id: slots.user.clone(),
        },
    };
    BenchmarkCase {
        case_id,
        algorithm_family: family,
        category,
        seeded_memories: memories,
        query,
        expected_decision,
        expected_memory_id,
        hard_negative: matches!(
            category,
            CaseCategory::HardNegativeMatch | CaseCategory::HardNegativeAbstain
        ),
        hard_negative_memory_id: hn_id,
        feedback_script: script,
        injected_bug_family: None,
        scripted_decision: None,
    }
}

fn general_memory(
    case_id: &str,
    signature: String,
    slots: &Slots,
    now_ms: i64,
    age_days: i64,
) -> MemoryRecord {
    MemoryRecord {
        memory_id: format!("mem-{case_id}-v1"),
        pattern_id: format!("pat-{case_id}"),
        variant_id: "v1".into(),
        pattern: FailurePattern {
            signature,
            paths: vec![slots.path.clone()],
            project_scope: Some(slots.scope.clone()),
            repo: Some(REPO.into()),
            scope_required: true,
            ..Default::default()
        },
        variant: FixVariant::default(),
        metadata: RlControlMetadata::default(),
        quality: QualityPrior {
            confidence: 0.8,
            successes: 3,
            last_verified_ms: now_ms - age_days * MS_PER_DAY,
            ..Default::default()
        },
        origin_user: Some(slots.user.clone()),
    }
}

fn injected_case(
    index: usize,
    bug: InjectedFamily,
    rng: &mut ChaCha8Rng,
    now_ms: i64,
) -> BenchmarkCase {
    let case_id = format!("case-{:03}", index + 1);
    let n = index + 1;
    let mut slots = Slots {
        scope: format!("bench-{case_id}"),
        sym: String::new(),
        file: String::new(),
        path: String::new(),
        user: format!("dev-{}", rng.gen_range(0..5)),
        case_id: case_id.clone(),
    };
    let age = rng.gen_range(1..60);
    let session = SessionInfo {
        session_id: format!("sess-{case_id}"),
        user_id: slots.user.clone(),
    };
    let mut script = Vec::new();
    let (memory, query) = match bug {
        InjectedFamily::PathMount => {
            slots.sym = format!("memctl_store_{n:03}");
            slots.path = format!("/home/dev/{case_id}/data/{}.sqlite", slots.sym);
            let error = format!(
                "OperationalError: unable to open database file {}.sqlite",
                slots.sym
            );
            let detail = format!("store open fails for {} when the server starts", slots.sym);
            let mut m = general_memory(&case_id, format!("{error}. {detail}"), &slots, now_ms, age);
            m.pattern.command = Some("python -m memctl_server".into());
            m.variant.summary =
                "Point store_dir at a native filesystem path instead of the Windows mount".into();
            let q = Context {
                error_text: error,
                query_text: detail,
                project_scope: Some(slots.scope.clone()),
                repo: Some(REPO.into()),
                repo_paths: vec![format!(
                    "/mnt/c/Users/dev/{case_id}/data/{}.sqlite",
                    slots.sym
                )],
                exec_context: Some(ExecContext {
                    command: Some("python -m memctl_server".into()),
                    ..Default::default()
                }),
                session,
            };
            (m, q)
        }
        InjectedFamily::FeedbackAliasNotCanonical => {
            slots.sym = format!("retry_budget_{n:03}");
            slots.path = format!("src/settings/loader_{n:03}.py");
            let mut m = general_memory(
                &case_id,
                format!("KeyError: '{}' missing from settings map. loader reads {} before defaults are merged", slots.sym, slots.sym),
                &slots,
                now_ms,
                400,
            );
            // History written through a non-canonical alias: confirmations
            // were recorded as false positives in this error family.
            m.quality = QualityPrior {
                confidence: 0.1,
                successes: 0,
                failures: 6,
                rejections: 6,
                false_positive_families: [ErrorFamily::Exception].into_iter().collect(),
                last_verified_ms: now_ms - 400 * MS_PER_DAY,
            };
            m.variant.summary = "Merge defaults before reading optional keys".into();
            m.origin_user = Some("dev-legacy".into());
            // A bare report: no paths or command, filed by another user.
            let q = Context {
                error_text: format!("KeyError: '{}'", slots.sym),
                query_text: format!("settings loader crashes reading {}", slots.sym),
                project_scope: Some(slots.scope.clone()),
                repo: Some(REPO.into()),
                repo_paths: vec![],
                exec_context: None,
                session,
            };
            script.push(ScriptStep::Feedback {
                label: NON_CANONICAL_LABEL.into(),
                memory_ref: Some(m.memory_id.clone()),
                expect_error: Some("unknown_feedback_label".into()),
            });
            (m, q)
        }
        InjectedFamily::MissingProjectScope => {
            slots.sym = format!("plugin_registry_{n:03}");
            slots.path = format!("src/plugins/registry_{n:03}.py");
            let error = format!("ModuleNotFoundError: No module named '{}'", slots.sym);
            let detail = format!(
                "import of {} fails in registry_{n:03}.py when tests run from the repo root",
                slots.sym
            );
            let mut m = general_memory(&case_id, format!("{error}. {detail}"), &slots, now_ms, age);
            m.pattern.command = Some("pytest".into());
            m.variant.summary = "Install the package in editable mode before running tests".into();
            let q = Context {
                error_text: error,
                query_text: detail,
                project_scope: None,
                repo: Some(REPO.into()),
                repo_paths: vec![slots.path.clone()],
                exec_context: Some(ExecContext {
                    command: Some("pytest -q".into()),
                    ..Default::default()
                }),
                session,
            };
            (m, q)
        }
        InjectedFamily::CommandPathMismatch => {
            slots.sym = format!("merge_sorted_{n:03}");
            slots.path = format!("tests/test_{}.py", slots.sym);
            let error = format!(
                "AssertionError: test failed in {} expected sorted output",
                slots.sym
            );
            let detail = format!("{} returns rows in insertion order", slots.sym);
            let mut m = general_memory(&case_id, format!("{error}. {detail}"), &slots, now_ms, age);
            m.pattern.command = Some(format!("pytest {}", slots.path));
            m.variant.summary = "Sort rows by key before merging".into();
            let q = Context {
                error_text: error,
                query_text: detail,
                project_scope: Some(slots.scope.clone()),
                repo: Some(REPO.into()),
                repo_paths: vec![slots.path.clone()],
                exec_context: Some(ExecContext {
                    command: Some(format!("python -m unittest {}", slots.path)),
                    ..Default::default()
                }),
                session,
            };
            (m, q)
        }
    };
    BenchmarkCase {
        case_id,
        algorithm_family: CaseFamily::NonRl,
        category: CaseCategory::Injected,
        expected_memory_id: Some(memory.memory_id.clone()),
        seeded_memories: vec![memory],
        query,
        expected_decision: DecisionKind::Match,
        hard_negative: false,
        hard_negative_memory_id: None,
        feedback_script: script,
        injected_bug_family: Some(bug),
        scripted_decision: Some(DecisionKind::Abstain),
    }
}

/// Generate the suite for `seed`. Byte-identical for equal seeds.
pub fn generate_benchmark(seed: u64) -> CaseFile {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut categories: Vec<CaseCategory> = CATEGORY_COUNTS
        .iter()
        .flat_map(|&(c, n)| std::iter::repeat_n(c, n))
        .collect();
    categories.shuffle(&mut rng);
    let mut injected: Vec<InjectedFamily> =
        InjectedFamily::ALL.iter().flat_map(|&f| [f; 10]).collect();
    injected.shuffle(&mut rng);

    let mut cases = Vec::with_capacity(200);
    let (mut rl_i, mut inj_i) = (0, 0);
    for (family, count) in CaseFamily::COMPOSITION {
        for _ in 0..count {
            let index = cases.len();
            let case = if family == CaseFamily::NonRl {
                inj_i += 1;
                injected_case(index, injected[inj_i - 1], &mut rng, SUITE_NOW_MS)
            } else {
                rl_i += 1;
                rl_case(index, family, categories[rl_i - 1], &mut rng, SUITE_NOW_MS)
            };
            cases.push(case);
        }
    }
    let header = CaseFileHeader {
        kind: "header".into(),
        generator_version: GENERATOR_VERSION,
        seed,
        cases: cases.len(),
        now_ms: SUITE_NOW_MS,
    };
    CaseFile { header, cases }
}
