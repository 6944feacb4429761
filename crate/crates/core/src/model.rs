//! Domain vocabulary shared by every stage of the pipeline: developer
//! contexts, memory records, and the closed enums they are described with.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::governance::RlControlMetadata;

macro_rules! snake_enum {
    ($(#[$meta:meta])* $name:ident { $($variant:ident => $text:literal),+ $(,)? }) => {
        $(#[$meta])*
        #[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
        #[serde(rename_all = "snake_case")]
        pub enum $name { $($variant),+ }

        impl $name {
            pub const ALL: &'static [$name] = &[$($name::$variant),+];

            pub fn as_str(self) -> &'static str {
                match self { $($name::$variant => $text),+ }
            }

            pub fn parse(s: &str) -> Option<Self> {
                match s { $($text => Some($name::$variant),)+ _ => None }
            }
        }

        impl ::std::fmt::Display for $name {
            fn fmt(&self, f: &mut ::std::fmt::Formatter<'_>) -> ::std::fmt::Result {
                f.write_str(self.as_str())
            }
        }
    };
}
pub(crate) use snake_enum;

snake_enum! {
    /// Inferred error family of a context or a stored failure pattern.
    ErrorFamily {
        Exception => "exception",
        TestFailure => "test_failure",
        BuildFailure => "build_failure",
        RuntimeDivergence => "runtime_divergence",
        Config => "config",
        PathOrScope => "path_or_scope",
        Unknown => "unknown",
    }
}

snake_enum! {
    RootCauseClass {
        TerminalMask => "terminal_mask",
        TargetNetwork => "target_network",
        GradientFlow => "gradient_flow",
        ObjectiveTerm => "objective_term",
        Normalization => "normalization",
        DataPlumbing => "data_plumbing",
        EnvironmentApi => "environment_api",
        Unknown => "unknown",
    }
}

snake_enum! {
    /// RL algorithm family. `None` means no RL cue was seen.
    AlgorithmFamily {
        Dqn => "dqn",
        Ppo => "ppo",
        Sac => "sac",
        Td3 => "td3",
        Gae => "gae",
        A2c => "a2c",
        Vtrace => "vtrace",
        GenericRl => "generic_rl",
        None => "none",
    }
}

impl AlgorithmFamily {
    /// A concrete algorithm, as opposed to `generic_rl` or `none`.
    pub fn is_specific(self) -> bool {
        !matches!(self, AlgorithmFamily::GenericRl | AlgorithmFamily::None)
    }

    pub fn problem_family(self) -> Option<ProblemFamily> {
        Some(match self {
            AlgorithmFamily::Dqn => ProblemFamily::ValueBased,
            AlgorithmFamily::Ppo | AlgorithmFamily::A2c => ProblemFamily::PolicyGradient,
            AlgorithmFamily::Sac | AlgorithmFamily::Td3 => ProblemFamily::ActorCritic,
            AlgorithmFamily::Gae => ProblemFamily::AdvantageEstimation,
            AlgorithmFamily::Vtrace => ProblemFamily::ImportanceCorrection,
            AlgorithmFamily::GenericRl => ProblemFamily::GeneralRl,
            AlgorithmFamily::None => return None,
        })
    }
}

snake_enum! {
    ProblemFamily {
        ValueBased => "value_based",
        PolicyGradient => "policy_gradient",
        ActorCritic => "actor_critic",
        AdvantageEstimation => "advantage_estimation",
        ImportanceCorrection => "importance_correction",
        GeneralRl => "general_rl",
    }
}

snake_enum! {
    MemoryKind {
        General => "general",
        RlControl => "rl_control",
    }
}

snake_enum! {
    TheoryClaimType {
        UpdateEquation => "update_equation",
        ObjectiveTerm => "objective_term",
        Masking => "masking",
        GradientBoundary => "gradient_boundary",
        EvaluationProtocol => "evaluation_protocol",
    }
}

snake_enum! {
    /// Ordered trust ladder for a memory.
    ValidationTier {
        Untested => "untested",
        Smoke => "smoke",
        SeededRun => "seeded_run",
        Reviewed => "reviewed",
        Verified => "verified",
    }
}

impl ValidationTier {
    /// Position on the ladder scaled to [0, 1].
    pub fn scaled(self) -> f64 {
        let top = (ValidationTier::ALL.len() - 1) as f64;
        (self as usize) as f64 / top
    }
}

snake_enum! {
    DecisionKind {
        Match => "match",
        Ambiguous => "ambiguous",
        Abstain => "abstain",
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SessionInfo {
    pub session_id: String,
    #[serde(default)]
    pub user_id: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExecContext {
    #[serde(default)]
    pub stack_frames: Vec<String>,
    #[serde(default)]
    pub env_tags: Vec<String>,
    /// Shell command that produced the failure, when known.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub command: Option<String>,
}

/// Raw developer context observed at a tool call.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Context {
    #[serde(default)]
    pub error_text: String,
    #[serde(default)]
    pub query_text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub project_scope: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub repo: Option<String>,
    #[serde(default)]
    pub repo_paths: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub exec_context: Option<ExecContext>,
    #[serde(default)]
    pub session: SessionInfo,
}

impl Context {
    pub fn is_empty(&self) -> bool {
        self.error_text.trim().is_empty() && self.query_text.trim().is_empty()
    }
}

/// Canonical failure pattern of a memory.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FailurePattern {
    /// Error text plus a short description; the text the lexical features read.
    pub signature: String,
    #[serde(default)]
    pub error_family: ErrorFamily,
    #[serde(default)]
    pub root_cause_class: RootCauseClass,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub exception: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub command: Option<String>,
    #[serde(default)]
    pub paths: Vec<String>,
    #[serde(default)]
    pub entities: BTreeMap<String, BTreeSet<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub project_scope: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub repo: Option<String>,
    /// The memory only applies inside its own project; a query without a
    /// project scope is treated as a specificity conflict.
    #[serde(default)]
    pub scope_required: bool,
}

impl Default for ErrorFamily {
    fn default() -> Self {
        ErrorFamily::Unknown
    }
}

impl Default for RootCauseClass {
    fn default() -> Self {
        RootCauseClass::Unknown
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FixVariant {
    pub summary: String,
    #[serde(default)]
    pub fix: String,
}

/// Feedback history a memory arrives with (imports, seeded fixtures).
/// Live feedback observed by this store is accumulated separately.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QualityPrior {
    #[serde(default = "half")]
    pub confidence: f64,
    #[serde(default)]
    pub successes: u32,
    #[serde(default)]
    pub failures: u32,
    #[serde(default)]
    pub rejections: u32,
    /// Error families in which this memory was marked a false positive.
    #[serde(default)]
    pub false_positive_families: BTreeSet<ErrorFamily>,
    /// Last time the fix was confirmed to work, UTC milliseconds.
    #[serde(default)]
    pub last_verified_ms: i64,
}

fn half() -> f64 {
    0.5
}

impl Default for QualityPrior {
    fn default() -> Self {
        Self {
            confidence: 0.5,
            successes: 0,
            failures: 0,
            rejections: 0,
            false_positive_families: BTreeSet::new(),
            last_verified_ms: 0,
        }
    }
}

/// One entry of the memory bank: failure pattern, fix variant, audit
/// metadata, and feedback/governance state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MemoryRecord {
    pub memory_id: String,
    pub pattern_id: String,
    pub variant_id: String,
    pub pattern: FailurePattern,
    pub variant: FixVariant,
    #[serde(default)]
    pub metadata: RlControlMetadata,
    #[serde(default)]
    pub quality: QualityPrior,
    /// User who recorded the memory.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub origin_user: Option<String>,
}

impl MemoryRecord {
    pub fn validate(&self) -> crate::Result<()> {
        use crate::Error;
        if self.memory_id.trim().is_empty() {
            return Err(Error::Schema("memory_id must be non-empty".into()));
        }
        if self.pattern_id.trim().is_empty() || self.variant_id.trim().is_empty() {
            return Err(Error::Schema(
                "pattern_id and variant_id must be non-empty".into(),
            ));
        }
        if self.pattern.signature.trim().is_empty() {
            return Err(Error::Schema("pattern.signature must be non-empty".into()));
        }
        let c = self.quality.confidence;
        if !(0.0..=1.0).contains(&c) {
            return Err(Error::Schema(format!(
                "quality.confidence {c} outside [0,1]"
            )));
        }
        self.metadata.validate()
    }
}
