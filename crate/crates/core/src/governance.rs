//! RL/control memory governance: theory-to-code metadata, validation-tier
//! promotion, the theory anchor registry, and the review-gated lifecycle.
//!
//! Everything here is pure. Persistence of promotion decisions, anchor
//! registrations and lifecycle transitions goes through the engine, which
//! appends them to the event log.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{
    snake_enum, AlgorithmFamily, MemoryKind, ProblemFamily, TheoryClaimType, ValidationTier,
};

snake_enum! {
    Severity {
        Info => "info",
        Minor => "minor",
        Major => "major",
        Critical => "critical",
    }
}

snake_enum! {
    ReviewState {
        None => "none",
        Pending => "pending",
        Approved => "approved",
        Rejected => "rejected",
    }
}

snake_enum! {
    LifecycleState {
        Retain => "retain",
        Merge => "merge",
        Split => "split",
        Demote => "demote",
        Review => "review",
    }
}

impl LifecycleState {
    pub fn requires_review(self) -> bool {
        matches!(
            self,
            LifecycleState::Merge | LifecycleState::Split | LifecycleState::Demote
        )
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ValidationPayload {
    #[serde(default)]
    pub seeds: Vec<u64>,
    #[serde(default)]
    pub commands: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub results_digest: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AuditFinding {
    pub finding: String,
    pub severity: Severity,
    #[serde(default = "yes")]
    pub open: bool,
}

fn yes() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReviewInfo {
    pub state: ReviewState,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reviewer: Option<String>,
}

impl Default for ReviewInfo {
    fn default() -> Self {
        Self {
            state: ReviewState::None,
            reviewer: None,
        }
    }
}

/// Audit and validation metadata carried by every memory. RL/control
/// memories must fill in the theory-to-code fields.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RlControlMetadata {
    pub memory_kind: MemoryKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub algorithm_family: Option<AlgorithmFamily>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub problem_family: Option<ProblemFamily>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub theory_claim_type: Option<TheoryClaimType>,
    /// Tier actually applied after promotion rules.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub validation_tier: Option<ValidationTier>,
    /// Tier the author asked for.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub requested_tier: Option<ValidationTier>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub runtime_stage: Option<String>,
    #[serde(default)]
    pub artifacts: Vec<String>,
    #[serde(default)]
    pub validation_payload: ValidationPayload,
    #[serde(default)]
    pub audit_findings: Vec<AuditFinding>,
    #[serde(default)]
    pub review: ReviewInfo,
    #[serde(default = "retain")]
    pub lifecycle: LifecycleState,
}

fn retain() -> LifecycleState {
    LifecycleState::Retain
}

impl Default for RlControlMetadata {
    fn default() -> Self {
        Self {
            memory_kind: MemoryKind::General,
            algorithm_family: None,
            problem_family: None,
            theory_claim_type: None,
            validation_tier: None,
            requested_tier: None,
            runtime_stage: None,
            artifacts: Vec::new(),
            validation_payload: ValidationPayload::default(),
            audit_findings: Vec::new(),
            review: ReviewInfo::default(),
            lifecycle: LifecycleState::Retain,
        }
    }
}

impl RlControlMetadata {
    pub fn validate(&self) -> Result<()> {
        if self.memory_kind == MemoryKind::RlControl {
            let mut missing = Vec::new();
            if self.problem_family.is_none() {
                missing.push("problem_family");
            }
            if self.theory_claim_type.is_none() {
                missing.push("theory_claim_type");
            }
            if self.validation_tier.is_none() && self.requested_tier.is_none() {
                missing.push("validation_tier");
            }
            if !missing.is_empty() {
                return Err(Error::Schema(format!(
                    "rl_control memory missing theory-to-code metadata: {}",
                    missing.join(", ")
                )));
            }
        }
        Ok(())
    }

    pub fn applied_tier(&self) -> ValidationTier {
        self.validation_tier.unwrap_or(ValidationTier::Untested)
    }
}

// ── Promotion ───────────────────────────────────────────────────────────

/// Cap rules for validation-tier promotion. Loaded from config.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PromotionRules {
    /// Cap when the validation payload lacks seeds or commands.
    pub missing_evidence_cap: ValidationTier,
    /// Open findings at or above this severity trigger `finding_cap`.
    pub blocking_severity: Severity,
    pub finding_cap: ValidationTier,
    /// Cap while review is anything but approved.
    pub unreviewed_cap: ValidationTier,
    /// Optional cap when no artifacts are attached.
    pub missing_artifacts_cap: Option<ValidationTier>,
}

impl Default for PromotionRules {
    fn default() -> Self {
        Self {
            missing_evidence_cap: ValidationTier::Smoke,
            blocking_severity: Severity::Major,
            finding_cap: ValidationTier::SeededRun,
            unreviewed_cap: ValidationTier::SeededRun,
            missing_artifacts_cap: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromotionDecision {
    pub requested: ValidationTier,
    pub applied: ValidationTier,
    /// Names of the cap rules that bound, in rule order.
    pub binding_rules: Vec<String>,
}

/// Applied tier = requested tier lowered by every cap rule that fires.
pub fn apply_promotion(
    requested: ValidationTier,
    payload: &ValidationPayload,
    findings: &[AuditFinding],
    artifacts: &[String],
    review: ReviewState,
    rules: &PromotionRules,
) -> PromotionDecision {
    let mut applied = requested;
    let mut binding_rules = Vec::new();
    let mut cap = |fires: bool, tier: ValidationTier, name: &str| {
        if fires && tier < applied {
            applied = tier;
            binding_rules.push(name.to_string());
        }
    };
    cap(
        payload.seeds.is_empty() || payload.commands.is_empty(),
        rules.missing_evidence_cap,
        "missing_evidence",
    );
    cap(
        findings
            .iter()
            .any(|f| f.open && f.severity >= rules.blocking_severity),
        rules.finding_cap,
        "open_finding",
    );
    cap(
        review != ReviewState::Approved,
        rules.unreviewed_cap,
        "unreviewed",
    );
    if let Some(tier) = rules.missing_artifacts_cap {
        cap(artifacts.is_empty(), tier, "missing_artifacts");
    }
    PromotionDecision {
        requested,
        applied,
        binding_rules,
    }
}

// ── Theory-to-code anchors ──────────────────────────────────────────────

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Obligation {
    pub objective: String,
    pub equation_text: String,
    #[serde(default)]
    pub assumptions: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub problem_family: Option<ProblemFamily>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub theory_claim_type: Option<TheoryClaimType>,
}

impl Obligation {
    pub fn key(&self) -> String {
        format!("{}::{}", self.objective.trim(), self.equation_text.trim())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CodeAnchor {
    pub file: String,
    pub symbol: String,
    pub line: u32,
    pub check_name: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TheoryAnchor {
    pub obligation: Obligation,
    pub anchors: Vec<CodeAnchor>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnchorRegistry {
    entries: BTreeMap<String, TheoryAnchor>,
}

impl AnchorRegistry {
    /// Registry pre-populated with the temporal-difference target exemplar.
    pub fn shipped() -> Self {
        let mut registry = Self::default();
        registry
            .register(td_target_obligation(), td_target_anchors())
            .expect("shipped anchors are valid");
        registry
    }

    /// Insert or replace. Returns the replaced entry, if any.
    pub fn register(
        &mut self,
        obligation: Obligation,
        anchors: Vec<CodeAnchor>,
    ) -> Result<Option<TheoryAnchor>> {
        validate_anchor(&obligation, &anchors)?;
        let key = obligation.key();
        Ok(self.entries.insert(
            key,
            TheoryAnchor {
                obligation,
                anchors,
            },
        ))
    }

    pub fn get(&self, obligation: &Obligation) -> Option<&TheoryAnchor> {
        self.entries.get(&obligation.key())
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn query(
        &self,
        problem_family: Option<ProblemFamily>,
        claim: Option<TheoryClaimType>,
    ) -> Vec<&TheoryAnchor> {
        self.entries
            .values()
            .filter(|e| problem_family.is_none() || e.obligation.problem_family == problem_family)
            .filter(|e| claim.is_none() || e.obligation.theory_claim_type == claim)
            .collect()
    }

    pub fn export(&self) -> Result<Vec<u8>> {
        let entries: Vec<&TheoryAnchor> = self.entries.values().collect();
        crate::canonical::to_vec(&entries)
    }

    pub fn import(bytes: &[u8]) -> Result<Self> {
        let entries: Vec<TheoryAnchor> = crate::canonical::from_slice(bytes)?;
        let mut registry = Self::default();
        for entry in entries {
            registry.register(entry.obligation, entry.anchors)?;
        }
        Ok(registry)
    }
}

pub fn validate_anchor(obligation: &Obligation, anchors: &[CodeAnchor]) -> Result<()> {
    if obligation.equation_text.trim().is_empty() {
        return Err(Error::InvalidArgument(
            "obligation equation_text must be non-empty".into(),
        ));
    }
    if anchors.is_empty() {
        return Err(Error::InvalidArgument(
            "at least one anchor is required per obligation".into(),
        ));
    }
    Ok(())
}

pub fn td_target_obligation() -> Obligation {
    Obligation {
        objective: "temporal-difference target".into(),
        equation_text: "y_t = r_t + gamma * (1 - d_t) * max_a' Q_target(s_{t+1}, a')".into(),
        assumptions: vec![
            "terminal transitions do not bootstrap".into(),
            "target network parameters are held fixed between syncs".into(),
            "the target is a constant with respect to the online gradient".into(),
        ],
        problem_family: Some(ProblemFamily::ValueBased),
        theory_claim_type: Some(TheoryClaimType::UpdateEquation),
    }
}

fn td_target_anchors() -> Vec<CodeAnchor> {
    let anchor = |symbol: &str, line, check: &str| CodeAnchor {
        file: "agents/dqn.py".into(),
        symbol: symbol.into(),
        line,
        check_name: check.into(),
    };
    vec![
        anchor("compute_td_target", 42, "terminal_masking"),
        anchor("compute_td_target", 44, "target_network_use"),
        anchor("compute_td_target", 45, "gradient_detachment"),
    ]
}

// ── Lifecycle ───────────────────────────────────────────────────────────

/// Validate a lifecycle transition. `reviewer` is the identity behind a
/// review token that has already been checked against the configured set.
pub fn transition_lifecycle(
    target: LifecycleState,
    reviewer: Option<&str>,
) -> Result<LifecycleState> {
    if target.requires_review() && reviewer.is_none() {
        return Err(Error::ReviewRequired(target.as_str().into()));
    }
    Ok(target)
}
