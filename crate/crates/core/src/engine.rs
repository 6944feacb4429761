//! Request orchestration over the store: matching with shadow scoring,
//! explicit feedback, delayed resolutions, metrics, and governance writes.
//! The engine is single-writer; callers serialize requests.

use std::collections::BTreeMap;
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};

use crate::bandit::{behavior_propensity, target_propensities, BanditState};
use crate::config::Config;
use crate::error::{Error, Result};
use crate::features::{IndexedMemory, QualityView, FEATURE_DIM, FEATURE_VERSION};
use crate::feedback::{normalize_feedback, FeedbackAliases, FeedbackSource, FeedbackType};
use crate::governance::{
    apply_promotion, transition_lifecycle, CodeAnchor, LifecycleState, Obligation,
    PromotionDecision,
};
use crate::linker::{infer_implicit_type, select_link_event, ResolutionSummary, WindowEvent};
use crate::model::{
    AlgorithmFamily, Context, DecisionKind, ErrorFamily, FailurePattern, FixVariant, MemoryKind,
    MemoryRecord, QualityPrior, RootCauseClass, ValidationTier,
};
use crate::normalize::{extract_entities, extract_exception, normalize_context, tokenize, Lexicon};
use crate::ope::{
    build_report, evaluate_gate, nearest_rank, policy_reward_model, reward_model, GateFlags,
    GateVerdict, LoggedRow, OpeReport,
};
use crate::ranker::{decide, rank};
use crate::store::{
    BanditSnapshotPayload, BanditUpdate, ClaimResult, DelayedLinkPayload, FeedbackPayload,
    GovernancePayload, IdempotenceKey, LoggedCandidate, OpeReportPayload, Payload,
    RetrievalPayload, Store, StoredFeedback, SCHEMA_VERSION,
};

// ── Requests and responses ──────────────────────────────────────────────

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MatchOptions {
    pub include_telemetry: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VisibleCandidate {
    pub memory_id: String,
    pub pattern_id: String,
    pub variant_id: String,
    pub rank: usize,
    pub score: f64,
    pub summary: String,
    pub validation_tier: ValidationTier,
    pub specificity_ok: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateTelemetry {
    pub memory_id: String,
    pub mu: f64,
    pub uncertainty: f64,
    pub delta: f64,
    pub shadow_score: f64,
    pub target_propensity: f64,
    pub behavior_propensity: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TelemetrySummary {
    pub shadow_enabled: bool,
    pub scored_candidates: usize,
    /// Rank of the shadow policy's preferred candidate, when scored.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub shadow_top_rank: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub candidates: Option<Vec<CandidateTelemetry>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchResponse {
    pub decision: DecisionKind,
    pub top_score: f64,
    pub margin: f64,
    pub candidates: Vec<VisibleCandidate>,
    pub retrieval_event_id: String,
    pub telemetry: TelemetrySummary,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FeedbackRequest {
    pub retrieval_event_id: String,
    #[serde(default)]
    pub memory_ref: Option<String>,
    pub label: String,
    #[serde(default)]
    pub override_reward: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeedbackAck {
    pub feedback_event_id: String,
    /// Canonical type, or `neutral` for the non-evaluative label.
    pub canonical_type: String,
    pub reward: f64,
    pub learnable: bool,
    pub override_reward_used: bool,
    pub bandit_updated: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ResolutionRequest {
    /// The resolved failure; also the new memory's pattern source.
    pub context: Context,
    pub resolution: ResolutionSummary,
    #[serde(default)]
    pub fix_summary: String,
    #[serde(default)]
    pub retrieval_event_id: Option<String>,
    #[serde(default)]
    pub memory_id: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LinkOutcome {
    Linked,
    NoLink,
    Duplicate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResolutionAck {
    pub outcome: LinkOutcome,
    pub link_confidence: f64,
    pub implicit_type: Option<FeedbackType>,
    pub retrieval_event_id: Option<String>,
    pub feedback_event_id: Option<String>,
    pub link_event_id: Option<String>,
    pub memory_id: String,
    pub memory_created: bool,
    pub bandit_updated: bool,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MetricsRequest {
    /// Restrict to the most recent N retrieval events.
    pub window: Option<usize>,
    /// Append the report to the log as an `ope_report` event.
    pub persist: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TelemetryCounters {
    pub retrieval_events: u64,
    pub match_decisions: u64,
    pub ambiguous_decisions: u64,
    pub abstain_decisions: u64,
    pub feedback_events: u64,
    pub feedback_bearing_events: u64,
    pub bandit_update_events: u64,
    pub delayed_links: u64,
    pub duplicate_links: u64,
    pub feedback_write_rate: f64,
    pub contextual_stats_update_rate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub report: OpeReport,
    pub verdict: GateVerdict,
    pub flags: GateFlags,
    pub counters: TelemetryCounters,
    pub insufficient_data: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Health {
    pub store_open: bool,
    pub log_sequence: u64,
    pub schema_version: u32,
    pub feature_version: u32,
    pub bandit_dims: usize,
    pub bandit_updates: u64,
    pub memories: usize,
    pub shadow_enabled: bool,
    pub learn_enabled: bool,
    pub config_digest: String,
    pub uptime_ms: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UpsertAck {
    pub memory_id: String,
    pub event_id: String,
    pub promotion: Option<PromotionDecision>,
}

// ── Engine ──────────────────────────────────────────────────────────────

pub struct Engine {
    config: Config,
    digest: String,
    lexicon: Lexicon,
    aliases: FeedbackAliases,
    store: Store,
    index: BTreeMap<String, IndexedMemory>,
    started: Instant,
}

impl Engine {
    pub fn open(config: Config) -> Result<Engine> {
        config.validate()?;
        let lexicon = match &config.lexicon_path {
            Some(p) => Lexicon::load(p)?,
            None => Lexicon::shipped().clone(),
        };
        let store = Store::open(&config.store_dir, config.store_options())?;
        let index = store
            .state()
            .memories
            .values()
            .map(|m| (m.memory_id.clone(), IndexedMemory::new(m.clone())))
            .collect();
        Ok(Engine {
            aliases: FeedbackAliases::with_overrides(&config.feedback_aliases),
            digest: config.digest(),
            config,
            lexicon,
            store,
            index,
            started: Instant::now(),
        })
    }

    pub fn config(&self) -> &Config {
        &self.config
    }

    pub fn store(&self) -> &Store {
        &self.store
    }

    /// Raw store access for maintenance tools and fault injection.
    pub fn store_mut(&mut self) -> &mut Store {
        &mut self.store
    }

    pub fn lexicon(&self) -> &Lexicon {
        &self.lexicon
    }

    pub fn now_ms(&self) -> i64 {
        self.config.clock.fixed_now_ms.unwrap_or_else(|| {
            SystemTime::now()
                .duration_since(UNIX_EPOCH)
                .map_or(0, |d| d.as_millis() as i64)
        })
    }

    // ── Memories and governance ────────────────────────────────────────

    /// Fill derivable pattern fields from the signature text.
    fn enrich(&self, mut record: MemoryRecord) -> MemoryRecord {
        let p = &mut record.pattern;
        if p.exception.is_none() {
            p.exception = extract_exception(&p.signature);
        }
        let tokens = tokenize(&p.signature);
        if p.error_family == ErrorFamily::Unknown {
            p.error_family = self.lexicon.error_family(&tokens, p.exception.as_deref());
        }
        if p.root_cause_class == RootCauseClass::Unknown {
            p.root_cause_class = self.lexicon.root_cause(&tokens);
        }
        if p.entities.is_empty() {
            p.entities = extract_entities(&p.signature, &[], &p.paths, &[]);
        }
        let m = &mut record.metadata;
        if m.problem_family.is_none() {
            m.problem_family = m.algorithm_family.and_then(AlgorithmFamily::problem_family);
        }
        record
    }

    /// Validate, enrich, apply tier promotion, and persist a memory.
    pub fn upsert_memory(&mut self, record: MemoryRecord, actor: &str) -> Result<UpsertAck> {
        let mut record = self.enrich(record);
        let meta = &mut record.metadata;
        let promotion =
            if meta.memory_kind == MemoryKind::RlControl || meta.requested_tier.is_some() {
                let requested = meta
                    .requested_tier
                    .or(meta.validation_tier)
                    .unwrap_or(ValidationTier::Untested);
                let decision = apply_promotion(
                    requested,
                    &meta.validation_payload,
                    &meta.audit_findings,
                    &meta.artifacts,
                    meta.review.state,
                    &self.config.governance.promotion,
                );
                meta.requested_tier = Some(requested);
                meta.validation_tier = Some(decision.applied);
                Some(decision)
            } else {
                None
            };
        record.validate()?;
        let now = self.now_ms();
        let rec = self
            .store
            .append(&Payload::MemoryUpsert(Box::new(record.clone())), now, "")?;
        if let Some(decision) = &promotion {
            let audit = GovernancePayload::Promotion {
                memory_id: record.memory_id.clone(),
                decision: decision.clone(),
                actor: actor.to_string(),
            };
            self.store
                .append(&Payload::Governance(Box::new(audit)), now, "")?;
        }
        let id = record.memory_id.clone();
        self.index.insert(id.clone(), IndexedMemory::new(record));
        Ok(UpsertAck {
            memory_id: id,
            event_id: rec.event_id,
            promotion,
        })
    }

    pub fn transition_lifecycle(
        &mut self,
        memory_id: &str,
        target: LifecycleState,
        actor: &str,
        review_token: Option<&str>,
    ) -> Result<LifecycleState> {
        let from = self
            .store
            .state()
            .memories
            .get(memory_id)
            .ok_or_else(|| Error::UnknownMemory(memory_id.to_string()))?
            .metadata
            .lifecycle;
        let reviewer = review_token
            .and_then(|t| self.config.governance.review_tokens.get(t))
            .cloned();
        let to = transition_lifecycle(target, reviewer.as_deref())?;
        let payload = GovernancePayload::Lifecycle {
            memory_id: memory_id.to_string(),
            from,
            to,
            actor: actor.to_string(),
            reviewer,
        };
        self.store
            .append(&Payload::Governance(Box::new(payload)), self.now_ms(), "")?;
        if let Some(m) = self.store.state().memories.get(memory_id) {
            self.index
                .insert(memory_id.to_string(), IndexedMemory::new(m.clone()));
        }
        Ok(to)
    }

    /// Register (or replace) a theory anchor. Returns true on replacement.
    pub fn register_anchor(
        &mut self,
        obligation: Obligation,
        anchors: Vec<CodeAnchor>,
        actor: &str,
    ) -> Result<bool> {
        let replaced = self.store.state().anchors.get(&obligation).is_some();
        let payload = GovernancePayload::AnchorRegistered {
            obligation,
            anchors,
            replaced,
            actor: actor.to_string(),
        };
        self.store
            .append(&Payload::Governance(Box::new(payload)), self.now_ms(), "")?;
        Ok(replaced)
    }

    // ── Matching ───────────────────────────────────────────────────────

    pub fn issue_match(&mut self, ctx: &Context, opts: MatchOptions) -> Result<MatchResponse> {
        let started = Instant::now();
        let profile = normalize_context(ctx, &self.lexicon)?;
        let now = self.now_ms();
        let state = self.store.state();
        let thresholds = &self.config.ranker;
        let ranked = rank(
            &profile,
            self.index.values(),
            |m| QualityView::new(&m.record, state.live.get(m.id()), now),
            thresholds,
        );
        let decision = decide(&ranked, thresholds);

        let mut candidates: Vec<LoggedCandidate> = ranked
            .iter()
            .map(|c| {
                let rec = &self.index[&c.memory_id].record;
                LoggedCandidate {
                    memory_id: c.memory_id.clone(),
                    pattern_id: rec.pattern_id.clone(),
                    variant_id: rec.variant_id.clone(),
                    rank: c.rank,
                    score_deterministic: c.score_deterministic,
                    features: c.features,
                    specificity_ok: c.specificity_ok,
                    behavior_propensity: behavior_propensity(c.rank),
                    shadow: None,
                    target_propensity: None,
                }
            })
            .collect();

        let shadow_enabled = self.config.shadow.enabled;
        if shadow_enabled && !candidates.is_empty() {
            let fresh;
            let bandit = match &state.bandit {
                Some(b) => b,
                None => {
                    fresh = BanditState::new(self.config.bandit.clone());
                    &fresh
                }
            };
            let kb = bandit.hyper.top_kb.min(candidates.len());
            let scores: Vec<_> = candidates[..kb]
                .iter()
                .map(|c| bandit.shadow_score(c.score_deterministic, &c.features))
                .collect();
            let s_b: Vec<f64> = scores.iter().map(|s| s.shadow_score).collect();
            let pi = target_propensities(&s_b, bandit.hyper.temperature)?;
            for ((c, s), p) in candidates.iter_mut().zip(scores).zip(pi) {
                c.shadow = Some(s);
                c.target_propensity = Some(p);
            }
        }

        let rl_control = candidates
            .iter()
            .any(|c| self.index[&c.memory_id].record.metadata.memory_kind == MemoryKind::RlControl);
        let visible: Vec<String> = decision
            .visible
            .iter()
            .map(|c| c.memory_id.clone())
            .collect();
        let latency_ms = started.elapsed().as_secs_f64() * 1000.0;
        let payload = RetrievalPayload {
            context: ctx.clone(),
            profile,
            candidates,
            decision: decision.kind,
            top_score: decision.top_score,
            margin: decision.margin,
            visible,
            shadow_enabled,
            rl_control,
            latency_ms,
        };
        let telemetry = telemetry_summary(&payload, opts.include_telemetry);
        let response_candidates = decision
            .visible
            .iter()
            .map(|c| {
                let rec = &self.index[&c.memory_id].record;
                VisibleCandidate {
                    memory_id: c.memory_id.clone(),
                    pattern_id: rec.pattern_id.clone(),
                    variant_id: rec.variant_id.clone(),
                    rank: c.rank,
                    score: c.score_deterministic,
                    summary: rec.variant.summary.clone(),
                    validation_tier: rec.metadata.applied_tier(),
                    specificity_ok: c.specificity_ok,
                }
            })
            .collect();
        let event = self.store.append(
            &Payload::Retrieval(Box::new(payload)),
            now,
            &ctx.session.session_id,
        )?;
        Ok(MatchResponse {
            decision: decision.kind,
            top_score: decision.top_score,
            margin: decision.margin,
            candidates: response_candidates,
            retrieval_event_id: event.event_id,
            telemetry,
        })
    }

    // ── Feedback ───────────────────────────────────────────────────────

    fn ensure_bandit(&mut self, now: i64, session: &str) -> Result<()> {
        if self.store.state().bandit.is_none() {
            let state = BanditState::new(self.config.bandit.clone());
            self.store.append(
                &Payload::BanditSnapshot(Box::new(BanditSnapshotPayload { state })),
                now,
                session,
            )?;
        }
        Ok(())
    }

    /// Features of the referenced candidate, else rank 1, when learning applies.
    fn update_for(
        &self,
        event_id: &str,
        memory_ref: Option<&str>,
        reward: f64,
        learnable: bool,
        confidence: f64,
    ) -> Option<BanditUpdate> {
        if !(self.config.shadow.learn && learnable) {
            return None;
        }
        let event = &self.store.state().retrievals.get(event_id)?.payload;
        let cand = memory_ref
            .and_then(|m| event.candidate(m))
            .or_else(|| event.top())?;
        Some(BanditUpdate {
            features: cand.features,
            reward,
            confidence,
        })
    }

    pub fn issue_feedback(&mut self, req: &FeedbackRequest) -> Result<FeedbackAck> {
        let state = self.store.state();
        let Some(event) = state.retrievals.get(&req.retrieval_event_id) else {
            return Err(Error::UnknownRetrievalEvent(req.retrieval_event_id.clone()));
        };
        if let Some(m) = &req.memory_ref {
            if !state.memories.contains_key(m) {
                return Err(Error::UnknownMemory(m.clone()));
            }
        }
        let session = event.session_id.clone();
        let canonical = normalize_feedback(
            &req.label,
            req.override_reward,
            FeedbackSource::Explicit,
            &self.aliases,
        )?;
        let now = self.now_ms();
        let update = self.update_for(
            &req.retrieval_event_id,
            req.memory_ref.as_deref(),
            canonical.reward,
            canonical.learnable,
            1.0,
        );
        if update.is_some() {
            self.ensure_bandit(now, &session)?;
        }
        let ack_base = (
            canonical
                .kind
                .map_or("neutral".to_string(), |k| k.as_str().to_string()),
            canonical.reward,
            canonical.learnable,
            canonical.audit.override_reward_used,
        );
        let payload = FeedbackPayload {
            retrieval_event_id: req.retrieval_event_id.clone(),
            memory_ref: req.memory_ref.clone(),
            feedback: canonical,
            confidence: 1.0,
            duplicate: false,
            bandit_update: update,
        };
        let bandit_updated = payload.bandit_update.is_some();
        let rec = self
            .store
            .append(&Payload::Feedback(Box::new(payload)), now, &session)?;
        Ok(FeedbackAck {
            feedback_event_id: rec.event_id,
            canonical_type: ack_base.0,
            reward: ack_base.1,
            learnable: ack_base.2,
            override_reward_used: ack_base.3,
            bandit_updated,
        })
    }

    /// Build the memory a resolution describes.
    fn resolution_memory(&self, req: &ResolutionRequest, memory_id: &str) -> Result<MemoryRecord> {
        let profile = normalize_context(&req.context, &self.lexicon)?;
        let signature = [req.context.error_text.trim(), req.context.query_text.trim()]
            .iter()
            .filter(|s| !s.is_empty())
            .copied()
            .collect::<Vec<_>>()
            .join("\n");
        let mut metadata = crate::governance::RlControlMetadata::default();
        let hints = &profile.rl_hints;
        if hints.algorithm_family != AlgorithmFamily::None && hints.theory_claim_type.is_some() {
            metadata.memory_kind = MemoryKind::RlControl;
            metadata.algorithm_family = Some(hints.algorithm_family);
            metadata.problem_family = hints.problem_family;
            metadata.theory_claim_type = hints.theory_claim_type;
            metadata.runtime_stage = hints.runtime_stage.clone();
            metadata.requested_tier = Some(ValidationTier::Untested);
        } else if hints.algorithm_family != AlgorithmFamily::None {
            metadata.algorithm_family = Some(hints.algorithm_family);
            metadata.problem_family = hints.problem_family;
        }
        let user = req.context.session.user_id.trim();
        Ok(MemoryRecord {
            memory_id: memory_id.to_string(),
            pattern_id: req.resolution.pattern_id.clone(),
            variant_id: req.resolution.variant_id.clone(),
            pattern: FailurePattern {
                signature,
                error_family: profile.error_family,
                root_cause_class: profile.root_cause_class,
                exception: profile.exception.clone(),
                command: req
                    .context
                    .exec_context
                    .as_ref()
                    .and_then(|e| e.command.clone()),
                paths: profile.paths.clone(),
                entities: profile.entities.clone(),
                project_scope: profile.scope.project.clone(),
                repo: profile.scope.repo.clone(),
                scope_required: false,
            },
            variant: FixVariant {
                summary: req.fix_summary.clone(),
                fix: req.resolution.notes.clone(),
            },
            metadata,
            quality: QualityPrior {
                successes: u32::from(!req.resolution.marked_wrong),
                last_verified_ms: self.now_ms(),
                ..QualityPrior::default()
            },
            origin_user: (!user.is_empty()).then(|| user.to_string()),
        })
    }

    pub fn record_resolution(&mut self, req: &ResolutionRequest) -> Result<ResolutionAck> {
        if req.resolution.pattern_id.trim().is_empty()
            || req.resolution.variant_id.trim().is_empty()
        {
            return Err(Error::InvalidArgument(
                "resolution needs pattern_id and variant_id".into(),
            ));
        }
        let profile = normalize_context(&req.context, &self.lexicon)?;
        let now = self.now_ms();
        let session = req.context.session.session_id.clone();
        let selection = {
            let state = self.store.state();
            let start = state
                .retrieval_order
                .len()
                .saturating_sub(self.config.linker.max_events);
            let window: Vec<WindowEvent> = state.retrieval_order[start..]
                .iter()
                .map(|id| {
                    let r = &state.retrievals[id];
                    WindowEvent {
                        event_id: id,
                        seq: r.seq,
                        timestamp_ms: r.timestamp_ms,
                        session_id: &r.session_id,
                        profile: &r.payload.profile,
                    }
                })
                .collect();
            select_link_event(
                req.retrieval_event_id.as_deref(),
                &profile,
                &session,
                now,
                &window,
                |id| state.retrievals.contains_key(id),
                &self.config.linker,
            )?
        };

        let memory_id = req.memory_id.clone().unwrap_or_else(|| {
            format!(
                "mem-{}-{}",
                req.resolution.pattern_id, req.resolution.variant_id
            )
        });
        let known_pattern = self.store.state().memories.values().any(|m| {
            m.memory_id == memory_id
                || (m.pattern_id == req.resolution.pattern_id
                    && m.variant_id == req.resolution.variant_id)
        });
        let memory = if known_pattern {
            None
        } else {
            Some(self.resolution_memory(req, &memory_id)?)
        };
        let memory_created = memory.is_some();
        if let Some(m) = memory {
            self.upsert_memory(m, "resolution")?;
        }

        let mut ack = ResolutionAck {
            outcome: LinkOutcome::NoLink,
            link_confidence: 0.0,
            implicit_type: None,
            retrieval_event_id: None,
            feedback_event_id: None,
            link_event_id: None,
            memory_id,
            memory_created,
            bandit_updated: false,
        };
        let Some(event_id) = selection.event_id else {
            return Ok(ack);
        };
        let top = self.store.state().retrievals[&event_id]
            .payload
            .top()
            .cloned();
        let implicit =
            infer_implicit_type(top.as_ref().map(|c| c.pattern_id.as_str()), &req.resolution);
        let canonical = normalize_feedback(
            implicit.as_str(),
            None,
            FeedbackSource::ImplicitDelayed,
            &self.aliases,
        )?;
        let key = IdempotenceKey {
            retrieval_event_id: event_id.clone(),
            pattern_id: req.resolution.pattern_id.clone(),
            variant_id: req.resolution.variant_id.clone(),
            feedback_type: implicit,
        };
        let duplicate = self.store.state().link_claimed(&key);
        let memory_ref = top.as_ref().map(|c| c.memory_id.clone());
        let update = if duplicate {
            None
        } else {
            self.update_for(
                &event_id,
                memory_ref.as_deref(),
                canonical.reward,
                canonical.learnable,
                selection.confidence,
            )
        };
        if update.is_some() {
            self.ensure_bandit(now, &session)?;
        }
        ack.bandit_updated = update.is_some();
        let payload = FeedbackPayload {
            retrieval_event_id: event_id.clone(),
            memory_ref,
            feedback: canonical,
            confidence: selection.confidence,
            duplicate,
            bandit_update: update,
        };
        let fb = self
            .store
            .append(&Payload::Feedback(Box::new(payload)), now, &session)?;
        ack.link_confidence = selection.confidence;
        ack.implicit_type = Some(implicit);
        ack.retrieval_event_id = Some(event_id);
        ack.feedback_event_id = Some(fb.event_id.clone());
        if duplicate {
            ack.outcome = LinkOutcome::Duplicate;
            return Ok(ack);
        }
        let link = DelayedLinkPayload {
            key,
            feedback_event_id: fb.event_id,
            link_confidence: selection.confidence,
            implicit_type: implicit,
            resolution: req.resolution.clone(),
        };
        match self.store.check_and_claim_link(link, now, &session)? {
            ClaimResult::Claimed(seq) => {
                ack.outcome = LinkOutcome::Linked;
                ack.link_event_id = Some(crate::store::event_id_for(seq));
            }
            ClaimResult::AlreadyPresent => ack.outcome = LinkOutcome::Duplicate,
        }
        Ok(ack)
    }

    // ── Metrics and health ─────────────────────────────────────────────

    pub fn metrics(&mut self, req: &MetricsRequest) -> Result<MetricsReport> {
        let state = self.store.state();
        let order = &state.retrieval_order;
        let start = req.window.map_or(0, |w| order.len().saturating_sub(w));
        let window = &order[start..];

        let mut by_event: BTreeMap<&str, Vec<&StoredFeedback>> = BTreeMap::new();
        for f in state.feedback.values() {
            if !f.payload.duplicate {
                by_event
                    .entry(f.payload.retrieval_event_id.as_str())
                    .or_default()
                    .push(f);
            }
        }
        for v in by_event.values_mut() {
            v.sort_by_key(|f| f.seq);
        }

        let mut rows = Vec::new();
        let mut latencies = Vec::new();
        let (mut matches, mut ambiguous, mut abstains) = (0u64, 0u64, 0u64);
        let (mut feedback_events, mut bearing, mut updating) = (0u64, 0u64, 0u64);
        let (mut fp_events, mut match_with_feedback) = (0u64, 0u64);
        let mut rl_control = false;
        for id in window {
            let r = &state.retrievals[id].payload;
            latencies.push(r.latency_ms);
            match r.decision {
                DecisionKind::Match => matches += 1,
                DecisionKind::Ambiguous => ambiguous += 1,
                DecisionKind::Abstain => abstains += 1,
            }
            let fbs = by_event.get(id.as_str()).map(Vec::as_slice).unwrap_or(&[]);
            feedback_events += fbs.len() as u64;
            if !fbs.is_empty() {
                bearing += 1;
            }
            if fbs.iter().any(|f| f.payload.bandit_update.is_some()) {
                updating += 1;
            }
            if r.decision == DecisionKind::Match && !fbs.is_empty() {
                match_with_feedback += 1;
                if fbs
                    .iter()
                    .any(|f| f.payload.feedback.kind == Some(FeedbackType::FalsePositive))
                {
                    fp_events += 1;
                }
            }
            if r.decision == DecisionKind::Abstain {
                continue;
            }
            let Some(top) = r.top() else { continue };
            let Some(pi) = top.target_propensity else {
                continue;
            };
            let Some(last) = fbs.iter().rev().find(|f| f.payload.feedback.learnable) else {
                continue;
            };
            let scored: Vec<&LoggedCandidate> = r
                .candidates
                .iter()
                .filter(|c| c.target_propensity.is_some())
                .collect();
            let props: Vec<f64> = scored
                .iter()
                .map(|c| c.target_propensity.unwrap_or(0.0))
                .collect();
            let qs: Vec<f64> = scored
                .iter()
                .map(|c| reward_model(c.score_deterministic))
                .collect();
            rl_control |= self
                .index
                .get(&top.memory_id)
                .is_some_and(|m| m.record.metadata.memory_kind == MemoryKind::RlControl);
            rows.push(LoggedRow {
                context_ref: id.clone(),
                action: top.memory_id.clone(),
                behavior_propensity: top.behavior_propensity,
                target_propensity: pi,
                reward: last.payload.feedback.reward,
                reward_model_chosen: reward_model(top.score_deterministic),
                reward_model_policy: policy_reward_model(&props, &qs),
            });
        }
        latencies.sort_by(f64::total_cmp);
        let p95 = if latencies.is_empty() {
            0.0
        } else {
            nearest_rank(&latencies, 0.95)
        };
        let fp_rate = if match_with_feedback == 0 {
            0.0
        } else {
            fp_events as f64 / match_with_feedback as f64
        };
        let report = build_report(&rows, fp_rate, p95, &self.config.gate)?;
        let flags = GateFlags {
            low_risk: !rl_control,
            rl_control,
        };
        let verdict = evaluate_gate(&report, &self.config.gate, flags);
        let n = window.len() as u64;
        let rate = |k: u64| if n == 0 { 0.0 } else { k as f64 / n as f64 };
        let counters = TelemetryCounters {
            retrieval_events: n,
            match_decisions: matches,
            ambiguous_decisions: ambiguous,
            abstain_decisions: abstains,
            feedback_events,
            feedback_bearing_events: bearing,
            bandit_update_events: updating,
            delayed_links: state.counters.delayed_links,
            duplicate_links: state
                .feedback
                .values()
                .filter(|f| f.payload.duplicate)
                .count() as u64,
            feedback_write_rate: rate(bearing),
            contextual_stats_update_rate: rate(updating),
        };
        let insufficient_data = report.insufficient_data;
        if req.persist {
            let payload = OpeReportPayload {
                report: report.clone(),
                verdict,
                flags,
            };
            let now = self.now_ms();
            self.store
                .append(&Payload::OpeReport(Box::new(payload)), now, "")?;
        }
        Ok(MetricsReport {
            report,
            verdict,
            flags,
            counters,
            insufficient_data,
        })
    }

    pub fn health(&self) -> Health {
        let state = self.store.state();
        Health {
            store_open: true,
            log_sequence: state.last_seq,
            schema_version: SCHEMA_VERSION,
            feature_version: FEATURE_VERSION,
            bandit_dims: FEATURE_DIM,
            bandit_updates: state.counters.bandit_updates,
            memories: state.memories.len(),
            shadow_enabled: self.config.shadow.enabled,
            learn_enabled: self.config.shadow.learn,
            config_digest: self.digest.clone(),
            uptime_ms: self.started.elapsed().as_millis() as u64,
        }
    }
}

fn telemetry_summary(payload: &RetrievalPayload, detailed: bool) -> TelemetrySummary {
    let scored: Vec<&LoggedCandidate> = payload
        .candidates
        .iter()
        .filter(|c| c.shadow.is_some())
        .collect();
    let shadow_top_rank = scored
        .iter()
        .filter_map(|c| Some((c.shadow?.shadow_score, c.rank)))
        .max_by(|a, b| a.0.total_cmp(&b.0).then(b.1.cmp(&a.1)))
        .map(|(_, rank)| rank);
    let candidates = detailed.then(|| {
        scored
            .iter()
            .filter_map(|c| {
                let s = c.shadow?;
                Some(CandidateTelemetry {
                    memory_id: c.memory_id.clone(),
                    mu: s.mu,
                    uncertainty: s.uncertainty,
                    delta: s.delta,
                    shadow_score: s.shadow_score,
                    target_propensity: c.target_propensity.unwrap_or(0.0),
                    behavior_propensity: c.behavior_propensity,
                })
            })
            .collect()
    });
    TelemetrySummary {
        shadow_enabled: payload.shadow_enabled,
        scored_candidates: scored.len(),
        shadow_top_rank,
        candidates,
    }
}
