//! Durable append-only event log with a materialized state.
//!
//! The store directory holds `events.log`, a sequence of records each
//! framed as a 4-byte big-endian length followed by canonical JSON, and
//! `snapshot.json`, a periodic checkpoint of the materialized state. The
//! snapshot is only a cache: loading always scans the full log and a
//! missing or unreadable snapshot falls back to full replay.

use std::collections::{BTreeMap, BTreeSet};
use std::fs::{self, File, OpenOptions};
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::bandit::{BanditState, ShadowScore};
use crate::canonical;
use crate::error::{Error, Result};
use crate::features::{FeatureVector, FeedbackCounts};
use crate::feedback::{CanonicalFeedback, FeedbackType};
use crate::governance::{
    AnchorRegistry, CodeAnchor, LifecycleState, Obligation, PromotionDecision,
};
use crate::linker::ResolutionSummary;
use crate::model::{snake_enum, Context, DecisionKind, ErrorFamily, MemoryRecord};
use crate::normalize::QueryProfile;
use crate::ope::{GateFlags, GateVerdict, OpeReport};
use std::fmt;

pub const SCHEMA_VERSION: u32 = 1;
pub const LOG_FILE: &str = "events.log";
pub const SNAPSHOT_FILE: &str = "snapshot.json";

snake_enum! {
    EventKind {
        MemoryUpsert => "memory_upsert",
        Retrieval => "retrieval",
        Feedback => "feedback",
        DelayedLink => "delayed_link",
        BanditSnapshot => "bandit_snapshot",
        OpeReport => "ope_report",
        Governance => "governance",
    }
}

pub fn event_id_for(seq: u64) -> String {
    format!("evt-{seq:08}")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EventRecord {
    pub seq: u64,
    pub event_id: String,
    pub kind: EventKind,
    pub timestamp_ms: i64,
    pub session_id: String,
    pub schema_version: u32,
    pub payload: Value,
}

// ── Payloads ────────────────────────────────────────────────────────────

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LoggedCandidate {
    pub memory_id: String,
    pub pattern_id: String,
    pub variant_id: String,
    pub rank: usize,
    pub score_deterministic: f64,
    pub features: FeatureVector,
    pub specificity_ok: bool,
    pub behavior_propensity: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub shadow: Option<ShadowScore>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target_propensity: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RetrievalPayload {
    pub context: Context,
    pub profile: QueryProfile,
    pub candidates: Vec<LoggedCandidate>,
    pub decision: DecisionKind,
    pub top_score: f64,
    pub margin: f64,
    pub visible: Vec<String>,
    pub shadow_enabled: bool,
    /// True when any scored candidate is an RL/control memory.
    pub rl_control: bool,
    pub latency_ms: f64,
}

impl RetrievalPayload {
    pub fn candidate(&self, memory_id: &str) -> Option<&LoggedCandidate> {
        self.candidates.iter().find(|c| c.memory_id == memory_id)
    }

    pub fn top(&self) -> Option<&LoggedCandidate> {
        self.candidates.first()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BanditUpdate {
    pub features: FeatureVector,
    pub reward: f64,
    pub confidence: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FeedbackPayload {
    pub retrieval_event_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub memory_ref: Option<String>,
    pub feedback: CanonicalFeedback,
    pub confidence: f64,
    /// A replayed delayed link: persisted for audit, never learned from.
    pub duplicate: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bandit_update: Option<BanditUpdate>,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IdempotenceKey {
    pub retrieval_event_id: String,
    pub pattern_id: String,
    pub variant_id: String,
    pub feedback_type: FeedbackType,
}

impl IdempotenceKey {
    fn encoded(&self) -> String {
        canonical::to_string(self).expect("key encodes")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DelayedLinkPayload {
    pub key: IdempotenceKey,
    pub feedback_event_id: String,
    pub link_confidence: f64,
    pub implicit_type: FeedbackType,
    pub resolution: ResolutionSummary,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BanditSnapshotPayload {
    pub state: BanditState,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OpeReportPayload {
    pub report: OpeReport,
    pub verdict: GateVerdict,
    pub flags: GateFlags,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "action", rename_all = "snake_case", deny_unknown_fields)]
pub enum GovernancePayload {
    Lifecycle {
        memory_id: String,
        from: LifecycleState,
        to: LifecycleState,
        actor: String,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        reviewer: Option<String>,
    },
    Promotion {
        memory_id: String,
        decision: PromotionDecision,
        actor: String,
    },
    AnchorRegistered {
        obligation: Obligation,
        anchors: Vec<CodeAnchor>,
        replaced: bool,
        actor: String,
    },
}

/// A payload parsed against its kind's schema.
#[derive(Debug, Clone, PartialEq)]
pub enum Payload {
    MemoryUpsert(Box<MemoryRecord>),
    Retrieval(Box<RetrievalPayload>),
    Feedback(Box<FeedbackPayload>),
    DelayedLink(Box<DelayedLinkPayload>),
    BanditSnapshot(Box<BanditSnapshotPayload>),
    OpeReport(Box<OpeReportPayload>),
    Governance(Box<GovernancePayload>),
}

fn typed<T: DeserializeOwned>(v: &Value) -> Result<Box<T>> {
    Ok(Box::new(
        serde_json::from_value(v.clone()).map_err(|e| Error::Schema(e.to_string()))?,
    ))
}

impl Payload {
    pub fn parse(kind: EventKind, v: &Value) -> Result<Payload> {
        Ok(match kind {
            EventKind::MemoryUpsert => Payload::MemoryUpsert(typed(v)?),
            EventKind::Retrieval => Payload::Retrieval(typed(v)?),
            EventKind::Feedback => Payload::Feedback(typed(v)?),
            EventKind::DelayedLink => Payload::DelayedLink(typed(v)?),
            EventKind::BanditSnapshot => Payload::BanditSnapshot(typed(v)?),
            EventKind::OpeReport => Payload::OpeReport(typed(v)?),
            EventKind::Governance => Payload::Governance(typed(v)?),
        })
    }

    pub fn kind(&self) -> EventKind {
        match self {
            Payload::MemoryUpsert(_) => EventKind::MemoryUpsert,
            Payload::Retrieval(_) => EventKind::Retrieval,
            Payload::Feedback(_) => EventKind::Feedback,
            Payload::DelayedLink(_) => EventKind::DelayedLink,
            Payload::BanditSnapshot(_) => EventKind::BanditSnapshot,
            Payload::OpeReport(_) => EventKind::OpeReport,
            Payload::Governance(_) => EventKind::Governance,
        }
    }

    pub fn to_value(&self) -> Result<Value> {
        Ok(match self {
            Payload::MemoryUpsert(p) => serde_json::to_value(p)?,
            Payload::Retrieval(p) => serde_json::to_value(p)?,
            Payload::Feedback(p) => serde_json::to_value(p)?,
            Payload::DelayedLink(p) => serde_json::to_value(p)?,
            Payload::BanditSnapshot(p) => serde_json::to_value(p)?,
            Payload::OpeReport(p) => serde_json::to_value(p)?,
            Payload::Governance(p) => serde_json::to_value(p)?,
        })
    }
}

// ── Materialized state ──────────────────────────────────────────────────

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StoredRetrieval {
    pub seq: u64,
    pub timestamp_ms: i64,
    pub session_id: String,
    pub payload: RetrievalPayload,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StoredFeedback {
    pub seq: u64,
    pub timestamp_ms: i64,
    pub payload: FeedbackPayload,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Counters {
    pub events: u64,
    pub memory_upserts: u64,
    pub retrievals: u64,
    pub feedback: u64,
    pub bandit_updates: u64,
    pub delayed_links: u64,
    pub duplicate_links: u64,
    pub bandit_snapshots: u64,
    pub ope_reports: u64,
    pub governance: u64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct State {
    pub last_seq: u64,
    pub memories: BTreeMap<String, MemoryRecord>,
    pub retrievals: BTreeMap<String, StoredRetrieval>,
    /// Retrieval event ids in append order.
    pub retrieval_order: Vec<String>,
    pub feedback: BTreeMap<String, StoredFeedback>,
    /// Encoded idempotence key to delayed-link event id.
    pub links: BTreeMap<String, String>,
    pub bandit: Option<BanditState>,
    pub anchors: AnchorRegistry,
    pub live: BTreeMap<String, FeedbackCounts>,
    pub counters: Counters,
    pub event_ids: BTreeSet<String>,
}

impl State {
    pub fn link_claimed(&self, key: &IdempotenceKey) -> bool {
        self.links.contains_key(&key.encoded())
    }

    /// Check a record against the current state without mutating it.
    pub fn validate(&self, rec: &EventRecord, payload: &Payload) -> Result<()> {
        if rec.seq != self.last_seq + 1 {
            return Err(Error::Schema(format!(
                "sequence {} does not follow {}",
                rec.seq, self.last_seq
            )));
        }
        if self.event_ids.contains(&rec.event_id) {
            return Err(Error::DuplicateEventId(rec.event_id.clone()));
        }
        if rec.event_id.trim().is_empty() {
            return Err(Error::Schema("event_id must be non-empty".into()));
        }
        if rec.schema_version != SCHEMA_VERSION {
            return Err(Error::Schema(format!(
                "unsupported schema_version {}",
                rec.schema_version
            )));
        }
        if payload.kind() != rec.kind {
            return Err(Error::Schema("payload does not match kind".into()));
        }
        match payload {
            Payload::MemoryUpsert(m) => m.validate()?,
            Payload::Retrieval(r) => {
                if r.candidates.iter().any(|c| !c.features.is_bounded()) {
                    return Err(Error::Schema(
                        "retrieval candidate features out of bounds".into(),
                    ));
                }
            }
            Payload::Feedback(f) => {
                if !self.retrievals.contains_key(&f.retrieval_event_id) {
                    return Err(Error::UnknownRetrievalEvent(f.retrieval_event_id.clone()));
                }
                if !(-1.0..=1.0).contains(&f.feedback.reward) {
                    return Err(Error::Schema("feedback reward outside [-1,1]".into()));
                }
                if let Some(u) = &f.bandit_update {
                    let Some(bandit) = &self.bandit else {
                        return Err(Error::Schema("bandit update before bandit snapshot".into()));
                    };
                    if f.duplicate || !f.feedback.learnable {
                        return Err(Error::Schema(
                            "non-learnable feedback carries a bandit update".into(),
                        ));
                    }
                    bandit
                        .clone()
                        .update(&u.features, u.reward, true, u.confidence)?;
                }
            }
            Payload::DelayedLink(l) => {
                if self.link_claimed(&l.key) {
                    return Err(Error::Schema(format!(
                        "idempotence key already linked: {}",
                        l.key.encoded()
                    )));
                }
                if !self.feedback.contains_key(&l.feedback_event_id) {
                    return Err(Error::Schema(format!(
                        "link references unknown feedback {}",
                        l.feedback_event_id
                    )));
                }
            }
            Payload::BanditSnapshot(b) => b.state.validate()?,
            Payload::OpeReport(_) => {}
            Payload::Governance(g) => match g.as_ref() {
                GovernancePayload::Lifecycle { memory_id, .. }
                | GovernancePayload::Promotion { memory_id, .. } => {
                    if !self.memories.contains_key(memory_id) {
                        return Err(Error::UnknownMemory(memory_id.clone()));
                    }
                }
                GovernancePayload::AnchorRegistered {
                    obligation,
                    anchors,
                    ..
                } => {
                    crate::governance::validate_anchor(obligation, anchors)?;
                }
            },
        }
        Ok(())
    }

    /// Apply a record that already passed [`State::validate`].
    pub fn apply(&mut self, rec: &EventRecord, payload: Payload) {
        self.last_seq = rec.seq;
        self.event_ids.insert(rec.event_id.clone());
        self.counters.events += 1;
        match payload {
            Payload::MemoryUpsert(m) => {
                self.counters.memory_upserts += 1;
                self.memories.insert(m.memory_id.clone(), *m);
            }
            Payload::Retrieval(r) => {
                self.counters.retrievals += 1;
                self.retrieval_order.push(rec.event_id.clone());
                self.retrievals.insert(
                    rec.event_id.clone(),
                    StoredRetrieval {
                        seq: rec.seq,
                        timestamp_ms: rec.timestamp_ms,
                        session_id: rec.session_id.clone(),
                        payload: *r,
                    },
                );
            }
            Payload::Feedback(f) => {
                self.counters.feedback += 1;
                if let Some(u) = &f.bandit_update {
                    if let Some(b) = self.bandit.as_mut() {
                        b.update(&u.features, u.reward, true, u.confidence)
                            .expect("validated update");
                        self.counters.bandit_updates += 1;
                    }
                }
                if !f.duplicate {
                    self.record_live_feedback(&f, rec.timestamp_ms);
                }
                self.feedback.insert(
                    rec.event_id.clone(),
                    StoredFeedback {
                        seq: rec.seq,
                        timestamp_ms: rec.timestamp_ms,
                        payload: *f,
                    },
                );
            }
            Payload::DelayedLink(l) => {
                self.counters.delayed_links += 1;
                self.links.insert(l.key.encoded(), rec.event_id.clone());
            }
            Payload::BanditSnapshot(b) => {
                self.counters.bandit_snapshots += 1;
                self.bandit = Some(b.state);
            }
            Payload::OpeReport(_) => self.counters.ope_reports += 1,
            Payload::Governance(g) => {
                self.counters.governance += 1;
                match *g {
                    GovernancePayload::Lifecycle { memory_id, to, .. } => {
                        if let Some(m) = self.memories.get_mut(&memory_id) {
                            m.metadata.lifecycle = to;
                        }
                    }
                    GovernancePayload::Promotion { .. } => {}
                    GovernancePayload::AnchorRegistered {
                        obligation,
                        anchors,
                        ..
                    } => {
                        self.anchors
                            .register(obligation, anchors)
                            .expect("validated anchor");
                    }
                }
            }
        }
    }

    /// Memory the feedback is about: the explicit reference, else the
    /// logged rank-1 candidate.
    pub fn feedback_target(&self, f: &FeedbackPayload) -> Option<String> {
        if let Some(m) = &f.memory_ref {
            return Some(m.clone());
        }
        let r = self.retrievals.get(&f.retrieval_event_id)?;
        r.payload.top().map(|c| c.memory_id.clone())
    }

    fn record_live_feedback(&mut self, f: &FeedbackPayload, ts: i64) {
        let Some(kind) = f.feedback.kind else { return };
        let Some(target) = self.feedback_target(f) else {
            return;
        };
        let family = self
            .retrievals
            .get(&f.retrieval_event_id)
            .map_or(ErrorFamily::Unknown, |r| r.payload.profile.error_family);
        let counts = self.live.entry(target).or_default();
        match kind {
            FeedbackType::FixVerified => {
                counts.successes += 1;
                counts.last_verified_ms = counts.last_verified_ms.max(ts);
            }
            FeedbackType::CandidateAccepted
            | FeedbackType::MergeConfirmed
            | FeedbackType::SplitConfirmed => {
                counts.successes += 1;
            }
            FeedbackType::FalsePositive => {
                counts.failures += 1;
                counts.false_positive_families.insert(family);
            }
            FeedbackType::CandidateRejected => {
                counts.failures += 1;
                counts.rejections += 1;
            }
            FeedbackType::MergeRejected | FeedbackType::SplitRejected => counts.rejections += 1,
        }
    }
}

// ── Store ───────────────────────────────────────────────────────────────

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct StoreOptions {
    pub fsync: bool,
    /// Write a snapshot every this many appends; 0 disables snapshots.
    pub snapshot_every: u64,
    /// Truncate the log at the first corrupt record instead of refusing to load.
    pub repair_truncate: bool,
    /// Start from `snapshot.json` when it is usable.
    pub use_snapshot: bool,
}

impl Default for StoreOptions {
    fn default() -> Self {
        StoreOptions {
            fsync: true,
            snapshot_every: 256,
            repair_truncate: false,
            use_snapshot: true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ClaimResult {
    Claimed(u64),
    AlreadyPresent,
}

#[derive(Serialize, Deserialize)]
struct Snapshot {
    seq: u64,
    state: State,
}

pub struct Store {
    dir: PathBuf,
    log: File,
    len: u64,
    opts: StoreOptions,
    state: State,
    since_snapshot: u64,
    fail_next_write: bool,
}

impl fmt::Debug for Store {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Store")
            .field("dir", &self.dir)
            .field("len", &self.len)
            .field("seq", &self.state.last_seq)
            .finish()
    }
}

/// Parse every complete, valid record in `bytes`. Returns the state, the
/// byte length of the valid prefix, and the first corruption if any.
fn replay(bytes: &[u8], start: Option<Snapshot>) -> (State, u64, Option<Error>) {
    let (mut state, skip_to) = match start {
        Some(s) => (s.state, s.seq),
        None => (State::default(), 0),
    };
    let mut offset = 0usize;
    let mut seq = 0u64;
    while offset < bytes.len() {
        let expected_seq = seq + 1;
        let corrupt = |reason: String| Error::Corrupt {
            seq: expected_seq,
            offset: offset as u64,
            reason,
        };
        if bytes.len() - offset < 4 {
            return (
                state,
                offset as u64,
                Some(corrupt("truncated length prefix".into())),
            );
        }
        let len =
            u32::from_be_bytes(bytes[offset..offset + 4].try_into().expect("4 bytes")) as usize;
        let body_start = offset + 4;
        if bytes.len() - body_start < len {
            return (
                state,
                offset as u64,
                Some(corrupt(format!(
                    "record body truncated ({len} bytes declared)"
                ))),
            );
        }
        let body = &bytes[body_start..body_start + len];
        let rec: EventRecord = match serde_json::from_slice(body) {
            Ok(r) => r,
            Err(e) => {
                return (
                    state,
                    offset as u64,
                    Some(corrupt(format!("unparseable record: {e}"))),
                )
            }
        };
        if rec.seq != expected_seq {
            return (
                state,
                offset as u64,
                Some(corrupt(format!("sequence {} out of order", rec.seq))),
            );
        }
        if rec.seq > skip_to {
            let applied = Payload::parse(rec.kind, &rec.payload).and_then(|p| {
                state.validate(&rec, &p)?;
                Ok(p)
            });
            match applied {
                Ok(p) => state.apply(&rec, p),
                Err(e) => return (state, offset as u64, Some(corrupt(e.to_string()))),
            }
        }
        seq = rec.seq;
        offset = body_start + len;
    }
    (state, offset as u64, None)
}

impl Store {
    /// Open (creating if needed) the store in `dir` and materialize its state.
    pub fn open(dir: impl AsRef<Path>, opts: StoreOptions) -> Result<Store> {
        let dir = dir.as_ref().to_path_buf();
        fs::create_dir_all(&dir)?;
        let log_path = dir.join(LOG_FILE);
        let mut bytes = Vec::new();
        if log_path.exists() {
            File::open(&log_path)?.read_to_end(&mut bytes)?;
        }
        let count = count_complete_records(&bytes);
        let snapshot = if opts.use_snapshot {
            read_snapshot(&dir, count)
        } else {
            None
        };
        let (mut state, mut valid, mut err) = replay(&bytes, snapshot);
        if err.is_some() && opts.use_snapshot {
            // The snapshot may cover records past the corruption point.
            let (s, v, e) = replay(&bytes, None);
            state = s;
            valid = v;
            err = e;
        }
        if let Some(e) = err {
            if !opts.repair_truncate {
                return Err(e);
            }
        }
        let log = OpenOptions::new()
            .create(true)
            .read(true)
            .append(true)
            .open(&log_path)?;
        if valid < bytes.len() as u64 {
            log.set_len(valid)?;
            log.sync_all()?;
        }
        Ok(Store {
            dir,
            log,
            len: valid,
            opts,
            state,
            since_snapshot: 0,
            fail_next_write: false,
        })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn state(&self) -> &State {
        &self.state
    }

    pub fn last_seq(&self) -> u64 {
        self.state.last_seq
    }

    pub fn options(&self) -> &StoreOptions {
        &self.opts
    }

    /// Make the next append fail after writing part of its bytes.
    #[doc(hidden)]
    pub fn inject_write_failure(&mut self) {
        self.fail_next_write = true;
    }

    /// Append a fully formed record. Its sequence must be the successor of
    /// the last one and its id must be unused.
    pub fn append_record(&mut self, rec: EventRecord) -> Result<u64> {
        let payload = Payload::parse(rec.kind, &rec.payload)?;
        self.state.validate(&rec, &payload)?;
        let mut framed = Vec::new();
        let body = canonical::to_vec(&rec)?;
        let len =
            u32::try_from(body.len()).map_err(|_| Error::Schema("record exceeds 4 GiB".into()))?;
        framed.extend_from_slice(&len.to_be_bytes());
        framed.extend_from_slice(&body);
        if let Err(e) = self.write_framed(&framed) {
            // Roll back any partial bytes so the log stays a clean prefix.
            let _ = self.log.set_len(self.len);
            return Err(e);
        }
        self.len += framed.len() as u64;
        let seq = rec.seq;
        self.state.apply(&rec, payload);
        self.since_snapshot += 1;
        if self.opts.snapshot_every > 0 && self.since_snapshot >= self.opts.snapshot_every {
            self.write_snapshot()?;
        }
        Ok(seq)
    }

    fn write_framed(&mut self, framed: &[u8]) -> Result<()> {
        if self.fail_next_write {
            self.fail_next_write = false;
            self.log.write_all(&framed[..framed.len() / 2])?;
            return Err(Error::Io(std::io::Error::other("injected write failure")));
        }
        self.log.write_all(framed)?;
        if self.opts.fsync {
            self.log.sync_data()?;
        }
        Ok(())
    }

    /// Append a typed payload as the next event.
    pub fn append(
        &mut self,
        payload: &Payload,
        timestamp_ms: i64,
        session_id: &str,
    ) -> Result<EventRecord> {
        let seq = self.state.last_seq + 1;
        let rec = EventRecord {
            seq,
            event_id: event_id_for(seq),
            kind: payload.kind(),
            timestamp_ms,
            session_id: session_id.to_string(),
            schema_version: SCHEMA_VERSION,
            payload: payload.to_value()?,
        };
        self.append_record(rec.clone())?;
        Ok(rec)
    }

    /// Record a delayed link unless its key is already linked.
    pub fn check_and_claim_link(
        &mut self,
        link: DelayedLinkPayload,
        timestamp_ms: i64,
        session_id: &str,
    ) -> Result<ClaimResult> {
        if self.state.link_claimed(&link.key) {
            return Ok(ClaimResult::AlreadyPresent);
        }
        let rec = self.append(
            &Payload::DelayedLink(Box::new(link)),
            timestamp_ms,
            session_id,
        )?;
        Ok(ClaimResult::Claimed(rec.seq))
    }

    pub fn write_snapshot(&mut self) -> Result<()> {
        let snap = Snapshot {
            seq: self.state.last_seq,
            state: self.state.clone(),
        };
        let tmp = self.dir.join(format!("{SNAPSHOT_FILE}.tmp"));
        let mut f = File::create(&tmp)?;
        f.write_all(&canonical::to_vec(&snap)?)?;
        if self.opts.fsync {
            f.sync_all()?;
        }
        fs::rename(&tmp, self.dir.join(SNAPSHOT_FILE))?;
        self.since_snapshot = 0;
        Ok(())
    }

    /// Every record in the log, in order.
    pub fn read_log(&self) -> Result<Vec<EventRecord>> {
        read_log(&self.dir.join(LOG_FILE))
    }
}

fn count_complete_records(bytes: &[u8]) -> u64 {
    let mut offset = 0usize;
    let mut n = 0;
    while bytes.len() - offset >= 4 {
        let len =
            u32::from_be_bytes(bytes[offset..offset + 4].try_into().expect("4 bytes")) as usize;
        if bytes.len() - offset - 4 < len {
            break;
        }
        offset += 4 + len;
        n += 1;
    }
    n
}

fn read_snapshot(dir: &Path, records: u64) -> Option<Snapshot> {
    let bytes = fs::read(dir.join(SNAPSHOT_FILE)).ok()?;
    let snap: Snapshot = serde_json::from_slice(&bytes).ok()?;
    (snap.seq <= records && snap.state.last_seq == snap.seq).then_some(snap)
}

/// Decode all well-formed records of a log file, stopping at the first
/// malformed one.
pub fn read_log(path: &Path) -> Result<Vec<EventRecord>> {
    let bytes = match fs::read(path) {
        Ok(b) => b,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(Vec::new()),
        Err(e) => return Err(e.into()),
    };
    let mut out = Vec::new();
    let mut offset = 0usize;
    while bytes.len() - offset >= 4 {
        let len =
            u32::from_be_bytes(bytes[offset..offset + 4].try_into().expect("4 bytes")) as usize;
        if bytes.len() - offset - 4 < len {
            break;
        }
        out.push(serde_json::from_slice(
            &bytes[offset + 4..offset + 4 + len],
        )?);
        offset += 4 + len;
    }
    Ok(out)
}
