//! Per-candidate feature vector. Every dimension is bounded in [-1, 1];
//! conflict dimensions are symmetric (+1 agree, 0 unknown, -1 conflict).

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{
    AlgorithmFamily, ErrorFamily, MemoryKind, MemoryRecord, ProblemFamily, RootCauseClass,
};
use crate::normalize::{
    command_family, normalize_path, token_signature, tokenize, QueryProfile, TokenSignature,
};

pub const FEATURE_DIM: usize = 18;
pub const FEATURE_VERSION: u32 = 1;

pub const FEATURE_NAMES: [&str; FEATURE_DIM] = [
    "lexical",
    "dense",
    "exception",
    "command",
    "path",
    "entity",
    "scope",
    "family",
    "root_cause",
    "feedback",
    "success_prior",
    "negative_applicability",
    "session",
    "memory_kind",
    "problem_family",
    "algorithm_family",
    "theory",
    "validation_tier",
];

/// Index of each named dimension.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(usize)]
pub enum Dim {
    Lexical,
    Dense,
    Exception,
    Command,
    Path,
    Entity,
    Scope,
    Family,
    RootCause,
    Feedback,
    SuccessPrior,
    NegativeApplicability,
    Session,
    MemoryKind,
    ProblemFamily,
    AlgorithmFamily,
    Theory,
    ValidationTier,
}

impl Dim {
    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        FEATURE_NAMES[self as usize]
    }
}

#[derive(Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct FeatureVector(pub [f64; FEATURE_DIM]);

impl FeatureVector {
    pub fn zeros() -> Self {
        FeatureVector([0.0; FEATURE_DIM])
    }

    pub fn one_hot(index: usize) -> Self {
        let mut v = [0.0; FEATURE_DIM];
        v[index] = 1.0;
        FeatureVector(v)
    }

    pub fn get(&self, dim: Dim) -> f64 {
        self.0[dim.index()]
    }

    pub fn values(&self) -> &[f64; FEATURE_DIM] {
        &self.0
    }

    pub fn is_bounded(&self) -> bool {
        self.0
            .iter()
            .all(|x| x.is_finite() && (-1.0..=1.0).contains(x))
    }

    pub fn named(&self) -> BTreeMap<&'static str, f64> {
        FEATURE_NAMES
            .iter()
            .copied()
            .zip(self.0.iter().copied())
            .collect()
    }
}

impl fmt::Debug for FeatureVector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_map()
            .entries(FEATURE_NAMES.iter().zip(self.0.iter()))
            .finish()
    }
}

// ── Feedback-derived quality ────────────────────────────────────────────

/// Live feedback observed for one memory by this store.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeedbackCounts {
    pub successes: u32,
    pub failures: u32,
    pub rejections: u32,
    pub false_positive_families: BTreeSet<ErrorFamily>,
    pub last_verified_ms: i64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeedbackAggregates {
    pub confidence: f64,
    pub strength: f64,
    pub success_ratio: f64,
    pub rejection_ratio: f64,
    pub age_days: f64,
}

const MS_PER_DAY: f64 = 86_400_000.0;

impl FeedbackAggregates {
    /// Combine a memory's imported prior with live counts. Strength is the
    /// recency of the last confirmation; success ratio is Laplace-smoothed.
    pub fn from_memory(memory: &MemoryRecord, live: Option<&FeedbackCounts>, now_ms: i64) -> Self {
        let prior = &memory.quality;
        let empty = FeedbackCounts::default();
        let live = live.unwrap_or(&empty);
        let successes = f64::from(prior.successes) + f64::from(live.successes);
        let failures = f64::from(prior.failures) + f64::from(live.failures);
        let rejections = f64::from(prior.rejections) + f64::from(live.rejections);
        let total = successes + failures;
        let last = prior.last_verified_ms.max(live.last_verified_ms);
        let age_days = ((now_ms - last) as f64 / MS_PER_DAY).max(0.0);
        FeedbackAggregates {
            confidence: prior.confidence.clamp(0.0, 1.0),
            strength: recency_feature(age_days).unwrap_or(0.0),
            success_ratio: (successes + 1.0) / (total + 2.0),
            rejection_ratio: if total > 0.0 {
                (rejections / total).clamp(0.0, 1.0)
            } else {
                0.0
            },
            age_days,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let unit = |name: &str, x: f64| {
            if (0.0..=1.0).contains(&x) {
                Ok(())
            } else {
                Err(Error::InvalidArgument(format!(
                    "{name} = {x} outside [0,1]"
                )))
            }
        };
        unit("confidence", self.confidence)?;
        unit("strength", self.strength)?;
        unit("success_ratio", self.success_ratio)?;
        unit("rejection_ratio", self.rejection_ratio)?;
        if !(self.age_days >= 0.0) {
            return Err(Error::InvalidAge(self.age_days));
        }
        Ok(())
    }
}

/// `1 / (1 + age_days / 30)`.
pub fn recency_feature(age_days: f64) -> Result<f64> {
    if !(age_days >= 0.0) {
        return Err(Error::InvalidAge(age_days));
    }
    Ok(1.0 / (1.0 + age_days / 30.0))
}

/// `clip[0,1](0.42 c + 0.33 s + 0.25 u - 0.22 rho)`.
pub fn feedback_feature(agg: &FeedbackAggregates) -> f64 {
    (0.42 * agg.confidence + 0.33 * agg.strength + 0.25 * agg.success_ratio
        - 0.22 * agg.rejection_ratio)
        .clamp(0.0, 1.0)
}

// ── Hashed dense surrogate ──────────────────────────────────────────────

pub const HASH_BUCKETS: usize = 256;

fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in bytes {
        h ^= u64::from(*b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

/// Unit-norm bucket vector over hashed unigrams and bigrams.
#[derive(Debug, Clone, PartialEq)]
pub struct HashedVector(Box<[f64; HASH_BUCKETS]>);

impl HashedVector {
    pub fn from_text(text: &str) -> Self {
        let tokens: Vec<String> = tokenize(text);
        let mut v = Box::new([0.0; HASH_BUCKETS]);
        for t in &tokens {
            v[(fnv1a(t.as_bytes()) % HASH_BUCKETS as u64) as usize] += 1.0;
        }
        for pair in tokens.windows(2) {
            let joined = format!("{} {}", pair[0], pair[1]);
            v[(fnv1a(joined.as_bytes()) % HASH_BUCKETS as u64) as usize] += 0.5;
        }
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 0.0 {
            v.iter_mut().for_each(|x| *x /= norm);
        }
        HashedVector(v)
    }

    pub fn cosine(&self, other: &HashedVector) -> f64 {
        self.0
            .iter()
            .zip(other.0.iter())
            .map(|(a, b)| a * b)
            .sum::<f64>()
            .clamp(0.0, 1.0)
    }
}

// ── Indexed memory ──────────────────────────────────────────────────────

/// A memory together with the text-derived vectors the ranker needs.
#[derive(Debug, Clone)]
pub struct IndexedMemory {
    pub record: MemoryRecord,
    pub signature: TokenSignature,
    pub hashed: HashedVector,
    pub command: Option<String>,
    pub paths: Vec<String>,
}

impl IndexedMemory {
    pub fn new(record: MemoryRecord) -> Self {
        let signature = token_signature(&record.pattern.signature);
        let hashed = HashedVector::from_text(&record.pattern.signature);
        let command = record.pattern.command.as_deref().and_then(command_family);
        let paths = record
            .pattern
            .paths
            .iter()
            .map(|p| normalize_path(p))
            .filter(|p| !p.is_empty())
            .collect();
        IndexedMemory {
            record,
            signature,
            hashed,
            command,
            paths,
        }
    }

    pub fn id(&self) -> &str {
        &self.record.memory_id
    }
}

/// Quality evidence for a memory at scoring time.
#[derive(Debug, Clone, PartialEq)]
pub struct QualityView {
    pub aggregates: FeedbackAggregates,
    pub false_positive_families: BTreeSet<ErrorFamily>,
}

impl QualityView {
    pub fn new(memory: &MemoryRecord, live: Option<&FeedbackCounts>, now_ms: i64) -> Self {
        let mut fp = memory.quality.false_positive_families.clone();
        if let Some(live) = live {
            fp.extend(live.false_positive_families.iter().copied());
        }
        QualityView {
            aggregates: FeedbackAggregates::from_memory(memory, live, now_ms),
            false_positive_families: fp,
        }
    }
}

// ── Comparison helpers ──────────────────────────────────────────────────

/// +1 equal, 0 when either side is absent, -1 otherwise.
pub fn tri<T: PartialEq>(a: Option<T>, b: Option<T>) -> f64 {
    match (a, b) {
        (Some(a), Some(b)) if a == b => 1.0,
        (Some(_), Some(_)) => -1.0,
        _ => 0.0,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PathRelation {
    Absent,
    Exact,
    /// Different files under a shared directory prefix of two or more components.
    Compatible,
    Conflict,
}

fn components(path: &str) -> Vec<&str> {
    path.split('/').filter(|c| !c.is_empty()).collect()
}

pub fn path_relation(query: &[String], memory: &[String]) -> PathRelation {
    if query.is_empty() || memory.is_empty() {
        return PathRelation::Absent;
    }
    if query.iter().any(|q| memory.contains(q)) {
        return PathRelation::Exact;
    }
    let shared = query.iter().any(|q| {
        let qc = components(q);
        memory.iter().any(|m| {
            let mc = components(m);
            qc.iter().zip(mc.iter()).take_while(|(a, b)| a == b).count() >= 2
        })
    });
    if shared {
        PathRelation::Compatible
    } else {
        PathRelation::Conflict
    }
}

pub fn entity_jaccard(
    a: &BTreeMap<String, BTreeSet<String>>,
    b: &BTreeMap<String, BTreeSet<String>>,
) -> f64 {
    let (mut inter, mut union) = (0usize, 0usize);
    for (slot, left) in a {
        if let Some(right) = b.get(slot) {
            inter += left.intersection(right).count();
            union += left.union(right).count();
        }
    }
    if union == 0 {
        0.0
    } else {
        inter as f64 / union as f64
    }
}

fn known_family(f: ErrorFamily) -> Option<ErrorFamily> {
    (f != ErrorFamily::Unknown).then_some(f)
}

fn known_root(r: RootCauseClass) -> Option<RootCauseClass> {
    (r != RootCauseClass::Unknown).then_some(r)
}

fn specific_algorithm(a: Option<AlgorithmFamily>) -> Option<AlgorithmFamily> {
    a.filter(|a| a.is_specific())
}

fn specific_problem(p: Option<ProblemFamily>) -> Option<ProblemFamily> {
    p.filter(|p| *p != ProblemFamily::GeneralRl)
}

fn non_empty(s: &str) -> Option<&str> {
    let s = s.trim();
    (!s.is_empty()).then_some(s)
}

pub fn query_memory_kind(profile: &QueryProfile) -> MemoryKind {
    if profile.rl_hints.algorithm_family == AlgorithmFamily::None {
        MemoryKind::General
    } else {
        MemoryKind::RlControl
    }
}

/// Compute the bounded feature vector for one (query, memory) pair.
pub fn extract_features(
    profile: &QueryProfile,
    memory: &IndexedMemory,
    quality: &QualityView,
) -> FeatureVector {
    let rec = &memory.record;
    let meta = &rec.metadata;
    let mut v = [0.0; FEATURE_DIM];
    let query_hashed = HashedVector::from_text(&profile.text);

    v[Dim::Lexical.index()] = profile.token_signature.cosine(&memory.signature);
    v[Dim::Dense.index()] = query_hashed.cosine(&memory.hashed);
    v[Dim::Exception.index()] = tri(
        profile.exception.as_deref(),
        rec.pattern.exception.as_deref(),
    );
    v[Dim::Command.index()] = tri(profile.command.as_deref(), memory.command.as_deref());
    v[Dim::Path.index()] = match path_relation(&profile.paths, &memory.paths) {
        PathRelation::Absent => 0.0,
        PathRelation::Exact => 1.0,
        PathRelation::Compatible => 0.5,
        PathRelation::Conflict => -1.0,
    };
    v[Dim::Entity.index()] = entity_jaccard(&profile.entities, &rec.pattern.entities);
    v[Dim::Scope.index()] = scope_feature(profile, rec);
    v[Dim::Family.index()] = tri(
        known_family(profile.error_family),
        known_family(rec.pattern.error_family),
    );
    v[Dim::RootCause.index()] = tri(
        known_root(profile.root_cause_class),
        known_root(rec.pattern.root_cause_class),
    );
    v[Dim::Feedback.index()] = feedback_feature(&quality.aggregates);
    v[Dim::SuccessPrior.index()] = quality.aggregates.success_ratio;
    v[Dim::NegativeApplicability.index()] = if quality
        .false_positive_families
        .contains(&profile.error_family)
    {
        -1.0
    } else {
        0.0
    };
    v[Dim::Session.index()] = tri(
        non_empty(&profile.session.user_id),
        rec.origin_user.as_deref().and_then(non_empty),
    );
    v[Dim::MemoryKind.index()] = tri(Some(query_memory_kind(profile)), Some(meta.memory_kind));
    v[Dim::ProblemFamily.index()] = tri(
        specific_problem(profile.rl_hints.problem_family),
        specific_problem(meta.problem_family),
    );
    v[Dim::AlgorithmFamily.index()] = tri(
        specific_algorithm(Some(profile.rl_hints.algorithm_family)),
        specific_algorithm(meta.algorithm_family),
    );
    v[Dim::Theory.index()] = tri(profile.rl_hints.theory_claim_type, meta.theory_claim_type);
    v[Dim::ValidationTier.index()] = meta.applied_tier().scaled();

    for x in v.iter_mut() {
        *x = x.clamp(-1.0, 1.0);
    }
    FeatureVector(v)
}

fn scope_feature(profile: &QueryProfile, rec: &MemoryRecord) -> f64 {
    let project = tri(
        profile.scope.project.as_deref(),
        rec.pattern.project_scope.as_deref(),
    );
    if project != 0.0 {
        return project;
    }
    tri(profile.scope.repo.as_deref(), rec.pattern.repo.as_deref())
}
