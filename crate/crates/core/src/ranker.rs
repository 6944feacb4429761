//! Candidate retrieval, deterministic weighted scoring, and the
//! match / ambiguous / abstain decision.

use std::cmp::Ordering;
use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{
    extract_features, path_relation, FeatureVector, IndexedMemory, PathRelation, QualityView,
    FEATURE_DIM, FEATURE_NAMES,
};
use crate::model::{AlgorithmFamily, DecisionKind, ErrorFamily, MemoryKind};
use crate::normalize::QueryProfile;

pub const SCORE_CAP: f64 = 0.999;
pub const PREFILTER_MIN_COSINE: f64 = 0.1;

/// Linear ranker weights, one per feature dimension. Serialized as a map
/// from dimension name to weight; omitted names keep their default.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Weights(pub [f64; FEATURE_DIM]);

impl Default for Weights {
    fn default() -> Self {
        Weights([
            0.18, 0.07, 0.10, 0.06, 0.06, 0.08, 0.08, 0.10, 0.08, 0.06, 0.04, 0.10, 0.02, 0.03,
            0.05, 0.10, 0.04, 0.03,
        ])
    }
}

impl Serialize for Weights {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        let map: BTreeMap<&str, f64> = FEATURE_NAMES
            .iter()
            .copied()
            .zip(self.0.iter().copied())
            .collect();
        map.serialize(s)
    }
}

impl<'de> Deserialize<'de> for Weights {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let map = BTreeMap::<String, f64>::deserialize(d)?;
        let mut w = Weights::default();
        for (name, value) in map {
            let idx = FEATURE_NAMES
                .iter()
                .position(|n| *n == name)
                .ok_or_else(|| {
                    serde::de::Error::custom(format!("unknown feature dimension {name:?}"))
                })?;
            if !value.is_finite() {
                return Err(serde::de::Error::custom(format!(
                    "weight for {name} is not finite"
                )));
            }
            w.0[idx] = value;
        }
        Ok(w)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Thresholds {
    pub tau_accept: f64,
    pub tau_weak: f64,
    pub tau_margin: f64,
    pub weights: Weights,
    /// Candidate budget after the prefilter.
    pub k: usize,
    /// Candidates shown on match or ambiguous.
    pub visible: usize,
}

impl Default for Thresholds {
    fn default() -> Self {
        Thresholds {
            tau_accept: 0.60,
            tau_weak: 0.35,
            tau_margin: 0.10,
            weights: Weights::default(),
            k: 32,
            visible: 3,
        }
    }
}

impl Thresholds {
    pub fn validate(&self) -> Result<()> {
        if !(0.0 < self.tau_weak && self.tau_weak <= self.tau_accept && self.tau_accept < 1.0) {
            return Err(Error::Config(format!(
                "thresholds need 0 < tau_weak <= tau_accept < 1, got tau_weak={} tau_accept={}",
                self.tau_weak, self.tau_accept
            )));
        }
        if !(0.0 < self.tau_margin && self.tau_margin < 1.0) {
            return Err(Error::Config(format!(
                "tau_margin {} outside (0,1)",
                self.tau_margin
            )));
        }
        if self.k == 0 || self.visible == 0 {
            return Err(Error::Config("k and visible must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedCandidate {
    pub memory_id: String,
    pub score_deterministic: f64,
    pub features: FeatureVector,
    pub specificity_ok: bool,
    pub rank: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Decision {
    pub kind: DecisionKind,
    pub top_score: f64,
    pub margin: f64,
    pub visible: Vec<RankedCandidate>,
}

fn shares_entity(profile: &QueryProfile, memory: &IndexedMemory) -> bool {
    profile.entities.iter().any(|(slot, values)| {
        memory
            .record
            .pattern
            .entities
            .get(slot)
            .is_some_and(|other| !values.is_disjoint(other))
    })
}

/// Up to `k` memories passing the cheap prefilter, ordered by prefilter
/// cosine descending then memory id ascending.
pub fn retrieve_candidates<'a, I>(
    profile: &QueryProfile,
    bank: I,
    k: usize,
) -> Vec<&'a IndexedMemory>
where
    I: IntoIterator<Item = &'a IndexedMemory>,
{
    let mut passing: Vec<(f64, &IndexedMemory)> = bank
        .into_iter()
        .filter_map(|m| {
            let cos = profile.token_signature.cosine(&m.signature);
            let family = profile.error_family != ErrorFamily::Unknown
                && profile.error_family == m.record.pattern.error_family;
            (family || cos >= PREFILTER_MIN_COSINE || shares_entity(profile, m)).then_some((cos, m))
        })
        .collect();
    passing.sort_by(|(ca, a), (cb, b)| cb.total_cmp(ca).then_with(|| a.id().cmp(b.id())));
    passing.truncate(k);
    passing.into_iter().map(|(_, m)| m).collect()
}

/// `clip[0, 0.999](w . phi)`.
pub fn score_candidate(features: &[f64], weights: &[f64]) -> Result<f64> {
    if features.len() != weights.len() {
        return Err(Error::DimensionMismatch {
            expected: weights.len(),
            got: features.len(),
        });
    }
    let dot: f64 = features.iter().zip(weights).map(|(f, w)| f * w).sum();
    Ok(dot.clamp(0.0, SCORE_CAP))
}

/// Names of the hard conflicts between a query and a memory; empty means
/// the specificity predicate holds.
pub fn specificity_conflicts(profile: &QueryProfile, memory: &IndexedMemory) -> Vec<&'static str> {
    let rec = &memory.record;
    let mut out = Vec::new();
    if path_relation(&profile.paths, &memory.paths) == PathRelation::Conflict {
        out.push("path");
    }
    if let (Some(q), Some(m)) = (&profile.command, &memory.command) {
        if q != m {
            out.push("command");
        }
    }
    if let Some(q) = &profile.exception {
        let mut known = rec
            .pattern
            .exception
            .iter()
            .chain(rec.pattern.entities.get("exception").into_iter().flatten());
        let mut any = false;
        let hit = known.any(|m| {
            any = true;
            m == q
        });
        if any && !hit {
            out.push("exception");
        }
    }
    match (&profile.scope.project, &rec.pattern.project_scope) {
        (Some(q), Some(m)) if q != m => out.push("scope"),
        (None, _) if rec.pattern.scope_required => out.push("scope"),
        _ => {}
    }
    if rec.metadata.memory_kind == MemoryKind::RlControl {
        let hints = &profile.rl_hints;
        let problem_overlap =
            hints.problem_family.is_some() && hints.problem_family == rec.metadata.problem_family;
        let domain_missing = hints.algorithm_family == AlgorithmFamily::None && !problem_overlap;
        let algorithm_clash = match rec.metadata.algorithm_family {
            Some(m) => {
                hints.algorithm_family.is_specific()
                    && m.is_specific()
                    && m != hints.algorithm_family
            }
            None => false,
        };
        if domain_missing || algorithm_clash {
            out.push("domain");
        }
    }
    out
}

pub fn specificity(profile: &QueryProfile, memory: &IndexedMemory) -> bool {
    specificity_conflicts(profile, memory).is_empty()
}

fn ranking_order(a: &RankedCandidate, b: &RankedCandidate) -> Ordering {
    b.score_deterministic
        .total_cmp(&a.score_deterministic)
        .then_with(|| a.memory_id.cmp(&b.memory_id))
}

/// Sort by score descending then memory id, and assign 1-based ranks.
pub fn sort_ranked(candidates: &mut [RankedCandidate]) {
    candidates.sort_by(ranking_order);
    for (i, c) in candidates.iter_mut().enumerate() {
        c.rank = i + 1;
    }
}

/// Retrieve, featurize, score, and order the candidates for one query.
pub fn rank<'a, I, Q>(
    profile: &QueryProfile,
    bank: I,
    quality: Q,
    thresholds: &Thresholds,
) -> Vec<RankedCandidate>
where
    I: IntoIterator<Item = &'a IndexedMemory>,
    Q: Fn(&IndexedMemory) -> QualityView,
{
    let mut ranked: Vec<RankedCandidate> = retrieve_candidates(profile, bank, thresholds.k)
        .into_iter()
        .map(|m| {
            let features = extract_features(profile, m, &quality(m));
            let score =
                score_candidate(features.values(), &thresholds.weights.0).expect("fixed dimension");
            RankedCandidate {
                memory_id: m.id().to_string(),
                score_deterministic: score,
                features,
                specificity_ok: specificity(profile, m),
                rank: 0,
            }
        })
        .collect();
    sort_ranked(&mut ranked);
    ranked
}

/// Apply the decision rule to a sorted candidate list. A missing second
/// candidate counts as score 0. A top score between the weak and accept
/// thresholds with a clear margin abstains.
pub fn decide(ranked: &[RankedCandidate], thresholds: &Thresholds) -> Decision {
    let abstain = |top: f64, margin: f64| Decision {
        kind: DecisionKind::Abstain,
        top_score: top,
        margin,
        visible: Vec::new(),
    };
    let Some(top) = ranked.first() else {
        return abstain(0.0, 0.0);
    };
    let s1 = top.score_deterministic;
    let s2 = ranked.get(1).map_or(0.0, |c| c.score_deterministic);
    let margin = s1 - s2;
    let kind = if !top.specificity_ok || s1 < thresholds.tau_weak {
        DecisionKind::Abstain
    } else if s1 >= thresholds.tau_accept && margin >= thresholds.tau_margin {
        DecisionKind::Match
    } else if margin < thresholds.tau_margin {
        DecisionKind::Ambiguous
    } else {
        DecisionKind::Abstain
    };
    if kind == DecisionKind::Abstain {
        return abstain(s1, margin);
    }
    Decision {
        kind,
        top_score: s1,
        margin,
        visible: ranked.iter().take(thresholds.visible).cloned().collect(),
    }
}
