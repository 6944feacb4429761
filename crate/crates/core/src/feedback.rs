//! Raw developer feedback to the bounded canonical reward contract.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::snake_enum;

snake_enum! {
    FeedbackType {
        FixVerified => "fix_verified",
        FalsePositive => "false_positive",
        CandidateAccepted => "candidate_accepted",
        CandidateRejected => "candidate_rejected",
        MergeConfirmed => "merge_confirmed",
        MergeRejected => "merge_rejected",
        SplitConfirmed => "split_confirmed",
        SplitRejected => "split_rejected",
    }
}

impl FeedbackType {
    /// Default scalar reward.
    pub fn default_reward(self) -> f64 {
        match self {
            FeedbackType::FixVerified => 1.00,
            FeedbackType::FalsePositive => -1.00,
            FeedbackType::CandidateAccepted => 0.35,
            FeedbackType::CandidateRejected => -0.60,
            FeedbackType::MergeConfirmed | FeedbackType::SplitConfirmed => 0.40,
            FeedbackType::MergeRejected | FeedbackType::SplitRejected => -0.40,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeedbackSource {
    Explicit,
    ImplicitDelayed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeedbackAudit {
    pub raw_label: String,
    pub override_reward_used: bool,
    pub source: FeedbackSource,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CanonicalFeedback {
    /// `None` only for the non-evaluative `neutral` label.
    #[serde(rename = "type")]
    pub kind: Option<FeedbackType>,
    pub reward: f64,
    pub learnable: bool,
    pub audit: FeedbackAudit,
}

/// Where an alias points.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AliasTarget {
    Neutral,
    #[serde(untagged)]
    Canonical(FeedbackType),
}

/// Alias table. Keys are matched after lowercasing and mapping `-` to `_`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct FeedbackAliases(pub BTreeMap<String, AliasTarget>);

impl Default for FeedbackAliases {
    fn default() -> Self {
        let mut m = BTreeMap::new();
        m.insert(
            "accepted_helpful".into(),
            AliasTarget::Canonical(FeedbackType::CandidateAccepted),
        );
        m.insert(
            "accepted_unhelpful".into(),
            AliasTarget::Canonical(FeedbackType::CandidateRejected),
        );
        m.insert(
            "rejected".into(),
            AliasTarget::Canonical(FeedbackType::CandidateRejected),
        );
        m.insert("neutral".into(), AliasTarget::Neutral);
        FeedbackAliases(m)
    }
}

fn fold(label: &str) -> String {
    label.trim().to_lowercase().replace('-', "_")
}

impl FeedbackAliases {
    /// Defaults extended (or overridden) by configured entries.
    pub fn with_overrides(extra: &BTreeMap<String, AliasTarget>) -> Self {
        let mut a = Self::default();
        for (k, v) in extra {
            a.0.insert(fold(k), *v);
        }
        a
    }

    pub fn resolve(&self, label: &str) -> Option<AliasTarget> {
        let key = fold(label);
        FeedbackType::parse(&key)
            .map(AliasTarget::Canonical)
            .or_else(|| self.0.get(&key).copied())
    }

    /// Every label that resolves: canonical names first, then aliases.
    pub fn accepted_labels(&self) -> Vec<String> {
        FeedbackType::ALL
            .iter()
            .map(|t| t.as_str().to_string())
            .chain(self.0.keys().cloned())
            .collect()
    }
}

pub fn normalize_feedback(
    raw_label: &str,
    override_reward: Option<f64>,
    source: FeedbackSource,
    aliases: &FeedbackAliases,
) -> Result<CanonicalFeedback> {
    if raw_label.trim().is_empty() {
        return Err(Error::InvalidArgument(
            "feedback label must be non-empty".into(),
        ));
    }
    let target = aliases
        .resolve(raw_label)
        .ok_or_else(|| Error::UnknownFeedbackLabel {
            label: raw_label.to_string(),
            accepted: aliases.accepted_labels().join(", "),
        })?;
    if let Some(r) = override_reward {
        if r.is_nan() {
            return Err(Error::InvalidArgument(
                "override_reward must be a number".into(),
            ));
        }
    }
    let audit = FeedbackAudit {
        raw_label: raw_label.to_string(),
        override_reward_used: override_reward.is_some() && target != AliasTarget::Neutral,
        source,
    };
    Ok(match target {
        AliasTarget::Neutral => CanonicalFeedback {
            kind: None,
            reward: 0.0,
            learnable: false,
            audit,
        },
        AliasTarget::Canonical(kind) => CanonicalFeedback {
            kind: Some(kind),
            reward: override_reward.map_or(kind.default_reward(), |r| r.clamp(-1.0, 1.0)),
            learnable: true,
            audit,
        },
    })
}
