//! Benchmark case schema and the JSON-lines case file.

use std::collections::BTreeMap;
use std::io::{BufRead, Write};

use memctl_core::canonical;
use memctl_core::model::{Context, DecisionKind, MemoryRecord};
use serde::{Deserialize, Serialize};

use crate::error::{BenchError, Result};

pub const GENERATOR_VERSION: u32 = 1;

/// Algorithm label of a case; `non_rl` marks the residual-family cases.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CaseFamily {
    A2c,
    Dqn,
    Gae,
    GenericRl,
    Ppo,
    Sac,
    Td3,
    Vtrace,
    NonRl,
}

impl CaseFamily {
    /// Suite composition by family, in this order.
    pub const COMPOSITION: [(CaseFamily, usize); 9] = [
        (CaseFamily::A2c, 8),
        (CaseFamily::Dqn, 25),
        (CaseFamily::Gae, 9),
        (CaseFamily::GenericRl, 28),
        (CaseFamily::Ppo, 28),
        (CaseFamily::Sac, 29),
        (CaseFamily::Td3, 25),
        (CaseFamily::Vtrace, 8),
        (CaseFamily::NonRl, 40),
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            CaseFamily::A2c => "a2c",
            CaseFamily::Dqn => "dqn",
            CaseFamily::Gae => "gae",
            CaseFamily::GenericRl => "generic_rl",
            CaseFamily::Ppo => "ppo",
            CaseFamily::Sac => "sac",
            CaseFamily::Td3 => "td3",
            CaseFamily::Vtrace => "vtrace",
            CaseFamily::NonRl => "non_rl",
        }
    }
}

/// Role a case plays in the suite.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CaseCategory {
    /// One correct memory; explicit `fix_verified` feedback.
    CleanMatch,
    /// Two near-identical fix variants; `neutral` feedback.
    Ambiguous,
    /// Correct memory plus a lexically similar wrong one; delayed resolution
    /// confirming the correct pattern.
    HardNegativeMatch,
    /// Only the lexically similar wrong memory; delayed resolution with a new
    /// pattern.
    HardNegativeAbstain,
    /// Residual bug family reproduced on purpose.
    Injected,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InjectedFamily {
    /// SQLite store path seen through a Windows mount (`/mnt/c/...`).
    PathMount,
    FeedbackAliasNotCanonical,
    MissingProjectScope,
    CommandPathMismatch,
}

impl InjectedFamily {
    pub const ALL: [InjectedFamily; 4] = [
        InjectedFamily::PathMount,
        InjectedFamily::FeedbackAliasNotCanonical,
        InjectedFamily::MissingProjectScope,
        InjectedFamily::CommandPathMismatch,
    ];
}

/// One scripted follow-up after the match call.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "step", rename_all = "snake_case", deny_unknown_fields)]
pub enum ScriptStep {
    /// `issue_feedback` against the case's retrieval event.
    Feedback {
        label: String,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        memory_ref: Option<String>,
        /// Error code the call must fail with, if any.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        expect_error: Option<String>,
    },
    /// `issue_record_resolution` with the case query as context, linked
    /// implicitly through the session.
    Resolution {
        pattern_id: String,
        variant_id: String,
        fix_summary: String,
        #[serde(default)]
        marked_wrong: bool,
        /// Implicit feedback type the link must infer.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        expect_implicit: Option<String>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BenchmarkCase {
    pub case_id: String,
    pub algorithm_family: CaseFamily,
    pub category: CaseCategory,
    pub seeded_memories: Vec<MemoryRecord>,
    pub query: Context,
    /// Labelled decision: what a correct system should return.
    pub expected_decision: DecisionKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub expected_memory_id: Option<String>,
    pub hard_negative: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hard_negative_memory_id: Option<String>,
    #[serde(default)]
    pub feedback_script: Vec<ScriptStep>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub injected_bug_family: Option<InjectedFamily>,
    /// For injected cases, the decision the reproduced bug produces.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scripted_decision: Option<DecisionKind>,
}

impl BenchmarkCase {
    pub fn is_injected(&self) -> bool {
        self.injected_bug_family.is_some()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CaseFileHeader {
    pub kind: String,
    pub generator_version: u32,
    pub seed: u64,
    pub cases: usize,
    /// Fixed clock the suite's timestamps are relative to.
    pub now_ms: i64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CaseFile {
    pub header: CaseFileHeader,
    pub cases: Vec<BenchmarkCase>,
}

impl CaseFile {
    /// Canonical JSON lines: header first, then one case per line.
    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut out = canonical::to_vec(&self.header)?;
        out.push(b'\n');
        for case in &self.cases {
            out.extend(canonical::to_vec(case)?);
            out.push(b'\n');
        }
        Ok(out)
    }

    pub fn write_to(&self, mut w: impl Write) -> Result<()> {
        w.write_all(&self.to_bytes()?)?;
        Ok(())
    }

    pub fn read_from(r: impl BufRead) -> Result<CaseFile> {
        let mut lines = r.lines();
        let first = lines
            .next()
            .ok_or_else(|| BenchError::CaseFile("empty file".into()))??;
        let header: CaseFileHeader = serde_json::from_str(&first)
            .map_err(|e| BenchError::CaseFile(format!("header: {e}")))?;
        if header.kind != "header" || header.generator_version != GENERATOR_VERSION {
            return Err(BenchError::CaseFile(format!(
                "unsupported header kind {:?} version {}",
                header.kind, header.generator_version
            )));
        }
        let mut cases = Vec::new();
        for (i, line) in lines.enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let case: BenchmarkCase = serde_json::from_str(&line)
                .map_err(|e| BenchError::CaseFile(format!("line {}: {e}", i + 2)))?;
            cases.push(case);
        }
        if cases.len() != header.cases {
            return Err(BenchError::CaseFile(format!(
                "header declares {} cases, found {}",
                header.cases,
                cases.len()
            )));
        }
        Ok(CaseFile { header, cases })
    }

    pub fn load(path: &std::path::Path) -> Result<CaseFile> {
        let f = std::fs::File::open(path)?;
        CaseFile::read_from(std::io::BufReader::new(f))
    }

    pub fn family_counts(&self) -> BTreeMap<CaseFamily, usize> {
        let mut out = BTreeMap::new();
        for c in &self.cases {
            *out.entry(c.algorithm_family).or_insert(0) += 1;
        }
        out
    }

    pub fn hard_negative_count(&self) -> usize {
        self.cases.iter().filter(|c| c.hard_negative).count()
    }
}
