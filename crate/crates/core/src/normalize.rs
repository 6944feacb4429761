//! Context normalization: raw developer context in, structured query
//! profile out. Cue detection is driven by a versioned lexicon data file.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;
use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{
    AlgorithmFamily, Context, ErrorFamily, ProblemFamily, RootCauseClass, SessionInfo,
    TheoryClaimType, ValidationTier,
};

const SHIPPED_LEXICON: &str = include_str!("../data/lexicon.json");

const STOPWORDS: &[&str] = &[
    "a", "about", "after", "again", "all", "also", "an", "and", "any", "are", "as", "at", "be",
    "been", "before", "being", "but", "by", "can", "could", "did", "do", "does", "doing", "during",
    "each", "for", "from", "had", "has", "have", "having", "how", "i", "if", "in", "into", "is",
    "it", "its", "just", "me", "my", "no", "nor", "not", "of", "on", "once", "only", "or", "our",
    "out", "over", "own", "same", "should", "so", "some", "such", "than", "that", "the", "their",
    "them", "then", "there", "these", "they", "this", "those", "through", "to", "too", "under",
    "until", "up", "very", "was", "we", "were", "what", "when", "where", "which", "while", "who",
    "why", "will", "with", "would", "you", "your",
];

// ── Token signatures ────────────────────────────────────────────────────

/// Lowercased alphanumeric tokens in order, stopwords kept.
pub fn tokenize(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(|t| t.to_lowercase())
        .collect()
}

fn is_stopword(token: &str) -> bool {
    STOPWORDS.binary_search(&token).is_ok()
}

/// Sparse term-frequency vector with unit L2 norm (or empty).
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct TokenSignature(BTreeMap<String, f64>);

impl TokenSignature {
    pub fn weights(&self) -> &BTreeMap<String, f64> {
        &self.0
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn get(&self, token: &str) -> f64 {
        self.0.get(token).copied().unwrap_or(0.0)
    }

    pub fn norm(&self) -> f64 {
        self.0.values().map(|w| w * w).sum::<f64>().sqrt()
    }

    /// Cosine similarity; both sides are unit-norm so this is a dot product,
    /// clamped against rounding.
    pub fn cosine(&self, other: &TokenSignature) -> f64 {
        let (small, large) = if self.0.len() <= other.0.len() {
            (self, other)
        } else {
            (other, self)
        };
        let dot: f64 = small.0.iter().map(|(t, w)| w * large.get(t)).sum();
        dot.clamp(0.0, 1.0)
    }
}

pub fn token_signature(text: &str) -> TokenSignature {
    let mut counts: BTreeMap<String, f64> = BTreeMap::new();
    for token in tokenize(text) {
        if !is_stopword(&token) {
            *counts.entry(token).or_insert(0.0) += 1.0;
        }
    }
    let norm = counts.values().map(|c| c * c).sum::<f64>().sqrt();
    if norm > 0.0 {
        for w in counts.values_mut() {
            *w /= norm;
        }
    }
    TokenSignature(counts)
}

// ── Lexicon ─────────────────────────────────────────────────────────────

#[derive(Debug, Clone, Deserialize)]
struct CueRule {
    value: String,
    patterns: Vec<String>,
}

#[derive(Debug, Clone, Deserialize)]
struct LexiconFile {
    version: u32,
    error_families: Vec<CueRule>,
    root_causes: Vec<CueRule>,
    algorithm_families: Vec<CueRule>,
    theory_claims: Vec<CueRule>,
    runtime_stages: Vec<CueRule>,
    #[serde(default)]
    validation_tiers: Vec<CueRule>,
    commands: Vec<String>,
}

#[derive(Debug, Clone)]
struct CompiledRule<T> {
    value: T,
    patterns: Vec<(String, Vec<String>)>,
}

impl<T> CompiledRule<T> {
    fn hits(&self, tokens: &[String]) -> Vec<&str> {
        self.patterns
            .iter()
            .filter(|(_, seq)| contains_seq(tokens, seq))
            .map(|(p, _)| p.as_str())
            .collect()
    }
}

fn contains_seq(tokens: &[String], seq: &[String]) -> bool {
    !seq.is_empty() && tokens.windows(seq.len()).any(|w| w == seq)
}

/// Compiled cue lexicon.
#[derive(Debug, Clone)]
pub struct Lexicon {
    pub version: u32,
    error_families: Vec<CompiledRule<ErrorFamily>>,
    root_causes: Vec<CompiledRule<RootCauseClass>>,
    algorithm_families: Vec<CompiledRule<AlgorithmFamily>>,
    theory_claims: Vec<CompiledRule<TheoryClaimType>>,
    runtime_stages: Vec<CompiledRule<String>>,
    validation_tiers: Vec<CompiledRule<ValidationTier>>,
    commands: BTreeSet<String>,
}

fn compile<T>(
    rules: &[CueRule],
    parse: impl Fn(&str) -> Option<T>,
    section: &str,
) -> Result<Vec<CompiledRule<T>>> {
    rules
        .iter()
        .map(|r| {
            let value = parse(&r.value).ok_or_else(|| {
                Error::Config(format!("lexicon {section}: unknown value {:?}", r.value))
            })?;
            let patterns = r
                .patterns
                .iter()
                .map(|p| (p.clone(), tokenize(p)))
                .collect();
            Ok(CompiledRule { value, patterns })
        })
        .collect()
}

impl Lexicon {
    pub fn shipped() -> &'static Lexicon {
        static SHIPPED: OnceLock<Lexicon> = OnceLock::new();
        SHIPPED.get_or_init(|| {
            Lexicon::from_json(SHIPPED_LEXICON.as_bytes()).expect("shipped lexicon is valid")
        })
    }

    pub fn load(path: &Path) -> Result<Lexicon> {
        let bytes = std::fs::read(path)?;
        Lexicon::from_json(&bytes)
    }

    pub fn from_json(bytes: &[u8]) -> Result<Lexicon> {
        let file: LexiconFile =
            serde_json::from_slice(bytes).map_err(|e| Error::Config(format!("lexicon: {e}")))?;
        let algorithm_families = compile(
            &file.algorithm_families,
            AlgorithmFamily::parse,
            "algorithm_families",
        )?;
        if algorithm_families
            .iter()
            .any(|r| r.value == AlgorithmFamily::None)
        {
            return Err(Error::Config("lexicon: `none` cannot carry cues".into()));
        }
        Ok(Lexicon {
            version: file.version,
            error_families: compile(&file.error_families, ErrorFamily::parse, "error_families")?,
            root_causes: compile(&file.root_causes, RootCauseClass::parse, "root_causes")?,
            algorithm_families,
            theory_claims: compile(&file.theory_claims, TheoryClaimType::parse, "theory_claims")?,
            runtime_stages: compile(
                &file.runtime_stages,
                |v| Some(v.to_string()),
                "runtime_stages",
            )?,
            validation_tiers: compile(
                &file.validation_tiers,
                ValidationTier::parse,
                "validation_tiers",
            )?,
            commands: file.commands.into_iter().collect(),
        })
    }

    pub fn error_family(&self, tokens: &[String], exception: Option<&str>) -> ErrorFamily {
        for rule in &self.error_families {
            if !rule.hits(tokens).is_empty() {
                return rule.value;
            }
        }
        if exception.is_some() {
            ErrorFamily::Exception
        } else {
            ErrorFamily::Unknown
        }
    }

    /// Unique best-supported class; ties and silence give `unknown`.
    pub fn root_cause(&self, tokens: &[String]) -> RootCauseClass {
        unique_best(&self.root_causes, tokens).unwrap_or(RootCauseClass::Unknown)
    }

    /// Algorithm family plus the cue patterns that selected it. Specific
    /// families outrank `generic_rl`; among specific families the most hits
    /// win, ties resolved by lexicon order.
    pub fn algorithm_family(&self, tokens: &[String]) -> (AlgorithmFamily, Vec<String>) {
        let mut best: Option<(usize, AlgorithmFamily, Vec<String>)> = None;
        let mut generic: Vec<String> = Vec::new();
        for rule in &self.algorithm_families {
            let hits: Vec<String> = rule.hits(tokens).into_iter().map(String::from).collect();
            if hits.is_empty() {
                continue;
            }
            if rule.value == AlgorithmFamily::GenericRl {
                generic.extend(hits);
                continue;
            }
            if best.as_ref().is_none_or(|(n, _, _)| hits.len() > *n) {
                best = Some((hits.len(), rule.value, hits));
            }
        }
        match best {
            Some((_, family, hits)) => (family, hits),
            None if !generic.is_empty() => (AlgorithmFamily::GenericRl, generic),
            None => (AlgorithmFamily::None, Vec::new()),
        }
    }

    pub fn theory_claim(&self, tokens: &[String]) -> Option<TheoryClaimType> {
        unique_best(&self.theory_claims, tokens)
    }

    pub fn runtime_stage(&self, tokens: &[String]) -> Option<String> {
        self.runtime_stages
            .iter()
            .find(|r| !r.hits(tokens).is_empty())
            .map(|r| r.value.clone())
    }

    pub fn validation_tier(&self, tokens: &[String]) -> Option<ValidationTier> {
        self.validation_tiers
            .iter()
            .find(|r| !r.hits(tokens).is_empty())
            .map(|r| r.value)
    }

    /// Every cue pattern of `family` present in `tokens`.
    pub fn algorithm_cues(&self, family: AlgorithmFamily, tokens: &[String]) -> Vec<String> {
        self.algorithm_families
            .iter()
            .filter(|r| r.value == family)
            .flat_map(|r| r.hits(tokens))
            .map(String::from)
            .collect()
    }

    fn is_command(&self, program: &str) -> bool {
        self.commands.contains(program)
    }
}

fn unique_best<T: Copy + PartialEq>(rules: &[CompiledRule<T>], tokens: &[String]) -> Option<T> {
    let mut best: Option<(usize, T)> = None;
    let mut tied = false;
    for rule in rules {
        let n = rule.hits(tokens).len();
        if n == 0 {
            continue;
        }
        match best {
            Some((m, _)) if n == m => tied = true,
            Some((m, _)) if n < m => {}
            _ => {
                best = Some((n, rule.value));
                tied = false;
            }
        }
    }
    if tied {
        None
    } else {
        best.map(|(_, v)| v)
    }
}

// ── Query profile ───────────────────────────────────────────────────────

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Scope {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub project: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub repo: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RlHints {
    pub algorithm_family: AlgorithmFamily,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub problem_family: Option<ProblemFamily>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub runtime_stage: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub validation_tier: Option<ValidationTier>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub theory_claim_type: Option<TheoryClaimType>,
    /// Lexicon patterns that selected `algorithm_family`.
    #[serde(default)]
    pub algorithm_cues: Vec<String>,
}

/// Structured, normalized view of a developer context.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryProfile {
    pub error_family: ErrorFamily,
    pub root_cause_class: RootCauseClass,
    pub entities: BTreeMap<String, BTreeSet<String>>,
    pub token_signature: TokenSignature,
    pub scope: Scope,
    pub rl_hints: RlHints,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub exception: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub command: Option<String>,
    #[serde(default)]
    pub paths: Vec<String>,
    pub session: SessionInfo,
    /// Combined error and query text the profile was derived from.
    #[serde(skip)]
    pub text: String,
}

fn exception_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| {
        Regex::new(r"\b([A-Z][A-Za-z0-9_]*(?:Error|Exception|Warning|Interrupt))\b").unwrap()
    })
}

fn identifier_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"\b[a-z][a-z0-9]*(?:_[a-z0-9]+)+\b").unwrap())
}

fn frame_function_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"\bin ([A-Za-z_][A-Za-z0-9_]*)").unwrap())
}

fn frame_file_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| {
        Regex::new(r"([A-Za-z0-9_./\\:-]+\.(?:py|rs|js|ts|cpp|c|h|go|java|sh))\b").unwrap()
    })
}

/// First exception type named in the text, module prefix stripped.
pub fn extract_exception(text: &str) -> Option<String> {
    exception_re().captures(text).map(|c| c[1].to_string())
}

/// Separator-normalized path: forward slashes, no duplicate or trailing
/// separators. Case and drive letters are preserved.
pub fn normalize_path(path: &str) -> String {
    let replaced = path.trim().replace('\\', "/");
    let mut out = String::with_capacity(replaced.len());
    let mut prev_slash = false;
    for ch in replaced.chars() {
        if ch == '/' {
            if !prev_slash {
                out.push(ch);
            }
            prev_slash = true;
        } else {
            out.push(ch);
            prev_slash = false;
        }
    }
    if out.len() > 1 && out.ends_with('/') {
        out.pop();
    }
    out
}

fn basename(path: &str) -> &str {
    path.rsplit('/').next().unwrap_or(path)
}

/// Command family: the program, or the module for `python -m <module>`.
pub fn command_family(command: &str) -> Option<String> {
    let mut words = command
        .split_whitespace()
        .skip_while(|w| w.contains('=') || *w == "sudo" || *w == "env");
    let program = basename(&normalize_path(words.next()?)).to_lowercase();
    let family = match program.as_str() {
        "python" | "python3" => match words.next() {
            Some("-m") => words.next().map(|m| m.to_lowercase()).unwrap_or(program),
            _ => "python".to_string(),
        },
        "py.test" => "pytest".to_string(),
        _ => program,
    };
    Some(family)
}

/// Entity slots extracted from free text, stack frames and paths.
pub fn extract_entities(
    text: &str,
    frames: &[String],
    paths: &[String],
    env_tags: &[String],
) -> BTreeMap<String, BTreeSet<String>> {
    let mut slots: BTreeMap<String, BTreeSet<String>> = BTreeMap::new();
    let mut put = |slot: &str, value: String| {
        slots.entry(slot.to_string()).or_default().insert(value);
    };
    let frame_text = frames.join("\n");
    for source in [text, frame_text.as_str()] {
        if let Some(e) = extract_exception(source) {
            put("exception", e);
        }
        for m in identifier_re().find_iter(source) {
            put("symbol", m.as_str().to_string());
        }
        for c in frame_file_re().captures_iter(source) {
            put("file", basename(&normalize_path(&c[1])).to_string());
        }
    }
    for c in frame_function_re().captures_iter(&frame_text) {
        put("symbol", c[1].to_string());
    }
    for p in paths {
        let p = normalize_path(p);
        if !p.is_empty() {
            put("file", basename(&p).to_string());
        }
    }
    for tag in env_tags {
        put("env", tag.to_lowercase());
    }
    slots
}

/// Map a raw context to its query profile.
pub fn normalize_context(ctx: &Context, lexicon: &Lexicon) -> Result<QueryProfile> {
    if ctx.is_empty() {
        return Err(Error::EmptyContext);
    }
    let text = format!("{}\n{}", ctx.error_text, ctx.query_text);
    let tokens = tokenize(&text);
    let exec = ctx.exec_context.clone().unwrap_or_default();

    let exception = extract_exception(&ctx.error_text)
        .or_else(|| extract_exception(&exec.stack_frames.join("\n")))
        .or_else(|| extract_exception(&ctx.query_text));
    let command = exec
        .command
        .as_deref()
        .and_then(command_family)
        .or_else(|| {
            let first = ctx.query_text.split_whitespace().next()?;
            let fam = command_family(&ctx.query_text)?;
            lexicon
                .is_command(&basename(&normalize_path(first)).to_lowercase())
                .then_some(fam)
        });
    let mut paths: Vec<String> = ctx
        .repo_paths
        .iter()
        .map(|p| normalize_path(p))
        .filter(|p| !p.is_empty())
        .collect();
    paths.sort();
    paths.dedup();

    let (algorithm_family, algorithm_cues) = lexicon.algorithm_family(&tokens);
    let mut entities = extract_entities(&text, &exec.stack_frames, &paths, &exec.env_tags);
    if let Some(e) = &exception {
        entities
            .entry("exception".into())
            .or_default()
            .insert(e.clone());
    }

    Ok(QueryProfile {
        error_family: lexicon.error_family(&tokens, exception.as_deref()),
        root_cause_class: lexicon.root_cause(&tokens),
        entities,
        token_signature: token_signature(&text),
        scope: Scope {
            project: ctx.project_scope.clone().filter(|s| !s.trim().is_empty()),
            repo: ctx.repo.clone().filter(|s| !s.trim().is_empty()),
        },
        rl_hints: RlHints {
            algorithm_family,
            problem_family: algorithm_family.problem_family(),
            runtime_stage: lexicon.runtime_stage(&tokens),
            validation_tier: lexicon.validation_tier(&tokens),
            theory_claim_type: lexicon.theory_claim(&tokens),
            algorithm_cues,
        },
        exception,
        command,
        paths,
        session: ctx.session.clone(),
        text,
    })
}
