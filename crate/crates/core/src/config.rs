//! Engine configuration, loaded from a JSON file. Every section is
//! optional and falls back to the defaults below.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::bandit::BanditHyper;
use crate::canonical;
use crate::error::{Error, Result};
use crate::feedback::AliasTarget;
use crate::governance::PromotionRules;
use crate::linker::LinkerConfig;
use crate::ope::GateConfig;
use crate::ranker::Thresholds;
use crate::store::StoreOptions;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ShadowConfig {
    /// Compute and log bandit scores and propensities.
    pub enabled: bool,
    /// Let feedback update bandit statistics.
    pub learn: bool,
}

impl Default for ShadowConfig {
    fn default() -> Self {
        ShadowConfig {
            enabled: true,
            learn: true,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GovernanceConfig {
    /// Opaque review token to reviewer name.
    pub review_tokens: BTreeMap<String, String>,
    pub promotion: PromotionRules,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClockConfig {
    /// Pin "now" for reproducible runs.
    pub fixed_now_ms: Option<i64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub store_dir: PathBuf,
    pub fsync: bool,
    pub snapshot_every: u64,
    pub repair_truncate: bool,
    pub lexicon_path: Option<PathBuf>,
    pub ranker: Thresholds,
    pub bandit: BanditHyper,
    pub shadow: ShadowConfig,
    pub gate: GateConfig,
    pub feedback_aliases: BTreeMap<String, AliasTarget>,
    pub linker: LinkerConfig,
    pub governance: GovernanceConfig,
    pub clock: ClockConfig,
}

impl Default for Config {
    fn default() -> Self {
        let store = StoreOptions::default();
        Config {
            store_dir: PathBuf::from("memctl-store"),
            fsync: store.fsync,
            snapshot_every: store.snapshot_every,
            repair_truncate: store.repair_truncate,
            lexicon_path: None,
            ranker: Thresholds::default(),
            bandit: BanditHyper::default(),
            shadow: ShadowConfig::default(),
            gate: GateConfig::default(),
            feedback_aliases: BTreeMap::new(),
            linker: LinkerConfig::default(),
            governance: GovernanceConfig::default(),
            clock: ClockConfig::default(),
        }
    }
}

impl Config {
    pub fn from_json(bytes: &[u8]) -> Result<Config> {
        let cfg: Config =
            serde_json::from_slice(bytes).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Load a config file; a relative `store_dir` resolves against the
    /// file's directory.
    pub fn load(path: &Path) -> Result<Config> {
        let bytes =
            std::fs::read(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        let mut cfg = Config::from_json(&bytes)?;
        if cfg.store_dir.is_relative() {
            if let Some(parent) = path.parent() {
                cfg.store_dir = parent.join(&cfg.store_dir);
            }
        }
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.ranker.validate()?;
        self.bandit.validate()?;
        if self.gate.resamples == 0 || !(0.0 < self.gate.level && self.gate.level < 1.0) {
            return Err(Error::Config(
                "gate needs resamples >= 1 and level in (0,1)".into(),
            ));
        }
        Ok(())
    }

    /// Deterministic control: no shadow scoring and no learning.
    pub fn control(mut self) -> Config {
        self.shadow = ShadowConfig {
            enabled: false,
            learn: false,
        };
        self
    }

    pub fn store_options(&self) -> StoreOptions {
        StoreOptions {
            fsync: self.fsync,
            snapshot_every: self.snapshot_every,
            repair_truncate: self.repair_truncate,
            use_snapshot: true,
        }
    }

    /// Hex SHA-256 of the canonical encoding.
    pub fn digest(&self) -> String {
        let bytes = canonical::to_vec(self).expect("config encodes");
        hex::encode(Sha256::digest(&bytes))
    }
}
