//! Engine configuration (TOML on disk, JSON over the control plane) and its
//! validation into runnable parts.

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::packet::{HomeNetworkError, HomeNetworks};
use crate::rules::{RuleError, RuleSet, RuleSettings, SoundCatalog};

pub const DEFAULT_WINDOW_PERIOD_S: f64 = 1.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutputMode {
    /// Live playback through `audio_cmd`, or silence if none is set.
    #[default]
    Device,
    Null,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EngineConfig {
    pub window_period_s: f64,
    pub home_networks: Vec<String>,
    pub master_gain: f64,
    /// Rule-grammar text layered over the stock table.
    pub rules: String,
    pub include_default_rules: bool,
    pub gains: BTreeMap<String, f64>,
    pub muted: BTreeSet<String>,
    pub disabled: BTreeSet<String>,
    /// Rule id to sound id reassignments.
    pub sounds: BTreeMap<String, String>,
    pub assets: Option<PathBuf>,
    pub logs: Option<PathBuf>,
    pub log_rotate_bytes: Option<u64>,
    pub output: OutputMode,
    /// Player command fed raw s16le stereo at 44.1 kHz.
    pub audio_cmd: Option<String>,
}

impl Default for EngineConfig {
    fn default() -> Self {
        EngineConfig {
            window_period_s: DEFAULT_WINDOW_PERIOD_S,
            home_networks: Vec::new(),
            master_gain: 1.0,
            rules: String::new(),
            include_default_rules: true,
            gains: BTreeMap::new(),
            muted: BTreeSet::new(),
            disabled: BTreeSet::new(),
            sounds: BTreeMap::new(),
            assets: None,
            logs: None,
            log_rotate_bytes: None,
            output: OutputMode::Device,
            audio_cmd: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error, Serialize)]
#[serde(tag = "field", rename_all = "snake_case")]
pub enum ConfigError {
    #[error("cannot read config: {message}")]
    Syntax { message: String },
    #[error("window_period_s must be a positive number of seconds, got {value}")]
    WindowPeriod { value: f64 },
    #[error("home_networks: {message}")]
    HomeNetworks { message: String },
    #[error("{source}")]
    Rules { source: RuleError },
    #[error("{name} cannot change while the engine is running")]
    Immutable { name: &'static str },
}

impl From<HomeNetworkError> for ConfigError {
    fn from(e: HomeNetworkError) -> Self {
        ConfigError::HomeNetworks { message: e.to_string() }
    }
}

/// A configuration that passed validation, with its derived state.
#[derive(Debug, Clone)]
pub struct Validated {
    pub config: EngineConfig,
    pub home: HomeNetworks,
    pub rules: Arc<RuleSet>,
}

impl EngineConfig {
    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        toml::from_str(text).map_err(|e| ConfigError::Syntax { message: e.to_string() })
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ConfigError::Syntax { message: format!("{}: {e}", path.display()) })?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }

    pub fn rule_settings(&self) -> RuleSettings {
        RuleSettings {
            include_defaults: self.include_default_rules,
            document: self.rules.clone(),
            gains: self.gains.clone(),
            muted: self.muted.clone(),
            disabled: self.disabled.clone(),
            sounds: self.sounds.clone(),
            master_gain: self.master_gain,
        }
    }

    /// Checks the whole configuration, reporting every problem found.
    pub fn validate(&self, catalog: &SoundCatalog) -> Result<Validated, Vec<ConfigError>> {
        let mut errors = Vec::new();
        if !(self.window_period_s.is_finite() && self.window_period_s > 0.0) {
            errors.push(ConfigError::WindowPeriod { value: self.window_period_s });
        }
        let home = HomeNetworks::parse(&self.home_networks).map_err(|e| errors.push(e.into())).ok();
        let rules = RuleSet::build(&self.rule_settings(), catalog)
            .map_err(|es| errors.extend(es.into_iter().map(|source| ConfigError::Rules { source })))
            .ok();
        match (home, rules) {
            (Some(home), Some(rules)) if errors.is_empty() => {
                Ok(Validated { config: self.clone(), home, rules: Arc::new(rules) })
            }
            _ => Err(errors),
        }
    }
}

/// Partial update; absent fields keep their current value.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ConfigPatch {
    pub window_period_s: Option<f64>,
    pub home_networks: Option<Vec<String>>,
    pub master_gain: Option<f64>,
    pub rules: Option<String>,
    pub include_default_rules: Option<bool>,
    pub gains: Option<BTreeMap<String, f64>>,
    pub muted: Option<BTreeSet<String>>,
    pub disabled: Option<BTreeSet<String>>,
    pub sounds: Option<BTreeMap<String, String>>,
    pub assets: Option<PathBuf>,
    pub logs: Option<PathBuf>,
    pub output: Option<OutputMode>,
    pub audio_cmd: Option<String>,
    /// Reject the patch if the active version has moved past this.
    pub base_version: Option<u64>,
}

impl ConfigPatch {
    /// Applies the patch. Fields fixed at startup may be repeated with their
    /// current value but not changed.
    pub fn apply(&self, base: &EngineConfig) -> Result<EngineConfig, Vec<ConfigError>> {
        let mut c = base.clone();
        let mut errors = Vec::new();
        let mut fixed = |name: &'static str, same: bool| {
            if !same {
                errors.push(ConfigError::Immutable { name });
            }
        };
        if let Some(v) = &self.assets {
            fixed("assets", base.assets.as_ref() == Some(v));
        }
        if let Some(v) = &self.logs {
            fixed("logs", base.logs.as_ref() == Some(v));
        }
        if let Some(v) = self.output {
            fixed("output", base.output == v);
        }
        if let Some(v) = &self.audio_cmd {
            fixed("audio_cmd", base.audio_cmd.as_ref() == Some(v));
        }
        if !errors.is_empty() {
            return Err(errors);
        }
        macro_rules! take {
            ($($f:ident),*) => {$(if let Some(v) = &self.$f { c.$f = v.clone(); })*};
        }
        take!(
            window_period_s,
            home_networks,
            master_gain,
            rules,
            include_default_rules,
            gains,
            muted,
            disabled,
            sounds
        );
        Ok(c)
    }
}
