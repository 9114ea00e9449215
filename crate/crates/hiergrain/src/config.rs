//! Run configuration: parameter set, validation, and the run manifest.
//!
//! Config files are flat TOML key/value text. Parameter keys use the same
//! kebab-case names as the CLI documentation (`pop-size`, `num-labels`, ...).
//! Unknown keys are rejected so that typos cannot silently fall back to
//! defaults.

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

/// Generator identifier recorded in every manifest. The stream of ChaCha8 is
/// specified by the cipher, so seeds reproduce bit-identically across
/// platforms and releases.
pub const RNG_ID: &str = "chacha8/rand_chacha-0.3";

/// Version tag for the on-disk bundle layout (manifest, metrics.csv,
/// snapshots.jsonl, regime.json).
pub const BUNDLE_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("config parse error: {0}")]
    Parse(String),
    #[error("invalid config: {}", .0.join("; "))]
    Invalid(Vec<String>),
}

/// Full parameter set for a single run. Defaults reproduce the reference
/// setting: 2500 agents, 6 labels, 5 issues, 5 choices, discourse and
/// influence strength 20, ignoring enabled.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields, default)]
pub struct SimulationConfig {
    pub pop_size: u32,
    pub num_labels: u16,
    pub num_issues: u16,
    pub num_choices: u16,
    pub multi_issue_discourse: u32,
    pub strength_of_influence: f64,
    #[serde(serialize_with = "ser_on_off", deserialize_with = "de_on_off")]
    pub ignoring: bool,
    pub prob_dropping_label: f64,
    #[serde(rename = "prob-adopting-a-label")]
    pub prob_adopting_label: f64,
    /// Upper bound of the uniform distribution initial strengths are drawn
    /// from. Zero starts every agent with a flat, all-tied strength table.
    pub init_strength_max: f64,
    pub max_timesteps: u64,
    pub snapshot_interval: u64,
    /// Number of consecutive change-free timesteps required before a run
    /// counts as equilibrated.
    pub equilibrium_window: u64,
    pub seed: u64,
}

impl Default for SimulationConfig {
    fn default() -> Self {
        Self {
            pop_size: 2500,
            num_labels: 6,
            num_issues: 5,
            num_choices: 5,
            multi_issue_discourse: 20,
            strength_of_influence: 20.0,
            ignoring: true,
            prob_dropping_label: 0.001,
            prob_adopting_label: 0.1,
            init_strength_max: 3.0,
            max_timesteps: 60_000,
            snapshot_interval: 200,
            equilibrium_window: 1000,
            seed: 0,
        }
    }
}

impl SimulationConfig {
    /// Parses a TOML config and validates it. Reports every violated bound,
    /// not just the first.
    pub fn from_toml_str(text: &str) -> Result<Self, ConfigError> {
        let cfg: SimulationConfig =
            toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))?;
        cfg.validated()
    }

    pub fn validated(self) -> Result<Self, ConfigError> {
        let v = self.violations();
        if v.is_empty() {
            Ok(self)
        } else {
            Err(ConfigError::Invalid(v))
        }
    }

    pub fn violations(&self) -> Vec<String> {
        let mut v = Vec::new();
        if self.pop_size < 1 {
            v.push("pop-size must be at least 1".into());
        }
        if self.num_labels < 1 {
            v.push("num-labels must be at least 1".into());
        }
        if self.num_issues < 1 {
            v.push("num-issues must be at least 1".into());
        }
        if self.num_choices < 2 {
            v.push("num-choices must be at least 2".into());
        }
        if self.multi_issue_discourse < 1 {
            v.push("multi-issue-discourse must be at least 1".into());
        }
        if !(self.strength_of_influence > 0.0 && self.strength_of_influence.is_finite()) {
            v.push("strength-of-influence must be a positive finite number".into());
        }
        if !(0.0..=1.0).contains(&self.prob_dropping_label) {
            v.push("prob-dropping-label must be a probability in [0, 1]".into());
        }
        if !(0.0..=1.0).contains(&self.prob_adopting_label) {
            v.push("prob-adopting-a-label must be a probability in [0, 1]".into());
        }
        if !(self.init_strength_max >= 0.0 && self.init_strength_max.is_finite()) {
            v.push("init-strength-max must be a nonnegative finite number".into());
        }
        if self.snapshot_interval < 1 {
            v.push("snapshot-interval must be at least 1".into());
        }
        if self.equilibrium_window < 1 {
            v.push("equilibrium-window must be at least 1".into());
        }
        // max-timesteps 0 is allowed and yields a single initial record.
        if self.max_timesteps > 0 && self.snapshot_interval > self.max_timesteps {
            v.push("snapshot-interval must not exceed max-timesteps".into());
        }
        v
    }

    /// Number of issues actually raised in a same-label exchange: the
    /// configured discourse breadth capped at the issue count.
    pub fn effective_discourse(&self) -> u16 {
        (self.multi_issue_discourse.min(self.num_issues as u32)) as u16
    }

    pub fn num_strengths(&self) -> usize {
        self.num_issues as usize * self.num_choices as usize
    }
}

fn ser_on_off<S: Serializer>(b: &bool, s: S) -> Result<S::Ok, S::Error> {
    s.serialize_bool(*b)
}

/// Accepts `true`/`false` as well as the `"on"`/`"off"` notation used in
/// parameter tables.
fn de_on_off<'de, D: Deserializer<'de>>(d: D) -> Result<bool, D::Error> {
    struct OnOff;
    impl serde::de::Visitor<'_> for OnOff {
        type Value = bool;
        fn expecting(&self, f: &mut std::fmt::Formatter) -> std::fmt::Result {
            f.write_str("a boolean or the string \"on\"/\"off\"")
        }
        fn visit_bool<E: serde::de::Error>(self, b: bool) -> Result<bool, E> {
            Ok(b)
        }
        fn visit_str<E: serde::de::Error>(self, s: &str) -> Result<bool, E> {
            match s {
                "on" | "true" => Ok(true),
                "off" | "false" => Ok(false),
                other => Err(E::custom(format!(
                    "expected \"on\" or \"off\", got {other:?}"
                ))),
            }
        }
    }
    d.deserialize_any(OnOff)
}

/// Provenance record written next to every output bundle. Re-running with the
/// embedded config and seed reproduces the bundle byte for byte.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub schema_version: u32,
    pub code_version: String,
    pub rng: String,
    pub master_seed: u64,
    pub cell_index: u64,
    pub replicate_index: u32,
    pub run_seed: u64,
    pub config: SimulationConfig,
}

impl RunManifest {
    pub fn new(
        config: SimulationConfig,
        master_seed: u64,
        cell_index: u64,
        replicate_index: u32,
        run_seed: u64,
    ) -> Self {
        Self {
            schema_version: BUNDLE_SCHEMA_VERSION,
            code_version: env!("CARGO_PKG_VERSION").to_string(),
            rng: RNG_ID.to_string(),
            master_seed,
            cell_index,
            replicate_index,
            run_seed,
            config,
        }
    }
}
