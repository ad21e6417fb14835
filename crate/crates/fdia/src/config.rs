//! Scenario files.
//!
//! A scenario file is TOML. The only required key is `scenario`, one of
//! `pendulum`, `scalar-lti`, `null-bench` or `lti`; every other key
//! overrides the defaults of that scenario and has the same name and nesting
//! as in [`ScenarioConfig`]. Unknown keys are rejected.
//!
//! ```toml
//! scenario = "pendulum"
//! horizon = 2000
//!
//! [attack]
//! s0_norm = 1e-4
//!
//! [detector]
//! traces = 200
//! ```

use std::collections::BTreeMap;
use std::path::Path;

use fdia_core::scenarios::{ScenarioConfig, ScenarioKind};
use serde::{Deserialize, Serialize};
use toml::{Table, Value};

use crate::error::{AppError, AppResult};

/// Where a configuration value came from.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Source {
    Default,
    File,
    CommandLine,
}

/// A validated configuration and the origin of each leaf value, keyed by
/// dotted path.
#[derive(Clone, Debug, PartialEq)]
pub struct LoadedConfig {
    pub config: ScenarioConfig,
    pub provenance: BTreeMap<String, Source>,
}

fn to_table(cfg: &ScenarioConfig) -> AppResult<Table> {
    match Value::try_from(cfg).map_err(|e| AppError::Format(format!("cannot encode configuration: {e}")))? {
        Value::Table(t) => Ok(t),
        _ => Err(AppError::Format("configuration did not encode as a table".into())),
    }
}

/// Key tree of a configuration with every optional field present.
fn schema(kind: ScenarioKind) -> AppResult<Table> {
    let mut full = ScenarioConfig::defaults(kind);
    full.safety_coordinate.get_or_insert(0);
    full.attack.direction.get_or_insert_with(|| vec![1.0]);
    full.controller.gain.get_or_insert_with(|| vec![vec![1.0]]);
    to_table(&full)
}

fn check_keys(user: &Table, schema: &Table, prefix: &str) -> AppResult<()> {
    for (key, value) in user {
        let path = join(prefix, key);
        match (schema.get(key), value) {
            (None, _) => return Err(AppError::Config(format!("unknown key `{path}`"))),
            (Some(Value::Table(s)), Value::Table(u)) => check_keys(u, s, &path)?,
            (Some(Value::Table(_)), _) => return Err(AppError::Config(format!("`{path}` must be a table"))),
            _ => {}
        }
    }
    Ok(())
}

fn join(prefix: &str, key: &str) -> String {
    if prefix.is_empty() {
        key.to_string()
    } else {
        format!("{prefix}.{key}")
    }
}

/// Overlay `user` on `base`, recording every leaf taken from `user`.
fn merge(base: &mut Table, user: &Table, prefix: &str, prov: &mut BTreeMap<String, Source>) {
    for (key, value) in user {
        let path = join(prefix, key);
        match (base.get_mut(key), value) {
            (Some(Value::Table(b)), Value::Table(u)) => merge(b, u, &path, prov),
            _ => {
                mark(value, &path, Source::File, prov);
                base.insert(key.clone(), value.clone());
            }
        }
    }
}

fn mark(value: &Value, path: &str, source: Source, prov: &mut BTreeMap<String, Source>) {
    match value {
        Value::Table(t) => {
            for (k, v) in t {
                mark(v, &join(path, k), source, prov);
            }
        }
        _ => {
            prov.insert(path.to_string(), source);
        }
    }
}

/// Parse scenario text. `allow_null_attack` admits `attack.s0_norm = 0`.
pub fn parse_config_str(text: &str, allow_null_attack: bool) -> AppResult<LoadedConfig> {
    let user: Table = text.parse().map_err(|e: toml::de::Error| AppError::Config(format!("malformed scenario file: {e}")))?;
    let kind_value = user.get("scenario").ok_or_else(|| AppError::Config("missing required key `scenario`".into()))?;
    let kind = ScenarioKind::deserialize(kind_value.clone()).map_err(|_| {
        AppError::Config(format!(
            "`scenario` must be one of \"pendulum\", \"scalar-lti\", \"null-bench\", \"lti\"; got {kind_value}"
        ))
    })?;
    check_keys(&user, &schema(kind)?, "")?;
    let mut merged = to_table(&ScenarioConfig::defaults(kind))?;
    let mut provenance = BTreeMap::new();
    mark(&Value::Table(merged.clone()), "", Source::Default, &mut provenance);
    merge(&mut merged, &user, "", &mut provenance);
    let config = ScenarioConfig::deserialize(Value::Table(merged)).map_err(|e| AppError::Config(format!("invalid value: {e}")))?;
    config.validate(allow_null_attack)?;
    Ok(LoadedConfig { config, provenance })
}

pub fn parse_config(path: &Path, allow_null_attack: bool) -> AppResult<LoadedConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| AppError::io(path, e))?;
    parse_config_str(&text, allow_null_attack)
}

/// Complete TOML for a configuration; parsing it back gives the same value.
pub fn serialize_config(cfg: &ScenarioConfig) -> AppResult<String> {
    toml::to_string(cfg).map_err(|e| AppError::Format(format!("cannot encode configuration: {e}")))
}

impl LoadedConfig {
    pub fn set_seed(&mut self, seed: u64) {
        self.config.seed = seed;
        self.provenance.insert("seed".into(), Source::CommandLine);
    }

    pub fn set_ensemble(&mut self, n: usize) -> AppResult<()> {
        if n == 0 {
            return Err(AppError::Config("--ensemble must be at least 1".into()));
        }
        self.config.ensemble = n;
        self.provenance.insert("ensemble".into(), Source::CommandLine);
        Ok(())
    }

    pub fn set_horizon(&mut self, t: usize) -> AppResult<()> {
        if t == 0 {
            return Err(AppError::Config("--horizon must be at least 1".into()));
        }
        self.config.horizon = t;
        self.provenance.insert("horizon".into(), Source::CommandLine);
        Ok(())
    }
}
