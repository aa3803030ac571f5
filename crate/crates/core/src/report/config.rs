//! Layered configuration: built-in defaults, then an optional preset layer,
//! then a TOML file, then `key=value` overrides. Every layer is checked
//! against the default table so unknown keys and type mismatches are reported
//! by their dotted path.

use std::fs;
use std::path::{Path, PathBuf};

use thiserror::Error;
use toml::{Table, Value};

use crate::sim::{SimConfig, SimError};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("syntax error in {origin}: {message}")]
    Syntax { origin: String, message: String },
    #[error("unknown key `{0}`")]
    UnknownKey(String),
    #[error("`{key}` expects {expected}, found {found}")]
    TypeMismatch {
        key: String,
        expected: &'static str,
        found: &'static str,
    },
    #[error("bad override `{0}`, expected key=value")]
    BadOverride(String),
    #[error("invalid value for `{key}`: {reason}")]
    Invalid { key: String, reason: String },
}

/// Short names accepted for the hyper-parameters.
const ALIASES: [(&str, &str); 3] = [
    ("eta", "hp.eta"),
    ("epochs", "hp.epochs"),
    ("batch_size", "hp.batch_size"),
];

/// The defaults as a TOML table; every accepted key appears in it.
pub fn default_table() -> Table {
    match Value::try_from(SimConfig::default()) {
        Ok(Value::Table(t)) => t,
        _ => unreachable!("SimConfig serialises to a table"),
    }
}

/// Parses TOML text into a layer. `origin` only labels errors.
pub fn parse_layer(text: &str, origin: &str) -> Result<Table, ConfigError> {
    let t: Table = text.parse().map_err(|e: toml::de::Error| ConfigError::Syntax {
        origin: origin.to_string(),
        message: e.message().to_string(),
    })?;
    Ok(unalias(t))
}

pub fn read_layer(path: &Path) -> Result<Table, ConfigError> {
    let text = fs::read_to_string(path).map_err(|source| ConfigError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_layer(&text, &path.display().to_string())
}

/// Builds a layer from `key=value` pairs. Values are read as TOML literals,
/// falling back to a bare string (`mode=fl`).
pub fn override_layer<S: AsRef<str>>(pairs: &[S]) -> Result<Table, ConfigError> {
    let mut layer = Table::new();
    for pair in pairs {
        let pair = pair.as_ref();
        let (key, raw) = pair
            .split_once('=')
            .ok_or_else(|| ConfigError::BadOverride(pair.to_string()))?;
        let key = key.trim();
        if key.is_empty() || key.split('.').any(str::is_empty) {
            return Err(ConfigError::BadOverride(pair.to_string()));
        }
        let value = literal(raw.trim());
        insert_path(&mut layer, key, value);
    }
    Ok(unalias(layer))
}

fn literal(raw: &str) -> Value {
    format!("v = {raw}")
        .parse::<Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| Value::String(raw.to_string()))
}

/// Sets a dotted `key` inside `table`, creating intermediate tables.
pub fn insert_path(table: &mut Table, key: &str, value: Value) {
    let mut parts: Vec<&str> = key.split('.').collect();
    let last = parts.pop().unwrap_or(key);
    let mut cur = table;
    for p in parts {
        let entry = cur.entry(p.to_string()).or_insert_with(|| Value::Table(Table::new()));
        if !entry.is_table() {
            *entry = Value::Table(Table::new());
        }
        cur = match entry {
            Value::Table(t) => t,
            _ => unreachable!(),
        };
    }
    cur.insert(last.to_string(), value);
}

fn unalias(mut t: Table) -> Table {
    for (short, full) in ALIASES {
        if let Some(v) = t.remove(short) {
            insert_path(&mut t, full, v);
        }
    }
    t
}

fn type_name(v: &Value) -> &'static str {
    match v {
        Value::String(_) => "a string",
        Value::Integer(_) => "an integer",
        Value::Float(_) => "a float",
        Value::Boolean(_) => "a boolean",
        Value::Datetime(_) => "a datetime",
        Value::Array(_) => "an array",
        Value::Table(_) => "a table",
    }
}

/// Merges `layer` over `base`. Keys must already exist in `base` with the
/// same type; integers are accepted where floats are expected.
pub fn merge_layer(base: &mut Table, layer: &Table) -> Result<(), ConfigError> {
    merge_at(base, layer, "")
}

fn merge_at(base: &mut Table, layer: &Table, prefix: &str) -> Result<(), ConfigError> {
    for (k, v) in layer {
        let path = if prefix.is_empty() {
            k.clone()
        } else {
            format!("{prefix}.{k}")
        };
        let slot = base.get_mut(k).ok_or_else(|| ConfigError::UnknownKey(path.clone()))?;
        match (&mut *slot, v) {
            (Value::Table(inner), Value::Table(sub)) => merge_at(inner, sub, &path)?,
            (Value::Float(_), Value::Integer(i)) => *slot = Value::Float(*i as f64),
            (cur, new) if std::mem::discriminant(cur) == std::mem::discriminant(new) && !cur.is_table() => {
                *slot = new.clone()
            }
            (cur, new) => {
                return Err(ConfigError::TypeMismatch {
                    key: path,
                    expected: type_name(cur),
                    found: type_name(new),
                })
            }
        }
    }
    Ok(())
}

fn leaves(t: &Table, prefix: &str, out: &mut Vec<(String, Value)>) {
    for (k, v) in t {
        let path = if prefix.is_empty() {
            k.clone()
        } else {
            format!("{prefix}.{k}")
        };
        match v {
            Value::Table(sub) => leaves(sub, &path, out),
            _ => out.push((path, v.clone())),
        }
    }
}

/// Deserialises a fully merged table and validates it.
pub fn finish(table: Table) -> Result<SimConfig, ConfigError> {
    let cfg: SimConfig = match Value::Table(table.clone()).try_into() {
        Ok(c) => c,
        Err(e) => return Err(blame(&table, e)),
    };
    cfg.validate().map_err(|e| match e {
        SimError::Config { key, reason } => ConfigError::Invalid { key, reason },
        other => ConfigError::Invalid {
            key: "config".into(),
            reason: other.to_string(),
        },
    })?;
    Ok(cfg)
}

/// Finds the first non-default leaf that alone breaks deserialisation.
fn blame(table: &Table, err: toml::de::Error) -> ConfigError {
    let defaults = default_table();
    let mut mine = Vec::new();
    leaves(table, "", &mut mine);
    let mut theirs = Vec::new();
    leaves(&defaults, "", &mut theirs);
    for (path, value) in mine {
        if theirs.iter().any(|(p, v)| *p == path && *v == value) {
            continue;
        }
        let mut probe = defaults.clone();
        insert_path(&mut probe, &path, value);
        if let Err(e) = Value::Table(probe).try_into::<SimConfig>() {
            return ConfigError::Invalid {
                key: path,
                reason: e.message().trim().to_string(),
            };
        }
    }
    ConfigError::Invalid {
        key: "config".into(),
        reason: err.message().trim().to_string(),
    }
}

/// Defaults, then `preset`, then the file at `path`, then `overrides`.
pub fn resolve_table<S: AsRef<str>>(
    preset: Option<&Table>,
    path: Option<&Path>,
    overrides: &[S],
) -> Result<Table, ConfigError> {
    let mut t = default_table();
    if let Some(p) = preset {
        merge_layer(&mut t, p)?;
    }
    if let Some(p) = path {
        merge_layer(&mut t, &read_layer(p)?)?;
    }
    merge_layer(&mut t, &override_layer(overrides)?)?;
    Ok(t)
}

/// Resolves a single-run configuration from an optional file and overrides.
pub fn parse_config<S: AsRef<str>>(path: Option<&Path>, overrides: &[S]) -> Result<SimConfig, ConfigError> {
    finish(resolve_table(None, path, overrides)?)
}
