//! Layered JSON configuration: struct defaults, then the config file, then
//! `ZSFLOW_SEED`, then `--set key=value` flags in command-line order.

use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::Value;

use crate::CliError;

pub const SEED_ENV: &str = "ZSFLOW_SEED";

/// Parses `key=value`. The value is read as JSON when it parses, otherwise
/// as a plain string. Dotted keys address nested objects.
fn apply_set(doc: &mut Value, assignment: &str) -> Result<(), CliError> {
    let (key, raw) = assignment
        .split_once('=')
        .ok_or_else(|| CliError::usage(format!("--set expects key=value, got `{assignment}`")))?;
    let value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
    let mut cur = doc;
    let mut parts = key.split('.').peekable();
    while let Some(part) = parts.next() {
        if !cur.is_object() {
            *cur = Value::Object(Default::default());
        }
        let obj = cur.as_object_mut().expect("object");
        if parts.peek().is_none() {
            obj.insert(part.to_string(), value);
            return Ok(());
        }
        cur = obj.entry(part.to_string()).or_insert(Value::Null);
    }
    Err(CliError::usage("--set with an empty key"))
}

fn seed_from_env() -> Result<Option<u64>, CliError> {
    match std::env::var(SEED_ENV) {
        Ok(s) => s
            .trim()
            .parse()
            .map(Some)
            .map_err(|_| CliError::usage(format!("{SEED_ENV} must be an unsigned integer, got `{s}`"))),
        Err(_) => Ok(None),
    }
}

/// Seed precedence for commands without a config file: `--seed`, then the
/// environment, then `fallback`.
pub fn resolve_seed(flag: Option<u64>, fallback: u64) -> Result<u64, CliError> {
    Ok(flag.or(seed_from_env()?).unwrap_or(fallback))
}

/// Builds a config of type `C`. `base` supplies defaults (pass `None` for
/// configs whose required fields must come from the file).
pub fn load_config<C: Serialize + DeserializeOwned>(
    path: Option<&std::path::Path>,
    base: Option<&C>,
    sets: &[String],
) -> Result<C, CliError> {
    let mut doc = match base {
        Some(b) => serde_json::to_value(b).expect("config serializes"),
        None => Value::Object(Default::default()),
    };
    if let Some(p) = path {
        let text = std::fs::read_to_string(p).map_err(|e| CliError::io(format!("{}: {e}", p.display())))?;
        let file: Value = serde_json::from_str(&text)
            .map_err(|e| CliError::usage(format!("{}: invalid JSON: {e}", p.display())))?;
        let Value::Object(map) = file else {
            return Err(CliError::usage(format!("{}: config must be a JSON object", p.display())));
        };
        merge(&mut doc, Value::Object(map));
    }
    if let Some(seed) = seed_from_env()? {
        doc["seed"] = seed.into();
    }
    for s in sets {
        apply_set(&mut doc, s)?;
    }
    serde_json::from_value(doc).map_err(|e| CliError::usage(format!("config: {e}")))
}

/// Recursively overlays `top` onto `base`; non-object values replace.
fn merge(base: &mut Value, top: Value) {
    match (base, top) {
        (Value::Object(b), Value::Object(t)) => {
            for (k, v) in t {
                match b.get_mut(&k) {
                    Some(slot) if slot.is_object() && v.is_object() => merge(slot, v),
                    _ => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (slot, top) => *slot = top,
    }
}
