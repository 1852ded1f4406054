//! Layered configuration: built-in defaults, then a JSON config file, then
//! command-line flags.

use anyhow::{Context, Result};
use htdsm::Error;
use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::Value;
use std::path::Path;

/// Recursively overlays `top` onto `base`. Objects merge key by key; any
/// other value replaces what was there.
pub fn merge(base: &mut Value, top: Value) {
    match (base, top) {
        (Value::Object(b), Value::Object(t)) => {
            for (k, v) in t {
                match b.get_mut(&k) {
                    Some(slot) => merge(slot, v),
                    None => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (slot, v) => *slot = v,
    }
}

/// `defaults` overlaid with the JSON object in `path`, if any.
pub fn layered<T: Serialize + DeserializeOwned>(defaults: &T, path: Option<&Path>) -> Result<T> {
    let Some(path) = path else {
        return Ok(serde_json::from_value(serde_json::to_value(defaults)?)?);
    };
    let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
    let overlay: Value = serde_json::from_str(&text)
        .map_err(Error::from)
        .with_context(|| format!("parsing config {}", path.display()))?;
    if !overlay.is_object() {
        return Err(Error::Config(format!("{} must hold a JSON object", path.display())).into());
    }
    let mut value = serde_json::to_value(defaults)?;
    merge(&mut value, overlay);
    serde_json::from_value(value).map_err(Error::from).with_context(|| format!("invalid config {}", path.display()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    #[test]
    fn nested_objects_merge() {
        let mut base = json!({"a": 1, "b": {"c": 2, "d": 3}, "e": [1, 2]});
        merge(&mut base, json!({"b": {"d": 4}, "e": [5], "f": true}));
        assert_eq!(base, json!({"a": 1, "b": {"c": 2, "d": 4}, "e": [5], "f": true}));
    }
}
