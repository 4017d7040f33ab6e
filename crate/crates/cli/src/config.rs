//! Settings merged from an optional JSON file and command-line flags.

use std::path::Path;

use anyhow::{Context, Result};
use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::{Map, Value};

use crate::failure::ConfigError;

/// Overlays every flag that was given onto the file's settings and parses
/// the result; unknown keys in the file are rejected.
pub fn merge<T: Serialize + DeserializeOwned>(flags: &T, file: Option<&Path>) -> Result<T> {
    let mut merged = match file {
        Some(path) => {
            let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
            match serde_json::from_str::<Value>(&text) {
                Ok(Value::Object(map)) => map,
                Ok(_) => return Err(ConfigError(format!("{}: expected a JSON object", path.display())).into()),
                Err(e) => return Err(ConfigError(format!("{}: {e}", path.display())).into()),
            }
        }
        None => Map::new(),
    };
    if let Value::Object(given) = serde_json::to_value(flags).context("encoding flags")? {
        for (k, v) in given {
            if !v.is_null() {
                merged.insert(k, v);
            }
        }
    }
    let source = file.map_or_else(|| "flags".to_string(), |p| p.display().to_string());
    serde_json::from_value(Value::Object(merged)).map_err(|e| ConfigError(format!("{source}: {e}")).into())
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde::Deserialize;

    #[derive(Debug, Default, PartialEq, Serialize, Deserialize)]
    #[serde(deny_unknown_fields)]
    struct Opts {
        k: Option<usize>,
        name: Option<String>,
    }

    fn file(text: &str) -> tempfile::NamedTempFile {
        let f = tempfile::NamedTempFile::new().unwrap();
        std::fs::write(f.path(), text).unwrap();
        f
    }

    #[test]
    fn flags_override_file() {
        let f = file(r#"{"k": 3, "name": "a"}"#);
        let flags = Opts { k: Some(5), name: None };
        assert_eq!(merge(&flags, Some(f.path())).unwrap(), Opts { k: Some(5), name: Some("a".into()) });
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let f = file(r#"{"kk": 3}"#);
        let err = merge(&Opts::default(), Some(f.path())).unwrap_err();
        assert!(err.is::<ConfigError>());
        assert!(err.to_string().contains("kk"));
    }

    #[test]
    fn no_file_keeps_flags() {
        let flags = Opts { k: Some(1), name: None };
        assert_eq!(merge(&flags, None).unwrap(), flags);
    }
}
