use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::Value;

use crate::error::{DivaError, Result};

/// Overlays the flags that were given on top of the keys of a flat TOML
/// file. Unknown keys in the file are rejected.
pub fn merge_with_file<T: Serialize + DeserializeOwned>(flags: &T, file: Option<&Path>) -> Result<T> {
    let internal = |e: serde_json::Error| DivaError::Internal(e.to_string());
    let Value::Object(given) = serde_json::to_value(flags).map_err(internal)? else {
        return Err(DivaError::Internal("flag struct must serialize to a map".into()));
    };
    let mut merged = match file {
        Some(path) => read_table(path)?,
        None => serde_json::Map::new(),
    };
    for (key, value) in given {
        if !value.is_null() {
            merged.insert(key, value);
        }
    }
    serde_json::from_value(Value::Object(merged)).map_err(|e| match file {
        Some(p) => DivaError::validation(format!("{}: {e}", p.display())),
        None => DivaError::validation(e.to_string()),
    })
}

fn read_table(path: &Path) -> Result<serde_json::Map<String, Value>> {
    let body = std::fs::read_to_string(path).map_err(|e| DivaError::io(path, e))?;
    let table: toml::Table = body.parse().map_err(|e: toml::de::Error| DivaError::Parse {
        path: path.display().to_string(),
        line: e.span().map_or(0, |s| body[..s.start].lines().count().max(1)),
        message: e.message().to_string(),
    })?;
    match serde_json::to_value(table).map_err(|e| DivaError::Internal(e.to_string()))? {
        Value::Object(m) => Ok(m),
        _ => unreachable!("a TOML table serializes to a map"),
    }
}
