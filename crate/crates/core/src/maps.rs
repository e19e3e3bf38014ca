//! Built-in maps.

use std::path::Path;

use thiserror::Error;

use crate::world::{parse_map, Environment, WorldError};

const BUILTIN: [(&str, &str); 4] = [
    ("env1", include_str!("../maps/env1.map")),
    ("env2", include_str!("../maps/env2.map")),
    ("env3", include_str!("../maps/env3.map")),
    ("env4", include_str!("../maps/env4.map")),
];

#[derive(Debug, Error)]
pub enum MapLoadError {
    #[error("cannot read map `{path}`: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("map `{name}`: {source}")]
    Invalid { name: String, source: WorldError },
}

pub fn builtin_names() -> impl Iterator<Item = &'static str> {
    BUILTIN.iter().map(|(name, _)| *name)
}

pub fn builtin_text(name: &str) -> Option<&'static str> {
    BUILTIN
        .iter()
        .find(|(n, _)| *n == name)
        .map(|(_, text)| *text)
}

/// Parses one of the built-in maps (`env1` .. `env4`).
pub fn builtin(name: &str) -> Option<Environment> {
    let text = builtin_text(name)?;
    Some(
        parse_map(text)
            .expect("built-in maps are valid")
            .with_name(name),
    )
}

/// Loads a built-in map by name, or a map file by path.
pub fn load(name_or_path: &str) -> Result<Environment, MapLoadError> {
    if let Some(env) = builtin(name_or_path) {
        return Ok(env);
    }
    let path = Path::new(name_or_path);
    let text = std::fs::read_to_string(path).map_err(|source| MapLoadError::Io {
        path: name_or_path.to_string(),
        source,
    })?;
    let name = path
        .file_stem()
        .and_then(|s| s.to_str())
        .unwrap_or(name_or_path)
        .to_string();
    parse_map(&text)
        .map(|env| env.with_name(name.clone()))
        .map_err(|source| MapLoadError::Invalid { name, source })
}
