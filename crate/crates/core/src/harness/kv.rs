//! Flat `key = value` files shared by run configs, corpus specs and grids.

use std::path::Path;

use super::HarnessError;

/// Parses `key = value` lines; `#` starts a comment, blank lines are
/// skipped. Returns `(line number, key, value)` in file order.
pub fn parse_kv(text: &str, origin: &str) -> Result<Vec<(usize, String, String)>, HarnessError> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line.split_once('=').ok_or_else(|| HarnessError::Config {
            origin: origin.to_string(),
            line: i + 1,
            msg: format!("expected `key = value`, got `{line}`"),
        })?;
        out.push((i + 1, k.trim().to_string(), v.trim().to_string()));
    }
    Ok(out)
}

pub fn read_kv(path: &Path) -> Result<Vec<(usize, String, String)>, HarnessError> {
    let text = std::fs::read_to_string(path)?;
    parse_kv(&text, &path.display().to_string())
}

pub fn parse_value<T: std::str::FromStr>(key: &str, value: &str) -> Result<T, String> {
    value.parse().map_err(|_| format!("bad value `{value}` for `{key}`"))
}

pub fn parse_bool(key: &str, value: &str) -> Result<bool, String> {
    match value {
        "true" | "on" | "yes" | "1" => Ok(true),
        "false" | "off" | "no" | "0" => Ok(false),
        _ => Err(format!("bad boolean `{value}` for `{key}`")),
    }
}
