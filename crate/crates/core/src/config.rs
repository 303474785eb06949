//! Flat `key = value` configuration files mirroring CLI flags.
//!
//! Blank lines and lines starting with `#` are ignored. Keys are flag names
//! without the leading dashes; a bare key is a boolean switch.

use std::path::Path;

use crate::error::{domain, Error, Result};

/// Ordered `(key, value)` pairs; `value` is `None` for bare switches.
pub type ConfigEntries = Vec<(String, Option<String>)>;

pub fn parse_config(text: &str) -> Result<ConfigEntries> {
    let mut out = Vec::new();
    for (n, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = match line.split_once('=') {
            Some((k, v)) => (k.trim(), Some(v.trim().to_string())),
            None => (line, None),
        };
        let key = key.trim_start_matches("--");
        if key.is_empty() || key.contains(char::is_whitespace) {
            return Err(domain(format!("config line {}: malformed key in {raw:?}", n + 1)));
        }
        out.push((key.to_string(), value));
    }
    Ok(out)
}

pub fn read_config(path: impl AsRef<Path>) -> Result<ConfigEntries> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_config(&text)
}

/// Renders entries as `--key value` arguments.
pub fn to_args(entries: &ConfigEntries) -> Vec<String> {
    let mut args = Vec::with_capacity(entries.len() * 2);
    for (k, v) in entries {
        args.push(format!("--{k}"));
        if let Some(v) = v {
            args.push(v.clone());
        }
    }
    args
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_pairs_switches_and_comments() {
        let e = parse_config("# partition run\nk = 3\n--seed=7\n\nverbose\n").unwrap();
        assert_eq!(
            e,
            vec![
                ("k".into(), Some("3".into())),
                ("seed".into(), Some("7".into())),
                ("verbose".into(), None),
            ]
        );
        assert_eq!(to_args(&e), ["--k", "3", "--seed", "7", "--verbose"]);
    }

    #[test]
    fn rejects_malformed_keys() {
        assert!(parse_config("= 3").is_err());
        assert!(parse_config("two words = 3").is_err());
    }
}
