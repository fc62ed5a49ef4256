//! Plain-text `key = value` configuration files.
//!
//! One pair per line, `#` starts a comment, blank lines are skipped.
//! Repeated keys accumulate in file order; model files use that for
//! `atom` / `branch` lists. For scalar lookups the last occurrence wins,
//! so later lines override earlier ones.

use std::path::Path;

use crate::error::{QmapError, Result};

#[derive(Debug, Clone, Default)]
pub struct KvFile {
    pairs: Vec<(String, String)>,
}

impl KvFile {
    pub fn parse(text: &str) -> Result<Self> {
        let mut pairs = Vec::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = match raw.find('#') {
                Some(i) => &raw[..i],
                None => raw,
            }
            .trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                QmapError::Parse(format!("line {}: expected `key = value`, got `{}`", lineno + 1, raw.trim()))
            })?;
            pairs.push((key.trim().to_string(), value.trim().to_string()));
        }
        Ok(Self { pairs })
    }

    pub fn from_path(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::parse(&text)
    }

    /// Append a pair; for scalar lookups this overrides earlier values.
    pub fn push(&mut self, key: &str, value: impl Into<String>) {
        self.pairs.push((key.to_string(), value.into()));
    }

    /// Last occurrence of `key`, if any.
    pub fn get(&self, key: &str) -> Option<&str> {
        self.pairs
            .iter()
            .rev()
            .find(|(k, _)| k == key)
            .map(|(_, v)| v.as_str())
    }

    /// All occurrences of `key`, in file order.
    pub fn get_all<'a>(&'a self, key: &'a str) -> impl Iterator<Item = &'a str> {
        self.pairs.iter().filter(move |(k, _)| k == key).map(|(_, v)| v.as_str())
    }

    pub fn require(&self, key: &str) -> Result<&str> {
        self.get(key)
            .ok_or_else(|| QmapError::Parse(format!("missing required key `{key}`")))
    }

    pub fn keys(&self) -> impl Iterator<Item = &str> {
        self.pairs.iter().map(|(k, _)| k.as_str())
    }
}

/// Parse a float, accepting `a/b` fraction sugar (`25/255`).
pub fn parse_f64(s: &str) -> Result<f64> {
    let s = s.trim();
    if let Some((num, den)) = s.split_once('/') {
        let n: f64 = num
            .trim()
            .parse()
            .map_err(|_| QmapError::Parse(format!("bad number `{s}`")))?;
        let d: f64 = den
            .trim()
            .parse()
            .map_err(|_| QmapError::Parse(format!("bad number `{s}`")))?;
        if d == 0.0 {
            return Err(QmapError::Parse(format!("zero denominator in `{s}`")));
        }
        return Ok(n / d);
    }
    s.parse()
        .map_err(|_| QmapError::Parse(format!("bad number `{s}`")))
}

/// Parse a whitespace-separated list of floats.
pub fn parse_f64_list(s: &str) -> Result<Vec<f64>> {
    s.split_whitespace().map(parse_f64).collect()
}

/// Parse a list of integers; `a..b` expands to the inclusive range.
pub fn parse_u32_list(s: &str) -> Result<Vec<u32>> {
    let mut out = Vec::new();
    for tok in s.split_whitespace() {
        if let Some((lo, hi)) = tok.split_once("..") {
            let lo: u32 = lo
                .parse()
                .map_err(|_| QmapError::Parse(format!("bad integer `{tok}`")))?;
            let hi: u32 = hi
                .parse()
                .map_err(|_| QmapError::Parse(format!("bad integer `{tok}`")))?;
            if hi < lo {
                return Err(QmapError::Parse(format!("empty range `{tok}`")));
            }
            out.extend(lo..=hi);
        } else {
            out.push(
                tok.parse()
                    .map_err(|_| QmapError::Parse(format!("bad integer `{tok}`")))?,
            );
        }
    }
    Ok(out)
}

pub fn parse_usize(s: &str) -> Result<usize> {
    s.trim()
        .parse()
        .map_err(|_| QmapError::Parse(format!("bad integer `{s}`")))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_pairs_comments_and_overrides() {
        let kv = KvFile::parse("# model\nq0 = 0.3\natom = 0.5 0.7\natom = 0.25 0.1 # tail\nq0 = 0.4\n").unwrap();
        assert_eq!(kv.get("q0"), Some("0.4"));
        let atoms: Vec<_> = kv.get_all("atom").collect();
        assert_eq!(atoms, vec!["0.5 0.7", "0.25 0.1"]);
        assert!(kv.get("missing").is_none());
        assert!(kv.require("missing").is_err());
    }

    #[test]
    fn rejects_bare_lines() {
        assert!(KvFile::parse("just some words\n").is_err());
    }

    #[test]
    fn fraction_sugar() {
        assert!((parse_f64("25/255").unwrap() - 25.0 / 255.0).abs() < 1e-15);
        assert_eq!(parse_f64("0.25").unwrap(), 0.25);
        assert!(parse_f64("x").is_err());
        assert!(parse_f64("1/0").is_err());
    }

    #[test]
    fn u32_list_with_ranges() {
        assert_eq!(parse_u32_list("6..9 12").unwrap(), vec![6, 7, 8, 9, 12]);
        assert!(parse_u32_list("9..6").is_err());
    }
}
