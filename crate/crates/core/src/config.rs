//! Flat `key = value` configuration text.
//!
//! Blank lines and `#` comments are ignored; `key value` without `=` is also accepted.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Default, PartialEq)]
pub struct KeyValues {
    entries: BTreeMap<String, String>,
}

impl KeyValues {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut entries = BTreeMap::new();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = match line.split_once('=') {
                Some((k, v)) => (k.trim(), v.trim()),
                None => match line.split_once(char::is_whitespace) {
                    Some((k, v)) => (k.trim(), v.trim()),
                    None => return Err(Error::Config(format!("line {}: missing value for '{line}'", n + 1))),
                },
            };
            if key.is_empty() {
                return Err(Error::Config(format!("line {}: empty key", n + 1)));
            }
            entries.insert(key.to_ascii_lowercase(), value.to_string());
        }
        Ok(Self { entries })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn set(&mut self, key: &str, value: impl ToString) {
        self.entries.insert(key.to_ascii_lowercase(), value.to_string());
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(String::as_str)
    }

    pub fn remove(&mut self, key: &str) -> Option<String> {
        self.entries.remove(key)
    }

    pub fn contains(&self, key: &str) -> bool {
        self.entries.contains_key(key)
    }

    pub fn keys(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }

    /// Overlays `other` on top of `self`.
    pub fn merge(&mut self, other: &KeyValues) {
        for (k, v) in &other.entries {
            self.entries.insert(k.clone(), v.clone());
        }
    }

    pub fn parsed<T: FromStr>(&self, key: &str) -> Result<Option<T>> {
        match self.get(key) {
            None => Ok(None),
            Some(v) => v
                .parse()
                .map(Some)
                .map_err(|_| Error::Config(format!("invalid value '{v}' for key '{key}'"))),
        }
    }

    /// Reads a real number; accepts `pi`, `pi/8`, `3*pi/4` and plain decimals.
    pub fn real(&self, key: &str) -> Result<Option<f64>> {
        match self.get(key) {
            None => Ok(None),
            Some(v) => parse_real(v)
                .map(Some)
                .ok_or_else(|| Error::Config(format!("invalid number '{v}' for key '{key}'"))),
        }
    }

    pub fn reals(&self, key: &str) -> Result<Option<Vec<f64>>> {
        match self.get(key) {
            None => Ok(None),
            Some(v) => v
                .split([',', ' '])
                .filter(|t| !t.trim().is_empty())
                .map(|t| {
                    parse_real(t.trim())
                        .ok_or_else(|| Error::Config(format!("invalid number '{t}' in key '{key}'")))
                })
                .collect::<Result<Vec<_>>>()
                .map(Some),
        }
    }

    pub fn to_text(&self) -> String {
        self.entries.iter().map(|(k, v)| format!("{k} = {v}\n")).collect()
    }
}

pub fn parse_real(s: &str) -> Option<f64> {
    let s = s.trim().to_ascii_lowercase();
    if let Ok(v) = s.parse::<f64>() {
        return Some(v);
    }
    let (num, den) = match s.split_once('/') {
        Some((n, d)) => (n.trim(), Some(d.trim().parse::<f64>().ok()?)),
        None => (s.as_str(), None),
    };
    let num = match num.split_once('*') {
        Some((k, p)) if p.trim() == "pi" => k.trim().parse::<f64>().ok()? * PI,
        None if num == "pi" => PI,
        _ => num.parse::<f64>().ok()?,
    };
    Some(match den {
        Some(d) => num / d,
        None => num,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_comments_and_both_separators() {
        let kv = KeyValues::parse("# dictionary\ngroup = sim2\nnu 4 # trailing\n\nrot_step = pi/8\n").unwrap();
        assert_eq!(kv.get("group"), Some("sim2"));
        assert_eq!(kv.real("nu").unwrap(), Some(4.0));
        assert!((kv.real("rot_step").unwrap().unwrap() - PI / 8.0).abs() < 1e-15);
        assert!(KeyValues::parse("lonely\n").is_err());
    }

    #[test]
    fn real_expressions() {
        assert_eq!(parse_real("pi"), Some(PI));
        assert!((parse_real("3*pi/4").unwrap() - 0.75 * PI).abs() < 1e-15);
        assert_eq!(parse_real("0.25"), Some(0.25));
        assert_eq!(parse_real("x"), None);
    }

    #[test]
    fn merge_overrides() {
        let mut a = KeyValues::parse("k = 1\nj = 2").unwrap();
        a.merge(&KeyValues::parse("k = 3").unwrap());
        assert_eq!(a.get("k"), Some("3"));
        assert_eq!(a.reals("missing").unwrap(), None);
        a.set("scales", "1, 1.5,2");
        assert_eq!(a.reals("scales").unwrap(), Some(vec![1.0, 1.5, 2.0]));
    }
}
