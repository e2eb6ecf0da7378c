//! Self-describing key/value text documents used to persist schemas and
//! trained models.
//!
//! One `key = value` pair per line, in insertion order. Floats are written
//! with 17 significant digits so every `f64` reads back bit-identical.

use std::fmt::Display;
use std::str::FromStr;

use crate::error::{Error, Result};

const MAGIC: &str = "# tc4tl sidecar v1";

#[derive(Clone, Debug, Default, PartialEq)]
pub struct KvDocument {
    entries: Vec<(String, String)>,
}

pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

impl KvDocument {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn set(&mut self, key: impl Into<String>, value: impl Display) {
        let key = key.into();
        debug_assert!(!key.contains('=') && !key.contains('\n'));
        let value = value.to_string();
        match self.entries.iter_mut().find(|(k, _)| *k == key) {
            Some(slot) => slot.1 = value,
            None => self.entries.push((key, value)),
        }
    }

    pub fn set_f64(&mut self, key: impl Into<String>, value: f64) {
        self.set(key, fmt_f64(value));
    }

    pub fn set_f64s(&mut self, key: impl Into<String>, values: &[f64]) {
        let joined = values.iter().map(|&v| fmt_f64(v)).collect::<Vec<_>>().join(" ");
        self.set(key, joined);
    }

    pub fn set_list<T: Display>(&mut self, key: impl Into<String>, values: &[T]) {
        let joined = values.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(" ");
        self.set(key, joined);
    }

    pub fn get(&self, key: &str) -> Result<&str> {
        self.entries
            .iter()
            .find(|(k, _)| k == key)
            .map(|(_, v)| v.as_str())
            .ok_or_else(|| Error::Schema(format!("sidecar is missing key {key:?}")))
    }

    pub fn get_parsed<T: FromStr>(&self, key: &str) -> Result<T> {
        let raw = self.get(key)?;
        raw.parse()
            .map_err(|_| Error::Schema(format!("sidecar key {key:?} has bad value {raw:?}")))
    }

    pub fn get_list<T: FromStr>(&self, key: &str) -> Result<Vec<T>> {
        self.get(key)?
            .split_whitespace()
            .map(|tok| {
                tok.parse()
                    .map_err(|_| Error::Schema(format!("sidecar key {key:?} has bad item {tok:?}")))
            })
            .collect()
    }

    pub fn contains(&self, key: &str) -> bool {
        self.entries.iter().any(|(k, _)| k == key)
    }

    pub fn render(&self) -> String {
        let mut out = String::from(MAGIC);
        out.push('\n');
        for (k, v) in &self.entries {
            out.push_str(k);
            out.push_str(" = ");
            out.push_str(v);
            out.push('\n');
        }
        out
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut lines = text.lines().enumerate();
        match lines.next() {
            Some((_, first)) if first == MAGIC => {}
            _ => return Err(Error::parse(1, "not a tc4tl sidecar document")),
        }
        let mut doc = KvDocument::new();
        for (i, line) in lines {
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line
                .split_once(" = ")
                .or_else(|| line.strip_suffix(" =").map(|k| (k, "")))
                .ok_or_else(|| Error::parse(i + 1, "expected `key = value`"))?;
            if doc.contains(k) {
                return Err(Error::parse(i + 1, format!("duplicate key {k:?}")));
            }
            doc.entries.push((k.to_string(), v.to_string()));
        }
        Ok(doc)
    }
}
