//! Sectioned TOML configs: an `[env]` table (nested `[env.base]` for derived
//! environments) plus one table per subcommand holding its parameters.

use std::collections::BTreeSet;
use std::path::Path;

use sha2::{Digest, Sha256};
use toml::{Table, Value};

use crate::error::{ConfigError, LabError, Result};

/// Configs shipped with the binary, addressable by name instead of a path.
pub const BUNDLED: &[(&str, &str)] = &[
    ("constant-d1", include_str!("../configs/constant-d1.toml")),
    ("constant-d2", include_str!("../configs/constant-d2.toml")),
    ("iid-d2", include_str!("../configs/iid-d2.toml")),
    ("periodic-d1", include_str!("../configs/periodic-d1.toml")),
    ("periodic-d2", include_str!("../configs/periodic-d2.toml")),
    ("golden-d1", include_str!("../configs/golden-d1.toml")),
];

#[derive(Clone, Debug, PartialEq)]
pub struct Config {
    /// File path, or `bundled:<name>`.
    pub source: String,
    pub table: Table,
}

impl Config {
    pub fn parse(text: &str, source: impl Into<String>) -> Result<Self> {
        let table: Table = toml::from_str(text).map_err(|e| ConfigError::invalid(format!("TOML syntax: {e}")))?;
        Ok(Config { source: source.into(), table })
    }

    /// Reads `source` as a file path, falling back to a bundled config name.
    pub fn load(source: &str) -> Result<Self> {
        let path = Path::new(source);
        if path.exists() {
            let text = std::fs::read_to_string(path).map_err(|e| LabError::io(path, e))?;
            return Config::parse(&text, source);
        }
        let name = source.strip_prefix("bundled:").unwrap_or(source);
        match BUNDLED.iter().find(|(n, _)| *n == name) {
            Some((n, text)) => Config::parse(text, format!("bundled:{n}")),
            None => {
                let names: Vec<&str> = BUNDLED.iter().map(|(n, _)| *n).collect();
                Err(LabError::Usage(format!("no config file {source:?} and no bundled config of that name (bundled: {})", names.join(", "))))
            }
        }
    }

    /// Applies `key=value`. Keys starting with `env` or a command name are
    /// absolute; anything else is relative to `section`.
    pub fn apply_override(&mut self, section: &str, assignment: &str, commands: &[&str]) -> Result<()> {
        let (key, raw) = assignment
            .split_once('=')
            .ok_or_else(|| LabError::Usage(format!("--set expects key=value, got {assignment:?}")))?;
        let mut path: Vec<&str> = key.trim().split('.').collect();
        if path.iter().any(|p| p.is_empty()) {
            return Err(LabError::Usage(format!("malformed key {key:?}")));
        }
        // a bare key always belongs to the command's own section
        if path.len() == 1 || (path[0] != "env" && !commands.contains(&path[0])) {
            path.insert(0, section);
        }
        let value = parse_value(raw.trim());
        let mut table = &mut self.table;
        for part in &path[..path.len() - 1] {
            let entry = table.entry(part.to_string()).or_insert_with(|| Value::Table(Table::new()));
            table = entry
                .as_table_mut()
                .ok_or_else(|| LabError::Usage(format!("{key:?}: {part:?} is not a table")))?;
        }
        table.insert(path[path.len() - 1].to_string(), value);
        Ok(())
    }

    pub fn to_json(&self) -> serde_json::Value {
        serde_json::to_value(&self.table).unwrap_or(serde_json::Value::Null)
    }

    /// SHA-256 of the canonical JSON rendering of the resolved config.
    pub fn hash(&self) -> String {
        let canonical = serde_json::to_string(&self.to_json()).unwrap_or_default();
        hex::encode(Sha256::digest(canonical.as_bytes()))
    }

    /// Top-level keys that are neither `env` nor one of `commands`.
    pub fn unknown_sections(&self, commands: &[&str]) -> Vec<String> {
        self.table
            .keys()
            .filter(|k| k.as_str() != "env" && !commands.contains(&k.as_str()))
            .cloned()
            .collect()
    }

    pub fn section(&self, name: &str) -> Option<&Table> {
        self.table.get(name).and_then(Value::as_table)
    }
}

fn parse_value(raw: &str) -> Value {
    toml::from_str::<Table>(&format!("v = {raw}"))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| Value::String(raw.to_string()))
}

/// Typed access to one table, recording missing, malformed and unread keys.
pub struct Reader<'a> {
    path: String,
    table: Option<&'a Table>,
    used: BTreeSet<String>,
    diag: &'a mut ConfigError,
}

impl<'a> Reader<'a> {
    pub fn new(path: impl Into<String>, table: Option<&'a Table>, diag: &'a mut ConfigError) -> Self {
        Reader { path: path.into(), table, used: BTreeSet::new(), diag }
    }

    fn full(&self, key: &str) -> String {
        format!("{}.{key}", self.path)
    }

    /// Dotted path of this table, e.g. `env.base`.
    pub fn path(&self) -> &str {
        &self.path
    }

    pub fn has(&self, key: &str) -> bool {
        self.table.is_some_and(|t| t.contains_key(key))
    }

    fn take(&mut self, key: &str) -> Option<&'a Value> {
        self.used.insert(key.to_string());
        self.table.and_then(|t| t.get(key))
    }

    fn required(&mut self, key: &str) -> Option<&'a Value> {
        let v = self.take(key);
        if v.is_none() {
            let k = self.full(key);
            self.diag.missing.push(k);
        }
        v
    }

    pub fn bad(&mut self, key: &str, what: &str) {
        let k = self.full(key);
        self.diag.invalid.push(format!("{k}: {what}"));
    }

    fn as_f64(&mut self, key: &str, v: &Value) -> f64 {
        match v {
            Value::Float(x) => *x,
            Value::Integer(i) => *i as f64,
            _ => {
                self.bad(key, "expected a number");
                0.0
            }
        }
    }

    fn as_u64(&mut self, key: &str, v: &Value) -> u64 {
        match v {
            Value::Integer(i) if *i >= 0 => *i as u64,
            Value::String(s) => s.parse().unwrap_or_else(|_| {
                self.bad(key, "expected a non-negative 64-bit integer");
                0
            }),
            _ => {
                self.bad(key, "expected a non-negative integer");
                0
            }
        }
    }

    fn as_i64(&mut self, key: &str, v: &Value) -> i64 {
        match v {
            Value::Integer(i) => *i,
            _ => {
                self.bad(key, "expected an integer");
                0
            }
        }
    }

    pub fn f64(&mut self, key: &str) -> f64 {
        match self.required(key) {
            Some(v) => self.as_f64(key, v),
            None => 0.0,
        }
    }

    pub fn f64_or(&mut self, key: &str, default: f64) -> f64 {
        match self.take(key) {
            Some(v) => self.as_f64(key, v),
            None => default,
        }
    }

    pub fn u64(&mut self, key: &str) -> u64 {
        match self.required(key) {
            Some(v) => self.as_u64(key, v),
            None => 0,
        }
    }

    pub fn u64_or(&mut self, key: &str, default: u64) -> u64 {
        match self.take(key) {
            Some(v) => self.as_u64(key, v),
            None => default,
        }
    }

    pub fn usize(&mut self, key: &str) -> usize {
        self.u64(key) as usize
    }

    pub fn usize_or(&mut self, key: &str, default: usize) -> usize {
        self.u64_or(key, default as u64) as usize
    }

    pub fn i64(&mut self, key: &str) -> i64 {
        match self.required(key) {
            Some(v) => self.as_i64(key, v),
            None => 0,
        }
    }

    pub fn bool_or(&mut self, key: &str, default: bool) -> bool {
        match self.take(key) {
            Some(Value::Boolean(b)) => *b,
            Some(_) => {
                self.bad(key, "expected true or false");
                default
            }
            None => default,
        }
    }

    pub fn str(&mut self, key: &str) -> String {
        match self.required(key) {
            Some(Value::String(s)) => s.clone(),
            Some(_) => {
                self.bad(key, "expected a string");
                String::new()
            }
            None => String::new(),
        }
    }

    /// One of `choices`, defaulting to the first.
    pub fn choice(&mut self, key: &str, choices: &[&str]) -> String {
        match self.take(key) {
            None => choices[0].to_string(),
            Some(Value::String(s)) if choices.contains(&s.as_str()) => s.clone(),
            Some(_) => {
                self.bad(key, &format!("expected one of {}", choices.join(", ")));
                choices[0].to_string()
            }
        }
    }

    fn list<T>(&mut self, key: &str, v: &Value, each: impl Fn(&mut Self, &str, &Value) -> T) -> Vec<T> {
        match v {
            Value::Array(items) => items.iter().map(|x| each(self, key, x)).collect(),
            _ => {
                self.bad(key, "expected an array");
                Vec::new()
            }
        }
    }

    pub fn f64_list(&mut self, key: &str) -> Vec<f64> {
        match self.required(key) {
            Some(v) => self.list(key, v, |r, k, x| r.as_f64(k, x)),
            None => Vec::new(),
        }
    }

    pub fn f64_list_or(&mut self, key: &str, default: &[f64]) -> Vec<f64> {
        match self.take(key) {
            Some(v) => self.list(key, v, |r, k, x| r.as_f64(k, x)),
            None => default.to_vec(),
        }
    }

    pub fn usize_list(&mut self, key: &str) -> Vec<usize> {
        match self.required(key) {
            Some(v) => self.list(key, v, |r, k, x| r.as_u64(k, x) as usize),
            None => Vec::new(),
        }
    }

    pub fn usize_list_or(&mut self, key: &str, default: &[usize]) -> Vec<usize> {
        match self.take(key) {
            Some(v) => self.list(key, v, |r, k, x| r.as_u64(k, x) as usize),
            None => default.to_vec(),
        }
    }

    pub fn i64_list(&mut self, key: &str) -> Vec<i64> {
        match self.required(key) {
            Some(v) => self.list(key, v, |r, k, x| r.as_i64(k, x)),
            None => Vec::new(),
        }
    }

    pub fn i64_list_or(&mut self, key: &str, default: &[i64]) -> Vec<i64> {
        match self.take(key) {
            Some(v) => self.list(key, v, |r, k, x| r.as_i64(k, x)),
            None => default.to_vec(),
        }
    }

    /// Raw array of tables, for records such as perturbed edges.
    pub fn tables(&mut self, key: &str) -> Vec<&'a Table> {
        match self.required(key) {
            Some(Value::Array(items)) => {
                let out: Vec<&Table> = items.iter().filter_map(Value::as_table).collect();
                if out.len() != items.len() {
                    self.bad(key, "expected an array of tables");
                }
                out
            }
            Some(_) => {
                self.bad(key, "expected an array of tables");
                Vec::new()
            }
            None => Vec::new(),
        }
    }

    /// A nested table; `required` records it as missing when absent.
    pub fn sub(&mut self, key: &str, required: bool) -> Option<Reader<'_>> {
        let path = self.full(key);
        let v = if required { self.required(key) } else { self.take(key) };
        match v {
            Some(Value::Table(t)) => Some(Reader::new(path, Some(t), self.diag)),
            Some(_) => {
                self.bad(key, "expected a table");
                None
            }
            None => None,
        }
    }

    pub fn diag(&mut self) -> &mut ConfigError {
        self.diag
    }

    /// Records every key present in the table but never read.
    pub fn finish(self) {
        if let Some(t) = self.table {
            for k in t.keys() {
                if !self.used.contains(k) {
                    self.diag.unknown.push(format!("{}.{k}", self.path));
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reader_reports_every_problem() {
        let cfg = Config::parse("[sigma]\nr = 4\nbogus = 1\nalso = true\ntol = \"x\"\n", "t").unwrap();
        let mut diag = ConfigError::default();
        let mut r = Reader::new("sigma", cfg.section("sigma"), &mut diag);
        assert_eq!(r.usize("r"), 4);
        r.f64_or("tol", 1.0);
        r.f64("needed");
        r.f64("also_needed");
        r.finish();
        assert_eq!(diag.unknown, ["sigma.also", "sigma.bogus"]);
        assert_eq!(diag.missing, ["sigma.needed", "sigma.also_needed"]);
        assert_eq!(diag.invalid.len(), 1);
        let msg = diag.to_string();
        assert!(msg.contains("sigma.bogus") && msg.contains("sigma.also_needed"));
    }

    #[test]
    fn overrides_and_hash() {
        let mut cfg = Config::parse("[env]\nkind = \"constant\"\n[iip]\nn = 10\n", "t").unwrap();
        let h0 = cfg.hash();
        cfg.apply_override("iip", "replicas=7", &["iip"]).unwrap();
        cfg.apply_override("iip", "env.value=2.5", &["iip"]).unwrap();
        cfg.apply_override("iip", "observable.kind=pi", &["iip"]).unwrap();
        let iip = cfg.section("iip").unwrap();
        assert_eq!(iip["replicas"].as_integer(), Some(7));
        assert_eq!(iip["observable"]["kind"].as_str(), Some("pi"));
        assert_eq!(cfg.section("env").unwrap()["value"].as_float(), Some(2.5));
        assert_ne!(cfg.hash(), h0);
        assert_eq!(cfg.hash().len(), 64);
        assert!(cfg.apply_override("iip", "novalue", &["iip"]).is_err());
        cfg.apply_override("iip", "sigma=\"given\"", &["iip", "sigma"]).unwrap();
        assert_eq!(cfg.section("iip").unwrap()["sigma"].as_str(), Some("given"));
    }

    #[test]
    fn bundled_configs_parse() {
        for (name, _) in BUNDLED {
            let cfg = Config::load(name).unwrap();
            assert_eq!(cfg.source, format!("bundled:{name}"));
            assert!(cfg.section("env").is_some());
        }
        assert!(Config::load("no-such-config").is_err());
    }
}
