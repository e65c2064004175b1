//! Deterministic CSV/JSON artifacts, content hashes and the run manifest.
//!
//! Floats are written with 17 significant digits (`{:.16e}`), which re-parses
//! to the same bit pattern. JSON objects are emitted with sorted keys.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::ExperimentConfig;
use crate::error::{Error, Result};

pub const MANIFEST_NAME: &str = "manifest.json";

/// Decimal representation with 17 significant digits.
pub fn format_f64(x: f64) -> String {
    if x.is_nan() {
        "NaN".into()
    } else if x.is_infinite() {
        if x > 0.0 { "inf".into() } else { "-inf".into() }
    } else {
        format!("{x:.16e}")
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    Int(i64),
    Float(f64),
    Text(String),
}

impl Cell {
    fn render(&self) -> String {
        match self {
            Cell::Int(i) => i.to_string(),
            Cell::Float(x) => format_f64(*x),
            Cell::Text(s) if s.contains([',', '"', '\n']) => format!("\"{}\"", s.replace('"', "\"\"")),
            Cell::Text(s) => s.clone(),
        }
    }
}

impl From<f64> for Cell {
    fn from(x: f64) -> Self {
        Cell::Float(x)
    }
}

impl From<i64> for Cell {
    fn from(x: i64) -> Self {
        Cell::Int(x)
    }
}

impl From<usize> for Cell {
    fn from(x: usize) -> Self {
        Cell::Int(x as i64)
    }
}

impl From<u64> for Cell {
    fn from(x: u64) -> Self {
        Cell::Text(x.to_string())
    }
}

impl From<bool> for Cell {
    fn from(x: bool) -> Self {
        Cell::Text(x.to_string())
    }
}

impl From<&str> for Cell {
    fn from(x: &str) -> Self {
        Cell::Text(x.to_string())
    }
}

impl From<String> for Cell {
    fn from(x: String) -> Self {
        Cell::Text(x)
    }
}

/// Table with a fixed column order.
#[derive(Debug, Clone, PartialEq)]
pub struct CsvTable {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<Cell>>,
}

impl CsvTable {
    pub fn new(columns: &[&str]) -> Self {
        Self {
            columns: columns.iter().map(|c| c.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<Cell>) -> Result<()> {
        if row.len() != self.columns.len() {
            return Err(Error::GridMismatch(format!(
                "row has {} cells, table has {} columns",
                row.len(),
                self.columns.len()
            )));
        }
        self.rows.push(row);
        Ok(())
    }

    pub fn render(&self) -> String {
        let mut s = self.columns.join(",");
        s.push('\n');
        for r in &self.rows {
            let cells: Vec<String> = r.iter().map(Cell::render).collect();
            s.push_str(&cells.join(","));
            s.push('\n');
        }
        s
    }
}

/// JSON with object keys sorted at every level.
pub fn to_sorted_json<T: Serialize>(value: &T) -> Result<String> {
    let v = serde_json::to_value(value)?;
    let mut s = serde_json::to_string_pretty(&sort_keys(v))?;
    s.push('\n');
    Ok(s)
}

fn sort_keys(v: serde_json::Value) -> serde_json::Value {
    use serde_json::Value;
    match v {
        Value::Object(m) => {
            let sorted: BTreeMap<String, Value> = m.into_iter().map(|(k, v)| (k, sort_keys(v))).collect();
            Value::Object(sorted.into_iter().collect())
        }
        Value::Array(a) => Value::Array(a.into_iter().map(sort_keys).collect()),
        other => other,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Content {
    Csv(CsvTable),
    Json(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Artifact {
    pub name: String,
    pub content: Content,
}

impl Artifact {
    pub fn csv(name: impl Into<String>, table: CsvTable) -> Self {
        Self {
            name: name.into(),
            content: Content::Csv(table),
        }
    }

    pub fn json<T: Serialize>(name: impl Into<String>, value: &T) -> Result<Self> {
        Ok(Self {
            name: name.into(),
            content: Content::Json(to_sorted_json(value)?),
        })
    }

    pub fn bytes(&self) -> Vec<u8> {
        match &self.content {
            Content::Csv(t) => t.render().into_bytes(),
            Content::Json(s) => s.clone().into_bytes(),
        }
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Write through a temporary sibling and rename into place.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let name = path
        .file_name()
        .ok_or_else(|| Error::InvalidArgument(format!("{} has no file name", path.display())))?;
    let tmp = path.with_file_name(format!(".{}.tmp", name.to_string_lossy()));
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path)?;
    Ok(())
}

/// Write every artifact into `dir` and return `name -> sha256`.
pub fn write_outputs(artifacts: &[Artifact], dir: &Path) -> Result<BTreeMap<String, String>> {
    fs::create_dir_all(dir)?;
    let mut hashes = BTreeMap::new();
    for a in artifacts {
        if a.name == MANIFEST_NAME || a.name.contains(['/', '\\']) {
            return Err(Error::InvalidArgument(format!("invalid artifact name `{}`", a.name)));
        }
        let bytes = a.bytes();
        write_atomic(&dir.join(&a.name), &bytes)?;
        if hashes.insert(a.name.clone(), sha256_hex(&bytes)).is_some() {
            return Err(Error::InvalidArgument(format!("duplicate artifact `{}`", a.name)));
        }
    }
    Ok(hashes)
}

/// One acceptance flag.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub value: f64,
    pub threshold: f64,
    pub pass: bool,
    pub detail: String,
}

impl Check {
    /// Passes when `value <= threshold`.
    pub fn at_most(name: impl Into<String>, value: f64, threshold: f64) -> Self {
        Self {
            name: name.into(),
            value,
            threshold,
            pass: value <= threshold,
            detail: String::new(),
        }
    }

    /// Passes when `value > threshold`.
    pub fn above(name: impl Into<String>, value: f64, threshold: f64) -> Self {
        Self {
            name: name.into(),
            value,
            threshold,
            pass: value > threshold,
            detail: String::new(),
        }
    }

    pub fn flag(name: impl Into<String>, pass: bool, detail: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            value: if pass { 1.0 } else { 0.0 },
            threshold: 1.0,
            pass,
            detail: detail.into(),
        }
    }

    pub fn with_detail(mut self, detail: impl Into<String>) -> Self {
        self.detail = detail.into();
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub config: ExperimentConfig,
    /// Value of the seed override variable, when it was set.
    pub seed_override: Option<String>,
    /// Per-trajectory seeds, keyed by ensemble label.
    pub seeds: BTreeMap<String, Vec<u64>>,
    /// `file name -> sha256` of every artifact.
    pub files: BTreeMap<String, String>,
    pub event_count: u64,
    /// Wall-clock seconds; the only field that varies between identical runs.
    pub wall_clock_s: f64,
    pub metrics: BTreeMap<String, f64>,
    pub checks: Vec<Check>,
    pub pass: bool,
}

impl RunManifest {
    pub fn write(&self, dir: &Path) -> Result<String> {
        let text = to_sorted_json(self)?;
        write_atomic(&dir.join(MANIFEST_NAME), text.as_bytes())?;
        Ok(text)
    }

    pub fn read(dir: &Path) -> Result<Self> {
        Ok(serde_json::from_str(&fs::read_to_string(dir.join(MANIFEST_NAME))?)?)
    }

    /// Names of files whose current contents do not match the recorded hash.
    pub fn verify(&self, dir: &Path) -> Result<Vec<String>> {
        let mut bad = Vec::new();
        for (name, hash) in &self.files {
            if sha256_hex(&fs::read(dir.join(name))?) != *hash {
                bad.push(name.clone());
            }
        }
        Ok(bad)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seventeen_digits_round_trip() {
        for x in [0.1, 1.0 / 3.0, -2.5e-300, 6.02214076e23, f64::MIN_POSITIVE, 5e-324, f64::MAX] {
            let s = format_f64(x);
            assert_eq!(s.parse::<f64>().unwrap().to_bits(), x.to_bits(), "{s}");
        }
    }

    #[test]
    fn empty_table_is_header_only() {
        let t = CsvTable::new(&["a", "b"]);
        assert_eq!(t.render(), "a,b\n");
    }

    #[test]
    fn rows_must_match_columns() {
        let mut t = CsvTable::new(&["a", "b"]);
        assert!(t.push(vec![1i64.into()]).is_err());
        t.push(vec![1i64.into(), "x,y".into()]).unwrap();
        assert_eq!(t.render(), "a,b\n1,\"x,y\"\n");
    }

    #[test]
    fn json_keys_sorted() {
        let mut m = serde_json::Map::new();
        m.insert("zeta".into(), 1.into());
        m.insert("alpha".into(), serde_json::json!({"y": 1, "b": 2}));
        let s = to_sorted_json(&serde_json::Value::Object(m)).unwrap();
        assert!(s.find("alpha").unwrap() < s.find("zeta").unwrap());
        assert!(s.find("\"b\"").unwrap() < s.find("\"y\"").unwrap());
    }
}
