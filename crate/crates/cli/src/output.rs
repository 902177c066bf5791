//! CSV tables with round-trip float formatting, and the metadata sidecar.

use std::fs;
use std::path::{Path, PathBuf};

use lqrpg_core::sgd::{RunRecord, RunSummary};
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::config::ExperimentConfig;
use crate::HarnessError;

#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    Float(f64),
    Int(i64),
    Bool(bool),
    Text(String),
    Empty,
}

impl Cell {
    fn render(&self) -> String {
        match self {
            Cell::Float(x) => format_float(*x),
            Cell::Int(i) => i.to_string(),
            Cell::Bool(b) => b.to_string(),
            Cell::Text(s) => s.clone(),
            Cell::Empty => String::new(),
        }
    }
}

impl From<f64> for Cell {
    fn from(x: f64) -> Self {
        Cell::Float(x)
    }
}

impl From<usize> for Cell {
    fn from(x: usize) -> Self {
        Cell::Int(x as i64)
    }
}

impl From<u64> for Cell {
    fn from(x: u64) -> Self {
        Cell::Int(x as i64)
    }
}

impl From<bool> for Cell {
    fn from(x: bool) -> Self {
        Cell::Bool(x)
    }
}

impl From<&str> for Cell {
    fn from(x: &str) -> Self {
        Cell::Text(x.to_string())
    }
}

impl<T: Into<Cell>> From<Option<T>> for Cell {
    fn from(x: Option<T>) -> Self {
        x.map_or(Cell::Empty, Into::into)
    }
}

/// A record type with a fixed column layout.
pub trait Row {
    fn header() -> Vec<&'static str>;
    fn cells(&self) -> Vec<Cell>;
}

impl Row for RunRecord {
    fn header() -> Vec<&'static str> {
        vec![
            "run",
            "iteration",
            "cost",
            "gap",
            "grad_est_norm",
            "in_level_set",
            "step_radius_ok",
            "destabilized",
            "samples_consumed",
        ]
    }

    fn cells(&self) -> Vec<Cell> {
        vec![
            self.run.into(),
            self.iteration.into(),
            self.cost.into(),
            self.gap.into(),
            self.grad_est_norm.into(),
            self.in_level_set.into(),
            self.step_radius_ok.into(),
            self.destabilized.into(),
            self.samples_consumed.into(),
        ]
    }
}

impl Row for RunSummary {
    fn header() -> Vec<&'static str> {
        vec![
            "run",
            "initial_cost",
            "final_cost",
            "final_gap",
            "min_cost",
            "diverged_at",
            "iterations",
            "skipped_updates",
            "samples_consumed",
        ]
    }

    fn cells(&self) -> Vec<Cell> {
        vec![
            self.run.into(),
            self.initial_cost.into(),
            self.final_cost.into(),
            self.final_gap.into(),
            self.min_cost.into(),
            self.diverged_at.into(),
            self.iterations.into(),
            self.skipped_updates.into(),
            self.samples_consumed.into(),
        ]
    }
}

/// An in-memory CSV file.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub name: String,
    pub header: Vec<String>,
    pub rows: Vec<Vec<Cell>>,
}

impl Table {
    pub fn new(name: impl Into<String>, header: &[&str]) -> Self {
        Self {
            name: name.into(),
            header: header.iter().map(|s| s.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn from_rows<R: Row>(name: impl Into<String>, records: &[R]) -> Self {
        Self {
            name: name.into(),
            header: R::header().into_iter().map(String::from).collect(),
            rows: records.iter().map(Row::cells).collect(),
        }
    }

    pub fn push(&mut self, row: Vec<Cell>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    pub fn file_name(&self) -> String {
        format!("{}.csv", self.name)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = csv::WriterBuilder::new()
            .terminator(csv::Terminator::Any(b'\n'))
            .from_writer(Vec::new());
        w.write_record(&self.header).expect("writing to memory");
        for row in &self.rows {
            w.write_record(row.iter().map(Cell::render)).expect("writing to memory");
        }
        w.into_inner().expect("writing to memory")
    }

    /// Column index by name.
    pub fn column(&self, name: &str) -> Option<usize> {
        self.header.iter().position(|h| h == name)
    }

    /// Float values of a column (non-float cells become NaN).
    pub fn floats(&self, name: &str) -> Vec<f64> {
        let Some(c) = self.column(name) else {
            return Vec::new();
        };
        self.rows
            .iter()
            .map(|r| match r[c] {
                Cell::Float(x) => x,
                Cell::Int(i) => i as f64,
                _ => f64::NAN,
            })
            .collect()
    }
}

/// `%.17g`: 17 significant digits, enough to round-trip every `f64`.
pub fn format_float(x: f64) -> String {
    if x.is_nan() {
        return "NaN".into();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    if x == 0.0 {
        return if x.is_sign_negative() { "-0".into() } else { "0".into() };
    }
    let sci = format!("{x:.16e}");
    let (mantissa, exp) = sci.split_once('e').expect("scientific format");
    let exp: i32 = exp.parse().expect("exponent");
    if (-4..17).contains(&exp) {
        let decimals = (16 - exp) as usize;
        trim_zeros(format!("{x:.decimals$}"))
    } else {
        let m = trim_zeros(mantissa.to_string());
        let sign = if exp < 0 { '-' } else { '+' };
        format!("{m}e{sign}{:02}", exp.abs())
    }
}

fn trim_zeros(s: String) -> String {
    if !s.contains('.') {
        return s;
    }
    s.trim_end_matches('0').trim_end_matches('.').to_string()
}

pub fn write_csv<R: Row>(records: &[R], path: &Path) -> Result<(), HarnessError> {
    write_bytes(path, &Table::from_rows("records", records).to_bytes())
}

pub(crate) fn write_bytes(path: &Path, bytes: &[u8]) -> Result<(), HarnessError> {
    fs::write(path, bytes).map_err(|source| HarnessError::Io {
        path: path.to_path_buf(),
        source,
    })
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Hash of the resolved configuration (output location excluded), computed
/// like a git blob id but with SHA-256.
pub fn input_hash(config: &ExperimentConfig) -> String {
    let mut c = config.clone();
    c.output_path.clear();
    let body = serde_json::to_vec(&c).expect("config serializes");
    let mut h = Sha256::new();
    h.update(format!("blob {}\0", body.len()).as_bytes());
    h.update(&body);
    hex::encode(h.finalize())
}

#[derive(Debug, Clone, Serialize)]
pub struct OutputEntry {
    pub file: String,
    pub rows: usize,
    pub sha256: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct Metadata<'a> {
    pub tool: &'static str,
    pub version: &'static str,
    pub experiment: &'static str,
    pub master_seed: u64,
    pub input_hash: String,
    pub config: &'a ExperimentConfig,
    pub outputs: Vec<OutputEntry>,
    /// Seconds since the Unix epoch; not covered by `input_hash`.
    pub created_unix: u64,
}

/// Writes every table plus `metadata.json` into `dir`; on failure, every file
/// written so far is removed.
pub fn write_outputs(dir: &Path, config: &ExperimentConfig, tables: &[Table]) -> Result<Vec<PathBuf>, HarnessError> {
    let mut written = Vec::new();
    let result = (|| {
        fs::create_dir_all(dir).map_err(|source| HarnessError::Io {
            path: dir.to_path_buf(),
            source,
        })?;
        let mut outputs = Vec::new();
        for t in tables {
            let path = dir.join(t.file_name());
            let bytes = t.to_bytes();
            written.push(path.clone());
            write_bytes(&path, &bytes)?;
            outputs.push(OutputEntry {
                file: t.file_name(),
                rows: t.rows.len(),
                sha256: sha256_hex(&bytes),
            });
        }
        let meta = Metadata {
            tool: "lqrpg",
            version: env!("CARGO_PKG_VERSION"),
            experiment: config.experiment.as_str(),
            master_seed: config.master_seed,
            input_hash: input_hash(config),
            config,
            outputs,
            created_unix: std::time::SystemTime::now()
                .duration_since(std::time::UNIX_EPOCH)
                .map_or(0, |d| d.as_secs()),
        };
        let path = dir.join("metadata.json");
        let mut bytes = serde_json::to_vec_pretty(&meta).expect("metadata serializes");
        bytes.push(b'\n');
        written.push(path.clone());
        write_bytes(&path, &bytes)
    })();
    match result {
        Ok(()) => Ok(written),
        Err(e) => {
            for p in &written {
                let _ = fs::remove_file(p);
            }
            Err(e)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seventeen_digits() {
        assert_eq!(format_float(1.0 / 3.0), "0.33333333333333331");
        assert_eq!(format_float(0.1), "0.10000000000000001");
        assert_eq!(format_float(1.0), "1");
        assert_eq!(format_float(-2.5), "-2.5");
        assert_eq!(format_float(1e300), "1.0000000000000001e+300");
        assert_eq!(format_float(1.5e-7), "1.4999999999999999e-07");
        assert_eq!(format_float(123456.0), "123456");
    }

    #[test]
    fn round_trips() {
        for &x in &[1.0 / 3.0, std::f64::consts::PI, 1e-300, 6.02e23, -7.25e-5, f64::MAX, f64::MIN_POSITIVE] {
            assert_eq!(format_float(x).parse::<f64>().unwrap().to_bits(), x.to_bits());
        }
    }

    #[test]
    fn quoting_and_line_endings() {
        let mut t = Table::new("t", &["a", "b"]);
        t.push(vec![Cell::Text("x,y".into()), Cell::Empty]);
        assert_eq!(String::from_utf8(t.to_bytes()).unwrap(), "a,b\n\"x,y\",\n");
    }
}
