//! Reports: metadata, CSV tables and verdicts.

use crate::error::Result;
use crate::grid::fmt_f64;
use serde::Serialize;
use std::io::Write;
use std::path::{Path, PathBuf};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Pass,
    Fail,
    /// Deterministic error bounds dominate the statistical resolution.
    Inconclusive,
    /// Recorded for inspection; never fails a run.
    Flagged,
}

#[derive(Debug, Clone, Serialize)]
pub struct Verdict {
    pub check: String,
    pub value: f64,
    pub bound: f64,
    pub pass: bool,
    pub status: Status,
    /// Hard verdicts decide the exit status.
    pub hard: bool,
    /// Module invariant the check instantiates.
    pub invariant: String,
    /// The mathematical statement being checked.
    pub statement: String,
    #[serde(skip_serializing_if = "String::is_empty")]
    pub note: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct Metadata {
    pub name: String,
    pub experiment: String,
    pub config_hash: String,
    pub seed: u64,
    pub version: String,
    pub threads: usize,
    pub wall_time_s: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct TableRef {
    pub name: String,
    pub path: PathBuf,
    pub rows: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct Report {
    pub metadata: Metadata,
    pub tables: Vec<TableRef>,
    pub verdicts: Vec<Verdict>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl Report {
    /// No hard verdict failed and the run did not abort.
    pub fn passed(&self) -> bool {
        self.error.is_none() && !self.verdicts.iter().any(|v| v.hard && v.status == Status::Fail)
    }

    pub fn verdict(&self, check: &str) -> Option<&Verdict> {
        self.verdicts.iter().find(|v| v.check == check)
    }

    pub fn verdicts_with_prefix<'a>(&'a self, prefix: &'a str) -> impl Iterator<Item = &'a Verdict> + 'a {
        self.verdicts.iter().filter(move |v| v.check.starts_with(prefix))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let f = std::fs::File::create(path)?;
        serde_json::to_writer_pretty(std::io::BufWriter::new(f), self)?;
        Ok(())
    }
}

/// A CSV cell.
#[derive(Debug, Clone)]
pub enum Cell {
    Num(f64),
    Int(i64),
    Text(String),
}

impl From<f64> for Cell {
    fn from(v: f64) -> Self {
        Cell::Num(v)
    }
}
impl From<usize> for Cell {
    fn from(v: usize) -> Self {
        Cell::Int(v as i64)
    }
}
impl From<u32> for Cell {
    fn from(v: u32) -> Self {
        Cell::Int(v as i64)
    }
}
impl From<u64> for Cell {
    fn from(v: u64) -> Self {
        Cell::Int(v as i64)
    }
}
impl From<bool> for Cell {
    fn from(v: bool) -> Self {
        Cell::Text(v.to_string())
    }
}
impl From<&str> for Cell {
    fn from(v: &str) -> Self {
        Cell::Text(v.to_string())
    }
}
impl From<String> for Cell {
    fn from(v: String) -> Self {
        Cell::Text(v)
    }
}

impl std::fmt::Display for Cell {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Cell::Num(v) => write!(f, "{}", fmt_f64(*v)),
            Cell::Int(v) => write!(f, "{v}"),
            Cell::Text(s) => write!(f, "{s}"),
        }
    }
}

#[derive(Debug, Clone)]
pub struct Table {
    pub name: String,
    pub header: Vec<String>,
    pub rows: Vec<Vec<Cell>>,
}

impl Table {
    pub fn new(name: &str, header: &[&str]) -> Self {
        Self { name: name.to_string(), header: header.iter().map(|s| s.to_string()).collect(), rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<Cell>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "{}", self.header.join(","))?;
        for r in &self.rows {
            let cells: Vec<String> = r.iter().map(|c| c.to_string()).collect();
            writeln!(out, "{}", cells.join(","))?;
        }
        Ok(())
    }
}

/// Collects verdicts and writes tables into the experiment's output directory.
#[derive(Debug)]
pub struct Recorder {
    pub out_dir: PathBuf,
    pub tables: Vec<TableRef>,
    pub verdicts: Vec<Verdict>,
}

impl Recorder {
    pub fn new(out_dir: PathBuf) -> Result<Self> {
        std::fs::create_dir_all(&out_dir)?;
        Ok(Self { out_dir, tables: Vec::new(), verdicts: Vec::new() })
    }

    pub fn table(&mut self, t: &Table) -> Result<()> {
        let path = self.out_dir.join(format!("{}.csv", t.name));
        let f = std::fs::File::create(&path)?;
        t.write_csv(std::io::BufWriter::new(f))?;
        self.tables.push(TableRef { name: t.name.clone(), path: PathBuf::from(format!("{}.csv", t.name)), rows: t.rows.len() });
        Ok(())
    }

    /// Writes a CSV produced by a module writer.
    pub fn csv_with(&mut self, name: &str, rows: usize, write: impl FnOnce(&mut dyn Write) -> std::io::Result<()>) -> Result<()> {
        let path = self.out_dir.join(format!("{name}.csv"));
        let mut f = std::io::BufWriter::new(std::fs::File::create(&path)?);
        write(&mut f)?;
        f.flush()?;
        self.tables.push(TableRef { name: name.to_string(), path: PathBuf::from(format!("{name}.csv")), rows });
        Ok(())
    }

    pub fn json<T: Serialize>(&self, name: &str, value: &T) -> Result<()> {
        let f = std::fs::File::create(self.out_dir.join(format!("{name}.json")))?;
        serde_json::to_writer_pretty(std::io::BufWriter::new(f), value)?;
        Ok(())
    }

    fn push(&mut self, check: String, value: f64, bound: f64, status: Status, hard: bool, invariant: &str, statement: &str, note: String) {
        self.verdicts.push(Verdict {
            check,
            value,
            bound,
            pass: status == Status::Pass,
            status,
            hard,
            invariant: invariant.to_string(),
            statement: statement.to_string(),
            note,
        });
    }

    /// Hard verdict value ≤ bound.
    pub fn at_most(&mut self, check: impl Into<String>, value: f64, bound: f64, invariant: &str, statement: &str) {
        let status = if value <= bound { Status::Pass } else { Status::Fail };
        self.push(check.into(), value, bound, status, true, invariant, statement, String::new());
    }

    /// Hard verdict value > bound.
    pub fn above(&mut self, check: impl Into<String>, value: f64, bound: f64, invariant: &str, statement: &str) {
        let status = if value > bound { Status::Pass } else { Status::Fail };
        self.push(check.into(), value, bound, status, true, invariant, statement, String::new());
    }

    /// Hard boolean verdict.
    pub fn holds(&mut self, check: impl Into<String>, ok: bool, invariant: &str, statement: &str) {
        let status = if ok { Status::Pass } else { Status::Fail };
        self.push(check.into(), ok as u8 as f64, 1.0, status, true, invariant, statement, String::new());
    }

    /// Hard verdict lo ≤ value ≤ hi; `bound` records lo and the note records hi.
    pub fn within(&mut self, check: impl Into<String>, value: f64, lo: f64, hi: f64, invariant: &str, statement: &str) {
        let status = if value >= lo && value <= hi { Status::Pass } else { Status::Fail };
        self.push(check.into(), value, lo, status, true, invariant, statement, format!("range [{lo}, {hi}]"));
    }

    /// Soft boolean verdict, inconclusive when it does not hold.
    pub fn diagnostic(&mut self, check: impl Into<String>, ok: bool, invariant: &str, statement: &str, note: &str) {
        let status = if ok { Status::Pass } else { Status::Inconclusive };
        self.push(check.into(), ok as u8 as f64, 1.0, status, false, invariant, statement, note.to_string());
    }

    /// Soft verdict: flagged when value > bound, never failing.
    pub fn flag_above(&mut self, check: impl Into<String>, value: f64, bound: f64, invariant: &str, statement: &str, note: &str) {
        let status = if value <= bound { Status::Pass } else { Status::Flagged };
        self.push(check.into(), value, bound, status, false, invariant, statement, note.to_string());
    }

    /// Statistical verdict |value| ≤ bound, inconclusive when the deterministic
    /// error exceeds the statistical resolution.
    pub fn statistical(&mut self, check: impl Into<String>, value: f64, bound: f64, deterministic: f64, stderr: f64, invariant: &str, statement: &str) {
        let (status, note) = if deterministic > stderr {
            (Status::Inconclusive, format!("deterministic error / stderr = {:.3e}", deterministic / stderr.max(f64::MIN_POSITIVE)))
        } else if value.abs() <= bound {
            (Status::Pass, String::new())
        } else {
            (Status::Fail, String::new())
        };
        self.push(check.into(), value, bound, status, true, invariant, statement, note);
    }
}
