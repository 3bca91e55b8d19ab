//! Report emission: CSV tables and JSON documents.

use std::fmt;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::Serialize;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, clap::ValueEnum)]
pub enum Format {
    #[default]
    Csv,
    Json,
}

#[derive(Debug)]
pub struct IoError {
    pub path: PathBuf,
    pub source: std::io::Error,
}

impl fmt::Display for IoError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.path.display(), self.source)
    }
}

impl std::error::Error for IoError {}

/// 17 significant digits.
pub fn num(x: f64) -> String {
    // adding zero maps -0 to +0
    format!("{:.16e}", x + 0.0)
}

/// CSV table with a fixed header; every row must match the header width.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    header: Vec<String>,
    rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new<S: Into<String>>(header: impl IntoIterator<Item = S>) -> Self {
        Self { header: header.into_iter().map(Into::into).collect(), rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<String>) {
        assert_eq!(row.len(), self.header.len(), "row width");
        self.rows.push(row);
    }

    pub fn header(&self) -> &[String] {
        &self.header
    }

    pub fn rows(&self) -> &[Vec<String>] {
        &self.rows
    }

    pub fn to_csv(&self) -> String {
        let mut out = self.header.join(",");
        out.push('\n');
        for row in &self.rows {
            out.push_str(&row.join(","));
            out.push('\n');
        }
        out
    }
}

pub fn write_text(path: &Path, text: &str) -> Result<(), IoError> {
    let wrap = |source| IoError { path: path.to_path_buf(), source };
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(wrap)?;
    }
    let mut file = fs::File::create(path).map_err(wrap)?;
    file.write_all(text.as_bytes()).map_err(wrap)
}

pub fn write_csv(path: &Path, table: &Table) -> Result<(), IoError> {
    write_text(path, &table.to_csv())
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), IoError> {
    let mut text = serde_json::to_string_pretty(value).expect("report values serialize");
    text.push('\n');
    write_text(path, &text)
}

/// Parse a CSV produced by [`Table::to_csv`].
pub fn parse_csv(text: &str) -> Table {
    let mut lines = text.lines();
    let mut table = Table::new(lines.next().unwrap_or("").split(','));
    for line in lines.filter(|l| !l.is_empty()) {
        table.push(line.split(',').map(str::to_string).collect());
    }
    table
}
