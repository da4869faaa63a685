//! Table / CSV / JSON rendering of command reports.

use std::fs;
use std::io::Write;
use std::path::Path;

use aggcausal::Distribution;
use clap::ValueEnum;
use serde_json::Value;

use crate::CliResult;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Table,
    Json,
    Csv,
}

/// What a command prints: a titled table plus free-form notes, and the JSON
/// payload used for `--format json`.
#[derive(Debug, Clone)]
pub struct Report {
    pub title: String,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<String>>,
    pub notes: Vec<String>,
    pub json: Value,
}

impl Report {
    pub fn new(title: impl Into<String>, columns: &[&str]) -> Self {
        Self {
            title: title.into(),
            columns: columns.iter().map(|c| c.to_string()).collect(),
            rows: Vec::new(),
            notes: Vec::new(),
            json: Value::Null,
        }
    }

    pub fn row(&mut self, cells: Vec<String>) {
        self.rows.push(cells);
    }

    pub fn note(&mut self, line: impl Into<String>) {
        self.notes.push(line.into());
    }

    pub fn render(&self, format: Format) -> CliResult<String> {
        match format {
            Format::Json => Ok(serde_json::to_string_pretty(&self.json)? + "\n"),
            Format::Csv => {
                let mut w = csv::Writer::from_writer(Vec::new());
                w.write_record(&self.columns)?;
                for r in &self.rows {
                    w.write_record(r)?;
                }
                Ok(String::from_utf8(w.into_inner()?)?)
            }
            Format::Table => Ok(self.table()),
        }
    }

    fn table(&self) -> String {
        let mut widths: Vec<usize> = self.columns.iter().map(|c| c.chars().count()).collect();
        for r in &self.rows {
            for (w, c) in widths.iter_mut().zip(r) {
                *w = (*w).max(c.chars().count());
            }
        }
        let line = |cells: &[String]| {
            let mut s = String::from(" ");
            for (c, w) in cells.iter().zip(&widths) {
                s.push(' ');
                s.push_str(c);
                s.push_str(&" ".repeat(w - c.chars().count() + 1));
            }
            s.trim_end().to_string() + "\n"
        };
        let mut out = format!("{}\n", self.title);
        if !self.columns.is_empty() {
            out += &line(&self.columns);
            let rule: Vec<String> = widths.iter().map(|w| "-".repeat(*w)).collect();
            out += &line(&rule);
            for r in &self.rows {
                out += &line(r);
            }
        }
        for n in &self.notes {
            out += n;
            out.push('\n');
        }
        out
    }
}

/// Print to stdout or write to `out`.
pub fn emit(text: &str, out: Option<&Path>) -> CliResult<()> {
    match out {
        Some(p) => write_file(p, text),
        None => {
            let mut stdout = std::io::stdout().lock();
            stdout.write_all(text.as_bytes())?;
            Ok(())
        }
    }
}

pub fn write_file(path: &Path, text: &str) -> CliResult<()> {
    fs::write(path, text).map_err(|e| format!("cannot write `{}`: {e}", path.display()).into())
}

/// One-line summary of a one-dimensional macro distribution.
pub fn describe(d: &Distribution) -> String {
    match d {
        Distribution::Gaussian(g) if g.dim() == 1 => {
            format!("N({:.6}, {:.6})", g.mean[0], g.cov[(0, 0)])
        }
        Distribution::Gaussian(g) => {
            let m: Vec<String> = g.mean.iter().map(|v| format!("{v:.4}")).collect();
            format!("N([{}], ..)", m.join(", "))
        }
        Distribution::Categorical(c) => {
            let p: Vec<String> = c.probs.iter().map(|v| format!("{v:.6}")).collect();
            format!("[{}]", p.join(", "))
        }
    }
}

pub fn sci(v: f64) -> String {
    format!("{v:.3e}")
}
