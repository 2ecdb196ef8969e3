//! Tabular reports: RFC 4180 CSV with LF endings, or space-padded text.

use std::io::Write;
use std::path::Path;

use crate::config::Format;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Report {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Report {
    pub fn new<I, S>(columns: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        Self {
            columns: columns.into_iter().map(Into::into).collect(),
            rows: Vec::new(),
        }
    }

    /// Panics if the row width differs from the header.
    pub fn push<I, S>(&mut self, row: I)
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let row: Vec<String> = row.into_iter().map(Into::into).collect();
        assert_eq!(row.len(), self.columns.len(), "row width");
        self.rows.push(row);
    }

    pub fn column(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c == name)
    }

    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::WriterBuilder::new()
            .terminator(csv::Terminator::Any(b'\n'))
            .from_writer(Vec::new());
        w.write_record(&self.columns)?;
        for r in &self.rows {
            w.write_record(r)?;
        }
        let bytes = w.into_inner().map_err(|e| Error::Parse(e.to_string()))?;
        Ok(String::from_utf8(bytes).expect("fields are strings"))
    }

    /// Left-aligned columns separated by two spaces, no trailing blanks.
    pub fn to_table(&self) -> String {
        let mut widths: Vec<usize> = self.columns.iter().map(|c| c.chars().count()).collect();
        for r in &self.rows {
            for (w, f) in widths.iter_mut().zip(r) {
                *w = (*w).max(f.chars().count());
            }
        }
        let mut out = String::new();
        for r in std::iter::once(&self.columns).chain(&self.rows) {
            let mut line = String::new();
            for (i, (f, w)) in r.iter().zip(&widths).enumerate() {
                if i > 0 {
                    line.push_str("  ");
                }
                line.push_str(f);
                line.extend(std::iter::repeat_n(' ', w - f.chars().count()));
            }
            out.push_str(line.trim_end());
            out.push('\n');
        }
        out
    }

    pub fn render(&self, format: Format) -> Result<String> {
        match format {
            Format::Csv => self.to_csv(),
            Format::Table => Ok(self.to_table()),
        }
    }

    /// Writes to `out`, or to stdout when `out` is `None`.
    pub fn emit(&self, format: Format, out: Option<&Path>) -> Result<()> {
        if self.rows.is_empty() {
            return Err(Error::Parse("report has no rows".into()));
        }
        let text = self.render(format)?;
        match out {
            Some(p) => std::fs::write(p, text).map_err(|e| Error::io(p, e)),
            None => std::io::stdout()
                .lock()
                .write_all(text.as_bytes())
                .map_err(|e| Error::io("<stdout>", e)),
        }
    }
}

/// Shortest round-trip formatting, so equal values print equal text.
pub fn num(x: f64) -> String {
    format!("{x}")
}

pub fn opt_num(x: Option<f64>) -> String {
    x.map(num).unwrap_or_default()
}
