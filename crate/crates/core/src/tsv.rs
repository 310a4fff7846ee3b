//! Minimal tab-separated table reader/writer shared by the expression,
//! label and proportion formats.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

/// A parsed table: header cells plus data rows, each tagged with its
/// 1-based line number in the source.
pub(crate) struct Table {
    pub source: String,
    pub header: Vec<String>,
    pub rows: Vec<(usize, Vec<String>)>,
}

impl Table {
    pub fn parse(source: &str, text: &str) -> Result<Self> {
        let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l));
        let header = loop {
            match lines.next() {
                Some((_, l)) if l.trim().is_empty() => continue,
                Some((_, l)) => break split(l),
                None => {
                    return Err(Error::Parse {
                        path: source.to_string(),
                        line: 1,
                        message: "empty file".into(),
                    })
                }
            }
        };
        let rows = lines
            .filter(|(_, l)| !l.trim().is_empty())
            .map(|(n, l)| (n, split(l)))
            .collect();
        Ok(Table {
            source: source.to_string(),
            header,
            rows,
        })
    }

    pub fn error(&self, line: usize, message: impl Into<String>) -> Error {
        Error::Parse {
            path: self.source.clone(),
            line,
            message: message.into(),
        }
    }

    /// Checks the header starts with `first` and every row has the header's width.
    pub fn expect_shape(&self, first: &str) -> Result<()> {
        if self.header.first().map(String::as_str) != Some(first) {
            return Err(self.error(1, format!("first header cell must be `{first}`")));
        }
        for (line, cells) in &self.rows {
            if cells.len() != self.header.len() {
                return Err(self.error(
                    *line,
                    format!("expected {} fields, found {}", self.header.len(), cells.len()),
                ));
            }
        }
        Ok(())
    }

    pub fn parse_number(&self, line: usize, cell: &str) -> Result<f64> {
        cell.trim()
            .parse::<f64>()
            .ok()
            .filter(|v| v.is_finite())
            .ok_or_else(|| self.error(line, format!("non-numeric value `{cell}`")))
    }
}

fn split(line: &str) -> Vec<String> {
    line.trim_end_matches('\r')
        .split('\t')
        .map(str::to_string)
        .collect()
}

/// Renders a header plus numeric rows. `f64` Display is the shortest
/// round-trip representation, so output is byte-stable for equal values.
pub(crate) fn render<'a>(
    header: impl IntoIterator<Item = &'a str>,
    rows: impl IntoIterator<Item = (&'a str, Vec<f64>)>,
) -> String {
    let mut out = header.into_iter().collect::<Vec<_>>().join("\t");
    out.push('\n');
    for (id, values) in rows {
        out.push_str(id);
        for v in values {
            write!(out, "\t{v}").unwrap();
        }
        out.push('\n');
    }
    out
}

pub(crate) fn write(path: &Path, contents: &str) -> Result<()> {
    fs::write(path, contents).map_err(|e| Error::io(path, e))
}
