//! Small CSV tables (track, speed and pairing files): fixed header, `#`
//! comment lines, numeric fields with line/column error positions.

use std::path::Path;

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CsvError {
    #[error("cannot read {path}: {message}")]
    Io { path: String, message: String },
    #[error("line {line}: expected header `{expected}`, found `{found}`")]
    Header {
        line: u64,
        expected: String,
        found: String,
    },
    #[error("line {line}, column {column}: {reason} (`{value}`)")]
    Field {
        line: u64,
        column: usize,
        value: String,
        reason: &'static str,
    },
    #[error("line {line}: {message}")]
    Syntax { line: u64, message: String },
}

#[derive(Debug, Clone)]
pub struct Row {
    /// 1-based line number in the source text.
    pub line: u64,
    pub fields: Vec<String>,
}

impl Row {
    fn field(&self, i: usize) -> &str {
        self.fields.get(i).map(String::as_str).unwrap_or("")
    }

    fn bad(&self, i: usize, reason: &'static str) -> CsvError {
        CsvError::Field {
            line: self.line,
            column: i + 1,
            value: self.field(i).to_string(),
            reason,
        }
    }

    pub fn f64(&self, i: usize) -> Result<f64, CsvError> {
        match self.field(i).parse::<f64>() {
            Ok(v) if v.is_finite() => Ok(v),
            _ => Err(self.bad(i, "expected a finite decimal number")),
        }
    }

    pub fn usize(&self, i: usize) -> Result<usize, CsvError> {
        self.field(i)
            .parse::<usize>()
            .map_err(|_| self.bad(i, "expected a non-negative integer"))
    }
}

pub fn read_text(path: &Path) -> Result<String, CsvError> {
    std::fs::read_to_string(path).map_err(|e| CsvError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    })
}

/// Parses `text`, requiring `header` as the first non-comment record.
/// An empty document (or header only) yields no rows.
pub fn parse_rows(text: &str, header: &[&str]) -> Result<Vec<Row>, CsvError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .flexible(true)
        .from_reader(text.as_bytes());

    let mut rows = Vec::new();
    let mut saw_header = false;
    for rec in reader.records() {
        let rec = rec.map_err(|e| CsvError::Syntax {
            line: e.position().map(|p| p.line()).unwrap_or(0),
            message: e.to_string(),
        })?;
        let line = rec.position().map(|p| p.line()).unwrap_or(0);
        if rec.iter().all(str::is_empty) {
            continue;
        }
        if !saw_header {
            let found: Vec<&str> = rec.iter().collect();
            if found != header {
                return Err(CsvError::Header {
                    line,
                    expected: header.join(","),
                    found: found.join(","),
                });
            }
            saw_header = true;
            continue;
        }
        if rec.len() != header.len() {
            return Err(CsvError::Syntax {
                line,
                message: format!("expected {} fields, found {}", header.len(), rec.len()),
            });
        }
        rows.push(Row {
            line,
            fields: rec.iter().map(str::to_string).collect(),
        });
    }
    Ok(rows)
}
